//! Experiment orchestration: profile → mode → evolution → fits, plus the
//! γ-sweep and the property check battery.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, MIN_NODES};
use crate::energetics::hardy::{hardy_check_trace, hardy_suite, FamilySummary};
use crate::energetics::{
    duhamel_remainder, escape_time, growth_fit, instant_energy, predicted_escape, weighted_norm_x,
    weighted_norm_y, zeroth_energy, DuhamelPoint, EnergyReport, GrowthFit,
};
use crate::error::{Error, Result};
use crate::evolution::{
    cfl_dt, energy_active, smallness_monitor, step, Dynamics, PerturbationState,
};
use crate::polytrope::{
    equilibrium_energy, origin_series, solve_lane_emden_on, vacuum_exponent, LaneEmdenProfile,
    MeshSpec,
};
use crate::spectral::{
    assemble_pencil, largest_eigenpair, mode_regularity_report, rayleigh_quotient, GrowingMode,
    OperatorPencil,
};

/// Profile, pencil and growing mode for one `γ`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub profile: LaneEmdenProfile,
    pub pencil: OperatorPencil,
    pub mode: GrowingMode,
}

impl Pipeline {
    pub fn new(cfg: &ExperimentConfig, gamma: f64) -> Result<Self> {
        Self::with_mesh(cfg, gamma, cfg.mesh)
    }

    pub fn with_mesh(cfg: &ExperimentConfig, gamma: f64, mesh: MeshSpec) -> Result<Self> {
        let profile = solve_lane_emden_on(&cfg.polytrope.build(gamma)?, mesh)?;
        let pencil = assemble_pencil(&profile);
        let mode = largest_eigenpair(&profile, &pencil)?;
        Ok(Self {
            profile,
            pencil,
            mode,
        })
    }

    /// `μ₀` clearly above the mesh-level marginal band.
    pub fn is_unstable(&self) -> bool {
        self.mode.mu0 > self.pencil.marginal_tolerance()
    }

    /// Time step fixed from the equilibrium signal speeds.
    pub fn equilibrium_dt(&self, dt_cfl: f64) -> f64 {
        cfl_dt(
            &PerturbationState::equilibrium(&self.pencil),
            &self.pencil,
            dt_cfl,
        )
    }

    /// `δ(φ₀, √μ₀ φ₀)`.
    pub fn mode_data(&self, delta: f64) -> PerturbationState {
        let rate = self.mode.rate;
        PerturbationState {
            t: 0.0,
            zeta: self.mode.phi0.iter().map(|p| delta * p).collect(),
            zeta_t: self.mode.phi0.iter().map(|p| delta * rate * p).collect(),
        }
    }
}

/// Smooth even data: cosine series in `r/R` with seeded coefficients
/// decaying like `1/(1+k)`, scaled so `sup |ζ| ≤ amplitude`.
pub fn random_smooth_state(
    pencil: &OperatorPencil,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
) -> PerturbationState {
    let radius = pencil.grid[pencil.grid.len() - 1];
    let mut series = || -> Vec<f64> {
        let c: Vec<f64> = (0..6)
            .map(|k| rng.gen_range(-1.0..1.0) / (1.0 + k as f64))
            .collect();
        let norm: f64 = c.iter().map(|x| x.abs()).sum();
        let active: Vec<f64> = pencil.grid[1..pencil.grid.len() - 1]
            .iter()
            .map(|r| {
                c.iter()
                    .enumerate()
                    .map(|(k, ck)| ck * (k as f64 * std::f64::consts::PI * r / radius).cos())
                    .sum::<f64>()
                    * amplitude
                    / norm
            })
            .collect();
        active
    };
    let z = series();
    let v = series();
    PerturbationState::from_active(pencil, 0.0, &z, &v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Escaped,
    Collapsed,
    SmallnessExceeded,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "sqrtE0")]
    pub sqrt_e0: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub boundary_radius: f64,
    pub sup_zeta: f64,
    pub sup_zeta_r: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DtStats {
    pub dt: f64,
    /// `min Δr/c` at Courant factor 1 for the initial state.
    pub cfl_dt_initial: f64,
    /// The same, minimized over the recorded states.
    pub cfl_dt_min: f64,
    /// `dt √λ_max` for the stiffest pencil mode; RK4 needs this below ≈2.8.
    pub stiffness_number: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub gamma: f64,
    pub n_nodes: usize,
    pub radius: f64,
    pub mu0: f64,
    pub delta: f64,
    pub dynamics: Dynamics,
    pub t_start: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub dt: DtStats,
    #[serde(rename = "H_initial")]
    pub h_initial: f64,
    /// `max |H(t) - H(0)|` over the largest summed magnitude of the energy parts.
    #[serde(rename = "H_drift")]
    pub h_drift: f64,
    pub collapse: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub metadata: RunMetadata,
    pub status: RunStatus,
    pub series: Vec<SeriesRow>,
    /// `(t, √E⁰)` after every step, for rate fits.
    #[serde(skip)]
    pub samples: Vec<[f64; 2]>,
    /// States at the recorded rows, when requested.
    #[serde(skip)]
    pub snapshots: Vec<PerturbationState>,
}

impl RunRecord {
    pub fn last_sqrt_e0(&self) -> f64 {
        self.samples.last().map(|s| s[1]).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub dynamics: Dynamics,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// Stop once `√E⁰` reaches this level.
    pub escape_at: Option<f64>,
    /// Stop when the smallness monitor exceeds this level.
    pub theta1: Option<f64>,
    pub amplitude_floor: f64,
    pub max_steps: Option<usize>,
    pub keep_snapshots: bool,
}

impl RunOptions {
    pub fn from_config(cfg: &ExperimentConfig, dynamics: Dynamics, dt: f64) -> Self {
        Self {
            dynamics,
            dt,
            t_end: cfg.sim.t_end,
            record_every: cfg.sim.record_every,
            escape_at: None,
            theta1: Some(cfg.sim.theta1),
            amplitude_floor: cfg.sim.amplitude_floor,
            max_steps: None,
            keep_snapshots: false,
        }
    }
}

fn energy_and_scale(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    dynamics: Dynamics,
    floor: f64,
) -> (f64, f64) {
    let z = pencil.restrict(&state.zeta);
    let v = pencil.restrict(&state.zeta_t);
    let parts = match dynamics {
        Dynamics::Nonlinear => energy_active(pencil, &z, &v, floor),
        Dynamics::Linear => [
            0.5 * pencil.mass_form(&v),
            0.5 * pencil.stiffness.bilinear(&z, &z),
            0.0,
        ],
    };
    (parts.iter().sum(), parts.iter().map(|p| p.abs()).sum())
}

/// Time-march `initial` with a fixed step until a stop rule fires.
pub fn evolve(
    pipe: &Pipeline,
    initial: PerturbationState,
    opts: &RunOptions,
    config_hash: &str,
) -> Result<RunRecord> {
    let pencil = &pipe.pencil;
    let profile = &pipe.profile;
    let dt = opts.dt;
    let monitor_level = opts.theta1.unwrap_or(f64::INFINITY);
    let (h0, scale0) = energy_and_scale(&initial, pencil, opts.dynamics, opts.amplitude_floor);
    let mut max_scale = scale0;
    let mut max_dh: f64 = 0.0;
    let cfl0 = cfl_dt(&initial, pencil, 1.0);
    let mut cfl_min = f64::INFINITY;

    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let mut samples = Vec::new();
    let mut state = initial;
    let mut n_steps = 0usize;
    let mut collapse = None;

    let record = |state: &PerturbationState,
                  series: &mut Vec<SeriesRow>,
                  snapshots: &mut Vec<PerturbationState>,
                  cfl_min: &mut f64|
     -> Result<bool> {
        let e0 = zeroth_energy(state, profile);
        let (h, _) = energy_and_scale(state, pencil, opts.dynamics, opts.amplitude_floor);
        let mon = smallness_monitor(state, pencil, opts.dynamics, monitor_level)?;
        *cfl_min = cfl_min.min(cfl_dt(state, pencil, 1.0));
        series.push(SeriesRow {
            t: state.t,
            e0,
            sqrt_e0: e0.sqrt(),
            h,
            boundary_radius: state.boundary_radius(pencil),
            sup_zeta: mon.sup_zeta,
            sup_zeta_r: mon.sup_zeta_r,
            exceeded: mon.exceeded,
        });
        if opts.keep_snapshots {
            snapshots.push(state.clone());
        }
        Ok(mon.exceeded)
    };

    samples.push([state.t, zeroth_energy(&state, profile).sqrt()]);
    record(&state, &mut series, &mut snapshots, &mut cfl_min)?;
    let status = loop {
        if let Some(level) = opts.escape_at {
            if samples.last().unwrap()[1] >= level {
                break RunStatus::Escaped;
            }
        }
        if state.t >= opts.t_end * (1.0 - 1e-12) || opts.max_steps.is_some_and(|m| n_steps >= m) {
            break RunStatus::Completed;
        }
        match step(&state, pencil, opts.dynamics, dt) {
            Ok(next) => state = next,
            Err(e @ Error::StatePastVacuumCollapse { .. }) => {
                collapse = Some(e.to_string());
                break RunStatus::Collapsed;
            }
            Err(e) => return Err(e),
        }
        n_steps += 1;
        let a = zeroth_energy(&state, profile).sqrt();
        samples.push([state.t, a]);
        let (h, scale) = energy_and_scale(&state, pencil, opts.dynamics, opts.amplitude_floor);
        max_scale = max_scale.max(scale);
        max_dh = max_dh.max((h - h0).abs());

        let escaped = opts.escape_at.is_some_and(|l| a >= l);
        let finished =
            state.t >= opts.t_end * (1.0 - 1e-12) || opts.max_steps.is_some_and(|m| n_steps >= m);
        if n_steps.is_multiple_of(opts.record_every) || escaped || finished {
            let exceeded = record(&state, &mut series, &mut snapshots, &mut cfl_min)?;
            if exceeded && opts.theta1.is_some() && !escaped {
                break RunStatus::SmallnessExceeded;
            }
        }
    };
    // make sure the terminal state is the last row
    if series.last().map(|r| r.t) != Some(state.t) {
        record(&state, &mut series, &mut snapshots, &mut cfl_min)?;
    }

    Ok(RunRecord {
        metadata: RunMetadata {
            config_hash: config_hash.to_string(),
            gamma: pipe.profile.config.gamma,
            n_nodes: pipe.profile.n_nodes(),
            radius: pipe.profile.radius,
            mu0: pipe.mode.mu0,
            delta: 0.0,
            dynamics: opts.dynamics,
            t_start: series[0].t,
            t_final: state.t,
            n_steps,
            dt: DtStats {
                dt,
                cfl_dt_initial: cfl0,
                cfl_dt_min: cfl_min,
                stiffness_number: dt * pencil.stiffest_eigenvalue().max(0.0).sqrt(),
            },
            h_initial: h0,
            h_drift: if max_scale > 0.0 {
                max_dh / max_scale
            } else {
                0.0
            },
            collapse,
        },
        status,
        series,
        samples,
        snapshots,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InstabilityResult {
    pub gamma: f64,
    pub delta: f64,
    pub theta0: f64,
    pub mu0: f64,
    pub rate: f64,
    /// Absent when the fit window holds too few samples; see `fit_error`.
    pub fit: Option<GrowthFit>,
    pub fit_error: Option<String>,
    pub escape_time: Option<f64>,
    pub predicted_escape: f64,
    pub record: RunRecord,
    pub linear: Option<RunRecord>,
    pub duhamel: Option<Vec<DuhamelPoint>>,
    pub final_energy: Option<EnergyReport>,
}

/// Growing-mode data `δ(φ₀, √μ₀φ₀)` evolved nonlinearly until `√E⁰ ≥ θ₀`.
pub fn run_instability_experiment(
    cfg: &ExperimentConfig,
    gamma: f64,
    delta: f64,
) -> Result<InstabilityResult> {
    let pipe = Pipeline::new(cfg, gamma)?;
    instability_with(&pipe, cfg, delta)
}

pub fn instability_with(
    pipe: &Pipeline,
    cfg: &ExperimentConfig,
    delta: f64,
) -> Result<InstabilityResult> {
    if !pipe.is_unstable() {
        return Err(Error::RateUnavailable {
            gamma: pipe.profile.config.gamma,
            mu0: pipe.mode.mu0,
        });
    }
    let theta0 = cfg.experiment.theta0;
    if !(delta > 0.0 && delta < theta0) {
        return Err(Error::Config(format!(
            "delta = {delta} must lie in (0, theta0 = {theta0})"
        )));
    }
    let hash = cfg.hash();
    let dt = pipe.equilibrium_dt(cfg.sim.dt_cfl);
    let paired = cfg.experiment.paired_linear;
    let mut opts = RunOptions::from_config(cfg, Dynamics::Nonlinear, dt);
    opts.escape_at = Some(theta0);
    opts.keep_snapshots = paired;
    let mut record = evolve(pipe, pipe.mode_data(delta), &opts, &hash)?;
    record.metadata.delta = delta;

    let times: Vec<f64> = record.samples.iter().map(|s| s[0]).collect();
    let amps: Vec<f64> = record.samples.iter().map(|s| s[1]).collect();
    let (fit, fit_error) = match growth_fit(&times, &amps, delta, theta0, pipe.mode.mu0) {
        Ok(f) => (Some(f), None),
        Err(e @ Error::WindowTooSmall { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };

    let (linear, duhamel) = if paired {
        let lin_opts = RunOptions {
            dynamics: Dynamics::Linear,
            escape_at: None,
            theta1: None,
            max_steps: Some(record.metadata.n_steps),
            keep_snapshots: true,
            ..opts.clone()
        };
        let mut lin = evolve(pipe, pipe.mode_data(delta), &lin_opts, &hash)?;
        lin.metadata.delta = delta;
        let d = duhamel_remainder(
            &record.snapshots,
            &lin.snapshots,
            &pipe.profile,
            delta,
            pipe.mode.rate,
        )?;
        (Some(lin), Some(d))
    } else {
        (None, None)
    };
    let final_energy = record.snapshots.last().and_then(|s| {
        instant_energy(
            s,
            &pipe.profile,
            &pipe.pencil,
            Dynamics::Nonlinear,
            cfg.experiment.jmax,
            cfg.sim.theta1,
        )
        .ok()
    });
    Ok(InstabilityResult {
        gamma: pipe.profile.config.gamma,
        delta,
        theta0,
        mu0: pipe.mode.mu0,
        rate: pipe.mode.rate,
        fit,
        fit_error,
        escape_time: escape_time(&times, &amps, theta0),
        predicted_escape: predicted_escape(delta, theta0, pipe.mode.mu0),
        record,
        linear,
        duhamel,
        final_energy,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveResult {
    pub record: RunRecord,
    pub final_energy: EnergyReport,
}

/// Nonlinear run from `δ(φ₀, √μ₀φ₀)` (first configured `δ`) to `t_end`,
/// stopping early on collapse or when the smallness monitor trips.
pub fn run_evolve(cfg: &ExperimentConfig) -> Result<(Pipeline, EvolveResult)> {
    let pipe = Pipeline::new(cfg, cfg.polytrope.gamma)?;
    let delta = cfg.experiment.deltas[0];
    let dt = pipe.equilibrium_dt(cfg.sim.dt_cfl);
    let mut opts = RunOptions::from_config(cfg, Dynamics::Nonlinear, dt);
    opts.keep_snapshots = true;
    let mut record = evolve(&pipe, pipe.mode_data(delta), &opts, &cfg.hash())?;
    record.metadata.delta = delta;
    let last = record.snapshots.last().expect("at least one row").clone();
    let dynamics = if record.status == RunStatus::Collapsed {
        Dynamics::Linear
    } else {
        Dynamics::Nonlinear
    };
    let final_energy = instant_energy(
        &last,
        &pipe.profile,
        &pipe.pencil,
        dynamics,
        cfg.experiment.jmax,
        cfg.sim.theta1,
    )?;
    Ok((
        pipe,
        EvolveResult {
            record,
            final_energy,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    /// `unstable`, `marginal`, `stable` or `failed`.
    pub status: String,
    pub mu0: f64,
    pub rate: f64,
    /// Fit for the smallest `δ`.
    pub fitted_rate: f64,
    /// Measured over predicted escape time for the smallest `δ`.
    pub escape_ratio: f64,
    /// Mean of `(T_{i+1} - T_i) / (ln(δ_i/δ_{i+1}) / √μ₀)` over successive `δ`.
    pub spacing_ratio: f64,
    pub detail: String,
}

fn sweep_row(cfg: &ExperimentConfig, gamma: f64) -> SweepRow {
    let mut row = SweepRow {
        gamma,
        status: "failed".into(),
        mu0: f64::NAN,
        rate: f64::NAN,
        fitted_rate: f64::NAN,
        escape_ratio: f64::NAN,
        spacing_ratio: f64::NAN,
        detail: String::new(),
    };
    let pipe = match Pipeline::new(cfg, gamma) {
        Ok(p) => p,
        Err(e) => {
            row.detail = e.to_string();
            return row;
        }
    };
    row.mu0 = pipe.mode.mu0;
    row.rate = pipe.mode.rate;
    if pipe.mode.mu0.abs() <= pipe.pencil.marginal_tolerance() {
        row.status = "marginal".into();
        row.detail = "no evolution attempted".into();
        return row;
    }
    if pipe.mode.mu0 < 0.0 {
        row.status = "stable".into();
        return row;
    }
    let mut escapes = Vec::new();
    let mut notes = Vec::new();
    for &delta in &cfg.experiment.deltas {
        match instability_with(&pipe, cfg, delta) {
            Ok(res) => {
                match (&res.fit, &res.fit_error) {
                    (Some(f), _) => row.fitted_rate = f.rate,
                    (None, Some(e)) => notes.push(format!("delta = {delta:e}: {e}")),
                    (None, None) => {}
                }
                row.escape_ratio = f64::NAN;
                if let Some(t) = res.escape_time {
                    row.escape_ratio = t / res.predicted_escape;
                    escapes.push((delta, t));
                } else {
                    notes.push(format!("delta = {delta:e} did not escape by t_end"));
                }
            }
            Err(e) => {
                row.detail = format!("delta = {delta:e}: {e}");
                return row;
            }
        }
    }
    row.status = "unstable".into();
    row.detail = notes.join("; ");
    if escapes.len() >= 2 {
        let ratios: Vec<f64> = escapes
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / ((w[0].0 / w[1].0).ln() / pipe.mode.rate))
            .collect();
        row.spacing_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    }
    row
}

/// One row per `γ`, computed concurrently and returned sorted by `γ`.
pub fn sweep(cfg: &ExperimentConfig) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .experiment
            .gammas
            .iter()
            .map(|&g| (g, s.spawn(move || sweep_row(cfg, g))))
            .collect();
        handles
            .into_iter()
            .map(|(g, h)| {
                h.join().unwrap_or_else(|_| SweepRow {
                    gamma: g,
                    status: "failed".into(),
                    mu0: f64::NAN,
                    rate: f64::NAN,
                    fitted_rate: f64::NAN,
                    escape_ratio: f64::NAN,
                    spacing_ratio: f64::NAN,
                    detail: "worker panicked".into(),
                })
            })
            .collect()
    });
    rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    rows
}

// ---------------------------------------------------------------------------
// studies shared by the check battery and the test suites

/// Largest relative X-norm error of a linear run from `δ(φ₀, √μ₀φ₀)`
/// against `δ e^{√μ₀ t} φ₀` over `[0, horizon]`.
pub fn linear_mode_error(pipe: &Pipeline, delta: f64, dt: f64, horizon: f64) -> Result<f64> {
    let opts = RunOptions {
        dynamics: Dynamics::Linear,
        dt,
        t_end: horizon,
        record_every: 1,
        escape_at: None,
        theta1: None,
        amplitude_floor: 1e-2,
        max_steps: None,
        keep_snapshots: true,
    };
    let run = evolve(pipe, pipe.mode_data(delta), &opts, "")?;
    let a = pipe.profile.alpha();
    let mut worst: f64 = 0.0;
    for s in &run.snapshots {
        let g = delta * (pipe.mode.rate * s.t).exp();
        let diff: Vec<f64> = s
            .zeta
            .iter()
            .zip(&pipe.mode.phi0)
            .map(|(z, p)| z - g * p)
            .collect();
        let exact: Vec<f64> = pipe.mode.phi0.iter().map(|p| g * p).collect();
        worst = worst.max(
            weighted_norm_x(&diff, &pipe.profile, a) / weighted_norm_x(&exact, &pipe.profile, a),
        );
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CeilingReport {
    /// Fitted `C` for `‖Ψ_t‖_X ≤ C e^{√μ₀t} D₀`.
    pub c_velocity: f64,
    /// Fitted `C` for `‖Ψ‖²_Y ≤ C e^{2√μ₀t} D₀²`.
    pub c_y: f64,
    pub violations: usize,
    pub n_samples: usize,
}

/// Linear runs from seeded smooth data. The constants are fitted (with a
/// 10% margin) on `t ≤ calibrate`, then every sample up to `horizon` is
/// tested against them. `D₀ = ‖Ψ_t(0)‖_X + ‖Ψ(0)‖_X + ‖Ψ(0)‖_Y`.
pub fn growth_ceilings(
    pipe: &Pipeline,
    seed: u64,
    n_trials: usize,
    dt: f64,
    calibrate: f64,
    horizon: f64,
) -> Result<CeilingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = pipe.profile.alpha();
    let rate = pipe.mode.rate;
    let mut samples = Vec::new();
    for _ in 0..n_trials {
        let init = random_smooth_state(&pipe.pencil, &mut rng, 1e-3);
        let d0 = weighted_norm_x(&init.zeta_t, &pipe.profile, a)
            + weighted_norm_x(&init.zeta, &pipe.profile, a)
            + weighted_norm_y(&init.zeta, &pipe.profile);
        let opts = RunOptions {
            dynamics: Dynamics::Linear,
            dt,
            t_end: horizon,
            record_every: 10,
            escape_at: None,
            theta1: None,
            amplitude_floor: 1e-2,
            max_steps: None,
            keep_snapshots: true,
        };
        let run = evolve(pipe, init, &opts, "")?;
        for s in &run.snapshots {
            let g = (rate * s.t).exp();
            let v = weighted_norm_x(&s.zeta_t, &pipe.profile, a) / (g * d0);
            let y = weighted_norm_y(&s.zeta, &pipe.profile).powi(2) / (g * g * d0 * d0);
            samples.push((s.t, v, y));
        }
    }
    let early = samples.iter().filter(|s| s.0 <= calibrate);
    let (cv, cy) = early.fold((0.0f64, 0.0f64), |(a, b), s| (a.max(s.1), b.max(s.2)));
    let (cv, cy) = (1.1 * cv, 1.1 * cy);
    let violations = samples.iter().filter(|s| s.1 > cv || s.2 > cy).count();
    Ok(CeilingReport {
        c_velocity: cv,
        c_y: cy,
        violations,
        n_samples: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalencePoint {
    pub amplitude: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "frakE1")]
    pub frak_e1: f64,
    /// `|𝔈¹ - E¹| / (E⁰ + E¹)`.
    pub relative_gap: f64,
    /// Largest entry of the smallness monitor.
    pub theta: f64,
}

/// `𝔈¹` against `E¹` on `a (φ₀ + ε, √μ₀ φ₀ + ε')` for each amplitude `a`,
/// with a fixed seeded smooth perturbation `ε`.
pub fn energy_equivalence_ladder(
    pipe: &Pipeline,
    amplitudes: &[f64],
    seed: u64,
) -> Result<Vec<EquivalencePoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = random_smooth_state(&pipe.pencil, &mut rng, 0.1);
    let rate = pipe.mode.rate;
    amplitudes
        .iter()
        .map(|&amp| {
            let state = PerturbationState {
                t: 0.0,
                zeta: pipe
                    .mode
                    .phi0
                    .iter()
                    .zip(&extra.zeta)
                    .map(|(p, e)| amp * (p + e))
                    .collect(),
                zeta_t: pipe
                    .mode
                    .phi0
                    .iter()
                    .zip(&extra.zeta_t)
                    .map(|(p, e)| amp * (rate * p + e))
                    .collect(),
            };
            let rep = instant_energy(
                &state,
                &pipe.profile,
                &pipe.pencil,
                Dynamics::Nonlinear,
                1,
                f64::INFINITY,
            )?;
            let m = rep.theta_measure;
            Ok(EquivalencePoint {
                amplitude: amp,
                e0: rep.e0,
                e1: rep.ej[0],
                frak_e1: rep.frak_e[0],
                relative_gap: (rep.frak_e[0] - rep.ej[0]).abs() / (rep.e0 + rep.ej[0]),
                theta: m
                    .sup_zeta
                    .max(m.sup_zeta_r)
                    .max(m.sup_zeta_t)
                    .max(m.sup_weighted_zeta_tt),
            })
        })
        .collect()
}

/// Relative drift of `H` over a nonlinear run of length `t_end` from seeded
/// smooth data with step `dt`.
pub fn conservation_drift(
    pipe: &Pipeline,
    seed: u64,
    amplitude: f64,
    dt: f64,
    t_end: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = random_smooth_state(&pipe.pencil, &mut rng, amplitude);
    let opts = RunOptions {
        dynamics: Dynamics::Nonlinear,
        dt,
        t_end,
        record_every: usize::MAX,
        escape_at: None,
        theta1: None,
        amplitude_floor: 1e-2,
        max_steps: None,
        keep_snapshots: false,
    };
    let run = evolve(pipe, init, &opts, "")?;
    if let Some(msg) = run.metadata.collapse {
        return Err(Error::Integration(msg));
    }
    Ok(run.metadata.h_drift)
}

// ---------------------------------------------------------------------------
// check battery

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub mandatory: bool,
    pub status: CheckStatus,
    pub measured: BTreeMap<String, f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub gamma: f64,
    pub n_nodes: usize,
    pub passed: bool,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_skip: usize,
    pub checks: Vec<CheckEntry>,
    #[serde(skip)]
    pub hardy: Vec<FamilySummary>,
}

struct Battery {
    checks: Vec<CheckEntry>,
}

impl Battery {
    fn push(
        &mut self,
        name: &str,
        mandatory: bool,
        ok: bool,
        measured: &[(&str, f64)],
        detail: impl Into<String>,
    ) {
        self.checks.push(CheckEntry {
            name: name.into(),
            mandatory,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured: measured.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            detail: detail.into(),
        });
    }

    fn skip(&mut self, name: &str, mandatory: bool, detail: &str) {
        self.checks.push(CheckEntry {
            name: name.into(),
            mandatory,
            status: CheckStatus::Skip,
            measured: BTreeMap::new(),
            detail: detail.into(),
        });
    }

    fn error(&mut self, name: &str, mandatory: bool, e: &Error) {
        self.push(name, mandatory, false, &[], e.to_string());
    }
}

const PROFILE_CHECKS: &[&str] = &[
    "profile_residual",
    "profile_fault_injection",
    "vacuum_exponent",
    "equilibrium_energy",
    "pencil_symmetry",
    "mode_normalization",
    "rayleigh_dominance",
    "linear_mode_propagation",
    "equilibrium_preservation",
    "conservation_drift",
    "energy_equivalence",
    "hardy_families",
];

const CONVERGENCE_CHECKS: &[&str] = &[
    "conservation_order",
    "hardy_mesh_stability",
    "mode_regularity",
];

/// Runs the property battery for `cfg.polytrope.gamma` at `cfg.mesh`.
pub fn check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    let gamma = cfg.polytrope.gamma;
    let poly = cfg.polytrope_config()?;
    let n = cfg.mesh.n_nodes;
    let seed = cfg.experiment.seed;
    let eig_tol = cfg.eig.eig_tol;
    let mut b = Battery { checks: Vec::new() };
    let mut hardy = Vec::new();

    // mesh-free checks
    match origin_series(&poly, 8) {
        Ok(c) => {
            let e2 = (2.0 * c[2] + poly.c_frak / 3.0).abs();
            let e4 = (24.0 * c[4] - poly.alpha * poly.c_frak.powi(2) / 5.0).abs();
            let odd = c.iter().skip(1).step_by(2).all(|x| *x == 0.0);
            b.push(
                "origin_series",
                true,
                e2 <= 1e-10 && e4 <= 1e-8 && odd,
                &[("w_rr0_error", e2), ("w_rrrr0_error", e4)],
                "",
            );
        }
        Err(e) => b.error("origin_series", true, &e),
    }
    match hardy_check_trace(|x| (x * (1.0 - x), 1.0 - 2.0 * x), 0.0) {
        Ok(r) => b.push(
            "hardy_trace_closed_form",
            true,
            (r.ratio - 1.0).abs() <= 1e-8,
            &[("ratio", r.ratio)],
            "g = x(1-x), k = 0",
        ),
        Err(e) => b.error("hardy_trace_closed_form", true, &e),
    }

    if n < MIN_NODES {
        let why = format!("n_nodes = {n} below {MIN_NODES}; profile not solved");
        for name in PROFILE_CHECKS {
            b.skip(name, true, &why);
        }
        for name in CONVERGENCE_CHECKS {
            b.skip(name, true, &why);
        }
        return Ok(finish(gamma, n, b, hardy));
    }

    let pipe = match Pipeline::new(cfg, gamma) {
        Ok(p) => p,
        Err(e) => {
            b.error("profile_residual", true, &e);
            return Ok(finish(gamma, n, b, hardy));
        }
    };
    let profile = &pipe.profile;
    let pencil = &pipe.pencil;
    let mode = &pipe.mode;

    let inv = profile.check_invariants();
    b.push(
        "profile_residual",
        true,
        profile.max_residual <= 1e-6
            && profile.phi_identity_error() <= 1e-6
            && inv.is_ok()
            && profile.w[0] == 1.0,
        &[
            ("max_residual", profile.max_residual),
            ("phi_identity_error", profile.phi_identity_error()),
            ("radius", profile.radius),
        ],
        "",
    );

    let mut corrupted = profile.clone();
    let mid = corrupted.n_nodes() / 2;
    corrupted.w_r[mid] = -corrupted.w_r[mid];
    let fault = corrupted.check_invariants();
    b.push(
        "profile_fault_injection",
        true,
        matches!(fault, Err(Error::NonMonotone { .. })),
        &[("flipped_radius", profile.grid[mid])],
        match fault {
            Err(e) => e.to_string(),
            Ok(()) => "corruption not detected".into(),
        },
    );

    match vacuum_exponent(profile) {
        Ok(p) => b.push(
            "vacuum_exponent",
            true,
            (p - 1.0).abs() <= 0.01,
            &[("exponent", p)],
            "",
        ),
        Err(e) => b.error("vacuum_exponent", true, &e),
    }

    let eq = equilibrium_energy(profile);
    let sign_ok = if gamma < 4.0 / 3.0 - 1e-9 {
        eq.direct > 0.0
    } else if gamma > 4.0 / 3.0 + 1e-9 {
        eq.direct < 0.0
    } else {
        true
    };
    b.push(
        "equilibrium_energy",
        true,
        sign_ok && (gamma == 4.0 / 3.0 || eq.relative_difference <= 1e-4),
        &[
            ("direct", eq.direct),
            ("pressure_form", eq.pressure_form),
            ("relative_difference", eq.relative_difference),
        ],
        "",
    );

    let s = &pencil.stiffness;
    let sym = (0..s.len())
        .flat_map(|i| (i.saturating_sub(1)..(i + 2).min(s.len())).map(move |j| (i, j)))
        .map(|(i, j)| (s.get(i, j) - s.get(j, i)).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = pencil.n_active();
    let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (uv, vu) = (s.bilinear(&u, &v), s.bilinear(&v, &u));
    let bil = (uv - vu).abs() / uv.abs().max(vu.abs()).max(f64::MIN_POSITIVE);
    let mass_ok = pencil.mass_weights.iter().all(|w| *w > 0.0);
    b.push(
        "pencil_symmetry",
        true,
        sym == 0.0 && bil <= 1e-12 && mass_ok,
        &[("entry_asymmetry", sym), ("bilinear_asymmetry", bil)],
        "",
    );

    let norm_err = (mode.normalization() - 1.0).abs();
    b.push(
        "mode_normalization",
        true,
        norm_err <= 1e-10 && mode.residual <= eig_tol * mode.residual_scale && mode.phi0[0] > 0.0,
        &[
            ("normalization_error", norm_err),
            ("residual", mode.residual),
            ("residual_bound", eig_tol * mode.residual_scale),
            ("mu0", mode.mu0),
            ("gap", mode.gap),
        ],
        if mode.near_degenerate {
            "near-degenerate pair"
        } else {
            ""
        },
    );

    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..100 {
            let trial = random_smooth_state(pencil, &mut rng, 1.0);
            worst = worst.max(rayleigh_quotient(pencil, &trial.zeta)?);
        }
        let ones = vec![1.0; profile.n_nodes()];
        let q1 = rayleigh_quotient(pencil, &ones)?;
        b.push(
            "rayleigh_dominance",
            true,
            worst <= mode.mu0 + eig_tol && mode.mu0 >= q1 - eig_tol,
            &[
                ("max_trial_quotient", worst),
                ("constant_quotient", q1),
                ("mu0", mode.mu0),
            ],
            "100 seeded smooth trial vectors",
        );
    }

    let dt = pipe.equilibrium_dt(cfg.sim.dt_cfl);
    if pipe.is_unstable() {
        let horizon = 3.0 / mode.rate;
        match linear_mode_error(&pipe, 1e-6, dt, horizon) {
            Ok(err) => b.push(
                "linear_mode_propagation",
                true,
                err <= 1e-4,
                &[("max_relative_error", err)],
                "",
            ),
            Err(e) => b.error("linear_mode_propagation", true, &e),
        }
    } else {
        b.skip(
            "linear_mode_propagation",
            true,
            "no growing mode at this gamma",
        );
    }

    {
        let eq0 = PerturbationState::equilibrium(pencil);
        let mut st = eq0.clone();
        let mut ok = true;
        for _ in 0..1000 {
            match step(&st, pencil, Dynamics::Nonlinear, dt) {
                Ok(next) => st = next,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        let dev = st
            .zeta
            .iter()
            .chain(&st.zeta_t)
            .fold(0.0f64, |a, x| a.max(x.abs()));
        b.push(
            "equilibrium_preservation",
            true,
            ok && dev == 0.0,
            &[("max_deviation", dev)],
            "1000 steps",
        );
    }

    let drift_t = 4.0;
    let drift = conservation_drift(&pipe, seed, 1e-2, dt, drift_t);
    match &drift {
        Ok(d) => b.push(
            "conservation_drift",
            true,
            *d <= 1e-6,
            &[("relative_drift", *d)],
            "",
        ),
        Err(e) => b.error("conservation_drift", true, e),
    }

    match energy_equivalence_ladder(&pipe, &[8e-3, 4e-3, 2e-3, 1e-3], seed) {
        Ok(pts) => {
            let c = pts
                .iter()
                .map(|p| p.relative_gap / p.theta)
                .fold(0.0f64, f64::max);
            b.push(
                "energy_equivalence",
                false,
                c.is_finite(),
                &[
                    ("fitted_constant", c),
                    ("relative_gap_largest_amplitude", pts[0].relative_gap),
                    (
                        "relative_gap_smallest_amplitude",
                        pts[pts.len() - 1].relative_gap,
                    ),
                ],
                "report only: the relative gap does not vanish with amplitude",
            );
        }
        Err(e) => b.error("energy_equivalence", false, &e),
    }

    match hardy_suite(profile, seed, 100) {
        Ok(fams) => {
            let finite = fams
                .iter()
                .all(|f| f.ratio_max.is_finite() && f.ratio_max >= 0.0);
            let worst = fams.iter().map(|f| f.ratio_max).fold(0.0, f64::max);
            b.push(
                "hardy_families",
                true,
                finite,
                &[("largest_ratio_max", worst)],
                "",
            );
            hardy = fams;
        }
        Err(e) => b.error("hardy_families", true, &e),
    }

    // N → 2N comparisons
    let fine_mesh = MeshSpec {
        n_nodes: 2 * (n - 1) + 1,
        ..cfg.mesh
    };
    match &drift {
        Ok(d1) => match conservation_drift(&pipe, seed, 1e-2, 2.0 * dt, drift_t) {
            Ok(d2) => {
                let order = (d2 / d1).log2();
                let roundoff = *d1 <= 1e-13;
                b.push(
                    "conservation_order",
                    true,
                    order >= 3.5 || roundoff,
                    &[
                        ("drift_dt", *d1),
                        ("drift_double_dt", d2),
                        ("observed_order", order),
                    ],
                    if roundoff {
                        "drift at roundoff level"
                    } else {
                        ""
                    },
                );
            }
            Err(e) => b.error("conservation_order", true, &e),
        },
        Err(_) => b.skip("conservation_order", true, "base drift run failed"),
    }

    match Pipeline::with_mesh(cfg, gamma, fine_mesh) {
        Ok(fine) => {
            match hardy_suite(&fine.profile, seed, 100) {
                Ok(fams) => {
                    let change = hardy
                        .iter()
                        .zip(&fams)
                        .map(|(a, b)| ((a.ratio_max - b.ratio_max) / b.ratio_max).abs())
                        .fold(0.0, f64::max);
                    b.push(
                        "hardy_mesh_stability",
                        true,
                        change <= 0.05,
                        &[("max_relative_change", change)],
                        "",
                    );
                }
                Err(e) => b.error("hardy_mesh_stability", true, &e),
            }
            let coarse = mode_regularity_report(mode, profile);
            let finer = mode_regularity_report(&fine.mode, &fine.profile);
            // integrals that vanish in the limit (a constant mode) are
            // compared against the size of the largest one
            let floor = 1e-9
                * finer
                    .all_integrals()
                    .iter()
                    .fold(0.0f64, |m, x| m.max(x.abs()));
            let change = coarse
                .all_integrals()
                .iter()
                .zip(finer.all_integrals())
                .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
                .fold(0.0, f64::max);
            let finite = finer.all_integrals().iter().all(|x| x.is_finite());
            b.push(
                "mode_regularity",
                true,
                finite && change <= 0.05,
                &[
                    ("max_relative_change", change),
                    ("slope_at_origin", finer.slope_at_origin),
                ],
                "",
            );
        }
        Err(e) => {
            b.error("hardy_mesh_stability", true, &e);
            b.error("mode_regularity", true, &e);
        }
    }

    Ok(finish(gamma, n, b, hardy))
}

fn finish(gamma: f64, n: usize, b: Battery, hardy: Vec<FamilySummary>) -> CheckReport {
    let count = |s: CheckStatus| b.checks.iter().filter(|c| c.status == s).count();
    let passed = !b
        .checks
        .iter()
        .any(|c| c.mandatory && c.status == CheckStatus::Fail);
    CheckReport {
        gamma,
        n_nodes: n,
        passed,
        n_pass: count(CheckStatus::Pass),
        n_fail: count(CheckStatus::Fail),
        n_skip: count(CheckStatus::Skip),
        checks: b.checks,
        hardy,
    }
}
