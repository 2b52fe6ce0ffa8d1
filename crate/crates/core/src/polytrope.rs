//! Equilibrium Lane-Emden profiles.
//!
//! The enthalpy weight `w = K ρ^(γ-1)` solves
//! `w'' + (2/r) w' + 𝔠 w^α = 0` with `w(0) = 1`, `w'(0) = 0`, where
//! `α = 1/(γ-1)` and `𝔠 = 4π/((1+α) K^α)`. The solver starts from the
//! even Taylor series at the origin, integrates with an adaptive
//! Dormand-Prince pair, locates the vacuum radius `R` as the zero of `w`,
//! and then re-integrates onto a composite mesh that is uniform on
//! `[0, 0.9R]` and geometrically graded toward `R`.
//!
//! Alongside `w` and `w'` the integrator carries three cumulative integrals:
//! `∫ w^α s² ds` (enclosed mass), `∫ w^(1+α) s² ds` (pressure) and
//! `∫ m(s)²/s² ds` (interior field energy). They feed the potential
//! coefficient `Φ` and the equilibrium energy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Integrator, Step, System};
use crate::quadrature::{gauss12, gauss8};

pub const MAX_SERIES_ORDER: usize = 8;

/// Smallest supported adiabatic exponent (exclusive).
pub const GAMMA_MIN: f64 = 1.2;
/// Largest supported adiabatic exponent (inclusive; γ = 2 is the closed-form case).
pub const GAMMA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolytropeConfig {
    pub gamma: f64,
    pub alpha: f64,
    /// Entropy constant `K` of `p = K ρ^γ`.
    pub k_entropy: f64,
    pub c_frak: f64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Radius below which the origin series replaces the integrator. `None`
    /// selects `1e-3 R`.
    pub series_radius: Option<f64>,
    /// Give up looking for the vacuum radius beyond this point.
    pub r_max: f64,
}

impl PolytropeConfig {
    /// Configuration with the entropy constant chosen so that `𝔠 = 1`.
    pub fn new(gamma: f64) -> Result<Self> {
        let alpha = alpha_of(gamma);
        let k = (4.0 * PI / (1.0 + alpha)).powf(1.0 / alpha);
        Self::with_entropy_constant(gamma, k)
    }

    pub fn with_entropy_constant(gamma: f64, k_entropy: f64) -> Result<Self> {
        if !(gamma > GAMMA_MIN && gamma <= GAMMA_MAX) {
            return Err(Error::Config(format!(
                "gamma = {gamma} outside the compact-support range (6/5, 2]"
            )));
        }
        if !(k_entropy > 0.0 && k_entropy.is_finite()) {
            return Err(Error::Config(format!(
                "entropy constant K = {k_entropy} must be positive"
            )));
        }
        let alpha = alpha_of(gamma);
        let c_frak = c_frak_for(alpha, k_entropy);
        Ok(Self {
            gamma,
            alpha,
            k_entropy,
            c_frak,
            ode_rel_tol: 1e-12,
            ode_abs_tol: 1e-14,
            series_radius: None,
            r_max: 1e4,
        })
    }

    /// `(1 + α)/α`, the pressure-flux coefficient of the linearized operator.
    pub fn gamma_tilde(&self) -> f64 {
        (1.0 + self.alpha) / self.alpha
    }

    /// `4π / K^α`.
    pub fn four_pi_over_k_alpha(&self) -> f64 {
        (1.0 + self.alpha) * self.c_frak
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > GAMMA_MIN && self.gamma <= GAMMA_MAX) {
            return Err(Error::Config(format!(
                "gamma = {} out of range",
                self.gamma
            )));
        }
        if (self.alpha - 1.0 / (self.gamma - 1.0)).abs() > 1e-14 * self.alpha {
            return Err(Error::Config("alpha inconsistent with gamma".into()));
        }
        let c = c_frak_for(self.alpha, self.k_entropy);
        if (c - self.c_frak).abs() > 1e-13 * c {
            return Err(Error::Config("c_frak inconsistent with K".into()));
        }
        if !(self.ode_rel_tol > 0.0 && self.ode_abs_tol > 0.0) {
            return Err(Error::Config("ODE tolerances must be positive".into()));
        }
        if let Some(rs) = self.series_radius {
            if !(rs > 0.0) {
                return Err(Error::Config("series_radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `1/(γ - 1)`, except that the marginal exponent 4/3 maps to α = 3 exactly
/// (the rounded reciprocal would be off by one ulp and leave a spurious
/// zeroth-order term in the linearized operator).
fn alpha_of(gamma: f64) -> f64 {
    if gamma == 4.0 / 3.0 {
        3.0
    } else {
        1.0 / (gamma - 1.0)
    }
}

fn c_frak_for(alpha: f64, k: f64) -> f64 {
    4.0 * PI / ((1.0 + alpha) * k.powf(alpha))
}

/// Mesh layout: uniform on `[0, 0.9R]`, geometric toward `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    pub n_nodes: usize,
    /// Fraction of cells placed in the graded layer `[0.9R, R]`.
    pub grading: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self::new(513)
    }
}

impl MeshSpec {
    pub const UNIFORM_FRACTION: f64 = 0.9;

    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            grading: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 64 {
            return Err(Error::Config(format!(
                "n_nodes = {} below 64",
                self.n_nodes
            )));
        }
        if !(0.15..=0.6).contains(&self.grading) {
            return Err(Error::Config(format!(
                "grading = {} outside [0.15, 0.6]",
                self.grading
            )));
        }
        Ok(())
    }

    /// Node positions for a star of radius `radius`.
    pub fn build(&self, radius: f64) -> Vec<f64> {
        let cells = self.n_nodes - 1;
        let n_g = ((cells as f64 * self.grading).round() as usize).clamp(8, cells - 8);
        let n_u = cells - n_g;
        let split = Self::UNIFORM_FRACTION * radius;
        let h_u = split / n_u as f64;
        let layer = radius - split;
        // h_u Σ_{i=1}^{n_g} q^i = layer
        let sum = |q: f64| (1..=n_g).map(|i| q.powi(i as i32)).sum::<f64>() * h_u;
        let (mut lo, mut hi) = (1e-6, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) > layer {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let q = 0.5 * (lo + hi);
        let mut grid = Vec::with_capacity(self.n_nodes);
        for j in 0..n_u {
            grid.push(j as f64 * h_u);
        }
        grid.push(split);
        let mut r = split;
        for i in 1..n_g {
            r += h_u * q.powi(i as i32);
            grid.push(r);
        }
        grid.push(radius);
        grid
    }
}

/// Taylor coefficients `a_0..=a_order` of `w` at the origin.
pub fn origin_series(config: &PolytropeConfig, order: usize) -> Result<Vec<f64>> {
    if order > MAX_SERIES_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: order,
            max: MAX_SERIES_ORDER,
        });
    }
    Ok(series_coefficients(config.alpha, config.c_frak, order))
}

/// `(r² w')' = -𝔠 r² w^α` gives `n(n+1) a_n = -𝔠 b_{n-2}` with `b` the
/// coefficients of `w^α`, obtained by the J.C.P. Miller power recurrence.
fn series_coefficients(alpha: f64, c: f64, order: usize) -> Vec<f64> {
    let mut a = vec![0.0; order + 1];
    let mut b = vec![0.0; order + 1];
    a[0] = 1.0;
    b[0] = 1.0;
    for n in 1..=order {
        if n >= 2 {
            a[n] = -c * b[n - 2] / (n * (n + 1)) as f64;
        }
        // b_n needs a_1..a_n
        let mut acc = 0.0;
        for k in 1..=n {
            acc += ((alpha + 1.0) * k as f64 - n as f64) * a[k] * b[n - k];
        }
        b[n] = acc / n as f64;
    }
    a
}

struct OriginSeries {
    coeffs: Vec<f64>,
    alpha: f64,
}

impl OriginSeries {
    fn new(config: &PolytropeConfig) -> Self {
        Self {
            coeffs: series_coefficients(config.alpha, config.c_frak, MAX_SERIES_ORDER),
            alpha: config.alpha,
        }
    }

    fn w(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a)
    }

    fn w_r(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (n, a)| acc * r + n as f64 * a)
    }

    fn mass_integral(&self, r: f64) -> f64 {
        gauss8().integrate(0.0, r, |s| self.w(s).powf(self.alpha) * s * s)
    }

    /// Full integrator state at a small radius.
    fn state(&self, r: f64) -> [f64; 5] {
        let gl = gauss8();
        let p3 = gl.integrate(0.0, r, |s| self.w(s).powf(1.0 + self.alpha) * s * s);
        let g3 = gl.integrate(0.0, r, |s| {
            let m = self.mass_integral(s);
            m * m / (s * s)
        });
        [self.w(r), self.w_r(r), self.mass_integral(r), p3, g3]
    }
}

struct LaneEmdenRhs {
    alpha: f64,
    c: f64,
}

impl System<5> for LaneEmdenRhs {
    fn rhs(&self, r: f64, y: &[f64; 5]) -> [f64; 5] {
        let w = y[0].max(0.0);
        let wa = w.powf(self.alpha);
        let r2 = r * r;
        [
            y[1],
            -2.0 * y[1] / r - self.c * wa,
            wa * r2,
            wa * w * r2,
            y[2] * y[2] / r2,
        ]
    }
}

/// Equilibrium profile on the composite mesh.
#[derive(Debug, Clone, Serialize)]
pub struct LaneEmdenProfile {
    pub config: PolytropeConfig,
    pub mesh: MeshSpec,
    /// Vacuum radius `R`.
    pub radius: f64,
    pub grid: Vec<f64>,
    pub w: Vec<f64>,
    pub w_r: Vec<f64>,
    /// `w` at cell midpoints, one per cell.
    pub w_half: Vec<f64>,
    /// `Φ(r) = r^-3 ∫ (4π/K^α) w^α s² ds` at the nodes.
    pub phi: Vec<f64>,
    /// `∫_0^r w^α s² ds` at the nodes.
    pub mass_integral: Vec<f64>,
    /// Total mass `∫ 4π s² ρ ds`.
    pub mass: f64,
    /// `∫_0^R w^(1+α) s² ds`.
    pub pressure_integral: f64,
    /// `∫_0^R m(s)²/s² ds` with `m = ∫ w^α s²`.
    pub field_integral: f64,
    pub series_radius: f64,
    /// Max of `|w'' + 2w'/r + 𝔠 w^α|` at step midpoints, derivatives from the dense output.
    pub max_residual: f64,
}

/// Solve on the default mesh with `n_nodes` nodes.
pub fn solve_lane_emden(config: &PolytropeConfig, n_nodes: usize) -> Result<LaneEmdenProfile> {
    solve_lane_emden_on(config, MeshSpec::new(n_nodes))
}

pub fn solve_lane_emden_on(config: &PolytropeConfig, mesh: MeshSpec) -> Result<LaneEmdenProfile> {
    config.validate()?;
    mesh.validate()?;
    let sys = LaneEmdenRhs {
        alpha: config.alpha,
        c: config.c_frak,
    };
    let series = OriginSeries::new(config);
    let length_scale = 1.0 / config.c_frak.sqrt();

    let radius = locate_radius(config, &sys, &series, 1e-3 * length_scale)?;
    let series_radius = config.series_radius.unwrap_or(1e-3 * radius);
    if series_radius > 0.05 * radius {
        return Err(Error::Config(format!(
            "series_radius = {series_radius} is not small against R = {radius}"
        )));
    }

    let grid = mesh.build(radius);
    let n = grid.len();
    // nodes and midpoints, interleaved: index 2j is node j, 2j+1 the midpoint of cell j
    let mut points = Vec::with_capacity(2 * n - 1);
    for j in 0..n {
        points.push(grid[j]);
        if j + 1 < n {
            points.push(0.5 * (grid[j] + grid[j + 1]));
        }
    }

    let mut states = vec![[0.0; 5]; points.len()];
    states[0] = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut first_ode = points.len();
    for (i, &r) in points.iter().enumerate().skip(1) {
        if r <= series_radius {
            states[i] = series.state(r);
        } else {
            first_ode = i;
            break;
        }
    }

    let y0 = series.state(series_radius);
    let mut integ = Integrator::new(
        &sys,
        series_radius,
        y0,
        1e-2 * series_radius.max(1e-3 * radius),
        config.ode_rel_tol,
        config.ode_abs_tol,
    );
    let mut max_residual: f64 = 0.0;
    let mut check = |step: &Step<5>| {
        let rm = step.t0 + 0.5 * step.h;
        if rm < radius * (1.0 - 1e-9) {
            let y = step.value(rm);
            let dy = step.derivative(rm);
            let res = dy[1] + 2.0 * y[1] / rm + config.c_frak * y[0].max(0.0).powf(config.alpha);
            max_residual = max_residual.max(res.abs());
        }
    };
    for i in first_ode..points.len() {
        integ.advance_to(&sys, points[i], &mut check)?;
        states[i] = *integ.y();
    }

    let w: Vec<f64> = (0..n)
        .map(|j| if j == n - 1 { 0.0 } else { states[2 * j][0] })
        .collect();
    let w_r: Vec<f64> = (0..n).map(|j| states[2 * j][1]).collect();
    let w_half: Vec<f64> = (0..n - 1).map(|j| states[2 * j + 1][0].max(0.0)).collect();
    let mass_integral: Vec<f64> = (0..n).map(|j| states[2 * j][2]).collect();
    let four_pi_ka = config.four_pi_over_k_alpha();
    let phi: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 {
                four_pi_ka / 3.0
            } else {
                four_pi_ka * mass_integral[j] / grid[j].powi(3)
            }
        })
        .collect();
    let last = states[points.len() - 1];

    let profile = LaneEmdenProfile {
        config: *config,
        mesh,
        radius,
        grid,
        w,
        w_r,
        w_half,
        phi,
        mass_integral,
        mass: four_pi_ka * last[2],
        pressure_integral: last[3],
        field_integral: last[4],
        series_radius,
        max_residual,
    };
    profile.check_invariants()?;
    Ok(profile)
}

fn locate_radius(
    config: &PolytropeConfig,
    sys: &LaneEmdenRhs,
    series: &OriginSeries,
    r0: f64,
) -> Result<f64> {
    let y0 = series.state(r0);
    let mut integ = Integrator::new(
        sys,
        r0,
        y0,
        1e-2 * r0,
        config.ode_rel_tol,
        config.ode_abs_tol,
    );
    loop {
        let t0 = integ.t();
        let y_start = *integ.y();
        let step = integ.step(sys, config.r_max)?;
        if step.y1[0] <= 0.0 {
            return refine_root(config, sys, t0, &y_start, &step);
        }
        if integ.t() >= config.r_max {
            return Err(Error::NoVacuumRadius {
                r_max: config.r_max,
            });
        }
    }
}

/// Zero of `w` inside an accepted step, by Illinois iteration on the length
/// of a single Dormand-Prince step from the step start.
fn refine_root(
    config: &PolytropeConfig,
    sys: &LaneEmdenRhs,
    t0: f64,
    y0: &[f64; 5],
    step: &Step<5>,
) -> Result<f64> {
    let k1 = sys.rhs(t0, y0);
    let f = |h: f64| {
        if h == 0.0 {
            return y0[0];
        }
        crate::ode::dopri_step(sys, t0, y0, &k1, h, config.ode_rel_tol, config.ode_abs_tol)
            .0
            .y1[0]
    };
    let (mut a, mut fa) = (0.0, y0[0]);
    let (mut b, mut fb) = (step.h, step.y1[0]);
    if fb == 0.0 {
        return Ok(t0 + b);
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < 1e-15 * (t0 + b) {
            return Ok(t0 + c);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(t0 + 0.5 * (a + b))
}

impl LaneEmdenProfile {
    /// `w > 0` and `w_r < 0` at every interior node.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.grid.len();
        for j in 1..n - 1 {
            if !(self.w_r[j] < 0.0) || !(self.w[j] > 0.0) {
                return Err(Error::NonMonotone { r: self.grid[j] });
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.config.gamma_tilde()
    }

    /// `w''` from the equation itself.
    pub fn w_rr(&self, j: usize) -> f64 {
        let c = self.config.c_frak;
        if j == 0 {
            return -c / 3.0;
        }
        -2.0 * self.w_r[j] / self.grid[j] - c * self.w[j].max(0.0).powf(self.config.alpha)
    }

    fn cell_of(&self, r: f64) -> usize {
        match self.grid.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(j) => j.min(self.grid.len() - 2),
            Err(j) => j.saturating_sub(1).min(self.grid.len() - 2),
        }
    }

    /// `(w, w')` at any radius in `[0, R]` by quintic Hermite interpolation
    /// of the stored values and the equation-derived second derivatives.
    pub fn interpolate(&self, r: f64) -> (f64, f64) {
        let r = r.clamp(0.0, self.radius);
        let k = self.cell_of(r);
        let (x0, x1) = (self.grid[k], self.grid[k + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let (f0, d0, s0) = (self.w[k], self.w_r[k], self.w_rr(k));
        let (f1, d1, s1) = (self.w[k + 1], self.w_r[k + 1], self.w_rr(k + 1));
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
        let dh0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let dh1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let dh2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
        let dh3 = -dh0;
        let dh4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let dh5 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
        let w = f0 * h0 + h * d0 * h1 + h * h * s0 * h2 + f1 * h3 + h * d1 * h4 + h * h * s1 * h5;
        let dw = (f0 * dh0 + f1 * dh3) / h + d0 * dh1 + d1 * dh4 + h * (s0 * dh2 + s1 * dh5);
        (w.max(0.0), dw)
    }

    /// Number of nodes where `w < 0.1`.
    pub fn outer_layer_nodes(&self) -> usize {
        self.w.iter().filter(|&&w| w < 0.1).count()
    }

    /// Max relative violation of `Φ(r) = -(1+α) w'/r` over interior nodes.
    pub fn phi_identity_error(&self) -> f64 {
        (1..self.n_nodes() - 1)
            .map(|j| {
                let rhs = -(1.0 + self.alpha()) * self.w_r[j] / self.grid[j];
                ((self.phi[j] - rhs) / self.phi[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `Φ(r)` at an arbitrary radius.
pub fn potential_coefficient(profile: &LaneEmdenProfile, r: f64) -> Result<f64> {
    if !(0.0..=profile.radius).contains(&r) {
        return Err(Error::OutOfDomain {
            r,
            radius: profile.radius,
        });
    }
    let four_pi_ka = profile.config.four_pi_over_k_alpha();
    if r == 0.0 {
        return Ok(four_pi_ka / 3.0);
    }
    let alpha = profile.alpha();
    let m = if r <= profile.series_radius {
        OriginSeries::new(&profile.config).mass_integral(r)
    } else {
        let k = profile.cell_of(r);
        profile.mass_integral[k]
            + gauss12().integrate(profile.grid[k], r, |s| {
                profile.interpolate(s).0.powf(alpha) * s * s
            })
    };
    Ok(four_pi_ka * m / r.powi(3))
}

/// Total equilibrium energy by two routes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquilibriumEnergy {
    /// `∫ p/(γ-1) dx - (1/8π) ∫ |∇Φ|² dx` over all of space.
    pub direct: f64,
    /// `((4-3γ)/(γ-1)) ∫ p dx`.
    pub pressure_form: f64,
    pub relative_difference: f64,
}

pub fn equilibrium_energy(profile: &LaneEmdenProfile) -> EquilibriumEnergy {
    let cfg = &profile.config;
    let k_alpha = cfg.k_entropy.powf(cfg.alpha);
    // p = K ρ^γ = K^-α w^(1+α)
    let pressure_volume = 4.0 * PI * profile.pressure_integral / k_alpha;
    let internal = cfg.alpha * pressure_volume;
    // |∇Φ| = (4π/K^α) m(r)/r² inside, M/r² outside
    let interior_field =
        (4.0 * PI / k_alpha).powi(2) * 4.0 * PI * profile.field_integral / (8.0 * PI);
    let exterior_field = profile.mass * profile.mass / (2.0 * profile.radius);
    let direct = internal - interior_field - exterior_field;
    let pressure_form = (4.0 - 3.0 * cfg.gamma) / (cfg.gamma - 1.0) * pressure_volume;
    EquilibriumEnergy {
        direct,
        pressure_form,
        relative_difference: ((direct - pressure_form) / pressure_form).abs(),
    }
}

/// Least-squares slope of `ln w` against `ln(R - r)` over the decade of
/// distances `[s, 10 s]` closest to the boundary that still holds 16 nodes.
pub fn fit_boundary_exponent(grid: &[f64], w: &[f64], radius: f64) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(w)
        .filter(|(r, w)| **w > 0.0 && **r < radius)
        .map(|(r, w)| (radius - r, *w))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    const REQUIRED: usize = 16;
    let mut best = 0;
    for m in 0..pts.len() {
        let end = pts[m..].partition_point(|p| p.0 <= 10.0 * pts[m].0) + m;
        best = best.max(end - m);
        if end - m >= REQUIRED {
            let window: Vec<(f64, f64)> =
                pts[m..end].iter().map(|(s, w)| (s.ln(), w.ln())).collect();
            return Ok(least_squares_slope(&window).0);
        }
    }
    Err(Error::InsufficientResolution {
        found: best,
        required: REQUIRED,
    })
}

pub fn vacuum_exponent(profile: &LaneEmdenProfile) -> Result<f64> {
    fit_boundary_exponent(&profile.grid, &profile.w, profile.radius)
}

/// Slope and intercept of the least-squares line through `(x, y)` pairs.
pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_known_coefficients() {
        let cfg = PolytropeConfig::new(1.25).unwrap();
        let a = origin_series(&cfg, 2).unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(a[1], 0.0);
        assert!((a[2] + cfg.c_frak / 6.0).abs() < 1e-15);

        // α = 3, 𝔠 = 1: r⁴ coefficient α𝔠²/120 = 1/40
        let cfg3 =
            PolytropeConfig::with_entropy_constant(4.0 / 3.0, (4.0 * PI / 4.0f64).powf(1.0 / 3.0))
                .unwrap();
        let a = origin_series(&cfg3, 4).unwrap();
        assert!((a[4] - 1.0 / 40.0).abs() < 1e-14);
    }

    #[test]
    fn odd_series_coefficients_vanish() {
        for gamma in [1.21, 1.3, 1.5, 1.9] {
            let cfg = PolytropeConfig::new(gamma).unwrap();
            let a = origin_series(&cfg, 8).unwrap();
            for n in (1..=7).step_by(2) {
                assert_eq!(a[n], 0.0, "gamma {gamma} order {n}");
            }
        }
    }

    #[test]
    fn series_order_guard() {
        let cfg = PolytropeConfig::new(1.3).unwrap();
        assert!(matches!(
            origin_series(&cfg, 9),
            Err(Error::UnsupportedOrder { requested: 9, .. })
        ));
    }

    #[test]
    fn n1_polytrope_is_sinc() {
        let cfg = PolytropeConfig::new(2.0).unwrap();
        assert!((cfg.c_frak - 1.0).abs() < 1e-15);
        let p = solve_lane_emden(&cfg, 512).unwrap();
        assert!((p.radius - PI).abs() < 1e-8, "R = {}", p.radius);
        let err = p
            .grid
            .iter()
            .zip(&p.w)
            .skip(1)
            .map(|(r, w)| (w - r.sin() / r).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max err {err}");
    }

    #[test]
    fn rejects_gamma_outside_range() {
        assert!(PolytropeConfig::new(1.2).is_err());
        assert!(PolytropeConfig::new(1.1).is_err());
        assert!(PolytropeConfig::new(2.1).is_err());
    }

    #[test]
    fn mesh_is_strictly_increasing_and_graded() {
        let g = MeshSpec::new(257).build(10.0);
        assert_eq!(g.len(), 257);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 10.0);
        for k in 0..g.len() - 1 {
            assert!(g[k + 1] > g[k]);
        }
        let first = g[1] - g[0];
        let last = g[256] - g[255];
        assert!(last < 0.2 * first);
    }

    #[test]
    fn boundary_fit_needs_sixteen_nodes() {
        let grid: Vec<f64> = (0..9).map(|i| 1.0 - 0.01 * (8 - i) as f64).collect();
        let w: Vec<f64> = grid.iter().map(|r| 1.0 - r).collect();
        assert!(matches!(
            fit_boundary_exponent(&grid, &w, 1.0),
            Err(Error::InsufficientResolution { .. })
        ));
    }
}
