//! Radial Lagrangian dynamics of a perturbation `ζ = ξ - 1` of the flow map.
//!
//! The semi-discrete system is the Euler-Lagrange system of
//! `½ Σ m_j ζ̇_j² + V(ζ)` with the discrete potential described in
//! [`crate::spectral`]:
//!
//! ```text
//! m_j ζ̈_j = -ξ_j² [ r_j³ (F_{j+1/2} - F_{j-1/2}) + g_j (ξ_j⁻⁴ - 1) ],
//! F_k = W_k (J_k^(-γ̃) - 1).
//! ```
//!
//! Its Hessian at `ζ = 0` is the pencil's stiffness matrix, so the linear
//! and nonlinear paths share one stencil, the equilibrium is an exact fixed
//! point, and the conserved energy is exact for the semi-discrete flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::OperatorPencil;

/// Small signal-speed floor used only in the time-step formula.
pub const SPEED_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_cfl: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Record one trajectory row every this many steps.
    pub record_every: usize,
    pub theta1: f64,
    /// Below this `|J - 1|` the stored-energy density uses its Taylor series.
    pub amplitude_floor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_cfl: 0.4,
            t_end: 200.0,
            scheme: Scheme::Rk4,
            record_every: 10,
            theta1: 0.1,
            amplitude_floor: 1e-2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_cfl > 0.0 && self.dt_cfl < 1.0) {
            return Err(Error::Config(format!(
                "dt_cfl = {} not in (0, 1)",
                self.dt_cfl
            )));
        }
        if !(self.theta1 > 0.0) {
            return Err(Error::Config("theta1 must be positive".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.amplitude_floor > 0.0 && self.amplitude_floor < 0.1) {
            return Err(Error::Config("amplitude_floor must lie in (0, 0.1)".into()));
        }
        Ok(())
    }
}

/// Linearized or full dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Linear,
    Nonlinear,
}

/// `(ζ, ζ_t)` on the full grid. Endpoint values are slaved to the active
/// nodes (even extension at the origin, linear at the vacuum node).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationState {
    pub t: f64,
    pub zeta: Vec<f64>,
    pub zeta_t: Vec<f64>,
}

impl PerturbationState {
    pub fn equilibrium(pencil: &OperatorPencil) -> Self {
        let n = pencil.grid.len();
        Self {
            t: 0.0,
            zeta: vec![0.0; n],
            zeta_t: vec![0.0; n],
        }
    }

    pub fn from_active(pencil: &OperatorPencil, t: f64, zeta: &[f64], zeta_t: &[f64]) -> Self {
        Self {
            t,
            zeta: pencil.extend(zeta),
            zeta_t: pencil.extend(zeta_t),
        }
    }

    /// Re-slave the endpoint values after editing active nodes.
    pub fn sync_endpoints(&mut self, pencil: &OperatorPencil) {
        let z = pencil.restrict(&self.zeta);
        let v = pencil.restrict(&self.zeta_t);
        self.zeta = pencil.extend(&z);
        self.zeta_t = pencil.extend(&v);
    }

    /// `ζ_r` at the nodes: three-point differences inside, zero at the
    /// origin by symmetry, one-sided at the vacuum node.
    pub fn zeta_r(&self, grid: &[f64]) -> Vec<f64> {
        node_derivative(&self.zeta, grid)
    }

    /// `φ = (1 + ζ)² ζ_t`.
    pub fn varphi(&self) -> Vec<f64> {
        self.zeta
            .iter()
            .zip(&self.zeta_t)
            .map(|(z, v)| (1.0 + z).powi(2) * v)
            .collect()
    }

    /// Cell Jacobians `J_k` on the active cells.
    pub fn jacobian(&self, pencil: &OperatorPencil) -> Vec<f64> {
        jacobian_minus_one(pencil, &pencil.restrict(&self.zeta))
            .into_iter()
            .map(|a| 1.0 + a)
            .collect()
    }

    /// Physical radius of the vacuum boundary, `(1 + ζ(R)) R`.
    pub fn boundary_radius(&self, pencil: &OperatorPencil) -> f64 {
        let n = pencil.grid.len();
        (1.0 + self.zeta[n - 1]) * pencil.grid[n - 1]
    }
}

pub(crate) fn node_derivative(f: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        let hm = grid[j] - grid[j - 1];
        let hp = grid[j + 1] - grid[j];
        d[j] = (hm * hm * (f[j + 1] - f[j]) + hp * hp * (f[j] - f[j - 1])) / (hm * hp * (hm + hp));
    }
    d[n - 1] = (f[n - 1] - f[n - 2]) / (grid[n - 1] - grid[n - 2]);
    d
}

/// `ξ³ - 1` without cancellation.
#[inline]
fn cube_minus_one(z: f64) -> f64 {
    z * (3.0 + z * (3.0 + z))
}

/// `J_k - 1` on the active cells `0 ..= N-2`, from active-node values.
pub(crate) fn jacobian_minus_one(pencil: &OperatorPencil, z: &[f64]) -> Vec<f64> {
    let g = &pencil.grid;
    let cells = g.len() - 2;
    (0..cells)
        .map(|k| {
            let outer = g[k + 1].powi(3) * cube_minus_one(z[k]);
            let inner = if k == 0 {
                0.0
            } else {
                g[k].powi(3) * cube_minus_one(z[k - 1])
            };
            (outer - inner) / pencil.cell_volume[k]
        })
        .collect()
}

fn check_state(pencil: &OperatorPencil, z: &[f64], a: &[f64], t: f64) -> Result<()> {
    for (i, zi) in z.iter().enumerate() {
        if !(1.0 + zi > 0.0) {
            return Err(Error::StatePastVacuumCollapse {
                node: i + 1,
                r: pencil.grid[i + 1],
                t,
            });
        }
    }
    for (k, ak) in a.iter().enumerate() {
        if !(1.0 + ak > 0.0) {
            return Err(Error::StatePastVacuumCollapse {
                node: k + 1,
                r: pencil.grid[k + 1],
                t,
            });
        }
    }
    Ok(())
}

/// Nonlinear acceleration on active nodes.
pub(crate) fn accel_active(pencil: &OperatorPencil, z: &[f64], t: f64) -> Result<Vec<f64>> {
    let a = jacobian_minus_one(pencil, z);
    check_state(pencil, z, &a, t)?;
    let gt = pencil.gamma_tilde;
    let g = &pencil.grid;
    let n = z.len();
    let mut flux: Vec<f64> = a
        .iter()
        .zip(&pencil.cell_pressure)
        .map(|(ak, w)| w * (-gt * ak.ln_1p()).exp_m1())
        .collect();
    flux.push(0.0);
    Ok((0..n)
        .map(|i| {
            let j = i + 1;
            let xi2 = (1.0 + z[i]).powi(2);
            let grav = (-4.0 * z[i].ln_1p()).exp_m1();
            -xi2 * (g[j].powi(3) * (flux[j] - flux[j - 1]) + pencil.gravity[i] * grav)
                / pencil.mass_weights[i]
        })
        .collect())
}

/// `-M⁻¹ S ζ` on active nodes.
pub(crate) fn linear_accel_active(pencil: &OperatorPencil, z: &[f64]) -> Vec<f64> {
    pencil
        .stiffness
        .matvec(z)
        .iter()
        .zip(&pencil.mass_weights)
        .map(|(s, m)| -s / m)
        .collect()
}

/// Directional derivative of the nonlinear acceleration at `z` along `v`;
/// with `v = ζ_t` this is `ζ_ttt`.
pub(crate) fn accel_jvp_active(pencil: &OperatorPencil, z: &[f64], v: &[f64]) -> Vec<f64> {
    let a = jacobian_minus_one(pencil, z);
    let gt = pencil.gamma_tilde;
    let g = &pencil.grid;
    let n = z.len();
    let mut flux = Vec::with_capacity(n + 1);
    let mut dflux = Vec::with_capacity(n + 1);
    for (k, ak) in a.iter().enumerate() {
        let w = pencil.cell_pressure[k];
        let ln1p = ak.ln_1p();
        flux.push(w * (-gt * ln1p).exp_m1());
        let outer = 3.0 * g[k + 1].powi(3) * (1.0 + z[k]).powi(2) * v[k];
        let inner = if k == 0 {
            0.0
        } else {
            3.0 * g[k].powi(3) * (1.0 + z[k - 1]).powi(2) * v[k - 1]
        };
        let dj = (outer - inner) / pencil.cell_volume[k];
        dflux.push(-gt * w * (-(gt + 1.0) * ln1p).exp() * dj);
    }
    flux.push(0.0);
    dflux.push(0.0);
    (0..n)
        .map(|i| {
            let j = i + 1;
            let xi = 1.0 + z[i];
            let gi = pencil.gravity[i];
            let m = pencil.mass_weights[i];
            let r3 = g[j].powi(3);
            let bracket = r3 * (flux[j] - flux[j - 1]) + gi * (-4.0 * z[i].ln_1p()).exp_m1();
            let dbracket = r3 * (dflux[j] - dflux[j - 1]) - 4.0 * gi * xi.powi(-5) * v[i];
            -(2.0 * xi * v[i] * bracket + xi * xi * dbracket) / m
        })
        .collect()
}

/// `ζ_tt` on the full grid from the exact-Jacobian equation.
pub fn nonlinear_accel(state: &PerturbationState, pencil: &OperatorPencil) -> Result<Vec<f64>> {
    let acc = accel_active(pencil, &pencil.restrict(&state.zeta), state.t)?;
    Ok(pencil.extend(&acc))
}

/// `ζ_tt = (w^α r⁴)⁻¹ L ζ` with the pencil's stencil.
pub fn linear_accel(state: &PerturbationState, pencil: &OperatorPencil) -> Vec<f64> {
    pencil.extend(&linear_accel_active(pencil, &pencil.restrict(&state.zeta)))
}

/// `ζ_tt` and `ζ_ttt` on the full grid for either dynamics.
pub fn time_derivatives(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    dynamics: Dynamics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = pencil.restrict(&state.zeta);
    let v = pencil.restrict(&state.zeta_t);
    let (acc, jerk) = match dynamics {
        Dynamics::Linear => (
            linear_accel_active(pencil, &z),
            linear_accel_active(pencil, &v),
        ),
        Dynamics::Nonlinear => (
            accel_active(pencil, &z, state.t)?,
            accel_jvp_active(pencil, &z, &v),
        ),
    };
    Ok((pencil.extend(&acc), pencil.extend(&jerk)))
}

/// Stored-energy density `E(J) = α(J^(-1/α) - 1) + (J - 1)` as a function of `a = J - 1`.
pub(crate) fn stored_energy(a: f64, alpha: f64, floor: f64) -> f64 {
    if a.abs() < floor {
        // α Σ_{n≥2} binom(-1/α, n) aⁿ; the linear terms cancel
        let s = 1.0 / alpha;
        let mut coeff = 1.0;
        let mut pow = 1.0;
        let mut sum = 0.0;
        for n in 1..=12 {
            coeff *= -(s + (n - 1) as f64) / n as f64;
            pow *= a;
            if n >= 2 {
                sum += coeff * pow;
            }
        }
        alpha * sum
    } else {
        alpha * (-a.ln_1p() / alpha).exp_m1() + a
    }
}

/// `G(ζ) = 4/3 - (1+ζ)⁻¹ - (1+ζ)³/3`, written without cancellation.
pub(crate) fn gravity_potential(z: f64) -> f64 {
    let z2 = z * z;
    -2.0 * z2 + (2.0 / 3.0) * z2 * z - z2 * z2 / (1.0 + z)
}

/// Energy conserved by the semi-discrete nonlinear flow.
pub fn conserved_energy(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    amplitude_floor: f64,
) -> f64 {
    let z = pencil.restrict(&state.zeta);
    let v = pencil.restrict(&state.zeta_t);
    energy_active(pencil, &z, &v, amplitude_floor).iter().sum()
}

/// Kinetic, internal and gravitational parts.
pub(crate) fn energy_active(pencil: &OperatorPencil, z: &[f64], v: &[f64], floor: f64) -> [f64; 3] {
    let kinetic = 0.5
        * v.iter()
            .zip(&pencil.mass_weights)
            .map(|(vi, m)| m * vi * vi)
            .sum::<f64>();
    let internal = jacobian_minus_one(pencil, z)
        .iter()
        .enumerate()
        .map(|(k, a)| {
            pencil.cell_pressure[k] * pencil.cell_volume[k] / 3.0
                * stored_energy(*a, pencil.alpha, floor)
        })
        .sum::<f64>();
    let gravity = z
        .iter()
        .zip(&pencil.gravity)
        .map(|(zi, g)| g * gravity_potential(*zi))
        .sum::<f64>();
    [kinetic, internal, gravity]
}

/// Linearized energy `½ Σ m ζ̇² + ½ ζᵀ S ζ`.
pub fn linear_energy(state: &PerturbationState, pencil: &OperatorPencil) -> f64 {
    let z = pencil.restrict(&state.zeta);
    let v = pencil.restrict(&state.zeta_t);
    0.5 * pencil.mass_form(&v) + 0.5 * pencil.stiffness.bilinear(&z, &z)
}

/// CFL step `dt_cfl · min_j Δr_j / c_j`, `c_j² = γ̃ w_j J_j^(-γ̃)/(1+ζ_j)² + ε`.
pub fn cfl_dt(state: &PerturbationState, pencil: &OperatorPencil, dt_cfl: f64) -> f64 {
    let z = pencil.restrict(&state.zeta);
    let a = jacobian_minus_one(pencil, &z);
    let gt = pencil.gamma_tilde;
    let cells = a.len();
    (0..z.len())
        .map(|i| {
            let j = i + 1;
            let jm = if j < cells {
                0.5 * (a[j - 1] + a[j])
            } else {
                a[j - 1]
            };
            let c2 = gt * pencil.w[j] * (1.0 + jm).powf(-gt) / (1.0 + z[i]).powi(2) + SPEED_FLOOR;
            pencil.quadrature_weights[j] / c2.sqrt()
        })
        .fold(f64::INFINITY, f64::min)
        * dt_cfl
}

/// One classical RK4 step of `(ζ, ζ_t)` with step `dt`.
pub fn step(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    dynamics: Dynamics,
    dt: f64,
) -> Result<PerturbationState> {
    let z = pencil.restrict(&state.zeta);
    let v = pencil.restrict(&state.zeta_t);
    let t = state.t;
    let acc = |zz: &[f64], tt: f64| -> Result<Vec<f64>> {
        match dynamics {
            Dynamics::Linear => Ok(linear_accel_active(pencil, zz)),
            Dynamics::Nonlinear => accel_active(pencil, zz, tt),
        }
    };
    let axpy = |x: &[f64], c: f64, y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| a + c * b).collect()
    };

    let a1 = acc(&z, t)?;
    let z2 = axpy(&z, 0.5 * dt, &v);
    let v2 = axpy(&v, 0.5 * dt, &a1);
    let a2 = acc(&z2, t + 0.5 * dt)?;
    let z3 = axpy(&z, 0.5 * dt, &v2);
    let v3 = axpy(&v, 0.5 * dt, &a2);
    let a3 = acc(&z3, t + 0.5 * dt)?;
    let z4 = axpy(&z, dt, &v3);
    let v4 = axpy(&v, dt, &a3);
    let a4 = acc(&z4, t + dt)?;

    let n = z.len();
    let mut zn = vec![0.0; n];
    let mut vn = vec![0.0; n];
    for i in 0..n {
        zn[i] = z[i] + dt / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
        vn[i] = v[i] + dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
    }
    if dynamics == Dynamics::Nonlinear {
        check_state(pencil, &zn, &jacobian_minus_one(pencil, &zn), t + dt)?;
    }
    Ok(PerturbationState::from_active(pencil, t + dt, &zn, &vn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallnessReport {
    pub sup_zeta: f64,
    pub sup_zeta_r: f64,
    pub sup_zeta_t: f64,
    /// `sup |w^(1/2) ζ_tt|`.
    pub sup_weighted_zeta_tt: f64,
    pub exceeded: bool,
}

pub fn smallness_monitor(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    dynamics: Dynamics,
    theta1: f64,
) -> Result<SmallnessReport> {
    let sup = |f: &[f64]| f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let acc = match dynamics {
        Dynamics::Linear => linear_accel(state, pencil),
        Dynamics::Nonlinear => nonlinear_accel(state, pencil)?,
    };
    let weighted: Vec<f64> = acc
        .iter()
        .zip(&pencil.w)
        .map(|(a, w)| w.sqrt() * a)
        .collect();
    let sup_zeta = sup(&state.zeta);
    let sup_zeta_r = sup(&state.zeta_r(&pencil.grid));
    let sup_zeta_t = sup(&state.zeta_t);
    let sup_weighted_zeta_tt = sup(&weighted);
    Ok(SmallnessReport {
        sup_zeta,
        sup_zeta_r,
        sup_zeta_t,
        sup_weighted_zeta_tt,
        exceeded: [sup_zeta, sup_zeta_r, sup_zeta_t, sup_weighted_zeta_tt]
            .iter()
            .any(|x| *x > theta1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytrope::{solve_lane_emden, PolytropeConfig};
    use crate::spectral::assemble_pencil;

    fn pencil(gamma: f64, n: usize) -> OperatorPencil {
        let p = solve_lane_emden(&PolytropeConfig::new(gamma).unwrap(), n).unwrap();
        assemble_pencil(&p)
    }

    #[test]
    fn stored_energy_series_matches_closed_form() {
        for alpha in [3.0, 10.0 / 3.0, 1.0] {
            for a in [-9e-3, -1e-3, 2e-3, 9e-3] {
                let s = stored_energy(a, alpha, 1e-2);
                let c = stored_energy(a, alpha, 0.0);
                assert!(((s - c) / s).abs() < 1e-9, "{alpha} {a} {s} {c}");
            }
        }
    }

    #[test]
    fn gravity_potential_matches_definition() {
        for z in [-0.3, -0.01, 0.2, 0.7] {
            let direct = 4.0 / 3.0 - 1.0 / (1.0 + z) - (1.0f64 + z).powi(3) / 3.0;
            assert!((gravity_potential(z) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_of_uniform_dilation() {
        let p = pencil(1.3, 129);
        let n = p.n_active();
        let z = vec![0.1; n];
        for a in jacobian_minus_one(&p, &z) {
            assert!((a - (1.1f64.powi(3) - 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn jvp_matches_finite_difference() {
        let p = pencil(1.3, 129);
        let n = p.n_active();
        let r = &p.grid[1..=n];
        let z: Vec<f64> = r.iter().map(|r| 1e-2 * (0.3 * r).sin()).collect();
        let v: Vec<f64> = r.iter().map(|r| (0.5 * r).cos()).collect();
        let jvp = accel_jvp_active(&p, &z, &v);
        let eps = 1e-6;
        let zp: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let zm: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let ap = accel_active(&p, &zp, 0.0).unwrap();
        let am = accel_active(&p, &zm, 0.0).unwrap();
        let scale = jvp.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..n {
            let fd = (ap[i] - am[i]) / (2.0 * eps);
            assert!((fd - jvp[i]).abs() < 1e-6 * scale, "{i}: {fd} {}", jvp[i]);
        }
    }

    #[test]
    fn collapse_is_reported() {
        let p = pencil(1.3, 129);
        let mut s = PerturbationState::equilibrium(&p);
        s.zeta[5] = -1.5;
        assert!(matches!(
            nonlinear_accel(&s, &p),
            Err(Error::StatePastVacuumCollapse { .. })
        ));
    }

    #[test]
    fn origin_derivative_vanishes() {
        let p = pencil(1.3, 129);
        let z: Vec<f64> = p.grid[1..p.grid.len() - 1]
            .iter()
            .map(|r| 1e-3 * (1.0 - r * r))
            .collect();
        let s = PerturbationState::from_active(&p, 0.0, &z, &z);
        assert_eq!(s.zeta_r(&p.grid)[0], 0.0);
    }
}
