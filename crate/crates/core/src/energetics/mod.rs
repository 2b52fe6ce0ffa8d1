//! Weighted norms, the instant-energy hierarchy, growth-rate fits and the
//! Duhamel remainder.
//!
//! Quadrature conventions follow the discrete model: undifferentiated
//! quantities are summed on nodes with trapezoid widths, first (and third)
//! derivatives live on cells with midpoint weights, second derivatives on
//! nodes again. The outermost cell is the vacuum cell and carries no weight.

pub mod hardy;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{
    smallness_monitor, time_derivatives, Dynamics, PerturbationState, SmallnessReport,
};
use crate::polytrope::LaneEmdenProfile;
use crate::quadrature::trapezoid_weights;
use crate::spectral::{cell_r4, OperatorPencil};

/// Highest temporal order with analytic time derivatives.
pub const MAX_TEMPORAL_ORDER: usize = 2;

/// `Σ_j w_j^a r_j⁴ f_j² Δr_j`.
fn node_sum(f: &[f64], grid: &[f64], w: &[f64], a: f64) -> f64 {
    let dr = trapezoid_weights(grid);
    (0..grid.len())
        .map(|j| {
            let wa = if a == 0.0 { 1.0 } else { w[j].max(0.0).powf(a) };
            wa * grid[j].powi(4) * f[j] * f[j] * dr[j]
        })
        .sum()
}

/// `‖f‖_X` with weight `w^a r⁴`.
pub fn weighted_norm_x(f: &[f64], profile: &LaneEmdenProfile, a: f64) -> f64 {
    node_sum(f, &profile.grid, &profile.w, a).sqrt()
}

/// `‖f‖_Y = (γ̃ ∫ w^(1+α) r⁴ f_r²)^(1/2)`.
pub fn weighted_norm_y(f: &[f64], profile: &LaneEmdenProfile) -> f64 {
    (profile.gamma_tilde() * derivative_norm_sq(f, profile, 1, 1.0 + profile.alpha())).sqrt()
}

fn first_differences(f: &[f64], grid: &[f64]) -> Vec<f64> {
    (0..grid.len() - 1)
        .map(|k| (f[k + 1] - f[k]) / (grid[k + 1] - grid[k]))
        .collect()
}

/// Second differences at nodes `1..N-1`, and at the origin from the even fit.
fn second_differences(f: &[f64], grid: &[f64]) -> Vec<f64> {
    let d1 = first_differences(f, grid);
    let n = grid.len();
    let mut d2 = vec![0.0; n];
    d2[0] = 2.0 * (f[1] - f[0]) / (grid[1] * grid[1]);
    for j in 1..n - 1 {
        d2[j] = 2.0 * (d1[j] - d1[j - 1]) / (grid[j + 1] - grid[j - 1]);
    }
    d2
}

/// `∫ w^a r⁴ |∂_r^order f|²` for `order ≤ 3`.
pub fn derivative_norm_sq(f: &[f64], profile: &LaneEmdenProfile, order: usize, a: f64) -> f64 {
    let g = &profile.grid;
    let n = g.len();
    let cell_weight =
        |k: usize| profile.w_half[k].powf(a) * cell_r4(g[k], g[k + 1]) * (g[k + 1] - g[k]);
    match order {
        0 => node_sum(f, g, &profile.w, a),
        1 => {
            let d1 = first_differences(f, g);
            (0..n - 2).map(|k| cell_weight(k) * d1[k] * d1[k]).sum()
        }
        2 => {
            let d2 = second_differences(f, g);
            let dr = trapezoid_weights(g);
            (1..n - 1)
                .map(|j| profile.w[j].powf(a) * g[j].powi(4) * d2[j] * d2[j] * dr[j])
                .sum()
        }
        3 => {
            let d2 = second_differences(f, g);
            (1..n - 2)
                .map(|k| {
                    let d3 = (d2[k + 1] - d2[k]) / (g[k + 1] - g[k]);
                    cell_weight(k) * d3 * d3
                })
                .sum()
        }
        _ => panic!("spatial derivative order {order} not supported"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    #[serde(rename = "E0")]
    pub e0: f64,
    /// `E^j` for `j = 1..=jmax`.
    #[serde(rename = "Ej")]
    pub ej: Vec<f64>,
    /// `E^{j,k}` for `j = 1..=jmax`, `k = 0..=j`.
    #[serde(rename = "Ejk")]
    pub ejk: Vec<Vec<f64>>,
    /// `𝔈^i` for `i = 1..=jmax`.
    #[serde(rename = "frakE")]
    pub frak_e: Vec<f64>,
    pub xnorm: f64,
    pub ynorm: f64,
    pub theta_measure: SmallnessReport,
}

impl EnergyReport {
    /// `E⁰ + Σ_j E^j`.
    pub fn total_instant(&self) -> f64 {
        self.e0 + self.ej.iter().sum::<f64>()
    }

    /// `E⁰ + Σ_j Σ_k E^{j,k}`.
    pub fn total_mixed(&self) -> f64 {
        self.e0 + self.ejk.iter().flatten().sum::<f64>()
    }
}

/// `E⁰ = ‖ζ_t‖²_X + ‖ζ‖²_Y + ‖ζ‖²_X`.
pub fn zeroth_energy(state: &PerturbationState, profile: &LaneEmdenProfile) -> f64 {
    let a = profile.alpha();
    let x = weighted_norm_x(&state.zeta, profile, a);
    let xt = weighted_norm_x(&state.zeta_t, profile, a);
    let y = weighted_norm_y(&state.zeta, profile);
    xt * xt + y * y + x * x
}

fn mixed_energy(profile: &LaneEmdenProfile, d: &[Vec<f64>], j: usize, k: usize) -> f64 {
    // d[q] = ∂_t^q ζ
    let a = profile.alpha();
    let gt = profile.gamma_tilde();
    let vel = &d[j - k + 1];
    let pos = &d[j - k];
    derivative_norm_sq(vel, profile, k, a + k as f64)
        + gt * derivative_norm_sq(pos, profile, k + 1, 1.0 + a + k as f64)
}

pub fn instant_energy(
    state: &PerturbationState,
    profile: &LaneEmdenProfile,
    pencil: &OperatorPencil,
    dynamics: Dynamics,
    jmax: usize,
    theta1: f64,
) -> Result<EnergyReport> {
    if jmax > MAX_TEMPORAL_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: jmax,
            max: MAX_TEMPORAL_ORDER,
        });
    }
    let (acc, jerk) = time_derivatives(state, pencil, dynamics)?;
    let d = vec![state.zeta.clone(), state.zeta_t.clone(), acc, jerk];
    let e0 = zeroth_energy(state, profile);
    let ejk: Vec<Vec<f64>> = (1..=jmax)
        .map(|j| (0..=j).map(|k| mixed_energy(profile, &d, j, k)).collect())
        .collect();
    let ej = ejk.iter().map(|row| row[0]).collect();
    let frak_e = nonlinear_energy_from(state, pencil, &d, jmax);
    Ok(EnergyReport {
        e0,
        ej,
        ejk,
        frak_e,
        xnorm: weighted_norm_x(&state.zeta, profile, profile.alpha()),
        ynorm: weighted_norm_y(&state.zeta, profile),
        theta_measure: smallness_monitor(state, pencil, dynamics, theta1)?,
    })
}

/// `𝔈^i` for `i = 1..=imax` along the nonlinear flow.
pub fn nonlinear_energy(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    imax: usize,
) -> Result<Vec<f64>> {
    if imax > MAX_TEMPORAL_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: imax,
            max: MAX_TEMPORAL_ORDER,
        });
    }
    let (acc, jerk) = time_derivatives(state, pencil, Dynamics::Nonlinear)?;
    let d = vec![state.zeta.clone(), state.zeta_t.clone(), acc, jerk];
    Ok(nonlinear_energy_from(state, pencil, &d, imax))
}

fn nonlinear_energy_from(
    state: &PerturbationState,
    pencil: &OperatorPencil,
    d: &[Vec<f64>],
    imax: usize,
) -> Vec<f64> {
    let n = pencil.grid.len();
    let (z, v, a, j3) = (&d[0], &d[1], &d[2], &d[3]);
    // φ = ξ² ζ_t and its first two time derivatives
    let mut phi = vec![vec![0.0; n]; 3];
    for i in 0..n {
        let xi = 1.0 + z[i];
        phi[0][i] = xi * xi * v[i];
        phi[1][i] = 2.0 * xi * v[i] * v[i] + xi * xi * a[i];
        phi[2][i] = 2.0 * v[i].powi(3) + 6.0 * xi * v[i] * a[i] + xi * xi * j3[i];
    }
    let jac = state.jacobian(pencil);
    let alpha = pencil.alpha;
    let gt = pencil.gamma_tilde;
    let g = &pencil.grid;
    let dr = &pencil.quadrature_weights;
    (1..=imax)
        .map(|i| {
            let dphi = &phi[i];
            let psi = &phi[i - 1];
            let kinetic: f64 = (0..n)
                .map(|j| {
                    pencil.w[j].powf(alpha) * g[j].powi(4) * dphi[j] * dphi[j]
                        / (1.0 + z[j]).powi(4)
                        * dr[j]
                })
                .sum();
            let flux: f64 = jac
                .iter()
                .enumerate()
                .map(|(k, jk)| {
                    let diff = g[k + 1].powi(3) * psi[k + 1] - g[k].powi(3) * psi[k];
                    let vol = pencil.cell_volume[k];
                    pencil.cell_pressure[k]
                        * jk.powf(-(1.0 + 2.0 * alpha) / alpha)
                        * 3.0
                        * diff
                        * diff
                        / vol
                })
                .sum();
            kinetic + gt * flux
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
    pub n_samples: usize,
    /// First time `√E⁰ ≥ θ₀`, by linear interpolation between samples.
    pub escape_time: Option<f64>,
    /// `(1/√μ₀) ln(2θ₀/δ)`.
    pub predicted_escape: f64,
}

pub const MIN_FIT_SAMPLES: usize = 32;

/// Least-squares slope of `ln √E⁰` against `t` where `3δ ≤ √E⁰ ≤ θ₀/3`.
pub fn growth_fit(
    times: &[f64],
    sqrt_e0: &[f64],
    delta: f64,
    theta0: f64,
    mu0: f64,
) -> Result<GrowthFit> {
    let lo = 3.0 * delta;
    let hi = theta0 / 3.0;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(sqrt_e0)
        .filter(|(_, a)| **a >= lo && **a <= hi)
        .map(|(t, a)| (*t, a.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooSmall {
            found: pts.len(),
            required: MIN_FIT_SAMPLES,
        });
    }
    let (rate, intercept) = crate::polytrope::least_squares_slope(&pts);
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - rate * p.0).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(GrowthFit {
        rate,
        window: [pts[0].0, pts[pts.len() - 1].0],
        r_squared,
        n_samples: pts.len(),
        escape_time: escape_time(times, sqrt_e0, theta0),
        predicted_escape: predicted_escape(delta, theta0, mu0),
    })
}

/// First upward crossing of `theta0`, linearly interpolated between samples.
pub fn escape_time(times: &[f64], sqrt_e0: &[f64], theta0: f64) -> Option<f64> {
    (1..times.len()).find_map(|i| {
        if sqrt_e0[i] >= theta0 && sqrt_e0[i - 1] < theta0 {
            let f = (theta0 - sqrt_e0[i - 1]) / (sqrt_e0[i] - sqrt_e0[i - 1]);
            Some(times[i - 1] + f * (times[i] - times[i - 1]))
        } else {
            None
        }
    })
}

/// `(1/√μ₀) ln(2θ₀/δ)`.
pub fn predicted_escape(delta: f64, theta0: f64, mu0: f64) -> f64 {
    (2.0 * theta0 / delta).ln() / mu0.sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DuhamelPoint {
    pub t: f64,
    /// `‖ζ_nl - ζ_lin‖₀`.
    pub remainder: f64,
    /// `remainder / (δ e^{√μ₀ t})²`.
    pub ratio: f64,
    /// `δ e^{√μ₀ t}`.
    pub linear_amplitude: f64,
}

/// `‖·‖₀² = ‖Ψ‖²_X + ‖Ψ_t‖²_X + ‖Ψ‖²_Y` of the difference of paired runs.
pub fn duhamel_remainder(
    nonlinear: &[PerturbationState],
    linear: &[PerturbationState],
    profile: &LaneEmdenProfile,
    delta: f64,
    rate: f64,
) -> Result<Vec<DuhamelPoint>> {
    if nonlinear.len() != linear.len() {
        return Err(Error::GridMismatch);
    }
    nonlinear
        .iter()
        .zip(linear)
        .map(|(a, b)| {
            if a.zeta.len() != profile.grid.len()
                || b.zeta.len() != a.zeta.len()
                || (a.t - b.t).abs() > 1e-12 * a.t.abs().max(1.0)
            {
                return Err(Error::GridMismatch);
            }
            let dz: Vec<f64> = a.zeta.iter().zip(&b.zeta).map(|(x, y)| x - y).collect();
            let dv: Vec<f64> = a.zeta_t.iter().zip(&b.zeta_t).map(|(x, y)| x - y).collect();
            let diff = PerturbationState {
                t: a.t,
                zeta: dz,
                zeta_t: dv,
            };
            let remainder = zeroth_energy(&diff, profile).sqrt();
            let linear_amplitude = delta * (rate * a.t).exp();
            Ok(DuhamelPoint {
                t: a.t,
                remainder,
                ratio: remainder / (linear_amplitude * linear_amplitude),
                linear_amplitude,
            })
        })
        .collect()
}
