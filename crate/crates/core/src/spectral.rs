//! The linearized radial operator and its largest growing mode.
//!
//! Unknowns live on the active nodes `r_1 .. r_{N-1}`; the origin and the
//! vacuum node carry no equation. Cell `k` spans `[r_k, r_{k+1}]`. The first
//! cell is the central ball, and the outermost cell `[r_{N-1}, R]` is treated
//! as empty (its pressure weight is set to zero).
//!
//! The stiffness matrix is the Hessian at equilibrium of the discrete
//! potential energy used by [`crate::evolution`]:
//!
//! ```text
//! V(ζ) = Σ_k W_k (Δr³_k / 3) E(J_k) + Σ_j g_j G(ζ_j)
//! ```
//!
//! with `W_k = w(r_{k+1/2})^(1+α)`, `Δr³_k = r_{k+1}³ - r_k³`,
//! `J_k = Δ(r³ξ³)_k / Δr³_k` and `g_j = r_j³ (W_{j-1/2} - W_{j+1/2})`, the
//! discrete counterpart of `w^α r⁴ Φ Δr`. Expanding the Hessian gives flux
//! coefficients `γ̃ F̃_k / h_k` with `F̃_k = 3 W_k r_k³ r_{k+1}³ h_k / Δr³_k`
//! (a cell average of `w^(1+α) r⁴`) and a zeroth-order term `(3γ̃ - 4) g_j`.

use serde::Serialize;

use crate::energetics::{weighted_norm_x, weighted_norm_y};
use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;
use crate::polytrope::LaneEmdenProfile;
use crate::quadrature::{product_cell, trapezoid_weights};

/// Cell average of `r⁴` consistent with the discrete Jacobian: `3 r₀³ r₁³ h / (r₁³ - r₀³)`.
pub(crate) fn cell_r4(r0: f64, r1: f64) -> f64 {
    let a = r0 * r0 * r0;
    let b = r1 * r1 * r1;
    3.0 * a * b * (r1 - r0) / (b - a)
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorPencil {
    /// Full profile grid `r_0 .. r_N`.
    pub grid: Vec<f64>,
    /// Equilibrium `w` at the nodes and at cell midpoints.
    pub w: Vec<f64>,
    pub w_half: Vec<f64>,
    pub alpha: f64,
    pub gamma_tilde: f64,
    /// `4 - 3γ̃`, formed as `(α - 3)/α` so that it vanishes exactly at α = 3.
    pub zeroth_coefficient: f64,
    /// `W_k` per cell; the vacuum cell holds zero.
    pub cell_pressure: Vec<f64>,
    /// `r_{k+1}³ - r_k³` per cell.
    pub cell_volume: Vec<f64>,
    pub cell_width: Vec<f64>,
    /// `F̃_k = W_k · cell_r4`.
    pub cell_flux: Vec<f64>,
    /// `g_j` on active nodes.
    pub gravity: Vec<f64>,
    /// `m_j = w_j^α r_j⁴ Δr_j` on active nodes.
    pub mass_weights: Vec<f64>,
    /// Trapezoid dual widths `Δr_j` on the full grid.
    pub quadrature_weights: Vec<f64>,
    /// Hessian of the discrete potential, i.e. `-L` on active nodes.
    pub stiffness: SymTridiagonal,
}

pub fn assemble_pencil(profile: &LaneEmdenProfile) -> OperatorPencil {
    let grid = profile.grid.clone();
    let n = grid.len();
    let cells = n - 1;
    let alpha = profile.alpha();
    let gamma_tilde = profile.gamma_tilde();
    let zeroth = (alpha - 3.0) / alpha;

    let mut cell_pressure: Vec<f64> = profile.w_half.iter().map(|w| w.powf(1.0 + alpha)).collect();
    cell_pressure[cells - 1] = 0.0;
    let cell_volume: Vec<f64> = (0..cells)
        .map(|k| grid[k + 1].powi(3) - grid[k].powi(3))
        .collect();
    let cell_width: Vec<f64> = (0..cells).map(|k| grid[k + 1] - grid[k]).collect();
    let cell_flux: Vec<f64> = (0..cells)
        .map(|k| cell_pressure[k] * cell_r4(grid[k], grid[k + 1]))
        .collect();

    let quadrature_weights = trapezoid_weights(&grid);
    let active = 1..n - 1;
    let gravity: Vec<f64> = active
        .clone()
        .map(|j| grid[j].powi(3) * (cell_pressure[j - 1] - cell_pressure[j]))
        .collect();
    let mass_weights: Vec<f64> = active
        .clone()
        .map(|j| profile.w[j].powf(alpha) * grid[j].powi(4) * quadrature_weights[j])
        .collect();

    // zeroth-order part (3γ̃ - 4) g_j = -zeroth · g_j
    let diag: Vec<f64> = active
        .clone()
        .enumerate()
        .map(|(i, j)| {
            gamma_tilde * (cell_flux[j - 1] / cell_width[j - 1] + cell_flux[j] / cell_width[j])
                - zeroth * gravity[i]
        })
        .collect();
    let off: Vec<f64> = (2..n - 1)
        .map(|j| -gamma_tilde * cell_flux[j - 1] / cell_width[j - 1])
        .collect();

    OperatorPencil {
        grid,
        w: profile.w.clone(),
        w_half: profile.w_half.clone(),
        alpha,
        gamma_tilde,
        zeroth_coefficient: zeroth,
        cell_pressure,
        cell_volume,
        cell_width,
        cell_flux,
        gravity,
        mass_weights,
        quadrature_weights,
        stiffness: SymTridiagonal::new(diag, off),
    }
}

impl OperatorPencil {
    pub fn n_active(&self) -> usize {
        self.mass_weights.len()
    }

    /// Active-node values of a full-grid vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full[1..full.len() - 1].to_vec()
    }

    /// Full-grid vector from active values. The origin value comes from the
    /// even fit `a + b r²` through the first two nodes, the vacuum value from
    /// linear extrapolation.
    pub fn extend(&self, active: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let n = g.len();
        let mut out = Vec::with_capacity(n);
        let (r1, r2) = (g[1], g[2]);
        let b = (active[1] - active[0]) / (r2 * r2 - r1 * r1);
        out.push(active[0] - b * r1 * r1);
        out.extend_from_slice(active);
        let m = active.len();
        let slope = (active[m - 1] - active[m - 2]) / (g[n - 2] - g[n - 3]);
        out.push(active[m - 1] + slope * (g[n - 1] - g[n - 2]));
        out
    }

    /// `Q(φ) = -φᵀ S φ`.
    pub fn quadratic_form(&self, active: &[f64]) -> f64 {
        -self.stiffness.bilinear(active, active)
    }

    /// `I(φ) = Σ m_j φ_j²`.
    pub fn mass_form(&self, active: &[f64]) -> f64 {
        active
            .iter()
            .zip(&self.mass_weights)
            .map(|(p, m)| m * p * p)
            .sum()
    }

    /// `Q(1) = (4 - 3γ̃) Σ_k W_k Δr³_k`, the summed-by-parts value of the
    /// zeroth-order term on a constant.
    pub fn constant_form(&self) -> f64 {
        self.zeroth_coefficient
            * self
                .cell_pressure
                .iter()
                .zip(&self.cell_volume)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    /// Reference magnitude of the quadratic form per unit mass, `max g_j / m_j`.
    pub fn form_scale(&self) -> f64 {
        self.gravity
            .iter()
            .zip(&self.mass_weights)
            .map(|(g, m)| g / m)
            .fold(0.0, f64::max)
    }

    /// `10 N⁻² ·` [`Self::form_scale`]: below this `|μ₀|` counts as marginal.
    pub fn marginal_tolerance(&self) -> f64 {
        let n = self.grid.len() as f64;
        10.0 * self.form_scale() / (n * n)
    }

    /// `(S φ)_j + μ m_j φ_j`, per unit length, on active nodes.
    pub fn residual(&self, active: &[f64], mu: f64) -> Vec<f64> {
        let s = self.stiffness.matvec(active);
        (0..active.len())
            .map(|i| {
                (s[i] + mu * self.mass_weights[i] * active[i]) / self.quadrature_weights[i + 1]
            })
            .collect()
    }

    /// Symmetric standard form `M^{-1/2} S M^{-1/2}`.
    pub fn scaled(&self) -> SymTridiagonal {
        let m = &self.mass_weights;
        let s = &self.stiffness;
        let diag = (0..m.len()).map(|i| s.diag[i] / m[i]).collect();
        let off = (0..m.len() - 1)
            .map(|i| s.off[i] / (m[i] * m[i + 1]).sqrt())
            .collect();
        SymTridiagonal::new(diag, off)
    }

    /// Largest eigenvalue of `M^{-1} S`, the stiffest mode; bounds explicit time steps.
    pub fn stiffest_eigenvalue(&self) -> f64 {
        let t = self.scaled();
        t.eigenvalue(t.len() - 1)
    }
}

/// `Q(φ)/I(φ)` for a full-grid sample vector.
pub fn rayleigh_quotient(pencil: &OperatorPencil, phi: &[f64]) -> Result<f64> {
    let active = pencil.restrict(phi);
    let i = pencil.mass_form(&active);
    if i == 0.0 || active.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(pencil.quadratic_form(&active) / i)
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowingMode {
    pub gamma: f64,
    /// Largest eigenvalue `μ₀` of `L φ = μ w^α r⁴ φ`.
    pub mu0: f64,
    /// `√max(μ₀, 0)`.
    pub rate: f64,
    /// Full-grid samples, normalized and with `φ₀(0) > 0`.
    pub phi0: Vec<f64>,
    pub residual: f64,
    /// `max m_j / Δr_j`, the scale the residual is measured against.
    pub residual_scale: f64,
    pub norm_x: f64,
    pub norm_y: f64,
    /// Distance to the next eigenvalue of the pencil.
    pub gap: f64,
    pub near_degenerate: bool,
}

impl GrowingMode {
    pub fn normalization(&self) -> f64 {
        (1.0 + self.mu0) * self.norm_x * self.norm_x + self.norm_y * self.norm_y
    }
}

pub fn largest_eigenpair(
    profile: &LaneEmdenProfile,
    pencil: &OperatorPencil,
) -> Result<GrowingMode> {
    let t = pencil.scaled();
    let lam0 = t.eigenvalue(0);
    let lam1 = t.eigenvalue(1);
    let v = t.inverse_iteration(lam0, 100)?;
    let rq = t.bilinear(&v, &v);
    let mu0 = -rq;
    let mut active: Vec<f64> = v
        .iter()
        .zip(&pencil.mass_weights)
        .map(|(x, m)| x / m.sqrt())
        .collect();

    let full = pencil.extend(&active);
    let nx = weighted_norm_x(&full, profile, profile.alpha());
    let ny = weighted_norm_y(&full, profile);
    let mut total = (1.0 + mu0) * nx * nx + ny * ny;
    if !(total > 0.0) {
        total = nx * nx + ny * ny;
    }
    let mut scale = 1.0 / total.sqrt();
    if full[0] < 0.0 {
        scale = -scale;
    }
    active.iter_mut().for_each(|x| *x *= scale);
    let phi0 = pencil.extend(&active);
    let norm_x = weighted_norm_x(&phi0, profile, profile.alpha());
    let norm_y = weighted_norm_y(&phi0, profile);

    let residual = pencil
        .residual(&active, mu0)
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()));
    let residual_scale = pencil
        .mass_weights
        .iter()
        .zip(&pencil.quadrature_weights[1..])
        .map(|(m, d)| m / d)
        .fold(0.0, f64::max);
    let gap = lam1 - lam0;
    Ok(GrowingMode {
        gamma: profile.config.gamma,
        mu0,
        rate: mu0.max(0.0).sqrt(),
        phi0,
        residual,
        residual_scale,
        norm_x,
        norm_y,
        gap,
        near_degenerate: gap < 1e-8,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeRegularityReport {
    /// Linear coefficient of a least-squares quadratic through the first
    /// active nodes, i.e. an estimate of `φ₀'(0)`.
    pub slope_at_origin: f64,
    /// `(β, ∫ w^(α-β) r⁴ φ₀²)` for `β = 0..=⌊α⌋`.
    pub value_integrals: Vec<(f64, f64)>,
    /// `(β, ∫ w^(1+α-β) r⁴ φ₀'²)`.
    pub derivative_integrals: Vec<(f64, f64)>,
    /// `(z, ∫ w^(z-2) r⁴ φ₀²)` for `z ∈ {1.1, 1.5, 2}`.
    pub singular_integrals: Vec<(f64, f64)>,
}

impl ModeRegularityReport {
    /// Every reported integral, in a fixed order.
    pub fn all_integrals(&self) -> Vec<f64> {
        self.value_integrals
            .iter()
            .chain(&self.derivative_integrals)
            .chain(&self.singular_integrals)
            .map(|(_, v)| *v)
            .collect()
    }
}

/// `∫ w^p f dr` with `w` linear on each cell and `f` given at nodes, exact
/// for the power singularity at the vacuum node.
pub(crate) fn weighted_integral(profile: &LaneEmdenProfile, p: f64, f: &[f64]) -> f64 {
    let g = &profile.grid;
    let w = &profile.w;
    (0..g.len() - 1)
        .map(|k| (g[k + 1] - g[k]) * product_cell(w[k], w[k + 1] - w[k], p, f[k], f[k + 1]))
        .sum()
}

/// `∫ w^p r⁴ (f')² dr` with `f'` constant on each cell.
pub(crate) fn weighted_derivative_integral(profile: &LaneEmdenProfile, p: f64, f: &[f64]) -> f64 {
    let g = &profile.grid;
    let w = &profile.w;
    (0..g.len() - 1)
        .map(|k| {
            let h = g[k + 1] - g[k];
            let d = (f[k + 1] - f[k]) / h;
            let d2 = d * d;
            h * product_cell(
                w[k],
                w[k + 1] - w[k],
                p,
                g[k].powi(4) * d2,
                g[k + 1].powi(4) * d2,
            )
        })
        .sum()
}

pub fn mode_regularity_report(
    mode: &GrowingMode,
    profile: &LaneEmdenProfile,
) -> ModeRegularityReport {
    let g = &profile.grid;
    let phi = &mode.phi0;
    let alpha = profile.alpha();

    // least squares c0 + c1 r + c2 r² through active nodes 1..=6
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for j in 1..=6 {
        let basis = [1.0, g[j], g[j] * g[j]];
        for p in 0..3 {
            for q in 0..3 {
                a[p][q] += basis[p] * basis[q];
            }
            b[p] += basis[p] * phi[j];
        }
    }
    let slope_at_origin = solve3(a, b)[1];

    let r4phi2: Vec<f64> = g.iter().zip(phi).map(|(r, p)| r.powi(4) * p * p).collect();
    let betas: Vec<f64> = (0..=alpha.floor() as usize).map(|b| b as f64).collect();
    let value_integrals = betas
        .iter()
        .map(|&beta| (beta, weighted_integral(profile, alpha - beta, &r4phi2)))
        .collect();
    let derivative_integrals = betas
        .iter()
        .map(|&beta| {
            (
                beta,
                weighted_derivative_integral(profile, 1.0 + alpha - beta, phi),
            )
        })
        .collect();
    let singular_integrals = [1.1, 1.5, 2.0]
        .iter()
        .map(|&z| (z, weighted_integral(profile, z - 2.0, &r4phi2)))
        .collect();
    ModeRegularityReport {
        slope_at_origin,
        value_integrals,
        derivative_integrals,
        singular_integrals,
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        let s: f64 = (c + 1..3).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytrope::{solve_lane_emden, PolytropeConfig};

    fn setup(gamma: f64, n: usize) -> (LaneEmdenProfile, OperatorPencil) {
        let p = solve_lane_emden(&PolytropeConfig::new(gamma).unwrap(), n).unwrap();
        let pencil = assemble_pencil(&p);
        (p, pencil)
    }

    #[test]
    fn stiffness_is_symmetric_by_construction() {
        let (_, pencil) = setup(1.3, 257);
        let s = &pencil.stiffness;
        for i in 0..s.len() - 1 {
            assert_eq!(s.get(i, i + 1), s.get(i + 1, i));
        }
    }

    #[test]
    fn marginal_exponent_has_no_zeroth_order_term() {
        let (_, pencil) = setup(4.0 / 3.0, 257);
        assert_eq!(pencil.zeroth_coefficient, 0.0);
        let ones = vec![1.0; pencil.n_active()];
        let s1 = pencil.stiffness.matvec(&ones);
        let scale = pencil
            .stiffness
            .diag
            .iter()
            .fold(0.0f64, |a, d| a.max(d.abs()));
        for v in s1 {
            assert!(v.abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn constant_quadratic_form_matches_summed_gravity() {
        let (_, pencil) = setup(1.25, 257);
        let ones = vec![1.0; pencil.n_active()];
        let q = pencil.quadratic_form(&ones);
        let c = pencil.constant_form();
        assert!(c > 0.0);
        assert!(((q - c) / c).abs() < 1e-12, "{q} {c}");
    }

    #[test]
    fn rayleigh_quotient_rejects_zero() {
        let (p, pencil) = setup(1.3, 129);
        let z = vec![0.0; p.n_nodes()];
        assert!(matches!(
            rayleigh_quotient(&pencil, &z),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn extension_is_even_at_origin() {
        let (p, pencil) = setup(1.3, 129);
        let f: Vec<f64> = p.grid[1..p.n_nodes() - 1]
            .iter()
            .map(|r| 2.0 - r * r)
            .collect();
        let full = pencil.extend(&f);
        assert!((full[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn growing_mode_normalized_and_signed() {
        let (p, pencil) = setup(1.3, 257);
        let mode = largest_eigenpair(&p, &pencil).unwrap();
        assert!(mode.mu0 > 0.0);
        assert!(mode.phi0[0] > 0.0);
        assert!((mode.normalization() - 1.0).abs() < 1e-10);
        assert!(!mode.near_degenerate);
    }
}
