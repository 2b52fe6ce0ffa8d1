//! Quadrature rules shared by the profile, the energy functionals and the
//! Hardy checks.

use std::f64::consts::PI;

use crate::linalg::SymTridiagonal;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Dual-cell widths of the composite trapezoid rule on a nonuniform grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut wts = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = grid[k + 1] - grid[k];
        wts[k] += 0.5 * h;
        wts[k + 1] += 0.5 * h;
    }
    wts
}

/// `∫ (a + b t)^p (f0 + (f1 - f0) t) dt` over t in [0, 1], for `a, a + b >= 0`
/// and `p > -1`. Exact for a linear base and a linear factor.
pub fn product_cell(a: f64, b: f64, p: f64, f0: f64, f1: f64) -> f64 {
    let u0 = a;
    let u1 = a + b;
    let scale = u0.max(u1);
    if scale <= 0.0 {
        return 0.0;
    }
    if b.abs() < 0.05 * scale {
        // smooth base: 8-point Gauss is exact to rounding here
        let gl = gauss8();
        return gl.integrate(0.0, 1.0, |t| {
            (a + b * t).max(0.0).powf(p) * (f0 + (f1 - f0) * t)
        });
    }
    let pow = |u: f64, q: f64| if u <= 0.0 { 0.0 } else { u.powf(q) };
    let i0 = (pow(u1, p + 1.0) - pow(u0, p + 1.0)) / ((p + 1.0) * b);
    let i1 = ((pow(u1, p + 2.0) - pow(u0, p + 2.0)) / (p + 2.0)
        - a * (pow(u1, p + 1.0) - pow(u0, p + 1.0)) / (p + 1.0))
        / (b * b);
    f0 * i0 + (f1 - f0) * i1
}

/// Gauss-Jacobi rule for `∫_0^1 t^p f(t) dt`, `p > -1`, by Golub-Welsch on
/// the Jacobi matrix of the weight `(1 + x)^p` on [-1, 1].
pub fn gauss_jacobi(n: usize, p: f64) -> GaussLegendre {
    assert!(n >= 1 && p > -1.0);
    let diag: Vec<f64> = (0..n)
        .map(|k| {
            let s = 2.0 * k as f64 + p;
            if k == 0 {
                p / (p + 2.0)
            } else {
                p * p / (s * (s + 2.0))
            }
        })
        .collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            let s = 2.0 * k + p;
            (4.0 * k * k * (k + p) * (k + p) / (s * s * (s + 1.0) * (s - 1.0))).sqrt()
        })
        .collect();
    let jm = SymTridiagonal::new(diag, off);
    let mu0 = 2f64.powf(p + 1.0) / (p + 1.0);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        let x = jm.eigenvalue(k);
        let v = jm
            .inverse_iteration(x, 50)
            .expect("Jacobi matrix eigenvectors converge");
        nodes.push(0.5 * (1.0 + x));
        weights.push(mu0 * v[0] * v[0] * 2f64.powf(-p - 1.0));
    }
    GaussLegendre { nodes, weights }
}

impl GaussLegendre {
    /// Apply a rule whose nodes and weights already live on [0, 1], scaled to [a, a + len].
    pub fn integrate_unit(&self, a: f64, len: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(a + len * t))
            .sum::<f64>()
            * len
    }
}

pub(crate) fn gauss8() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(8))
}

pub(crate) fn gauss12() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 11 monomial on [0, 2]
        let v = gl.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
    }

    #[test]
    fn product_rule_handles_integrable_singularity() {
        // ∫_0^1 (1 - t)^(-0.9) dt = 10
        let v = product_cell(1.0, -1.0, -0.9, 1.0, 1.0);
        assert!((v - 10.0).abs() < 1e-12);
        // ∫_0^1 t^0.5 * t dt = 2/5
        let v = product_cell(0.0, 1.0, 0.5, 0.0, 1.0);
        assert!((v - 0.4).abs() < 1e-14);
        // nearly constant base goes through the Gauss branch
        let v = product_cell(2.0, 0.01, 1.5, 1.0, 1.0);
        let exact = (2.01f64.powf(2.5) - 2f64.powf(2.5)) / (2.5 * 0.01);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn gauss_jacobi_integrates_weighted_monomials() {
        for p in [-0.5, 0.0, 0.7, 2.3] {
            let gj = gauss_jacobi(10, p);
            for m in 0..19 {
                let v = gj.integrate_unit(0.0, 1.0, |t| t.powi(m));
                let exact = 1.0 / (p + m as f64 + 1.0);
                assert!((v - exact).abs() < 1e-13, "p={p} m={m} {v} {exact}");
            }
        }
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let g = [0.0, 0.1, 0.3, 0.35, 1.0];
        let s: f64 = trapezoid_weights(&g).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
