//! Symmetric tridiagonal matrices: Sturm-sequence bisection and inverse iteration.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.off[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - rad);
            hi = hi.max(self.diag[i] + rad);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn sturm_count(&self, x: f64) -> usize {
        let (lo, hi) = self.gershgorin();
        let tiny = f64::MIN_POSITIVE.sqrt() * (hi - lo).abs().max(1.0);
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let e2 = if i == 0 {
                0.0
            } else {
                self.off[i - 1] * self.off[i - 1]
            };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let span = (hi - lo).abs().max(f64::MIN_POSITIVE);
        lo -= 1e-12 * span;
        hi += 1e-12 * span;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve `(A - σ I) x = b` by the Thomas algorithm; vanishing pivots are
    /// nudged so the shifted solve near an eigenvalue still goes through.
    pub fn solve_shifted(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let (glo, ghi) = self.gershgorin();
        let guard = f64::EPSILON * (ghi - glo).abs().max(f64::MIN_POSITIVE);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0] - sigma;
        if piv.abs() < guard {
            piv = guard;
        }
        if n > 1 {
            c[0] = self.off[0] / piv;
        }
        d[0] = b[0] / piv;
        for i in 1..n {
            let mut piv = self.diag[i] - sigma - self.off[i - 1] * c[i - 1];
            if piv.abs() < guard {
                piv = guard.copysign(piv);
                if piv == 0.0 {
                    piv = guard;
                }
            }
            if i + 1 < n {
                c[i] = self.off[i] / piv;
            }
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / piv;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }

    /// Eigenvector for an eigenvalue estimate `sigma`, from a deterministic
    /// all-ones start. Returned with unit Euclidean norm.
    pub fn inverse_iteration(&self, sigma: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.len();
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        for _ in 0..max_iter {
            let mut y = self.solve_shifted(sigma, &x);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::ConvergenceFailure(
                    "inverse iteration broke down".into(),
                ));
            }
            let dot: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
            let s = if dot < 0.0 { -1.0 } else { 1.0 } / norm;
            y.iter_mut().for_each(|v| *v *= s);
            let change = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = y;
            if change < 1e-14 {
                return Ok(x);
            }
        }
        // accept the iterate if its residual is already at rounding level
        let ax = self.matvec(&x);
        let rq: f64 = ax.iter().zip(&x).map(|(a, b)| a * b).sum();
        let res = ax
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - rq * b).abs())
            .fold(0.0, f64::max);
        let (lo, hi) = self.gershgorin();
        if res <= 1e-10 * (hi - lo).abs() {
            Ok(x)
        } else {
            Err(Error::ConvergenceFailure(format!(
                "inverse iteration did not converge in {max_iter} iterations (residual {res:e})"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn bisection_matches_dirichlet_laplacian() {
        let n = 50;
        let a = laplacian(n);
        for k in [0, 1, 10, 49] {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((a.eigenvalue(k) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn inverse_iteration_recovers_sine_mode() {
        let n = 40;
        let a = laplacian(n);
        let lam = a.eigenvalue(0);
        let v = a.inverse_iteration(lam, 50).unwrap();
        let h = std::f64::consts::PI / (n + 1) as f64;
        let exact: Vec<f64> = (1..=n).map(|i| (i as f64 * h).sin()).collect();
        let en = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (x, e) in v.iter().zip(&exact) {
            assert!((x - e / en).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_count_is_monotone() {
        let a = SymTridiagonal::new(vec![1.0, -3.0, 4.0, 0.5], vec![0.3, -2.0, 0.1]);
        let mut prev = 0;
        for i in -100..100 {
            let c = a.sturm_count(i as f64 * 0.1);
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(prev, 4);
    }
}
