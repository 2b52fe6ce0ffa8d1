//! Empirical Hardy-inequality ratios on the profile's weighted spaces.
//!
//! Test functions are passed as closures returning `(v, v')`, and integrals
//! are evaluated panel by panel on the profile mesh with Gauss rules, so
//! polynomial test functions are integrated exactly (up to the interpolated
//! weight `w`). The panel touching the vacuum radius uses a Gauss-Jacobi rule
//! for the power singularity of `w^(a-2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polytrope::LaneEmdenProfile;
use crate::quadrature::{gauss12, gauss_jacobi};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyRatio {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, with `0/0` reported as 0.
    pub ratio: f64,
}

impl HardyRatio {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            lhs / rhs
        };
        Self { lhs, rhs, ratio }
    }
}

/// Sorted panel breakpoints: the mesh nodes inside `[a, b]` plus `extra`.
fn panels(grid: &[f64], a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = grid.iter().copied().filter(|r| *r > a && *r < b).collect();
    pts.push(a);
    pts.push(b);
    pts.extend(extra.iter().copied().filter(|r| *r > a && *r < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn integrate_panels(pts: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
    let gl = gauss12();
    pts.windows(2)
        .map(|p| gl.integrate(p[0], p[1], &mut f))
        .sum()
}

/// Near the origin with `c = R/4`:
/// `∫_0^c r² v²` against `∫_0^{2c} r⁴ v_r² + ∫_c^{2c} r⁴ v²`.
pub fn hardy_check_origin(v: impl Fn(f64) -> (f64, f64), profile: &LaneEmdenProfile) -> HardyRatio {
    let c = profile.radius / 4.0;
    let pts = panels(&profile.grid, 0.0, 2.0 * c, &[c]);
    let inner: Vec<f64> = pts.iter().copied().filter(|r| *r <= c).collect();
    let outer: Vec<f64> = pts.iter().copied().filter(|r| *r >= c).collect();
    let lhs = integrate_panels(&inner, |r| {
        let (f, _) = v(r);
        r * r * f * f
    });
    let grad = integrate_panels(&pts, |r| {
        let (_, d) = v(r);
        r.powi(4) * d * d
    });
    let mass = integrate_panels(&outer, |r| {
        let (f, _) = v(r);
        r.powi(4) * f * f
    });
    HardyRatio::new(lhs, grad + mass)
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, C^∞ in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |x: f64| (-1.0 / x).exp();
    f(t) / (f(t) + f(1.0 - t))
}

/// Near the vacuum boundary with `c = R/8` and a cutoff `ψ` rising from 0 at
/// `R - 2c` to 1 at `R - c`: `∫ w^(a-2) (ψv)²` against
/// `∫ w^a (ψ v_r)² + ∫ w^a (ψ v)²`. Requires `a > 1`.
pub fn hardy_check_boundary(
    v: impl Fn(f64) -> (f64, f64),
    profile: &LaneEmdenProfile,
    a: f64,
) -> Result<HardyRatio> {
    if !(a > 1.0) {
        return Err(Error::ExponentOutOfRange(a));
    }
    let radius = profile.radius;
    let c = radius / 8.0;
    let psi = |r: f64| smooth_step((r - (radius - 2.0 * c)) / c);
    let last_node = profile.grid[profile.grid.len() - 2];
    let start = radius - 2.0 * c;
    let pts = panels(&profile.grid, start, last_node.max(start), &[radius - c]);
    let w_at = |r: f64| profile.interpolate(r).0;

    let lhs_smooth = integrate_panels(&pts, |r| {
        let (f, _) = v(r);
        let p = psi(r) * f;
        w_at(r).powf(a - 2.0) * p * p
    });
    let rhs_smooth = integrate_panels(&pts, |r| {
        let (f, d) = v(r);
        let ps = psi(r);
        w_at(r).powf(a) * ps * ps * (d * d + f * f)
    });

    // last cell in s = R - r, weight s^p pulled out of w^p = s^p (w/s)^p
    let len = radius - last_node.max(start);
    let edge = |p: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        let rule = gauss_jacobi(16, p);
        rule.integrate_unit(0.0, 1.0, |t| {
            let s = len * t;
            let r = radius - s;
            (w_at(r) / s).powf(p) * g(r)
        }) * len.powf(p + 1.0)
    };
    let lhs_edge = edge(a - 2.0, &|r| {
        let p = psi(r) * v(r).0;
        p * p
    });
    let rhs_edge = edge(a, &|r| {
        let (f, d) = v(r);
        let ps = psi(r);
        ps * ps * (d * d + f * f)
    });
    Ok(HardyRatio::new(
        lhs_smooth + lhs_edge,
        rhs_smooth + rhs_edge,
    ))
}

/// Trace form on `[0, 1]` for `-1 < k < 1`:
/// `∫ s^(k-2) (g - g(0))²` against `∫ s^k g'²`. With `k = 0` this is the
/// classical inequality `∫ (g/x)² ≤ 4 ∫ g'²` for `g(0) = 0`.
pub fn hardy_check_trace(g: impl Fn(f64) -> (f64, f64), k: f64) -> Result<HardyRatio> {
    if !(k > -1.0 && k < 1.0) {
        return Err(Error::ExponentOutOfRange(k));
    }
    let rule = gauss_jacobi(16, k);
    let g0 = g(0.0).0;
    let lhs = rule.integrate_unit(0.0, 1.0, |s| {
        let q = (g(s).0 - g0) / s;
        q * q
    });
    let rhs = rule.integrate_unit(0.0, 1.0, |s| g(s).1.powi(2));
    Ok(HardyRatio::new(lhs, rhs))
}

/// Polynomial `Σ c_n xⁿ` or Chebyshev series `Σ c_n T_n(x)` in `x = (r - shift)/scale`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub coeffs: Vec<f64>,
    pub chebyshev: bool,
    pub shift: f64,
    pub scale: f64,
    /// Multiply by `(end - r)` so the function vanishes at `end`.
    pub vanish_at: Option<f64>,
}

impl TestFunction {
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let x = (r - self.shift) / self.scale;
        let (mut f, mut d) = if self.chebyshev {
            let (mut t0, mut t1) = (1.0, x);
            let (mut d0, mut d1) = (0.0, 1.0);
            let mut f = self.coeffs[0] * t0;
            let mut d = 0.0;
            for c in self.coeffs.iter().skip(1) {
                f += c * t1;
                d += c * d1;
                let t2 = 2.0 * x * t1 - t0;
                let d2 = 2.0 * t1 + 2.0 * x * d1 - d0;
                t0 = t1;
                t1 = t2;
                d0 = d1;
                d1 = d2;
            }
            (f, d)
        } else {
            let f = self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let d = self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (n, c)| acc * x + n as f64 * c);
            (f, d)
        };
        d /= self.scale;
        if let Some(end) = self.vanish_at {
            let m = end - r;
            d = -f + m * d;
            f *= m;
        }
        (f, d)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySummary {
    pub family: String,
    pub ratio_max: f64,
    pub ratio_mean: f64,
    pub n_samples: usize,
}

fn summarize(family: String, ratios: &[f64]) -> FamilySummary {
    FamilySummary {
        family,
        ratio_max: ratios.iter().copied().fold(0.0, f64::max),
        ratio_mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        n_samples: ratios.len(),
    }
}

fn random_coeffs(rng: &mut ChaCha8Rng, max_degree: usize) -> Vec<f64> {
    let degree = rng.gen_range(0..=max_degree);
    (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Seeded families: degree ≤ 8 polynomials and Chebyshev series near the
/// origin and the boundary, and the trace form for `k ∈ {-1/2, 0, 1/2}`.
pub fn hardy_suite(
    profile: &LaneEmdenProfile,
    seed: u64,
    n_samples: usize,
) -> Result<Vec<FamilySummary>> {
    let radius = profile.radius;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let make =
        |chebyshev: bool, shift: f64, scale: f64, vanish_at: Option<f64>, rng: &mut ChaCha8Rng| {
            TestFunction {
                coeffs: random_coeffs(rng, 8),
                chebyshev,
                shift,
                scale,
                vanish_at,
            }
        };

    for (name, cheb) in [("origin_polynomial", false), ("origin_chebyshev", true)] {
        let ratios: Vec<f64> = (0..n_samples)
            .map(|_| {
                let (shift, scale) = if cheb {
                    (radius / 4.0, radius / 4.0)
                } else {
                    (0.0, radius)
                };
                let f = make(cheb, shift, scale, None, &mut rng);
                hardy_check_origin(|r| f.eval(r), profile).ratio
            })
            .collect();
        out.push(summarize(name.to_string(), &ratios));
    }

    let alpha = profile.alpha();
    for a in [1.5, alpha, 1.0 + alpha] {
        for (name, cheb, vanish) in [
            ("boundary_chebyshev", true, false),
            ("boundary_vanishing", false, true),
        ] {
            let mut ratios = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                let f = make(
                    cheb,
                    radius * 7.0 / 8.0,
                    radius / 8.0,
                    vanish.then_some(radius),
                    &mut rng,
                );
                ratios.push(hardy_check_boundary(|r| f.eval(r), profile, a)?.ratio);
            }
            out.push(summarize(format!("{name}_a{a:.4}"), &ratios));
        }
    }

    for k in [-0.5, 0.0, 0.5] {
        let mut ratios = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let f = make(false, 0.0, 1.0, None, &mut rng);
            ratios.push(hardy_check_trace(|s| f.eval(s), k)?.ratio);
        }
        out.push(summarize(format!("trace_k{k:+.1}"), &ratios));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_form_quadratic_case() {
        // g = x(1 - x): ∫ (1-x)² = 1/3 and ∫ (1-2x)² = 1/3
        let r = hardy_check_trace(|x| (x * (1.0 - x), 1.0 - 2.0 * x), 0.0).unwrap();
        assert!((r.lhs - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.rhs - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.ratio - 1.0).abs() < 1e-13);
    }

    #[test]
    fn exponent_guards() {
        assert!(matches!(
            hardy_check_trace(|_| (0.0, 0.0), 1.0),
            Err(Error::ExponentOutOfRange(_))
        ));
        assert!(matches!(
            hardy_check_trace(|_| (0.0, 0.0), -1.0),
            Err(Error::ExponentOutOfRange(_))
        ));
    }

    #[test]
    fn zero_function_ratio_is_zero() {
        let r = hardy_check_trace(|_| (0.0, 0.0), 0.5).unwrap();
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.2), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chebyshev_derivative_matches_difference() {
        let f = TestFunction {
            coeffs: vec![0.3, -0.2, 0.5, 0.1, -0.7],
            chebyshev: true,
            shift: 1.0,
            scale: 2.0,
            vanish_at: Some(3.0),
        };
        let h = 1e-6;
        for r in [0.0, 0.7, 2.2] {
            let fd = (f.eval(r + h).0 - f.eval(r - h).0) / (2.0 * h);
            assert!((fd - f.eval(r).1).abs() < 1e-8);
        }
    }
}
