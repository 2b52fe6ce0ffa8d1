//! Adaptive Dormand-Prince 5(4) integrator with the standard quartic dense output.
//!
//! The integrator is deliberately small: fixed-size state arrays, scalar
//! tolerances, and a stepping loop that can be clipped to land exactly on
//! requested abscissae.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side of an autonomous-in-form system `y' = f(t, y)`.
pub trait System<const D: usize> {
    fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D];
}

impl<const D: usize, F> System<D> for F
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D] {
        self(t, y)
    }
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct Step<const D: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; D],
    pub y1: [f64; D],
    cont: [[f64; D]; 4],
}

impl<const D: usize> Step<D> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Dense-output value at `t` inside the step.
    pub fn value(&self, t: f64) -> [f64; D] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; D];
        for i in 0..D {
            let [r2, r3, r4, r5] = [
                self.cont[0][i],
                self.cont[1][i],
                self.cont[2][i],
                self.cont[3][i],
            ];
            out[i] = self.y0[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
        }
        out
    }

    /// Derivative of the dense-output polynomial at `t`.
    pub fn derivative(&self, t: f64) -> [f64; D] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; D];
        for i in 0..D {
            let [r2, r3, r4, r5] = [
                self.cont[0][i],
                self.cont[1][i],
                self.cont[2][i],
                self.cont[3][i],
            ];
            let a = r4 + th1 * r5;
            let da = -r5;
            let b = r3 + th * a;
            let db = a + th * da;
            let c = r2 + th1 * b;
            let dc = -b + th1 * db;
            out[i] = (c + th * dc) / self.h;
        }
        out
    }
}

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Single Dormand-Prince step. Returns the step record and the scaled error norm.
pub fn dopri_step<const D: usize, S: System<D>>(
    sys: &S,
    t: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    rtol: f64,
    atol: f64,
) -> (Step<D>, [f64; D], f64) {
    let k2 = sys.rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = sys.rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = sys.rhs(
        t + C4 * h,
        &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = sys.rhs(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = sys.rhs(
        t + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y1 = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = sys.rhs(t + h, &y1);

    let mut err = 0.0;
    let mut cont = [[0.0; D]; 4];
    for i in 0..D {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = atol + rtol * y[i].abs().max(y1[i].abs());
        err += (e / sc).powi(2);

        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        cont[0][i] = ydiff;
        cont[1][i] = bspl;
        cont[2][i] = ydiff - h * k7[i] - bspl;
        cont[3][i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    let err = (err / D as f64).sqrt();
    (
        Step {
            t0: t,
            h,
            y0: *y,
            y1,
            cont,
        },
        k7,
        err,
    )
}

/// Adaptive driver state.
#[derive(Debug, Clone)]
pub struct Integrator<const D: usize> {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    t: f64,
    y: [f64; D],
    k1: [f64; D],
    h: f64,
    steps: usize,
}

impl<const D: usize> Integrator<D> {
    pub fn new<S: System<D>>(
        sys: &S,
        t0: f64,
        y0: [f64; D],
        h0: f64,
        rtol: f64,
        atol: f64,
    ) -> Self {
        let k1 = sys.rhs(t0, &y0);
        Self {
            rtol,
            atol,
            max_steps: 1_000_000,
            t: t0,
            y: y0,
            k1,
            h: h0,
            steps: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; D] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Take one accepted step, never passing `t_limit`.
    pub fn step<S: System<D>>(&mut self, sys: &S, t_limit: f64) -> Result<Step<D>> {
        let remaining = t_limit - self.t;
        if remaining <= 0.0 {
            return Err(Error::Integration(format!(
                "step requested past limit at t = {}",
                self.t
            )));
        }
        let mut h = self.h.min(remaining);
        loop {
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(Error::Integration(format!(
                    "step budget exhausted at t = {}",
                    self.t
                )));
            }
            let (step, k7, err) =
                dopri_step(sys, self.t, &self.y, &self.k1, h, self.rtol, self.atol);
            if !err.is_finite() {
                h *= 0.25;
                continue;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                // land exactly on the limit when the step was clipped to it
                let hit_limit =
                    (h - remaining).abs() <= 4.0 * f64::EPSILON * t_limit.abs().max(1.0);
                self.t = if hit_limit { t_limit } else { self.t + h };
                self.y = step.y1;
                self.k1 = k7;
                self.h = h * fac;
                return Ok(step);
            }
            h *= fac.min(1.0);
            if h.abs() < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Integration(format!(
                    "step size underflow at t = {}",
                    self.t
                )));
            }
        }
    }

    /// Advance exactly to `t_target`.
    pub fn advance_to<S: System<D>>(
        &mut self,
        sys: &S,
        t_target: f64,
        mut on_step: impl FnMut(&Step<D>),
    ) -> Result<()> {
        while self.t < t_target {
            let step = self.step(sys, t_target)?;
            on_step(&step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_to_tolerance() {
        let sys = |_t: f64, y: &[f64; 1]| [y[0]];
        let mut it = Integrator::new(&sys, 0.0, [1.0], 0.01, 1e-12, 1e-14);
        it.advance_to(&sys, 2.0, |_| {}).unwrap();
        assert_eq!(it.t(), 2.0);
        assert!((it.y()[0] - 2f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_fourth_order() {
        let sys = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| {
                let k1 = sys(0.0, &[0.0, 1.0]);
                let (step, _, _) = dopri_step(&sys, 0.0, &[0.0, 1.0], &k1, h, 1.0, 1.0);
                let t = 0.37 * h;
                let v = step.value(t);
                let d = step.derivative(t);
                (v[0] - t.sin()).abs().max((d[0] - t.cos()).abs() * h)
            })
            .collect();
        // local error of the interpolant is O(h^5)
        assert!(errs[0] / errs[1] > 20.0, "{errs:?}");
        assert!(errs[1] / errs[2] > 20.0, "{errs:?}");
        assert!(errs[2] < 1e-9);
    }
}
