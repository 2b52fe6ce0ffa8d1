//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any of them fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lanemden::config::ExperimentConfig;
use lanemden::energetics::hardy::{hardy_check_origin, hardy_check_trace, hardy_suite};
use lanemden::evolution::{step, Dynamics, PerturbationState};
use lanemden::experiment::{
    conservation_drift, energy_equivalence_ladder, growth_ceilings, instability_with,
    linear_mode_error, random_smooth_state, InstabilityResult, Pipeline,
};
use lanemden::polytrope::{
    equilibrium_energy, origin_series, solve_lane_emden, vacuum_exponent, MeshSpec, PolytropeConfig,
};
use lanemden::spectral::rayleigh_quotient;

const SEED: u64 = 20_161_016;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

fn cfg_with(n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh.n_nodes = n;
    cfg
}

fn pipeline(gamma: f64, n: usize) -> Pipeline {
    Pipeline::new(&cfg_with(n), gamma).expect("pipeline")
}

fn c01_closed_form() -> Outcome {
    let start = Instant::now();
    let cfg = PolytropeConfig::new(2.0).unwrap();
    let p = solve_lane_emden(&cfg, 513).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let werr = p
        .grid
        .iter()
        .zip(&p.w)
        .map(|(r, w)| {
            let exact = if *r == 0.0 { 1.0 } else { r.sin() / r };
            (w - exact).abs()
        })
        .fold(0.0, f64::max);
    let rerr = (p.radius - PI).abs();
    outcome(
        werr <= 1e-8 && rerr <= 1e-8 && elapsed < 1.0 && (cfg.c_frak - 1.0).abs() < 1e-14,
        format!("max|w - sin r/r| = {werr:.2e}, |R - pi| = {rerr:.2e}, {elapsed:.3} s"),
    )
}

fn c02_origin_series() -> Outcome {
    let mut worst2: f64 = 0.0;
    let mut worst4: f64 = 0.0;
    for g in [1.25, 1.3, 1.32] {
        let cfg = PolytropeConfig::new(g).unwrap();
        let a = origin_series(&cfg, 4).unwrap();
        // w_rr(0) = 2 a_2, w_rrrr(0) = 24 a_4
        worst2 = worst2.max((2.0 * a[2] + cfg.c_frak / 3.0).abs());
        worst4 = worst4.max((24.0 * a[4] - cfg.alpha * cfg.c_frak.powi(2) / 5.0).abs());
        // the solved profile agrees with the equation at the origin too
        let p = solve_lane_emden(&cfg, 513).unwrap();
        worst2 = worst2.max((p.w_rr(0) + cfg.c_frak / 3.0).abs());
    }
    outcome(
        worst2 <= 1e-10 && worst4 <= 1e-8,
        format!("|w_rr(0) + c/3| = {worst2:.2e}, |w_rrrr(0) - a c^2/5| = {worst4:.2e}"),
    )
}

fn c03_vacuum_exponent() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for g in [1.25, 1.3, 1.32] {
        let p = solve_lane_emden(&PolytropeConfig::new(g).unwrap(), 513).unwrap();
        match vacuum_exponent(&p) {
            Ok(e) => {
                ok &= (e - 1.0).abs() <= 0.01;
                parts.push(format!("{g}: {e:.5}"));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("{g}: {err}"));
            }
        }
    }
    outcome(ok, parts.join(", "))
}

fn c04_sign_structure() -> Outcome {
    const N: usize = 4096;
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [1.25, 1.28, 1.30, 1.32] {
        let p = pipeline(g, N);
        ok &= p.mode.mu0 > 0.0;
        parts.push(format!("{g}: {:.3e}", p.mode.mu0));
    }
    for g in [1.35, 1.40, 5.0 / 3.0] {
        let p = pipeline(g, N);
        ok &= p.mode.mu0 < 0.0;
        parts.push(format!("{g:.4}: {:.3e}", p.mode.mu0));
    }
    let m = pipeline(4.0 / 3.0, N);
    let tol = m.pencil.marginal_tolerance();
    let (lo, hi) = m
        .mode
        .phi0
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        });
    let variation = (hi - lo) / hi.abs().max(lo.abs());
    let elapsed = start.elapsed().as_secs_f64();
    ok &= m.mode.mu0.abs() <= tol && variation <= 1e-3 && elapsed < 30.0;
    outcome(
        ok,
        format!(
            "{}; 4/3: |mu0| = {:.2e} (tol {tol:.2e}), variation {variation:.2e}; {elapsed:.1} s",
            parts.join(", "),
            m.mode.mu0.abs()
        ),
    )
}

/// Trial vectors: smooth cosine series, seeded polynomials in `r/R`, and
/// perturbations of the computed mode itself.
fn c05_variational_dominance() -> Outcome {
    let eig_tol = ExperimentConfig::default().eig.eig_tol;
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [1.25, 1.3, 1.32, 1.4, 5.0 / 3.0] {
        let p = pipeline(g, 513);
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let radius = p.profile.radius;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..100 {
            let trial: Vec<f64> = match k % 3 {
                0 => random_smooth_state(&p.pencil, &mut rng, 1.0).zeta,
                1 => {
                    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    p.profile
                        .grid
                        .iter()
                        .map(|r| c.iter().rev().fold(0.0, |acc, ck| acc * (r / radius) + ck))
                        .collect()
                }
                _ => {
                    let eps: f64 = rng.gen_range(1e-3..1e-1);
                    let noise = random_smooth_state(&p.pencil, &mut rng, eps).zeta;
                    p.mode.phi0.iter().zip(&noise).map(|(a, b)| a + b).collect()
                }
            };
            worst = worst.max(rayleigh_quotient(&p.pencil, &trial).unwrap());
        }
        let ones = vec![1.0; p.profile.n_nodes()];
        let q1 = rayleigh_quotient(&p.pencil, &ones).unwrap();
        ok &= worst <= p.mode.mu0 + eig_tol && p.mode.mu0 >= q1 - eig_tol;
        parts.push(format!(
            "{g:.4}: max RQ - mu0 = {:.2e}, mu0 - Q1/I1 = {:.2e}",
            worst - p.mode.mu0,
            p.mode.mu0 - q1
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c06_linear_propagation() -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [1.25, 1.3, 1.32] {
        let p = Pipeline::new(&cfg, g).unwrap();
        let dt = p.equilibrium_dt(cfg.sim.dt_cfl);
        let err = linear_mode_error(&p, 1e-3, dt, 3.0 / p.mode.rate).unwrap();
        ok &= err <= 1e-4;
        parts.push(format!("{g}: {err:.2e}"));
    }
    outcome(ok, format!("max relative X error {}", parts.join(", ")))
}

fn c07_growth_ceilings() -> Outcome {
    let cfg = ExperimentConfig::default();
    let p = Pipeline::new(&cfg, 1.3).unwrap();
    let dt = p.equilibrium_dt(cfg.sim.dt_cfl);
    let t1 = 1.0 / p.mode.rate;
    let rep = growth_ceilings(&p, SEED, 20, dt, t1, 4.0 * t1).unwrap();
    outcome(
        rep.c_velocity.is_finite() && rep.c_y.is_finite() && rep.violations == 0,
        format!(
            "C_v = {:.3}, C_Y = {:.3}, {} violations in {} samples",
            rep.c_velocity, rep.c_y, rep.violations, rep.n_samples
        ),
    )
}

fn c08_conservation() -> Outcome {
    let cfg = ExperimentConfig::default();
    let p = Pipeline::new(&cfg, 1.3).unwrap();
    let dt = p.equilibrium_dt(cfg.sim.dt_cfl);
    let drift = conservation_drift(&p, SEED, 1e-2, dt, 4.0).unwrap();

    let coarse = pipeline(1.3, 257);
    let drifts: Vec<f64> = [0.8, 0.4, 0.2]
        .iter()
        .map(|c| conservation_drift(&coarse, SEED, 1e-2, coarse.equilibrium_dt(*c), 4.0).unwrap())
        .collect();
    let orders: Vec<f64> = drifts.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    // RK4 is fourth order; the energy error may converge faster than that
    let order_ok = orders.iter().all(|o| *o >= 3.5);

    let mut st = PerturbationState::equilibrium(&p.pencil);
    for _ in 0..10_000 {
        st = step(&st, &p.pencil, Dynamics::Nonlinear, dt).unwrap();
    }
    let dev = st
        .zeta
        .iter()
        .chain(&st.zeta_t)
        .fold(0.0f64, |a, x| a.max(x.abs()));
    outcome(
        drift <= 1e-6 && order_ok && dev <= 1e-14,
        format!(
            "drift {drift:.2e}; coarse drifts {:.2e}/{:.2e}/{:.2e}, orders {:.2}/{:.2}; equilibrium deviation {dev:.1e}",
            drifts[0], drifts[1], drifts[2], orders[0], orders[1]
        ),
    )
}

fn instability_runs() -> (Pipeline, Vec<InstabilityResult>) {
    let cfg = ExperimentConfig::default();
    let p = Pipeline::new(&cfg, 1.3).unwrap();
    let runs = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|d| instability_with(&p, &cfg, *d).unwrap())
        .collect();
    (p, runs)
}

fn c09_instability(p: &Pipeline, runs: &[InstabilityResult], elapsed: f64) -> Outcome {
    let rate = p.mode.rate;
    let mut ok = elapsed < 300.0;
    let mut parts = Vec::new();
    for r in runs {
        let fitted = r.fit.as_ref().map_or(f64::NAN, |f| f.rate);
        let rate_err = (fitted / rate - 1.0).abs();
        let escape = r.escape_time.unwrap_or(f64::NAN);
        let esc_err = (escape / r.predicted_escape - 1.0).abs();
        ok &= rate_err <= 0.02 && esc_err <= 0.05;
        parts.push(format!(
            "delta {:.0e}: rate err {:.2}%, T/T_pred {:.3}",
            r.delta,
            100.0 * rate_err,
            escape / r.predicted_escape
        ));
    }
    let spacing: Vec<f64> = runs
        .windows(2)
        .map(|w| {
            let dt = w[1].escape_time.unwrap_or(f64::NAN) - w[0].escape_time.unwrap_or(f64::NAN);
            dt / (10f64.ln() / rate)
        })
        .collect();
    ok &= spacing.iter().all(|s| (s - 1.0).abs() <= 0.05);
    parts.push(format!(
        "spacing ratios {}",
        spacing
            .iter()
            .map(|s| format!("{s:.3}"))
            .collect::<Vec<_>>()
            .join("/")
    ));
    parts.push(format!("{elapsed:.0} s"));
    outcome(ok, parts.join("; "))
}

fn c10_duhamel(runs: &[InstabilityResult]) -> Outcome {
    let a = runs[0].duhamel.as_ref().unwrap();
    let b = runs[1].duhamel.as_ref().unwrap();
    let t_end = runs[0]
        .record
        .metadata
        .t_final
        .min(runs[1].record.metadata.t_final);
    let mut worst: f64 = 1.0;
    let mut n = 0;
    for (x, y) in a.iter().zip(b) {
        // the terminal rows sit off the common record grid
        if x.t == 0.0 || x.t > t_end || x.t != y.t {
            continue;
        }
        let r = x.ratio / y.ratio;
        worst = worst.max(r.max(1.0 / r));
        n += 1;
    }
    outcome(
        n > 0 && worst <= 2.0,
        format!("max ratio disagreement {worst:.3} over {n} common samples up to t = {t_end:.2}"),
    )
}

fn c11_energy_equivalence() -> Outcome {
    let p = pipeline(1.3, 513);
    let pts = energy_equivalence_ladder(&p, &[8e-3, 4e-3, 2e-3, 1e-3], SEED).unwrap();
    let ratios: Vec<f64> = pts
        .windows(2)
        .map(|w| w[1].relative_gap / w[0].relative_gap)
        .collect();
    outcome(
        ratios.iter().all(|r| (0.4..=0.6).contains(r)),
        format!(
            "gaps {}; successive ratios {}",
            pts.iter()
                .map(|q| format!("{:.3e}", q.relative_gap))
                .collect::<Vec<_>>()
                .join("/"),
            ratios
                .iter()
                .map(|r| format!("{r:.3}"))
                .collect::<Vec<_>>()
                .join("/")
        ),
    )
}

fn c12_hardy() -> Outcome {
    let mut ok = true;
    let mut worst_change: f64 = 0.0;
    for g in [1.25, 1.3, 1.32] {
        let cfg = ExperimentConfig::default();
        let poly = cfg.polytrope.build(g).unwrap();
        let coarse = lanemden::polytrope::solve_lane_emden_on(&poly, MeshSpec::new(513)).unwrap();
        let fine = lanemden::polytrope::solve_lane_emden_on(&poly, MeshSpec::new(1025)).unwrap();
        let a = hardy_suite(&coarse, SEED, 100).unwrap();
        let b = hardy_suite(&fine, SEED, 100).unwrap();
        for (x, y) in a.iter().zip(&b) {
            ok &= x.ratio_max.is_finite() && y.ratio_max.is_finite();
            worst_change = worst_change.max(((x.ratio_max - y.ratio_max) / y.ratio_max).abs());
        }
    }
    ok &= worst_change <= 0.05;

    // hand-computed polynomial cases
    let mut hand: f64 = 0.0;
    let r = hardy_check_trace(|x| (x * (1.0 - x), 1.0 - 2.0 * x), 0.0).unwrap();
    hand = hand
        .max((r.lhs - 1.0 / 3.0).abs())
        .max((r.rhs - 1.0 / 3.0).abs());
    for k in [-0.5, 0.5] {
        let r = hardy_check_trace(|x| (x * x, 2.0 * x), k).unwrap();
        hand = hand
            .max((r.lhs - 1.0 / (k + 3.0)).abs())
            .max((r.rhs - 4.0 / (k + 3.0)).abs());
    }
    let sphere = solve_lane_emden(&PolytropeConfig::new(2.0).unwrap(), 513).unwrap();
    let c = sphere.radius / 4.0;
    let r = hardy_check_origin(|x| (x, 1.0), &sphere);
    let lhs = c.powi(5) / 5.0;
    let rhs = (2.0 * c).powi(5) / 5.0 + ((2.0 * c).powi(7) - c.powi(7)) / 7.0;
    hand = hand
        .max(((r.lhs - lhs) / lhs).abs())
        .max(((r.rhs - rhs) / rhs).abs());
    ok &= hand <= 1e-8;
    outcome(
        ok,
        format!(
            "max N -> 2N change {:.2}%, hand cases max error {hand:.1e}",
            100.0 * worst_change
        ),
    )
}

fn c13_equilibrium_energy() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, positive) in [(1.25, true), (1.3, true), (1.4, false), (5.0 / 3.0, false)] {
        let p = solve_lane_emden(&PolytropeConfig::new(g).unwrap(), 513).unwrap();
        let e = equilibrium_energy(&p);
        ok &= e.relative_difference <= 1e-4 && (e.direct > 0.0) == positive;
        parts.push(format!(
            "{g:.4}: E = {:.4e} (rel diff {:.1e})",
            e.direct, e.relative_difference
        ));
    }
    outcome(ok, parts.join(", "))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!(
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary
        );
        results.push((name, o));
    };
    run("C1 closed-form polytrope", &c01_closed_form);
    run("C2 origin series", &c02_origin_series);
    run("C3 vacuum exponent", &c03_vacuum_exponent);
    run("C4 eigenvalue sign structure", &c04_sign_structure);
    run("C5 variational dominance", &c05_variational_dominance);
    run("C6 linear mode propagation", &c06_linear_propagation);
    run("C7 linear growth ceilings", &c07_growth_ceilings);
    run("C8 conservation", &c08_conservation);
    let start = Instant::now();
    let (p, runs) = instability_runs();
    let elapsed = start.elapsed().as_secs_f64();
    run("C9 nonlinear instability", &|| {
        c09_instability(&p, &runs, elapsed)
    });
    run("C10 Duhamel remainder scaling", &|| c10_duhamel(&runs));
    run("C11 energy equivalence", &c11_energy_equivalence);
    run("C12 Hardy suites", &c12_hardy);
    run("C13 equilibrium energy", &c13_equilibrium_energy);

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
