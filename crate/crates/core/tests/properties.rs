use std::sync::OnceLock;

use proptest::prelude::*;

use lanemden::config::ExperimentConfig;
use lanemden::energetics::{weighted_norm_x, weighted_norm_y};
use lanemden::experiment::Pipeline;
use lanemden::output::fmt_f64;
use lanemden::polytrope::{origin_series, MeshSpec, PolytropeConfig};
use lanemden::spectral::rayleigh_quotient;

fn pipe() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let mut cfg = ExperimentConfig::default();
        cfg.mesh.n_nodes = 129;
        Pipeline::new(&cfg, 1.3).unwrap()
    })
}

fn sample(coeffs: &[f64]) -> Vec<f64> {
    let p = pipe();
    let radius = p.profile.radius;
    p.profile
        .grid
        .iter()
        .map(|r| {
            coeffs
                .iter()
                .rev()
                .fold(0.0, |acc, c| acc * (r / radius) + c)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_absolutely_homogeneous(
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..6),
        c in -10.0f64..10.0,
    ) {
        let p = pipe();
        let f = sample(&coeffs);
        let g: Vec<f64> = f.iter().map(|x| c * x).collect();
        let a = p.profile.alpha();
        let (nx, ngx) = (weighted_norm_x(&f, &p.profile, a), weighted_norm_x(&g, &p.profile, a));
        let (ny, ngy) = (weighted_norm_y(&f, &p.profile), weighted_norm_y(&g, &p.profile));
        prop_assert!((ngx - c.abs() * nx).abs() <= 1e-12 * (1.0 + ngx));
        prop_assert!((ngy - c.abs() * ny).abs() <= 1e-12 * (1.0 + ngy));
    }

    #[test]
    fn rayleigh_quotient_is_scale_invariant_and_bounded(
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..6),
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        let p = pipe();
        let f = sample(&coeffs);
        prop_assume!(f[1..f.len() - 1].iter().any(|x| x.abs() > 1e-6));
        let g: Vec<f64> = f.iter().map(|x| c * x).collect();
        let q = rayleigh_quotient(&p.pencil, &f).unwrap();
        let qg = rayleigh_quotient(&p.pencil, &g).unwrap();
        prop_assert!((q - qg).abs() <= 1e-10 * (1.0 + q.abs()));
        prop_assert!(q <= p.mode.mu0 + 1e-10);
    }

    #[test]
    fn origin_series_is_even(gamma in 1.201f64..2.0) {
        let cfg = PolytropeConfig::new(gamma).unwrap();
        let a = origin_series(&cfg, 8).unwrap();
        prop_assert_eq!(a[0], 1.0);
        for k in (1..=7).step_by(2) {
            prop_assert_eq!(a[k], 0.0);
        }
        prop_assert!((2.0 * a[2] + cfg.c_frak / 3.0).abs() <= 1e-14);
    }

    #[test]
    fn mesh_is_increasing_with_fixed_ends(n in 64usize..2000, grading in 0.15f64..0.6, radius in 1.0f64..20.0) {
        let spec = MeshSpec { n_nodes: n, grading };
        spec.validate().unwrap();
        let g = spec.build(radius);
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], 0.0);
        prop_assert_eq!(g[n - 1], radius);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn config_round_trips(
        gamma in 1.21f64..2.0,
        seed in any::<u64>(),
        n in 64usize..5000,
        theta0 in 1e-3f64..0.5,
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.polytrope.gamma = gamma;
        cfg.experiment.gammas = vec![gamma];
        cfg.experiment.seed = seed;
        cfg.experiment.theta0 = theta0;
        cfg.experiment.deltas = vec![theta0 / 10.0, theta0 / 100.0];
        cfg.mesh.n_nodes = n;
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn printed_floats_round_trip(x in any::<f64>()) {
        prop_assume!(x.is_finite());
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
