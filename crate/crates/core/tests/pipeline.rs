use std::fs;

use lanemden::config::ExperimentConfig;
use lanemden::error::Error;
use lanemden::experiment::{instability_with, run_evolve, sweep, Pipeline, RunStatus};
use lanemden::output;

fn small_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh.n_nodes = 129;
    cfg.experiment.deltas = vec![1e-3];
    cfg
}

#[test]
fn instability_outputs_are_byte_identical_across_runs() {
    let cfg = small_cfg();
    let hash = cfg.hash();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let pipe = Pipeline::new(&cfg, 1.3).unwrap();
        let res = instability_with(&pipe, &cfg, 1e-3).unwrap();
        assert_eq!(res.record.status, RunStatus::Escaped);
        output::write_instability(d.path(), &hash, &[res]).unwrap();
    }
    let sub = output::delta_dir(1e-3);
    for name in [
        "trajectory.csv",
        "run.json",
        "fit.json",
        "duhamel.csv",
        "linear_trajectory.csv",
    ] {
        let a = fs::read(dirs[0].path().join(&sub).join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(&sub).join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let traj = fs::read_to_string(dirs[0].path().join(&sub).join("trajectory.csv")).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        format!("# schema_version=1 config_hash={hash}")
    );
}

#[test]
fn stable_gamma_has_no_rate() {
    let cfg = small_cfg();
    let pipe = Pipeline::new(&cfg, 1.4).unwrap();
    let err = instability_with(&pipe, &cfg, 1e-3).unwrap_err();
    assert!(matches!(err, Error::RateUnavailable { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn evolve_stops_at_t_end_with_small_drift() {
    let mut cfg = small_cfg();
    cfg.sim.t_end = 5.0;
    let (_, res) = run_evolve(&cfg).unwrap();
    assert_eq!(res.record.status, RunStatus::Completed);
    let m = &res.record.metadata;
    assert!((m.t_final - 5.0).abs() < m.dt.dt);
    assert!(m.h_drift < 1e-8, "drift {}", m.h_drift);
    assert!(m.dt.stiffness_number < 2.8);
}

#[test]
fn sweep_classifies_each_gamma() {
    let mut cfg = small_cfg();
    cfg.experiment.gammas = vec![1.5, 4.0 / 3.0, 1.3];
    // the fit window [3δ, θ₀/3] is empty for δ = 1e-3
    cfg.experiment.deltas = vec![1e-4, 1e-5];
    let rows = sweep(&cfg);
    let status: Vec<&str> = rows.iter().map(|r| r.status.as_str()).collect();
    assert_eq!(status, ["unstable", "marginal", "stable"]);
    assert!((rows[0].fitted_rate / rows[0].rate - 1.0).abs() < 0.02);
    assert!((rows[0].spacing_ratio - 1.0).abs() < 0.05);
    assert!(rows[2].mu0 < 0.0 && rows[2].fitted_rate.is_nan());
}
