//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energetics::MAX_TEMPORAL_ORDER;
use crate::error::{Error, Result};
use crate::evolution::SimConfig;
use crate::polytrope::{MeshSpec, PolytropeConfig, GAMMA_MAX, GAMMA_MIN};

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest mesh the profile solver accepts.
pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolytropeSection {
    pub gamma: f64,
    /// Entropy constant; `None` picks the value that makes `𝔠 = 1`.
    pub k_entropy: Option<f64>,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    pub series_radius: Option<f64>,
    pub r_max: f64,
}

impl Default for PolytropeSection {
    fn default() -> Self {
        let base = PolytropeConfig::new(1.3).expect("default gamma is valid");
        Self {
            gamma: 1.3,
            k_entropy: None,
            ode_rel_tol: base.ode_rel_tol,
            ode_abs_tol: base.ode_abs_tol,
            series_radius: None,
            r_max: base.r_max,
        }
    }
}

impl PolytropeSection {
    /// Solver configuration for `gamma`, sharing every other setting.
    pub fn build(&self, gamma: f64) -> Result<PolytropeConfig> {
        let mut cfg = match self.k_entropy {
            Some(k) => PolytropeConfig::with_entropy_constant(gamma, k)?,
            None => PolytropeConfig::new(gamma)?,
        };
        cfg.ode_rel_tol = self.ode_rel_tol;
        cfg.ode_abs_tol = self.ode_abs_tol;
        cfg.series_radius = self.series_radius;
        cfg.r_max = self.r_max;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigSection {
    /// Residual and variational tolerance, relative to the pencil's scale.
    pub eig_tol: f64,
}

impl Default for EigSection {
    fn default() -> Self {
        Self { eig_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Profile,
    Mode,
    Evolve,
    Instability,
    Sweep,
    Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: Kind,
    pub deltas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub theta0: f64,
    pub jmax: usize,
    pub seed: u64,
    /// Run the linearized dynamics alongside and report the Duhamel remainder.
    pub paired_linear: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: Kind::Instability,
            deltas: vec![1e-3, 1e-4, 1e-5],
            gammas: vec![1.25, 1.3, 1.32],
            theta0: 1e-2,
            jmax: 2,
            seed: 20_161_016,
            paired_linear: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub polytrope: PolytropeSection,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub eig: EigSection,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Where results go; when absent the caller picks a default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            polytrope: PolytropeSection::default(),
            mesh: MeshSpec::default(),
            eig: EigSection::default(),
            sim: SimConfig::default(),
            experiment: ExperimentSection::default(),
            output_dir: None,
        }
    }
}

fn gamma_in_range(g: f64) -> bool {
    g > GAMMA_MIN && g <= GAMMA_MAX
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse only; call [`Self::validate`] (or [`Self::apply_overrides`]) before use.
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.polytrope.build(self.polytrope.gamma)?;
        // the check suite handles coarse meshes itself by skipping
        if self.experiment.kind != Kind::Check || self.mesh.n_nodes >= MIN_NODES {
            self.mesh.validate()?;
        }
        self.sim.validate()?;
        if !(self.eig.eig_tol > 0.0) {
            return Err(Error::Config("eig_tol must be positive".into()));
        }
        let e = &self.experiment;
        if !(e.theta0 > 0.0 && e.theta0.is_finite()) {
            return Err(Error::Config("theta0 must be positive".into()));
        }
        if e.jmax > MAX_TEMPORAL_ORDER {
            return Err(Error::UnsupportedOrder {
                requested: e.jmax,
                max: MAX_TEMPORAL_ORDER,
            });
        }
        if e.deltas.is_empty() {
            return Err(Error::Config("deltas must not be empty".into()));
        }
        for d in &e.deltas {
            if !(*d > 0.0) {
                return Err(Error::Config(format!("delta = {d} must be positive")));
            }
            if !(*d < e.theta0) {
                return Err(Error::Config(format!(
                    "delta = {d} must be below theta0 = {}",
                    e.theta0
                )));
            }
        }
        if e.deltas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Config("deltas must be strictly decreasing".into()));
        }
        if e.gammas.is_empty() {
            return Err(Error::Config("gammas must not be empty".into()));
        }
        if let Some(g) = e.gammas.iter().find(|g| !gamma_in_range(**g)) {
            return Err(Error::Config(format!("gamma = {g} outside (6/5, 2]")));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, output location excluded.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: None,
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn polytrope_config(&self) -> Result<PolytropeConfig> {
        self.polytrope.build(self.polytrope.gamma)
    }

    /// Apply command-line overrides, then re-validate.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(g) = o.gamma {
            self.polytrope.gamma = g;
            self.experiment.gammas = vec![g];
        }
        if let Some(d) = o.delta {
            self.experiment.deltas = vec![d];
        }
        if let Some(n) = o.nodes {
            self.mesh.n_nodes = n;
        }
        if let Some(s) = o.seed {
            self.experiment.seed = s;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        if let Some(k) = o.kind {
            self.experiment.kind = k;
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kind: Option<Kind>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "mesh": {"n_nodes": 100, "nodes": 3}}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "extra": 0}"#).is_err());
    }

    #[test]
    fn delta_rules() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.deltas = vec![2e-2];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.experiment.deltas = vec![1e-4, 1e-3];
        assert!(cfg.validate().is_err());
        cfg.experiment.deltas = vec![1e-3, 1e-3];
        assert!(cfg.validate().is_err());
        cfg.experiment.deltas = vec![-1e-3];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gamma_range_and_order_ceiling() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.gammas = vec![1.3, 1.2];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.jmax = 3;
        assert!(matches!(
            cfg.validate(),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn coarse_mesh_only_for_check() {
        let mut cfg = ExperimentConfig::default();
        cfg.mesh.n_nodes = 32;
        assert!(cfg.validate().is_err());
        cfg.experiment.kind = Kind::Check;
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = Some(PathBuf::from("elsewhere"));
        assert_eq!(a.hash(), b.hash());
        b.experiment.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
