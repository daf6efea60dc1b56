//! JSON model files.
//!
//! ```json
//! {
//!   "displacement": { "family": "lattice", "step": 1.0, "offsets": [-1, 1], "probs": [0.75, 0.25] },
//!   "offspring": { "pmf": [[2, 1.0]] },
//!   "perturbation": { "family": "point_mass", "y": 1.0 },
//!   "theta": 2.5
//! }
//! ```
//!
//! `perturbation` defaults to the unit point mass; `theta` may be supplied
//! on the command line instead.

use std::fs;
use std::path::{Path, PathBuf};

use brwld_core::{BrwModel, DisplacementModel, OffspringModel, PerturbationMeasure};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub displacement: DisplacementConfig,
    pub offspring: OffspringConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisplacementConfig {
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        stddev: f64,
    },
    Lattice {
        #[serde(default = "one")]
        step: f64,
        offsets: Vec<i64>,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringConfig {
    pub pmf: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    PointMass { y: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig::PointMass { y: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

/// A validated model plus the `θ` it was configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunModel {
    pub path: PathBuf,
    pub model: BrwModel,
    pub theta: Option<f64>,
}

impl RunModel {
    /// `θ` from the command line, else from the file.
    pub fn theta(&self, flag: Option<f64>) -> Result<f64, CliError> {
        let theta = flag.or(self.theta).ok_or_else(|| {
            CliError::Usage(format!(
                "{} has no theta; pass --theta",
                self.path.display()
            ))
        })?;
        if !(theta.is_finite() && theta > 0.0) {
            return Err(CliError::Usage(format!("theta must be positive and finite, got {theta}")));
        }
        Ok(theta)
    }

    pub fn is_lattice(&self) -> bool {
        self.model.displacement.as_lattice().is_some()
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<BrwModel, CliError> {
        let displacement = match &self.displacement {
            DisplacementConfig::Gaussian { mean, stddev } => DisplacementModel::gaussian(*mean, *stddev)?,
            DisplacementConfig::Lattice { step, offsets, probs } => {
                DisplacementModel::lattice(*step, offsets, probs)?
            }
        };
        let offspring = OffspringModel::new(&self.offspring.pmf)?;
        let perturbation = match &self.perturbation {
            PerturbationConfig::PointMass { y } => PerturbationMeasure::point_mass(*y)?,
            PerturbationConfig::Discrete { atoms } => PerturbationMeasure::discrete(atoms)?,
        };
        Ok(BrwModel::new(displacement, offspring, perturbation))
    }
}

pub fn parse_model(text: &str, path: &Path) -> Result<RunModel, CliError> {
    let cfg: ModelConfig = serde_json::from_str(text).map_err(|source| CliError::ConfigParse {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RunModel { path: path.to_path_buf(), model: cfg.build()?, theta: cfg.theta })
}

pub fn load_model(path: &Path) -> Result<RunModel, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ConfigIo {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunModel, CliError> {
        parse_model(text, Path::new("inline.json"))
    }

    #[test]
    fn gaussian_with_defaults() {
        let m = parse(r#"{"displacement":{"family":"gaussian"},"offspring":{"pmf":[[2,1.0]]}}"#).unwrap();
        assert_eq!(m.model.displacement, DisplacementModel::gaussian(0.0, 1.0).unwrap());
        assert_eq!(m.model.perturbation, PerturbationMeasure::unit());
        assert_eq!(m.theta, None);
        assert!(m.theta(None).is_err());
        assert_eq!(m.theta(Some(2.0)).unwrap(), 2.0);
    }

    #[test]
    fn lattice_and_discrete() {
        let m = parse(
            r#"{"displacement":{"family":"lattice","step":0.5,"offsets":[1,-1],"probs":[0.25,0.75]},
                "offspring":{"pmf":[[1,0.5],[3,0.5]]},
                "perturbation":{"family":"discrete","atoms":[[1.0,0.5],[2.0,0.5]]},
                "theta":2.0}"#,
        )
        .unwrap();
        assert!(m.is_lattice());
        assert_eq!(m.model.offspring.mean(), 2.0);
        assert_eq!(m.model.perturbation.mean(), 1.5);
        assert_eq!(m.theta(None).unwrap(), 2.0);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_models() {
        let unknown = r#"{"displacement":{"family":"gaussian","sigma":1},"offspring":{"pmf":[[2,1.0]]}}"#;
        assert!(matches!(parse(unknown), Err(CliError::ConfigParse { .. })));
        let top = r#"{"displacement":{"family":"gaussian"},"offspring":{"pmf":[[2,1.0]]},"extra":1}"#;
        assert!(matches!(parse(top), Err(CliError::ConfigParse { .. })));
        let unnormalised = r#"{"displacement":{"family":"gaussian"},"offspring":{"pmf":[[2,0.9]]}}"#;
        assert!(matches!(parse(unnormalised), Err(CliError::Model(_))));
        let extinct = r#"{"displacement":{"family":"gaussian"},"offspring":{"pmf":[[0,0.5],[2,0.5]]}}"#;
        let e = parse(extinct).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn round_trips_through_serde() {
        let cfg = ModelConfig {
            displacement: DisplacementConfig::Lattice { step: 1.0, offsets: vec![-1, 1], probs: vec![0.5, 0.5] },
            offspring: OffspringConfig { pmf: vec![(2, 1.0)] },
            perturbation: PerturbationConfig::default(),
            theta: Some(1.5),
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
