//! JSON run configuration shared by the command-line front end.

use serde::{Deserialize, Serialize};

use crate::bins::BinGrid;
use crate::calibrator::{PilotMode, PipelineOptions};
use crate::error::{Error, Result};
use crate::functional::{EbKind, LinearFunctional};
use crate::modulus::ClassDiscretization;
use crate::pilot::{BootstrapOptions, Kernel};
use crate::prior::{GaussianComponent, GaussianMixturePrior, Prior, PriorClass, PriorClassSpec};
use crate::tuning::Criterion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Lfsr,
    PosteriorMean,
    MarginalDensity,
    PriorTail,
    PriorDensity,
}

impl TargetKind {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown target '{s}'")))
    }

    pub fn eb_kind(self) -> Option<EbKind> {
        match self {
            TargetKind::Lfsr => Some(EbKind::Lfsr),
            TargetKind::PosteriorMean => Some(EbKind::PosteriorMean),
            _ => None,
        }
    }

    pub fn linear(self, x: f64) -> Option<LinearFunctional> {
        match self {
            TargetKind::MarginalDensity => Some(LinearFunctional::MarginalDensityAt(x)),
            TargetKind::PriorTail => Some(LinearFunctional::PriorTailProb(x)),
            TargetKind::PriorDensity => Some(LinearFunctional::PriorDensityAt(x)),
            TargetKind::Lfsr | TargetKind::PosteriorMean => None,
        }
    }

    /// Criterion used when none is configured.
    pub fn default_criterion(self) -> Criterion {
        if self.eb_kind().is_some() {
            Criterion::CiWidth
        } else {
            Criterion::Mse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target: TargetKind,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
}

fn default_half_width() -> f64 {
    6.0
}

fn default_cells() -> usize {
    120
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec { half_width: default_half_width(), cells: default_cells() }
    }
}

fn default_alpha() -> f64 {
    0.1
}

fn default_eta() -> f64 {
    0.01
}

fn default_seed() -> u64 {
    1
}

fn default_reps() -> usize {
    BootstrapOptions::default().reps
}

fn default_class() -> PriorClassSpec {
    serde_json::from_str(r#"{"type":"gauss_mix"}"#).expect("default class")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_class")]
    pub prior_class: PriorClassSpec,
    pub target: TargetSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub criterion: Option<Criterion>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub bins: BinSpec,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    #[serde(default)]
    pub kernel: Kernel,
    /// Fixed localization radius instead of the bootstrap.
    #[serde(default)]
    pub c_m: Option<f64>,
    /// Known prior used as the pilot in place of the data.
    #[serde(default)]
    pub oracle_prior: Option<Vec<GaussianComponent>>,
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub output: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.bins.half_width > 0.0 && self.bins.half_width.is_finite()) || self.bins.cells == 0 {
            return Err(Error::Config("bins need half_width > 0 and at least one cell".into()));
        }
        if self.bootstrap_reps == 0 {
            return Err(Error::Config("bootstrap_reps must be positive".into()));
        }
        if self.target.x.is_empty() || self.target.x.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("target needs at least one finite x".into()));
        }
        if let Some(c) = self.c_m {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("c_m must be positive, got {c}")));
            }
        }
        self.oracle()?;
        Ok(())
    }

    pub fn oracle(&self) -> Result<Option<Prior>> {
        match &self.oracle_prior {
            None => Ok(None),
            Some(parts) => Ok(Some(
                GaussianMixturePrior::new(parts.clone())
                    .map_err(|e| Error::Config(format!("oracle_prior: {e}")))?
                    .into(),
            )),
        }
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion.unwrap_or_else(|| self.target.target.default_criterion())
    }

    pub fn bin_grid(&self) -> Result<BinGrid> {
        BinGrid::uniform(self.bins.half_width, self.bins.cells)
    }

    pub fn discretization(&self) -> Result<ClassDiscretization> {
        let class = PriorClass::from_spec(&self.prior_class)?;
        Ok(ClassDiscretization::new(class, self.bin_grid()?))
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        let pilot = match self.oracle()? {
            Some(g) => PilotMode::Oracle(g),
            None => PilotMode::Data,
        };
        Ok(PipelineOptions {
            alpha: self.alpha,
            eta: self.eta,
            criterion: self.criterion(),
            seed: self.seed,
            kernel: self.kernel,
            bootstrap: BootstrapOptions { reps: self.bootstrap_reps, ..Default::default() },
            c_m: self.c_m,
            pilot,
            ..Default::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"target":{"target":"lfsr","x":[-1.0,0.0,1.0]}}"#).unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.eta, 0.01);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.bins, BinSpec { half_width: 6.0, cells: 120 });
        assert_eq!(cfg.criterion(), Criterion::CiWidth);
        assert_eq!(cfg.bin_grid().unwrap().len(), 122);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"{
            "prior_class": {"type":"sobolev","order":1,"radius":0.5,"truncation":32,"nonneg_points":201,"nonneg_range":8.0},
            "target": {"target":"prior_density","x":[0.0]},
            "alpha": 0.05, "eta": 0.0, "criterion": "mse", "seed": 7,
            "bins": {"half_width": 5.0, "cells": 50}, "bootstrap_reps": 200, "c_m": 0.02
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.criterion(), Criterion::Mse);
        assert_eq!(cfg.target.target.linear(0.0), Some(LinearFunctional::PriorDensityAt(0.0)));
        let opts = cfg.pipeline_options().unwrap();
        assert!(matches!(opts.pilot, PilotMode::Data));
        assert_eq!((opts.seed, opts.bootstrap.reps, opts.c_m), (7, 200, Some(0.02)));
        assert_eq!(cfg.discretization().unwrap().bins().len(), 52);
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            r#"{"target":{"target":"lfsr","x":[0.0]},"alpha":1.2}"#,
            r#"{"target":{"target":"lfsr","x":[0.0]},"eta":-0.1}"#,
            r#"{"target":{"target":"lfsr","x":[]}}"#,
            r#"{"target":{"target":"lfsr","x":[0.0]},"bins":{"cells":0}}"#,
            r#"{"target":{"target":"nonsense","x":[0.0]}}"#,
            r#"{"target":{"target":"lfsr","x":[0.0]},"unknown":1}"#,
            r#"{"target":{"target":"lfsr","x":[0.0]},"oracle_prior":[{"weight":0.5,"mean":0.0,"sd":1.0}]}"#,
            "not json",
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
        let oracle = r#"{"target":{"target":"lfsr","x":[0.0]},"oracle_prior":[{"weight":1.0,"mean":0.0,"sd":1.0}]}"#;
        let opts = RunConfig::from_json(oracle).unwrap().pipeline_options().unwrap();
        assert!(matches!(opts.pilot, PilotMode::Oracle(_)));
        assert!(TargetKind::parse("prior_tail").is_ok());
        assert!(TargetKind::parse("tail").is_err());
    }
}
