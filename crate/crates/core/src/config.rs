//! JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub survey_1: SyntheticSpec,
    pub survey_2: SyntheticSpec,
    /// Draw survey 2 with the rock and wavelet statistics of survey 1.
    pub related: bool,
    pub wells_1: usize,
    pub wells_2: usize,
    pub alphas: Vec<f64>,
    /// Traces shown in overlay plots; empty picks three evenly spaced traces.
    pub trace_picks: Vec<usize>,
    /// Directory holding the survey grids; defaults to the output directory.
    pub data_dir: Option<PathBuf>,
    /// Directory holding the checkpoints; defaults to the output directory.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            survey_1: SyntheticSpec {
                n_traces: 255,
                seed: 1,
                ..SyntheticSpec::default()
            },
            survey_2: SyntheticSpec {
                n_traces: 200,
                seed: 2,
                n_layers: 9,
                impedance_min: 1500.0,
                impedance_max: 3800.0,
                trend: -0.4,
                contrast: 0.6,
                wavelet_freq: 18.0,
                ..SyntheticSpec::default()
            },
            related: true,
            wells_1: 51,
            wells_2: 12,
            alphas: vec![0.0, 0.01, 0.1, 1.0, 10.0],
            trace_picks: Vec::new(),
            data_dir: None,
            checkpoint_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section; any failure is reported as a configuration error.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.model.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.survey_1.validate().map_err(cfg_err)?;
        self.survey_2.validate().map_err(cfg_err)?;
        for (name, wells, spec) in [("wells_1", self.wells_1, &self.survey_1), ("wells_2", self.wells_2, &self.survey_2)] {
            if wells == 0 || wells > spec.n_traces {
                return Err(Error::Config(format!(
                    "{name} = {wells} must lie in 1..={}",
                    spec.n_traces
                )));
            }
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config("alphas must be a non-empty list of finite values >= 0".into()));
        }
        let width = self.survey_1.n_traces.min(self.survey_2.n_traces);
        if let Some(p) = self.trace_picks.iter().find(|&&p| p >= width) {
            return Err(Error::Config(format!("trace pick {p} is outside the surveys")));
        }
        if let (Some(a), Some(b)) = (&self.data_dir, &self.checkpoint_dir) {
            if a == b {
                return Err(Error::Config("data_dir and checkpoint_dir must differ".into()));
            }
        }
        Ok(())
    }

    /// The configured picks, or three evenly spaced traces of survey 2.
    pub fn picks(&self) -> Vec<usize> {
        if self.trace_picks.is_empty() {
            let n = self.survey_2.n_traces;
            vec![n / 4, n / 2, 3 * n / 4]
        } else {
            self.trace_picks.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_json() {
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
        assert_eq!((cfg.wells_1, cfg.wells_2), (51, 12));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"aplha": 1}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"train": {"epoch": 3}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"train": {"alpha": -1}}"#,
            r#"{"wells_2": 0}"#,
            r#"{"wells_2": 500}"#,
            r#"{"alphas": []}"#,
            r#"{"model": {"patch_width": 4}}"#,
            r#"{"trace_picks": [300]}"#,
            r#"{"data_dir": "a", "checkpoint_dir": "a"}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
