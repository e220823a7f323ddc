//! Run-level configuration file: training, evaluation and analysis
//! settings under one JSON document. Missing sections take defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::error::{MltError, Result};
use crate::eval::EvalConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval.n_folds < 2 {
            return Err(MltError::Spec("n_folds must be at least 2".into()));
        }
        if self.eval.n_neg_sets == 0 || self.analysis.n_boot == 0 || self.analysis.n_perm == 0 {
            return Err(MltError::Spec("resampling counts must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
