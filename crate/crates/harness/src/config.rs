//! Run configuration and its TOML file form.
//!
//! ```toml
//! seed = 7
//! epochs = 200
//! batch_size = 16
//! patience = 20
//!
//! [optim]
//! lr = 0.001
//! weight_decay = 0.0
//!
//! [model]
//! hidden = 32
//! heads = 4
//! hop_bound = 4        # or "inf"
//! ```
//!
//! Every key is optional; missing keys take their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use dgssm_core::algos::PageRankConfig;
use dgssm_core::model::ModelConfig;
use dgssm_core::nn::AdamWConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Graphs per optimization step.
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub optim: AdamWConfig,
    pub model: ModelConfig,
    pub pagerank: PageRankConfig,
    /// Where the checkpoint and metric log go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 200,
            batch_size: 16,
            patience: 20,
            optim: AdamWConfig::default(),
            model: ModelConfig::default(),
            pagerank: PageRankConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be positive".into()));
        }
        let o = &self.optim;
        if !(o.lr >= 0.0 && o.lr.is_finite()) || o.weight_decay < 0.0 {
            return Err(HarnessError::Config(format!(
                "need lr >= 0 and weight_decay >= 0, got {} and {}",
                o.lr, o.weight_decay
            )));
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) || o.eps <= 0.0 {
            return Err(HarnessError::Config("betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| HarnessError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        Self::from_toml_str(&text, path)
    }
}
