use serde::{Deserialize, Serialize};

use crate::algos::HopBound;
use crate::error::{Error, Result};
use crate::ssm::SsmInit;

/// What the output head predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NodeClassify,
    NodeRegress,
    GraphClassify,
    GraphRegress,
}

impl Task {
    pub fn is_node_level(self) -> bool {
        matches!(self, Task::NodeClassify | Task::NodeRegress)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Task::NodeClassify | Task::GraphClassify)
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-classify" => Ok(Task::NodeClassify),
            "node-regress" => Ok(Task::NodeRegress),
            "graph-classify" => Ok(Task::GraphClassify),
            "graph-regress" => Ok(Task::GraphRegress),
            _ => Err(Error::Config(format!("unknown task `{s}`"))),
        }
    }
}

/// Which fusion-attention branches run after each scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// All three branches, including the per-graph pooled branch.
    #[default]
    Full,
    /// Only the two per-node branches; every node's output then depends only
    /// on its own scan output.
    Local,
    /// Scan output passes through unchanged.
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_features: usize,
    pub num_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Directed gated GCN layers in the input encoder; 0 disables them.
    pub se_layers: usize,
    pub ssm_state: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub hop_bound: HopBound,
    pub dropout: f64,
    pub bidirectional: bool,
    pub task: Task,
    /// Output width for classification tasks.
    pub num_classes: usize,
    pub use_depth_pe: bool,
    pub fusion: FusionMode,
    pub ssm_init: SsmInit,
    pub ffn_expansion: usize,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_features: 1,
            num_layers: 2,
            hidden: 32,
            heads: 4,
            se_layers: 1,
            ssm_state: 8,
            dt_min: 0.001,
            dt_max: 0.1,
            hop_bound: HopBound::Finite(4),
            dropout: 0.0,
            bidirectional: true,
            task: Task::NodeRegress,
            num_classes: 2,
            use_depth_pe: true,
            fusion: FusionMode::Full,
            ssm_init: SsmInit::S4dReal,
            ffn_expansion: 2,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn output_dim(&self) -> usize {
        if self.task.is_classification() {
            self.num_classes
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.in_features == 0 {
            return fail("in_features must be positive".into());
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return fail(format!("hidden {} must be a positive multiple of heads {}", self.hidden, self.heads));
        }
        if self.ssm_state == 0 {
            return fail("ssm_state must be positive".into());
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max && self.dt_max.is_finite()) {
            return fail(format!("need 0 < dt_min < dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.task.is_classification() && self.num_classes < 2 {
            return fail("classification needs at least 2 classes".into());
        }
        if self.ffn_expansion == 0 {
            return fail("ffn_expansion must be positive".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }
}
