use serde::{Deserialize, Serialize};

use crate::dataset::Setting;
use crate::error::{Error, Result};

/// Edge affinity used by every message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// `(1 + cos) / 2`, in `[0, 1]`.
    #[default]
    ShiftedCosine,
    /// Raw cosine in `[-1, 1]`.
    Cosine,
}

/// Normalization of the bipartite (labeled <-> unlabeled) messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterNorm {
    /// Divide by the summed affinity, like the intra-graph messages.
    #[default]
    Normalized,
    /// Plain affinity-weighted sum.
    Unnormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(rename = "M")]
    pub layers: usize,
    #[serde(rename = "D")]
    pub hidden: usize,
    pub ways: usize,
    pub setting: Setting,
    #[serde(rename = "d")]
    pub feature_dim: usize,
    pub regressor_hidden: usize,
    pub leaky_slope: f64,
    pub phi_mode: PhiMode,
    pub inter_norm: InterNorm,
}

impl PolicyConfig {
    pub fn new(ways: usize, setting: Setting, feature_dim: usize) -> Self {
        Self {
            layers: 2,
            hidden: 64,
            ways,
            setting,
            feature_dim,
            regressor_hidden: 32,
            leaky_slope: 0.01,
            phi_mode: PhiMode::default(),
            inter_norm: InterNorm::default(),
        }
    }

    /// Length of the classifier-probability block: N in warm start, the
    /// `[min, mean, max]` summary in cold start.
    pub fn p_field_dim(&self) -> usize {
        match self.setting {
            Setting::Warm => self.ways,
            Setting::Cold => 3,
        }
    }

    /// Node input dimension `d + |p| + N`.
    pub fn input_dim(&self) -> usize {
        self.feature_dim + self.p_field_dim() + self.ways
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim()
        } else {
            self.hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.regressor_hidden == 0 {
            return Err(Error::Config("layers, hidden and regressor_hidden must be positive".into()));
        }
        if self.ways == 0 || self.feature_dim == 0 {
            return Err(Error::Config("ways and feature dimension must be positive".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }
}
