use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::HeadConfig;
use crate::reinforcer::P_MIN;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    GnnCl,
    /// Plain GCN over the union of all relations with an MLP classifier.
    Gcn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::GnnCl => "gnn-cl",
            ModelKind::Gcn => "gcn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnn-cl" => Ok(ModelKind::GnnCl),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub layers: usize,
    pub lambda: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_threshold: f64,
    pub hidden_dim: usize,
    pub train_ratio: f64,
    pub seed: u64,
    /// Keep every threshold at its initial value.
    pub no_reinforcer: bool,
    /// Use `1 + W` as the self-loop weight instead of `1 + p`.
    pub fixed_weight: Option<f64>,
    pub standardize_features: bool,
    /// Hidden width of the purifier, trunk and baseline classifier MLPs.
    pub mlp_hidden: usize,
    pub head: HeadConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::GnnCl,
            epochs: 50,
            layers: 1,
            lambda: 2.0,
            tau: 0.02,
            learning_rate: 0.01,
            batch_size: 1024,
            init_threshold: 0.5,
            hidden_dim: 64,
            train_ratio: 0.4,
            seed: 0,
            no_reinforcer: false,
            fixed_weight: None,
            standardize_features: false,
            mlp_hidden: 64,
            head: HeadConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda {} must be a non-negative number", self.lambda));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return fail(format!("tau {} must be a non-negative number", self.tau));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(P_MIN..=1.0).contains(&self.init_threshold) {
            return fail(format!(
                "initial threshold {} must lie in [{P_MIN}, 1]",
                self.init_threshold
            ));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return fail(format!(
                "train ratio {} must lie strictly between 0 and 1",
                self.train_ratio
            ));
        }
        if self.hidden_dim == 0 || self.mlp_hidden == 0 {
            return fail("hidden widths must be positive".into());
        }
        if let Some(w) = self.fixed_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return fail(format!("fixed weight {w} must be non-negative"));
            }
        }
        let h = &self.head;
        if h.num_kernels == 0 || h.chunks == 0 || h.hidden == 0 || h.classifier_hidden == 0 {
            return fail("head sizes must be positive".into());
        }
        Ok(())
    }
}
