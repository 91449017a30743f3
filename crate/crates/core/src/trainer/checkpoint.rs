use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Trainer, TrainConfig};
use crate::autodiff::{Adam, Tensor};
use crate::dataset::MultiRelationGraph;
use crate::error::{Error, Result};
use crate::reinforcer::ThresholdController;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model: the config echo, named
/// parameter arrays, optimizer and controller state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub relations: Vec<String>,
    pub epochs_completed: usize,
    pub params: Vec<(String, Tensor)>,
    pub controller: ThresholdController,
    pub optimizer: Adam,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            num_nodes: self.num_nodes,
            feature_dim: self.feature_dim,
            relations: self.relation_names.clone(),
            epochs_completed: self.epochs_completed,
            params: self.store.snapshot(),
            controller: self.controller.clone(),
            optimizer: self.adam.clone(),
        }
    }

    /// Rebuilds the trainer described by `ckpt` on `graph`.
    pub fn from_checkpoint(ckpt: &Checkpoint, graph: &MultiRelationGraph) -> Result<Self> {
        let mut trainer = Trainer::new(ckpt.config.clone(), graph)?;
        trainer.restore(ckpt)?;
        Ok(trainer)
    }

    /// Loads parameters and state into this trainer. Any mismatch is an
    /// error and leaves the trainer untouched.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.num_nodes != self.num_nodes
            || ckpt.feature_dim != self.feature_dim
            || ckpt.relations != self.relation_names
        {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on {} nodes, {} features, relations {:?}",
                ckpt.num_nodes, ckpt.feature_dim, ckpt.relations
            )));
        }
        if ckpt.config.model != self.config.model {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} model, expected {}",
                ckpt.config.model, self.config.model
            )));
        }
        let c = &ckpt.controller;
        if (c.layers(), c.relations()) != (self.controller.layers(), self.controller.relations()) {
            return Err(Error::Checkpoint(format!(
                "controller has {}x{} cells, expected {}x{}",
                c.layers(),
                c.relations(),
                self.controller.layers(),
                self.controller.relations()
            )));
        }
        let mut store = self.store.clone();
        store.restore(&ckpt.params)?;
        let mut probe = store.clone();
        let mut adam = ckpt.optimizer.clone();
        // A zero-gradient step validates the optimizer state shape; run it on
        // a throwaway copy.
        adam.clone().step(&mut probe).map_err(|e| Error::Checkpoint(e.to_string()))?;
        adam.lr = self.config.learning_rate;
        self.store = store;
        self.adam = adam;
        self.controller = ckpt.controller.clone();
        self.epochs_completed = ckpt.epochs_completed;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};
    use crate::head::HeadConfig;

    fn setup() -> (MultiRelationGraph, TrainConfig) {
        let g = generate_synthetic(&SyntheticConfig {
            num_nodes: 120,
            feature_dim: 6,
            fraud_ratio: 0.2,
            relation_count: 2,
            seed: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let config = TrainConfig {
            epochs: 3,
            hidden_dim: 6,
            mlp_hidden: 5,
            seed: 2,
            head: HeadConfig {
                num_kernels: 2,
                chunks: 2,
                hidden: 3,
                classifier_hidden: 4,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        (g, config)
    }

    #[test]
    fn round_trip_reproduces_predictions() {
        let (g, config) = setup();
        let mut t = Trainer::new(config, &g).unwrap();
        t.fit(&g, |_| Ok(())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        t.checkpoint().save(&path).unwrap();
        let loaded = Trainer::from_checkpoint(&Checkpoint::load(&path).unwrap(), &g).unwrap();
        let probe: Vec<usize> = (0..40).collect();
        assert_eq!(t.predict(&g, &probe).unwrap(), loaded.predict(&g, &probe).unwrap());
        assert_eq!(loaded.controller(), t.controller());
        assert_eq!(loaded.params().snapshot(), t.params().snapshot());
    }

    #[test]
    fn mismatched_config_is_rejected_without_partial_load() {
        let (g, config) = setup();
        let mut trained = Trainer::new(config.clone(), &g).unwrap();
        trained.train_epoch(&g).unwrap();
        let ckpt = trained.checkpoint();
        let mut other = Trainer::new(TrainConfig { hidden_dim: 7, ..config }, &g).unwrap();
        let before = other.params().snapshot();
        assert!(matches!(other.restore(&ckpt), Err(Error::Checkpoint(_))));
        assert_eq!(other.params().snapshot(), before);
        assert_eq!(other.epochs_completed(), 0);
    }

    #[test]
    fn corrupt_or_foreign_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\"version\": 1").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
        let (g, config) = setup();
        let mut ckpt = Trainer::new(config, &g).unwrap().checkpoint();
        ckpt.version = 99;
        ckpt.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
