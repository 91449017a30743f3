use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph::{MultiRelationGraph, Relation};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Euclidean distance between the two class means.
pub const CLASS_MEAN_SEPARATION: f64 = 2.0;

/// Parameters of the camouflage graph generator.
///
/// Features are two unit-variance Gaussian blobs whose means sit
/// [`CLASS_MEAN_SEPARATION`] apart. For each relation, `num_nodes ·
/// avg_degree / 2` edges are drawn from a uniformly chosen endpoint to a
/// partner of the same class with probability `intra_class_prob` and of the
/// other class otherwise. Afterwards every edge touching a fraud node is,
/// with probability `camouflage_rate`, rewired so that the fraud node links
/// to a random benign node instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub fraud_ratio: f64,
    pub relation_count: usize,
    pub intra_class_prob: f64,
    pub camouflage_rate: f64,
    pub avg_degree: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 1000,
            feature_dim: 16,
            fraud_ratio: 0.1,
            relation_count: 3,
            intra_class_prob: 0.8,
            camouflage_rate: 0.5,
            avg_degree: 8.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        prob("fraud_ratio", self.fraud_ratio)?;
        prob("intra_class_prob", self.intra_class_prob)?;
        prob("camouflage_rate", self.camouflage_rate)?;
        if self.num_nodes < 10 {
            return Err(Error::InvalidConfig(format!(
                "num_nodes = {} must be at least 10",
                self.num_nodes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree.is_finite()) {
            return Err(Error::InvalidConfig("avg_degree must be non-negative".into()));
        }
        let fraud = self.fraud_count();
        if fraud == 0 {
            return Err(Error::InvalidConfig(format!(
                "fraud_ratio {} yields no fraud nodes",
                self.fraud_ratio
            )));
        }
        if fraud == self.num_nodes {
            return Err(Error::InvalidConfig(format!(
                "fraud_ratio {} yields no benign nodes",
                self.fraud_ratio
            )));
        }
        Ok(())
    }

    pub fn fraud_count(&self) -> usize {
        (self.fraud_ratio * self.num_nodes as f64).round() as usize
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<MultiRelationGraph> {
    config.validate()?;
    let n = config.num_nodes;
    let d = config.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let fraud_set: HashSet<usize> = nodes[..config.fraud_count()].iter().copied().collect();
    let labels: Vec<u8> = (0..n).map(|v| u8::from(fraud_set.contains(&v))).collect();
    let mut fraud: Vec<usize> = fraud_set.iter().copied().collect();
    fraud.sort_unstable();
    let benign: Vec<usize> = (0..n).filter(|v| !fraud_set.contains(v)).collect();

    let offset = CLASS_MEAN_SEPARATION / (d as f64).sqrt();
    let mut features = Vec::with_capacity(n * d);
    for &label in &labels {
        for _ in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(noise + if label == 1 { offset } else { 0.0 });
        }
    }

    let target = (n as f64 * config.avg_degree / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    let mut relations = Vec::with_capacity(config.relation_count);
    for r in 0..config.relation_count {
        let mut edges: HashSet<(usize, usize)> = HashSet::with_capacity(target);
        let mut order: Vec<(usize, usize)> = Vec::with_capacity(target);
        let mut attempts = 0usize;
        while order.len() < target.min(max_edges) && attempts < 20 * target + 100 {
            attempts += 1;
            let u = rng.random_range(0..n);
            let same = rng.random_bool(config.intra_class_prob);
            let u_is_fraud = labels[u] == 1;
            let pool = if same == u_is_fraud { &fraud } else { &benign };
            let v = *pool.choose(&mut rng).unwrap();
            let key = (u.min(v), u.max(v));
            if u != v && edges.insert(key) {
                order.push(key);
            }
        }

        for slot in order.iter_mut() {
            let (a, b) = *slot;
            let (fa, fb) = (labels[a] == 1, labels[b] == 1);
            if !(fa || fb) || !rng.random_bool(config.camouflage_rate) {
                continue;
            }
            let keep = match (fa, fb) {
                (true, true) => {
                    if rng.random_bool(0.5) {
                        a
                    } else {
                        b
                    }
                }
                (true, false) => a,
                _ => b,
            };
            for _ in 0..10 {
                let partner = *benign.choose(&mut rng).unwrap();
                let key = (keep.min(partner), keep.max(partner));
                if !edges.contains(&key) {
                    edges.remove(slot);
                    edges.insert(key);
                    *slot = key;
                    break;
                }
            }
        }
        relations.push(Relation::from_pairs(format!("r{r}"), order));
    }

    MultiRelationGraph::new(Tensor::matrix(n, d, features)?, labels, relations)
}
