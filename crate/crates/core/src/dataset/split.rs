use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::MultiRelationGraph;
use crate::error::{Error, Result};

/// Disjoint train/test partition. All index lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Fraud nodes of the training set.
    pub train_fraud: Vec<usize>,
}

/// Class-stratified split with `round(train_ratio · N)` training nodes, of
/// which `round(|train| · fraud / N)` are fraud.
pub fn split_stratified(graph: &MultiRelationGraph, train_ratio: f64, seed: u64) -> Result<DataSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train ratio {train_ratio} must lie strictly between 0 and 1"
        )));
    }
    let n = graph.num_nodes();
    let (mut fraud, mut benign): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&v| graph.labels()[v] == 1);
    if fraud.is_empty() || benign.is_empty() {
        return Err(Error::InvalidArgument(
            "stratified split needs both classes present".into(),
        ));
    }
    let n_train = (train_ratio * n as f64).round() as usize;
    let n_train_fraud = ((n_train * fraud.len()) as f64 / n as f64).round() as usize;
    let n_train_fraud = n_train_fraud.min(fraud.len());
    let n_train_benign = (n_train - n_train_fraud).min(benign.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fraud.shuffle(&mut rng);
    benign.shuffle(&mut rng);

    let mut train_fraud = fraud[..n_train_fraud].to_vec();
    let mut train: Vec<usize> = train_fraud
        .iter()
        .chain(&benign[..n_train_benign])
        .copied()
        .collect();
    let mut test: Vec<usize> = fraud[n_train_fraud..]
        .iter()
        .chain(&benign[n_train_benign..])
        .copied()
        .collect();
    train_fraud.sort_unstable();
    train.sort_unstable();
    test.sort_unstable();
    Ok(DataSplit {
        train,
        test,
        train_fraud,
    })
}
