//! Mini-batch training, evaluation and checkpointing for GNN-CL and the
//! GCN baseline.

mod checkpoint;
mod config;
mod log;
mod model;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, ParamStore, Tape, Tensor, Var};
use crate::dataset::{split_stratified, DataSplit, MultiRelationGraph, NeighborIndex};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport, DEFAULT_THRESHOLD};
use crate::purifier::purifier_loss;
use crate::reinforcer::{average_fraud_distance, SampledAdjacency, ThresholdController};
use crate::relation::gnn_loss;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelKind, TrainConfig};
pub use log::{epoch_csv_header, epoch_csv_row, write_epoch_csv, EpochLog};
pub use model::{sample_layer, GcnModel, GnnClLayer, GnnClModel, LayerSample, TrunkPass};

/// `L_head + L_GNN + λ · Σ_l L_D^{(l)}`.
pub fn total_loss(tape: &mut Tape, head: Var, gnn: Var, purifier: &[Var], lambda: f64) -> Result<Var> {
    let mut total = tape.add(head, gnn)?;
    for &l in purifier {
        let weighted = tape.scale(l, lambda)?;
        total = tape.add(total, weighted)?;
    }
    Ok(total)
}

/// Applies the configured feature preprocessing in place.
pub fn prepare_graph(graph: &mut MultiRelationGraph, config: &TrainConfig) {
    if config.standardize_features {
        graph.standardize_features();
    }
}

#[derive(Clone, Debug)]
enum Model {
    GnnCl(GnnClModel),
    Gcn(GcnModel, SampledAdjacency),
}

struct BatchLosses {
    total: Var,
    head: Var,
    gnn: Var,
    purifier: Vec<Var>,
}

/// Owns the parameters, optimizer and threshold controller of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    store: ParamStore,
    model: Model,
    adam: Adam,
    controller: ThresholdController,
    split: DataSplit,
    index: NeighborIndex,
    num_nodes: usize,
    feature_dim: usize,
    relation_names: Vec<String>,
    epochs_completed: usize,
}

impl Trainer {
    /// Initializes parameters from the seed and splits the graph.
    pub fn new(config: TrainConfig, graph: &MultiRelationGraph) -> Result<Self> {
        config.validate()?;
        let split = split_stratified(graph, config.train_ratio, config.seed)?;
        let index = NeighborIndex::new(graph);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let relations = graph.relations().len();
        let (model, controller_layers) = match config.model {
            ModelKind::GnnCl => {
                let m = GnnClModel::new(
                    &mut store,
                    graph.feature_dim(),
                    relations,
                    config.layers,
                    config.hidden_dim,
                    config.mlp_hidden,
                    &config.head,
                    &mut rng,
                )?;
                (Model::GnnCl(m), config.layers)
            }
            ModelKind::Gcn => {
                let m = GcnModel::new(
                    &mut store,
                    graph.feature_dim(),
                    config.layers,
                    config.hidden_dim,
                    config.mlp_hidden,
                    &mut rng,
                )?;
                let mut adj = SampledAdjacency::new(graph.num_nodes());
                for v in 0..graph.num_nodes() {
                    for &u in index.merged(v) {
                        adj.add_edge(v, u)?;
                    }
                }
                (Model::Gcn(m, adj), 0)
            }
        };
        let controller = ThresholdController::new(
            controller_layers,
            relations,
            config.init_threshold,
            config.tau,
            config.epochs,
        )?;
        let adam = Adam::new(&store, config.learning_rate);
        Ok(Trainer {
            num_nodes: graph.num_nodes(),
            feature_dim: graph.feature_dim(),
            relation_names: graph.relation_names(),
            config,
            store,
            model,
            adam,
            controller,
            split,
            index,
            epochs_completed: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn split(&self) -> &DataSplit {
        &self.split
    }

    pub fn controller(&self) -> &ThresholdController {
        &self.controller
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    fn check_graph(&self, graph: &MultiRelationGraph) -> Result<()> {
        if graph.num_nodes() != self.num_nodes
            || graph.feature_dim() != self.feature_dim
            || graph.relation_names() != self.relation_names
        {
            return Err(Error::InvalidArgument(format!(
                "graph ({} nodes, {} features, relations {:?}) does not match the model ({} nodes, {} features, relations {:?})",
                graph.num_nodes(),
                graph.feature_dim(),
                graph.relation_names(),
                self.num_nodes,
                self.feature_dim,
                self.relation_names
            )));
        }
        Ok(())
    }

    /// Self-loop weight of each (layer, relation) aggregation.
    fn self_weights(&self) -> Vec<Vec<f64>> {
        self.controller
            .p_matrix()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|p| 1.0 + self.config.fixed_weight.unwrap_or(p))
                    .collect()
            })
            .collect()
    }

    /// Samples every layer with the current parameters and thresholds.
    fn sample_all(&self, model: &GnnClModel, graph: &MultiRelationGraph, record: &[usize]) -> Result<Vec<LayerSample>> {
        let weights = self.self_weights();
        let mut samples = Vec::with_capacity(model.layers.len());
        for l in 0..model.layers.len() {
            let q = model.purifier_predictions(&self.store, graph.features(), &samples, &weights)?;
            let p = &self.controller.p_matrix()[l];
            samples.push(sample_layer(&self.index, &q, p, record)?);
        }
        Ok(samples)
    }

    fn batch_losses(&self, tape: &mut Tape, graph: &MultiRelationGraph, samples: &[LayerSample], batch: &[usize]) -> Result<BatchLosses> {
        let labels: Vec<f64> = batch.iter().map(|&v| graph.labels()[v] as f64).collect();
        match &self.model {
            Model::GnnCl(model) => {
                let pass = model.trunk(tape, &self.store, graph.features(), samples, &self.self_weights(), batch)?;
                let mut purifier = Vec::with_capacity(model.layers.len());
                for (l, layer) in model.layers.iter().enumerate() {
                    let h = pass.target_rows(tape, l)?;
                    purifier.push(purifier_loss(tape, &layer.purifier, &self.store, &[h], &labels)?);
                }
                let out = pass.output();
                let gnn = gnn_loss(tape, &model.trunk_classifier, &self.store, out, &labels)?;
                let q = model.head.predict(tape, &self.store, out)?;
                let head = tape.bce(q, &labels)?;
                let total = total_loss(tape, head, gnn, &purifier, self.config.lambda)?;
                Ok(BatchLosses { total, head, gnn, purifier })
            }
            Model::Gcn(model, adj) => {
                let pass = model.trunk(tape, &self.store, graph.features(), adj, batch)?;
                let gnn = gnn_loss(tape, &model.classifier, &self.store, pass.output(), &labels)?;
                let head = tape.constant(Tensor::scalar(0.0));
                let total = tape.add(head, gnn)?;
                Ok(BatchLosses { total, head, gnn, purifier: Vec::new() })
            }
        }
    }

    /// One pass over the shuffled training nodes followed by the
    /// threshold update.
    pub fn train_epoch(&mut self, graph: &MultiRelationGraph) -> Result<EpochLog> {
        self.check_graph(graph)?;
        let started = Instant::now();
        let epoch = self.epochs_completed + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order = self.split.train.clone();
        order.shuffle(&mut rng);

        let (mut sum_total, mut sum_head, mut sum_gnn, mut sum_purifier) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(self.config.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let samples = match &self.model {
                Model::GnnCl(m) => self.sample_all(m, graph, &[])?,
                Model::Gcn(..) => Vec::new(),
            };
            let mut tape = Tape::new();
            let losses = self.batch_losses(&mut tape, graph, &samples, &batch)?;
            let value = |tape: &Tape, v: Var| -> Result<f64> { Ok(tape.value(v)?.data()[0]) };
            let share = batch.len() as f64 / order.len() as f64;
            sum_total += share * value(&tape, losses.total)?;
            sum_head += share * value(&tape, losses.head)?;
            sum_gnn += share * value(&tape, losses.gnn)?;
            for &l in &losses.purifier {
                sum_purifier += share * value(&tape, l)?;
            }
            let grads = tape.backward(losses.total)?;
            self.store.accumulate(&grads)?;
            self.adam.step(&mut self.store)?;
        }

        let dbar = match &self.model {
            Model::GnnCl(m) => {
                let samples = self.sample_all(m, graph, &self.split.train_fraud)?;
                samples
                    .iter()
                    .map(|s| {
                        s.records
                            .iter()
                            .map(|rec| average_fraud_distance(rec, &self.split))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Model::Gcn(..) => Vec::new(),
        };
        self.controller.advance_epoch();
        if !self.config.no_reinforcer {
            let no_signal = self.split.train_fraud.is_empty();
            for (l, row) in dbar.iter().enumerate() {
                for (r, &d) in row.iter().enumerate() {
                    if no_signal {
                        self.controller.freeze(l, r);
                        continue;
                    }
                    self.controller.rl_update(l, r, d);
                    self.controller.rl_terminated(l, r);
                }
            }
        }
        self.epochs_completed = epoch;
        Ok(EpochLog {
            epoch,
            loss_total: sum_total,
            loss_head: sum_head,
            loss_gnn: sum_gnn,
            loss_purifier: sum_purifier,
            p: self.controller.p_matrix(),
            dbar,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Runs the remaining configured epochs, reporting each as it ends.
    pub fn fit(&mut self, graph: &MultiRelationGraph, mut on_epoch: impl FnMut(&EpochLog) -> Result<()>) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while self.epochs_completed < self.config.epochs {
            let log = self.train_epoch(graph)?;
            on_epoch(&log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    /// Fraud probabilities for `nodes`, in the given order. Thresholds stay
    /// frozen at their current values.
    pub fn predict(&self, graph: &MultiRelationGraph, nodes: &[usize]) -> Result<Vec<f64>> {
        self.check_graph(graph)?;
        if let Some(&v) = nodes.iter().find(|&&v| v >= self.num_nodes) {
            return Err(Error::InvalidArgument(format!("node {v} out of range")));
        }
        let mut unique = nodes.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let samples = match &self.model {
            Model::GnnCl(m) => self.sample_all(m, graph, &[])?,
            Model::Gcn(..) => Vec::new(),
        };
        let mut scores = vec![0.0; self.num_nodes];
        for batch in unique.chunks(self.config.batch_size) {
            let mut tape = Tape::new();
            let q = match &self.model {
                Model::GnnCl(m) => {
                    let pass = m.trunk(&mut tape, &self.store, graph.features(), &samples, &self.self_weights(), batch)?;
                    m.head.predict(&mut tape, &self.store, pass.output())?
                }
                Model::Gcn(m, adj) => {
                    let pass = m.trunk(&mut tape, &self.store, graph.features(), adj, batch)?;
                    m.classifier.forward(&mut tape, &self.store, pass.output())?
                }
            };
            for (&v, &s) in batch.iter().zip(tape.value(q)?.data()) {
                scores[v] = s;
            }
        }
        Ok(nodes.iter().map(|&v| scores[v]).collect())
    }

    /// Metrics at the 0.5 cut over `nodes`.
    pub fn evaluate(&self, graph: &MultiRelationGraph, nodes: &[usize]) -> Result<MetricsReport> {
        let scores = self.predict(graph, nodes)?;
        let labels: Vec<u8> = nodes.iter().map(|&v| graph.labels()[v]).collect();
        compute_metrics(&scores, &labels, DEFAULT_THRESHOLD)
    }

    /// Metrics over the held-out nodes of the split.
    pub fn evaluate_test(&self, graph: &MultiRelationGraph) -> Result<MetricsReport> {
        self.evaluate(graph, &self.split.test)
    }
}
