//! Parameters and forward passes of GNN-CL and the GCN baseline.
//!
//! Forward passes only touch the rows they need: the targets, plus every
//! node they aggregate from at each layer, recursively.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{glorot_uniform, CsrMatrix, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::dataset::NeighborIndex;
use crate::error::{Error, Result};
use crate::head::{HeadConfig, SequenceHead};
use crate::purifier::{prediction_distance, sample_count, select_neighbors, NeighborDistances};
use crate::reinforcer::{propagate, propagation_rows, SampledAdjacency, SelectedDistances};
use crate::relation::cross_relation_aggregate;

/// Sampled neighborhoods of one layer.
#[derive(Clone, Debug)]
pub struct LayerSample {
    /// One symmetrized adjacency per relation.
    pub adjacency: Vec<SampledAdjacency>,
    /// Selected-neighbor distances of the recorded centers, per relation.
    pub records: Vec<Vec<SelectedDistances>>,
}

/// Keeps the `ceil(p_r · |N_r(v)|)` nearest neighbors of every node under
/// every relation, measured on the purifier predictions `q` (one row per
/// node). Distances are recorded for the nodes in `record` (sorted).
pub fn sample_layer(index: &NeighborIndex, q: &Tensor, thresholds: &[f64], record: &[usize]) -> Result<LayerSample> {
    let n = q.rows();
    let mut adjacency = Vec::with_capacity(thresholds.len());
    let mut records = Vec::with_capacity(thresholds.len());
    for (r, &p) in thresholds.iter().enumerate() {
        let mut adj = SampledAdjacency::new(n);
        let mut rel_records = Vec::new();
        for v in 0..n {
            let neighbors = index.neighbors(r, v);
            if neighbors.is_empty() {
                continue;
            }
            let dist = NeighborDistances {
                center: v,
                entries: neighbors
                    .iter()
                    .map(|&u| (u, prediction_distance(q.row(v), q.row(u))))
                    .collect(),
            };
            let keep = select_neighbors(&dist, sample_count(p, neighbors.len())?)?;
            for &u in &keep.selected {
                adj.add_edge(v, u)?;
            }
            if record.binary_search(&v).is_ok() {
                rel_records.push(SelectedDistances {
                    center: v,
                    distances: keep
                        .selected
                        .iter()
                        .map(|&u| prediction_distance(q.row(v), q.row(u)))
                        .collect(),
                });
            }
        }
        adjacency.push(adj);
        records.push(rel_records);
    }
    Ok(LayerSample { adjacency, records })
}

/// Node sets per depth: `sets[L]` is `targets`, `sets[l]` adds every node
/// that layer `l + 1` aggregates from. All sorted.
fn receptive_sets(layers: &[&[SampledAdjacency]], targets: &[usize]) -> Vec<Vec<usize>> {
    let mut sets = vec![targets.to_vec()];
    for adjs in layers.iter().rev() {
        let outer = sets.last().unwrap();
        let mut next = outer.clone();
        for &v in outer {
            for adj in adjs.iter() {
                next.extend_from_slice(adj.neighbors(v));
            }
        }
        next.sort_unstable();
        next.dedup();
        sets.push(next);
    }
    sets.reverse();
    sets
}

fn positions(sub: &[usize], sup: &[usize]) -> Result<Vec<usize>> {
    sub.iter()
        .map(|v| {
            sup.binary_search(v)
                .map_err(|_| Error::InvalidArgument(format!("node {v} missing from its receptive set")))
        })
        .collect()
}

/// Propagation rows for `targets` with columns renumbered into `sources`.
fn local_propagation(adj: &SampledAdjacency, targets: &[usize], sources: &[usize], self_weight: f64) -> Result<Arc<CsrMatrix>> {
    let global = propagation_rows(adj, targets, self_weight)?;
    let rows = (0..global.rows())
        .map(|i| {
            global
                .row(i)
                .map(|(c, v)| Ok((positions(&[c], sources)?[0], v)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(CsrMatrix::from_rows(sources.len(), rows)?))
}

fn check_targets(targets: &[usize], n: usize) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target nodes".into()));
    }
    if targets.windows(2).any(|w| w[0] >= w[1]) || targets.last().is_some_and(|&v| v >= n) {
        return Err(Error::InvalidArgument(
            "target nodes must be sorted, unique and in range".into(),
        ));
    }
    Ok(())
}

/// Trunk output over `targets` plus the embeddings every layer consumed.
pub struct TrunkPass {
    pub sets: Vec<Vec<usize>>,
    /// `hidden[l]` has one row per node of `sets[l]`.
    pub hidden: Vec<Var>,
}

impl TrunkPass {
    pub fn output(&self) -> Var {
        *self.hidden.last().unwrap()
    }

    /// Rows of `hidden[l]` belonging to `targets`.
    pub fn target_rows(&self, tape: &mut Tape, l: usize) -> Result<Var> {
        let pos = positions(self.sets.last().unwrap(), &self.sets[l])?;
        tape.gather_rows(self.hidden[l], &pos)
    }
}

#[derive(Clone, Debug)]
pub struct GnnClLayer {
    pub input_width: usize,
    pub purifier: Mlp,
    pub relation_weights: Vec<ParamId>,
    pub fusion: ParamId,
}

#[derive(Clone, Debug)]
pub struct GnnClModel {
    pub layers: Vec<GnnClLayer>,
    pub trunk_classifier: Mlp,
    pub head: SequenceHead,
}

impl GnnClModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        feature_dim: usize,
        relations: usize,
        num_layers: usize,
        hidden: usize,
        mlp_hidden: usize,
        head: &HeadConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if relations == 0 {
            return Err(Error::InvalidConfig("the graph has no relations".into()));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let input_width = if l == 0 { feature_dim } else { hidden };
            let purifier = Mlp::new(store, &format!("layer{l}.purifier"), &[input_width, mlp_hidden, 1], rng)?;
            let relation_weights = (0..relations)
                .map(|r| {
                    store.add(
                        format!("layer{l}.relation{r}.weight"),
                        glorot_uniform(rng, input_width, hidden, input_width, hidden),
                    )
                })
                .collect();
            let fused_in = input_width + relations * hidden;
            let fusion = store.add(
                format!("layer{l}.fusion.weight"),
                glorot_uniform(rng, fused_in, hidden, fused_in, hidden),
            );
            layers.push(GnnClLayer {
                input_width,
                purifier,
                relation_weights,
                fusion,
            });
        }
        let trunk_classifier = Mlp::new(store, "trunk_classifier", &[hidden, mlp_hidden, 1], rng)?;
        let head = SequenceHead::new(store, "head", hidden, head, rng)?;
        Ok(GnnClModel {
            layers,
            trunk_classifier,
            head,
        })
    }

    /// Forward through the first `samples.len()` layers for `targets`.
    /// `self_weights[l][r]` is the self-loop weight of each aggregation.
    pub fn trunk(&self, tape: &mut Tape, store: &ParamStore, features: &Tensor, samples: &[LayerSample], self_weights: &[Vec<f64>], targets: &[usize]) -> Result<TrunkPass> {
        check_targets(targets, features.rows())?;
        let adjs: Vec<&[SampledAdjacency]> = samples.iter().map(|s| s.adjacency.as_slice()).collect();
        let sets = receptive_sets(&adjs, targets);
        let mut hidden = vec![tape.constant(features.select_rows(&sets[0]))];
        for (l, sample) in samples.iter().enumerate() {
            let layer = &self.layers[l];
            let (sources, outs) = (&sets[l], &sets[l + 1]);
            let h = hidden[l];
            let mut per_relation = Vec::with_capacity(sample.adjacency.len());
            for (r, adj) in sample.adjacency.iter().enumerate() {
                let prop = local_propagation(adj, outs, sources, self_weights[l][r])?;
                let w = tape.param(store, layer.relation_weights[r]);
                per_relation.push(propagate(tape, prop, h, w)?);
            }
            let prev = tape.gather_rows(h, &positions(outs, sources)?)?;
            let w = tape.param(store, layer.fusion);
            hidden.push(cross_relation_aggregate(tape, prev, &per_relation, w)?);
        }
        Ok(TrunkPass { sets, hidden })
    }

    /// Purifier predictions for every node at layer `l`, given the samples
    /// of the layers below it.
    pub fn purifier_predictions(&self, store: &ParamStore, features: &Tensor, samples: &[LayerSample], self_weights: &[Vec<f64>]) -> Result<Tensor> {
        let l = samples.len();
        let h = if l == 0 {
            features.clone()
        } else {
            let mut tape = Tape::new();
            let all: Vec<usize> = (0..features.rows()).collect();
            let pass = self.trunk(&mut tape, store, features, samples, self_weights, &all)?;
            tape.value(pass.output())?.clone()
        };
        self.layers[l].purifier.predict(store, &h)
    }
}

#[derive(Clone, Debug)]
pub struct GcnModel {
    pub layers: Vec<ParamId>,
    pub classifier: Mlp,
}

impl GcnModel {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, feature_dim: usize, num_layers: usize, hidden: usize, mlp_hidden: usize, rng: &mut R) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| {
                let input = if l == 0 { feature_dim } else { hidden };
                store.add(
                    format!("gcn{l}.weight"),
                    glorot_uniform(rng, input, hidden, input, hidden),
                )
            })
            .collect();
        let classifier = Mlp::new(store, "gcn_classifier", &[hidden, mlp_hidden, 1], rng)?;
        Ok(GcnModel { layers, classifier })
    }

    /// Stacked GCN layers over the fixed homogeneous graph `adj`.
    pub fn trunk(&self, tape: &mut Tape, store: &ParamStore, features: &Tensor, adj: &SampledAdjacency, targets: &[usize]) -> Result<TrunkPass> {
        check_targets(targets, features.rows())?;
        let per_layer: Vec<&[SampledAdjacency]> = self.layers.iter().map(|_| std::slice::from_ref(adj)).collect();
        let sets = receptive_sets(&per_layer, targets);
        let mut hidden = vec![tape.constant(features.select_rows(&sets[0]))];
        for (l, &weight) in self.layers.iter().enumerate() {
            let prop = local_propagation(adj, &sets[l + 1], &sets[l], 1.0)?;
            let w = tape.param(store, weight);
            let h = propagate(tape, prop, hidden[l], w)?;
            hidden.push(h);
        }
        Ok(TrunkPass { sets, hidden })
    }
}
