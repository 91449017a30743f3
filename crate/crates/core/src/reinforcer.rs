//! Core-node intensifier: symmetric-normalized aggregation whose self-loop
//! weight is `1 + p`, and the controller that walks each per-(layer,
//! relation) threshold `p` by `±τ` from the fraud–neighbor distance signal.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{CsrMatrix, Tape, Var};
use crate::dataset::DataSplit;
use crate::error::{Error, Result};

/// Lowest threshold the controller will move to.
pub const P_MIN: f64 = 0.05;
/// Number of trailing actions inspected by the termination rule.
pub const TERMINATION_WINDOW: usize = 10;

/// Undirected adjacency without self-loops over `m` local node slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledAdjacency {
    neighbors: Vec<Vec<usize>>,
}

impl SampledAdjacency {
    pub fn new(num_nodes: usize) -> Self {
        SampledAdjacency {
            neighbors: vec![Vec::new(); num_nodes],
        }
    }

    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::new(num_nodes);
        for &(u, v) in edges {
            adj.add_edge(u, v)?;
        }
        Ok(adj)
    }

    /// Symmetrized union of `center → selected` links.
    pub fn from_selections<'a>(num_nodes: usize, selections: impl IntoIterator<Item = (usize, &'a [usize])>) -> Result<Self> {
        let mut adj = Self::new(num_nodes);
        for (center, selected) in selections {
            for &u in selected {
                adj.add_edge(center, u)?;
            }
        }
        Ok(adj)
    }

    /// Adds the undirected edge `(u, v)` once; self-loops are rejected.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        let n = self.neighbors.len();
        if u >= n || v >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({u}, {v}) outside {n} nodes"
            )));
        }
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop on {u}")));
        }
        if let Err(pos) = self.neighbors[u].binary_search(&v) {
            self.neighbors[u].insert(pos, v);
            let pos = self.neighbors[v].binary_search(&u).unwrap_err();
            self.neighbors[v].insert(pos, u);
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Rows `rows` of `M^{-1/2} (A + s·I) M^{-1/2}` with `M = diag(rowsum)`.
/// `self_weight = 1` gives the usual GCN propagation matrix.
pub fn propagation_rows(adj: &SampledAdjacency, rows: &[usize], self_weight: f64) -> Result<CsrMatrix> {
    if !(self_weight.is_finite() && self_weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "self-loop weight {self_weight} must be positive"
        )));
    }
    let degree = |v: usize| adj.neighbors(v).len() as f64 + self_weight;
    let mut out = Vec::with_capacity(rows.len());
    for &v in rows {
        if v >= adj.num_nodes() {
            return Err(Error::InvalidArgument(format!("row {v} outside adjacency")));
        }
        let dv = degree(v);
        let mut row = Vec::with_capacity(adj.neighbors(v).len() + 1);
        row.push((v, self_weight / dv));
        for &u in adj.neighbors(v) {
            row.push((u, 1.0 / (dv * degree(u)).sqrt()));
        }
        out.push(row);
    }
    CsrMatrix::from_rows(adj.num_nodes(), out)
}

/// `ReLU(P · h · W)` for an explicit propagation matrix.
pub fn propagate(tape: &mut Tape, propagation: Arc<CsrMatrix>, h: Var, w: Var) -> Result<Var> {
    let mixed = tape.spmm(propagation, h)?;
    let projected = tape.matmul(mixed, w)?;
    tape.relu(projected)
}

fn check_rows(tape: &Tape, adj: &SampledAdjacency, h: Var) -> Result<()> {
    let rows = tape.value(h)?.rows();
    if rows != adj.num_nodes() {
        return Err(Error::shape(
            "aggregate",
            format!("{rows} embedding rows for {} nodes", adj.num_nodes()),
        ));
    }
    Ok(())
}

/// `ReLU(D̃^{-1/2} (A + I) D̃^{-1/2} h W)` over every node of `adj`.
pub fn plain_gcn_layer(tape: &mut Tape, adj: &SampledAdjacency, h: Var, w: Var) -> Result<Var> {
    check_rows(tape, adj, h)?;
    let all: Vec<usize> = (0..adj.num_nodes()).collect();
    let prop = propagation_rows(adj, &all, 1.0)?;
    propagate(tape, Arc::new(prop), h, w)
}

/// `ReLU(M̃^{-1/2} (A + (1+p)·I) M̃^{-1/2} h W)` over every node of `adj`.
pub fn weighted_self_loop_aggregate(tape: &mut Tape, adj: &SampledAdjacency, h: Var, w: Var, p: f64) -> Result<Var> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold {p} must be non-negative")));
    }
    check_rows(tape, adj, h)?;
    let all: Vec<usize> = (0..adj.num_nodes()).collect();
    let prop = propagation_rows(adj, &all, 1.0 + p)?;
    propagate(tape, Arc::new(prop), h, w)
}

/// Distances from one center to the neighbors it kept.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectedDistances {
    pub center: usize,
    pub distances: Vec<f64>,
}

/// Sum of selected-neighbor distances over training fraud centers, divided
/// by the training-set size. Centers that are not training fraud nodes are
/// ignored.
pub fn average_fraud_distance(records: &[SelectedDistances], split: &DataSplit) -> Result<f64> {
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let total: f64 = records
        .iter()
        .filter(|r| split.train_fraud.binary_search(&r.center).is_ok())
        .flat_map(|r| r.distances.iter())
        .sum();
    Ok(total / split.train.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerCell {
    pub p: f64,
    pub actions: Vec<f64>,
    pub previous: Option<f64>,
    pub terminated: bool,
}

/// Per-(layer, relation) thresholds tuned by the `±τ` rule.
///
/// Each epoch the trainer calls [`advance_epoch`](Self::advance_epoch) once,
/// then [`rl_update`](Self::rl_update) and
/// [`rl_terminated`](Self::rl_terminated) for every live cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdController {
    layers: usize,
    relations: usize,
    tau: f64,
    p_min: f64,
    max_epochs: usize,
    epoch: usize,
    cells: Vec<ControllerCell>,
}

impl ThresholdController {
    pub fn new(layers: usize, relations: usize, initial_p: f64, tau: f64, max_epochs: usize) -> Result<Self> {
        if !(P_MIN..=1.0).contains(&initial_p) {
            return Err(Error::InvalidConfig(format!(
                "initial threshold {initial_p} must lie in [{P_MIN}, 1]"
            )));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau {tau} must be non-negative")));
        }
        let cell = ControllerCell {
            p: initial_p,
            actions: Vec::new(),
            previous: None,
            terminated: false,
        };
        Ok(ThresholdController {
            layers,
            relations,
            tau,
            p_min: P_MIN,
            max_epochs,
            epoch: 0,
            cells: vec![cell; layers * relations],
        })
    }

    fn slot(&self, layer: usize, relation: usize) -> usize {
        assert!(layer < self.layers && relation < self.relations, "cell ({layer}, {relation}) out of range");
        layer * self.relations + relation
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn relations(&self) -> usize {
        self.relations
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs
    }

    pub fn p(&self, layer: usize, relation: usize) -> f64 {
        self.cells[self.slot(layer, relation)].p
    }

    pub fn cell(&self, layer: usize, relation: usize) -> &ControllerCell {
        &self.cells[self.slot(layer, relation)]
    }

    /// Thresholds as `[layer][relation]`.
    pub fn p_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.layers)
            .map(|l| (0..self.relations).map(|r| self.p(l, r)).collect())
            .collect()
    }

    pub fn all_terminated(&self) -> bool {
        self.cells.iter().all(|c| c.terminated)
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Feeds this epoch's average fraud distance. The first measurement of a
    /// cell is only recorded; afterwards `p` moves by `+τ` when the distance
    /// did not grow and by `−τ` otherwise, clamped to `[p_min, 1]`.
    /// Terminated cells are left untouched.
    pub fn rl_update(&mut self, layer: usize, relation: usize, current: f64) -> f64 {
        let (tau, p_min) = (self.tau, self.p_min);
        let slot = self.slot(layer, relation);
        let cell = &mut self.cells[slot];
        if cell.terminated {
            return cell.p;
        }
        if let Some(previous) = cell.previous {
            let action = if previous - current >= 0.0 { tau } else { -tau };
            cell.p = (cell.p + action).clamp(p_min, 1.0);
            cell.actions.push(action);
        }
        cell.previous = Some(current);
        cell.p
    }

    /// True once the last [`TERMINATION_WINDOW`] actions cancel to within
    /// `2τ` (from epoch 10 on), or the epoch bound is reached. A cell that
    /// reports true is frozen.
    pub fn rl_terminated(&mut self, layer: usize, relation: usize) -> bool {
        let slot = self.slot(layer, relation);
        let (epoch, max_epochs, tau) = (self.epoch, self.max_epochs, self.tau);
        let cell = &mut self.cells[slot];
        if cell.terminated {
            return true;
        }
        let window_done = epoch >= TERMINATION_WINDOW
            && cell.actions.len() >= TERMINATION_WINDOW
            && cell.actions[cell.actions.len() - TERMINATION_WINDOW..]
                .iter()
                .sum::<f64>()
                .abs()
                <= 2.0 * tau + 1e-12;
        if window_done || epoch >= max_epochs {
            cell.terminated = true;
        }
        cell.terminated
    }

    /// Stops a cell without a termination test, e.g. when there is no
    /// distance signal.
    pub fn freeze(&mut self, layer: usize, relation: usize) {
        let slot = self.slot(layer, relation);
        self.cells[slot].terminated = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_features(tape: &mut Tape, values: &[f64]) -> Var {
        tape.constant(Tensor::column(values.to_vec()))
    }

    fn unit_weight(tape: &mut Tape) -> Var {
        tape.constant(Tensor::scalar(1.0))
    }

    #[test]
    fn isolated_node_is_relu_hw() {
        let adj = SampledAdjacency::new(1);
        for p in [0.0, 0.3, 1.0] {
            let mut tape = Tape::new();
            let h = tape.constant(Tensor::row_vector(vec![1.5, -2.0]));
            let w = tape.constant(Tensor::matrix(2, 1, vec![2.0, 1.0]).unwrap());
            let out = weighted_self_loop_aggregate(&mut tape, &adj, h, w, p).unwrap();
            assert!((tape.value(out).unwrap().data()[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_nodes_by_hand() {
        let adj = SampledAdjacency::from_edges(2, &[(0, 1)]).unwrap();
        let mut tape = Tape::new();
        let h = scalar_features(&mut tape, &[1.0, 3.0]);
        let w = unit_weight(&mut tape);
        let gcn = plain_gcn_layer(&mut tape, &adj, h, w).unwrap();
        assert_eq!(tape.value(gcn).unwrap().data(), &[2.0, 2.0]);
        let weighted = weighted_self_loop_aggregate(&mut tape, &adj, h, w, 1.0).unwrap();
        let got = tape.value(weighted).unwrap().data().to_vec();
        assert!((got[0] - 5.0 / 3.0).abs() < 1e-15);
        assert!((got[1] - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn higher_p_raises_self_share() {
        let adj = SampledAdjacency::from_edges(4, &[(0, 1), (0, 2), (2, 3)]).unwrap();
        let share = |p: f64| {
            let prop = propagation_rows(&adj, &[0], 1.0 + p).unwrap();
            let row: Vec<(usize, f64)> = prop.row(0).collect();
            let total: f64 = row.iter().map(|x| x.1).sum();
            row.iter().find(|x| x.0 == 0).unwrap().1 / total
        };
        let mut last = share(0.0);
        for k in 1..=20 {
            let s = share(k as f64 * 0.05);
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn adjacency_dedups_and_rejects_self_loops() {
        let mut adj = SampledAdjacency::new(3);
        adj.add_edge(0, 1).unwrap();
        adj.add_edge(1, 0).unwrap();
        assert_eq!(adj.num_edges(), 1);
        assert!(adj.add_edge(2, 2).is_err());
        let sel = SampledAdjacency::from_selections(3, [(0, &[1, 2][..]), (1, &[0][..])]).unwrap();
        assert_eq!(sel.neighbors(0), &[1, 2]);
        assert_eq!(sel.num_edges(), 2);
    }

    fn split(train: Vec<usize>, fraud: Vec<usize>) -> DataSplit {
        DataSplit {
            train,
            test: vec![],
            train_fraud: fraud,
        }
    }

    #[test]
    fn fraud_distance_literal_formula() {
        let s = split(vec![0, 1], vec![0]);
        let rec = vec![
            SelectedDistances { center: 0, distances: vec![0.4] },
            SelectedDistances { center: 1, distances: vec![0.9] },
        ];
        assert!((average_fraud_distance(&rec, &s).unwrap() - 0.2).abs() < 1e-15);
        let zero = vec![SelectedDistances { center: 0, distances: vec![0.0, 0.0] }];
        assert_eq!(average_fraud_distance(&zero, &s).unwrap(), 0.0);
        let doubled: Vec<_> = rec
            .iter()
            .map(|r| SelectedDistances {
                center: r.center,
                distances: r.distances.iter().map(|d| d * 2.0).collect(),
            })
            .collect();
        assert!((average_fraud_distance(&doubled, &s).unwrap() - 0.4).abs() < 1e-15);
        assert!(average_fraud_distance(&rec, &split(vec![], vec![])).is_err());
    }

    #[test]
    fn update_rule_examples() {
        let mut c = ThresholdController::new(1, 1, 0.5, 0.02, 50).unwrap();
        c.advance_epoch();
        assert_eq!(c.rl_update(0, 0, 0.30), 0.5);
        c.advance_epoch();
        assert!((c.rl_update(0, 0, 0.25) - 0.52).abs() < 1e-12);

        let mut c = ThresholdController::new(1, 1, 0.5, 0.02, 50).unwrap();
        c.rl_update(0, 0, 0.25);
        assert!((c.rl_update(0, 0, 0.30) - 0.48).abs() < 1e-12);

        let mut c = ThresholdController::new(1, 1, 1.0, 0.02, 50).unwrap();
        c.rl_update(0, 0, 0.30);
        assert_eq!(c.rl_update(0, 0, 0.25), 1.0);
    }

    fn drive(values: &[f64]) -> ThresholdController {
        let mut c = ThresholdController::new(1, 1, 0.5, 0.02, 50).unwrap();
        for &v in values {
            c.advance_epoch();
            c.rl_update(0, 0, v);
        }
        c
    }

    #[test]
    fn termination_examples() {
        // 11 alternating measurements give 10 alternating actions.
        let osc: Vec<f64> = (0..11).map(|k| if k % 2 == 0 { 0.3 } else { 0.2 }).collect();
        let mut c = drive(&osc);
        assert!(c.rl_terminated(0, 0));
        let p = c.p(0, 0);
        c.advance_epoch();
        c.rl_update(0, 0, 0.0);
        assert_eq!(c.p(0, 0), p);

        let falling: Vec<f64> = (0..11).map(|k| 1.0 - k as f64 * 0.01).collect();
        assert!(!drive(&falling).rl_terminated(0, 0));

        let early: Vec<f64> = (0..7).map(|k| if k % 2 == 0 { 0.3 } else { 0.2 }).collect();
        assert!(!drive(&early).rl_terminated(0, 0));
    }

    #[test]
    fn epoch_bound_terminates() {
        let mut c = ThresholdController::new(1, 1, 0.5, 0.02, 3).unwrap();
        for k in 0..3 {
            c.advance_epoch();
            c.rl_update(0, 0, 1.0 - k as f64 * 0.1);
        }
        assert!(c.rl_terminated(0, 0));
    }

    #[test]
    fn invalid_initial_threshold() {
        assert!(ThresholdController::new(1, 1, 0.01, 0.02, 50).is_err());
        assert!(ThresholdController::new(1, 1, 1.2, 0.02, 50).is_err());
    }
}
