//! Finite-difference gradient checking and brute-force oracles shared by the
//! integration suites.
#![allow(dead_code)]

use gnncl::autodiff::{glorot_uniform, Mlp, ParamStore, Tape, Tensor, Var};
use gnncl::head::{birnn_forward, conv1d_forward, max_pool, BiRnnParams, CellKind, ConvLayer, ConvSpec, HeadConfig, PoolSpec, SequenceHead};
use gnncl::reinforcer::{weighted_self_loop_aggregate, SampledAdjacency};
use gnncl::relation::cross_relation_aggregate;
use gnncl::Result;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative gradient error.
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Gradient magnitude below which errors are measured against this floor
/// instead of the gradient itself.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates where the two one-sided slopes disagree, i.e. the step
    /// straddles a ReLU or max-pool switch.
    pub skipped: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }

    pub fn passes(&self) -> bool {
        self.max_rel_err <= GRAD_REL_TOL && self.skipped * 100 <= self.checked
    }
}

fn eval(store: &ParamStore, f: &impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let loss = f(&mut tape, store).unwrap();
    tape.value(loss).unwrap().data()[0]
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences for every entry of every array in `store`.
pub fn grad_check(store: &mut ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> GradCheck {
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store).unwrap();
    let grads = tape.backward(loss).unwrap();
    store.accumulate(&grads).unwrap();

    let f0 = eval(store, &f);
    let mut out = GradCheck::default();
    for id in store.ids().collect::<Vec<_>>() {
        for k in 0..store.value(id).len() {
            let x = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = x + FD_STEP;
            let up = eval(store, &f);
            store.value_mut(id).data_mut()[k] = x - FD_STEP;
            let down = eval(store, &f);
            store.value_mut(id).data_mut()[k] = x;

            let right = (up - f0) / FD_STEP;
            let left = (f0 - down) / FD_STEP;
            let scale = right.abs().max(left.abs()).max(1.0);
            if (right - left).abs() > 1e-2 * scale {
                out.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = store.grad(id).data()[k];
            let denom = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            out.max_rel_err = out.max_rel_err.max((analytic - numeric).abs() / denom);
            out.checked += 1;
        }
    }
    out
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// `Σ R ⊙ y` with a fixed random `R`, so every output entry gets a distinct
/// upstream gradient.
pub fn weighted_sum(tape: &mut Tape, y: Var, r: &Tensor) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let prod = tape.mul(y, rv)?;
    tape.sum(prod)
}

pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> SampledAdjacency {
    let mut adj = SampledAdjacency::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(edge_prob) {
                adj.add_edge(u, v).unwrap();
            }
        }
    }
    adj
}

pub fn mlp_draw(rng: &mut ChaCha8Rng) -> GradCheck {
    let m = rng.random_range(1..6);
    let dims: Vec<usize> = (0..rng.random_range(2..5))
        .map(|i| if i == 0 { rng.random_range(1..6) } else { rng.random_range(1..7) })
        .chain(std::iter::once(1))
        .collect();
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(rng, m, dims[0], 1.5));
    let mlp = Mlp::new(&mut store, "mlp", &dims, rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with("bias") {
            *store.value_mut(id) = random_tensor(rng, 1, store.value(id).cols(), 0.5);
        }
    }
    let labels: Vec<f64> = (0..m).map(|_| f64::from(rng.random_bool(0.5))).collect();
    grad_check(&mut store, |tape, store| {
        let xv = tape.param(store, x);
        let q = mlp.forward(tape, store, xv)?;
        tape.bce(q, &labels)
    })
}

pub fn aggregation_draw(rng: &mut ChaCha8Rng) -> GradCheck {
    let n = rng.random_range(1..9);
    let (din, dout) = (rng.random_range(1..5), rng.random_range(1..5));
    let adj = random_adjacency(rng, n, 0.4);
    let p = rng.random_range(0.0..1.0);
    let mut store = ParamStore::new();
    let h = store.add("h", random_tensor(rng, n, din, 1.0));
    let w = store.add("w", random_tensor(rng, din, dout, 1.0));
    let r = random_tensor(rng, n, dout, 1.0);
    grad_check(&mut store, |tape, store| {
        let (hv, wv) = (tape.param(store, h), tape.param(store, w));
        let y = weighted_self_loop_aggregate(tape, &adj, hv, wv, p)?;
        weighted_sum(tape, y, &r)
    })
}

pub fn fusion_draw(rng: &mut ChaCha8Rng) -> GradCheck {
    let m = rng.random_range(1..6);
    let din = rng.random_range(1..5);
    let d = rng.random_range(1..5);
    let rels = rng.random_range(1..4);
    let mut store = ParamStore::new();
    let prev = store.add("prev", random_tensor(rng, m, din, 1.0));
    let hs: Vec<_> = (0..rels)
        .map(|i| store.add(format!("h{i}"), random_tensor(rng, m, d, 1.0)))
        .collect();
    let w = store.add("w", random_tensor(rng, din + rels * d, d, 1.0));
    let r = random_tensor(rng, m, d, 1.0);
    grad_check(&mut store, |tape, store| {
        let pv = tape.param(store, prev);
        let hv: Vec<Var> = hs.iter().map(|&id| tape.param(store, id)).collect();
        let wv = tape.param(store, w);
        let y = cross_relation_aggregate(tape, pv, &hv, wv)?;
        weighted_sum(tape, y, &r)
    })
}

pub fn conv_pool_draw(rng: &mut ChaCha8Rng) -> GradCheck {
    let m = rng.random_range(1..4);
    let half = rng.random_range(0..3);
    let kernels = rng.random_range(1..4);
    let d = rng.random_range(2 * half + 1..2 * half + 9);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(rng, m, d, 1.0));
    let conv = ConvLayer::new(&mut store, "conv", ConvSpec { num_kernels: kernels, half_width: half }, rng).unwrap();
    *store.value_mut(conv.bias) = random_tensor(rng, 1, kernels, 0.3);
    let pool = PoolSpec { half_width: rng.random_range(0..3) };
    let pooled = kernels * pool.pooled_len(d);
    let r = random_tensor(rng, m, pooled, 1.0);
    grad_check(&mut store, |tape, store| {
        let xv = tape.param(store, x);
        let c = conv1d_forward(tape, store, &conv, xv)?;
        let p = max_pool(tape, pool, c, kernels)?;
        weighted_sum(tape, p, &r)
    })
}

pub fn recurrence_draw(rng: &mut ChaCha8Rng, cell: CellKind, max_steps: usize) -> GradCheck {
    let m = rng.random_range(1..4);
    let steps = rng.random_range(1..=max_steps);
    let s = rng.random_range(1..4);
    let hidden = rng.random_range(1..4);
    let mut store = ParamStore::new();
    let xs: Vec<_> = (0..steps)
        .map(|t| store.add(format!("x{t}"), random_tensor(rng, m, s, 1.0)))
        .collect();
    let params = BiRnnParams::new(&mut store, "rnn", cell, s, hidden, rng).unwrap();
    let r = random_tensor(rng, m, hidden, 1.0);
    grad_check(&mut store, |tape, store| {
        let seq: Vec<Var> = xs.iter().map(|&id| tape.param(store, id)).collect();
        let h = birnn_forward(tape, store, &params, &seq)?;
        weighted_sum(tape, h, &r)
    })
}

/// The whole head on width-8 embeddings with 2 kernels, window 3, `T = 2`
/// and `H = 3`, trained against random labels.
pub fn head_draw(rng: &mut ChaCha8Rng) -> GradCheck {
    let m = rng.random_range(1..5);
    let config = HeadConfig {
        num_kernels: 2,
        half_width: 1,
        chunks: 2,
        hidden: 3,
        cell: CellKind::ElmanRnn,
        classifier_hidden: 4,
    };
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(rng, m, 8, 1.0));
    let head = SequenceHead::new(&mut store, "head", 8, &config, rng).unwrap();
    *store.value_mut(head.conv.bias) = random_tensor(rng, 1, 2, 0.3);
    let labels: Vec<f64> = (0..m).map(|_| f64::from(rng.random_bool(0.5))).collect();
    grad_check(&mut store, |tape, store| {
        let xv = tape.param(store, x);
        let q = head.predict(tape, store, xv)?;
        tape.bce(q, &labels)
    })
}

/// Runs `draws` seeded draws of one family and merges the results.
pub fn run_family(seed: u64, draws: usize, mut draw: impl FnMut(&mut ChaCha8Rng) -> GradCheck) -> GradCheck {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws).fold(GradCheck::default(), |acc, _| acc.merge(draw(&mut rng)))
}

/// Dense `ReLU(M^{-1/2}(A + sI)M^{-1/2} h W)` from scratch.
pub fn dense_aggregate(adj: &SampledAdjacency, h: &Tensor, w: &Tensor, self_weight: f64) -> Vec<Vec<f64>> {
    let n = adj.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (v, row) in a.iter_mut().enumerate() {
        row[v] = self_weight;
        for &u in adj.neighbors(v) {
            row[u] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let hw = h.matmul(w).unwrap();
    (0..n)
        .map(|v| {
            (0..hw.cols())
                .map(|c| {
                    let s: f64 = (0..n)
                        .map(|u| a[v][u] / (deg[v] * deg[u]).sqrt() * hw.get(u, c))
                        .sum();
                    s.max(0.0)
                })
                .collect()
        })
        .collect()
}

/// `min(ceil(p · n), n)` in exact rational arithmetic on the binary value
/// of `p`.
pub fn exact_sample_count(p: f64, n: usize) -> usize {
    let p = BigRational::from_float(p).unwrap();
    let prod = p * BigRational::from_integer(n.into());
    let c: usize = prod.ceil().to_integer().try_into().unwrap();
    c.min(n)
}

/// Keep-set by fully sorting `(distance, id)` pairs.
pub fn brute_force_selection(entries: &[(usize, f64)], count: usize) -> Vec<usize> {
    let mut all = entries.to_vec();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = all[..count].iter().map(|e| e.0).collect();
    keep.sort_unstable();
    keep
}

/// Counts of `(tp, tn, fp, fn)` at the given cut.
pub fn confusion_recount(scores: &[f64], labels: &[u8], threshold: f64) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for i in 0..scores.len() {
        let predicted = scores[i] >= threshold;
        match (predicted, labels[i] == 1) {
            (true, true) => c.0 += 1,
            (false, false) => c.1 += 1,
            (true, false) => c.2 += 1,
            (false, true) => c.3 += 1,
        }
    }
    c
}

/// Quadratic pairwise AUC with ties counting one half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    glorot_uniform(rng, rows, cols, rows, cols)
}
