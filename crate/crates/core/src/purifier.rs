//! Label-aware neighbor denoising.
//!
//! A per-layer MLP maps node embeddings to fraud probabilities; the distance
//! between two nodes is the L1 gap between their predictions. Each node
//! keeps the `ceil(p · |N|)` neighbors closest to it, where `p` is the
//! threshold maintained by [`crate::reinforcer::ThresholdController`].

use crate::autodiff::{Mlp, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Distances from one center node to each of its neighbors under a relation.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborDistances {
    pub center: usize,
    pub entries: Vec<(usize, f64)>,
}

/// Neighbors kept for one center node, sorted by node id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledNeighborhood {
    pub center: usize,
    pub selected: Vec<usize>,
    pub sample_count: usize,
}

/// `‖a − b‖₁` between two prediction vectors.
pub fn prediction_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// L1 distance between the MLP predictions for two embeddings.
pub fn pairwise_distance(mlp: &Mlp, store: &ParamStore, h_v: &[f64], h_u: &[f64]) -> Result<f64> {
    if h_v.len() != h_u.len() {
        return Err(Error::shape(
            "pairwise_distance",
            format!("embeddings of width {} and {}", h_v.len(), h_u.len()),
        ));
    }
    let both = Tensor::matrix(2, h_v.len(), [h_v, h_u].concat())?;
    let q = mlp.predict(store, &both)?;
    Ok(prediction_distance(q.row(0), q.row(1)))
}

/// `1 / (1 + d)`.
pub fn similarity(distance: f64) -> Result<f64> {
    if distance.is_nan() || distance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distance {distance} must be non-negative"
        )));
    }
    Ok(1.0 / (1.0 + distance))
}

/// Cross-entropy of the purifier MLP against the batch labels, summed over
/// the supplied embedding sets and mean-reduced over the batch.
pub fn purifier_loss(tape: &mut Tape, mlp: &Mlp, store: &ParamStore, embeddings: &[Var], labels: &[f64]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("purifier loss on an empty batch".into()));
    }
    let mut total: Option<Var> = None;
    for &h in embeddings {
        let q = mlp.forward(tape, store, h)?;
        let loss = tape.bce(q, labels)?;
        total = Some(match total {
            Some(t) => tape.add(t, loss)?,
            None => loss,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("purifier loss needs at least one embedding set".into()))
}

/// Number of neighbors to keep: `ceil(p · n)`, evaluated exactly on the
/// binary value of `p`.
pub fn sample_count(p: f64, neighbor_count: usize) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {p} must lie in (0, 1]"
        )));
    }
    if neighbor_count == 0 {
        return Ok(0);
    }
    let bits = p.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exponent) = if exp_field == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_field - 1075)
    };
    // p ≤ 1 means the exponent is always negative here.
    let product = mantissa as u128 * neighbor_count as u128;
    let shift = (-exponent) as u32;
    let count = if shift >= 128 {
        1
    } else {
        let q = product >> shift;
        if q << shift == product {
            q
        } else {
            q + 1
        }
    };
    Ok((count as usize).min(neighbor_count))
}

/// The `count` nearest neighbors; ties go to the lower node id.
pub fn select_neighbors(distances: &NeighborDistances, count: usize) -> Result<SampledNeighborhood> {
    if count > distances.entries.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {count} of {} neighbors",
            distances.entries.len()
        )));
    }
    let mut ranked = distances.entries.clone();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut selected: Vec<usize> = ranked[..count].iter().map(|&(u, _)| u).collect();
    selected.sort_unstable();
    Ok(SampledNeighborhood {
        center: distances.center,
        selected,
        sample_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(entries: &[(usize, f64)]) -> NeighborDistances {
        NeighborDistances {
            center: 0,
            entries: entries.to_vec(),
        }
    }

    #[test]
    fn distance_by_hand_and_symmetry() {
        assert!((prediction_distance(&[0.8], &[0.3]) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "p", &[5, 8, 1], &mut rng).unwrap();
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dab = pairwise_distance(&mlp, &store, &a, &b).unwrap();
            let dba = pairwise_distance(&mlp, &store, &b, &a).unwrap();
            assert_eq!(dab, dba);
            assert_eq!(pairwise_distance(&mlp, &store, &a, &a).unwrap(), 0.0);
            let s = similarity(dab).unwrap();
            assert!(s > 0.0 && s <= 1.0);
        }
        assert!(pairwise_distance(&mlp, &store, &[1.0; 5], &[1.0; 4]).is_err());
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity(0.0).unwrap(), 1.0);
        assert_eq!(similarity(1.0).unwrap(), 0.5);
        assert!((similarity(9.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(similarity(-0.1).is_err());
        assert!(similarity(f64::NAN).is_err());
    }

    #[test]
    fn sample_count_rounding() {
        assert_eq!(sample_count(0.5, 7).unwrap(), 4);
        assert_eq!(sample_count(1.0, 13).unwrap(), 13);
        assert_eq!(sample_count(0.3, 0).unwrap(), 0);
        // 0.3 · 10 evaluates to 3.0000000000000004 in floating point.
        assert_eq!(sample_count(0.3, 10).unwrap(), 3);
        assert_eq!(sample_count(0.05, 1).unwrap(), 1);
        assert_eq!(sample_count(f64::MIN_POSITIVE, 3).unwrap(), 1);
        assert!(sample_count(0.0, 3).is_err());
        assert!(sample_count(1.01, 3).is_err());
    }

    #[test]
    fn selection_examples() {
        let d = dist(&[(1, 0.1), (2, 0.7), (3, 0.4)]);
        assert_eq!(select_neighbors(&d, 2).unwrap().selected, vec![1, 3]);
        assert_eq!(select_neighbors(&d, 3).unwrap().selected, vec![1, 2, 3]);
        let tie = dist(&[(2, 0.3), (1, 0.3)]);
        assert_eq!(select_neighbors(&tie, 1).unwrap().selected, vec![1]);
        assert!(select_neighbors(&d, 4).is_err());
    }

    #[test]
    fn raising_p_never_shrinks_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(0..20);
            let d = dist(&(0..n).map(|u| (u, rng.random::<f64>())).collect::<Vec<_>>());
            let p1: f64 = rng.random_range(0.01..1.0);
            let p2: f64 = rng.random_range(p1..=1.0);
            let a = select_neighbors(&d, sample_count(p1, n).unwrap()).unwrap();
            let b = select_neighbors(&d, sample_count(p2, n).unwrap()).unwrap();
            assert!(a.selected.iter().all(|u| b.selected.contains(u)));
        }
    }

    #[test]
    fn loss_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "p", &[2, 1], &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let loss = purifier_loss(&mut tape, &mlp, &store, &[h], &[1.0, 0.0, 1.0]).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        // Two relations double the summed loss.
        let loss2 = purifier_loss(&mut tape, &mlp, &store, &[h, h], &[1.0, 0.0, 1.0]).unwrap();
        let v2 = tape.value(loss2).unwrap().item().unwrap();
        assert!((v2 - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(purifier_loss(&mut tape, &mlp, &store, &[h], &[]).is_err());
    }

    #[test]
    fn loss_for_fixed_predictions() {
        // A single-input MLP with weight 1 and zero bias maps logit(q) to q.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "p", &[1, 1], &mut rng).unwrap();
        store.value_mut(mlp.layers()[0].weight).data_mut()[0] = 1.0;
        store.value_mut(mlp.layers()[0].bias).data_mut()[0] = 0.0;
        let logit = |q: f64| (q / (1.0 - q)).ln();
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::column(vec![logit(0.9), logit(0.2)]));
        let loss = purifier_loss(&mut tape, &mlp, &store, &[h], &[1.0, 0.0]).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        let expected = (-(0.9f64).ln() - (0.8f64).ln()) / 2.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((expected - 0.164252033486018).abs() < 1e-12);
        let perfect = tape.constant(Tensor::column(vec![40.0, -40.0]));
        let loss = purifier_loss(&mut tape, &mlp, &store, &[perfect], &[1.0, 0.0]).unwrap();
        assert!(tape.value(loss).unwrap().item().unwrap() < 1e-6);
    }
}
