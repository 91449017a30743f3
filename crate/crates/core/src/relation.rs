//! Cross-relation fusion and the trunk-level classification loss.

use crate::autodiff::{Mlp, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// `ReLU([prev ‖ h_1 ‖ … ‖ h_R] · W)` row by row. No bias.
pub fn cross_relation_aggregate(tape: &mut Tape, prev: Var, per_relation: &[Var], w: Var) -> Result<Var> {
    if per_relation.is_empty() {
        return Err(Error::InvalidArgument("fusion needs at least one relation".into()));
    }
    let mut parts = Vec::with_capacity(per_relation.len() + 1);
    parts.push(prev);
    parts.extend_from_slice(per_relation);
    let width: usize = parts
        .iter()
        .map(|&p| tape.value(p).map(|t| t.cols()))
        .sum::<Result<usize>>()?;
    let w_rows = tape.value(w)?.rows();
    if w_rows != width {
        return Err(Error::shape(
            "cross_relation_aggregate",
            format!(
                "{} relation inputs concatenate to width {width}, fusion weight has {w_rows} rows",
                per_relation.len()
            ),
        ));
    }
    let joined = tape.concat_cols(&parts)?;
    let fused = tape.matmul(joined, w)?;
    tape.relu(fused)
}

/// Mean binary cross-entropy of `σ(MLP(h))` against the labels.
pub fn gnn_loss(tape: &mut Tape, mlp: &Mlp, store: &ParamStore, h: Var, labels: &[f64]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("gnn loss on an empty batch".into()));
    }
    let q = mlp.forward(tape, store, h)?;
    tape.bce(q, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_inputs_give_zero() {
        let mut tape = Tape::new();
        let prev = tape.constant(Tensor::zeros(3, 2));
        let h1 = tape.constant(Tensor::zeros(3, 2));
        let h2 = tape.constant(Tensor::zeros(3, 2));
        let w = tape.constant(Tensor::matrix(6, 2, (0..12).map(|v| v as f64 - 5.0).collect()).unwrap());
        let out = cross_relation_aggregate(&mut tape, prev, &[h1, h2], w).unwrap();
        let v = tape.value(out).unwrap();
        assert_eq!(v.shape(), &[3, 2]);
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_relation_by_hand() {
        let mut tape = Tape::new();
        let prev = tape.constant(Tensor::scalar(2.0));
        let h1 = tape.constant(Tensor::scalar(3.0));
        let w = tape.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let out = cross_relation_aggregate(&mut tape, prev, &[h1], w).unwrap();
        assert_eq!(tape.value(out).unwrap().data(), &[5.0]);
    }

    #[test]
    fn relation_count_mismatch() {
        let mut tape = Tape::new();
        let prev = tape.constant(Tensor::zeros(1, 2));
        let h1 = tape.constant(Tensor::zeros(1, 2));
        let w = tape.constant(Tensor::zeros(6, 2));
        assert!(cross_relation_aggregate(&mut tape, prev, &[h1], w).is_err());
        assert!(cross_relation_aggregate(&mut tape, prev, &[], w).is_err());
    }

    #[test]
    fn uninformative_and_perfect_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "g", &[1, 1], &mut rng).unwrap();
        store.value_mut(mlp.layers()[0].weight).data_mut()[0] = 0.0;
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::column(vec![3.0, -1.0]));
        let l = gnn_loss(&mut tape, &mlp, &store, h, &[1.0, 0.0]).unwrap();
        assert!((tape.value(l).unwrap().item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        store.value_mut(mlp.layers()[0].weight).data_mut()[0] = 1.0;
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::column(vec![50.0, -50.0]));
        let l = gnn_loss(&mut tape, &mlp, &store, h, &[1.0, 0.0]).unwrap();
        assert!(tape.value(l).unwrap().item().unwrap() <= 1e-6);

        let logit = |q: f64| (q / (1.0 - q)).ln();
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::column(vec![logit(0.9), logit(0.2)]));
        let l = gnn_loss(&mut tape, &mlp, &store, h, &[1.0, 0.0]).unwrap();
        assert!((tape.value(l).unwrap().item().unwrap() - 0.16425).abs() < 1e-5);
        assert!(gnn_loss(&mut tape, &mlp, &store, h, &[]).is_err());
    }
}
