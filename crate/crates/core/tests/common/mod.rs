#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stabgen::process::{MarkovProcessModel, Sample};

/// A chain with strictly positive transitions, so it is ergodic and
/// aperiodic, emitting distinct features with `‖x‖ ≤ 1` and ±1 labels.
pub fn chain(max_states: usize, max_dim: usize) -> impl Strategy<Value = MarkovProcessModel> {
    (2..=max_states, 1..=max_dim).prop_flat_map(|(m, d)| {
        (
            prop::collection::vec(0.05f64..1.0, m * m),
            prop::collection::vec(-1.0f64..1.0, m * d),
            prop::collection::vec(any::<bool>(), m),
        )
            .prop_map(move |(raw, feats, labels)| {
                let mut p = DMatrix::from_row_slice(m, m, &raw);
                for mut row in p.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                let emissions = (0..m)
                    .map(|j| {
                        let x = DVector::from_column_slice(&feats[j * d..(j + 1) * d]);
                        let x = if x.norm() > 1.0 { x.normalize() } else { x };
                        Sample::new(x.as_slice().to_vec(), Some(if labels[j] { 1.0 } else { -1.0 }))
                    })
                    .collect();
                let initial = DVector::from_element(m, 1.0 / m as f64);
                MarkovProcessModel::new("random", p, emissions, initial).unwrap()
            })
    })
}

/// A point of the ball of radius `radius` around the origin in `R^d`,
/// from a raw vector in the unit cube.
pub fn into_ball(raw: &[f64], radius: f64) -> DVector<f64> {
    let v = DVector::from_column_slice(raw);
    let n = v.norm();
    if n > 1.0 {
        v / n * radius
    } else {
        v * radius
    }
}
