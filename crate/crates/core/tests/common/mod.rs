#![allow(dead_code)]

use ictree::data::{ColumnSpec, Dataset, Value};
use ictree::ica::IcaTransform;
use ictree::tree::{Hyperparams, IcTreeModel, Leaf, Node, TrainingMeta};
use ictree::Qpd;
use nalgebra::DMatrix;
use rand::Rng;

pub fn num_row(xs: &[f64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::Num(x)).collect()
}

pub fn meta() -> TrainingMeta {
    TrainingMeta {
        n_rows: 1,
        seed: 0,
        unconverged_ica: 0,
    }
}

pub fn uniform(lo: f64, hi: f64) -> Qpd {
    Qpd::new(vec![lo, hi], vec![1.0]).unwrap()
}

pub fn plain_leaf(weight: f64, transform: IcaTransform, components: Vec<Qpd>) -> Leaf {
    Leaf {
        weight,
        n_rows: 1,
        columns: (0..transform.dim()).collect(),
        transform,
        components,
        symbolic: Vec::new(),
        dropped: Vec::new(),
        ica_converged: true,
    }
}

pub fn numeric_columns(m: usize) -> Vec<ColumnSpec> {
    (0..m).map(|j| ColumnSpec::numeric(format!("x{j}"))).collect()
}

/// One leaf over `m` numeric columns.
pub fn single_leaf(transform: IcaTransform, components: Vec<Qpd>) -> IcTreeModel {
    let m = transform.dim();
    IcTreeModel::new(
        numeric_columns(m),
        Node::Leaf(0),
        vec![plain_leaf(1.0, transform, components)],
        Hyperparams::default(),
        meta(),
    )
    .unwrap()
}

pub fn hp(frac: f64) -> Hyperparams {
    Hyperparams {
        min_samples_leaf_fraction: frac,
        ..Hyperparams::default()
    }
}

/// Normalized Amari index of `p = W A`: 0 for a scaled permutation, at most 1.
pub fn amari_index(p: &DMatrix<f64>) -> f64 {
    let m = p.nrows();
    let a = p.map(f64::abs);
    let mut total = 0.0;
    for i in 0..m {
        let row = a.row(i);
        total += row.sum() / row.max() - 1.0;
        let col = a.column(i);
        total += col.sum() / col.max() - 1.0;
    }
    total / (2.0 * m as f64 * (m as f64 - 1.0))
}

/// Uniform random rows over a box, widened by `pad` on every side.
pub fn random_rows<R: Rng>(bbox: &[(f64, f64)], pad: f64, n: usize, rng: &mut R) -> Vec<Vec<Value>> {
    (0..n)
        .map(|_| {
            bbox.iter()
                .map(|&(lo, hi)| Value::Num(lo - pad + rng.random::<f64>() * (hi - lo + 2.0 * pad)))
                .collect()
        })
        .collect()
}

pub fn column_ranges(data: &Dataset) -> Vec<(f64, f64)> {
    (0..data.n_cols())
        .map(|j| {
            let col = data.numeric_column(j);
            (
                col.iter().cloned().fold(f64::INFINITY, f64::min),
                col.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect()
}

/// Monte Carlo integral of the density over a box with uniform proposals.
pub fn mc_integral<R: Rng>(model: &IcTreeModel, bbox: &[(f64, f64)], n: usize, rng: &mut R) -> f64 {
    let vol: f64 = bbox.iter().map(|(a, b)| b - a).product();
    let mut x = vec![Value::Num(0.0); bbox.len()];
    let mut acc = 0.0;
    for _ in 0..n {
        for (v, &(lo, hi)) in x.iter_mut().zip(bbox) {
            *v = Value::Num(lo + rng.random::<f64>() * (hi - lo));
        }
        acc += model.log_density(&x).unwrap().exp();
    }
    acc / n as f64 * vol
}
