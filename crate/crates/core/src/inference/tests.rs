use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::ColumnSpec;
use crate::ica::IcaTransform;
use crate::tree::{Hyperparams, Node, TrainingMeta};

fn uniform_qpd(lo: f64, hi: f64) -> Qpd {
    Qpd::new(vec![lo, hi], vec![1.0]).unwrap()
}

fn leaf(weight: f64, transform: IcaTransform, components: Vec<Qpd>) -> Leaf {
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

fn single(transform: IcaTransform, components: Vec<Qpd>) -> IcTreeModel {
    let columns = (0..transform.dim()).map(|j| ColumnSpec::numeric(format!("x{j}"))).collect();
    IcTreeModel::new(
        columns,
        Node::Leaf(0),
        vec![leaf(1.0, transform, components)],
        Hyperparams::default(),
        TrainingMeta {
            n_rows: 1,
            seed: 0,
            unconverged_ica: 0,
        },
    )
    .unwrap()
}

fn row(xs: &[f64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::Num(x)).collect()
}

#[test]
fn unit_square_has_log_density_zero() {
    let m = single(IcaTransform::identity(2), vec![uniform_qpd(0.0, 1.0), uniform_qpd(0.0, 1.0)]);
    assert_eq!(m.log_density(&row(&[0.5, 0.5])).unwrap(), 0.0);
    assert_eq!(m.log_density(&row(&[1.5, 0.5])).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn determinant_scales_density() {
    let t = IcaTransform::from_unmixing(DVector::zeros(2), DMatrix::identity(2, 2) * 0.5).unwrap();
    let m = single(t, vec![uniform_qpd(0.0, 1.0), uniform_qpd(0.0, 1.0)]);
    let d = m.log_density(&row(&[1.0, 1.0])).unwrap().exp();
    assert!((d - 0.25).abs() < 1e-15);
}

#[test]
fn empty_evidence_keeps_weights() {
    let m = single(IcaTransform::identity(1), vec![uniform_qpd(0.0, 1.0)]);
    let v = apply_evidence(&m, &Evidence::new()).unwrap();
    assert_eq!(v.leaves().len(), 1);
    assert_eq!(v.leaf_weight(0), 1.0);
}

#[test]
fn disjoint_evidence_is_inconsistent() {
    let m = single(IcaTransform::identity(1), vec![uniform_qpd(0.0, 1.0)]);
    let ev = Evidence::new().bound(0, 2.0, 3.0);
    assert!(matches!(apply_evidence(&m, &ev), Err(Error::InconsistentEvidence)));
}

#[test]
fn single_leaf_never_discards() {
    let m = single(IcaTransform::identity(2), vec![uniform_qpd(0.0, 1.0), uniform_qpd(-1.0, 1.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = sample(&m, 500, &mut rng, DEFAULT_MAX_RETRIES);
    assert_eq!(b.rows.len(), 500);
    assert_eq!(b.discarded, 0);
    assert_eq!(b.redraws, 0);
}

#[test]
fn evidence_json_round_trip() {
    let cols = vec![ColumnSpec::numeric("a"), ColumnSpec::symbolic("c", ["p", "q", "r"])];
    let ev = Evidence::from_json_str(r#"{"a": {"lo": 1.5}, "c": ["r", "p"]}"#, &cols).unwrap();
    assert_eq!(ev.numeric_bounds()[&0], (1.5, f64::INFINITY));
    assert_eq!(ev.symbolic_allowed()[&1], vec![0, 2]);
    let back = Evidence::from_json(&ev.to_json(&cols), &cols).unwrap();
    assert_eq!(back, ev);
    assert!(Evidence::from_json_str(r#"{"c": ["s"]}"#, &cols).is_err());
    assert!(Evidence::from_json_str(r#"{"a": {"lo": 2, "hi": 1}}"#, &cols).is_err());
    assert!(Evidence::from_json_str(r#"{"b": {"lo": 2}}"#, &cols).is_err());
}
