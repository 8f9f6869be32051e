//! JSON model files.
//!
//! Matrices are stored row-major as arrays of rows. Floats are written with
//! shortest round-trip formatting, so a loaded model reproduces routes and
//! densities bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ColumnSpec;
use crate::distributions::{Multinomial, Qpd};
use crate::error::{Error, Result};
use crate::ica::IcaTransform;
use crate::tree::{
    DroppedColumn, Hyperparams, IcTreeModel, Leaf, LinearSplit, Node, Split, SymbolicSplit, TrainingMeta,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    columns: Vec<ColumnSpec>,
    hyperparams: Hyperparams,
    meta: TrainingMeta,
    root: NodeRecord,
    leaves: Vec<LeafRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum NodeRecord {
    Linear {
        coefficients: Vec<f64>,
        threshold: f64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Symbolic {
        column: String,
        value: String,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        leaf: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct QpdRecord {
    breakpoints: Vec<f64>,
    masses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DroppedRecord {
    numeric_index: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct LeafRecord {
    weight: f64,
    n_rows: usize,
    /// Positions in the numeric columns the transform acts on.
    columns: Vec<usize>,
    mean: Vec<f64>,
    /// `W`, row-major.
    unmixing: Vec<Vec<f64>>,
    /// `A = W^-1`, row-major.
    mixing: Vec<Vec<f64>>,
    log_abs_det_unmixing: f64,
    components: Vec<QpdRecord>,
    symbolic: Vec<Vec<f64>>,
    dropped: Vec<DroppedRecord>,
    ica_converged: bool,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Schema(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn node_record(model: &IcTreeModel, node: &Node) -> NodeRecord {
    match node {
        Node::Leaf(id) => NodeRecord::Leaf { leaf: *id },
        Node::Inner { split, left, right } => {
            let (left, right) = (Box::new(node_record(model, left)), Box::new(node_record(model, right)));
            match split {
                Split::Linear(s) => NodeRecord::Linear {
                    coefficients: s.coefficients.clone(),
                    threshold: s.threshold,
                    left,
                    right,
                },
                Split::Symbolic(s) => {
                    let col = &model.columns()[s.column];
                    NodeRecord::Symbolic {
                        column: col.name.clone(),
                        value: col.categories[s.value].clone(),
                        left,
                        right,
                    }
                }
            }
        }
    }
}

fn leaf_record(leaf: &Leaf) -> LeafRecord {
    let t = &leaf.transform;
    LeafRecord {
        weight: leaf.weight,
        n_rows: leaf.n_rows,
        columns: leaf.columns.clone(),
        mean: t.mean.iter().copied().collect(),
        unmixing: rows_of(&t.unmixing),
        mixing: rows_of(&t.mixing),
        log_abs_det_unmixing: t.log_abs_det_unmixing,
        components: leaf
            .components
            .iter()
            .map(|q| QpdRecord {
                breakpoints: q.breakpoints().to_vec(),
                masses: q.masses().to_vec(),
            })
            .collect(),
        symbolic: leaf.symbolic.iter().map(|d| d.probs().to_vec()).collect(),
        dropped: leaf
            .dropped
            .iter()
            .map(|d| DroppedRecord {
                numeric_index: d.numeric_index,
                value: d.value,
            })
            .collect(),
        ica_converged: leaf.ica_converged,
    }
}

fn node_from(columns: &[ColumnSpec], rec: NodeRecord) -> Result<Node> {
    let inner = |split, left: Box<NodeRecord>, right: Box<NodeRecord>| -> Result<Node> {
        Ok(Node::Inner {
            split,
            left: Box::new(node_from(columns, *left)?),
            right: Box::new(node_from(columns, *right)?),
        })
    };
    match rec {
        NodeRecord::Leaf { leaf } => Ok(Node::Leaf(leaf)),
        NodeRecord::Linear {
            coefficients,
            threshold,
            left,
            right,
        } => inner(Split::Linear(LinearSplit { coefficients, threshold }), left, right),
        NodeRecord::Symbolic {
            column,
            value,
            left,
            right,
        } => {
            let c = columns
                .iter()
                .position(|s| s.name == column)
                .ok_or_else(|| Error::Schema(format!("split on unknown column `{column}`")))?;
            let v = columns[c].category_index(&value).ok_or(Error::UnknownCategory {
                column: column.clone(),
                value: value.clone(),
            })?;
            inner(Split::Symbolic(SymbolicSplit { column: c, value: v }), left, right)
        }
    }
}

fn leaf_from(rec: LeafRecord) -> Result<Leaf> {
    let m = rec.mean.len();
    let unmixing = matrix_of(&rec.unmixing, m, "unmixing")?;
    let mixing = matrix_of(&rec.mixing, m, "mixing")?;
    let transform = IcaTransform {
        mean: DVector::from_vec(rec.mean),
        unmixing,
        mixing,
        log_abs_det_unmixing: rec.log_abs_det_unmixing,
    };
    Ok(Leaf {
        weight: rec.weight,
        n_rows: rec.n_rows,
        columns: rec.columns,
        transform,
        components: rec
            .components
            .into_iter()
            .map(|q| Qpd::new(q.breakpoints, q.masses))
            .collect::<Result<_>>()?,
        symbolic: rec.symbolic.into_iter().map(Multinomial::new).collect::<Result<_>>()?,
        dropped: rec
            .dropped
            .into_iter()
            .map(|d| DroppedColumn {
                numeric_index: d.numeric_index,
                value: d.value,
            })
            .collect(),
        ica_converged: rec.ica_converged,
    })
}

pub fn to_json(model: &IcTreeModel) -> serde_json::Value {
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        columns: model.columns().to_vec(),
        hyperparams: model.hyperparams().clone(),
        meta: model.meta().clone(),
        root: node_record(model, model.root()),
        leaves: model.leaves().iter().map(leaf_record).collect(),
    };
    serde_json::to_value(file).expect("model records serialize")
}

pub fn from_json(value: serde_json::Value) -> Result<IcTreeModel> {
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    match version {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(Error::SchemaVersion(u32::try_from(v).unwrap_or(u32::MAX))),
        None => return Err(Error::Schema("model file lacks schema_version".into())),
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let root = node_from(&file.columns, file.root)?;
    let leaves = file.leaves.into_iter().map(leaf_from).collect::<Result<_>>()?;
    IcTreeModel::new(file.columns, root, leaves, file.hyperparams, file.meta)
}

pub fn to_json_string(model: &IcTreeModel) -> String {
    serde_json::to_string_pretty(&to_json(model)).expect("JSON values serialize")
}

pub fn from_json_str(text: &str) -> Result<IcTreeModel> {
    from_json(serde_json::from_str(text)?)
}

pub fn save_model(model: &IcTreeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &to_json(model))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<IcTreeModel> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    from_json(value)
}
