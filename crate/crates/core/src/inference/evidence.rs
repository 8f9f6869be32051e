use std::borrow::Cow;
use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};

use crate::data::{ColumnKind, ColumnSpec, Value};
use crate::error::{Error, Result};
use crate::ica::IcaTransform;
use crate::tree::{IcTreeModel, DROPPED_MATCH_TOL};

use super::{LeafView, ModelView};

/// Hyperrectangle over the columns: closed numeric bounds and allowed
/// category sets. Columns without an entry are unconstrained. Keys are
/// dataset column indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evidence {
    numeric: BTreeMap<usize, (f64, f64)>,
    symbolic: BTreeMap<usize, Vec<usize>>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Constrains a numeric column to `[lo, hi]`; either end may be infinite.
    pub fn bound(mut self, column: usize, lo: f64, hi: f64) -> Self {
        self.numeric.insert(column, (lo, hi));
        self
    }

    /// Constrains a symbolic column to the given category codes.
    pub fn allow(mut self, column: usize, categories: impl IntoIterator<Item = usize>) -> Self {
        let mut cats: Vec<usize> = categories.into_iter().collect();
        cats.sort_unstable();
        cats.dedup();
        self.symbolic.insert(column, cats);
        self
    }

    pub fn numeric_bounds(&self) -> &BTreeMap<usize, (f64, f64)> {
        &self.numeric
    }

    pub fn symbolic_allowed(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.symbolic
    }

    pub fn is_empty(&self) -> bool {
        self.numeric.is_empty() && self.symbolic.is_empty()
    }

    /// True when the row satisfies every constraint.
    pub fn contains(&self, row: &[Value]) -> bool {
        self.numeric.iter().all(|(&c, &(lo, hi))| {
            row[c].as_num().is_some_and(|x| x >= lo && x <= hi)
        }) && self
            .symbolic
            .iter()
            .all(|(&c, cats)| row[c].as_sym().is_some_and(|k| cats.contains(&k)))
    }

    pub fn validate(&self, columns: &[ColumnSpec]) -> Result<()> {
        for (&c, &(lo, hi)) in &self.numeric {
            let spec = columns
                .get(c)
                .ok_or_else(|| Error::Schema(format!("evidence refers to column {c}, which does not exist")))?;
            if spec.kind != ColumnKind::Numeric {
                return Err(Error::Schema(format!("evidence gives a numeric bound for symbolic column `{}`", spec.name)));
            }
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "evidence bound for `{}` needs lo <= hi, got [{lo}, {hi}]",
                    spec.name
                )));
            }
        }
        for (&c, cats) in &self.symbolic {
            let spec = columns
                .get(c)
                .ok_or_else(|| Error::Schema(format!("evidence refers to column {c}, which does not exist")))?;
            if spec.kind != ColumnKind::Symbolic {
                return Err(Error::Schema(format!("evidence gives categories for numeric column `{}`", spec.name)));
            }
            if let Some(&k) = cats.iter().find(|&&k| k >= spec.categories.len()) {
                return Err(Error::UnknownCategory {
                    column: spec.name.clone(),
                    value: format!("code {k}"),
                });
            }
        }
        Ok(())
    }

    /// Parses `{"col": {"lo": .., "hi": ..} | ["label", ..], ..}`. A missing
    /// `lo` or `hi` leaves that side open.
    pub fn from_json(value: &Json, columns: &[ColumnSpec]) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("evidence must be a JSON object".into()))?;
        let mut ev = Evidence::new();
        for (name, entry) in obj {
            let c = columns
                .iter()
                .position(|s| &s.name == name)
                .ok_or_else(|| Error::Schema(format!("evidence names unknown column `{name}`")))?;
            let spec = &columns[c];
            match (spec.kind, entry) {
                (ColumnKind::Numeric, Json::Object(b)) => {
                    let side = |key: &str, default: f64| -> Result<f64> {
                        match b.get(key) {
                            None | Some(Json::Null) => Ok(default),
                            Some(v) => v.as_f64().ok_or_else(|| {
                                Error::InvalidArgument(format!("evidence `{name}.{key}` must be a number"))
                            }),
                        }
                    };
                    if let Some(k) = b.keys().find(|k| *k != "lo" && *k != "hi") {
                        return Err(Error::InvalidArgument(format!("evidence `{name}` has unexpected key `{k}`")));
                    }
                    ev = ev.bound(c, side("lo", f64::NEG_INFINITY)?, side("hi", f64::INFINITY)?);
                }
                (ColumnKind::Symbolic, Json::Array(labels)) => {
                    let codes = labels
                        .iter()
                        .map(|l| {
                            let label = match l {
                                Json::String(s) => s.clone(),
                                other => other.to_string(),
                            };
                            spec.category_index(&label).ok_or(Error::UnknownCategory {
                                column: name.clone(),
                                value: label,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    ev = ev.allow(c, codes);
                }
                (ColumnKind::Numeric, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "evidence for numeric column `{name}` must be {{\"lo\": .., \"hi\": ..}}"
                    )))
                }
                (ColumnKind::Symbolic, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "evidence for symbolic column `{name}` must be a list of labels"
                    )))
                }
            }
        }
        ev.validate(columns)?;
        Ok(ev)
    }

    pub fn from_json_str(text: &str, columns: &[ColumnSpec]) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?, columns)
    }

    /// Inverse of [`from_json`](Self::from_json); infinite sides are omitted.
    pub fn to_json(&self, columns: &[ColumnSpec]) -> Json {
        let mut out = Map::new();
        for (&c, &(lo, hi)) in &self.numeric {
            let mut b = Map::new();
            if lo.is_finite() {
                b.insert("lo".into(), json!(lo));
            }
            if hi.is_finite() {
                b.insert("hi".into(), json!(hi));
            }
            out.insert(columns[c].name.clone(), Json::Object(b));
        }
        for (&c, cats) in &self.symbolic {
            let labels = cats.iter().map(|&k| json!(columns[c].categories[k])).collect();
            out.insert(columns[c].name.clone(), Json::Array(labels));
        }
        Json::Object(out)
    }
}

/// Per-component range of `W (x - mean)` over the box `[lo, hi]` in the
/// transform's input space. Equals the min/max over the box's vertices.
pub fn component_box(transform: &IcaTransform, lo: &[f64], hi: &[f64]) -> Vec<(f64, f64)> {
    let m = transform.dim();
    (0..m)
        .map(|j| {
            let (mut a, mut b) = (0.0, 0.0);
            for p in 0..m {
                let w = transform.unmixing[(j, p)];
                let (u, v) = (w * (lo[p] - transform.mean[p]), w * (hi[p] - transform.mean[p]));
                a += u.min(v);
                b += u.max(v);
            }
            (a, b)
        })
        .collect()
}

/// Range of `A s + mean` over the box `s_box`.
fn input_box(transform: &IcaTransform, s_box: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let m = transform.dim();
    (0..m)
        .map(|p| {
            let (mut a, mut b) = (transform.mean[p], transform.mean[p]);
            for (j, &(lo, hi)) in s_box.iter().enumerate() {
                let w = transform.mixing[(p, j)];
                let (u, v) = (w * lo, w * hi);
                a += u.min(v);
                b += u.max(v);
            }
            (a, b)
        })
        .collect()
}

fn intersect(a: &mut [(f64, f64)], b: &[(f64, f64)]) -> Option<bool> {
    let mut changed = false;
    for (x, y) in a.iter_mut().zip(b) {
        let lo = x.0.max(y.0);
        let hi = x.1.min(y.1);
        if lo > hi {
            return None;
        }
        changed |= lo > x.0 + 1e-12 * x.0.abs().max(1.0) || hi < x.1 - 1e-12 * x.1.abs().max(1.0);
        *x = (lo, hi);
    }
    Some(changed)
}

/// Component ranges of the leaf region inside the input box: the range of
/// `W (x - mean)` over `x_box`, then alternately shrinking the input box to
/// the image of the component box and back. Every pass keeps every point of
/// the true region. `None` when the region is empty.
fn propagate(transform: &IcaTransform, mut x_box: Vec<(f64, f64)>, mut s_box: Vec<(f64, f64)>) -> Option<Vec<(f64, f64)>> {
    const PASSES: usize = 64;
    for _ in 0..PASSES {
        let (lo, hi): (Vec<f64>, Vec<f64>) = x_box.iter().copied().unzip();
        let s_changed = intersect(&mut s_box, &component_box(transform, &lo, &hi))?;
        let x_changed = intersect(&mut x_box, &input_box(transform, &s_box))?;
        if !s_changed && !x_changed {
            break;
        }
    }
    Some(s_box)
}

/// Restricts every leaf to the evidence.
///
/// Per leaf, the evidence box (open sides replaced by the leaf's own
/// original-space extent) is mapped into leaf coordinates, each component QPD
/// keeps the intervals meeting the resulting range (tightened by interval
/// propagation between the two spaces), and symbolic
/// distributions keep the allowed categories. New leaf weights are
/// proportional to the prior times the retained masses. This is an
/// approximation of the true leaf posterior: the range of a parallelepiped is
/// wider than the parallelepiped itself.
pub fn apply_evidence<'a>(model: &'a IcTreeModel, ev: &Evidence) -> Result<ModelView<'a>> {
    ev.validate(model.columns())?;
    if ev.is_empty() {
        return Ok(model.view());
    }
    let n_num = model.numeric_columns().len();
    // Evidence bounds keyed by numeric position.
    let bounds: Vec<Option<(f64, f64)>> = model
        .numeric_columns()
        .iter()
        .map(|c| ev.numeric.get(c).copied())
        .collect();

    let mut leaves = Vec::new();
    'leaf: for (id, leaf) in model.leaves().iter().enumerate() {
        if leaf.weight <= 0.0 {
            continue;
        }
        let mut mass = 1.0;
        for d in &leaf.dropped {
            if let Some((lo, hi)) = bounds[d.numeric_index] {
                if d.value < lo - DROPPED_MATCH_TOL || d.value > hi + DROPPED_MATCH_TOL {
                    continue 'leaf;
                }
            }
        }

        let touched = leaf.columns.iter().any(|&p| bounds[p].is_some());
        let components = if touched {
            let bbox = leaf.bounding_box(n_num);
            let mut x_box = Vec::with_capacity(leaf.columns.len());
            for &p in &leaf.columns {
                let (blo, bhi) = bbox[p];
                let (a, b) = match bounds[p] {
                    Some((elo, ehi)) => (elo.max(blo), ehi.min(bhi)),
                    None => (blo, bhi),
                };
                if a > b {
                    continue 'leaf;
                }
                x_box.push((a, b));
            }
            let s_box: Vec<(f64, f64)> = leaf.components.iter().map(|q| q.support()).collect();
            let Some(ranges) = propagate(&leaf.transform, x_box, s_box) else {
                continue 'leaf;
            };
            let mut restricted = Vec::with_capacity(ranges.len());
            for (q, (a, b)) in leaf.components.iter().zip(ranges) {
                match q.restrict_with_mass(a, b) {
                    Some((r, kept)) => {
                        mass *= kept;
                        restricted.push(r);
                    }
                    None => continue 'leaf,
                }
            }
            Cow::Owned(restricted)
        } else {
            Cow::Borrowed(&leaf.components[..])
        };

        let touched_sym = model.symbolic_columns().iter().any(|c| ev.symbolic.contains_key(c));
        let symbolic = if touched_sym {
            let mut restricted = Vec::with_capacity(leaf.symbolic.len());
            for (dist, c) in leaf.symbolic.iter().zip(model.symbolic_columns()) {
                match ev.symbolic.get(c) {
                    Some(cats) => match dist.restrict_with_mass(cats) {
                        Some((r, kept)) => {
                            mass *= kept;
                            restricted.push(r);
                        }
                        None => continue 'leaf,
                    },
                    None => restricted.push(dist.clone()),
                }
            }
            Cow::Owned(restricted)
        } else {
            Cow::Borrowed(&leaf.symbolic[..])
        };

        let weight = leaf.weight * mass;
        if weight > 0.0 {
            leaves.push(LeafView {
                leaf_id: id,
                weight,
                components,
                symbolic,
            });
        }
    }

    let total: f64 = leaves.iter().map(|l| l.weight).sum();
    if leaves.is_empty() || !(total > 0.0) {
        return Err(Error::InconsistentEvidence);
    }
    for l in &mut leaves {
        l.weight /= total;
    }
    Ok(ModelView { model, leaves })
}
