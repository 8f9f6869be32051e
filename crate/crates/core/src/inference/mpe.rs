use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Value;
use crate::error::{Error, Result};
use crate::tree::IcTreeModel;

use super::{apply_evidence, Evidence, LeafView, ModelView};

/// Relative tolerance under which two leaf maxima count as tied.
const TIE_TOL: f64 = 1e-12;
/// Extra points tried inside a region when its centroid leaves the leaf path.
const ROUTE_ATTEMPTS: usize = 256;

/// Most probable region of the (optionally restricted) model.
#[derive(Clone, Debug, PartialEq)]
pub struct MpeResult {
    pub leaf: usize,
    /// Maximal joint density, weight included.
    pub density: f64,
    pub log_density: f64,
    /// Maximizing interval of every leaf component, in leaf coordinates.
    pub component_intervals: Vec<(f64, f64)>,
    /// `2^m` corners of the maximizing parallelepiped, over all numeric
    /// columns (dropped columns at their constant).
    pub region_vertices: Vec<Vec<f64>>,
    /// A full row inside the region that routes to `leaf`. With evidence, the
    /// region centroid is moved by the smallest leaf-coordinate shift that
    /// brings it inside the evidence box.
    pub representative: Vec<Value>,
    /// Most probable category per symbolic column (lowest code on ties).
    pub symbolic_modes: Vec<usize>,
}

/// The leaf with the largest maximal density and its maximizing region.
///
/// A leaf's maximum is `weight * |det W| * prod max interval density * prod
/// max pmf`. Ties go to the lowest leaf id. Per component, the region uses
/// the first run of adjacent maximal intervals.
pub fn mpe(model: &IcTreeModel, ev: Option<&Evidence>) -> Result<MpeResult> {
    let view = match ev {
        Some(e) => apply_evidence(model, e)?,
        None => model.view(),
    };
    if view.leaves().is_empty() {
        return Err(Error::InconsistentEvidence);
    }
    let scores: Vec<f64> = view.leaves().iter().map(|lv| leaf_max_log(model, lv)).collect();
    let mut order: Vec<usize> = Vec::with_capacity(scores.len());
    let mut left: Vec<usize> = (0..scores.len()).collect();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (a, b) = (scores[left[i]], scores[left[best]]);
            if a > b + TIE_TOL * b.abs().max(1.0) {
                best = i;
            }
        }
        order.push(left.remove(best));
    }

    let mut first = None;
    for &i in &order {
        if !(scores[i] > f64::NEG_INFINITY) {
            break;
        }
        let (result, routes) = leaf_region(&view, &view.leaves()[i], scores[i], ev);
        if routes {
            return Ok(result);
        }
        first.get_or_insert(result);
    }
    first.ok_or(Error::InconsistentEvidence)
}

fn leaf_max_log(model: &IcTreeModel, lv: &LeafView<'_>) -> f64 {
    let leaf = &model.leaves()[lv.leaf_id];
    let mut acc = lv.weight.ln() + leaf.transform.log_abs_det_unmixing;
    for q in lv.components.iter() {
        acc += (0..q.n_intervals())
            .map(|k| q.interval_density(k))
            .fold(f64::NEG_INFINITY, f64::max)
            .ln();
    }
    for dist in lv.symbolic.iter() {
        acc += dist.probs().iter().cloned().fold(f64::NEG_INFINITY, f64::max).ln();
    }
    acc
}

/// Builds the leaf's result; the flag says whether the representative routes
/// to the leaf (and satisfies the evidence).
fn leaf_region(view: &ModelView<'_>, lv: &LeafView<'_>, log_density: f64, ev: Option<&Evidence>) -> (MpeResult, bool) {
    let model = view.model();
    let leaf = &model.leaves()[lv.leaf_id];
    let t = &leaf.transform;
    let m = t.dim();
    let n_num = model.numeric_columns().len();

    let component_intervals: Vec<(f64, f64)> = lv
        .components
        .iter()
        .map(|q| {
            let runs = q.max_density_intervals();
            let (lo, mut hi) = (runs[0].lo, runs[0].hi);
            for r in &runs[1..] {
                if r.lo != hi {
                    break;
                }
                hi = r.hi;
            }
            (lo, hi)
        })
        .collect();
    let symbolic_modes: Vec<usize> = lv.symbolic.iter().map(|d| d.mode()[0]).collect();

    let full_numeric = |local: &[f64]| {
        let mut x = vec![0.0; n_num];
        for (&p, v) in leaf.columns.iter().zip(local) {
            x[p] = *v;
        }
        for d in &leaf.dropped {
            x[d.numeric_index] = d.value;
        }
        x
    };
    let region_vertices: Vec<Vec<f64>> = (0..1usize << m)
        .map(|mask| {
            let s: Vec<f64> = component_intervals
                .iter()
                .enumerate()
                .map(|(j, &(lo, hi))| if mask >> j & 1 == 1 { hi } else { lo })
                .collect();
            full_numeric(&t.inverse_transform(&s))
        })
        .collect();

    // Evidence bounds on the leaf's own columns: (local position, lo, hi).
    let numeric_cols = model.numeric_columns();
    let bounds: Vec<(usize, f64, f64)> = ev
        .map(|e| {
            leaf.columns
                .iter()
                .enumerate()
                .filter_map(|(p, &col)| e.numeric_bounds().get(&numeric_cols[col]).map(|&(lo, hi)| (p, lo, hi)))
                .collect()
        })
        .unwrap_or_default();
    let pinv = (!bounds.is_empty()).then(|| {
        let a_e = DMatrix::from_fn(bounds.len(), m, |r, j| t.mixing[(bounds[r].0, j)]);
        a_e.pseudo_inverse(1e-12).expect("non-negative epsilon")
    });

    let to_row = |s: &[f64]| -> Vec<Value> {
        let mut s = s.to_vec();
        let mut local = t.inverse_transform(&s);
        if let Some(pinv) = &pinv {
            let delta = DVector::from_iterator(
                bounds.len(),
                bounds.iter().map(|&(p, lo, hi)| local[p].clamp(lo, hi) - local[p]),
            );
            if delta.iter().any(|d| *d != 0.0) {
                let ds = pinv * delta;
                for (sj, d) in s.iter_mut().zip(ds.iter()) {
                    *sj += d;
                }
                local = t.inverse_transform(&s);
            }
        }
        let mut numeric = full_numeric(&local);
        if let Some(e) = ev {
            for (x, col) in numeric.iter_mut().zip(numeric_cols) {
                if let Some(&(lo, hi)) = e.numeric_bounds().get(col) {
                    *x = x.clamp(lo, hi);
                }
            }
        }
        let mut row = vec![Value::Num(0.0); model.columns().len()];
        for (&c, &x) in numeric_cols.iter().zip(&numeric) {
            row[c] = Value::Num(x);
        }
        for (&c, &k) in model.symbolic_columns().iter().zip(&symbolic_modes) {
            row[c] = Value::Sym(k);
        }
        row
    };
    let accepts = |row: &[Value]| {
        model.route(row).is_ok_and(|id| id == lv.leaf_id) && ev.is_none_or(|e| e.contains(row))
    };

    let centroid: Vec<f64> = component_intervals.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut representative = to_row(&centroid);
    let mut routes = accepts(&representative);
    if !routes {
        let mut rng = ChaCha8Rng::seed_from_u64(lv.leaf_id as u64);
        for _ in 0..ROUTE_ATTEMPTS {
            let s: Vec<f64> = component_intervals
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect();
            let row = to_row(&s);
            if accepts(&row) {
                representative = row;
                routes = true;
                break;
            }
        }
    }

    (
        MpeResult {
            leaf: lv.leaf_id,
            density: log_density.exp(),
            log_density,
            component_intervals,
            region_vertices,
            representative,
            symbolic_modes,
        },
        routes,
    )
}
