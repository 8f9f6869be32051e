//! Queries over a trained tree.
//!
//! Likelihoods are exact: the tree density is the weighted sum over all
//! leaves of `|det W| * prod_j q_j(e_j) * prod_s p_s(x_s)` with
//! `e = W (x - mean)`. Everything that needs integration over a parallelepiped
//! (marginals, conditional moments) is answered by sampling, and evidence is
//! applied approximately by restricting leaf QPDs to the intervals that cover
//! the evidence box in leaf coordinates.

use std::borrow::Cow;

use serde::Serialize;

use crate::data::{Dataset, Value};
use crate::distributions::{Multinomial, Qpd};
use crate::error::{Error, Result};
use crate::tree::{IcTreeModel, Leaf};

mod evidence;
mod mpe;
mod queries;
mod sampling;

pub use evidence::{apply_evidence, component_box, Evidence};
pub use mpe::{mpe, MpeResult};
pub use queries::{conditional_moments, marginal_probability, ColumnMoments, MarginalEstimate, MomentEstimate, MomentsReport};
pub use sampling::{sample, SampleBatch, DEFAULT_MAX_RETRIES};

/// A leaf as seen by a (possibly evidence-restricted) view.
#[derive(Clone, Debug)]
pub struct LeafView<'a> {
    pub leaf_id: usize,
    pub weight: f64,
    pub components: Cow<'a, [Qpd]>,
    pub symbolic: Cow<'a, [Multinomial]>,
}

/// The model's leaves with their current weights and distributions. The
/// unrestricted view is the model itself; [`apply_evidence`] produces a
/// restricted one. Leaves with zero weight are left out.
#[derive(Clone, Debug)]
pub struct ModelView<'a> {
    model: &'a IcTreeModel,
    leaves: Vec<LeafView<'a>>,
}

impl<'a> ModelView<'a> {
    pub fn model(&self) -> &'a IcTreeModel {
        self.model
    }

    pub fn leaves(&self) -> &[LeafView<'a>] {
        &self.leaves
    }

    /// Weight of a leaf in this view (0 when it was excluded).
    pub fn leaf_weight(&self, leaf_id: usize) -> f64 {
        self.leaves
            .iter()
            .find(|l| l.leaf_id == leaf_id)
            .map_or(0.0, |l| l.weight)
    }

    /// Log density of a full row under the view's mixture.
    pub fn log_density(&self, row: &[Value]) -> Result<f64> {
        let numeric = self.model.numeric_values(row)?;
        Ok(log_sum_weighted(self.leaves.iter().map(|lv| {
            (
                lv.weight,
                leaf_log_density_with(self.model, &self.model.leaves[lv.leaf_id], &lv.components, &lv.symbolic, &numeric, row),
            )
        })))
    }
}

impl IcTreeModel {
    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            model: self,
            leaves: self
                .leaves
                .iter()
                .enumerate()
                .filter(|(_, l)| l.weight > 0.0)
                .map(|(id, l)| LeafView {
                    leaf_id: id,
                    weight: l.weight,
                    components: Cow::Borrowed(&l.components),
                    symbolic: Cow::Borrowed(&l.symbolic),
                })
                .collect(),
        }
    }

    /// `ln sum_leaf P(leaf) p(x | leaf)`; `-inf` where every leaf density is 0.
    pub fn log_density(&self, row: &[Value]) -> Result<f64> {
        log_density(self, row)
    }
}

/// Log of the tree density at a full row, summed over all leaves.
pub fn log_density(model: &IcTreeModel, row: &[Value]) -> Result<f64> {
    let numeric = model.numeric_values(row)?;
    Ok(log_sum_weighted(
        model
            .leaves
            .iter()
            .map(|leaf| (leaf.weight, leaf_log_density_with(model, leaf, &leaf.components, &leaf.symbolic, &numeric, row))),
    ))
}

/// Conditional log density `ln p(x | leaf)` of one leaf.
pub fn leaf_log_density(model: &IcTreeModel, leaf_id: usize, row: &[Value]) -> Result<f64> {
    let numeric = model.numeric_values(row)?;
    let leaf = model
        .leaves
        .get(leaf_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no leaf {leaf_id}")))?;
    Ok(leaf_log_density_with(model, leaf, &leaf.components, &leaf.symbolic, &numeric, row))
}

pub(crate) fn leaf_log_density_with(
    model: &IcTreeModel,
    leaf: &Leaf,
    components: &[Qpd],
    symbolic: &[Multinomial],
    numeric: &[f64],
    row: &[Value],
) -> f64 {
    if !leaf.dropped_match(numeric) {
        return f64::NEG_INFINITY;
    }
    let e = leaf.transform.transform(&leaf.local_input(numeric));
    let mut acc = leaf.transform.log_abs_det_unmixing;
    for (q, ej) in components.iter().zip(&e) {
        acc += q.log_pdf(*ej);
    }
    for (dist, &col) in symbolic.iter().zip(model.symbolic_columns()) {
        let code = row[col].as_sym().expect("symbolic cell");
        acc += dist.pmf(code).ln();
    }
    if acc.is_nan() {
        f64::NEG_INFINITY
    } else {
        acc
    }
}

/// `ln sum_i w_i exp(l_i)` over terms with positive weight.
fn log_sum_weighted(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let logs: Vec<f64> = terms
        .filter(|(w, l)| *w > 0.0 && *l > f64::NEG_INFINITY)
        .map(|(w, l)| w.ln() + l)
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Average log-likelihood over the rows with positive density, plus the share
/// of rows with density 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LikelihoodSummary {
    /// `None` when every row has density 0.
    pub avg: Option<f64>,
    pub zero_fraction: f64,
    pub n_rows: usize,
    pub n_zero: usize,
}

pub fn avg_log_likelihood(model: &IcTreeModel, data: &Dataset) -> Result<LikelihoodSummary> {
    check_compatible(model, data)?;
    let mut sum = 0.0;
    let mut n_zero = 0;
    for row in data.rows() {
        let l = log_density(model, row)?;
        if l == f64::NEG_INFINITY {
            n_zero += 1;
        } else {
            sum += l;
        }
    }
    let n = data.n_rows();
    let n_pos = n - n_zero;
    Ok(LikelihoodSummary {
        avg: (n_pos > 0).then(|| sum / n_pos as f64),
        zero_fraction: n_zero as f64 / n as f64,
        n_rows: n,
        n_zero,
    })
}

pub(crate) fn check_compatible(model: &IcTreeModel, data: &Dataset) -> Result<()> {
    if data.columns() != model.columns() {
        return Err(Error::Schema(
            "dataset columns (names, kinds or categories) differ from the model's".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
