use rand::Rng;

use crate::data::Value;

use super::{LeafView, ModelView};
use crate::tree::IcTreeModel;

/// Redraws allowed per sample before it is discarded.
pub const DEFAULT_MAX_RETRIES: usize = 16;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    /// Full rows in dataset column order.
    pub rows: Vec<Vec<Value>>,
    /// Generating leaf of every returned row.
    pub leaves: Vec<usize>,
    /// Requested samples that never landed on their own leaf's path.
    pub discarded: usize,
    /// Path-inconsistent draws that were redrawn.
    pub redraws: usize,
}

impl SampleBatch {
    pub fn discard_rate(&self) -> f64 {
        let requested = self.rows.len() + self.discarded;
        if requested == 0 {
            0.0
        } else {
            self.discarded as f64 / requested as f64
        }
    }
}

/// Draws `n` samples from the unrestricted model.
pub fn sample<R: Rng + ?Sized>(model: &IcTreeModel, n: usize, rng: &mut R, max_retries: usize) -> SampleBatch {
    model.view().sample(n, rng, max_retries)
}

impl ModelView<'_> {
    /// Leaf by weight, then every component and symbolic value independently,
    /// mapped back to the original space. A draw that does not route to its
    /// own leaf is redrawn inside that leaf up to `max_retries` times, then
    /// discarded.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, max_retries: usize) -> SampleBatch {
        let mut batch = SampleBatch::default();
        if self.leaves.is_empty() {
            batch.discarded = n;
            return batch;
        }
        let mut cumulative = Vec::with_capacity(self.leaves.len());
        let mut acc = 0.0;
        for l in &self.leaves {
            acc += l.weight;
            cumulative.push(acc);
        }
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(self.leaves.len() - 1);
            let lv = &self.leaves[k];
            let mut done = false;
            for attempt in 0..=max_retries {
                let (row, numeric) = self.draw_from(lv, rng);
                if self.model.route_numeric(&numeric, &row) == lv.leaf_id {
                    batch.rows.push(row);
                    batch.leaves.push(lv.leaf_id);
                    done = true;
                    break;
                }
                if attempt < max_retries {
                    batch.redraws += 1;
                }
            }
            if !done {
                batch.discarded += 1;
            }
        }
        batch
    }

    /// One unchecked draw from a leaf: the full row and its numeric values.
    pub(crate) fn draw_from<R: Rng + ?Sized>(&self, lv: &LeafView<'_>, rng: &mut R) -> (Vec<Value>, Vec<f64>) {
        let model = self.model;
        let leaf = &model.leaves[lv.leaf_id];
        let s: Vec<f64> = lv.components.iter().map(|q| q.sample(rng)).collect();
        let local = leaf.transform.inverse_transform(&s);
        let mut numeric = vec![0.0; model.numeric.len()];
        for (&p, x) in leaf.columns.iter().zip(local) {
            numeric[p] = x;
        }
        for d in &leaf.dropped {
            numeric[d.numeric_index] = d.value;
        }
        let mut row = vec![Value::Num(0.0); model.columns.len()];
        for (&c, &x) in model.numeric.iter().zip(&numeric) {
            row[c] = Value::Num(x);
        }
        for (dist, &c) in lv.symbolic.iter().zip(&model.symbolic) {
            row[c] = Value::Sym(dist.sample(rng));
        }
        (row, numeric)
    }
}
