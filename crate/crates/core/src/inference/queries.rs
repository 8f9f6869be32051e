use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::IcTreeModel;

use super::sampling::DEFAULT_MAX_RETRIES;
use super::{apply_evidence, Evidence};

/// Draws per requested accepted sample before conditional sampling gives up.
const MAX_DRAWS_PER_SAMPLE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginalEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub consistent: usize,
    /// Samples that survived path rejection.
    pub drawn: usize,
    pub discarded: usize,
}

/// `P(ev)` as the share of unrestricted samples inside the evidence box, with
/// its binomial standard error. 0 when every draw was discarded.
pub fn marginal_probability<R: Rng + ?Sized>(
    model: &IcTreeModel,
    ev: &Evidence,
    n_samples: usize,
    rng: &mut R,
) -> Result<MarginalEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    ev.validate(model.columns())?;
    let batch = model.view().sample(n_samples, rng, DEFAULT_MAX_RETRIES);
    let drawn = batch.rows.len();
    let consistent = batch.rows.iter().filter(|r| ev.contains(r)).count();
    let (estimate, std_error) = if drawn == 0 {
        (0.0, 0.0)
    } else {
        let p = consistent as f64 / drawn as f64;
        (p, (p * (1.0 - p) / drawn as f64).sqrt())
    };
    Ok(MarginalEstimate {
        estimate,
        std_error,
        consistent,
        drawn,
        discarded: batch.discarded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: u32,
    /// `E[x^k]`.
    pub raw: f64,
    pub raw_std_error: f64,
    /// `E[(x - mean)^k]`; order 2 uses the `n - 1` divisor.
    pub central: f64,
    /// Plug-in standard error of the central moment (mean treated as known).
    pub central_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnMoments {
    pub column: String,
    pub moments: Vec<MomentEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentsReport {
    pub accepted: usize,
    /// Samples drawn from the restricted view (after path rejection).
    pub drawn: usize,
    pub discarded: usize,
    pub columns: Vec<ColumnMoments>,
}

/// Empirical moments of every numeric column given the evidence.
///
/// Samples come from the evidence-restricted view; those outside the
/// evidence box are rejected. Drawing stops once `n_samples` are accepted or
/// after `1000 * n_samples` draws.
pub fn conditional_moments<R: Rng + ?Sized>(
    model: &IcTreeModel,
    ev: &Evidence,
    orders: &[u32],
    n_samples: usize,
    rng: &mut R,
) -> Result<MomentsReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be at least 2".into()));
    }
    if let Some(&k) = orders.iter().find(|&&k| k == 0) {
        return Err(Error::InvalidArgument(format!("moment order {k} is not supported")));
    }
    let view = apply_evidence(model, ev)?;
    let cap = n_samples.saturating_mul(MAX_DRAWS_PER_SAMPLE);
    let n_num = model.numeric_columns().len();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); n_num];
    let (mut accepted, mut drawn, mut discarded) = (0, 0, 0);
    while accepted < n_samples && drawn + discarded < cap {
        let want = (n_samples - accepted).max(64).min(cap - drawn - discarded);
        let batch = view.sample(want, rng, DEFAULT_MAX_RETRIES);
        drawn += batch.rows.len();
        discarded += batch.discarded;
        for row in &batch.rows {
            if accepted == n_samples {
                break;
            }
            if ev.contains(row) {
                for (vals, &c) in values.iter_mut().zip(model.numeric_columns()) {
                    vals.push(row[c].as_num().expect("numeric cell"));
                }
                accepted += 1;
            }
        }
    }
    if accepted < 2 {
        return Err(Error::InsufficientAcceptance {
            accepted,
            drawn: drawn + discarded,
        });
    }
    let columns = model
        .numeric_columns()
        .iter()
        .zip(&values)
        .map(|(&c, xs)| ColumnMoments {
            column: model.columns()[c].name.clone(),
            moments: orders.iter().map(|&k| moments_of(xs, k)).collect(),
        })
        .collect();
    Ok(MomentsReport {
        accepted,
        drawn,
        discarded,
        columns,
    })
}

fn mean_and_se(ys: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = ys.clone().sum::<f64>() / n;
    let var = ys.map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn moments_of(xs: &[f64], order: u32) -> MomentEstimate {
    let n = xs.len() as f64;
    let k = order as i32;
    let (raw, raw_std_error) = mean_and_se(xs.iter().map(|x| x.powi(k)), n);
    let mean = xs.iter().sum::<f64>() / n;
    let (central, central_std_error) = match order {
        1 => (0.0, 0.0),
        _ => {
            let (c, se) = mean_and_se(xs.iter().map(|x| (x - mean).powi(k)), n);
            if order == 2 {
                (c * n / (n - 1.0), se * n / (n - 1.0))
            } else {
                (c, se)
            }
        }
    };
    MomentEstimate {
        order,
        raw,
        raw_std_error,
        central,
        central_std_error,
    }
}
