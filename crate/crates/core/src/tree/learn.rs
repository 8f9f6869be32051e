use nalgebra::{DMatrix, DVector};

use super::{DroppedColumn, Hyperparams, IcTreeModel, Leaf, LinearSplit, Node, Split, SymbolicSplit, TrainingMeta};
use crate::data::Dataset;
use crate::distributions::{Multinomial, Qpd};
use crate::error::{Error, Result};
use crate::ica::{fast_ica, IcaTransform};

/// Scores within this distance count as tied.
const SCORE_TIE: f64 = 1e-12;

/// What a split candidate cuts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitTarget {
    /// `component < threshold` goes left, in the node's transformed space.
    Axis { component: usize, threshold: f64 },
    /// `column == value` goes left; `column` indexes the symbolic inputs.
    Symbolic { column: usize, value: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub target: SplitTarget,
    /// Uniform average of the relative impurity reductions involved.
    pub score: f64,
    /// Width of the empty gap the threshold sits in (0 for symbolic splits).
    pub gap: f64,
}

/// Codes of one symbolic column at a node.
#[derive(Clone, Copy, Debug)]
pub struct SymbolicValues<'a> {
    pub codes: &'a [usize],
    pub n_categories: usize,
}

fn entropy_bits(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

struct ActiveSymbolic<'a> {
    values: SymbolicValues<'a>,
    counts: Vec<usize>,
    entropy: f64,
}

impl ActiveSymbolic<'_> {
    /// Relative entropy reduction given the left child's counts.
    fn reduction(&self, left: &[usize], n_left: usize) -> f64 {
        let n = self.values.codes.len();
        let right: Vec<usize> = self.counts.iter().zip(left).map(|(t, l)| t - l).collect();
        let n_right = n - n_left;
        let child = (n_left as f64 * entropy_bits(left, n_left) + n_right as f64 * entropy_bits(&right, n_right))
            / n as f64;
        (self.entropy - child) / self.entropy
    }
}

/// Best split of a node given its transformed numeric components
/// (component-major) and symbolic columns.
///
/// A threshold on a transformed axis scores the axis's relative variance
/// reduction averaged with the relative entropy reduction of every impure
/// symbolic column. A one-vs-rest symbolic split scores the average relative
/// entropy reduction over the impure symbolic columns. Both children must
/// hold at least `min_rows` rows. Ties go to the wider empty gap, then to the
/// lower axis index (symbolic columns come after all numeric axes), then to
/// the lower threshold.
pub fn best_split(components: &[Vec<f64>], symbolic: &[SymbolicValues<'_>], min_rows: usize) -> Option<SplitCandidate> {
    let n = components
        .first()
        .map(Vec::len)
        .or_else(|| symbolic.first().map(|s| s.codes.len()))?;
    let min_rows = min_rows.max(1);
    if n < 2 * min_rows {
        return None;
    }

    let active: Vec<ActiveSymbolic> = symbolic
        .iter()
        .map(|s| {
            let mut counts = vec![0usize; s.n_categories];
            for &c in s.codes {
                counts[c] += 1;
            }
            let entropy = entropy_bits(&counts, n);
            ActiveSymbolic {
                values: *s,
                counts,
                entropy,
            }
        })
        .filter(|a| a.entropy > 0.0)
        .collect();

    let mut best: Option<SplitCandidate> = None;
    let mut offer = |c: SplitCandidate| {
        let better = match &best {
            None => true,
            Some(b) => c.score > b.score + SCORE_TIE || ((c.score - b.score).abs() <= SCORE_TIE && c.gap > b.gap),
        };
        if better {
            best = Some(c);
        }
    };

    for (j, values) in components.iter().enumerate() {
        let mean = values.iter().sum::<f64>() / n as f64;
        let total_ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        if !(total_ss > 0.0) {
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let total_sum: f64 = values.iter().map(|v| v - mean).sum();

        let mut left_counts: Vec<Vec<usize>> = active.iter().map(|a| vec![0; a.counts.len()]).collect();
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for i in 0..n - 1 {
            let row = order[i];
            let d = values[row] - mean;
            sum_l += d;
            sq_l += d * d;
            for (lc, a) in left_counts.iter_mut().zip(&active) {
                lc[a.values.codes[row]] += 1;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_rows || n_right < min_rows {
                continue;
            }
            let (lo, hi) = (values[row], values[order[i + 1]]);
            if !(lo < hi) {
                continue;
            }
            let sum_r = total_sum - sum_l;
            let sq_r = total_ss - sq_l;
            let within = (sq_l - sum_l * sum_l / n_left as f64).max(0.0)
                + (sq_r - sum_r * sum_r / n_right as f64).max(0.0);
            let mut score = (total_ss - within) / total_ss;
            for (lc, a) in left_counts.iter().zip(&active) {
                score += a.reduction(lc, n_left);
            }
            score /= (1 + active.len()) as f64;
            offer(SplitCandidate {
                target: SplitTarget::Axis {
                    component: j,
                    threshold: 0.5 * (lo + hi),
                },
                score,
                gap: hi - lo,
            });
        }
    }

    for (s, column) in symbolic.iter().enumerate() {
        for value in 0..column.n_categories {
            let left_rows: Vec<usize> = (0..n).filter(|&i| column.codes[i] == value).collect();
            let n_left = left_rows.len();
            if n_left < min_rows || n - n_left < min_rows || active.is_empty() {
                continue;
            }
            let mut score = 0.0;
            for a in &active {
                let mut lc = vec![0usize; a.counts.len()];
                for &i in &left_rows {
                    lc[a.values.codes[i]] += 1;
                }
                score += a.reduction(&lc, n_left);
            }
            score /= active.len() as f64;
            offer(SplitCandidate {
                target: SplitTarget::Symbolic { column: s, value },
                score,
                gap: 0.0,
            });
        }
    }
    best
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn child_seed(seed: u64, side: u64) -> u64 {
    splitmix64(seed.wrapping_mul(2).wrapping_add(side))
}

/// Coordinates a node or leaf works in.
struct Basis {
    columns: Vec<usize>,
    dropped: Vec<DroppedColumn>,
    transform: IcaTransform,
    converged: bool,
}

struct Learner<'a> {
    data: &'a Dataset,
    hp: &'a Hyperparams,
    numeric: Vec<Vec<f64>>,
    symbolic: Vec<usize>,
    n_total: usize,
    min_rows: usize,
    leaves: Vec<Leaf>,
    unconverged: usize,
}

/// Grows an IC-Tree on `data`.
///
/// At every node FastICA runs on the node's non-constant numeric columns
/// (identity in baseline mode or when the block is rank deficient), candidate
/// splits are scored on the transformed axes and symbolic columns, and the
/// winning axis threshold is stored as a hyperplane in the original space. A
/// node becomes a leaf when a child would hold fewer than
/// `max(ceil(min_samples_leaf_fraction * n), 2)` rows, at `max_depth`, or
/// when the best score is below `min_improvement`.
pub fn fit(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<IcTreeModel> {
    hp.validate()?;
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument("fit needs at least 2 rows".into()));
    }
    let numeric_idx = data.numeric_indices();
    let numeric = data
        .rows()
        .iter()
        .map(|r| numeric_idx.iter().map(|&j| r[j].as_num().unwrap()).collect())
        .collect();
    let min_rows = ((hp.min_samples_leaf_fraction * n as f64 - 1e-9).ceil() as usize).max(2);
    let mut learner = Learner {
        data,
        hp,
        numeric,
        symbolic: data.symbolic_indices(),
        n_total: n,
        min_rows,
        leaves: Vec::new(),
        unconverged: 0,
    };
    let all: Vec<usize> = (0..n).collect();
    let root = learner.grow(&all, 0, splitmix64(seed), None)?;
    Ok(IcTreeModel::from_parts(
        data.columns().to_vec(),
        root,
        learner.leaves,
        hp.clone(),
        TrainingMeta {
            n_rows: n,
            seed,
            unconverged_ica: learner.unconverged,
        },
    ))
}

impl Learner<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize, seed: u64, parent: Option<&Basis>) -> Result<Node> {
        let basis = self.basis(rows, seed, false, parent);
        if !basis.converged {
            self.unconverged += 1;
        }
        let splittable = self.hp.max_depth.is_none_or(|d| depth < d) && rows.len() >= 2 * self.min_rows;
        if splittable {
            if let Some(split) = self.choose_split(rows, &basis) {
                let (left, right): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| split.goes_left(&self.numeric[i], self.data.row(i)));
                if left.len() >= self.min_rows && right.len() >= self.min_rows {
                    let l = self.grow(&left, depth + 1, child_seed(seed, 0), Some(&basis))?;
                    let r = self.grow(&right, depth + 1, child_seed(seed, 1), Some(&basis))?;
                    return Ok(Node::Inner {
                        split,
                        left: Box::new(l),
                        right: Box::new(r),
                    });
                }
            }
        }
        let leaf = match self.fit_leaf(rows, basis) {
            Ok(leaf) => leaf,
            Err(Error::DegenerateSupport(_)) => {
                let fallback = self.basis(rows, seed, true, None);
                self.fit_leaf(rows, fallback)?
            }
            Err(e) => return Err(e),
        };
        self.leaves.push(leaf);
        Ok(Node::Leaf(self.leaves.len() - 1))
    }

    /// Too few rows for an ICA of their own (or a rank-deficient block) reuse
    /// the parent's basis when it spans the same columns, else the centered
    /// raw axes.
    fn basis(&self, rows: &[usize], seed: u64, force_identity: bool, parent: Option<&Basis>) -> Basis {
        let first = &self.numeric[rows[0]];
        let (mut columns, mut dropped) = (Vec::new(), Vec::new());
        for (c, &value) in first.iter().enumerate() {
            if rows.iter().all(|&i| self.numeric[i][c] == value) {
                dropped.push(DroppedColumn {
                    numeric_index: c,
                    value,
                });
            } else {
                columns.push(c);
            }
        }
        let m = columns.len();
        let n = rows.len();
        if self.hp.baseline_mode {
            return Basis {
                columns,
                dropped,
                transform: IcaTransform::identity(m),
                converged: true,
            };
        }
        let block = DMatrix::from_fn(n, m, |r, c| self.numeric[rows[r]][columns[c]]);
        let centered_identity = || {
            let mean = DVector::from_iterator(m, block.column_iter().map(|c| c.sum() / n as f64));
            IcaTransform {
                mean,
                unmixing: DMatrix::identity(m, m),
                mixing: DMatrix::identity(m, m),
                log_abs_det_unmixing: 0.0,
            }
        };
        let fallback = |columns: Vec<usize>, dropped: Vec<DroppedColumn>| match parent {
            Some(p) if !force_identity && p.columns == columns => Basis {
                columns,
                dropped,
                transform: p.transform.clone(),
                converged: true,
            },
            _ => Basis {
                columns,
                dropped,
                transform: centered_identity(),
                converged: true,
            },
        };
        if m == 0 || force_identity || n <= m {
            return fallback(columns, dropped);
        }
        match fast_ica(&block, m, self.hp.ica_max_iter, self.hp.ica_tol, seed) {
            Ok(fit) => Basis {
                columns,
                dropped,
                transform: fit.transform,
                converged: fit.converged,
            },
            Err(_) => fallback(columns, dropped),
        }
    }

    fn transformed(&self, rows: &[usize], basis: &Basis) -> Vec<Vec<f64>> {
        let m = basis.columns.len();
        let mut out = vec![Vec::with_capacity(rows.len()); m];
        for &i in rows {
            let x: Vec<f64> = basis.columns.iter().map(|&c| self.numeric[i][c]).collect();
            for (j, e) in basis.transform.transform(&x).into_iter().enumerate() {
                out[j].push(e);
            }
        }
        out
    }

    fn symbolic_codes(&self, rows: &[usize]) -> Vec<Vec<usize>> {
        self.symbolic
            .iter()
            .map(|&j| rows.iter().map(|&i| self.data.row(i)[j].as_sym().unwrap()).collect())
            .collect()
    }

    fn choose_split(&self, rows: &[usize], basis: &Basis) -> Option<Split> {
        let components = self.transformed(rows, basis);
        let codes = self.symbolic_codes(rows);
        let symbolic: Vec<SymbolicValues> = codes
            .iter()
            .zip(&self.symbolic)
            .map(|(c, &j)| SymbolicValues {
                codes: c,
                n_categories: self.data.columns()[j].categories.len(),
            })
            .collect();
        let best = best_split(&components, &symbolic, self.min_rows)?;
        if best.score < self.hp.min_improvement {
            return None;
        }
        Some(match best.target {
            SplitTarget::Axis { component, threshold } => {
                let m_num = self.numeric[0].len();
                let t = &basis.transform;
                let mut coefficients = vec![0.0; m_num];
                let mut offset = 0.0;
                for (p, &c) in basis.columns.iter().enumerate() {
                    coefficients[c] = t.unmixing[(component, p)];
                    offset += t.unmixing[(component, p)] * t.mean[p];
                }
                Split::Linear(LinearSplit {
                    coefficients,
                    threshold: threshold + offset,
                })
            }
            SplitTarget::Symbolic { column, value } => Split::Symbolic(SymbolicSplit {
                column: self.symbolic[column],
                value,
            }),
        })
    }

    fn fit_leaf(&self, rows: &[usize], basis: Basis) -> Result<Leaf> {
        let components = self
            .transformed(rows, &basis)
            .iter()
            .map(|values| Qpd::fit(values, self.hp.qpd_resolution))
            .collect::<Result<Vec<_>>>()?;
        let symbolic = self
            .symbolic_codes(rows)
            .iter()
            .zip(&self.symbolic)
            .map(|(codes, &j)| Multinomial::fit(codes, self.data.columns()[j].categories.len()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Leaf {
            weight: rows.len() as f64 / self.n_total as f64,
            n_rows: rows.len(),
            columns: basis.columns,
            transform: basis.transform,
            components,
            symbolic,
            dropped: basis.dropped,
            ica_converged: basis.converged,
        })
    }
}
