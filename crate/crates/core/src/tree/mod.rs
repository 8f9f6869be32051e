//! IC-Tree structure: oblique and symbolic splits, transformed leaves, routing
//! and parameter counting. Learning lives in [`learn`].

mod learn;

pub use learn::{best_split, fit, SplitCandidate, SplitTarget, SymbolicValues};

use crate::data::{check_row, kind_indices, ColumnKind, ColumnSpec, Value};
use crate::distributions::{Multinomial, Qpd};
use crate::error::{Error, Result};
use crate::ica::IcaTransform;

/// Learning hyperparameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hyperparams {
    /// Every leaf must hold at least this fraction of the training rows.
    pub min_samples_leaf_fraction: f64,
    /// `None` grows until another criterion stops.
    pub max_depth: Option<usize>,
    pub qpd_resolution: usize,
    pub ica_max_iter: usize,
    pub ica_tol: f64,
    /// Splits whose score falls below this are not taken.
    pub min_improvement: f64,
    /// Identity transform everywhere: a plain axis-aligned quantile tree.
    pub baseline_mode: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            min_samples_leaf_fraction: 0.1,
            max_depth: None,
            qpd_resolution: 16,
            ica_max_iter: 1000,
            ica_tol: 1e-4,
            min_improvement: 1e-4,
            baseline_mode: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.min_samples_leaf_fraction > 0.0 && self.min_samples_leaf_fraction < 1.0) {
            return bad("min_samples_leaf_fraction must lie in (0, 1)");
        }
        if self.qpd_resolution == 0 {
            return bad("qpd_resolution must be at least 1");
        }
        if self.ica_max_iter == 0 {
            return bad("ica_max_iter must be at least 1");
        }
        if !(self.ica_tol > 0.0) {
            return bad("ica_tol must be positive");
        }
        if !(self.min_improvement >= 0.0) {
            return bad("min_improvement must be nonnegative");
        }
        Ok(())
    }
}

/// Oblique split `sum_j a_j x_j < threshold` over the numeric columns, where
/// the threshold already absorbs the node mean (`b + sum_j a_j mean_j`).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSplit {
    pub coefficients: Vec<f64>,
    pub threshold: f64,
}

impl LinearSplit {
    /// Left-to-right dot product over the numeric values.
    pub fn score(&self, numeric: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (a, x) in self.coefficients.iter().zip(numeric) {
            acc += a * x;
        }
        acc
    }

    pub fn goes_left(&self, numeric: &[f64]) -> bool {
        self.score(numeric) < self.threshold
    }
}

/// One-vs-rest split on a symbolic column; rows equal to `value` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicSplit {
    /// Dataset column index.
    pub column: usize,
    pub value: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Split {
    Linear(LinearSplit),
    Symbolic(SymbolicSplit),
}

impl Split {
    /// `numeric` holds the row's numeric values in numeric-column order.
    pub fn goes_left(&self, numeric: &[f64], row: &[Value]) -> bool {
        match self {
            Split::Linear(s) => s.goes_left(numeric),
            Split::Symbolic(s) => row[s.column] == Value::Sym(s.value),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Inner {
        split: Split,
        left: Box<Node>,
        right: Box<Node>,
    },
    /// Index into [`IcTreeModel::leaves`].
    Leaf(usize),
}

/// A numeric column that was constant in a leaf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroppedColumn {
    /// Position in the model's numeric columns.
    pub numeric_index: usize,
    pub value: f64,
}

/// Query values within this distance of a dropped column's constant match it.
pub const DROPPED_MATCH_TOL: f64 = 1e-9;

/// Fully factorized leaf in its own independent-component coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    /// Prior `P(leaf)`: fraction of training rows routed here.
    pub weight: f64,
    pub n_rows: usize,
    /// Positions (in the model's numeric columns) the transform acts on.
    pub columns: Vec<usize>,
    pub transform: IcaTransform,
    /// One QPD per transformed component.
    pub components: Vec<Qpd>,
    /// One distribution per symbolic column, in the model's symbolic order.
    pub symbolic: Vec<Multinomial>,
    pub dropped: Vec<DroppedColumn>,
    pub ica_converged: bool,
}

impl Leaf {
    /// Leaf-local input vector: the numeric values at `self.columns`.
    pub fn local_input(&self, numeric: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| numeric[c]).collect()
    }

    /// True when every dropped column matches its constant.
    pub fn dropped_match(&self, numeric: &[f64]) -> bool {
        self.dropped
            .iter()
            .all(|d| (numeric[d.numeric_index] - d.value).abs() <= DROPPED_MATCH_TOL)
    }

    /// Original-space box (over all numeric columns) enclosing the image of
    /// the component supports.
    pub fn bounding_box(&self, n_numeric: usize) -> Vec<(f64, f64)> {
        let mut bbox = vec![(0.0, 0.0); n_numeric];
        for d in &self.dropped {
            bbox[d.numeric_index] = (d.value, d.value);
        }
        let supports: Vec<(f64, f64)> = self.components.iter().map(Qpd::support).collect();
        let t = &self.transform;
        for (p, &col) in self.columns.iter().enumerate() {
            let (mut lo, mut hi) = (t.mean[p], t.mean[p]);
            for (j, &(a, b)) in supports.iter().enumerate() {
                let (u, v) = (t.mixing[(p, j)] * a, t.mixing[(p, j)] * b);
                lo += u.min(v);
                hi += u.max(v);
            }
            bbox[col] = (lo, hi);
        }
        bbox
    }

    pub fn param_count(&self) -> usize {
        let m = self.columns.len();
        m * m
            + m
            + self.components.iter().map(Qpd::param_count).sum::<usize>()
            + self.symbolic.iter().map(Multinomial::param_count).sum::<usize>()
            + 1
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingMeta {
    pub n_rows: usize,
    pub seed: u64,
    /// Number of ICA fits (nodes and leaves) that hit the iteration budget.
    pub unconverged_ica: usize,
}

/// One step of a root-to-leaf path.
#[derive(Clone, Copy, Debug)]
pub struct PathStep<'a> {
    pub split: &'a Split,
    pub left: bool,
}

impl PathStep<'_> {
    pub fn holds(&self, numeric: &[f64], row: &[Value]) -> bool {
        self.split.goes_left(numeric, row) == self.left
    }
}

/// A trained IC-Tree.
#[derive(Clone, Debug, PartialEq)]
pub struct IcTreeModel {
    pub(crate) columns: Vec<ColumnSpec>,
    pub(crate) numeric: Vec<usize>,
    pub(crate) symbolic: Vec<usize>,
    pub(crate) root: Node,
    pub(crate) leaves: Vec<Leaf>,
    pub(crate) hyperparams: Hyperparams,
    pub(crate) meta: TrainingMeta,
}

impl IcTreeModel {
    pub(crate) fn from_parts(
        columns: Vec<ColumnSpec>,
        root: Node,
        leaves: Vec<Leaf>,
        hyperparams: Hyperparams,
        meta: TrainingMeta,
    ) -> Self {
        let numeric = kind_indices(&columns, ColumnKind::Numeric);
        let symbolic = kind_indices(&columns, ColumnKind::Symbolic);
        Self {
            columns,
            numeric,
            symbolic,
            root,
            leaves,
            hyperparams,
            meta,
        }
    }

    /// Assembles a model from its parts and checks that they fit together:
    /// every leaf is reached exactly once, dimensions agree with the columns
    /// and the weights sum to 1.
    pub fn new(
        columns: Vec<ColumnSpec>,
        root: Node,
        leaves: Vec<Leaf>,
        hyperparams: Hyperparams,
        meta: TrainingMeta,
    ) -> Result<Self> {
        for c in &columns {
            c.validate()?;
        }
        let model = Self::from_parts(columns, root, leaves, hyperparams, meta);
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(m));
        let n_num = self.numeric.len();
        let mut seen = vec![0usize; self.leaves.len()];
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf(id) => match seen.get_mut(*id) {
                    Some(k) => *k += 1,
                    None => return bad(format!("node refers to missing leaf {id}")),
                },
                Node::Inner { split, left, right } => {
                    match split {
                        Split::Linear(s) => {
                            if s.coefficients.len() != n_num {
                                return bad(format!(
                                    "linear split has {} coefficients for {n_num} numeric columns",
                                    s.coefficients.len()
                                ));
                            }
                            if s.coefficients.iter().all(|a| *a == 0.0) || !s.threshold.is_finite() {
                                return bad("linear split with zero coefficients or non-finite threshold".into());
                            }
                        }
                        Split::Symbolic(s) => match self.columns.get(s.column) {
                            Some(c) if c.kind == ColumnKind::Symbolic && s.value < c.categories.len() => {}
                            _ => return bad(format!("invalid symbolic split on column {}", s.column)),
                        },
                    }
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        if let Some(id) = seen.iter().position(|&k| k != 1) {
            return bad(format!("leaf {id} is reached {} times", seen[id]));
        }
        let mut total = 0.0;
        for (id, leaf) in self.leaves.iter().enumerate() {
            let m = leaf.columns.len();
            let mut covered = vec![false; n_num];
            for p in leaf.columns.iter().copied().chain(leaf.dropped.iter().map(|d| d.numeric_index)) {
                match covered.get_mut(p) {
                    Some(c) if !*c => *c = true,
                    _ => return bad(format!("leaf {id} lists numeric column {p} twice or out of range")),
                }
            }
            if covered.iter().any(|c| !c) {
                return bad(format!("leaf {id} does not cover every numeric column"));
            }
            if leaf.transform.dim() != m || leaf.components.len() != m {
                return bad(format!("leaf {id} has mismatched transform or component dimensions"));
            }
            if leaf.symbolic.len() != self.symbolic.len()
                || leaf
                    .symbolic
                    .iter()
                    .zip(&self.symbolic)
                    .any(|(d, &c)| d.n_categories() != self.columns[c].categories.len())
            {
                return bad(format!("leaf {id} has mismatched symbolic distributions"));
            }
            if !(leaf.weight >= 0.0 && leaf.weight <= 1.0) {
                return bad(format!("leaf {id} has weight {}", leaf.weight));
            }
            total += leaf.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("leaf weights sum to {total}"));
        }
        Ok(())
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    /// Dataset column indices of the numeric columns.
    pub fn numeric_columns(&self) -> &[usize] {
        &self.numeric
    }

    /// Dataset column indices of the symbolic columns.
    pub fn symbolic_columns(&self) -> &[usize] {
        &self.symbolic
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Checks a row against the schema and returns its numeric values in
    /// numeric-column order.
    pub fn numeric_values(&self, row: &[Value]) -> Result<Vec<f64>> {
        if let Err((column, message)) = check_row(&self.columns, row) {
            return Err(match row.iter().zip(&self.columns).find_map(|(v, c)| match v {
                Value::Sym(k) if c.kind == ColumnKind::Symbolic && *k >= c.categories.len() => {
                    Some((c.name.clone(), *k))
                }
                _ => None,
            }) {
                Some((column, k)) => Error::UnknownCategory {
                    column,
                    value: format!("code {k}"),
                },
                None => Error::Schema(if column.is_empty() {
                    message
                } else {
                    format!("column `{column}`: {message}")
                }),
            });
        }
        Ok(self.numeric_unchecked(row))
    }

    pub(crate) fn numeric_unchecked(&self, row: &[Value]) -> Vec<f64> {
        self.numeric
            .iter()
            .map(|&j| row[j].as_num().expect("numeric cell"))
            .collect()
    }

    /// Deterministic descent to the leaf containing `row`.
    pub fn route(&self, row: &[Value]) -> Result<usize> {
        let numeric = self.numeric_values(row)?;
        Ok(self.route_numeric(&numeric, row))
    }

    pub(crate) fn route_numeric(&self, numeric: &[f64], row: &[Value]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(id) => return *id,
                Node::Inner { split, left, right } => {
                    node = if split.goes_left(numeric, row) { left } else { right };
                }
            }
        }
    }

    /// Root-to-leaf split sequence of every leaf, indexed by leaf id.
    pub fn leaf_paths(&self) -> Vec<Vec<PathStep<'_>>> {
        fn walk<'a>(node: &'a Node, path: &mut Vec<PathStep<'a>>, out: &mut Vec<Vec<PathStep<'a>>>) {
            match node {
                Node::Leaf(id) => out[*id] = path.clone(),
                Node::Inner { split, left, right } => {
                    path.push(PathStep { split, left: true });
                    walk(left, path, out);
                    path.pop();
                    path.push(PathStep { split, left: false });
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = vec![Vec::new(); self.leaves.len()];
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Inner nodes cost `m + 1` (linear) or 1 (symbolic); leaves cost
    /// `m_eff^2 + m_eff + sum(2K) + sum(categories - 1) + 1`.
    pub fn param_count(&self) -> usize {
        fn inner(node: &Node, m: usize) -> usize {
            match node {
                Node::Leaf(_) => 0,
                Node::Inner { split, left, right } => {
                    let own = match split {
                        Split::Linear(_) => m + 1,
                        Split::Symbolic(_) => 1,
                    };
                    own + inner(left, m) + inner(right, m)
                }
            }
        }
        inner(&self.root, self.numeric.len()) + self.leaves.iter().map(Leaf::param_count).sum::<usize>()
    }

    /// Union of the leaves' original-space bounding boxes, per numeric column.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let m = self.numeric.len();
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
        for leaf in &self.leaves {
            for (o, (lo, hi)) in out.iter_mut().zip(leaf.bounding_box(m)) {
                o.0 = o.0.min(lo);
                o.1 = o.1.max(hi);
            }
        }
        out
    }

    /// Number of inner nodes along the longest path.
    pub fn depth(&self) -> usize {
        fn d(node: &Node) -> usize {
            match node {
                Node::Leaf(_) => 0,
                Node::Inner { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }
}
