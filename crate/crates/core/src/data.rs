//! Column-typed tables: CSV ingestion, schema sidecars, train/test splits and
//! the synthetic generators used throughout the test suite.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Symbolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category labels; the position of a label is its code.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
        }
    }

    pub fn symbolic<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Symbolic,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == ColumnKind::Numeric
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ColumnKind::Numeric if !self.categories.is_empty() => Err(Error::Schema(format!(
                "numeric column `{}` carries categories",
                self.name
            ))),
            ColumnKind::Symbolic => {
                let unique: BTreeSet<&String> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::Schema(format!(
                        "duplicate category labels in column `{}`",
                        self.name
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A single table cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    /// Category code into the column's `categories`.
    Sym(usize),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match *self {
            Value::Num(x) => Some(x),
            Value::Sym(_) => None,
        }
    }

    pub fn as_sym(&self) -> Option<usize> {
        match *self {
            Value::Sym(c) => Some(c),
            Value::Num(_) => None,
        }
    }
}

/// Immutable n x m table with typed columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    rows: Vec<Vec<Value>>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, rows: Vec<Vec<Value>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        for c in &columns {
            c.validate()?;
        }
        for (i, row) in rows.iter().enumerate() {
            check_row(&columns, row).map_err(|message| Error::Parse {
                row: i + 1,
                column: message.0,
                message: message.1,
            })?;
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        kind_indices(&self.columns, ColumnKind::Numeric)
    }

    pub fn symbolic_indices(&self) -> Vec<usize> {
        kind_indices(&self.columns, ColumnKind::Symbolic)
    }

    /// Values of a numeric column. Panics if the column is symbolic.
    pub fn numeric_column(&self, j: usize) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r[j].as_num().expect("numeric column"))
            .collect()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        Dataset::new(self.columns.clone(), rows)
    }
}

pub(crate) fn kind_indices(columns: &[ColumnSpec], kind: ColumnKind) -> Vec<usize> {
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == kind)
        .map(|(i, _)| i)
        .collect()
}

/// Returns (column name, message) on the first violation.
pub(crate) fn check_row(columns: &[ColumnSpec], row: &[Value]) -> std::result::Result<(), (String, String)> {
    if row.len() != columns.len() {
        return Err((
            String::new(),
            format!("expected {} cells, found {}", columns.len(), row.len()),
        ));
    }
    for (spec, cell) in columns.iter().zip(row) {
        match (spec.kind, cell) {
            (ColumnKind::Numeric, Value::Num(x)) if x.is_finite() => {}
            (ColumnKind::Numeric, Value::Num(x)) => {
                return Err((spec.name.clone(), format!("non-finite value {x}")))
            }
            (ColumnKind::Symbolic, Value::Sym(c)) if *c < spec.categories.len() => {}
            (ColumnKind::Symbolic, Value::Sym(c)) => {
                return Err((spec.name.clone(), format!("category code {c} out of range")))
            }
            _ => return Err((spec.name.clone(), "cell kind does not match column".into())),
        }
    }
    Ok(())
}

/// Sidecar schema document: per-column kind and category order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSpec>> {
    let schema: Schema = serde_json::from_reader(File::open(path)?)?;
    for c in &schema.columns {
        c.validate()?;
    }
    Ok(schema.columns)
}

pub fn save_schema(columns: &[ColumnSpec], path: impl AsRef<Path>) -> Result<()> {
    let schema = Schema {
        columns: columns.to_vec(),
    };
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &schema)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, spec: Option<&[ColumnSpec]>) -> Result<Dataset> {
    read_csv(File::open(path)?, spec)
}

/// Parses CSV with a header row. Without `spec`, a column is numeric iff every
/// cell parses as a finite real; symbolic categories are the sorted distinct
/// labels. Empty cells are rejected.
pub fn read_csv<R: Read>(reader: R, spec: Option<&[ColumnSpec]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut raw: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        raw.push(record.iter().map(str::to_owned).collect());
    }
    if raw.is_empty() {
        return Err(Error::EmptyData);
    }
    for (i, r) in raw.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Parse {
                row: i + 1,
                column: String::new(),
                message: format!("expected {} cells, found {}", header.len(), r.len()),
            });
        }
        if let Some(j) = r.iter().position(|c| c.is_empty()) {
            return Err(Error::Parse {
                row: i + 1,
                column: header[j].clone(),
                message: "missing value".into(),
            });
        }
    }

    let columns = match spec {
        Some(spec) => declared_columns(&header, spec, &raw)?,
        None => infer_columns(&header, &raw),
    };

    let mut rows = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let mut row = Vec::with_capacity(columns.len());
        for (cell, col) in r.iter().zip(&columns) {
            let parse_err = |message: String| Error::Parse {
                row: i + 1,
                column: col.name.clone(),
                message,
            };
            match col.kind {
                ColumnKind::Numeric => match parse_real(cell) {
                    Some(x) => row.push(Value::Num(x)),
                    None => return Err(parse_err(format!("`{cell}` is not a finite real"))),
                },
                ColumnKind::Symbolic => match col.category_index(cell) {
                    Some(c) => row.push(Value::Sym(c)),
                    None => return Err(parse_err(format!("`{cell}` is not a declared category"))),
                },
            }
        }
        rows.push(row);
    }
    Dataset::new(columns, rows)
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn sorted_labels(raw: &[Vec<String>], j: usize) -> Vec<String> {
    raw.iter()
        .map(|r| r[j].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn infer_columns(header: &[String], raw: &[Vec<String>]) -> Vec<ColumnSpec> {
    header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if raw.iter().all(|r| parse_real(&r[j]).is_some()) {
                ColumnSpec::numeric(name.clone())
            } else {
                ColumnSpec::symbolic(name.clone(), sorted_labels(raw, j))
            }
        })
        .collect()
}

fn declared_columns(header: &[String], spec: &[ColumnSpec], raw: &[Vec<String>]) -> Result<Vec<ColumnSpec>> {
    if header.len() != spec.len() {
        return Err(Error::Schema(format!(
            "header has {} columns, schema declares {}",
            header.len(),
            spec.len()
        )));
    }
    let mut columns = Vec::with_capacity(spec.len());
    for (j, (name, declared)) in header.iter().zip(spec).enumerate() {
        if *name != declared.name {
            return Err(Error::Schema(format!(
                "column {} is `{name}` in the file but `{}` in the schema",
                j + 1,
                declared.name
            )));
        }
        declared.validate()?;
        let mut col = declared.clone();
        // A symbolic column declared without categories takes them from the data.
        if col.kind == ColumnKind::Symbolic && col.categories.is_empty() {
            col.categories = sorted_labels(raw, j);
        }
        columns.push(col);
    }
    Ok(columns)
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data.columns(), data.rows(), File::create(path)?)
}

/// Writes rows under the given header. Numeric cells use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_csv<W: Write>(columns: &[ColumnSpec], rows: &[Vec<Value>], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(columns.iter().map(|c| c.name.as_str()))?;
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(columns)
            .map(|(v, c)| match *v {
                Value::Num(x) => format!("{x}"),
                Value::Sym(k) => c.categories[k].clone(),
            })
            .collect();
        wtr.write_record(&cells)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Random disjoint partition into (train, test). The test part holds
/// `round(n * test_fraction)` rows clamped to `[1, n - 1]`; both parts keep the
/// original row order.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument("split needs at least 2 rows".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.select(&train)?, data.select(&test)?))
}

fn numeric_dataset(names: &[&str], rows: Vec<Vec<f64>>) -> Dataset {
    let columns = names.iter().map(|n| ColumnSpec::numeric(*n)).collect();
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(Value::Num).collect())
        .collect();
    Dataset::new(columns, rows).expect("generated rows are valid")
}

/// Object positions uniform on `[0, object_range)^2`; the robot stands at the
/// object position plus an independent `U(0, 1)` offset per axis.
pub fn synth_robot_grab(n: usize, object_range: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(object_range > 0.0) {
        return Err(Error::InvalidArgument("object_range must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let x_obj = rng.random::<f64>() * object_range;
            let y_obj = rng.random::<f64>() * object_range;
            let x_rob = x_obj + rng.random::<f64>();
            let y_rob = y_obj + rng.random::<f64>();
            vec![x_obj, y_obj, x_rob, y_rob]
        })
        .collect();
    Ok(numeric_dataset(&["x_obj", "y_obj", "x_rob", "y_rob"], rows))
}

/// Two separated 2D clusters with their generating labels.
///
/// Cluster 0 (first `n / 2` rows): `x, y ~ U(0, 2)` independently.
/// Cluster 1: `x ~ U(3, 5)`, `y = 2x - 0.5 + U(0, 1)`, so its bounding box is
/// `[3, 5] x [5.5, 10.5]`.
pub fn synth_two_uniforms_labeled(n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        if i < half {
            rows.push(vec![2.0 * rng.random::<f64>(), 2.0 * rng.random::<f64>()]);
            labels.push(0);
        } else {
            let x = 3.0 + 2.0 * rng.random::<f64>();
            let y = 2.0 * x - 0.5 + rng.random::<f64>();
            rows.push(vec![x, y]);
            labels.push(1);
        }
    }
    Ok((numeric_dataset(&["x", "y"], rows), labels))
}

pub fn synth_two_uniforms(n: usize, seed: u64) -> Result<Dataset> {
    synth_two_uniforms_labeled(n, seed).map(|(d, _)| d)
}

/// Means and lower Cholesky factors `[l11, l21, l22]` of the three components.
const GAUSSIANS: [([f64; 2], [f64; 3]); 3] = [
    ([0.0, 0.0], [1.0, 0.6, 0.8]),
    ([6.0, 1.0], [0.8, -0.5, 0.5]),
    ([2.0, 6.0], [1.2, 0.9, 0.6]),
];

/// Equal-weight mixture of three full-covariance 2D Gaussians, with the
/// component label of every row.
pub fn synth_three_gaussians_labeled(n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..GAUSSIANS.len());
        let (mean, [l11, l21, l22]) = GAUSSIANS[k];
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        rows.push(vec![mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2]);
        labels.push(k);
    }
    Ok((numeric_dataset(&["x", "y"], rows), labels))
}

pub fn synth_three_gaussians(n: usize, seed: u64) -> Result<Dataset> {
    synth_three_gaussians_labeled(n, seed).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_numeric_and_symbolic_columns() {
        let d = read_csv("a,b\n1,x\n2,y\n".as_bytes(), None).unwrap();
        assert_eq!(d.n_cols(), 2);
        assert_eq!(d.columns()[0], ColumnSpec::numeric("a"));
        assert_eq!(d.columns()[1], ColumnSpec::symbolic("b", ["x", "y"]));
        assert_eq!(d.row(1), &[Value::Num(2.0), Value::Sym(1)]);
    }

    #[test]
    fn categories_are_sorted() {
        let d = read_csv("c\nz\na\nm\na\n".as_bytes(), None).unwrap();
        assert_eq!(d.columns()[0].categories, vec!["a", "m", "z"]);
        assert_eq!(d.row(0)[0], Value::Sym(2));
    }

    #[test]
    fn header_only_is_empty_data() {
        assert!(matches!(read_csv("a,b\n".as_bytes(), None), Err(Error::EmptyData)));
    }

    #[test]
    fn declared_numeric_rejects_label() {
        let spec = [ColumnSpec::numeric("a")];
        match read_csv("a\n1\nfoo\n".as_bytes(), Some(&spec)) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn declared_categories_are_frozen() {
        let spec = [ColumnSpec::symbolic("c", ["b", "a"])];
        let d = read_csv("c\na\nb\n".as_bytes(), Some(&spec)).unwrap();
        assert_eq!(d.row(0)[0], Value::Sym(1));
        assert!(read_csv("c\na\nq\n".as_bytes(), Some(&spec)).is_err());
    }

    #[test]
    fn missing_cells_are_rejected() {
        match read_csv("a,b\n1,2\n3,\n".as_bytes(), None) {
            Err(Error::Parse { row: 2, column, .. }) => assert_eq!(column, "b"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_name_mismatch() {
        let spec = [ColumnSpec::numeric("q")];
        assert!(matches!(
            read_csv("a\n1\n".as_bytes(), Some(&spec)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn kind_inference_is_idempotent() {
        let d = read_csv("a,b,c\n1,x,2.5\n-3,y,1e3\n".as_bytes(), None).unwrap();
        let mut buf = Vec::new();
        write_csv(d.columns(), d.rows(), &mut buf).unwrap();
        let again = read_csv(buf.as_slice(), None).unwrap();
        assert_eq!(d.columns(), again.columns());
    }

    #[test]
    fn split_sizes() {
        let d = synth_robot_grab(150, 10.0, 1).unwrap();
        let (train, test) = split(&d, 0.1, 7).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (135, 15));

        let d2 = synth_robot_grab(2, 10.0, 1).unwrap();
        let (train, test) = split(&d2, 0.1, 7).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let d = synth_robot_grab(50, 10.0, 3).unwrap();
        assert_eq!(split(&d, 0.3, 9).unwrap(), split(&d, 0.3, 9).unwrap());
        assert_ne!(split(&d, 0.3, 9).unwrap().1, split(&d, 0.3, 10).unwrap().1);
    }

    #[test]
    fn split_rejects_bad_input() {
        let d = synth_robot_grab(1, 10.0, 3).unwrap();
        assert!(split(&d, 0.5, 0).is_err());
        let d = synth_robot_grab(10, 10.0, 3).unwrap();
        assert!(split(&d, 1.0, 0).is_err());
        assert!(split(&d, 0.0, 0).is_err());
    }

    #[test]
    fn robot_grab_offsets() {
        let d = synth_robot_grab(2000, 10.0, 42).unwrap();
        for r in d.rows() {
            let v: Vec<f64> = r.iter().map(|c| c.as_num().unwrap()).collect();
            assert!((0.0..10.0).contains(&v[0]) && (0.0..10.0).contains(&v[1]));
            assert!((0.0..1.0).contains(&(v[2] - v[0])));
            assert!((0.0..1.0).contains(&(v[3] - v[1])));
        }
        assert_eq!(synth_robot_grab(1, 10.0, 0).unwrap().n_rows(), 1);
        assert_eq!(synth_robot_grab(30, 10.0, 5).unwrap(), synth_robot_grab(30, 10.0, 5).unwrap());
        assert!(synth_robot_grab(0, 10.0, 5).is_err());
        assert!(synth_robot_grab(3, 0.0, 5).is_err());
    }

    #[test]
    fn three_gaussians_is_reproducible() {
        let a = synth_three_gaussians(300, 4).unwrap();
        assert_eq!(a, synth_three_gaussians(300, 4).unwrap());
        let (_, labels) = synth_three_gaussians_labeled(3000, 4).unwrap();
        for k in 0..3 {
            let count = labels.iter().filter(|&&l| l == k).count();
            assert!((800..1200).contains(&count), "component {k}: {count}");
        }
    }
}
