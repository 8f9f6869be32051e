//! Training, evaluation and query harness around the `ictree` crate.
//!
//! The binary in `main.rs` only parses flags; everything it prints is built
//! here so it can be tested without spawning processes.

use std::path::Path;
use std::time::Instant;

use ictree::data::{split, ColumnSpec, Dataset, Value};
use ictree::inference::{apply_evidence, avg_log_likelihood, MpeResult};
use ictree::{fit, Error, Evidence, Hyperparams, IcTreeModel, Result};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Map, Value as Json};

pub const DEFAULT_SWEEP: [f64; 6] = [0.9, 0.4, 0.2, 0.1, 0.05, 0.01];
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InconsistentEvidence | Error::InsufficientAcceptance { .. } => EXIT_INCONSISTENT,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// One row of the evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Training rows.
    pub n: usize,
    /// Columns.
    pub m: usize,
    pub min_samples_leaf_fraction: f64,
    pub model_size: usize,
    pub n_leaves: usize,
    /// `None` when every training row has density 0.
    pub avg_train_ll: Option<f64>,
    pub avg_test_ll: Option<f64>,
    pub zero_fraction_test: f64,
    /// Seconds spent fitting and scoring.
    pub wall_time: f64,
}

/// Fits on `train`, scores both parts.
pub fn evaluate(
    name: &str,
    train: &Dataset,
    test: &Dataset,
    params: &Hyperparams,
    seed: u64,
) -> Result<(EvalReport, IcTreeModel)> {
    let start = Instant::now();
    let model = fit(train, params, seed)?;
    let tr = avg_log_likelihood(&model, train)?;
    let te = avg_log_likelihood(&model, test)?;
    let report = EvalReport {
        dataset: name.to_string(),
        n: train.n_rows(),
        m: train.n_cols(),
        min_samples_leaf_fraction: params.min_samples_leaf_fraction,
        model_size: model.param_count(),
        n_leaves: model.n_leaves(),
        avg_train_ll: tr.avg,
        avg_test_ll: te.avg,
        zero_fraction_test: te.zero_fraction,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((report, model))
}

/// One split, then one model per min-leaf fraction (in the given order).
pub fn sweep(
    name: &str,
    data: &Dataset,
    base: &Hyperparams,
    fractions: &[f64],
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let (train, test) = split(data, test_fraction, seed)?;
    fractions
        .iter()
        .map(|&f| {
            let params = Hyperparams {
                min_samples_leaf_fraction: f,
                ..base.clone()
            };
            evaluate(name, &train, &test, &params, seed).map(|(r, _)| r)
        })
        .collect()
}

/// `x` with 6 significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), fmt_sig)
}

pub const TABLE_HEADER: [&str; 10] = [
    "dataset",
    "n",
    "m",
    "min_leaf",
    "model_size",
    "leaves",
    "avg_train_ll",
    "avg_test_ll",
    "zero_test",
    "time_s",
];

pub fn table_cells(r: &EvalReport) -> Vec<String> {
    vec![
        r.dataset.clone(),
        r.n.to_string(),
        r.m.to_string(),
        fmt_sig(r.min_samples_leaf_fraction),
        r.model_size.to_string(),
        r.n_leaves.to_string(),
        fmt_opt(r.avg_train_ll),
        fmt_opt(r.avg_test_ll),
        fmt_sig(r.zero_fraction_test),
        fmt_sig(r.wall_time),
    ]
}

/// Whitespace-aligned table, header first.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![TABLE_HEADER.iter().map(|s| s.to_string()).collect()];
    rows.extend(reports.iter().map(table_cells));
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Evidence from inline JSON or from a file holding it.
pub fn read_evidence(arg: &str, columns: &[ColumnSpec]) -> Result<Evidence> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        Evidence::from_json_str(arg, columns)
    } else {
        Evidence::from_json_str(&std::fs::read_to_string(Path::new(arg))?, columns)
    }
}

fn cell_json(col: &ColumnSpec, v: &Value) -> Json {
    match v {
        Value::Num(x) => json!(x),
        Value::Sym(k) => json!(col.categories[*k]),
    }
}

/// Row keyed by column name.
pub fn row_json(columns: &[ColumnSpec], row: &[Value]) -> Json {
    let mut out = Map::new();
    for (c, v) in columns.iter().zip(row) {
        out.insert(c.name.clone(), cell_json(c, v));
    }
    Json::Object(out)
}

pub fn mpe_json(model: &IcTreeModel, r: &MpeResult) -> Json {
    let columns = model.columns();
    let numeric_names: Vec<&str> = model.numeric_columns().iter().map(|&c| columns[c].name.as_str()).collect();
    let modes: Map<String, Json> = model
        .symbolic_columns()
        .iter()
        .zip(&r.symbolic_modes)
        .map(|(&c, &k)| (columns[c].name.clone(), json!(columns[c].categories[k])))
        .collect();
    json!({
        "leaf": r.leaf,
        "density": r.density,
        "log_density": r.log_density,
        "representative": row_json(columns, &r.representative),
        "numeric_columns": numeric_names,
        "region_vertices": r.region_vertices,
        "component_intervals": r.component_intervals.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
        "symbolic_modes": modes,
    })
}

/// Rows drawn from the model, or from the evidence-restricted view with
/// rows outside the evidence rejected. Returns the rows and the number of
/// draws lost to path checks or rejection. Stops after `1000 * n` draws.
pub fn sample_rows<R: Rng + ?Sized>(
    model: &IcTreeModel,
    n: usize,
    ev: Option<&Evidence>,
    max_retries: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<Value>>, usize)> {
    let Some(ev) = ev else {
        let batch = model.view().sample(n, rng, max_retries);
        return Ok((batch.rows, batch.discarded));
    };
    let view = apply_evidence(model, ev)?;
    let cap = n.saturating_mul(1000);
    let (mut rows, mut lost, mut drawn) = (Vec::with_capacity(n), 0, 0);
    while rows.len() < n && drawn < cap {
        let want = (n - rows.len()).max(64).min(cap - drawn);
        let batch = view.sample(want, rng, max_retries);
        drawn += want;
        lost += batch.discarded;
        for r in batch.rows {
            if rows.len() < n && ev.contains(&r) {
                rows.push(r);
            } else if rows.len() < n {
                lost += 1;
            }
        }
    }
    Ok((rows, lost))
}

/// One lattice cell of a density grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub density: f64,
}

/// Density of the columns `(cx, cy)` on an `r x r` lattice of cell centers.
///
/// The lattice spans the model's bounding box in those columns, narrowed by
/// any evidence bounds. Other numeric columns and all symbolic columns are
/// integrated out by Monte Carlo with `n_mc` uniform draws over their (also
/// evidence-narrowed) box and categories; the same draws serve every cell.
/// With evidence, the evidence-restricted view is evaluated.
pub fn density_grid<R: Rng + ?Sized>(
    model: &IcTreeModel,
    cx: usize,
    cy: usize,
    resolution: usize,
    ev: Option<&Evidence>,
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<GridCell>> {
    let columns = model.columns();
    for c in [cx, cy] {
        if !columns.get(c).is_some_and(|s| s.is_numeric()) {
            return Err(Error::InvalidArgument(format!("column {c} is not a numeric column")));
        }
    }
    if cx == cy {
        return Err(Error::InvalidArgument("grid columns must differ".into()));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be at least 1".into()));
    }
    let empty = Evidence::new();
    let ev = ev.unwrap_or(&empty);
    let view = apply_evidence(model, ev)?;

    let bbox = model.bounding_box();
    let range = |col: usize| -> (f64, f64) {
        let p = model.numeric_columns().iter().position(|&c| c == col).expect("numeric column");
        let (mut lo, mut hi) = bbox[p];
        if let Some(&(a, b)) = ev.numeric_bounds().get(&col) {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    };
    let rest: Vec<usize> = model.numeric_columns().iter().copied().filter(|&c| c != cx && c != cy).collect();
    let rest_ranges: Vec<(f64, f64)> = rest.iter().map(|&c| range(c)).collect();
    let sym_allowed: Vec<Vec<usize>> = model
        .symbolic_columns()
        .iter()
        .map(|&c| match ev.symbolic_allowed().get(&c) {
            Some(cats) => cats.clone(),
            None => (0..columns[c].categories.len()).collect(),
        })
        .collect();

    let integrated = !rest.is_empty() || !sym_allowed.is_empty();
    let draws = if integrated { n_mc.max(1) } else { 1 };
    let mut volume: f64 = rest_ranges.iter().map(|(a, b)| (b - a).max(0.0)).product();
    volume *= sym_allowed.iter().map(|a| a.len() as f64).product::<f64>();
    let mut template = vec![Value::Num(0.0); columns.len()];
    let fills: Vec<Vec<Value>> = (0..draws)
        .map(|_| {
            for (&c, &(a, b)) in rest.iter().zip(&rest_ranges) {
                template[c] = Value::Num(a + rng.random::<f64>() * (b - a));
            }
            for (&c, cats) in model.symbolic_columns().iter().zip(&sym_allowed) {
                template[c] = Value::Sym(cats[rng.random_range(0..cats.len())]);
            }
            template.clone()
        })
        .collect();

    let (xr, yr) = (range(cx), range(cy));
    let step = |(lo, hi): (f64, f64), i: usize| lo + (i as f64 + 0.5) * (hi - lo) / resolution as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let x = step(xr, i);
        for k in 0..resolution {
            let y = step(yr, k);
            let mut acc = 0.0;
            for row in &fills {
                let mut row = row.clone();
                row[cx] = Value::Num(x);
                row[cy] = Value::Num(y);
                acc += view.log_density(&row)?.exp();
            }
            let density = if integrated { acc / draws as f64 * volume } else { acc };
            cells.push(GridCell { x, y, density });
        }
    }
    Ok(cells)
}

/// `x,y,density` CSV with a header line.
pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut out = String::from("x,y,density\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.x, c.y, c.density));
    }
    out
}

pub fn column_by_name(columns: &[ColumnSpec], name: &str) -> Result<usize> {
    columns
        .iter()
        .position(|c| c.name == name)
        .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(-2.6912345), "-2.69123");
        assert_eq!(fmt_sig(16.19), "16.1900");
        assert_eq!(fmt_sig(3562.0), "3562.00");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.5e-7), "1.50000e-7");
        assert_eq!(fmt_sig(0.01), "0.0100000");
    }

    #[test]
    fn absent_averages_render_as_dash() {
        let r = EvalReport {
            dataset: "d".into(),
            n: 10,
            m: 2,
            min_samples_leaf_fraction: 0.1,
            model_size: 7,
            n_leaves: 1,
            avg_train_ll: Some(1.0),
            avg_test_ll: None,
            zero_fraction_test: 1.0,
            wall_time: 0.5,
        };
        let cells = table_cells(&r);
        assert_eq!(cells[7], "-");
        assert_eq!(cells[8], "1.00000");
        let text = format_table(&[r]);
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().starts_with("dataset"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InconsistentEvidence), EXIT_INCONSISTENT);
        assert_eq!(exit_code(&Error::EmptyData), EXIT_DATA);
        assert_eq!(exit_code(&Error::Schema("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
    }

    fn iris_sweep() -> Vec<EvalReport> {
        let data = ictree::data::load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv"), None).unwrap();
        sweep("iris", &data, &Hyperparams::default(), &DEFAULT_SWEEP, DEFAULT_TEST_FRACTION, DEFAULT_SEED).unwrap()
    }

    #[test]
    fn iris_sweep_rows_grow_with_smaller_leaves() {
        let reports = iris_sweep();
        assert_eq!(reports.len(), 6);
        assert!(reports.windows(2).all(|w| w[0].min_samples_leaf_fraction >= w[1].min_samples_leaf_fraction));
        assert!(reports.windows(2).all(|w| w[0].model_size <= w[1].model_size));
        for r in &reports {
            assert_eq!((r.n, r.m), (135, 5));
            assert_eq!(r.avg_test_ll.is_none(), r.zero_fraction_test == 1.0);
        }
    }

    #[test]
    fn table_and_json_carry_the_same_numbers() {
        let reports = iris_sweep();
        let text = format_table(&reports);
        let json: Json = serde_json::to_value(&reports).unwrap();
        let keys = [
            "dataset",
            "n",
            "m",
            "min_samples_leaf_fraction",
            "model_size",
            "n_leaves",
            "avg_train_ll",
            "avg_test_ll",
            "zero_fraction_test",
            "wall_time",
        ];
        for (line, rec) in text.lines().skip(1).zip(json.as_array().unwrap()) {
            let cells: Vec<&str> = line.split_whitespace().collect();
            for (cell, key) in cells.iter().zip(keys) {
                let expected = match &rec[key] {
                    Json::Null => "-".to_string(),
                    Json::String(s) => s.clone(),
                    v if v.is_u64() => v.to_string(),
                    v => fmt_sig(v.as_f64().unwrap()),
                };
                assert_eq!(*cell, expected, "{key}");
            }
        }
    }
}
