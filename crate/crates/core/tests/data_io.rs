use ictree::data::{
    load_csv, load_schema, save_csv, save_schema, split, synth_robot_grab, synth_three_gaussians_labeled,
    synth_two_uniforms, synth_two_uniforms_labeled, ColumnSpec, Dataset, Value,
};
use ictree::Error;

fn cluster_columns(data: &Dataset, labels: &[usize], k: usize) -> (Vec<f64>, Vec<f64>) {
    data.rows()
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == k)
        .map(|(r, _)| (r[0].as_num().unwrap(), r[1].as_num().unwrap()))
        .unzip()
}

fn range(v: &[f64]) -> (f64, f64) {
    (
        v.iter().cloned().fold(f64::INFINITY, f64::min),
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn two_uniform_clusters_have_disjoint_boxes() {
    let (d, labels) = synth_two_uniforms_labeled(1000, 3).unwrap();
    assert_eq!(d.n_rows(), 1000);
    assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 500);
    let (x0, y0) = cluster_columns(&d, &labels, 0);
    let (x1, y1) = cluster_columns(&d, &labels, 1);
    let (bx0, by0, bx1, by1) = (range(&x0), range(&y0), range(&x1), range(&y1));
    let disjoint_x = bx0.1 < bx1.0 || bx1.1 < bx0.0;
    let disjoint_y = by0.1 < by1.0 || by1.1 < by0.0;
    assert!(disjoint_x || disjoint_y, "{bx0:?} {by0:?} vs {bx1:?} {by1:?}");
}

#[test]
fn dependent_cluster_correlation_matches_generator() {
    // x ~ U(3, 5), y = 2x - 0.5 + U(0, 1):
    // var x = 4/12, var y = 4 var x + 1/12, cov = 2 var x.
    let var_x: f64 = 4.0 / 12.0;
    let rho_oracle = 2.0 * var_x / (var_x * (4.0 * var_x + 1.0 / 12.0)).sqrt();
    assert!(rho_oracle > 0.9);

    let (d, labels) = synth_two_uniforms_labeled(4000, 11).unwrap();
    let (x1, y1) = cluster_columns(&d, &labels, 1);
    let rho = correlation(&x1, &y1);
    assert!(rho.abs() > 0.9);
    assert!((rho - rho_oracle).abs() < 0.01, "rho {rho} vs oracle {rho_oracle}");
}

#[test]
fn robot_grab_construction() {
    let d = synth_robot_grab(2000, 10.0, 5).unwrap();
    let names: Vec<&str> = d.columns().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["x_obj", "y_obj", "x_rob", "y_rob"]);
    for r in d.rows() {
        let v: Vec<f64> = r.iter().map(|x| x.as_num().unwrap()).collect();
        assert!((0.0..10.0).contains(&v[0]) && (0.0..10.0).contains(&v[1]));
        assert!(v[2] - v[0] >= 0.0 && v[2] - v[0] < 1.0 + 1e-12);
        assert!(v[3] - v[1] >= 0.0 && v[3] - v[1] < 1.0 + 1e-12);
    }
    assert_eq!(synth_robot_grab(1, 10.0, 5).unwrap().n_rows(), 1);
    assert_eq!(synth_robot_grab(50, 10.0, 9).unwrap(), synth_robot_grab(50, 10.0, 9).unwrap());
}

#[test]
fn three_gaussians_moments_match_generator() {
    let means = [(0.0, 0.0), (6.0, 1.0), (2.0, 6.0)];
    // Covariances from the Cholesky factors: [l11^2, l11 l21; ., l21^2 + l22^2].
    let chol = [(1.0, 0.6, 0.8), (0.8, -0.5, 0.5), (1.2, 0.9, 0.6)];
    let (d, labels) = synth_three_gaussians_labeled(30_000, 2).unwrap();
    for k in 0..3 {
        let (x, y) = cluster_columns(&d, &labels, k);
        let n = x.len() as f64;
        assert!((n / 30_000.0 - 1.0 / 3.0).abs() < 0.02);
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        assert!((mx - means[k].0).abs() < 0.05 && (my - means[k].1).abs() < 0.05);
        let (l11, l21, l22) = chol[k];
        let cxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
        assert!((cxy - l11 * l21).abs() < 0.05, "cov {cxy}");
        assert!((vy - (l21 * l21 + l22 * l22)).abs() < 0.05, "var {vy}");
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut rows: Vec<Vec<Value>> = synth_two_uniforms(40, 1)
        .unwrap()
        .rows()
        .to_vec();
    for (i, r) in rows.iter_mut().enumerate() {
        r.push(Value::Sym(i % 3));
    }
    let mut cols = synth_two_uniforms(2, 1).unwrap().columns().to_vec();
    cols.push(ColumnSpec::symbolic("tag", ["a", "b", "c"]));
    let d = Dataset::new(cols, rows).unwrap();
    save_csv(&d, &path).unwrap();
    let back = load_csv(&path, None).unwrap();
    assert_eq!(back, d);
}

#[test]
fn schema_sidecar_freezes_category_order() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("s.json");
    let csv = dir.path().join("d.csv");
    let cols = vec![ColumnSpec::numeric("a"), ColumnSpec::symbolic("c", ["z", "y", "x"])];
    save_schema(&cols, &schema).unwrap();
    std::fs::write(&csv, "a,c\n1,x\n2,z\n").unwrap();
    let spec = load_schema(&schema).unwrap();
    assert_eq!(spec, cols);
    let d = load_csv(&csv, Some(&spec)).unwrap();
    assert_eq!(d.row(0)[1], Value::Sym(2));
    assert_eq!(d.row(1)[1], Value::Sym(0));

    std::fs::write(&csv, "a,c\n1,w\n").unwrap();
    assert!(matches!(load_csv(&csv, Some(&spec)), Err(Error::UnknownCategory { .. }) | Err(Error::Parse { .. })));
}

#[test]
fn iris_split_follows_the_ten_percent_protocol() {
    let iris = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv"), None).unwrap();
    assert_eq!(iris.n_rows(), 150);
    assert_eq!(iris.columns()[4].categories, ["setosa", "versicolor", "virginica"]);
    let (train, test) = split(&iris, 0.1, 4).unwrap();
    assert_eq!((train.n_rows(), test.n_rows()), (135, 15));

    // Partition: every original row appears exactly once across both parts.
    let key = |r: &[Value]| format!("{r:?}");
    let mut all: Vec<String> = iris.rows().iter().map(|r| key(r)).collect();
    let mut parts: Vec<String> = train.rows().iter().chain(test.rows()).map(|r| key(r)).collect();
    all.sort();
    parts.sort();
    assert_eq!(all, parts);
}
