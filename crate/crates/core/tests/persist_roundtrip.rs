mod common;

use common::{hp, random_rows};
use ictree::data::{load_csv, synth_three_gaussians, synth_two_uniforms, ColumnSpec, Dataset, Value};
use ictree::inference::avg_log_likelihood;
use ictree::persist::{from_json, from_json_str, load_model, save_model, to_json, to_json_string, SCHEMA_VERSION};
use ictree::tree::{fit, Hyperparams, IcTreeModel};
use ictree::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn iris() -> Dataset {
    load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv"), None).unwrap()
}

fn probes(model: &IcTreeModel, n: usize, seed: u64) -> Vec<Vec<Value>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sym: Vec<usize> = model
        .symbolic_columns()
        .iter()
        .map(|&c| model.columns()[c].categories.len())
        .collect();
    random_rows(&model.bounding_box(), 0.5, n, &mut rng)
        .into_iter()
        .map(|mut r| {
            r.extend(n_sym.iter().map(|&k| Value::Sym(rng.random_range(0..k))));
            r
        })
        .collect()
}

fn assert_same_behaviour(a: &IcTreeModel, b: &IcTreeModel, seed: u64) {
    assert_eq!(a, b);
    for row in probes(a, 10_000, seed) {
        assert_eq!(a.route(&row).unwrap(), b.route(&row).unwrap());
        let (la, lb) = (a.log_density(&row).unwrap(), b.log_density(&row).unwrap());
        assert!(la == lb || (la - lb).abs() <= 1e-12, "{la} vs {lb}");
    }
}

#[test]
fn save_and_load_preserve_routes_and_densities() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (iris(), hp(0.05)),
        (synth_two_uniforms(1000, 3).unwrap(), hp(0.2)),
        (
            synth_three_gaussians(2000, 4).unwrap(),
            Hyperparams {
                baseline_mode: true,
                ..hp(0.05)
            },
        ),
    ];
    for (i, (data, params)) in cases.iter().enumerate() {
        let m = fit(data, params, i as u64).unwrap();
        let path = dir.path().join(format!("m{i}.json"));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_same_behaviour(&m, &back, i as u64);
        assert_eq!(back.param_count(), m.param_count());
        assert_eq!(avg_log_likelihood(&back, data).unwrap(), avg_log_likelihood(&m, data).unwrap());
        assert_eq!(from_json_str(&to_json_string(&m)).unwrap(), m);
    }
}

#[test]
fn unknown_schema_version_is_rejected() {
    let m = fit(&synth_two_uniforms(200, 1).unwrap(), &hp(0.45), 1).unwrap();
    let mut v = to_json(&m);
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    v["schema_version"] = (SCHEMA_VERSION + 1).into();
    assert!(matches!(from_json(v.clone()), Err(Error::SchemaVersion(2))));
    v.as_object_mut().unwrap().remove("schema_version");
    assert!(matches!(from_json(v), Err(Error::Schema(_))));
}

#[test]
fn tampered_files_are_rejected() {
    let m = fit(&synth_two_uniforms(400, 2).unwrap(), &hp(0.45), 2).unwrap();
    let good = to_json(&m);

    let mut weights = good.clone();
    weights["leaves"][0]["weight"] = 0.99.into();
    assert!(matches!(from_json(weights), Err(Error::Schema(_))));

    let mut dim = good.clone();
    dim["leaves"][0]["mean"].as_array_mut().unwrap().pop();
    assert!(matches!(from_json(dim), Err(Error::Schema(_))));

    let mut masses = good.clone();
    masses["leaves"][1]["components"][0]["masses"][0] = (-1.0).into();
    assert!(from_json(masses).is_err());

    let mut leaf_ref = good.clone();
    leaf_ref["root"]["left"] = serde_json::json!({"type": "leaf", "leaf": 7});
    assert!(matches!(from_json(leaf_ref), Err(Error::Schema(_))));

    assert!(matches!(from_json_str("{not json"), Err(Error::Json(_))));
    assert_eq!(from_json(good).unwrap(), m);
}

#[test]
fn symbolic_splits_store_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = (0..600)
        .map(|i| vec![Value::Num(rng.random::<f64>() + (i % 3) as f64 * 0.05), Value::Sym(i % 3)])
        .collect();
    let cols = vec![ColumnSpec::numeric("x"), ColumnSpec::symbolic("tag", ["a", "b", "c"])];
    let m = fit(&Dataset::new(cols, rows).unwrap(), &hp(0.2), 0).unwrap();
    let text = to_json_string(&m);
    let back = from_json_str(&text).unwrap();
    assert_same_behaviour(&m, &back, 9);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["root"]["type"], "symbolic");
    assert_eq!(v["root"]["column"], "tag");
    assert!(m.columns()[1].categories.iter().any(|c| v["root"]["value"] == c.as_str()));
}
