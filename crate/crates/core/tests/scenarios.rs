use std::fs;
use std::path::PathBuf;

use ucp_core::scenario_file::load_scenario;
use ucp_core::tensor::ElasticityCoefficients;
use ucp_core::{Error, ScalarField};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn read(name: &str) -> String {
    fs::read_to_string(scenario_dir().join(name)).unwrap()
}

#[test]
fn every_golden_file_loads() {
    let mut count = 0;
    for entry in fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let sc = load_scenario(&fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(Some(sc.name.as_str()), path.file_stem().and_then(|s| s.to_str()));
            count += 1;
        }
    }
    assert_eq!(count, 8);
}

#[test]
fn exp_file_matches_the_lame_constructor() {
    let sc = load_scenario(&read("example_exp.json")).unwrap();
    let f = |s: &str| ScalarField::parse(s).unwrap();
    let lame = ElasticityCoefficients::lame(&f("exp(x)"), &f("exp(y)"));
    let file = &sc.coefficients;
    for &(x, y) in &[(0.0, 0.0), (0.21, -0.17), (-0.3, 0.3), (0.05, 0.29)] {
        assert_eq!(file.values_at(x, y).unwrap(), lame.values_at(x, y).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let (a, b) = (file.c[i][j].eval(x, y).unwrap(), lame.c[i][j].eval(x, y).unwrap());
                assert!((a - b).abs() < 1e-14);
                for k in 0..2 {
                    let (a, b) = (file.b[i][j][k].eval(x, y).unwrap(), lame.b[i][j][k].eval(x, y).unwrap());
                    assert!((a - b).abs() < 1e-14, "b{}{}{} at ({x}, {y}): {a} vs {b}", i + 1, j + 1, k + 1);
                }
            }
        }
    }
}

fn key_of(text: &str) -> String {
    match load_scenario(text) {
        Err(Error::Input { key, .. }) => key,
        Err(Error::Parse { key, .. }) => key,
        other => panic!("expected an input error, got {other:?}"),
    }
}

#[test]
fn invalid_files_name_the_offending_key() {
    let base: serde_json::Value = serde_json::from_str(&read("lame_constant.json")).unwrap();
    let with = |edit: &dyn Fn(&mut serde_json::Value)| {
        let mut v = base.clone();
        edit(&mut v);
        v.to_string()
    };
    assert_eq!(key_of(&with(&|v| v["bogus"] = 1.into())), "bogus");
    assert_eq!(key_of(&with(&|v| v["grid"]["n"] = 5.into())), "grid.n");
    assert_eq!(key_of(&with(&|v| v["grid"]["riemann_n"] = 32.into())), "grid.riemann_n");
    assert_eq!(key_of(&with(&|v| v["tensor"]["a1111"] = "3 +".into())), "tensor.a1111");
    assert_eq!(key_of(&with(&|v| v["tensor"]["a9999"] = "1".into())), "tensor.a9999");
    assert_eq!(key_of(&with(&|v| v["point"] = serde_json::json!([2.0, 0.0]))), "point");
    assert_eq!(key_of(&with(&|v| v["tasks"] = serde_json::json!(["fly"]))), "tasks");
    assert_eq!(key_of(&with(&|v| v["schema_version"] = 2.into())), "schema_version");
    assert_eq!(key_of(&with(&|v| v["point_data"] = serde_json::json!([0.0, 1.0]))), "point_data");
}
