use std::io::Write;
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/").to_string() + name
}

fn run(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_opacity"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = serde_json::from_str(&stdout)
        .unwrap_or_else(|e| panic!("stdout is not one JSON document ({e}): {stdout}"));
    (out.status.code().unwrap(), report)
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.starts_with("wall_time"));
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

#[test]
fn verify_example_i_exits_zero_with_certificate() {
    let (code, report) = run(&[
        "verify",
        "--model",
        &fixture("example1.json"),
        "--spec",
        &fixture("gamma085.json"),
    ]);
    assert_eq!(code, 0);
    assert_eq!(report["outcome"]["status"], "certified");
    assert!(report["outcome"]["certificate"].is_object());
}

#[test]
fn unknown_outcome_exits_one() {
    let (code, report) = run(&[
        "verify",
        "--model",
        &fixture("example2.json"),
        "--spec",
        &fixture("gamma042.json"),
        "--depth",
        "0",
    ]);
    assert_eq!(code, 1);
    assert_eq!(report["outcome"]["status"], "unknown");
}

#[test]
fn falsify_below_the_reachable_mass_finds_a_witness() {
    let args = |spec: &str| {
        run(&[
            "falsify",
            "--model",
            &fixture("example1.json"),
            "--spec",
            &fixture(spec),
            "--depth",
            "12",
        ])
    };
    let (code, report) = args("gamma030.json");
    assert_eq!(code, 2);
    let f = &report["falsifier"];
    let bound = f["lower_bound"].as_f64().unwrap();
    assert!(bound > 0.30);
    assert!(f["witness"]["attained_mass"].as_f64().unwrap() > 0.30);

    let (code, report) = args("gamma085.json");
    assert_eq!(code, 0);
    assert!(report["falsifier"]["witness"].is_null());
}

#[test]
fn input_errors_exit_three_and_still_report() {
    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "{{ \"states\": [").unwrap();
    let bad_path = bad.path().to_str().unwrap().to_string();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "verify".into(),
            "--model".into(),
            "/nonexistent.json".into(),
            "--spec".into(),
            fixture("gamma085.json"),
        ],
        vec![
            "verify".into(),
            "--model".into(),
            bad_path,
            "--spec".into(),
            fixture("gamma085.json"),
        ],
        vec!["bogus".into()],
        vec![
            "verify".into(),
            "--model".into(),
            fixture("example2.json"),
            "--spec".into(),
            fixture("gamma095.json"),
            "--degree".into(),
            "3".into(),
        ],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (code, report) = run(&refs);
        assert_eq!(code, 3, "{args:?}");
        assert_eq!(report["status"], "input_error", "{args:?}");
        assert!(report["error"].is_string());
    }
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let args = [
        "verify",
        "--model",
        &fixture("example1.json"),
        "--spec",
        &fixture("gamma085.json"),
        "--samples",
        "2000",
        "--seed",
        "5",
    ];
    let (_, mut a) = run(&args);
    let (_, mut b) = run(&args);
    strip_wall_time(&mut a);
    strip_wall_time(&mut b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn simulate_follows_the_column_stochastic_update() {
    let (code, report) = run(&[
        "simulate",
        "--model",
        &fixture("example1.json"),
        "--labels",
        r#"["s1","s1"]"#,
        "--b0",
        "[1,0,0]",
    ]);
    assert_eq!(code, 0);
    let beliefs = report["trajectory"]["beliefs"].as_array().unwrap();
    assert_eq!(beliefs.len(), 3);
    // First column of the s1 matrix, then that matrix applied once more.
    let h = [[0.15, 0.2, 0.3], [0.45, 0.2, 0.2], [0.4, 0.6, 0.5]];
    let mut b = [1.0, 0.0, 0.0];
    for row in beliefs {
        let got: Vec<f64> = row
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        for (x, y) in got.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12, "{got:?} vs {b:?}");
        }
        b = [0, 1, 2].map(|i| (0..3).map(|j| h[i][j] * b[j]).sum());
    }
}
