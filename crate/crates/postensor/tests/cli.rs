use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_postensor"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_record(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr holds a JSON record")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn benchmark_entry(x: &[usize]) -> f64 {
    let a = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
    a[x[0] - 1][x[1] - 1] * x[2] as f64
}

fn all_indices(p: usize, r: usize) -> Vec<Vec<usize>> {
    (0..r.pow(p as u32))
        .map(|mut o| {
            let mut x = vec![0; p];
            for i in (0..p).rev() {
                x[i] = o % r + 1;
                o /= r;
            }
            x
        })
        .collect()
}

fn write_exhaustive_csv(path: &Path) {
    let mut s = String::from("x1,x2,x3,x4,x5,y\n");
    for x in all_indices(5, 3) {
        let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        s += &format!("{},{}\n", cells.join(","), benchmark_entry(&x));
    }
    fs::write(path, s).unwrap();
}

fn write_truth(path: &Path) {
    let entries: Vec<f64> = all_indices(5, 3).iter().map(|x| benchmark_entry(x)).collect();
    let v = serde_json::json!({ "dims": [3, 3, 3, 3, 3], "entries": entries });
    fs::write(path, v.to_string()).unwrap();
}

#[test]
fn complete_recovers_exhaustive_noiseless_partition() {
    let d = TempDir::new().unwrap();
    write_exhaustive_csv(&d.path().join("obs.csv"));
    write_truth(&d.path().join("truth.json"));
    ok(
        d.path(),
        &["complete", "--data", "obs.csv", "--truth", "truth.json", "--out", "fit"],
    );
    let m = json(d.path().join("fit/metrics.json"));
    assert!(m["prediction_error"].as_f64().unwrap() < 1e-4, "{}", m);
    assert_eq!(m["partition"], serde_json::json!([[1, 2], [3], [4], [5]]));
    assert_eq!(m["validation_risk"].as_array().unwrap().len(), 6);
    let model = json(d.path().join("fit/model.json"));
    for key in ["dims", "facets", "factors", "M"] {
        assert!(model.get(key).is_some(), "model lacks {}", key);
    }
}

#[test]
fn predict_reproduces_fitted_values() {
    let d = TempDir::new().unwrap();
    write_exhaustive_csv(&d.path().join("obs.csv"));
    ok(
        d.path(),
        &["complete", "--data", "obs.csv", "--threshold", "0.01", "--out", "fit"],
    );
    ok(
        d.path(),
        &[
            "predict",
            "--model",
            "fit/model.json",
            "--data",
            "obs.csv",
            "--out",
            "pred",
        ],
    );
    let text = fs::read_to_string(d.path().join("pred/predictions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,x4,x5,prediction");

    // Fitted values evaluated directly from the saved factors.
    let model = json(d.path().join("fit/model.json"));
    let factors: Vec<Vec<f64>> = serde_json::from_value(model["factors"].clone()).unwrap();
    let mut count = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let x: Vec<usize> = cells[..5].iter().map(|c| c.parse().unwrap()).collect();
        let fitted =
            factors[0][(x[0] - 1) * 3 + x[1] - 1] * factors[1][x[2] - 1] * factors[2][x[3] - 1] * factors[3][x[4] - 1];
        let pred: f64 = cells[5].parse().unwrap();
        assert!((pred - fitted).abs() <= 1e-12 * fitted, "{} vs {}", pred, fitted);
        assert!((pred - benchmark_entry(&x)).abs() < 1e-6);
        count += 1;
    }
    assert_eq!(count, 243);
}

#[test]
fn decompose_then_predict_exact_entry() {
    let d = TempDir::new().unwrap();
    write_truth(&d.path().join("truth.json"));
    ok(
        d.path(),
        &[
            "decompose",
            "--truth",
            "truth.json",
            "--facets",
            "1,2;3;4;5",
            "--out",
            "exact",
        ],
    );
    fs::write(d.path().join("q.csv"), "x1,x2,x3,x4,x5\n1,1,3,1,1\n").unwrap();
    ok(
        d.path(),
        &[
            "predict",
            "--model",
            "exact/model.json",
            "--data",
            "q.csv",
            "--out",
            "p",
        ],
    );
    let text = fs::read_to_string(d.path().join("p/predictions.csv")).unwrap();
    let v: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((v - 6.0).abs() < 1e-12, "{}", v);
}

#[test]
fn predict_unit_model_and_floor() {
    let d = TempDir::new().unwrap();
    let model =
        serde_json::json!({"dims": [2, 3], "facets": [[1], [2]], "factors": [[1.0, 1.0], [1.0, 1.0, 1.0]], "M": 2.0});
    fs::write(d.path().join("one.json"), model.to_string()).unwrap();
    fs::write(d.path().join("q.csv"), "x1,x2\n1,1\n2,3\n1,2\n").unwrap();
    ok(
        d.path(),
        &["predict", "--model", "one.json", "--data", "q.csv", "--out", "p"],
    );
    let text = fs::read_to_string(d.path().join("p/predictions.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")), "{}", text);
    ok(
        d.path(),
        &[
            "predict", "--model", "one.json", "--data", "q.csv", "--floor", "1.5", "--out", "f",
        ],
    );
    let text = fs::read_to_string(d.path().join("f/predictions.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1.5")), "{}", text);
}

#[test]
fn predict_rejects_unknown_facet_layout() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("q.csv"), "x1,x2\n1,1\n").unwrap();
    let bad = [
        serde_json::json!({"dims": [2, 2], "facets": [[1], [3]], "factors": [[1.0, 1.0], [1.0, 1.0]], "M": 2.0}),
        serde_json::json!({"dims": [2, 2], "facets": [[1], [2]], "factors": [[1.0, 1.0]], "M": 2.0}),
        serde_json::json!({"dims": [2, 2], "layout": "tucker"}),
    ];
    for (i, model) in bad.iter().enumerate() {
        let name = format!("bad{}.json", i);
        fs::write(d.path().join(&name), model.to_string()).unwrap();
        let rec = error_record(&run(
            d.path(),
            &["predict", "--model", &name, "--data", "q.csv", "--out", "p"],
        ));
        assert_eq!(rec["error"]["kind"], "format", "{}", rec);
    }
}

#[test]
fn missing_y_column_is_named() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("obs.csv"), "x1,x2\n1,1\n2,2\n").unwrap();
    let out = run(d.path(), &["complete", "--data", "obs.csv", "--threshold", "0.1"]);
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "format");
    assert!(rec["error"]["message"].as_str().unwrap().contains("'y'"), "{}", rec);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_rows_report_line_numbers() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("a.csv"), "x1,x2,y\n1,1,2.0\n1,x,2.0\n").unwrap();
    fs::write(d.path().join("b.csv"), "x1,x2,y\n1,1,2.0\n2,2,1.0\n3,1,1.0\n").unwrap();
    fs::write(d.path().join("c.csv"), "x1,x2,y\n1,1,2.0\n2,2\n").unwrap();
    let rec = error_record(&run(d.path(), &["complete", "--data", "a.csv", "--threshold", "0.1"]));
    assert_eq!(rec["error"]["line"], 3, "{}", rec);
    let rec = error_record(&run(
        d.path(),
        &["complete", "--data", "b.csv", "--dims", "2,2", "--threshold", "0.1"],
    ));
    assert_eq!(rec["error"]["line"], 4, "{}", rec);
    assert!(rec["error"]["message"].as_str().unwrap().contains("exceeds dimension"));
    let rec = error_record(&run(d.path(), &["complete", "--data", "c.csv", "--threshold", "0.1"]));
    assert_eq!(rec["error"]["line"], 3, "{}", rec);
}

#[test]
fn categorical_levels_match_integer_coding() {
    let d = TempDir::new().unwrap();
    let colors = ["red", "green"];
    let sizes = ["s", "m", "l"];
    let (mut ints, mut cats) = (String::from("x1,x2,y\n"), String::from("x1,x2,y\n"));
    for rep in 0..3 {
        for i in 1..=2 {
            for j in 1..=3 {
                let y = (i * j) as f64 * (1.0 + 0.1 * rep as f64);
                ints += &format!("{},{},{}\n", i, j, y);
                cats += &format!("{},{},{}\n", colors[i - 1], sizes[j - 1], y);
            }
        }
    }
    fs::write(d.path().join("ints.csv"), ints).unwrap();
    fs::write(d.path().join("cats.csv"), cats).unwrap();
    fs::write(
        d.path().join("levels.json"),
        serde_json::json!({"x1": colors, "x2": sizes}).to_string(),
    )
    .unwrap();
    ok(
        d.path(),
        &["complete", "--data", "ints.csv", "--cv-grid", "0.01,0.1", "--out", "i"],
    );
    ok(
        d.path(),
        &[
            "complete",
            "--data",
            "cats.csv",
            "--levels",
            "levels.json",
            "--cv-grid",
            "0.01,0.1",
            "--out",
            "c",
        ],
    );
    for f in ["model.json", "metrics.json"] {
        assert_eq!(
            fs::read(d.path().join("i").join(f)).unwrap(),
            fs::read(d.path().join("c").join(f)).unwrap()
        );
    }
    fs::write(d.path().join("q.csv"), "x1,x2\ngreen,l\n").unwrap();
    ok(
        d.path(),
        &[
            "predict",
            "--model",
            "c/model.json",
            "--data",
            "q.csv",
            "--levels",
            "levels.json",
            "--out",
            "p",
        ],
    );
    let text = fs::read_to_string(d.path().join("p/predictions.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("green,l,"));

    fs::write(d.path().join("bad.csv"), "x1,x2,y\nred,s,1\nblue,s,1\n").unwrap();
    let rec = error_record(&run(
        d.path(),
        &["complete", "--data", "bad.csv", "--levels", "levels.json"],
    ));
    assert_eq!(rec["error"]["line"], 3);
}

#[test]
fn benchmark_noiseless_exhaustive_sample_size() {
    let d = TempDir::new().unwrap();
    ok(
        d.path(),
        &[
            "benchmark",
            "--trials",
            "1",
            "--noise",
            "none",
            "--n",
            "243",
            "--out",
            "b",
        ],
    );
    let text = fs::read_to_string(d.path().join("b/report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,243");
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let (m, v) = l.split_once(',').unwrap();
            (m.to_string(), v.parse().unwrap())
        })
        .collect();
    let names: Vec<&str> = rows.iter().map(|(m, _)| m.as_str()).collect();
    assert_eq!(names, ["partition-log-linear", "sparse-partition-log-linear", "als"]);
    for (m, v) in &rows {
        let tol = if m == "als" { 1e-2 } else { 1e-3 };
        assert!(*v < tol, "{} {}", m, v);
    }
    let plot = fs::read_to_string(d.path().join("b/plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 4);
}

#[test]
fn config_file_mirrors_flags() {
    let d = TempDir::new().unwrap();
    fs::write(
        d.path().join("run.toml"),
        "n = [150]\nnoise = \"1,1\"\nseed = 9\nout = \"from-config\"\n",
    )
    .unwrap();
    ok(d.path(), &["synth", "--config", "run.toml"]);
    ok(
        d.path(),
        &[
            "synth",
            "--n",
            "150",
            "--noise",
            "1,1",
            "--seed",
            "9",
            "--out",
            "from-flags",
        ],
    );
    assert_eq!(
        fs::read(d.path().join("from-config/observations.csv")).unwrap(),
        fs::read(d.path().join("from-flags/observations.csv")).unwrap()
    );
    ok(
        d.path(),
        &["synth", "--config", "run.toml", "--seed", "10", "--out", "override"],
    );
    assert_ne!(
        fs::read(d.path().join("from-config/observations.csv")).unwrap(),
        fs::read(d.path().join("override/observations.csv")).unwrap()
    );
    fs::write(d.path().join("bad.toml"), "seed = 1\nbogus = 2\n").unwrap();
    let rec = error_record(&run(d.path(), &["synth", "--config", "bad.toml"]));
    assert_eq!(rec["error"]["kind"], "format");
    assert_eq!(rec["error"]["line"], 2);
}

#[test]
fn conflicting_flags_fail_before_compute() {
    let d = TempDir::new().unwrap();
    let out = run(
        d.path(),
        &[
            "complete",
            "--data",
            "missing.csv",
            "--threshold",
            "0.1",
            "--cv-grid",
            "0.1",
        ],
    );
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "usage");
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&run(d.path(), &["synth", "--noise", "2,2"]));
    assert_eq!(rec["error"]["kind"], "usage");
    let rec = error_record(&run(d.path(), &["complete", "--data", "missing.csv"]));
    assert_eq!(rec["error"]["kind"], "io");
}

#[test]
fn approximate_rank_one_and_cp() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("obs.csv"), "x1,x2,y\n1,1,1\n1,2,3\n2,1,2\n2,2,6\n").unwrap();
    ok(d.path(), &["approximate", "--data", "obs.csv", "--out", "a"]);
    ok(
        d.path(),
        &["approximate", "--data", "obs.csv", "--rank", "1", "--out", "cp"],
    );
    let cp = json(d.path().join("cp/model.json"));
    assert_eq!(cp["rank"], 1);
    fs::write(d.path().join("q.csv"), "x1,x2\n2,2\n").unwrap();
    for model in ["a/model.json", "cp/model.json"] {
        ok(
            d.path(),
            &["predict", "--model", model, "--data", "q.csv", "--out", "p"],
        );
        let text = fs::read_to_string(d.path().join("p/predictions.csv")).unwrap();
        let v: f64 = text
            .lines()
            .nth(1)
            .unwrap()
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!((v - 6.0).abs() < 1e-5, "{} {}", model, v);
    }
}
