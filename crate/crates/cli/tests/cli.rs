use std::io::Write;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::NamedTempFile;

fn model_file(json: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

fn mmbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbm")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = mmbm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn records(csv_text: &str) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let header = r.headers().unwrap().clone();
    (header, r.records().map(Result::unwrap).collect())
}

fn field(header: &csv::StringRecord, row: &csv::StringRecord, name: &str) -> f64 {
    let k = header.iter().position(|h| h == name).unwrap();
    row[k].parse().unwrap()
}

const MIXED: &str = r#"{
  "states": [{"label": "on, high", "mu": 1.0, "sigma2": 0.5},
             {"label": "off", "mu": -2.0, "sigma2": 0.0},
             {"label": "mid", "mu": 0.3, "sigma2": 1.0}],
  "Q": [[-1, 0.5, 0.5], [2, -3, 1], [1, 1, -2]],
  "B": 1.5, "x0": 0.4
}"#;

#[test]
fn scalar_stationary_law_is_truncated_exponential() {
    let (mu, s2, b) = (-0.7, 1.3, 2.0);
    let f = model_file(&format!(r#"{{"states":[{{"label":"s","mu":{mu},"sigma2":{s2}}}],"Q":[[0]],"B":{b}}}"#));
    let text = run_ok(&["stationary", f.path().to_str().unwrap(), "--grid", "21"]);
    let (h, rows) = records(&text);
    assert_eq!(rows.len(), 21);
    let theta = 2.0 * mu / s2;
    for row in &rows {
        let x = field(&h, row, "x");
        let cdf = ((theta * x).exp() - 1.0) / ((theta * b).exp() - 1.0);
        assert!((field(&h, row, "cdf") - cdf).abs() < 1e-10, "x = {x}");
        assert!((field(&h, row, "survival") - (1.0 - cdf)).abs() < 1e-10);
        assert_eq!(field(&h, row, "mass0"), 0.0);
    }
}

#[test]
fn unit_strip_with_unit_negative_drift() {
    let f = model_file(r#"{"states":[{"label":"s","mu":-1,"sigma2":1}],"Q":[[0]],"B":1}"#);
    let (h, rows) = records(&run_ok(&["stationary", f.path().to_str().unwrap(), "--grid", "11"]));
    let e2 = (-2.0f64).exp();
    for row in &rows {
        let x = field(&h, row, "x");
        let exact = ((-2.0 * x).exp() - e2) / (1.0 - e2);
        assert!((field(&h, row, "survival") - exact).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn default_grid_has_201_levels() {
    let f = model_file(MIXED);
    let (_, rows) = records(&run_ok(&["stationary", f.path().to_str().unwrap()]));
    assert_eq!(rows.len(), 3 * 201);
}

#[test]
fn passage_at_level_zero_is_the_phase_map() {
    let f = model_file(MIXED);
    let (h, rows) = records(&run_ok(&["passage", f.path().to_str().unwrap(), "--levels", "0"]));
    // Up-crossing columns are the phases with positive drift or diffusion.
    let cols: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert!(!cols.contains(&"off"));
    for row in &rows {
        let p = field(&h, row, "probability");
        if &row[0] != "off" {
            assert_eq!(p, if row[0] == row[1] { 1.0 } else { 0.0 });
        }
        assert!((0.0..=1.0).contains(&p));
    }
    let off: f64 = rows.iter().filter(|r| &r[0] == "off").map(|r| field(&h, r, "probability")).sum();
    assert!(off > 0.0 && off <= 1.0 + 1e-12);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn validate_passes_on_random_diffusive_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let n = 3;
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[i][j] = rng.random_range(0.2..2.0);
                }
            }
            q[i][i] = -q[i].iter().sum::<f64>();
        }
        let states: Vec<String> = (0..n)
            .map(|i| {
                let mu = rng.random_range(-2.0..2.0);
                let s2 = rng.random_range(0.2..2.0);
                format!(r#"{{"label":"s{i}","mu":{mu},"sigma2":{s2}}}"#)
            })
            .collect();
        let json = format!(r#"{{"states":[{}],"Q":{q:?},"B":1.2,"x0":0.5}}"#, states.join(","));
        let f = model_file(&json);
        let text = run_ok(&["validate", f.path().to_str().unwrap(), "--q", "0.3"]);
        let (_, rows) = records(&text);
        assert!(rows.iter().all(|r| &r[3] == "pass"), "{text}");
        run_ok(&["validate", f.path().to_str().unwrap()]);
    }
}

#[test]
fn outputs_round_trip_byte_for_byte() {
    let f = model_file(MIXED);
    let path = f.path().to_str().unwrap();
    for args in [
        vec!["passage", path, "--levels", "0,0.25,1", "--q", "0.2"],
        vec!["stationary", path, "--grid", "7"],
        vec!["exp-epoch", path, "--q", "0.5", "--start", "top"],
        vec!["localtime", path, "--q", "0.5", "--alpha-grid", "0,0.2"],
        vec!["overflow", path],
        vec!["simulate", path, "--estimator", "overflow", "--horizon", "20"],
    ] {
        let text = run_ok(&args);
        let (header, rows) = records(&text);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        w.write_record(&header).unwrap();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c.parse::<f64>() {
                    Ok(v) if c.contains('e') => format!("{v:.16e}"),
                    _ => c.to_string(),
                })
                .collect();
            w.write_record(&cells).unwrap();
        }
        let again = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(again, text, "{args:?}");
    }
}

#[test]
fn simulation_is_reproducible_for_a_seed() {
    let f = model_file(MIXED);
    let path = f.path().to_str().unwrap();
    let args = ["simulate", path, "--estimator", "passage", "--reps", "300", "--q", "0.5", "--x", "0.3", "--seed", "4"];
    assert_eq!(run_ok(&args), run_ok(&args));
}

#[test]
fn exit_codes() {
    let good = model_file(MIXED);
    let path = good.path().to_str().unwrap();
    assert_eq!(mmbm(&["stationary", "/nonexistent/model.json"]).status.code(), Some(1));
    assert_eq!(mmbm(&["frobnicate", path]).status.code(), Some(1));
    assert_eq!(mmbm(&["--help"]).status.code(), Some(0));
    assert_eq!(mmbm(&["passage", path, "--q", "-1"]).status.code(), Some(1));
    assert_eq!(mmbm(&["exp-epoch", path, "--q", "0"]).status.code(), Some(1));

    let bad = model_file(&MIXED.replace("[2, -3, 1]", "[2, -4, 1]"));
    let out = mmbm(&["overflow", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty() && out.stdout.is_empty());

    let unknown = model_file(&MIXED.replace("\"x0\": 0.4", "\"x0\": 0.4, \"extra\": 1"));
    assert_eq!(mmbm(&["overflow", unknown.path().to_str().unwrap()]).status.code(), Some(1));

    // Near-fluid phases with opposite drifts over a huge strip: the exit
    // system cannot be solved to tolerance.
    let stiff = model_file(
        r#"{"states":[{"label":"a","mu":5,"sigma2":1e-6},{"label":"b","mu":-5,"sigma2":1e-6}],
            "Q":[[-1,1],[1,-1]],"B":1e9}"#,
    );
    let stiff = stiff.path().to_str().unwrap();
    assert_eq!(mmbm(&["stationary", stiff, "--grid", "2"]).status.code(), Some(2));
    let report = mmbm(&["validate", stiff]);
    assert_eq!(report.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&report.stdout).contains("FAIL"));
}
