use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use msrds::{parse_config, Cell, ResultTable};

fn msrds(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_msrds")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

/// Runs `cmd` on `json` and parses the CSV it wrote.
fn run_table(cmd: &str, json: &str) -> (ResultTable, PathBuf, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", json);
    let out = dir.path().join("out");
    let (code, err) = msrds(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join(format!("{cmd}.csv"))).unwrap();
    (ResultTable::parse_csv(cmd, &text).unwrap(), out, dir)
}

fn nums(t: &ResultTable, col: &str) -> Vec<f64> {
    t.column(col).iter().map(|c| c.as_f64().unwrap()).collect()
}

fn texts(t: &ResultTable, col: &str) -> Vec<String> {
    t.column(col)
        .iter()
        .map(|c| match c {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
        })
        .collect()
}

fn eigen_rows(t: &ResultTable) -> Vec<(f64, f64)> {
    let methods = texts(t, "method");
    let (lo, hi) = (nums(t, "lower"), nums(t, "upper"));
    (0..t.rows.len()).filter(|&k| methods[k] == "eigen-lift").map(|k| (lo[k], hi[k])).collect()
}

#[test]
fn spectrum_of_pitchfork_linearisation() {
    let (t, _, _d) = run_table("spectrum", r#"{"model":{"kind":"pitchfork","alpha":0,"beta":1}}"#);
    let rows = eigen_rows(&t);
    assert_eq!(rows.len(), 2);
    assert!((rows[0].0 - 0.5).abs() < 1e-9 && (rows[0].1 - 0.5).abs() < 1e-9);
    assert!((rows[1].0 - 1.0).abs() < 1e-9 && (rows[1].1 - 1.0).abs() < 1e-9);
    assert!(texts(&t, "method").iter().any(|m| m == "analytic"));
    assert!(texts(&t, "method").iter().any(|m| m == "finite-time"));

    let (t, _, _d) = run_table("spectrum", r#"{"model":{"kind":"pitchfork","alpha":0,"beta":0}}"#);
    let rows = eigen_rows(&t);
    assert_eq!(rows.len(), 1);
    assert!((rows[0].0 - 0.5).abs() < 1e-9);
}

#[test]
fn spectrum_of_zero_system() {
    let z = "[[0,0],[0,0]]";
    let json = format!(r#"{{"model":{{"kind":"linear","d":2,"A":{z},"B":{z},"C":{z},"D":{z}}}}}"#);
    let (t, _, _d) = run_table("spectrum", &json);
    assert_eq!(eigen_rows(&t), vec![(0.0, 0.0)]);
    assert_eq!(nums(&t, "gamma_bound"), vec![0.0]);
}

#[test]
fn simulate_pure_variance_growth() {
    let json = r#"{"model":{"kind":"linear","d":1,"A":[[0]],"B":[[0]],"C":[[1]],"D":[[0]]},
        "seed":3,"simulate":{"t":1,"dt":0.001,"n":100000,"record_every":0,"init":{"mean":[0],"secmom":[[1]]}}}"#;
    let (t, _, _d) = run_table("simulate", json);
    assert_eq!(t.rows.len(), 2);
    let s = *nums(&t, "secmom_11").last().unwrap();
    let se = *nums(&t, "se_secmom_11").last().unwrap();
    assert!((s - std::f64::consts::E).abs() <= 3.0 * se, "{s} ± {se}");
}

#[test]
fn simulate_zero_model_is_constant() {
    let json = r#"{"model":{"kind":"linear","d":2,"A":[[0,0],[0,0]],"B":[[0,0],[0,0]],"C":[[0,0],[0,0]],"D":[[0,0],[0,0]]},
        "simulate":{"t":0.1,"dt":0.01,"n":200,"record_every":2,
        "init":{"mean":[1,-2],"secmom":[[2,-1],[-1,5]]}}}"#;
    let (t, _, _d) = run_table("simulate", json);
    assert_eq!(t.rows.len(), 6);
    for col in ["mean_1", "mean_2", "secmom_11", "secmom_12", "secmom_22", "ms_norm"] {
        let v = nums(&t, col);
        assert!(v.iter().all(|x| *x == v[0]), "{col}: {v:?}");
    }
}

#[test]
fn simulate_pitchfork_decay() {
    let json = r#"{"model":{"kind":"pitchfork","alpha":-1.5},
        "simulate":{"t":5,"dt":0.002,"n":20000,"record_every":500,"init":{"mean":[1],"secmom":[[1]]}}}"#;
    let (t, _, _d) = run_table("simulate", json);
    let ode = *nums(&t, "ode_ms_norm").last().unwrap();
    // reduced-system value at t = 5, independently integrated
    assert!((ode - 0.058_140_879).abs() < 1e-6, "{ode}");
    for col in ["z_mean_1", "z_secmom_11"] {
        let z = *nums(&t, col).last().unwrap();
        assert!(z.abs() <= 4.0, "{col} = {z}");
    }
}

#[test]
fn pullback_and_bifurcate_examples() {
    let json = r#"{"model":{"kind":"pitchfork","alpha":-0.75},"pullback":{"start_times":[-10,-20,-40]}}"#;
    let (t, _, _d) = run_table("pullback", json);
    let target = 0.125f64.sqrt();
    let gaps: Vec<f64> = nums(&t, "limit_x").iter().map(|x| (x - target).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
    assert!(gaps[2] < 1e-6);
    assert_eq!(t.provenance_value("converged_to"), Some("positive-branch"));

    let json = r#"{"model":{"kind":"pitchfork","alpha":0},"bifurcate":{"alphas":[-1.5,-1.25,-0.75]},
        "output":{"formats":["csv","svg"]}}"#;
    let (t, out, _d) = run_table("bifurcate", json);
    let class = texts(&t, "classification");
    assert_eq!(class[..2], ["trivial", "trivial"]);
    assert!(nums(&t, "ms_norm")[..2].iter().all(|m| *m < 1e-3));
    assert_eq!(class[2], "positive-branch");
    assert!((nums(&t, "limit_x")[2] - 0.353_553_4).abs() < 1e-6);
    assert!((nums(&t, "limit_y")[2] - 0.25).abs() < 1e-6);
    let svg = fs::read_to_string(out.join("bifurcate.svg")).unwrap();
    let branches: BTreeSet<&String> = class.iter().collect();
    assert_eq!(svg.matches("<polyline").count(), branches.len());
    assert!(svg.contains(&t.provenance_value("config_sha256").unwrap().to_string()));
}

#[test]
fn provenance_hash_round_trips() {
    let json = r#"{"model":{"kind":"pitchfork","alpha":-0.75},"bifurcate":{"alphas":[-0.75]}}"#;
    let (t, out, _d) = run_table("bifurcate", json);
    let echoed = fs::read_to_string(out.join("bifurcate.config.json")).unwrap();
    let cfg = parse_config(&echoed).unwrap();
    assert_eq!(t.provenance_value("config_sha256"), Some(cfg.hash().as_str()));
    assert_eq!(cfg.hash(), parse_config(json).unwrap().hash());
    let changed = json.replace("[-0.75]}", "[-0.7]}");
    assert_ne!(parse_config(&changed).unwrap().hash(), cfg.hash());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"model":{"kind":"pitchfork","alpha":-0.75},"seed":1}"#);
    let out = dir.path().join("o");
    let args = ["pullback", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9", "--quiet"];
    assert_eq!(msrds(&args).0, 0);
    let text = fs::read_to_string(out.join("pullback.csv")).unwrap();
    assert!(text.contains("# seed: 9\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let run = |name: &str, json: &str, cmd: &str| {
        let cfg = write_config(dir.path(), name, json);
        msrds(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
    };

    let (code, err) = run("unknown.json", r#"{"model":{"kind":"pitchfork","alpha":0},"gamma":1}"#, "pullback");
    assert_eq!(code, 2);
    assert!(err.contains("gamma"), "{err}");
    let (code, err) = run("syntax.json", "{\"model\": \n ]", "pullback");
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(run("linear.json", r#"{"model":{"kind":"linear","d":1,"A":[[0]],"B":[[0]],"C":[[0]],"D":[[0]]}}"#, "bifurcate").0, 2);
    assert_eq!(msrds(&["spectrum", "--config", "/nonexistent/c.json"]).0, 2);
    assert_eq!(msrds(&["spectrum"]).0, 2);
    assert_eq!(msrds(&["--help"]).0, 0);

    // the particles overflow long before t = 1
    let (code, err) = run(
        "blowup.json",
        r#"{"model":{"kind":"linear","d":1,"A":[[3000]],"B":[[0]],"C":[[0]],"D":[[0]]},
            "simulate":{"dt":0.01,"n":100,"init":{"mean":[1],"secmom":[[1]]}}}"#,
        "simulate",
    );
    assert_eq!(code, 3, "{err}");

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = write_config(dir.path(), "ok.json", r#"{"model":{"kind":"pitchfork","alpha":-0.75}}"#);
    let (code, _) = msrds(&["pullback", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code, 4);
}
