use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn gpbm(sub: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpbm"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("GPBM_OUT")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn scatter_hard_core_has_unit_length() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[pair.core]
kind = "hard_core"
radius = 1.0

[scatter]
dims = [3]
"#,
    );
    let out = tmp.path().join("out");
    let run = gpbm("scatter", &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let (header, rows) = read_csv(&out.join("scatter.csv"));
    assert_eq!(header, ["potential_id", "d", "a", "a_born", "tail_estimate"]);
    assert_eq!(rows.len(), 1);
    let a: f64 = rows[0][column(&header, "a")].parse().unwrap();
    assert!((a - 1.0).abs() < 1e-8, "a = {a}");
    assert_eq!(rows[0][column(&header, "a_born")], "inf");
}

#[test]
fn gp_free_harmonic_ground_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[trap]
kind = "harmonic"

[gp]
dim = 3
alpha = 0.0
"#,
    );
    let out = tmp.path().join("out");
    let run = gpbm("gp", &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let (header, rows) = read_csv(&out.join("gp.csv"));
    for name in ["alpha", "grid", "chi", "lambda", "residual", "iterations"] {
        column(&header, name);
    }
    let chi: f64 = rows[0][column(&header, "chi")].parse().unwrap();
    assert!((chi - 3.0).abs() < 1e-2, "chi = {chi}");
    assert!(out.join("summary.json").exists());
}

#[test]
fn simulate_without_interaction_is_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 3

[trap]
kind = "free"

[pair.none]
kind = "zero"

[simulate]
model = "canonical"
n = 2
beta = 1.0
steps = 64
replicas = 200
pair = "none"
"#,
    );
    let out = tmp.path().join("out");
    let run = gpbm("simulate", &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let (header, rows) = read_csv(&out.join("simulate.csv"));
    assert_eq!(header, ["beta", "n", "estimate", "std_error", "effective_samples", "difference"]);
    let est: f64 = rows[0][column(&header, "estimate")].parse().unwrap();
    assert!(est.abs() < 1e-12, "estimate = {est}");
}

#[test]
fn empty_sweep_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[trap]
kind = "harmonic"

[pair.w]
kind = "square_well"
height = 1.0
radius = 1.0

[hartree]
dim = 1
n = []
pair = "w"
"#,
    );
    let run = gpbm("hartree", &cfg, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("hartree.n"));
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[gp]
dim = 3
alpah = 1.0
"#,
    );
    let run = gpbm("gp", &cfg, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("alpah"));
}

#[test]
fn mismatched_command_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "command = \"gp\"\n[scatter]\n");
    let run = gpbm("scatter", &cfg, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn repeated_runs_have_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 17

[trap]
kind = "harmonic"

[pair.g]
kind = "gaussian"
height = 0.5
width = 0.7

[simulate]
model = "hartree"
n = 2
beta = [0.5, 1.0]
steps = 32
replicas = 200
pair = "g"
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let run = gpbm("simulate", &cfg, dir);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 17);
    assert_eq!(std::fs::read(a.join("simulate.csv")).unwrap(), std::fs::read(b.join("simulate.csv")).unwrap());
    let (_, rows) = read_csv(&a.join("simulate.csv"));
    assert_eq!(rows.len(), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 1

[trap]
kind = "harmonic"

[simulate]
model = "canonical"
n = 1
beta = 1.0
steps = 32
replicas = 100
"#,
    );
    let out = tmp.path().join("out");
    let run = Command::new(env!("CARGO_BIN_EXE_gpbm"))
        .args(["simulate", "--seed", "42", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(manifest(&out)["seed"], 42);
}

#[test]
fn ldp_dirichlet_energy_of_gaussian() {
    let tmp = TempDir::new().unwrap();
    let n = 401;
    let h = 20.0 / (n + 1) as f64;
    let mut table = String::from("x,density\n");
    for k in 0..n {
        let x = -10.0 + (k + 1) as f64 * h;
        table += &format!("{x},{}\n", (-x * x).exp() / std::f64::consts::PI.sqrt());
    }
    std::fs::write(tmp.path().join("rho.csv"), table).unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[ldp]
rate = "donsker_varadhan"
density = "rho.csv"
"#,
    );
    let out = tmp.path().join("out");
    let run = gpbm("ldp", &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let (header, rows) = read_csv(&out.join("ldp.csv"));
    let value: f64 = rows[0][column(&header, "value")].parse().unwrap();
    assert!((value - 0.5).abs() < 1e-2, "value = {value}");
}
