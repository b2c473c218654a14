use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use uavrisk::coverage::OccupancyMap;
use uavrisk::flight::{ContextFeatures, FeatureFrame, ProcessedFlight, TrajectoryPlan, Waypoint};
use uavrisk::power::AnalyticalCoefficients;
use uavrisk::risk::RiskProfile;
use uavrisk::wind::WindGrid;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uavrisk"));
    c.env_remove("UAVRISK_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn wp(x: f64, y: f64, z: f64) -> Waypoint {
    Waypoint {
        position: [x, y, z],
        yaw: 0.0,
        target_speed: 5.0,
    }
}

/// Mission directory with a rectangle plan, eight uniform wind grids, the
/// baseline coefficients and a 100 m empty map.
fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = TrajectoryPlan::new(
        "rectangle",
        vec![wp(0.0, 0.0, 20.0), wp(60.0, 0.0, 20.0), wp(60.0, 40.0, 20.0), wp(0.0, 40.0, 20.0), wp(0.0, 0.0, 20.0)],
    )
    .unwrap();
    std::fs::write(d.join("trajectory.csv"), plan.to_csv_string()).unwrap();
    for k in 0..8 {
        let ang = k as f64 * 45.0 - 180.0;
        let a = ang.to_radians();
        let g = WindGrid::uniform([-500.0, -500.0, 0.0], 500.0, [3, 3, 2], [a.cos(), a.sin(), 0.0], ang, 1.0).unwrap();
        std::fs::write(d.join(format!("wind_{k}.csv")), g.to_csv_string()).unwrap();
    }
    let coeffs = AnalyticalCoefficients::new([280.0, -6.0, 1.2, 25.0, 4.0, 30.0, -40.0]).unwrap();
    std::fs::write(d.join("baseline.json"), coeffs.to_json_string()).unwrap();
    let map = OccupancyMap::empty([-50.0, -50.0], 2.0, [50, 50]).unwrap();
    map.save(&d.join("map.pgm"), &d.join("map.json")).unwrap();
    dir
}

fn config(model: &str, inlet: &str, noise: f64, runs: usize) -> String {
    let grids: Vec<String> = (0..8).map(|k| format!("\"wind_{k}.csv\"")).collect();
    format!(
        r#"[files]
trajectory = "trajectory.csv"
wind_grids = [{}]
power_model = "baseline.json"
map = "map.pgm"

[model]
{model}

[inlet]
{inlet}

[risk]
gamma = 64000.0
lambda_floor = 92340.0
battery_capacity = 369360.0
nu = 0.95

[mc]
runs = {runs}
master_seed = 7

[noise]
accel_std = [{noise}, {noise}, {noise}]

[coverage]
base = [0.0, 0.0]
radius = 40.0
goals = 6
raster_cells = 9
"#,
        grids.join(", ")
    )
}

const CASE1_INLET: &str = "mean_angle_deg = -2.53\nmean_speed = 3.14\nstd_angle_deg = 28.47\nstd_speed = 1.55";
const CALM_INLET: &str = "mean_angle_deg = 0.0\nmean_speed = 0.0\nstd_angle_deg = 0.0\nstd_speed = 0.0";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("mission.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn assess_case1_report() {
    let dir = fixture_dir();
    let cfg = write_config(dir.path(), &config("kind = \"analytical\"", CASE1_INLET, 0.1, 200));
    let out = dir.path().join("out");
    let o = run(&["assess", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for key in ["mean energy", "VaR", "CVaR"] {
        assert!(stdout.contains(key), "stdout lacks {key}: {stdout}");
    }
    let r = json(&out.join("report.json"));
    let report = &r["report"];
    assert_eq!(report["nu"], 0.95);
    assert_eq!(report["profile"]["battery_capacity"], 369360.0);
    let cvar = report["cvar"].as_f64().unwrap();
    let cap = report["cap"].as_f64().unwrap();
    assert!(cvar > 0.0 && cvar < cap, "cvar {cvar} cap {cap}");
    assert!(r["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(r["master_seed"], 7);
    assert_eq!(data_rows(&out.join("energy_samples.csv")).len(), 200);
    for f in ["energy_histogram.csv", "risk_histogram.csv", "energy_samples.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("# config_hash="), "{f}");
    }
    let probs: f64 = data_rows(&out.join("energy_histogram.csv")).iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((probs - 1.0).abs() < 1e-12);
}

#[test]
fn constant_power_calm_cvar_is_closed_form() {
    let dir = fixture_dir();
    let p_w = 300.0;
    let cfg = write_config(
        dir.path(),
        &config(&format!("kind = \"constant\"\nconstant_w = {p_w}"), CALM_INLET, 0.0, 20),
    );
    let out = dir.path().join("out");
    let o = run(&["assess", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim_out = dir.path().join("sim");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(&sim_out.join("summary.json"))["flight_time_s"].as_f64().unwrap();
    let profile = RiskProfile::new(64000.0, 92340.0, 369360.0).unwrap();
    let expected = profile.risk(p_w * t);
    let cvar = json(&out.join("report.json"))["report"]["cvar"].as_f64().unwrap();
    assert!((cvar - expected).abs() <= 1e-9 * expected, "cvar {cvar} expected {expected}");
}

#[test]
fn missing_wind_file_exits_2_naming_path() {
    let dir = fixture_dir();
    std::fs::remove_file(dir.path().join("wind_3.csv")).unwrap();
    let cfg = write_config(dir.path(), &config("kind = \"analytical\"", CASE1_INLET, 0.0, 10));
    let o = run(&["assess", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("wind_3.csv"), "{err}");
    assert!(!dir.path().join("out").exists(), "nothing written on validation failure");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = fixture_dir();
    let text = config("kind = \"analytical\"", CASE1_INLET, 0.0, 10) + "\n[extra]\nfoo = 1\n";
    let cfg = write_config(dir.path(), &text);
    let o = run(&["assess", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let dir = fixture_dir();
    let cfg = write_config(dir.path(), &config("kind = \"analytical\"", CASE1_INLET, 0.2, 60));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&["--workers", "1", "assess", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let o = bin()
        .env("UAVRISK_WORKERS", "4")
        .args(["assess", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["report.json", "energy_samples.csv", "energy_histogram.csv", "risk_histogram.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("run_info.json").is_file());
}

#[test]
fn coverage_writes_profiles() {
    let dir = fixture_dir();
    let text = config("kind = \"analytical\"", CASE1_INLET, 0.0, 8)
        + "\n[[coverage.compare_profiles]]\nname = \"big\"\ngamma = 64000.0\nlambda_floor = 92340.0\nbattery_capacity = 738720.0\n";
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(&["coverage", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let small = data_rows(&out.join("coverage_primary.csv"));
    let big = data_rows(&out.join("coverage_big.csv"));
    assert_eq!(small.len(), 6);
    for (s, b) in small.iter().zip(&big) {
        assert_eq!(s[..2], b[..2]);
        assert!(s[2].parse::<f64>().unwrap() >= b[2].parse::<f64>().unwrap());
    }
    assert!(out.join("raster_primary.csv").is_file());
    assert!(json(&out.join("coverage_big.json"))["notes"][0].as_str().unwrap().contains("A*"));
}

fn synthetic_flight(k: usize) -> ProcessedFlight {
    let n = 300;
    let dt = 0.1;
    let mut frames = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    let mut yaw = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let v = 4.0 + (0.3 * t + k as f64).sin();
        frames.push(FeatureFrame {
            airspeed: v,
            airspeed_body_x: v * 0.9,
            airspeed_body_y: v * 0.1,
            vertical_speed: 0.2 * (0.5 * t).cos(),
            angle_of_attack: -0.05 + 0.02 * (1.3 * t).sin(),
        });
        power.push(280.0 + 3.0 * v * v + 10.0 * (0.7 * t).sin() + k as f64);
        yaw.push(if i < n / 3 { 0.0 } else if i < 2 * n / 3 { 2.0 } else { -2.0 });
    }
    ProcessedFlight {
        sample_period: dt,
        times: (0..n).map(|i| i as f64 * dt).collect(),
        frames,
        context: ContextFeatures::new(1.225, 0.25 * (k % 3) as f64).unwrap(),
        measured_power: power,
        yaw_series: yaw,
    }
}

fn corpus_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("file,split,route\n");
    for k in 0..6 {
        let name = format!("f{k}.csv");
        std::fs::write(dir.path().join(&name), synthetic_flight(k).to_csv_string()).unwrap();
        let (split, route) = match k {
            0..=2 => ("train", "triangular"),
            3 => ("val", "triangular"),
            4 => ("test", "triangular"),
            _ => ("test", "random"),
        };
        manifest.push_str(&format!("{name},{split},{route}\n"));
    }
    std::fs::write(dir.path().join("manifest.csv"), manifest).unwrap();
    dir
}

#[test]
fn oracle_evaluation_is_exact() {
    let corpus = corpus_dir();
    let out = corpus.path().join("eval");
    let o = run(&["eval-model", "--oracle", "--corpus", corpus.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out.join("evaluation.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[5], "3", "three yaw legs");
    }
    let s = json(&out.join("summary.json"));
    for g in ["train", "val", "test", "random"] {
        assert_eq!(s["groups"][g]["mape"], 0.0, "{g}");
    }
    assert_eq!(s["groups"]["random"]["flights"], 1);
}

#[test]
fn fit_then_evaluate_baseline() {
    let corpus = corpus_dir();
    let coeffs = corpus.path().join("fit/coeffs.json");
    let o = run(&["fit-baseline", "--corpus", corpus.path().to_str().unwrap(), "--out", coeffs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = corpus.path().join("eval");
    let o = run(&[
        "eval-model",
        "--model",
        coeffs.to_str().unwrap(),
        "--corpus",
        corpus.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("summary.json"));
    let test_mape = s["groups"]["test"]["mape"].as_f64().unwrap();
    assert!(test_mape.is_finite() && test_mape < 10.0, "{test_mape}");
    assert!(s["best_by_mape"].is_string() && s["worst_by_mape"].is_string());
}

#[test]
fn empty_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval-model", "--oracle", "--corpus", dir.path().to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let o = run(&["print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for section in ["[files]", "[risk]", "[mc]", "[sim]", "[controller]", "[noise]", "[coverage]"] {
        assert!(text.contains(section), "{section}");
    }
}
