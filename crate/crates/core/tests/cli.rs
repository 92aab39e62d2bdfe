use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
n_max = 3
omega_mod = 1.9717157287525381
";

fn vacrad(dir: &Path, args: &[&str], env_workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vacrad"));
    cmd.current_dir(dir).args(args).env_remove("VACRAD_WORKERS");
    if let Some(w) = env_workers {
        cmd.env("VACRAD_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = TempDir::new().unwrap();
    for (i, body) in ["bogus = 1\n", "g_0 = -0.1\n", "task = sweep\n", "n_max = 3\nn_max = 4\n"].iter().enumerate() {
        let name = format!("bad{i}.cfg");
        write_config(dir.path(), &name, body);
        let out = vacrad(dir.path(), &["run", "--config", &name], None);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    let out = vacrad(dir.path(), &["run", "--config", "missing.cfg"], None);
    assert_eq!(out.status.code(), Some(1));
    write_config(dir.path(), "ok.cfg", SMALL);
    let out = vacrad(dir.path(), &["run", "--config", "ok.cfg", "--mode", "lindblad"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = vacrad(dir.path(), &["run", "--config", "ok.cfg", "--workers", "0"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_output_is_reproducible_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let body = format!("{SMALL}sweep_start = 1.96\nsweep_stop = 1.98\nsweep_points = 3\nmode = both\n");
    write_config(dir.path(), "sweep.cfg", &body);
    let a = vacrad(dir.path(), &["sweep", "--config", "sweep.cfg", "--output", "a/run", "--workers", "1"], None);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = vacrad(dir.path(), &["sweep", "--config", "sweep.cfg", "--output", "b/run"], Some("2"));
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));

    let csv_a = fs::read_to_string(dir.path().join("a/run.csv")).unwrap();
    let csv_b = fs::read_to_string(dir.path().join("b/run.csv")).unwrap();
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("# output")).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(strip(&csv_a), strip(&csv_b));
    let rows: Vec<&str> = csv_a.lines().filter(|l| !l.starts_with('#')).collect();
    // header plus three points for each of the two modes
    assert_eq!(rows.len(), 7, "{csv_a}");

    let json = |p: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
        v["config"]["output"] = serde_json::Value::Null;
        v
    };
    assert_eq!(json("a/run.json"), json("b/run.json"));

    let telemetry: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/run.telemetry.json")).unwrap()).unwrap();
    assert_eq!(telemetry["workers"], 2);
    assert_eq!(telemetry["point_wall_seconds"].as_array().unwrap().len(), 6);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "single.cfg", SMALL);
    for out in ["one/run", "two/run"] {
        let o = vacrad(dir.path(), &["run", "--config", "single.cfg", "--output", out], Some("1"));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for suffix in ["csv", "json"] {
        let a = fs::read_to_string(dir.path().join(format!("one/run.{suffix}"))).unwrap();
        let b = fs::read_to_string(dir.path().join(format!("two/run.{suffix}"))).unwrap();
        assert_eq!(a.replace("one/run", "two/run"), b, "{suffix}");
    }
}

#[test]
fn spectrum_run_writes_lines_and_physical_units() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "spectrum.cfg", &format!("{SMALL}omega_min = -0.5\nomega_max = 3.0\nnu0_hz = 7e9\n"));
    let out = vacrad(dir.path(), &["spectrum", "--config", "spectrum.cfg", "--output", "s/out"], Some("1"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lines at"), "{stdout}");
    assert!(stdout.contains("photons/s"), "{stdout}");

    let spectrum = fs::read_to_string(dir.path().join("s/out.spectrum.csv")).unwrap();
    let rows: Vec<Vec<f64>> = spectrum
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').skip_while(|c| c.parse::<f64>().is_err()).map(|c| c.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 100);
    let omegas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert!(omegas.windows(2).all(|w| w[1] > w[0]));
    assert!(omegas[0] >= -0.5 - 1e-9 && *omegas.last().unwrap() <= 3.0 + 1e-9);
}

fn telemetry(dir: &Path, prefix: &str) -> (f64, Vec<f64>) {
    let t: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{prefix}.telemetry.json"))).unwrap()).unwrap();
    let points = t["point_wall_seconds"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    (t["wall_seconds"].as_f64().unwrap(), points)
}

#[test]
fn sweep_wall_time_scales_with_points_per_worker() {
    let dir = TempDir::new().unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = cores.min(2);
    let points = 4 * workers;
    let body = format!("n_max = 5\nsweep_start = 1.95\nsweep_stop = 2.05\nsweep_points = {points}\ntask = sweep\n");
    write_config(dir.path(), "scale.cfg", &body);
    let w = workers.to_string();
    let out = vacrad(dir.path(), &["run", "--config", "scale.cfg", "--output", "t/scale", "--workers", &w], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (wall, per_point) = telemetry(dir.path(), "t/scale");
    assert_eq!(per_point.len(), points);
    let single = per_point.iter().sum::<f64>() / points as f64;
    let ideal = points as f64 / workers as f64 * single;
    assert!((wall - ideal).abs() <= 0.25 * ideal, "wall {wall:.3} s, ideal {ideal:.3} s on {workers} workers");
}
