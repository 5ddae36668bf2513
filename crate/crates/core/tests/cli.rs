mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::fixture;

fn hsdma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsdma")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn discretized(method: &str, h: &str) -> PathBuf {
    let out = scratch(&format!("ctrl_{method}_{h}.json"));
    let c = fixture("controller_continuous.json");
    let run = hsdma(&["discretize", "--input", s(&c), "--method", method, "--h", h, "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    out
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn margin_of_continuous_pair() {
    let (p, c) = (fixture("plant.json"), fixture("controller_continuous.json"));
    let v = json(&hsdma(&["margin", "--plant", s(&p), "--controller", s(&c)]));
    let dm = v["dm_seconds"].as_f64().unwrap();
    assert!((dm - 0.3254).abs() < 5e-4, "{dm}");
    assert_eq!(v["stable_nominal"], true);
}

#[test]
fn hsdma_reports_margin_and_order() {
    let p = fixture("plant.json");
    let cd = discretized("bilinear", "0.02");
    let v = json(&hsdma(&["hsdma", "--plant", s(&p), "--controller", s(&cd), "--n", "200", "--grid", "log"]));
    let dm = v["dm_seconds"].as_f64().unwrap();
    assert!((dm - 0.3255).abs() < 5e-4, "{dm}");
    assert!(v["order"].as_u64().unwrap() >= 1);
}

#[test]
fn sample_stays_below_nyquist() {
    let cd = discretized("zoh", "1");
    let out = hsdma(&["sample", "--controller", s(&cd), "--n", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let w: f64 = r.split(',').next().unwrap().parse().unwrap();
        assert!(w > 0.0 && w <= std::f64::consts::PI);
    }
}

#[test]
fn sample_then_fit_round_trip() {
    let cd = discretized("bilinear", "0.05");
    let csv = scratch("samples.csv");
    let fitted = scratch("fitted.json");
    assert!(hsdma(&["sample", "--controller", s(&cd), "--n", "100", "--out", s(&csv)]).status.success());
    let v = json(&hsdma(&["fit", "--input", s(&csv), "--out", s(&fitted)]));
    assert!(v["interpolation_error"].as_f64().unwrap() < 1e-2);
    let sys = hsdma::io::read_system(&fitted).unwrap().into_continuous().unwrap();
    assert_eq!(sys.order() as u64, v["order"].as_u64().unwrap());
}

#[test]
fn simulate_and_bisect() {
    let p = fixture("plant.json");
    let cd = discretized("bilinear", "0.05");
    let trace = scratch("trace.csv");
    let out = hsdma(&[
        "simulate",
        "--plant",
        s(&p),
        "--controller",
        s(&cd),
        "--tau",
        "0.1",
        "--t-final",
        "20",
        "--out",
        s(&trace),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stable"));
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("t,y,u\n"));

    let v = json(&hsdma(&[
        "bisect",
        "--plant",
        s(&p),
        "--controller",
        s(&cd),
        "--tau-lo",
        "0",
        "--tau-hi",
        "0.6",
        "--tol",
        "0.01",
    ]));
    let (lo, hi) = (v["tau_lo"].as_f64().unwrap(), v["tau_hi"].as_f64().unwrap());
    assert!(hi - lo <= 0.01 && lo > 0.25 && hi < 0.35, "[{lo}, {hi}]");
}

#[test]
fn sweep_writes_rows_and_plot() {
    let (p, c) = (fixture("plant.json"), fixture("controller_continuous.json"));
    let (rows, plot) = (scratch("sweep.csv"), scratch("plot.csv"));
    let out = hsdma(&[
        "sweep",
        "--plant",
        s(&p),
        "--controller",
        s(&c),
        "--h",
        "0.05,0.01",
        "--methods",
        "bilinear,backward",
        "--threads",
        "2",
        "--out",
        s(&rows),
        "--plot",
        s(&plot),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&rows).unwrap();
    let keys: Vec<String> = text.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["backward,0.01", "backward,0.05", "bilinear,0.01", "bilinear,0.05"]);
    let plot = std::fs::read_to_string(&plot).unwrap();
    assert!(plot.starts_with("h,continuous,forward,backward,bilinear\n"));
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (p, c) = (fixture("plant.json"), fixture("controller_continuous.json"));
    let cd = discretized("backward", "0.03");
    let runs: [&[&str]; 4] = [
        &["margin", "--plant", s(&p), "--controller", s(&c)],
        &["hsdma", "--plant", s(&p), "--controller", s(&cd)],
        &["sample", "--controller", s(&cd), "--n", "50"],
        &["sweep", "--plant", s(&p), "--controller", s(&c), "--h", "0.02,0.04"],
    ];
    for args in runs {
        let (a, b) = (hsdma(args), hsdma(args));
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn exit_codes() {
    let p = fixture("plant.json");
    assert_eq!(hsdma(&["bogus"]).status.code(), Some(1));
    assert_eq!(hsdma(&["margin", "--plant", s(&p)]).status.code(), Some(1));

    let bad = scratch("bad.json");
    std::fs::write(&bad, "{\"kind\": \"continuous\", \"A\": [[1]],\n \"B\": [[1]] ").unwrap();
    let out = hsdma(&["margin", "--plant", s(&bad), "--controller", s(&p)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let csv = scratch("bad.csv");
    std::fs::write(&csv, "omega_rad_s,re,im\n1.0,2.0,x\n").unwrap();
    let out = hsdma(&["fit", "--input", s(&csv)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = hsdma(&["discretize", "--input", s(&p), "--method", "bilinear", "--h=-0.1"]);
    assert_eq!(out.status.code(), Some(2));
}
