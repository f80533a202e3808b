use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spme"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CONTRACTION: &str = "\
# two bumps, no noise
m = 2
dt = 0.005
t_final = 0.05
nodes = 33
initial = bump(amp=1,center=0.4)
initial_second = bump(amp=0.5,center=0.6)
";

#[test]
fn contraction_writes_report_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", CONTRACTION);
    let out = dir.path().join("out");
    let o = spme(&["contraction", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS weighted_distance_nonincreasing_on_t_star"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["kind"], "contraction");
    assert_eq!(json["provenance"]["config"]["scheme"], "transformed");
    assert!(out.join("distance.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{CONTRACTION}coefficients = cosine(a=0.5,b=0.5)\npath = fbm\nseed = 9\n");
    let cfg = write(dir.path(), "c.cfg", &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = spme(&["contraction", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("distance.csv")).unwrap(), fs::read(b.join("distance.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.cfg", &format!("{CONTRACTION}epsilonn = 0.1\n"));
    let o = spme(&["contraction", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8") && err.contains("epsilonn"), "{err}");

    let neg = write(dir.path(), "neg.cfg", &CONTRACTION.replace("m = 2", "m = -1"));
    let o = spme(&["contraction", "--config", &neg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let signed = write(dir.path(), "signed.cfg", &CONTRACTION.replace("amp=0.5", "amp=-0.5"));
    let o = spme(&["contraction", "--config", &signed, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonnegative"));

    let o = spme(&["contraction", "--config", &dir.path().join("missing.cfg").to_string_lossy(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,z1\n");
    for i in 0..=200 {
        let t = i as f64 * 0.01;
        csv.push_str(&format!("{t},{}\n", 100.0 * t));
    }
    fs::create_dir(dir.path().join("paths")).unwrap();
    write(&dir.path().join("paths"), "ramp.csv", &csv);
    let cfg = write(
        dir.path(),
        "s.cfg",
        "m = 2\ndt = 0.1\nt_final = 0.2\nnodes = 17\nscheme = direct\ncoefficients = constant(c=50)\n\
         path = csv\npath_file = paths/ramp.csv\npath_dt = 0.01\ninitial = bump\n",
    );
    let out = dir.path().join("out");
    let o = spme(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time step too large"));
}

#[test]
fn failed_verdict_exits_with_three() {
    // A rough path (H = 0.3) halves its Cauchy differences too slowly.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.cfg",
        "m = 2\ndt = 0.002\nt_final = 0.1\nnodes = 33\nepsilon = 0.1\ncoefficients = cosine\n\
         path = fbm\nhurst = 0.3\nseed = 1\nlevels = 3\ninitial = bump(width=0.3)\n",
    );
    let out = dir.path().join("out");
    let o = spme(&["convergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL cauchy_last_over_first"));
    assert!(out.join("report.json").exists());
}

#[test]
fn solve_exports_states() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "h.cfg",
        "experiment = solve\nm = 1\ndt = 0.01\nt_final = 0.05\nnodes = 17\ninitial = sine\nrecord_every = 2\n",
    );
    let out = dir.path().join("out");
    let o = spme(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("states/manifest.json").exists());
    assert!(out.join("trajectory.csv").exists());

    let o = spme(&["cocycle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`solve`"));
}
