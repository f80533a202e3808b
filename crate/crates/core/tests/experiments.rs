use std::fs;

use spme_core::experiments::{
    emit_report, parse_config, run_cocycle, run_contraction, run_convergence, run_diagnose, run_positivity,
    run_solve, Comparison, ExperimentReport, Series,
};
use spme_core::Error;

const BASE: &str = "m = 2\ndt = 0.005\nt_final = 0.05\nnodes = 33\ninitial = bump(amp=1,center=0.45,width=0.3)\n";

fn cfg(extra: &str) -> spme_core::experiments::ExperimentConfig {
    parse_config(&format!("{BASE}{extra}")).unwrap()
}

#[test]
fn identical_data_have_zero_distance() {
    let r = run_contraction(&cfg("initial_second = bump(amp=1,center=0.45,width=0.3)\n")).unwrap();
    let d = r.series["distance"].column("weighted_distance").unwrap();
    assert!(d.iter().all(|v| *v == 0.0));
    assert!(r.passed());
}

#[test]
fn contraction_verdict_replays_from_its_series() {
    let c = cfg("initial_second = bump(amp=0.5,center=0.6)\ncoefficients = cosine\npath = fbm\nseed = 4\n");
    let r = run_contraction(&c).unwrap();
    let s = &r.series["distance"];
    let d = s.column("weighted_distance").unwrap();
    let inside = s.column("within_t_star").unwrap();
    let replay = (0..d.len() - 1)
        .filter(|&n| inside[n + 1] == 1.0)
        .map(|n| d[n + 1] - d[n])
        .fold(0.0, f64::max);
    let v = r.find_verdict("weighted_distance_nonincreasing_on_t_star").unwrap();
    assert_eq!(v.measured, replay);
    assert_eq!(v.threshold, 10.0 * c.solver.newton_tol);
    assert_eq!(v.comparison, Comparison::LessEq);
    assert!(v.passed);
}

#[test]
fn signed_data_are_refused() {
    let c = cfg("initial_second = sine(amp=-1)\n");
    assert!(matches!(run_contraction(&c), Err(Error::Precondition(_))));
    let c = parse_config(&BASE.replace("bump(amp=1", "bump(amp=-1")).unwrap();
    assert!(matches!(run_positivity(&c), Err(Error::Precondition(_))));
    let c = cfg("");
    assert!(matches!(run_contraction(&c), Err(Error::Config { .. })));
}

#[test]
fn zero_data_stay_zero() {
    let c = parse_config(&BASE.replace("bump(amp=1,center=0.45,width=0.3)", "zero")).unwrap();
    let r = run_positivity(&c).unwrap();
    assert_eq!(r.metrics["min_value"], 0.0);
    assert!(r.passed());
}

#[test]
fn noise_free_restart_is_exact() {
    let r = run_cocycle(&cfg("split_time = 0.02\nlevels = 2\n")).unwrap();
    let v = r.find_verdict("restart_mismatch").unwrap();
    assert!(v.measured <= 1e-10 && v.passed);
    assert_eq!(r.series["levels"].len(), 3);
}

#[test]
fn split_time_must_sit_on_the_step_grid() {
    for s in ["0.0123", "0.05", "0"] {
        let c = cfg(&format!("split_time = {s}\n"));
        assert!(matches!(run_cocycle(&c), Err(Error::Parameter(_))), "{s}");
    }
}

#[test]
fn noise_free_cauchy_differences_follow_eta() {
    let r = run_convergence(&cfg("eta = 0.02\nlevels = 3\n")).unwrap();
    let e = r.series["cauchy"].column("e_k").unwrap();
    assert!(e.iter().all(|v| *v > 0.0));
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.4).contains(&ratio), "{e:?}");
    }
    let r = run_convergence(&cfg("levels = 3\n")).unwrap();
    assert!(r.series["cauchy"].column("e_k").unwrap().iter().all(|v| *v == 0.0));
    assert!(run_convergence(&cfg("levels = 2\n")).is_err());
}

#[test]
fn diagnose_reports_moments_and_refinement_verdicts() {
    let c = cfg("psi = center=0.45,width=0.3\nrho = center=0.5,width=0.3,xi_center=0.3,xi_width=0.4\nrefine = true\nn_xi = 64\n");
    let r = run_diagnose(&c).unwrap();
    for key in ["singular_moment", "log_moment", "transport_residual", "ibp_residual", "energy_identity_residual"] {
        assert!(r.metrics[key].is_finite(), "{key}");
        assert!(r.metrics.contains_key(&format!("{key}_refined")), "{key}");
    }
    assert_eq!(r.metrics["n_xi_refined"], 128.0);
    assert!(r.find_verdict("singular_moment_variation").is_some());
    assert!(r.find_verdict("energy_identity_ratio").is_some());
    let d = &r.series["defects"];
    assert_eq!(d.len(), 11);
}

#[test]
fn emitted_files_follow_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let empty = ExperimentReport::new("solve", Default::default(), vec![]);
    let written = emit_report(&empty, dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    assert!(dir.path().join("report.json").exists());

    let mut two = ExperimentReport::new("solve", Default::default(), vec![3]);
    let mut a = Series::new(&["t", "x"]);
    a.push(vec![0.0, 1.0]);
    two.add_series("alpha", a.clone());
    two.add_series("beta", a);
    let out = dir.path().join("two");
    emit_report(&two, &out).unwrap();
    assert_eq!(fs::read_to_string(out.join("alpha.csv")).unwrap(), "t,x\n0e0,1e0\n");
    assert!(out.join("beta.csv").exists());

    let err = emit_report(&two, &dir.path().join("report.json").join("x")).unwrap_err();
    assert!(err.to_string().contains("report.json"));
}

#[test]
fn reruns_with_equal_seeds_are_identical() {
    let c = cfg("coefficients = cosine\npath = fbm\nseed = 12\n");
    let a = run_solve(&c).unwrap().to_json();
    let b = run_solve(&c).unwrap().to_json();
    assert_eq!(a, b);
    let other = run_solve(&cfg("coefficients = cosine\npath = fbm\nseed = 13\n")).unwrap().to_json();
    assert_ne!(a, other);
}
