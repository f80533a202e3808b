//! One PASS/FAIL line per acceptance criterion.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spme_core::characteristics::{CharacteristicContext, TestFunction};
use spme_core::domain::{l1_norm, CoefficientKind, CoefficientSet, Field, Grid};
use spme_core::experiments::{
    parse_config, run_cocycle, run_contraction, run_convergence, run_diagnose, run_positivity, ExperimentReport,
};
use spme_core::kinetic::{ibp_residual, transport_residual, XiGrid};
use spme_core::paths::{sample_fbm, FbmGenerator, MollifiedPath, SamplePath};
use spme_core::solver::{energy_report, solve, SolverConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn quiet(grid: &Grid, horizon: f64) -> CharacteristicContext {
    CharacteristicContext::raw(
        CoefficientSet::new(grid, vec![CoefficientKind::Constant { c: 0.0 }]),
        SamplePath::zero(1, 64, horizon / 64.0).unwrap(),
    )
    .unwrap()
}

fn list(xs: &[f64], sci: bool) -> String {
    let items: Vec<String> = xs
        .iter()
        .map(|x| if sci { format!("{x:.3e}") } else { format!("{x:.2}") })
        .collect();
    format!("[{}]", items.join(", "))
}

fn verdicts_of(r: &ExperimentReport) -> String {
    r.verdicts
        .iter()
        .map(|v| format!("{}={:.3e}", v.name, v.measured))
        .collect::<Vec<_>>()
        .join(" ")
}

fn heat_oracle() -> Outcome {
    let started = Instant::now();
    let g = Grid::unit_interval(257).unwrap();
    let mut u0 = Field::from_fn(&g, |x| (PI * x[0]).sin());
    u0.clear_boundary();
    let cfg = SolverConfig::new(1.0, 0.0, 0.1, 1e-4).unwrap();
    let traj = solve(&u0, 0.1, &cfg, &quiet(&g, 0.1)).unwrap();
    let mut err: f64 = 0.0;
    for (n, &t) in traj.times().iter().enumerate() {
        let u = traj.physical_state(n);
        for p in 0..g.len() {
            let exact = (-PI * PI * t).exp() * (PI * g.coords(p)[0]).sin();
            err = err.max((u.values()[p] - exact).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(err <= 5e-3 && secs <= 10.0, format!("sup error {err:.3e} (≤ 5e-3), {secs:.2} s (≤ 10 s)"))
}

/// `t^{-α} (C - k |x - ½|² t^{-2β})_+^{1/(m-1)}` in one dimension.
fn barenblatt(m: f64, c: f64, x: f64, t: f64) -> f64 {
    let alpha = 1.0 / (m + 1.0);
    let k = alpha * (m - 1.0) / (2.0 * m);
    let y = x - 0.5;
    t.powf(-alpha) * (c - k * y * y * t.powf(-2.0 * alpha)).max(0.0).powf(1.0 / (m - 1.0))
}

fn barenblatt_oracle() -> Outcome {
    let (m, c, t0, run): (f64, f64, f64, f64) = (2.0, 0.03, 0.01, 0.05);
    let support = |t: f64| (c * 2.0 * m / ((m - 1.0) / (m + 1.0))).sqrt() * t.powf(1.0 / (m + 1.0));
    let interior = support(t0 + run) < 0.3;
    let mut errors = Vec::new();
    for (n, dt) in [(513, 1e-4), (1025, 5e-5)] {
        let g = Grid::unit_interval(n).unwrap();
        let u0 = Field::from_fn(&g, |x| barenblatt(m, c, x[0], t0));
        let cfg = SolverConfig::new(m, 0.0, 0.1, dt).unwrap();
        let traj = solve(&u0, run, &cfg, &quiet(&g, run)).unwrap();
        let exact = Field::from_fn(&g, |x| barenblatt(m, c, x[0], t0 + run));
        let diff = traj.final_state().sub(&exact).unwrap();
        errors.push(l1_norm(&g, diff.values()) / l1_norm(&g, exact.values()));
    }
    outcome(
        interior && errors[0] <= 0.02 && errors[1] < errors[0],
        format!(
            "relative L1 {:.3e} at h=1/512 (≤ 2e-2), {:.3e} at h=1/1024, support half-width {:.3}",
            errors[0],
            errors[1],
            support(t0 + run)
        ),
    )
}

fn characteristic_identities() -> Outcome {
    let g = Grid::unit_interval(65).unwrap();
    let coeffs = CoefficientSet::new(
        &g,
        vec![
            CoefficientKind::Cosine { a: 0.5, b: 0.5 },
            CoefficientKind::Gaussian {
                amp: 1.0,
                center: [0.3, 0.5],
                width: 0.2,
            },
        ],
    );
    let path = sample_fbm(0.5, 2, 1024, 1.0 / 1024.0, 77).unwrap();
    let ctx = CharacteristicContext::mollified(coeffs, MollifiedPath::new(path, 0.02).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let node = rng.random_range(0..g.len());
        let xi: f64 = rng.random_range(-2.0..2.0);
        let mut ts = [rng.random_range(0.0..0.9), rng.random_range(0.0..0.9), rng.random_range(0.0..0.9)];
        ts.sort_by(f64::total_cmp);
        let [s, t, u] = ts;
        let fwd = ctx.xi_forward(node, xi, s, t).unwrap();
        worst = worst.max((ctx.pi_backward(node, fwd, t, s).unwrap() - xi).abs());
        let back = ctx.pi_backward(node, xi, t, s).unwrap();
        worst = worst.max((ctx.xi_forward(node, back, s, t).unwrap() - xi).abs());
        let jac = ctx.weight_v(node, s, t).unwrap() * ctx.dxi_forward_dxi(node, s, t).unwrap();
        worst = worst.max((jac - 1.0).abs());
        let split = ctx.weight_v(node, s, t).unwrap() * ctx.weight_v(node, t, u).unwrap();
        worst = worst.max((ctx.weight_v(node, s, u).unwrap() - split).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 1.0, format!("max defect {worst:.3e} (≤ 1e-12), {secs:.3} s (< 1 s)"))
}

const PAIR: &str = "dt = 1e-3\nt_final = 0.2\nnodes = 65\n\
    initial = bump(amp=1,center=0.4,width=0.25)\ninitial_second = bump(amp=0.6,center=0.55,width=0.25)\n";

fn contraction() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for m in ["0.5", "1", "2", "3"] {
        let r = run_contraction(&parse_config(&format!("m = {m}\n{PAIR}")).unwrap()).unwrap();
        let full = r.metrics["t_star"] == 0.2;
        ok &= r.passed() && full;
        detail.push(format!("m={m}: max increase {:.1e}", r.metrics["max_weighted_increase"]));
    }
    let noisy = format!(
        "m = 0.5\n{PAIR}coefficients = cosine(a=0.5,b=0.5)\npath = fbm\nhurst = 0.5\nseed = 11\nrefine = true\n"
    );
    let r = run_contraction(&parse_config(&noisy).unwrap()).unwrap();
    ok &= r.passed() && r.metrics["t_star"] > 0.0;
    detail.push(format!(
        "noisy: t*={} C_obs={:.4} drift={:.2e} [{}]",
        r.metrics["t_star"],
        r.metrics["c_obs"],
        r.metrics["c_obs_drift"],
        verdicts_of(&r)
    ));
    outcome(ok, detail.join("; "))
}

fn energy_identity() -> Outcome {
    let mut res = Vec::new();
    for k in 0..3 {
        let n = 32 * (1 << k) + 1;
        let dt = 4e-3 / (1 << k) as f64;
        let g = Grid::unit_interval(n).unwrap();
        let mut u0 = Field::from_fn(&g, |x| {
            let r = (x[0] - 0.5) / 0.35;
            if r.abs() < 1.0 {
                (1.0 - r * r).powi(2)
            } else {
                0.0
            }
        });
        u0.clear_boundary();
        let cfg = SolverConfig::new(2.0, 0.0, 0.1, dt).unwrap();
        let traj = solve(&u0, 0.1, &cfg, &quiet(&g, 0.1)).unwrap();
        res.push(energy_report(&traj).identity_residual.unwrap());
    }
    let ratios: Vec<f64> = res.windows(2).map(|w| w[0] / w[1]).collect();
    outcome(
        ratios.iter().all(|r| *r >= 1.5),
        format!("residuals {}, ratios {} (≥ 1.5)", list(&res, true), list(&ratios, false)),
    )
}

fn positivity() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for m in ["0.5", "2"] {
        let text = format!(
            "m = {m}\ndt = 1e-3\nt_final = 0.2\nnodes = 129\ninitial = bump(amp=1,center=0.5,width=0.3)\n\
             coefficients = cosine(a=0.5,b=0.5)\npath = fbm\nhurst = 0.5\nseed = 21\nn_paths = 8\n"
        );
        let r = run_positivity(&parse_config(&text).unwrap()).unwrap();
        ok &= r.passed();
        detail.push(format!("m={m}: min {:.3e} (≥ -1e-9)", r.metrics["min_value"]));
    }
    outcome(ok, detail.join("; "))
}

fn cauchy() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for m in ["0.5", "2"] {
        let text = format!(
            "m = {m}\ndt = 1e-3\nt_final = 0.1\nnodes = 65\neta = 0.01\nepsilon = 0.1\n\
             initial = bump(amp=1,center=0.5,width=0.3)\ncoefficients = cosine(a=0.5,b=0.5)\n\
             path = fbm\nhurst = 0.75\nseed = 5\nn_paths = 16\nlevels = 4\n"
        );
        let r = run_convergence(&parse_config(&text).unwrap()).unwrap();
        ok &= r.passed();
        let e: Vec<f64> = (0..4).map(|k| r.metrics[&format!("e_{k}")]).collect();
        detail.push(format!("m={m}: e_k {}, e_3/e_1 {:.3}", list(&e, true), e[3] / e[1]));
    }
    outcome(ok, detail.join("; "))
}

fn cocycle() -> Outcome {
    let base = "m = 2\ndt = 2e-3\nt_final = 0.1\nnodes = 65\nepsilon = 0.04\nsplit_time = 0.05\n\
                initial = bump(amp=1,center=0.5,width=0.3)\nlevels = 3\n";
    let quiet = run_cocycle(&parse_config(base).unwrap()).unwrap();
    let noisy_text =
        format!("{base}coefficients = cosine(a=0.5,b=0.5)\npath = fbm\nhurst = 0.75\nseed = 100\nn_paths = 64\n");
    let noisy = run_cocycle(&parse_config(&noisy_text).unwrap()).unwrap();
    let means: Vec<f64> = (0..4).map(|l| noisy.metrics[&format!("mismatch_mean_{l}")]).collect();
    outcome(
        quiet.passed() && noisy.passed(),
        format!(
            "noise-free mismatch {:.1e} (≤ 1e-10); noisy means {}, min factor {:.3} (≥ 1.5)",
            quiet.verdicts[0].measured,
            list(&means, true), noisy.metrics["min_halving_factor"]
        ),
    )
}

fn singular_moments() -> Outcome {
    let text = "m = 0.5\ndt = 1e-3\nt_final = 0.1\nnodes = 65\nn_xi = 256\n\
                initial = bump(amp=1,center=0.5,width=0.35)\npsi = center=0.5,width=0.4\nrefine = true\n";
    let r = run_diagnose(&parse_config(text).unwrap()).unwrap();
    let wanted = ["singular_moment_variation", "log_moment_variation"];
    let mut ok = r.metrics["singular_moment"].is_finite() && r.metrics["log_moment"].is_finite();
    for w in wanted {
        ok &= r.find_verdict(w).map(|v| v.passed).unwrap_or(false);
    }
    outcome(
        ok,
        format!(
            "δ-moment {:.4e} → {:.4e}, log moment {:.4e} → {:.4e} [{}] (≤ 0.15)",
            r.metrics["singular_moment"],
            r.metrics["singular_moment_refined"],
            r.metrics["log_moment"],
            r.metrics["log_moment_refined"],
            wanted
                .iter()
                .filter_map(|w| r.find_verdict(w))
                .map(|v| format!("{}={:.3}", v.name, v.measured))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn weak_residuals() -> Outcome {
    let rho: TestFunction = "center=0.5,width=0.3,xi_center=0.3,xi_width=0.4".parse().unwrap();
    let psi: TestFunction = "center=0.45,width=0.3,xi_center=0.3,xi_width=0.4".parse().unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [1.0, 2.0] {
        let mut tr = Vec::new();
        let mut ib = Vec::new();
        for k in 2..5 {
            let n = 32 * (1 << k) + 1;
            let dt = 4e-3 / (1 << k) as f64;
            let g = Grid::unit_interval(n).unwrap();
            let mut u0 = Field::from_fn(&g, |x| (PI * x[0]).sin());
            u0.clear_boundary();
            let cfg = SolverConfig::new(m, 0.0, 0.05, dt).unwrap();
            let traj = solve(&u0, 0.1, &cfg, &quiet(&g, 0.1)).unwrap();
            let xi = XiGrid::for_trajectory(&traj, 32 * (1 << k)).unwrap();
            tr.push(transport_residual(&traj, &rho, 0.0, 0.1, &xi).unwrap());
            ib.push(ibp_residual(&traj, &psi, &xi).unwrap());
        }
        let rt: Vec<f64> = tr.windows(2).map(|w| w[0] / w[1]).collect();
        let ri: Vec<f64> = ib.windows(2).map(|w| w[0] / w[1]).collect();
        ok &= rt.iter().chain(&ri).all(|r| *r >= 1.5);
        detail.push(format!("m={m}: transport ratios {}, ibp ratios {}", list(&rt, false), list(&ri, false)));
    }
    outcome(ok, format!("{} (≥ 1.5)", detail.join("; ")))
}

fn fbm_covariance() -> Outcome {
    let n_paths = 10_000;
    let pairs = [(0.25, 0.5), (0.5, 0.5), (0.25, 1.0), (0.75, 1.0), (1.0, 1.0)];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for h in [0.3, 0.5, 0.75] {
        let gen = FbmGenerator::new(h, 64, 1.0 / 64.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8_675_309);
        let mut products = vec![Vec::with_capacity(n_paths); pairs.len()];
        for _ in 0..n_paths {
            let p = gen.sample_with(1, &mut rng);
            let z = p.channel(0);
            for (i, &(s, t)) in pairs.iter().enumerate() {
                products[i].push(z[(s * 64.0) as usize] * z[(t * 64.0) as usize]);
            }
        }
        for (i, &(s, t)) in pairs.iter().enumerate() {
            let exact = 0.5 * (f64::powf(t, 2.0 * h) + f64::powf(s, 2.0 * h) - f64::powf((t - s).abs(), 2.0 * h));
            let x = &products[i];
            let mean = x.iter().sum::<f64>() / n_paths as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
            let z = (mean - exact).abs() / (var / n_paths as f64).sqrt();
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    outcome(ok, format!("largest deviation {worst:.2} standard errors (≤ 3)"))
}

#[test]
#[allow(clippy::type_complexity)]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("heat-equation oracle", heat_oracle),
        ("Barenblatt oracle", barenblatt_oracle),
        ("characteristic identities", characteristic_identities),
        ("weighted L1 contraction", contraction),
        ("energy identity", energy_identity),
        ("positivity", positivity),
        ("epsilon-eta Cauchy differences", cauchy),
        ("cocycle restart", cocycle),
        ("singular moments", singular_moments),
        ("weak-form residuals", weak_residuals),
        ("fBM covariance", fbm_covariance),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!("{mark} [{}] {name}: {}", i + 1, o.detail);
        if !o.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
