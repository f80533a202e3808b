//! Kinetic function, defect measures on a velocity lattice, singular moments and
//! residuals of the kinetic weak formulation.

use std::fmt::Write as _;

use crate::characteristics::{transport_test_function, TestFunction};
use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use crate::solver::{signed_power, SolverConfig, Trajectory};

/// Default number of velocity bins.
pub const DEFAULT_N_XI: usize = 256;

/// Uniform velocity lattice on `[-Ξmax, Ξmax]` with an even number of bins, so that
/// `ξ = 0` is a bin edge and no bin is centered at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiGrid {
    n: usize,
    xi_max: f64,
    dxi: f64,
}

impl XiGrid {
    pub fn new(n_xi: usize, xi_max: f64) -> Result<Self> {
        if n_xi < 2 || !n_xi.is_multiple_of(2) {
            return Err(Error::param(format!("n_xi must be even and at least 2, got {n_xi}")));
        }
        if !(xi_max > 0.0 && xi_max.is_finite()) {
            return Err(Error::param(format!("velocity range must be positive, got {xi_max}")));
        }
        Ok(Self {
            n: n_xi,
            xi_max,
            dxi: 2.0 * xi_max / n_xi as f64,
        })
    }

    /// Range `1.5 · sup_n max|u_n|` (1 for a zero trajectory).
    pub fn for_trajectory(traj: &Trajectory, n_xi: usize) -> Result<Self> {
        let sup = traj.sup_abs();
        Self::new(n_xi, if sup > 0.0 { 1.5 * sup } else { 1.0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn dxi(&self) -> f64 {
        self.dxi
    }

    #[inline]
    pub fn center(&self, b: usize) -> f64 {
        -self.xi_max + (b as f64 + 0.5) * self.dxi
    }

    #[inline]
    fn lower_edge(&self, b: usize) -> f64 {
        -self.xi_max + b as f64 * self.dxi
    }

    /// Bin containing `s`; `s = 0` falls in the first positive bin.
    #[inline]
    pub fn bin_of(&self, s: f64) -> usize {
        let b = ((s + self.xi_max) / self.dxi).floor();
        (b.max(0.0) as usize).min(self.n - 1)
    }

    fn check_range(&self, max_abs: f64) -> Result<()> {
        if max_abs > self.xi_max {
            return Err(Error::param(format!(
                "velocity range {} does not cover max|u| = {max_abs}",
                self.xi_max
            )));
        }
        Ok(())
    }

    /// `∫ χ̄(u, ξ) g(ξ) dξ` by the midpoint rule on each bin's overlap with the
    /// interval between 0 and `u`.
    pub fn chi_integral(&self, u: f64, g: impl Fn(f64) -> f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let (lo, hi, sign) = if u > 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
        let first = self.bin_of(lo);
        let last = self.bin_of(hi);
        let mut s = 0.0;
        for b in first..=last {
            let a = self.lower_edge(b).max(lo);
            let c = (self.lower_edge(b) + self.dxi).min(hi);
            if c > a {
                s += (c - a) * g(0.5 * (a + c));
            }
        }
        sign * s
    }
}

/// `χ̄(s, ξ) = 1_{0<ξ<s} - 1_{s<ξ<0}`.
#[inline]
pub fn chi_bar(s: f64, xi: f64) -> i8 {
    if 0.0 < xi && xi < s {
        1
    } else if s < xi && xi < 0.0 {
        -1
    } else {
        0
    }
}

/// `χ̄(u(x_j), ξ_b)` at bin centers, stored node-major.
pub fn kinetic_function(u: &Field, xi: &XiGrid) -> Result<Vec<i8>> {
    xi.check_range(u.max_abs())?;
    let mut out = Vec::with_capacity(u.values().len() * xi.len());
    for &v in u.values() {
        out.extend((0..xi.len()).map(|b| chi_bar(v, xi.center(b))));
    }
    Ok(out)
}

/// Kinetic function and defect densities of one time level.
///
/// Each node deposits its entropy (`p`) and parabolic (`q`) defect mass into the
/// single bin containing `u(x)`; densities are mass per unit `ξ`.
#[derive(Clone, Debug)]
pub struct KineticSnapshot {
    grid: Grid,
    xi: XiGrid,
    chi: Vec<i8>,
    bin: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
}

/// Deposits `η |∇_h u|²` and `(4m/(m+1)²) |∇_h u^{[(m+1)/2]}|²` into the bins of `u`.
pub fn defect_measures(u: &Field, config: &SolverConfig, xi: &XiGrid) -> Result<KineticSnapshot> {
    let chi = kinetic_function(u, xi)?;
    let grid = *u.grid();
    let m = config.m;
    let grad = u.gradient();
    let w: Vec<f64> = u.values().iter().map(|&v| signed_power(v, 0.5 * (m + 1.0))).collect();
    let grad_w = grid.gradient(&w);
    let kappa = 4.0 * m / ((m + 1.0) * (m + 1.0));
    let inv = 1.0 / xi.dxi();
    let bin = u.values().iter().map(|&v| xi.bin_of(v)).collect();
    let p = grad
        .iter()
        .map(|g| config.eta * (g[0] * g[0] + g[1] * g[1]) * inv)
        .collect();
    let q = grad_w
        .iter()
        .map(|g| kappa * (g[0] * g[0] + g[1] * g[1]) * inv)
        .collect();
    Ok(KineticSnapshot {
        grid,
        xi: *xi,
        chi,
        bin,
        p,
        q,
    })
}

impl KineticSnapshot {
    pub fn xi_grid(&self) -> &XiGrid {
        &self.xi
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn chi(&self, node: usize, b: usize) -> i8 {
        self.chi[node * self.xi.len() + b]
    }

    /// Bin holding the defect deposit of a node.
    pub fn deposit_bin(&self, node: usize) -> usize {
        self.bin[node]
    }

    #[inline]
    pub fn p(&self, node: usize, b: usize) -> f64 {
        if self.bin[node] == b {
            self.p[node]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn q(&self, node: usize, b: usize) -> f64 {
        if self.bin[node] == b {
            self.q[node]
        } else {
            0.0
        }
    }

    /// `∫∫ p dx dξ`.
    pub fn total_p(&self) -> f64 {
        self.weighted_total(|_, _| 1.0, &self.p)
    }

    /// `∫∫ q dx dξ`.
    pub fn total_q(&self) -> f64 {
        self.weighted_total(|_, _| 1.0, &self.q)
    }

    fn weighted_total(&self, weight: impl Fn(usize, f64) -> f64, density: &[f64]) -> f64 {
        (0..self.grid.len())
            .map(|j| {
                let xi = self.xi.center(self.bin[j]);
                self.grid.quadrature_weight(j) * density[j] * self.xi.dxi() * weight(j, xi)
            })
            .sum()
    }

    /// `∫∫ |ξ|^{δ-1} (p + q)`.
    pub fn singular_moment(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let w = |_: usize, xi: f64| xi.abs().powf(delta - 1.0);
        Ok(self.weighted_total(w, &self.p) + self.weighted_total(w, &self.q))
    }

    /// `∫∫ ψ(x) |ξ|^{-1} (p + q)`.
    pub fn log_moment(&self, psi: &Field) -> Result<f64> {
        check_psi(psi, &self.grid)?;
        let w = |j: usize, xi: f64| psi.values()[j] / xi.abs();
        Ok(self.weighted_total(w, &self.p) + self.weighted_total(w, &self.q))
    }

    /// `∫∫ χ sign(ξ) dx dξ` from the bin values.
    pub fn signed_chi_mass(&self) -> f64 {
        (0..self.grid.len())
            .map(|j| {
                let s: f64 = (0..self.xi.len())
                    .map(|b| self.chi(j, b) as f64 * self.xi.center(b).signum())
                    .sum();
                self.grid.quadrature_weight(j) * s * self.xi.dxi()
            })
            .sum()
    }

    /// CSV with columns `x[,y],xi,chi,p,q`, one row per (node, bin).
    pub fn to_csv(&self) -> String {
        let two = self.grid.dim() == 2;
        let mut out = String::from(if two { "x,y,xi,chi,p,q\n" } else { "x,xi,chi,p,q\n" });
        for j in 0..self.grid.len() {
            let c = self.grid.coords(j);
            for b in 0..self.xi.len() {
                if two {
                    let _ = write!(out, "{:e},{:e},", c[0], c[1]);
                } else {
                    let _ = write!(out, "{:e},", c[0]);
                }
                let _ = writeln!(
                    out,
                    "{:e},{},{:e},{:e}",
                    self.xi.center(b),
                    self.chi(j, b),
                    self.p(j, b),
                    self.q(j, b)
                );
            }
        }
        out
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param(format!("moment exponent must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

fn check_psi(psi: &Field, grid: &Grid) -> Result<()> {
    if psi.grid() != grid {
        return Err(Error::param("weight ψ lives on a different grid"));
    }
    if psi.values().iter().any(|v| *v < 0.0) {
        return Err(Error::param("weight ψ must be nonnegative"));
    }
    if psi.boundary_max_abs() != 0.0 {
        return Err(Error::param("weight ψ must vanish near the boundary"));
    }
    Ok(())
}

/// Snapshots of every stored time level after the initial one.
fn snapshots(traj: &Trajectory, xi: &XiGrid) -> Result<Vec<KineticSnapshot>> {
    (1..traj.len())
        .map(|n| defect_measures(&traj.physical_state(n), traj.config(), xi))
        .collect()
}

/// `Σ_{n≥1} dt ∫∫ |ξ|^{δ-1} (p_n + q_n)`.
pub fn singular_moment(traj: &Trajectory, delta: f64, xi: &XiGrid) -> Result<f64> {
    check_delta(delta)?;
    let dt = traj.config().dt;
    let mut total = 0.0;
    for s in snapshots(traj, xi)? {
        total += dt * s.singular_moment(delta)?;
    }
    Ok(total)
}

/// `Σ_{n≥1} dt ∫∫ ψ |ξ|^{-1} (p_n + q_n)`; refused for signed initial data.
pub fn log_moment(traj: &Trajectory, psi: &Field, xi: &XiGrid) -> Result<f64> {
    let min0 = traj.physical_state(0).min();
    if min0 < 0.0 {
        return Err(Error::Precondition(format!(
            "the logarithmic moment needs nonnegative initial data (min u0 = {min0:e})"
        )));
    }
    check_psi(psi, traj.grid())?;
    let dt = traj.config().dt;
    let mut total = 0.0;
    for s in snapshots(traj, xi)? {
        total += dt * s.log_moment(psi)?;
    }
    Ok(total)
}

/// Absolute residual of the transported kinetic weak formulation between grid times `s ≤ t`:
/// `[∫∫ χ ρ_{s,r}]_{r=s}^{t} - ∫_s^t ∫∫ (m|ξ|^{m-1} + η) χ Δ_h ρ_{s,r} + ∫_s^t ∫∫ (p + q) ∂_ξ ρ_{s,r}`,
/// with right-endpoint sums in time.
pub fn transport_residual(traj: &Trajectory, rho0: &TestFunction, s: f64, t: f64, xi: &XiGrid) -> Result<f64> {
    rho0.check_support(traj.grid())?;
    let (ns, nt) = match (traj.time_index(s), traj.time_index(t)) {
        (Some(a), Some(b)) if a <= b => (a, b),
        _ => {
            return Err(Error::param(format!(
                "times {s} ≤ {t} must lie on the trajectory's time grid"
            )))
        }
    };
    let ctx = traj.context();
    let grid = *traj.grid();
    let cfg = traj.config();
    let (m, eta, dt) = (cfg.m, cfg.eta, cfg.dt);
    let pairing = |n: usize| -> Result<f64> {
        let u = traj.physical_state(n);
        xi.check_range(u.max_abs())?;
        let rho = transport_test_function(ctx, rho0, traj.times()[ns], traj.times()[n])?;
        Ok((0..grid.len())
            .map(|j| grid.quadrature_weight(j) * xi.chi_integral(u.values()[j], |z| rho.value(j, z)))
            .sum())
    };
    let mut residual = pairing(nt)? - pairing(ns)?;
    for n in ns + 1..=nt {
        let u = traj.physical_state(n);
        let snap = defect_measures(&u, cfg, xi)?;
        let rho = transport_test_function(ctx, rho0, traj.times()[ns], traj.times()[n])?;
        let mut diffusion = 0.0;
        let mut defect = 0.0;
        for j in 0..grid.len() {
            if grid.is_boundary(j) {
                continue;
            }
            let w = grid.quadrature_weight(j);
            diffusion += w * xi.chi_integral(u.values()[j], |z| {
                (m * z.abs().powf(m - 1.0) + eta) * rho.laplacian(j, z)
            });
            let b = snap.deposit_bin(j);
            defect += w * (snap.p[j] + snap.q[j]) * xi.dxi() * rho.d_xi(j, xi.center(b));
        }
        residual += dt * (defect - diffusion);
    }
    Ok(residual.abs())
}

/// Euclidean norm of `Σ_{n≥1} dt [∫∫ ((m+1)/2) |ξ|^{(m-1)/2} χ ∇_x ψ + ∫ ∇_h u^{[(m+1)/2]} ψ(x, u)]`.
pub fn ibp_residual(traj: &Trajectory, psi: &TestFunction, xi: &XiGrid) -> Result<f64> {
    psi.check_support(traj.grid())?;
    let grid = *traj.grid();
    let cfg = traj.config();
    let m = cfg.m;
    let half = 0.5 * (m + 1.0);
    let mut total = [0.0; 2];
    for n in 1..traj.len() {
        let u = traj.physical_state(n);
        xi.check_range(u.max_abs())?;
        let w: Vec<f64> = u.values().iter().map(|&v| signed_power(v, half)).collect();
        let gw = grid.gradient(&w);
        for j in 0..grid.len() {
            let x = grid.coords(j);
            let (r, dr, _) = psi.spatial(x);
            if r == 0.0 && dr == [0.0; 2] {
                continue;
            }
            let uj = u.values()[j];
            let g = xi.chi_integral(uj, |z| half * z.abs().powf(0.5 * (m - 1.0)) * psi.velocity_factor(z).0);
            let b = psi.velocity_factor(uj).0;
            let q = grid.quadrature_weight(j) * cfg.dt;
            for a in 0..grid.dim() {
                total[a] += q * (dr[a] * g + r * b * gw[j][a]);
            }
        }
    }
    Ok((total[0] * total[0] + total[1] * total[1]).sqrt())
}
