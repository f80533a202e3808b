//! Explicit stochastic characteristics, the change-of-variables weight and
//! transported test functions.

use std::str::FromStr;

use serde::Serialize;

use crate::domain::{CoefficientSet, Field, Grid};
use crate::error::{Error, Result};
use crate::paths::{MollifiedPath, SamplePath};

const TIME_SLACK: f64 = 1e-9;

/// The path driving the characteristics.
#[derive(Clone, Debug)]
pub enum Driver {
    Raw(SamplePath),
    Mollified(MollifiedPath),
}

impl Driver {
    pub fn n_channels(&self) -> usize {
        match self {
            Driver::Raw(p) => p.n_channels(),
            Driver::Mollified(p) => p.n_channels(),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Driver::Raw(p) => p.horizon(),
            Driver::Mollified(p) => p.horizon(),
        }
    }

    pub fn increment(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        match self {
            Driver::Raw(p) => p.increment(s, t),
            Driver::Mollified(p) => p.increment(s, t),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Driver::Raw(_) => None,
            Driver::Mollified(p) => Some(p.epsilon()),
        }
    }
}

/// Coefficients and path needed to evaluate characteristics on a grid.
#[derive(Clone, Debug)]
pub struct CharacteristicContext {
    coefficients: CoefficientSet,
    driver: Driver,
}

impl CharacteristicContext {
    pub fn new(coefficients: CoefficientSet, driver: Driver) -> Result<Self> {
        if coefficients.len() != driver.n_channels() {
            return Err(Error::param(format!(
                "{} coefficients but the path has {} channels",
                coefficients.len(),
                driver.n_channels()
            )));
        }
        Ok(Self {
            coefficients,
            driver,
        })
    }

    pub fn raw(coefficients: CoefficientSet, path: SamplePath) -> Result<Self> {
        Self::new(coefficients, Driver::Raw(path))
    }

    pub fn mollified(coefficients: CoefficientSet, path: MollifiedPath) -> Result<Self> {
        Self::new(coefficients, Driver::Mollified(path))
    }

    /// Same coefficients driven by the base path mollified at scale `epsilon`.
    pub fn with_mollification(&self, epsilon: f64) -> Result<Self> {
        let base = match &self.driver {
            Driver::Raw(p) => p.clone(),
            Driver::Mollified(p) => p.base().clone(),
        };
        Self::mollified(self.coefficients.clone(), MollifiedPath::new(base, epsilon)?)
    }

    pub fn grid(&self) -> &Grid {
        self.coefficients.grid()
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coefficients
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn horizon(&self) -> f64 {
        self.driver.horizon()
    }

    fn check_times(&self, s: f64, t: f64) -> Result<()> {
        let h = self.horizon();
        let slack = TIME_SLACK * h.max(1.0);
        if !(s >= -slack && s <= t + slack && t <= h + slack) {
            return Err(Error::param(format!(
                "characteristic times need 0 ≤ s ≤ t ≤ {h}, got s = {s}, t = {t}"
            )));
        }
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.grid().len() {
            return Err(Error::param(format!(
                "node {node} outside a grid of {} nodes",
                self.grid().len()
            )));
        }
        Ok(())
    }

    /// `Σ_k f_k(x) z^k_{s,t}` at a node.
    pub fn exponent(&self, node: usize, s: f64, t: f64) -> Result<f64> {
        self.check_node(node)?;
        self.check_times(s, t)?;
        let inc = self.driver.increment(s, t)?;
        Ok(self.exponent_with(node, &inc))
    }

    #[inline]
    fn exponent_with(&self, node: usize, increments: &[f64]) -> f64 {
        increments
            .iter()
            .enumerate()
            .map(|(k, z)| self.coefficients.value(k, node) * z)
            .sum()
    }

    /// Forward characteristic `Ξ_{s,t} = ξ exp(Σ_k f_k(x) z^k_{s,t})`.
    pub fn xi_forward(&self, node: usize, xi: f64, s: f64, t: f64) -> Result<f64> {
        Ok(xi * self.exponent(node, s, t)?.exp())
    }

    /// Backward characteristic `Π = ξ exp(-Σ_k f_k(x) z^k_{s,t})`.
    pub fn pi_backward(&self, node: usize, xi: f64, t: f64, s: f64) -> Result<f64> {
        Ok(xi * (-self.exponent(node, s, t)?).exp())
    }

    /// `∂_ξ Ξ_{s,t}`, constant in `ξ`.
    pub fn dxi_forward_dxi(&self, node: usize, s: f64, t: f64) -> Result<f64> {
        Ok(self.exponent(node, s, t)?.exp())
    }

    /// Change-of-variables weight `v_{s,t}(x) = exp(-Σ_k f_k(x) z^k_{s,t})`.
    pub fn weight_v(&self, node: usize, s: f64, t: f64) -> Result<f64> {
        Ok((-self.exponent(node, s, t)?).exp())
    }

    /// `v_{s,t}` at every node.
    pub fn weight_field(&self, s: f64, t: f64) -> Result<Field> {
        self.check_times(s, t)?;
        let inc = self.driver.increment(s, t)?;
        let values = (0..self.grid().len())
            .map(|p| (-self.exponent_with(p, &inc)).exp())
            .collect();
        Field::from_values(self.grid(), values)
    }
}

/// `r ↦ exp(-1/(1 - r²))` on `|r| < 1`, scaled to `(x - center) / half_width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bump1d {
    pub center: f64,
    pub half_width: f64,
}

impl Bump1d {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite() && center.is_finite()) {
            return Err(Error::param(format!(
                "bump needs a finite center and positive half-width, got ({center}, {half_width})"
            )));
        }
        Ok(Self { center, half_width })
    }

    /// Value and first two derivatives at `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let w = self.half_width;
        let r = (x - self.center) / w;
        if r.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let d = 1.0 - r * r;
        let f = (-1.0 / d).exp();
        let d1 = -2.0 * r / (d * d);
        let d2 = 4.0 * r * r / (d * d * d * d) - (2.0 + 6.0 * r * r) / (d * d * d);
        (f, f * d1 / w, f * d2 / (w * w))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// Tensor bump `ρ₀(x, ξ) = Π_i b_i(x_i) · b_ξ(ξ)`; without a velocity factor it is constant in `ξ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestFunction {
    space: Vec<Bump1d>,
    velocity: Option<Bump1d>,
}

impl TestFunction {
    pub fn new(space: Vec<Bump1d>, velocity: Option<Bump1d>) -> Result<Self> {
        if space.is_empty() || space.len() > 2 {
            return Err(Error::param("test function needs one bump per spatial axis"));
        }
        Ok(Self { space, velocity })
    }

    pub fn space(&self) -> &[Bump1d] {
        &self.space
    }

    pub fn velocity(&self) -> Option<&Bump1d> {
        self.velocity.as_ref()
    }

    /// Errors unless the spatial support lies strictly inside the grid's domain.
    pub fn check_support(&self, grid: &Grid) -> Result<()> {
        if self.space.len() != grid.dim() {
            return Err(Error::param(format!(
                "test function has {} spatial factors on a {}-d grid",
                self.space.len(),
                grid.dim()
            )));
        }
        for (a, b) in self.space.iter().enumerate() {
            let (lo, hi) = b.support();
            if !(lo > 0.0 && hi < grid.extent()[a]) {
                return Err(Error::param(format!(
                    "test function support [{lo}, {hi}] on axis {a} touches the boundary of (0, {})",
                    grid.extent()[a]
                )));
            }
        }
        Ok(())
    }

    /// Spatial factor with its gradient and Laplacian.
    pub fn spatial(&self, x: [f64; 2]) -> (f64, [f64; 2], f64) {
        let e: Vec<(f64, f64, f64)> = self.space.iter().zip(x).map(|(b, xi)| b.eval(xi)).collect();
        if e.len() == 1 {
            let (f, d1, d2) = e[0];
            (f, [d1, 0.0], d2)
        } else {
            let ((f0, a0, b0), (f1, a1, b1)) = (e[0], e[1]);
            (f0 * f1, [a0 * f1, f0 * a1], b0 * f1 + f0 * b1)
        }
    }

    /// Velocity factor with its first two derivatives.
    #[inline]
    pub fn velocity_factor(&self, xi: f64) -> (f64, f64, f64) {
        match &self.velocity {
            Some(b) => b.eval(xi),
            None => (1.0, 0.0, 0.0),
        }
    }

    pub fn value(&self, x: [f64; 2], xi: f64) -> f64 {
        self.spatial(x).0 * self.velocity_factor(xi).0
    }

    pub fn gradient_x(&self, x: [f64; 2], xi: f64) -> [f64; 2] {
        let g = self.spatial(x).1;
        let b = self.velocity_factor(xi).0;
        [g[0] * b, g[1] * b]
    }
}

/// Parses `center=..,width=..[,center_y=..,width_y=..][,xi_center=..,xi_width=..]`.
/// `dim` is inferred from the presence of `center_y`.
impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut get = std::collections::BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::param(format!("expected key=value in test function, got `{part}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("`{}` is not a number", v.trim())))?;
            let k = k.trim();
            if !["center", "width", "center_y", "width_y", "xi_center", "xi_width"].contains(&k) {
                return Err(Error::param(format!("unknown test function parameter `{k}`")));
            }
            get.insert(k.to_string(), v);
        }
        let need = |k: &str| {
            get.get(k)
                .copied()
                .ok_or_else(|| Error::param(format!("test function is missing `{k}`")))
        };
        let mut space = vec![Bump1d::new(need("center")?, need("width")?)?];
        if get.contains_key("center_y") || get.contains_key("width_y") {
            space.push(Bump1d::new(need("center_y")?, need("width_y")?)?);
        }
        let velocity = if get.contains_key("xi_center") || get.contains_key("xi_width") {
            Some(Bump1d::new(need("xi_center")?, need("xi_width")?)?)
        } else {
            None
        };
        TestFunction::new(space, velocity)
    }
}

/// `ρ_{s,t}(x, ξ) = ρ₀(x, Π^{x,ξ}) v_{s,t}(x)` with its derivatives at grid nodes.
#[derive(Clone, Debug)]
pub struct TransportedTestFunction {
    base: TestFunction,
    s: f64,
    t: f64,
    // per node: spatial factor R, ∇R, ΔR, weight V, ∇V, ΔV
    r: Vec<(f64, [f64; 2], f64)>,
    v: Vec<(f64, [f64; 2], f64)>,
}

/// Builds the transported evaluator for `ρ₀` between times `s ≤ t`.
pub fn transport_test_function(
    ctx: &CharacteristicContext,
    base: &TestFunction,
    s: f64,
    t: f64,
) -> Result<TransportedTestFunction> {
    let grid = ctx.grid();
    base.check_support(grid)?;
    ctx.check_times(s, t)?;
    let inc = ctx.driver.increment(s, t)?;
    let coeffs = &ctx.coefficients;
    let n = grid.len();
    let mut r = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for p in 0..n {
        r.push(base.spatial(grid.coords(p)));
        // g = -Σ f_k Z_k, V = e^g
        let mut g = 0.0;
        let mut dg = [0.0; 2];
        let mut lap_g = 0.0;
        for (k, z) in inc.iter().enumerate() {
            g -= coeffs.value(k, p) * z;
            let grad = coeffs.gradient(k, p);
            let hess = coeffs.hessian(k, p);
            dg[0] -= grad[0] * z;
            dg[1] -= grad[1] * z;
            lap_g -= (hess[0][0] + hess[1][1]) * z;
        }
        let big_v = g.exp();
        v.push((
            big_v,
            [big_v * dg[0], big_v * dg[1]],
            big_v * (lap_g + dg[0] * dg[0] + dg[1] * dg[1]),
        ));
    }
    Ok(TransportedTestFunction {
        base: base.clone(),
        s,
        t,
        r,
        v,
    })
}

impl TransportedTestFunction {
    pub fn base(&self) -> &TestFunction {
        &self.base
    }

    pub fn times(&self) -> (f64, f64) {
        (self.s, self.t)
    }

    /// `v_{s,t}` at a node.
    pub fn weight(&self, node: usize) -> f64 {
        self.v[node].0
    }

    #[inline]
    pub fn value(&self, node: usize, xi: f64) -> f64 {
        let (rv, _, _) = self.r[node];
        let (vv, _, _) = self.v[node];
        rv * vv * self.base.velocity_factor(xi * vv).0
    }

    /// `∂_ξ ρ_{s,t}`.
    #[inline]
    pub fn d_xi(&self, node: usize, xi: f64) -> f64 {
        let (rv, _, _) = self.r[node];
        let (vv, _, _) = self.v[node];
        rv * vv * vv * self.base.velocity_factor(xi * vv).1
    }

    /// Spatial Laplacian of `ρ_{s,t}` by the chain rule through `Π` and `v`.
    #[inline]
    pub fn laplacian(&self, node: usize, xi: f64) -> f64 {
        let (rv, dr, lr) = self.r[node];
        if rv == 0.0 && dr == [0.0; 2] && lr == 0.0 {
            return 0.0;
        }
        let (vv, dv, lv) = self.v[node];
        let zeta = xi * vv;
        let (b, b1, b2) = self.base.velocity_factor(zeta);
        // H = V B(ξV)
        let h = vv * b;
        let c1 = b + zeta * b1;
        let grad_h = [dv[0] * c1, dv[1] * c1];
        let lap_h = lv * c1 + xi * (dv[0] * dv[0] + dv[1] * dv[1]) * (2.0 * b1 + zeta * b2);
        lr * h + 2.0 * (dr[0] * grad_h[0] + dr[1] * grad_h[1]) + rv * lap_h
    }
}

/// Largest time `t* ≤ t_final` on the grid `dt, 2dt, ...` such that
/// `max_interior Δ_h(v_{0,r} φ) ≤ 0` for every grid time `r ≤ t*`.
pub fn small_time_horizon(ctx: &CharacteristicContext, phi: &Field, t_final: f64, dt: f64) -> Result<f64> {
    if phi.grid() != ctx.grid() {
        return Err(Error::param("torsion weight lives on a different grid"));
    }
    if !(dt > 0.0) {
        return Err(Error::param(format!("time step must be positive, got {dt}")));
    }
    let steps = (t_final / dt).round() as usize;
    let mut last = 0.0;
    for n in 1..=steps {
        let r = n as f64 * dt;
        let v = ctx.weight_field(0.0, r)?;
        let lap = v.mul(phi)?.laplacian();
        let worst = ctx
            .grid()
            .interior_nodes()
            .into_iter()
            .map(|p| lap.values()[p])
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 0.0 {
            return Ok(last);
        }
        last = r;
    }
    Ok(last)
}
