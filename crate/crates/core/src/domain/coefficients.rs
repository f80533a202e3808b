use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Closed-form noise coefficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    /// `f(x) = c`.
    Constant { c: f64 },
    /// `f(x) = a + b · Π_i cos(2π x_i / L_i)`.
    Cosine { a: f64, b: f64 },
    /// `f(x) = amp · exp(-|x - center|² / (2 width²))`.
    Gaussian {
        amp: f64,
        center: [f64; 2],
        width: f64,
    },
}

impl CoefficientKind {
    /// Value, gradient and Hessian at `x` on a domain with extents `extent`.
    pub fn evaluate(&self, dim: usize, extent: [f64; 2], x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        match *self {
            CoefficientKind::Constant { c } => (c, [0.0; 2], [[0.0; 2]; 2]),
            CoefficientKind::Cosine { a, b } => {
                let mut k = [0.0; 2];
                let mut cs = [1.0; 2];
                let mut sn = [0.0; 2];
                for i in 0..dim {
                    k[i] = 2.0 * PI / extent[i];
                    cs[i] = (k[i] * x[i]).cos();
                    sn[i] = (k[i] * x[i]).sin();
                }
                let prod = cs[0] * cs[1];
                let mut g = [0.0; 2];
                let mut hess = [[0.0; 2]; 2];
                for i in 0..dim {
                    let other = if dim == 2 { cs[1 - i] } else { 1.0 };
                    g[i] = -b * k[i] * sn[i] * other;
                    hess[i][i] = -b * k[i] * k[i] * prod;
                }
                if dim == 2 {
                    let off = b * k[0] * k[1] * sn[0] * sn[1];
                    hess[0][1] = off;
                    hess[1][0] = off;
                }
                (a + b * prod, g, hess)
            }
            CoefficientKind::Gaussian { amp, center, width } => {
                let w2 = width * width;
                let mut d = [0.0; 2];
                for i in 0..dim {
                    d[i] = x[i] - center[i];
                }
                let e = amp * (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * w2)).exp();
                let mut g = [0.0; 2];
                let mut hess = [[0.0; 2]; 2];
                for i in 0..dim {
                    g[i] = -e * d[i] / w2;
                    for j in 0..dim {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        hess[i][j] = e * (d[i] * d[j] / (w2 * w2) - delta / w2);
                    }
                }
                (e, g, hess)
            }
        }
    }

    /// Sup-norm bound over the whole domain.
    pub fn sup_bound(&self) -> f64 {
        match *self {
            CoefficientKind::Constant { c } => c.abs(),
            CoefficientKind::Cosine { a, b } => a.abs() + b.abs(),
            CoefficientKind::Gaussian { amp, .. } => amp.abs(),
        }
    }

    /// True when the coefficient vanishes identically.
    pub fn is_zero(&self) -> bool {
        match *self {
            CoefficientKind::Constant { c } => c == 0.0,
            CoefficientKind::Cosine { a, b } => a == 0.0 && b == 0.0,
            CoefficientKind::Gaussian { amp, .. } => amp == 0.0,
        }
    }
}

impl fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::Constant { c } => write!(f, "constant(c={c})"),
            CoefficientKind::Cosine { a, b } => write!(f, "cosine(a={a},b={b})"),
            CoefficientKind::Gaussian { amp, center, width } => write!(
                f,
                "gaussian(amp={amp},center={},center_y={},width={width})",
                center[0], center[1]
            ),
        }
    }
}

/// Splits `name(key=value,...)` into the name and its numeric arguments.
pub(crate) fn parse_descriptor(s: &str) -> Result<(String, Vec<(String, f64)>)> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(open) => {
            if !s.ends_with(')') {
                return Err(Error::param(format!("unbalanced parentheses in `{s}`")));
            }
            (&s[..open], &s[open + 1..s.len() - 1])
        }
        None => (s, ""),
    };
    let mut kv = Vec::new();
    for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::param(format!("expected key=value, got `{part}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("`{}` is not a number in `{s}`", v.trim())))?;
        kv.push((k.trim().to_string(), v));
    }
    Ok((name.trim().to_string(), kv))
}

/// Looks up `allowed` keys in parsed arguments, rejecting any other key.
pub(crate) fn take_args(name: &str, kv: &[(String, f64)], allowed: &[&str]) -> Result<Vec<Option<f64>>> {
    for (k, _) in kv {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::param(format!("unknown parameter `{k}` for `{name}`")));
        }
    }
    Ok(allowed
        .iter()
        .map(|a| kv.iter().find(|(k, _)| k == a).map(|(_, v)| *v))
        .collect())
}

/// Parses `name(key=value,...)`.
impl FromStr for CoefficientKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, kv) = parse_descriptor(s)?;
        let take = |allowed: &[&str]| take_args(&name, &kv, allowed);
        match name.as_str() {
            "constant" => {
                let v = take(&["c"])?;
                Ok(CoefficientKind::Constant { c: v[0].unwrap_or(0.0) })
            }
            "cosine" => {
                let v = take(&["a", "b"])?;
                Ok(CoefficientKind::Cosine {
                    a: v[0].unwrap_or(0.5),
                    b: v[1].unwrap_or(0.5),
                })
            }
            "gaussian" => {
                let v = take(&["amp", "center", "center_y", "width"])?;
                let c = v[1].unwrap_or(0.5);
                let width = v[3].unwrap_or(0.1);
                if !(width > 0.0) {
                    return Err(Error::param("gaussian width must be positive"));
                }
                Ok(CoefficientKind::Gaussian {
                    amp: v[0].unwrap_or(1.0),
                    center: [c, v[2].unwrap_or(c)],
                    width,
                })
            }
            other => Err(Error::param(format!("unknown coefficient descriptor `{other}`"))),
        }
    }
}

/// Coefficients `f_1, ..., f_n` sampled with their first and second derivatives at every node.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    grid: Grid,
    kinds: Vec<CoefficientKind>,
    values: Vec<Vec<f64>>,
    gradients: Vec<Vec<[f64; 2]>>,
    hessians: Vec<Vec<[[f64; 2]; 2]>>,
}

/// Evaluates the descriptors on the grid.
pub fn build_coefficients(grid: &Grid, kinds: &[CoefficientKind]) -> CoefficientSet {
    CoefficientSet::new(grid, kinds.to_vec())
}

impl CoefficientSet {
    pub fn new(grid: &Grid, kinds: Vec<CoefficientKind>) -> Self {
        let n = grid.len();
        let mut values = Vec::with_capacity(kinds.len());
        let mut gradients = Vec::with_capacity(kinds.len());
        let mut hessians = Vec::with_capacity(kinds.len());
        for kind in &kinds {
            let mut v = Vec::with_capacity(n);
            let mut g = Vec::with_capacity(n);
            let mut hs = Vec::with_capacity(n);
            for p in 0..n {
                let (a, b, c) = kind.evaluate(grid.dim(), grid.extent(), grid.coords(p));
                v.push(a);
                g.push(b);
                hs.push(c);
            }
            values.push(v);
            gradients.push(g);
            hessians.push(hs);
        }
        Self {
            grid: *grid,
            kinds,
            values,
            gradients,
            hessians,
        }
    }

    /// Parses a `;`-separated descriptor list.
    pub fn parse(grid: &Grid, descriptors: &str) -> Result<Self> {
        let kinds = descriptors
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<CoefficientKind>>>()?;
        Ok(Self::new(grid, kinds))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[CoefficientKind] {
        &self.kinds
    }

    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    #[inline]
    pub fn value(&self, k: usize, node: usize) -> f64 {
        self.values[k][node]
    }

    #[inline]
    pub fn gradient(&self, k: usize, node: usize) -> [f64; 2] {
        self.gradients[k][node]
    }

    #[inline]
    pub fn hessian(&self, k: usize, node: usize) -> [[f64; 2]; 2] {
        self.hessians[k][node]
    }

    pub fn sup_bound(&self, k: usize) -> f64 {
        self.kinds[k].sup_bound()
    }

    /// `Σ_k sup |f_k|`.
    pub fn total_sup_bound(&self) -> f64 {
        self.kinds.iter().map(CoefficientKind::sup_bound).sum()
    }

    /// True when every coefficient vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.kinds.iter().all(CoefficientKind::is_zero)
    }

    /// Same descriptors evaluated on another grid.
    pub fn on_grid(&self, grid: &Grid) -> Self {
        Self::new(grid, self.kinds.clone())
    }
}
