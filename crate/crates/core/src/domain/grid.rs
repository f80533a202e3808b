use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

/// Uniform node grid on the interval `(0, L)` or the rectangle `(0, Lx) × (0, Ly)`,
/// including the boundary layer that carries the Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    nodes: [usize; 2],
    extent: [f64; 2],
    h: f64,
}

/// Builds a uniform grid. Spacing must agree across axes.
pub fn build_grid(dim: usize, extents: &[f64], nodes_per_axis: &[usize]) -> Result<Grid> {
    Grid::new(dim, extents, nodes_per_axis)
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], nodes_per_axis: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param(format!("dimension must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || nodes_per_axis.len() != dim {
            return Err(Error::param(format!(
                "expected {dim} extents and node counts, got {} and {}",
                extents.len(),
                nodes_per_axis.len()
            )));
        }
        let mut nodes = [1usize; 2];
        let mut extent = [0.0; 2];
        for a in 0..dim {
            if nodes_per_axis[a] < 3 {
                return Err(Error::param(format!(
                    "need at least 3 nodes per axis, got {} on axis {a}",
                    nodes_per_axis[a]
                )));
            }
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(Error::param(format!("extent on axis {a} must be positive")));
            }
            nodes[a] = nodes_per_axis[a];
            extent[a] = extents[a];
        }
        let h = extent[0] / (nodes[0] - 1) as f64;
        if dim == 2 {
            let hy = extent[1] / (nodes[1] - 1) as f64;
            if (hy - h).abs() > 1e-12 * h {
                return Err(Error::param(format!(
                    "non-uniform spacing: hx = {h}, hy = {hy}"
                )));
            }
        }
        Ok(Self {
            dim,
            nodes,
            extent,
            h,
        })
    }

    /// Unit interval with `n` nodes.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::new(1, &[1.0], &[n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes_per_axis(&self) -> [usize; 2] {
        self.nodes
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nodes[0] * j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nodes[0], idx / self.nodes[0])
    }

    /// Node coordinates; the unused second coordinate is 0 in one dimension.
    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [i as f64 * self.h, j as f64 * self.h]
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.ij(idx);
        let on_x = i == 0 || i == self.nodes[0] - 1;
        let on_y = self.dim == 2 && (j == 0 || j == self.nodes[1] - 1);
        on_x || on_y
    }

    pub fn boundary_count(&self) -> usize {
        (0..self.len()).filter(|&p| self.is_boundary(p)).count()
    }

    /// Trapezoid weight of a node: `h^d` halved once per axis on which it is a boundary node.
    #[inline]
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let (i, j) = self.ij(idx);
        let mut w = self.cell_volume();
        if i == 0 || i == self.nodes[0] - 1 {
            w *= 0.5;
        }
        if self.dim == 2 && (j == 0 || j == self.nodes[1] - 1) {
            w *= 0.5;
        }
        w
    }

    /// Interior nodes in increasing index order; position in this list is the unknown number.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| !self.is_boundary(p)).collect()
    }

    /// Number of interior nodes along x (the band half-width in two dimensions).
    fn interior_row(&self) -> usize {
        self.nodes[0] - 2
    }

    #[inline]
    fn interior_slot(&self, idx: usize) -> usize {
        let (i, j) = self.ij(idx);
        if self.dim == 1 {
            i - 1
        } else {
            (i - 1) + self.interior_row() * (j - 1)
        }
    }

    /// Grid neighbours of an interior node along each axis.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> ([usize; 4], usize) {
        let nx = self.nodes[0];
        if self.dim == 1 {
            ([idx - 1, idx + 1, 0, 0], 2)
        } else {
            ([idx - 1, idx + 1, idx - nx, idx + nx], 4)
        }
    }

    /// Centered Laplacian at interior nodes; zero on the boundary.
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.laplacian_into(values, &mut out);
        out
    }

    pub(crate) fn laplacian_into(&self, values: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        for p in 0..self.len() {
            if self.is_boundary(p) {
                out[p] = 0.0;
                continue;
            }
            let (nb, count) = self.neighbors(p);
            let mut s = -(count as f64) * values[p];
            for &q in &nb[..count] {
                s += values[q];
            }
            out[p] = s * inv_h2;
        }
    }

    /// Discrete gradient: centered at interior positions, one-sided on the boundary
    /// of each axis. Component `a` of node `p` is at `out[p][a]`.
    pub fn gradient(&self, values: &[f64]) -> Vec<[f64; 2]> {
        let inv_h = 1.0 / self.h;
        let nx = self.nodes[0];
        (0..self.len())
            .map(|p| {
                let (i, j) = self.ij(p);
                let mut g = [0.0; 2];
                g[0] = if i == 0 {
                    (values[p + 1] - values[p]) * inv_h
                } else if i == nx - 1 {
                    (values[p] - values[p - 1]) * inv_h
                } else {
                    0.5 * (values[p + 1] - values[p - 1]) * inv_h
                };
                if self.dim == 2 {
                    let ny = self.nodes[1];
                    g[1] = if j == 0 {
                        (values[p + nx] - values[p]) * inv_h
                    } else if j == ny - 1 {
                        (values[p] - values[p - nx]) * inv_h
                    } else {
                        0.5 * (values[p + nx] - values[p - nx]) * inv_h
                    };
                }
                g
            })
            .collect()
    }

    /// Assembles `diag(d) - factor · Δ_h · diag(s)` on the interior unknowns,
    /// where `d` and `s` are indexed by grid node.
    pub(crate) fn assemble_operator(&self, diag: &[f64], scale: &[f64], factor: f64) -> BandMatrix {
        let interior = self.interior_nodes();
        let n = interior.len();
        let band = if self.dim == 1 { 1 } else { self.interior_row() };
        let mut a = BandMatrix::zeros(n, band, band);
        let c = factor / (self.h * self.h);
        for (row, &p) in interior.iter().enumerate() {
            let (nb, count) = self.neighbors(p);
            a.add(row, row, diag[p] + c * count as f64 * scale[p]);
            for &q in &nb[..count] {
                if !self.is_boundary(q) {
                    a.add(row, self.interior_slot(q), -c * scale[q]);
                }
            }
        }
        a
    }
}

/// Real values on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    /// Samples `f` at every node, boundary included.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.coords(p))).collect();
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::param("field arithmetic on different grids"));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute value on boundary nodes.
    pub fn boundary_max_abs(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&p| self.grid.is_boundary(p))
            .fold(0.0, |m, p| m.max(self.values[p].abs()))
    }

    /// Sets every boundary node to zero.
    pub fn clear_boundary(&mut self) {
        for p in 0..self.grid.len() {
            if self.grid.is_boundary(p) {
                self.values[p] = 0.0;
            }
        }
    }

    pub fn laplacian(&self) -> Field {
        Field {
            grid: self.grid,
            values: self.grid.laplacian(&self.values),
        }
    }

    pub fn gradient(&self) -> Vec<[f64; 2]> {
        self.grid.gradient(&self.values)
    }

    /// Trapezoid integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(p, v)| self.grid.quadrature_weight(p) * v)
            .sum()
    }

    /// CSV with columns `x[,y],value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.grid.dim() == 1 { "x,value\n" } else { "x,y,value\n" });
        for (p, v) in self.values.iter().enumerate() {
            let c = self.grid.coords(p);
            if self.grid.dim() == 1 {
                let _ = writeln!(out, "{:e},{:e}", c[0], v);
            } else {
                let _ = writeln!(out, "{:e},{:e},{:e}", c[0], c[1], v);
            }
        }
        out
    }
}
