//! Grids, node fields, the torsion weight `φ` and weighted norms.

mod coefficients;
mod grid;

pub use coefficients::{build_coefficients, CoefficientKind, CoefficientSet};
pub(crate) use coefficients::{parse_descriptor, take_args};
pub use grid::{build_grid, Field, Grid};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest interior system handed to the dense Poincaré eigen-solve.
const MAX_POINCARE_UNKNOWNS: usize = 2500;

/// Solves `Δ_h φ = -1` at interior nodes with `φ = 0` on the boundary.
pub fn solve_phi(grid: &Grid) -> Result<Field> {
    let n = grid.len();
    let a = grid.assemble_operator(&vec![0.0; n], &vec![1.0; n], 1.0);
    let interior = grid.interior_nodes();
    let norm_a = a.norm_inf();
    let lu = a.clone().factorize()?;
    let mut x = vec![1.0; interior.len()];
    lu.solve_in_place(&mut x);
    let residual = |x: &[f64]| {
        a.mul_vec(x)
            .iter()
            .fold(0.0f64, |m, r| m.max((r - 1.0).abs()))
    };
    let mut r = residual(&x);
    let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + norm_a * x_norm);
    if r > tol {
        let mut corr: Vec<f64> = a.mul_vec(&x).iter().map(|v| 1.0 - v).collect();
        lu.solve_in_place(&mut corr);
        for (xi, c) in x.iter_mut().zip(&corr) {
            *xi += c;
        }
        r = residual(&x);
        if r > tol {
            return Err(Error::Numerical(format!(
                "torsion solve residual {r:e} exceeds {tol:e}"
            )));
        }
    }
    let mut phi = Field::zeros(grid);
    for (slot, &p) in interior.iter().enumerate() {
        phi.values_mut()[p] = x[slot];
    }
    Ok(phi)
}

/// `(Σ_j q_j w_j |u_j|^p)^{1/p}` with trapezoid weights `q_j`.
pub fn weighted_lp_norm(u: &Field, weight: &Field, p: f64) -> Result<f64> {
    u.check_same_grid(weight)?;
    if !(p >= 1.0) {
        return Err(Error::param(format!("norm exponent must be at least 1, got {p}")));
    }
    if weight.values().iter().any(|w| *w < 0.0) {
        return Err(Error::param("norm weight must be nonnegative"));
    }
    let g = u.grid();
    let s: f64 = u
        .values()
        .iter()
        .zip(weight.values())
        .enumerate()
        .map(|(j, (v, w))| g.quadrature_weight(j) * w * v.abs().powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// Unweighted `L^p` norm.
pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    weighted_lp_norm(u, &Field::constant(u.grid(), 1.0), p)
}

/// `‖u‖²_{L²}` from raw node values.
pub fn l2_squared(grid: &Grid, u: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .map(|(j, v)| grid.quadrature_weight(j) * v * v)
        .sum()
}

/// `‖u‖_{L¹}` from raw node values.
pub fn l1_norm(grid: &Grid, u: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .map(|(j, v)| grid.quadrature_weight(j) * v.abs())
        .sum()
}

/// `‖∇_h u‖²_{L²}` from raw node values.
pub fn grad_l2_squared(grid: &Grid, u: &[f64]) -> f64 {
    grid.gradient(u)
        .iter()
        .enumerate()
        .map(|(j, g)| grid.quadrature_weight(j) * (g[0] * g[0] + g[1] * g[1]))
        .sum()
}

/// `|s|^{r-1} s`.
#[inline]
pub fn signed_power(s: f64, r: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.signum() * s.abs().powf(r)
    }
}

/// Smallest `C` with `‖w‖²_{L²} ≤ C ‖∇_h w‖²_{L²}` for all node fields vanishing on the boundary.
///
/// Computed from a dense symmetric eigen-solve, so limited to small grids.
pub fn discrete_poincare_constant(grid: &Grid) -> Result<f64> {
    let interior = grid.interior_nodes();
    let n = interior.len();
    if n > MAX_POINCARE_UNKNOWNS {
        return Err(Error::param(format!(
            "grid has {n} interior nodes; the Poincaré constant is limited to {MAX_POINCARE_UNKNOWNS}"
        )));
    }
    let total = grid.len();
    let grads: Vec<Vec<[f64; 2]>> = interior
        .iter()
        .map(|&p| {
            let mut e = vec![0.0; total];
            e[p] = 1.0;
            grid.gradient(&e)
        })
        .collect();
    // Sparse pairs would do; the dense product is fine at this size.
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut s = 0.0;
            for q in 0..total {
                let (ga, gb) = (grads[a][q], grads[b][q]);
                let dot = ga[0] * gb[0] + ga[1] * gb[1];
                if dot != 0.0 {
                    s += grid.quadrature_weight(q) * dot;
                }
            }
            gram[(a, b)] = s;
            gram[(b, a)] = s;
        }
    }
    let lambda_min = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::Numerical(format!(
            "discrete gradient form is not positive definite (λ_min = {lambda_min:e})"
        )));
    }
    Ok(grid.cell_volume() / lambda_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_small_grids() {
        let g = build_grid(1, &[1.0], &[5]).unwrap();
        let xs: Vec<f64> = (0..g.len()).map(|p| g.coords(p)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g2 = build_grid(2, &[1.0, 1.0], &[3, 3]).unwrap();
        assert_eq!(g2.len(), 9);
        assert_eq!(g2.boundary_count(), 8);
        assert!(build_grid(1, &[1.0], &[2]).is_err());
        assert!(build_grid(2, &[1.0, 2.0], &[5, 5]).is_err());
        assert!(build_grid(2, &[1.0, 2.0], &[5, 9]).is_ok());
    }

    #[test]
    fn phi_is_exact_in_one_dimension() {
        for n in [3, 8, 65] {
            let g = Grid::unit_interval(n).unwrap();
            let phi = solve_phi(&g).unwrap();
            for p in 0..g.len() {
                let x = g.coords(p)[0];
                assert!((phi.values()[p] - x * (1.0 - x) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_is_positive_and_symmetric_in_two_dimensions() {
        let g = build_grid(2, &[1.0, 1.0], &[21, 21]).unwrap();
        let phi = solve_phi(&g).unwrap();
        let v = phi.values();
        for p in g.interior_nodes() {
            assert!(v[p] > 0.0);
            let (i, j) = g.ij(p);
            for q in [g.index(20 - i, j), g.index(i, 20 - j), g.index(j, i)] {
                assert!((v[p] - v[q]).abs() < 1e-12);
            }
        }
        assert!(phi.boundary_max_abs() == 0.0);
    }

    #[test]
    fn norms_match_simple_integrals() {
        let g = Grid::unit_interval(201).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((lp_norm(&one, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lp_norm(&Field::zeros(&g), 2.0).unwrap(), 0.0);
        let s = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).sin());
        assert!((lp_norm(&s, 2.0).unwrap().powi(2) - 0.5).abs() < 1e-4);
        assert!(matches!(lp_norm(&s, 0.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Field::zeros(&Grid::unit_interval(5).unwrap());
        let b = Field::zeros(&Grid::unit_interval(6).unwrap());
        assert!(a.sub(&b).is_err());
        assert!(weighted_lp_norm(&a, &b, 1.0).is_err());
    }

    #[test]
    fn poincare_constant_bounds_the_sine_mode() {
        let g = Grid::unit_interval(33).unwrap();
        let c = discrete_poincare_constant(&g).unwrap();
        let s = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).sin());
        let ratio = l2_squared(&g, s.values()) / grad_l2_squared(&g, s.values());
        assert!(ratio <= c * (1.0 + 1e-12));
        assert!(c >= 1.0 / (std::f64::consts::PI.powi(2)) * 0.9);
    }

    #[test]
    fn gradient_is_exact_on_linear_fields() {
        let g = build_grid(2, &[1.0, 1.0], &[6, 6]).unwrap();
        let u = Field::from_fn(&g, |x| 2.0 * x[0] - 3.0 * x[1]);
        for d in u.gradient() {
            assert!((d[0] - 2.0).abs() < 1e-12 && (d[1] + 3.0).abs() < 1e-12);
        }
    }
}
