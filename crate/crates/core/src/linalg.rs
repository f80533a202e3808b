use crate::error::{Error, Result};

/// Square banded matrix with `lower` sub- and `upper` super-diagonals,
/// factorised in place by Gaussian elimination without pivoting.
///
/// Only used for column diagonally dominant systems (discrete Laplacians
/// and the Newton Jacobians of the monotone scheme), where elimination
/// without pivoting is stable.
#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = lower + upper + 1;
        Self {
            n,
            lower,
            upper,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.upper);
        i * self.width + (j + self.lower - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.lower < i || j > i + self.upper {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Max-norm of the matrix (largest absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)].abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
                return Err(Error::Numerical(format!(
                    "banded elimination hit pivot {pivot:e} at row {k}"
                )));
            }
            let row_end = (k + self.lower).min(n - 1);
            let col_end = (k + self.upper).min(n - 1);
            for i in k + 1..=row_end {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=col_end {
                    let skj = self.slot(k, j);
                    let sij = self.slot(i, j);
                    self.data[sij] -= l * self.data[skj];
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for i in 0..n {
            let lo = i.saturating_sub(m.lower);
            let mut sum = b[i];
            for j in lo..i {
                sum -= m.data[m.slot(i, j)] * b[j];
            }
            b[i] = sum;
        }
        for i in (0..n).rev() {
            let hi = (i + m.upper).min(n - 1);
            let mut sum = b[i];
            for j in i + 1..=hi {
                sum -= m.data[m.slot(i, j)] * b[j];
            }
            b[i] = sum / m.data[m.slot(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 2.5);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = a.mul_vec(&x);
        a.factorize().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn solves_wide_band_system() {
        let (nx, ny) = (7, 6);
        let n = nx * ny;
        let mut a = BandMatrix::zeros(n, nx, nx);
        for j in 0..ny {
            for i in 0..nx {
                let p = i + nx * j;
                a.add(p, p, 4.2);
                if i > 0 {
                    a.add(p, p - 1, -1.0);
                }
                if i + 1 < nx {
                    a.add(p, p + 1, -0.9);
                }
                if j > 0 {
                    a.add(p, p - nx, -1.1);
                }
                if j + 1 < ny {
                    a.add(p, p + nx, -1.0);
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut b = a.mul_vec(&x);
        assert_eq!(a.get(0, nx + 1), 0.0);
        a.factorize().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(a.factorize(), Err(Error::Numerical(_))));
    }
}
