//! Dense least squares through the Moore-Penrose pseudoinverse.
//!
//! Tall systems are first reduced with Householder QR so that the singular
//! value decomposition only has to run on the `m x m` triangular factor.
//! The SVD itself is one-sided Jacobi (Hestenes), which is accurate for small
//! singular values and works for any [`Real`] scalar.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Result of a pseudoinverse solve.
#[derive(Debug, Clone)]
pub struct LstsqSolution<T> {
    pub x: Vec<T>,
    /// Number of singular values kept after the cutoff.
    pub rank: usize,
    pub sigma_max: T,
    /// Absolute threshold below which singular values were zeroed.
    pub cutoff: T,
}

/// Default relative cutoff: machine epsilon times the larger matrix dimension.
pub fn default_rcond<T: Real>(rows: usize, cols: usize) -> T {
    T::epsilon() * T::from_usize_lossy(rows.max(cols))
}

/// Minimum-norm least squares solution `x = pinv(a) * b`.
///
/// Singular values below `rcond * sigma_max` are treated as zero.
pub fn pinv_solve<T: Real>(a: &Matrix<T>, b: &[T], rcond: T) -> Result<LstsqSolution<T>> {
    let (n, m) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("least squares needs a non-empty matrix"));
    }

    let mut columns: Vec<Vec<T>> = (0..m).map(|j| a.column(j)).collect();
    let mut rhs = b.to_vec();

    if n > m {
        householder_reduce(&mut columns, &mut rhs);
        for col in &mut columns {
            col.truncate(m);
        }
        rhs.truncate(m);
    }

    let (sigma, v) = one_sided_jacobi(&mut columns);
    let sigma_max = sigma.iter().copied().fold(T::zero(), T::max);
    if sigma_max == T::zero() {
        return Err(Error::ZeroDesign);
    }
    let cutoff = rcond * sigma_max;

    // x = sum_j (u_j . rhs / sigma_j) v_j, where u_j = w_j / sigma_j
    let mut x = vec![T::zero(); m];
    let mut rank = 0;
    for j in 0..m {
        let s = sigma[j];
        if s <= cutoff {
            continue;
        }
        rank += 1;
        let coef = dot(&columns[j], &rhs) / (s * s);
        for (xi, vij) in x.iter_mut().zip(&v[j]) {
            *xi = *xi + coef * *vij;
        }
    }
    Ok(LstsqSolution {
        x,
        rank,
        sigma_max,
        cutoff,
    })
}

/// Applies Householder reflections column by column, leaving the upper
/// triangle of `R` in the first `m` entries of each column and `Q^T b` in `rhs`.
fn householder_reduce<T: Real>(columns: &mut [Vec<T>], rhs: &mut [T]) {
    let n = rhs.len();
    let m = columns.len();
    let two = T::lit(2.0);
    for k in 0..m.min(n) {
        let norm = columns[k][k..].iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let x0 = columns[k][k];
        let alpha = if x0 >= T::zero() { -norm } else { norm };
        let mut v: Vec<T> = columns[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm_sq = v.iter().map(|&x| x * x).sum::<T>();
        if vnorm_sq == T::zero() {
            continue;
        }
        let reflect = |target: &mut [T]| {
            let proj = two * dot(&v, target) / vnorm_sq;
            for (t, vi) in target.iter_mut().zip(&v) {
                *t = *t - proj * *vi;
            }
        };
        for col in columns[k + 1..].iter_mut() {
            reflect(&mut col[k..]);
        }
        reflect(&mut rhs[k..]);
        columns[k][k] = alpha;
        columns[k][k + 1..].iter_mut().for_each(|x| *x = T::zero());
    }
}

/// Orthogonalizes the columns in place. Returns the singular values (the
/// final column norms) and the right singular vectors, stored as columns.
fn one_sided_jacobi<T: Real>(w: &mut [Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    const MAX_SWEEPS: usize = 80;
    let m = w.len();
    let mut v: Vec<Vec<T>> = (0..m)
        .map(|j| {
            let mut e = vec![T::zero(); m];
            e[j] = T::one();
            e
        })
        .collect();
    let tol = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma = w.iter().map(|col| dot(col, col).sqrt()).collect();
    (sigma, v)
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
