//! Reference computations used by the integration tests. Nothing here calls
//! into the crate's polynomial code.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

/// Gauss–Jacobi rule for the weight `(1 - t)^alpha (1 + t)^beta` on `[-1, 1]`,
/// normalized so the weights sum to one. Golub–Welsch on the monic recurrence.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (alpha, beta);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        jac[(k, k)] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + a + b;
            let off = (4.0 * m * (m + a) * (m + b) * (m + a + b) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|j| eig.eigenvectors[(0, j)].powi(2)).collect();
    (nodes, weights)
}

/// Generalized binomial coefficient through the Gamma function.
fn binom(x: f64, k: usize) -> f64 {
    let kf = k as f64;
    (ln_gamma(x + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(x - kf + 1.0)).exp()
}

/// Classical Jacobi polynomial from its explicit finite sum.
pub fn jacobi_explicit(n: usize, alpha: f64, beta: f64, t: f64) -> f64 {
    let nf = n as f64;
    (0..=n)
        .map(|s| {
            binom(nf + alpha, n - s)
                * binom(nf + beta, s)
                * ((t - 1.0) / 2.0).powi(s as i32)
                * ((t + 1.0) / 2.0).powi((n - s) as i32)
        })
        .sum()
}

/// Squared norm of the classical polynomial under the normalized weight,
/// computed by quadrature.
pub fn jacobi_norm_by_quadrature(n: usize, alpha: f64, beta: f64) -> f64 {
    let (x, w) = gauss_jacobi(n + 8, alpha, beta);
    x.iter()
        .zip(&w)
        .map(|(&t, &wt)| wt * jacobi_explicit(n, alpha, beta, t).powi(2))
        .sum()
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Variance decomposition of a two-variable function under a product
/// measure, by tensor quadrature. Returns `(V, D1, D2, D12)`.
pub fn anova_2d(
    f: impl Fn(f64, f64) -> f64,
    rule_x: &(Vec<f64>, Vec<f64>),
    rule_y: &(Vec<f64>, Vec<f64>),
) -> (f64, f64, f64, f64) {
    let (xs, wx) = rule_x;
    let (ys, wy) = rule_y;
    let values: Vec<Vec<f64>> = xs.iter().map(|&x| ys.iter().map(|&y| f(x, y)).collect()).collect();
    let mean: f64 = (0..xs.len())
        .flat_map(|i| (0..ys.len()).map(move |j| (i, j)))
        .map(|(i, j)| wx[i] * wy[j] * values[i][j])
        .sum();
    let g1: Vec<f64> = (0..xs.len())
        .map(|i| (0..ys.len()).map(|j| wy[j] * values[i][j]).sum::<f64>() - mean)
        .collect();
    let g2: Vec<f64> = (0..ys.len())
        .map(|j| (0..xs.len()).map(|i| wx[i] * values[i][j]).sum::<f64>() - mean)
        .collect();
    let mut v = 0.0;
    let mut d12 = 0.0;
    for i in 0..xs.len() {
        for j in 0..ys.len() {
            let w = wx[i] * wy[j];
            v += w * (values[i][j] - mean).powi(2);
            d12 += w * (values[i][j] - mean - g1[i] - g2[j]).powi(2);
        }
    }
    let d1 = g1.iter().zip(wx).map(|(g, w)| w * g * g).sum();
    let d2 = g2.iter().zip(wy).map(|(g, w)| w * g * g).sum();
    (v, d1, d2, d12)
}
