//! Orthonormal Jacobi polynomials and multivariate tensor-product bases.
//!
//! Univariate polynomials live on the reference interval `[-1, 1]` and are
//! normalized against the Beta *probability* measure, i.e. the Jacobi weight
//! `(1 - t)^alpha (1 + t)^beta` scaled to integrate to one. With that
//! normalization every multivariate basis function has unit norm, which is
//! what the Sobol module relies on.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exponents of the Jacobi weight `(1 - t)^alpha (1 + t)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> JacobiParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    /// Legendre polynomials, matching the uniform distribution.
    pub fn legendre() -> Self {
        Self {
            alpha: T::zero(),
            beta: T::zero(),
        }
    }

    /// Parameters orthogonal under a Beta(p, q) density. The density's
    /// `x^(p-1)` factor sits at the lower limit, which maps to `t = -1`.
    pub fn from_beta_shapes(p: T, q: T) -> Result<Self> {
        Self::new(q - T::one(), p - T::one())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x > -T::one();
        if ok(self.alpha) && ok(self.beta) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "Jacobi parameters must be finite and > -1, got alpha={}, beta={}",
                self.alpha, self.beta
            )))
        }
    }
}

fn check_domain<T: Real>(t: T) -> Result<T> {
    let slack = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
    if !t.is_finite() || t.abs() > T::one() + slack {
        return Err(Error::Domain(t.as_f64()));
    }
    Ok(t.max(-T::one()).min(T::one()))
}

/// Squared norm of the classical Jacobi polynomial `P_n^(alpha, beta)` under
/// the Beta probability measure on `[-1, 1]`.
pub fn jacobi_norm_sq<T: Real>(order: usize, params: JacobiParams<T>) -> Result<T> {
    params.validate()?;
    Ok(T::lit(norm_sq_f64(
        order,
        params.alpha.as_f64(),
        params.beta.as_f64(),
    )))
}

fn norm_sq_f64(n: usize, a: f64, b: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let log_ratio = ln_gamma(nf + a + 1.0) + ln_gamma(nf + b + 1.0) + ln_gamma(a + b + 2.0)
        - (2.0 * nf + a + b + 1.0).ln()
        - ln_gamma(nf + a + b + 1.0)
        - ln_gamma(nf + 1.0)
        - ln_gamma(a + 1.0)
        - ln_gamma(b + 1.0);
    log_ratio.exp()
}

/// Classical Jacobi values `P_0(t) ..= P_max(t)` from the three-term recurrence.
fn classical_values<T: Real>(max_order: usize, params: JacobiParams<T>, t: T, out: &mut Vec<T>) {
    let (a, b) = (params.alpha, params.beta);
    let one = T::one();
    let two = T::lit(2.0);
    out.clear();
    out.push(one);
    if max_order == 0 {
        return;
    }
    out.push((a + one) + (a + b + two) * (t - one) / two);
    for n in 2..=max_order {
        let nf = T::from_usize_lossy(n);
        let s = two * nf + a + b;
        let denom = two * nf * (nf + a + b) * (s - two);
        let lin = (s - one) * (s * (s - two) * t + a * a - b * b);
        let back = two * (nf + a - one) * (nf + b - one) * s;
        let next = (lin * out[n - 1] - back * out[n - 2]) / denom;
        out.push(next);
    }
}

/// Orthonormal values `psi_0(t) ..= psi_max(t)` written into `out`.
pub(crate) fn orthonormal_values<T: Real>(
    max_order: usize,
    params: JacobiParams<T>,
    norms: &[T],
    t: T,
    out: &mut Vec<T>,
) {
    classical_values(max_order, params, t, out);
    for (v, inv_norm) in out.iter_mut().zip(norms) {
        *v = *v * *inv_norm;
    }
}

fn inverse_norms<T: Real>(max_order: usize, params: JacobiParams<T>) -> Vec<T> {
    let (a, b) = (params.alpha.as_f64(), params.beta.as_f64());
    (0..=max_order)
        .map(|n| T::lit(1.0 / norm_sq_f64(n, a, b).sqrt()))
        .collect()
}

/// Orthonormal Jacobi polynomial of the given order evaluated at `t`.
pub fn jacobi_eval<T: Real>(order: usize, params: JacobiParams<T>, t: T) -> Result<T> {
    params.validate()?;
    let t = check_domain(t)?;
    let mut values = Vec::with_capacity(order + 1);
    classical_values(order, params, t, &mut values);
    let norm = jacobi_norm_sq(order, params)?.sqrt();
    Ok(values[order] / norm)
}

/// Per-dimension polynomial orders of one multivariate basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(dimension: usize) -> Self {
        Self(vec![0; dimension])
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn total_order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&o| o == 0)
    }

    /// Dimensions with a non-zero order, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Graded lexicographic order: total order first, then larger leading
    /// orders first, so `(1, 0)` precedes `(0, 1)`.
    pub fn graded_cmp(&self, other: &Self) -> Ordering {
        self.total_order()
            .cmp(&other.total_order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ")")
    }
}

/// Truncation rules defining which multi-indices belong to a basis.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Truncation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order_per_dim: Option<Vec<usize>>,
}

impl Truncation {
    pub fn total(order: usize) -> Self {
        Self {
            max_total_order: Some(order),
            max_order_per_dim: None,
        }
    }

    pub fn per_dim(orders: Vec<usize>) -> Self {
        Self {
            max_total_order: None,
            max_order_per_dim: Some(orders),
        }
    }

    pub fn admits(&self, index: &MultiIndex) -> bool {
        let total_ok = self
            .max_total_order
            .is_none_or(|p| index.total_order() <= p);
        let per_dim_ok = self.max_order_per_dim.as_ref().is_none_or(|caps| {
            caps.len() == index.dimension() && index.0.iter().zip(caps).all(|(o, c)| o <= c)
        });
        total_ok && per_dim_ok
    }
}

/// Ordered set of multi-indices with the Jacobi parameters of every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet<T> {
    dimension: usize,
    indices: Vec<MultiIndex>,
    params_per_dim: Vec<JacobiParams<T>>,
    truncation: Truncation,
}

impl<T: Real> BasisSet<T> {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn params_per_dim(&self) -> &[JacobiParams<T>] {
        &self.params_per_dim
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    /// Highest order used in each dimension.
    pub fn max_orders(&self) -> Vec<usize> {
        (0..self.dimension)
            .map(|i| self.indices.iter().map(|a| a.0[i]).max().unwrap_or(0))
            .collect()
    }

    /// Basis restricted to an explicit index list, e.g. for hand-built
    /// surrogates. The list must start with the zero index and contain no
    /// duplicates; the truncation records the per-dimension envelope.
    pub fn from_indices(
        params_per_dim: Vec<JacobiParams<T>>,
        indices: Vec<MultiIndex>,
    ) -> Result<Self> {
        let dimension = params_per_dim.len();
        if dimension == 0 {
            return Err(Error::invalid("basis dimension must be positive"));
        }
        for p in &params_per_dim {
            p.validate()?;
        }
        if indices.first().is_none_or(|a| !a.is_zero()) {
            return Err(Error::invalid("basis must start with the zero multi-index"));
        }
        for a in &indices {
            if a.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: a.dimension(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !indices.iter().all(|a| seen.insert(a.clone())) {
            return Err(Error::invalid("duplicate multi-index in basis"));
        }
        let envelope = (0..dimension)
            .map(|i| indices.iter().map(|a| a.0[i]).max().unwrap_or(0))
            .collect();
        Ok(Self {
            dimension,
            indices,
            params_per_dim,
            truncation: Truncation::per_dim(envelope),
        })
    }

    /// Evaluates every basis function at a standardized point.
    pub fn eval(&self, xi_std: &[T]) -> Result<Vec<T>> {
        let mut evaluator = self.evaluator();
        let mut out = Vec::with_capacity(self.len());
        evaluator.eval_into(xi_std, &mut out)?;
        Ok(out)
    }

    /// Reusable evaluator caching norm constants and scratch buffers.
    pub fn evaluator(&self) -> BasisEvaluator<'_, T> {
        let max_orders = self.max_orders();
        let inv_norms = max_orders
            .iter()
            .zip(&self.params_per_dim)
            .map(|(&m, &p)| inverse_norms(m, p))
            .collect();
        BasisEvaluator {
            basis: self,
            max_orders,
            inv_norms,
            tables: vec![Vec::new(); self.dimension],
        }
    }
}

/// Evaluates a [`BasisSet`] at many points without recomputing constants.
pub struct BasisEvaluator<'a, T> {
    basis: &'a BasisSet<T>,
    max_orders: Vec<usize>,
    inv_norms: Vec<Vec<T>>,
    tables: Vec<Vec<T>>,
}

impl<T: Real> BasisEvaluator<'_, T> {
    pub fn eval_into(&mut self, xi_std: &[T], out: &mut Vec<T>) -> Result<()> {
        let d = self.basis.dimension;
        if xi_std.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xi_std.len(),
            });
        }
        for i in 0..d {
            let t = check_domain(xi_std[i])?;
            orthonormal_values(
                self.max_orders[i],
                self.basis.params_per_dim[i],
                &self.inv_norms[i],
                t,
                &mut self.tables[i],
            );
        }
        out.clear();
        out.extend(self.basis.indices.iter().map(|alpha| {
            alpha
                .0
                .iter()
                .enumerate()
                .fold(T::one(), |acc, (i, &o)| acc * self.tables[i][o])
        }));
        Ok(())
    }
}

/// Builds the multi-index set admitted by the given truncation rules, in
/// graded lexicographic order with the zero index first.
pub fn build_basis<T: Real>(
    dimension: usize,
    params_per_dim: Vec<JacobiParams<T>>,
    truncation: Truncation,
) -> Result<BasisSet<T>> {
    if dimension == 0 {
        return Err(Error::invalid("basis dimension must be positive"));
    }
    if params_per_dim.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            got: params_per_dim.len(),
        });
    }
    for p in &params_per_dim {
        p.validate()?;
    }
    if truncation.max_total_order.is_none() && truncation.max_order_per_dim.is_none() {
        return Err(Error::EmptyTruncation);
    }
    if let Some(caps) = &truncation.max_order_per_dim {
        if caps.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: caps.len(),
            });
        }
    }

    let caps: Vec<usize> = (0..dimension)
        .map(|i| {
            let per_dim = truncation
                .max_order_per_dim
                .as_ref()
                .map_or(usize::MAX, |c| c[i]);
            per_dim.min(truncation.max_total_order.unwrap_or(usize::MAX))
        })
        .collect();
    let budget = truncation.max_total_order.unwrap_or(usize::MAX);

    let mut indices = Vec::new();
    let mut current = vec![0; dimension];
    enumerate(&caps, budget, 0, &mut current, &mut indices);
    indices.sort_by(|a, b| a.graded_cmp(b));

    Ok(BasisSet {
        dimension,
        indices,
        params_per_dim,
        truncation,
    })
}

fn enumerate(
    caps: &[usize],
    budget: usize,
    dim: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<MultiIndex>,
) {
    if dim == caps.len() {
        out.push(MultiIndex(current.clone()));
        return;
    }
    for o in 0..=caps[dim].min(budget) {
        current[dim] = o;
        enumerate(caps, budget - o, dim + 1, current, out);
    }
    current[dim] = 0;
}

/// Evaluates every basis function of `basis` at a standardized point.
pub fn eval_multivariate<T: Real>(basis: &BasisSet<T>, xi_std: &[T]) -> Result<Vec<T>> {
    basis.eval(xi_std)
}
