//! Perturbation parameters, their Beta distributions, and Latin hypercube
//! designs over them.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::basis::JacobiParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

fn default_shape<T: Real>() -> T {
    T::one()
}

/// One uncertain input: a Beta(p, q) distribution stretched onto `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct RandomParameter<T> {
    pub name: String,
    #[serde(default = "default_shape")]
    pub p: T,
    #[serde(default = "default_shape")]
    pub q: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Real> RandomParameter<T> {
    /// Uniform parameter on `[lower, upper]`.
    pub fn uniform(name: impl Into<String>, lower: T, upper: T) -> Result<Self> {
        Self::beta(name, T::one(), T::one(), lower, upper)
    }

    pub fn beta(name: impl Into<String>, p: T, q: T, lower: T, upper: T) -> Result<Self> {
        let param = Self {
            name: name.into(),
            p,
            q,
            lower,
            upper,
        };
        param.validate()?;
        Ok(param)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::invalid(format!(
                "parameter name `{}` must be non-empty and use only [A-Za-z0-9_.-]",
                self.name
            )));
        }
        if !(self.p.is_finite() && self.q.is_finite() && self.p > T::zero() && self.q > T::zero()) {
            return Err(Error::invalid(format!(
                "`{}`: Beta shapes must be positive, got p={}, q={}",
                self.name, self.p, self.q
            )));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::invalid(format!(
                "`{}`: limits must satisfy lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn jacobi(&self) -> JacobiParams<T> {
        JacobiParams {
            alpha: self.q - T::one(),
            beta: self.p - T::one(),
        }
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> T {
        self.lower + self.width() / T::lit(2.0)
    }

    fn out_of_limits(&self, value: T) -> Error {
        Error::OutOfLimits {
            name: self.name.clone(),
            value: value.as_f64(),
            lower: self.lower.as_f64(),
            upper: self.upper.as_f64(),
        }
    }

    /// Maps a physical value onto `[-1, 1]`.
    pub fn standardize(&self, value: T) -> Result<T> {
        if !value.is_finite() {
            return Err(self.out_of_limits(value));
        }
        let slack = T::lit(1e-12) * self.width();
        if value < self.lower - slack || value > self.upper + slack {
            return Err(self.out_of_limits(value));
        }
        let t = T::lit(2.0) * (value - self.lower) / self.width() - T::one();
        Ok(t.max(-T::one()).min(T::one()))
    }

    pub fn destandardize(&self, t: T) -> T {
        self.lower + (t + T::one()) * self.width() / T::lit(2.0)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Ordered set of independent parameters plus the seed driving every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ParameterSpace<T> {
    pub parameters: Vec<RandomParameter<T>>,
    pub seed: u64,
}

impl<T: Real> ParameterSpace<T> {
    pub fn new(parameters: Vec<RandomParameter<T>>, seed: u64) -> Result<Self> {
        let space = Self { parameters, seed };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters.is_empty() {
            return Err(Error::invalid("parameter space needs at least one parameter"));
        }
        let mut names = HashSet::new();
        for p in &self.parameters {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(Error::invalid(format!("duplicate parameter name `{}`", p.name)));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.parameters.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.parameters.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn jacobi_params(&self) -> Vec<JacobiParams<T>> {
        self.parameters.iter().map(RandomParameter::jacobi).collect()
    }

    /// Maps a physical point onto `[-1, 1]^d`.
    pub fn standardize(&self, xi_phys: &[T]) -> Result<Vec<T>> {
        self.check_len(xi_phys.len())?;
        self.parameters
            .iter()
            .zip(xi_phys)
            .map(|(p, &x)| p.standardize(x))
            .collect()
    }

    pub fn destandardize(&self, t: &[T]) -> Result<Vec<T>> {
        self.check_len(t.len())?;
        Ok(self
            .parameters
            .iter()
            .zip(t)
            .map(|(p, &x)| p.destandardize(x))
            .collect())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got,
            });
        }
        Ok(())
    }
}

/// Latin hypercube design on `[0, 1)^d`.
///
/// Column `j` draws from its own ChaCha stream (`seed`, stream `j`): a random
/// permutation assigns strata to rows, then a uniform offset places the point
/// inside its stratum.
pub fn lhs_unit(n: usize, d: usize, seed: u64) -> Result<Matrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("Latin hypercube needs n >= 1 and d >= 1"));
    }
    let mut out = Matrix::zeros(n, d);
    let nf = n as f64;
    for j in 0..d {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, &k) in strata.iter().enumerate() {
            let offset: f64 = rng.random();
            let mut u = (k as f64 + offset) / nf;
            // keep the point inside its stratum after rounding
            while u >= 1.0 || (u * nf).floor() as usize > k {
                u = u.next_down();
            }
            while ((u * nf).floor() as usize) < k {
                u = u.next_up();
            }
            out.row_mut(i)[j] = u;
        }
    }
    Ok(out)
}

/// Inverse of the regularized incomplete Beta function on `[0, 1]`.
///
/// Safeguarded Newton iteration inside a shrinking bisection bracket,
/// converged to an absolute tolerance of `1e-12` or better.
pub fn beta_icdf(u: f64, p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("beta_icdf needs u in [0, 1], got {u}")));
    }
    if !(p.is_finite() && q.is_finite() && p > 0.0 && q > 0.0) {
        return Err(Error::invalid(format!(
            "Beta shapes must be positive, got p={p}, q={q}"
        )));
    }
    if u == 0.0 || u == 1.0 {
        return Ok(u);
    }
    if p == 1.0 && q == 1.0 {
        return Ok(u);
    }

    const MAX_ITER: usize = 300;
    const X_TOL: f64 = 1e-14;
    let log_norm = ln_beta(p, q);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = 0.5;
    for _ in 0..MAX_ITER {
        let f = beta_reg(p, q, x) - u;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let log_pdf = (p - 1.0) * x.ln() + (q - 1.0) * (-x).ln_1p() - log_norm;
        let pdf = log_pdf.exp();
        let newton = x - f / pdf;
        let next = if pdf.is_finite() && pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= X_TOL || hi - lo <= X_TOL {
            return Ok(next.clamp(0.0, 1.0));
        }
        x = next;
    }
    Err(Error::NonConvergence { u, p, q })
}

/// `n x d` design in physical units, tied to the space that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T> {
    space: ParameterSpace<T>,
    values: Matrix<T>,
}

impl<T: Real> SampleMatrix<T> {
    /// Wraps rows of physical values, checking every column against its limits.
    pub fn new(space: ParameterSpace<T>, values: Matrix<T>) -> Result<Self> {
        space.validate()?;
        if values.cols() != space.dimension() {
            return Err(Error::DimensionMismatch {
                expected: space.dimension(),
                got: values.cols(),
            });
        }
        if values.rows() == 0 {
            return Err(Error::invalid("sample matrix needs at least one row"));
        }
        for i in 0..values.rows() {
            for (param, &v) in space.parameters.iter().zip(values.row(i)) {
                if !(v.is_finite() && v >= param.lower && v <= param.upper) {
                    return Err(param.out_of_limits(v));
                }
            }
        }
        Ok(Self { space, values })
    }

    pub fn from_rows(space: ParameterSpace<T>, rows: &[Vec<T>]) -> Result<Self> {
        let d = space.dimension();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let values = Matrix::from_row_major(rows.len(), d, data)?;
        Self::new(space, values)
    }

    pub fn space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn dimension(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.n()).map(|i| self.values.row(i))
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let picked: Vec<Vec<T>> = rows.iter().map(|&i| self.row(i).to_vec()).collect();
        Self::from_rows(self.space.clone(), &picked)
    }

    /// CSV text: optional `#` comment lines, a header of parameter names,
    /// then one row per sample in shortest round-trip decimal form.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(&self.space.names().join(","));
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses CSV written by [`SampleMatrix::to_csv`]; the header must list
    /// the space's parameter names in order.
    pub fn from_csv(space: ParameterSpace<T>, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("samples CSV is empty"))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names != space.names() {
            return Err(Error::invalid(format!(
                "samples CSV header {:?} does not match parameters {:?}",
                names,
                space.names()
            )));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|cell| {
                    cell.trim().parse::<T>().map_err(|_| {
                        Error::invalid(format!("samples CSV row {}: bad number `{cell}`", lineno + 1))
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Self::from_rows(space, &rows)
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        std::fs::write(path, self.to_csv(comments)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(space: ParameterSpace<T>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(space, &text)
    }
}

/// Draws `n` Latin hypercube samples from the space, in physical units.
pub fn sample<T: Real>(space: &ParameterSpace<T>, n: usize) -> Result<SampleMatrix<T>> {
    space.validate()?;
    let unit = lhs_unit(n, space.dimension(), space.seed)?;
    let mut values = Matrix::zeros(n, space.dimension());
    for i in 0..n {
        for (j, param) in space.parameters.iter().enumerate() {
            let x = beta_icdf(unit.get(i, j), param.p.as_f64(), param.q.as_f64())?;
            let v = param.lower + param.width() * T::lit(x);
            values.row_mut(i)[j] = v.max(param.lower).min(param.upper);
        }
    }
    SampleMatrix::new(space.clone(), values)
}

/// Maps a physical point onto `[-1, 1]^d`.
pub fn standardize<T: Real>(space: &ParameterSpace<T>, xi_phys: &[T]) -> Result<Vec<T>> {
    space.standardize(xi_phys)
}

pub fn destandardize<T: Real>(space: &ParameterSpace<T>, t: &[T]) -> Result<Vec<T>> {
    space.destandardize(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space3() -> ParameterSpace<f64> {
        ParameterSpace::new(
            vec![
                RandomParameter::uniform("brightness", 0.0, 2.0).unwrap(),
                RandomParameter::uniform("rotation", -30.0, 30.0).unwrap(),
                RandomParameter::uniform("tilt", -20.0, 20.0).unwrap(),
            ],
            7,
        )
        .unwrap()
    }

    #[test]
    fn lhs_quartiles() {
        let m = lhs_unit(4, 1, 11).unwrap();
        let mut strata: Vec<usize> = (0..4).map(|i| (m.get(i, 0) * 4.0).floor() as usize).collect();
        strata.sort();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_single_row_and_determinism() {
        let m = lhs_unit(1, 3, 5).unwrap();
        assert!(m.row(0).iter().all(|&u| (0.0..1.0).contains(&u)));
        assert_eq!(lhs_unit(20, 3, 99).unwrap(), lhs_unit(20, 3, 99).unwrap());
        assert_ne!(lhs_unit(20, 3, 99).unwrap(), lhs_unit(20, 3, 100).unwrap());
        assert!(lhs_unit(0, 3, 1).is_err());
    }

    #[test]
    fn icdf_examples() {
        assert_eq!(beta_icdf(0.25, 1.0, 1.0).unwrap(), 0.25);
        assert!((beta_icdf(0.25, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((beta_icdf(0.5, 3.0, 3.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(beta_icdf(1.5, 1.0, 1.0).is_err());
        assert!(beta_icdf(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn icdf_inverts_cdf() {
        for &(p, q) in &[(0.5, 0.5), (2.0, 5.0), (7.0, 1.5), (0.3, 4.0)] {
            for k in 1..50 {
                let u = k as f64 / 50.0;
                let x = beta_icdf(u, p, q).unwrap();
                assert!((beta_reg(p, q, x) - u).abs() < 1e-10, "p={p} q={q} u={u}");
            }
        }
    }

    #[test]
    fn standardize_examples() {
        let s = space3();
        let t = s.standardize(&[1.5, 0.0, -20.0]).unwrap();
        assert_eq!(t, vec![0.5, 0.0, -1.0]);
        assert!(matches!(
            s.standardize(&[2.5, 0.0, 0.0]),
            Err(Error::OutOfLimits { .. })
        ));
        assert!(s.standardize(&[1.0]).is_err());
    }

    #[test]
    fn sample_respects_limits() {
        let s = space3();
        let m = sample(&s, 1000).unwrap();
        for row in m.rows() {
            for (p, &v) in s.parameters.iter().zip(row) {
                assert!(v >= p.lower && v <= p.upper);
            }
        }
    }

    #[test]
    fn space_validation() {
        let a = RandomParameter::uniform("a", 0.0, 1.0).unwrap();
        assert!(ParameterSpace::new(vec![a.clone(), a.clone()], 0).is_err());
        assert!(ParameterSpace::<f64>::new(vec![], 0).is_err());
        assert!(RandomParameter::uniform("a", 1.0, 1.0).is_err());
        assert!(RandomParameter::beta("a", 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(RandomParameter::uniform("a,b", 0.0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = space3();
        let m = sample(&s, 17).unwrap();
        let text = m.to_csv(&["config_digest=abc".into()]);
        assert!(text.starts_with("# config_digest=abc\nbrightness,rotation,tilt\n"));
        let back = SampleMatrix::from_csv(s, &text).unwrap();
        assert_eq!(back, m);
    }
}
