//! Polynomial chaos surrogate: least squares coefficients, prediction,
//! relative error, and the logit link used for probability outputs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::linalg::{self, default_rcond, Matrix};
use crate::randomspace::{ParameterSpace, SampleMatrix};
use crate::scalar::Real;

/// Holdout error is recorded once a design has at least this many rows.
pub const HOLDOUT_MIN_SAMPLES: usize = 50;
const HOLDOUT_STREAM: u64 = 0x686f_6c64_6f75_74;

/// Default probability clamp applied before the logit.
pub const DEFAULT_LINK_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Identity,
    Logit,
}

/// Output transformation applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    pub epsilon: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self::logit(DEFAULT_LINK_EPSILON)
    }
}

impl LinkSpec {
    pub fn identity() -> Self {
        Self {
            kind: LinkKind::Identity,
            epsilon: DEFAULT_LINK_EPSILON,
        }
    }

    pub fn logit(epsilon: f64) -> Self {
        Self {
            kind: LinkKind::Logit,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon < 0.5 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "link epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )))
        }
    }

    /// Forward link: logit for probabilities, passthrough for identity.
    pub fn apply<T: Real>(&self, value: T) -> Result<T> {
        match self.kind {
            LinkKind::Identity => Ok(value),
            LinkKind::Logit => logit(value, self),
        }
    }

    /// Inverse link, used when reporting on the original scale.
    pub fn invert<T: Real>(&self, value: T) -> T {
        match self.kind {
            LinkKind::Identity => value,
            LinkKind::Logit => logistic(value),
        }
    }
}

/// `log(p / (1 - p))` after clamping `p` into `[eps, 1 - eps]`.
pub fn logit<T: Real>(p: T, link: &LinkSpec) -> Result<T> {
    link.validate()?;
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::invalid(format!("logit needs p in [0, 1], got {p}")));
    }
    let eps = T::lit(link.epsilon);
    // clamp whichever side is closer to its bound so the small tail stays exact
    let (p, q) = if p <= T::lit(0.5) {
        let p = p.max(eps);
        (p, T::one() - p)
    } else {
        let q = (T::one() - p).max(eps);
        (T::one() - q, q)
    };
    Ok((p / q).ln())
}

/// `1 / (1 + exp(-z))`, evaluated without overflow for large `|z|`.
pub fn logistic<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Fit diagnostics carried alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo<T> {
    pub n_samples: usize,
    /// `None` when every target is zero and the relative error is undefined.
    pub in_sample_nrmsd: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_nrmsd: Option<T>,
    /// Absolute singular value threshold used by the pseudoinverse.
    pub svd_cutoff: T,
    pub rank: usize,
    pub seed: u64,
}

/// Fitted expansion `sum_a c_a Psi_a(xi)` over a parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate<T> {
    basis: BasisSet<T>,
    space: ParameterSpace<T>,
    coeffs: Vec<T>,
    fit_info: Option<FitInfo<T>>,
}

impl<T: Real> Surrogate<T> {
    /// Surrogate with explicit coefficients and no fit history.
    pub fn from_coefficients(
        basis: BasisSet<T>,
        space: ParameterSpace<T>,
        coeffs: Vec<T>,
    ) -> Result<Self> {
        Self::assemble(basis, space, coeffs, None)
    }

    fn assemble(
        basis: BasisSet<T>,
        space: ParameterSpace<T>,
        coeffs: Vec<T>,
        fit_info: Option<FitInfo<T>>,
    ) -> Result<Self> {
        space.validate()?;
        check_compatible(&basis, &space)?;
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {bad}")));
        }
        Ok(Self {
            basis,
            space,
            coeffs,
            fit_info,
        })
    }

    pub fn basis(&self) -> &BasisSet<T> {
        &self.basis
    }

    pub fn space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn fit_info(&self) -> Option<&FitInfo<T>> {
        self.fit_info.as_ref()
    }

    /// Mean of the surrogate under the input distribution.
    pub fn mean(&self) -> T {
        self.coeffs[0]
    }

    /// Same basis, coefficients replaced.
    pub fn with_coefficients(&self, coeffs: Vec<T>) -> Result<Self> {
        Self::from_coefficients(self.basis.clone(), self.space.clone(), coeffs)
    }

    pub fn predict(&self, xi_phys: &[T]) -> Result<T> {
        let t = self.space.standardize(xi_phys)?;
        let psi = self.basis.eval(&t)?;
        Ok(linalg::dot(&psi, &self.coeffs))
    }

    /// Predictions at every sample row.
    pub fn predict_samples(&self, samples: &SampleMatrix<T>) -> Result<Vec<T>> {
        let design = design_matrix(&self.basis, &self.space, samples)?;
        Ok(design.mul_vec(&self.coeffs))
    }

    pub fn to_document(&self, config_digest: Option<&str>) -> SurrogateDocument<T> {
        SurrogateDocument {
            format: SURROGATE_FORMAT.to_string(),
            version: SURROGATE_VERSION,
            config_digest: config_digest.map(str::to_string),
            space: self.space.clone(),
            basis: self.basis.clone(),
            coeffs: self.coeffs.clone(),
            fit_info: self.fit_info.clone(),
        }
    }

    pub fn to_json(&self, config_digest: Option<&str>) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_document(config_digest))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<String>)> {
        let doc: SurrogateDocument<T> = serde_json::from_str(text)?;
        doc.into_surrogate()
    }

    pub fn read(path: &Path) -> Result<(Self, Option<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub const SURROGATE_FORMAT: &str = "gpc-sense-surrogate";
pub const SURROGATE_VERSION: u32 = 1;

/// On-disk layout of a surrogate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SurrogateDocument<T> {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub space: ParameterSpace<T>,
    pub basis: BasisSet<T>,
    pub coeffs: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_info: Option<FitInfo<T>>,
}

impl<T: Real> SurrogateDocument<T> {
    pub fn into_surrogate(self) -> Result<(Surrogate<T>, Option<String>)> {
        if self.format != SURROGATE_FORMAT || self.version != SURROGATE_VERSION {
            return Err(Error::invalid(format!(
                "unsupported surrogate document {} v{}",
                self.format, self.version
            )));
        }
        self.basis.validate()?;
        let s = Surrogate::assemble(self.basis, self.space, self.coeffs, self.fit_info)?;
        Ok((s, self.config_digest))
    }
}

impl<T: Real> BasisSet<T> {
    /// Checks the structural invariants of a deserialized basis.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = BasisSet::from_indices(self.params_per_dim().to_vec(), self.indices().to_vec())?;
        if rebuilt.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: rebuilt.dimension(),
            });
        }
        if let Some(bad) = self
            .indices()
            .iter()
            .find(|a| !self.truncation().admits(a))
        {
            return Err(Error::invalid(format!(
                "multi-index {bad} violates the recorded truncation"
            )));
        }
        Ok(())
    }
}

fn check_compatible<T: Real>(basis: &BasisSet<T>, space: &ParameterSpace<T>) -> Result<()> {
    if basis.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: basis.dimension(),
        });
    }
    Ok(())
}

/// Rows are the basis evaluated at each standardized sample; column 0 is ones.
pub fn design_matrix<T: Real>(
    basis: &BasisSet<T>,
    space: &ParameterSpace<T>,
    samples: &SampleMatrix<T>,
) -> Result<Matrix<T>> {
    check_compatible(basis, space)?;
    if samples.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: samples.dimension(),
        });
    }
    let mut evaluator = basis.evaluator();
    let mut out = Matrix::zeros(samples.n(), basis.len());
    let mut psi = Vec::with_capacity(basis.len());
    for (i, row) in samples.rows().enumerate() {
        let t = space.standardize(row)?;
        evaluator.eval_into(&t, &mut psi)?;
        out.row_mut(i).copy_from_slice(&psi);
    }
    Ok(out)
}

fn solve<T: Real>(design: &Matrix<T>, y: &[T]) -> Result<linalg::LstsqSolution<T>> {
    let rcond = default_rcond::<T>(design.rows(), design.cols());
    let sol = linalg::pinv_solve(design, y, rcond)?;
    if let Some(bad) = sol.x.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("fitted coefficient {bad}")));
    }
    Ok(sol)
}

/// Least squares coefficients through the SVD pseudoinverse of the design matrix.
///
/// `y` must already be on the fitting scale (logit applied by the caller for
/// probability outputs). With at least [`HOLDOUT_MIN_SAMPLES`] rows, a second
/// fit on a seeded 90% split records the error on the remaining 10%.
pub fn fit<T: Real>(
    basis: &BasisSet<T>,
    space: &ParameterSpace<T>,
    samples: &SampleMatrix<T>,
    y: &[T],
) -> Result<Surrogate<T>> {
    let n = samples.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target {bad}")));
    }
    let design = design_matrix(basis, space, samples)?;
    let sol = solve(&design, y)?;

    let holdout_nrmsd = if n >= HOLDOUT_MIN_SAMPLES {
        holdout_error(&design, y, space.seed)?
    } else {
        None
    };

    let mut surrogate = Surrogate::assemble(basis.clone(), space.clone(), sol.x, None)?;
    let in_sample = match nrmsd(&surrogate, samples, y) {
        Ok(v) => Some(v),
        Err(Error::ZeroReference) => None,
        Err(e) => return Err(e),
    };
    surrogate.fit_info = Some(FitInfo {
        n_samples: n,
        in_sample_nrmsd: in_sample,
        holdout_nrmsd,
        svd_cutoff: sol.cutoff,
        rank: sol.rank,
        seed: space.seed,
    });
    Ok(surrogate)
}

fn holdout_error<T: Real>(design: &Matrix<T>, y: &[T], seed: u64) -> Result<Option<T>> {
    let n = design.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(HOLDOUT_STREAM);
    order.shuffle(&mut rng);
    let n_hold = (n / 10).max(1);
    let (held, train) = order.split_at(n_hold);

    let pick = |rows: &[usize]| -> Result<(Matrix<T>, Vec<T>)> {
        let data = rows.iter().flat_map(|&i| design.row(i).iter().copied()).collect();
        let m = Matrix::from_row_major(rows.len(), design.cols(), data)?;
        Ok((m, rows.iter().map(|&i| y[i]).collect()))
    };
    let (train_m, train_y) = pick(train)?;
    let (held_m, held_y) = pick(held)?;
    let coeffs = match solve(&train_m, &train_y) {
        Ok(sol) => sol.x,
        Err(Error::ZeroDesign) => return Ok(None),
        Err(e) => return Err(e),
    };
    let predicted = held_m.mul_vec(&coeffs);
    match relative_rms(&held_y, &predicted) {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroReference) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Prediction at a physical point.
pub fn predict<T: Real>(s: &Surrogate<T>, xi_phys: &[T]) -> Result<T> {
    s.predict(xi_phys)
}

/// RMS of the residuals over RMS of the reference values.
pub fn relative_rms<T: Real>(reference: &[T], predicted: &[T]) -> Result<T> {
    if reference.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: predicted.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::invalid("relative error needs at least one value"));
    }
    let sq_ref: T = reference.iter().map(|&v| v * v).sum();
    if sq_ref == T::zero() {
        return Err(Error::ZeroReference);
    }
    let sq_err: T = reference
        .iter()
        .zip(predicted)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    // the 1/n factors cancel
    Ok((sq_err / sq_ref).sqrt())
}

/// Normalized RMS deviation of the surrogate from `y` over the sample rows.
pub fn nrmsd<T: Real>(s: &Surrogate<T>, samples: &SampleMatrix<T>, y: &[T]) -> Result<T> {
    if y.len() != samples.n() {
        return Err(Error::DimensionMismatch {
            expected: samples.n(),
            got: y.len(),
        });
    }
    let predicted = s.predict_samples(samples)?;
    relative_rms(y, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, JacobiParams, Truncation};
    use crate::randomspace::{sample, RandomParameter};

    fn space(d: usize, seed: u64) -> ParameterSpace<f64> {
        let params = (0..d)
            .map(|i| RandomParameter::uniform(format!("x{i}"), -1.0 - i as f64, 2.0 + i as f64).unwrap())
            .collect();
        ParameterSpace::new(params, seed).unwrap()
    }

    #[test]
    fn logit_examples() {
        let link = LinkSpec::default();
        assert_eq!(logit(0.5, &link).unwrap(), 0.0);
        assert!((logit(0.731_058_6f64, &link).unwrap() - 1.0).abs() < 1e-6);
        let top = logit(1.0, &link).unwrap();
        assert!((top - 999_999f64.ln()).abs() < 1e-12);
        assert!((top - 13.8155).abs() < 1e-4);
        assert!(logit(1.2, &link).is_err());
        assert!(logit(f64::NAN, &link).is_err());
        assert!(logit(0.5, &LinkSpec::logit(0.0)).is_err());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        let hi = logistic(1000.0f64);
        assert!(hi > 0.0 && hi <= 1.0);
        let lo = logistic(-1000.0f64);
        assert!((0.0..1.0).contains(&lo) && lo.is_finite());
    }

    #[test]
    fn constant_targets_project_onto_mean() {
        let s = space(2, 3);
        let basis = build_basis(2, s.jacobi_params(), Truncation::total(3)).unwrap();
        let samples = sample(&s, 40).unwrap();
        let y = vec![3.7; 40];
        let fitted = fit(&basis, &s, &samples, &y).unwrap();
        assert!((fitted.coeffs()[0] - 3.7).abs() < 1e-10);
        assert!(fitted.coeffs()[1..].iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn underdetermined_is_finite() {
        let s = space(3, 1);
        let basis = build_basis(3, s.jacobi_params(), Truncation::total(3)).unwrap();
        let samples = sample(&s, 5).unwrap();
        let y = vec![1.0, -2.0, 0.5, 4.0, 0.0];
        let fitted = fit(&basis, &s, &samples, &y).unwrap();
        assert!(fitted.coeffs().iter().all(|c| c.is_finite()));
        assert!(fitted.fit_info().unwrap().in_sample_nrmsd.unwrap() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        let s = space(1, 0);
        let basis = build_basis(1, s.jacobi_params(), Truncation::total(1)).unwrap();
        let samples = sample(&s, 3).unwrap();
        assert!(matches!(
            fit(&basis, &s, &samples, &[1.0, f64::INFINITY, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(fit(&basis, &s, &samples, &[1.0]).is_err());
    }

    #[test]
    fn constant_surrogate_predicts_constant() {
        let s = space(2, 0);
        let basis = build_basis(2, s.jacobi_params(), Truncation::total(2)).unwrap();
        let mut c = vec![0.0; basis.len()];
        c[0] = 2.5;
        let sur = Surrogate::from_coefficients(basis, s, c).unwrap();
        assert_eq!(sur.predict(&[0.3, 1.7]).unwrap(), 2.5);
        assert!(matches!(
            sur.predict(&[5.0, 0.0]),
            Err(Error::OutOfLimits { .. })
        ));
    }

    #[test]
    fn design_matrix_examples() {
        let s = ParameterSpace::new(vec![RandomParameter::uniform("a", 0.0, 2.0).unwrap()], 0).unwrap();
        let basis = build_basis(1, vec![JacobiParams::legendre()], Truncation::total(2)).unwrap();
        let samples = SampleMatrix::from_rows(s.clone(), &[vec![2.0], vec![1.0]]).unwrap();
        let m = design_matrix(&basis, &s, &samples).unwrap();
        assert!((m.get(0, 1) - 3f64.sqrt()).abs() < 1e-14);
        assert!((m.get(0, 2) - 5f64.sqrt()).abs() < 1e-13);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn nrmsd_examples() {
        assert_eq!(relative_rms(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_rms(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        let y = [0.5, -1.0, 3.0];
        let yhat: Vec<f64> = y.iter().map(|v| 1.1 * v).collect();
        assert!((relative_rms(&y, &yhat).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            relative_rms(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn holdout_recorded_for_larger_designs() {
        let s = space(2, 9);
        let basis = build_basis(2, s.jacobi_params(), Truncation::total(2)).unwrap();
        let samples = sample(&s, 60).unwrap();
        let y: Vec<f64> = samples.rows().map(|r| r[0] * r[1] + r[0]).collect();
        let fitted = fit(&basis, &s, &samples, &y).unwrap();
        let info = fitted.fit_info().unwrap();
        assert!(info.holdout_nrmsd.unwrap() < 1e-10);
        let small = fit(&basis, &s, &samples.select(&(0..20).collect::<Vec<_>>()).unwrap(), &y[..20]).unwrap();
        assert!(small.fit_info().unwrap().holdout_nrmsd.is_none());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let s = space(2, 4);
        let basis = build_basis(2, s.jacobi_params(), Truncation::total(3)).unwrap();
        let samples = sample(&s, 30).unwrap();
        let y: Vec<f64> = samples.rows().map(|r| (r[0]).sin() + r[1].exp()).collect();
        let fitted = fit(&basis, &s, &samples, &y).unwrap();
        let text = fitted.to_json(Some("abc")).unwrap();
        let (back, digest) = Surrogate::<f64>::from_json(&text).unwrap();
        assert_eq!(digest.as_deref(), Some("abc"));
        assert_eq!(back, fitted);
        for row in samples.rows() {
            assert_eq!(back.predict(row).unwrap().to_bits(), fitted.predict(row).unwrap().to_bits());
        }
    }
}
