//! Analytic test functions with closed-form Sobol indices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, Truncation};
use crate::error::{Error, Result};
use crate::randomspace::{sample, ParameterSpace, RandomParameter};
use crate::sobol::{compute_sobol, SobolReport};
use crate::surrogate::{fit, Surrogate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ishigami {
    pub a: f64,
    pub b: f64,
}

impl Default for Ishigami {
    fn default() -> Self {
        Self { a: 7.0, b: 0.1 }
    }
}

impl Ishigami {
    /// `sin x1 + a sin^2 x2 + b x3^4 sin x1`
    pub fn eval(&self, x: &[f64]) -> f64 {
        x[0].sin() + self.a * x[1].sin().powi(2) + self.b * x[2].powi(4) * x[0].sin()
    }

    pub fn space(&self, seed: u64) -> Result<ParameterSpace<f64>> {
        let params = (1..=3)
            .map(|i| RandomParameter::uniform(format!("x{i}"), -PI, PI))
            .collect::<Result<Vec<_>>>()?;
        ParameterSpace::new(params, seed)
    }

    /// Partial variances of every non-empty subset of the three inputs.
    pub fn analytic(&self) -> AnalyticIndices {
        let (a, b) = (self.a, self.b);
        let pi4 = PI.powi(4);
        let pi8 = PI.powi(8);
        let v1 = b * pi4 / 5.0 + b * b * pi8 / 50.0 + 0.5;
        let v2 = a * a / 8.0;
        let v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
        let total = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
        AnalyticIndices::new(
            3,
            total,
            vec![(vec![0], v1), (vec![1], v2), (vec![0, 2], v13)],
        )
    }
}

/// Sobol' g-function on `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    pub a: Vec<f64>,
}

impl Default for GFunction {
    fn default() -> Self {
        Self {
            a: vec![0.0, 1.0, 4.5, 9.0],
        }
    }
}

impl GFunction {
    /// `prod_i (|4 x_i - 2| + a_i) / (1 + a_i)`
    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.a)
            .map(|(&xi, &ai)| ((4.0 * xi - 2.0).abs() + ai) / (1.0 + ai))
            .product()
    }

    pub fn space(&self, seed: u64) -> Result<ParameterSpace<f64>> {
        let params = (1..=self.a.len())
            .map(|i| RandomParameter::uniform(format!("x{i}"), 0.0, 1.0))
            .collect::<Result<Vec<_>>>()?;
        ParameterSpace::new(params, seed)
    }

    pub fn analytic(&self) -> AnalyticIndices {
        let d = self.a.len();
        let vi: Vec<f64> = self.a.iter().map(|ai| (1.0 / 3.0) / (1.0 + ai).powi(2)).collect();
        let total = vi.iter().map(|v| 1.0 + v).product::<f64>() - 1.0;
        let partial = (1..(1usize << d))
            .map(|mask| {
                let subset: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
                let v = subset.iter().map(|&i| vi[i]).product();
                (subset, v)
            })
            .collect();
        AnalyticIndices::new(d, total, partial)
    }
}

/// Closed-form variance decomposition of a test function.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticIndices {
    pub dimension: usize,
    pub total_variance: f64,
    /// Non-zero partial variances; subsets not listed have zero variance.
    pub partial_variances: Vec<(Vec<usize>, f64)>,
}

impl AnalyticIndices {
    fn new(dimension: usize, total_variance: f64, partial_variances: Vec<(Vec<usize>, f64)>) -> Self {
        Self {
            dimension,
            total_variance,
            partial_variances,
        }
    }

    pub fn index(&self, subset: &[usize]) -> f64 {
        let mut key = subset.to_vec();
        key.sort_unstable();
        self.partial_variances
            .iter()
            .find(|(s, _)| *s == key)
            .map_or(0.0, |(_, v)| v / self.total_variance)
    }

    /// Every non-empty subset of the inputs, in size then lexicographic order.
    pub fn all_subsets(&self) -> Vec<Vec<usize>> {
        let d = self.dimension;
        let mut subsets: Vec<Vec<usize>> = (1..(1usize << d))
            .map(|mask| (0..d).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        subsets.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        subsets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Ishigami,
    Gfunction,
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ishigami" => Ok(Self::Ishigami),
            "gfunction" | "g-function" | "g" => Ok(Self::Gfunction),
            other => Err(Error::invalid(format!("unknown benchmark `{other}`"))),
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ishigami => "ishigami",
            Self::Gfunction => "gfunction",
        })
    }
}

impl BenchmarkKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Self::Ishigami => Ishigami::default().eval(x),
            Self::Gfunction => GFunction::default().eval(x),
        }
    }

    pub fn space(self, seed: u64) -> Result<ParameterSpace<f64>> {
        match self {
            Self::Ishigami => Ishigami::default().space(seed),
            Self::Gfunction => GFunction::default().space(seed),
        }
    }

    pub fn analytic(self) -> AnalyticIndices {
        match self {
            Self::Ishigami => Ishigami::default().analytic(),
            Self::Gfunction => GFunction::default().analytic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub subset: Vec<usize>,
    pub label: String,
    pub estimated: f64,
    pub analytic: f64,
}

impl ComparisonRow {
    pub fn deviation(&self) -> f64 {
        (self.estimated - self.analytic).abs()
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub kind: BenchmarkKind,
    pub surrogate: Surrogate<f64>,
    pub report: SobolReport<f64>,
    pub rows: Vec<ComparisonRow>,
}

impl BenchmarkOutcome {
    pub fn row(&self, subset: &[usize]) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>12} {:>12} {:>12}\n",
            "subset", "estimated", "analytic", "abs_dev"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>12.6} {:>12.6} {:>12.2e}\n",
                r.label,
                r.estimated,
                r.analytic,
                r.deviation()
            ));
        }
        out
    }
}

/// Fits a total-order surrogate to the built-in function on an `n`-point
/// Latin hypercube and compares its Sobol indices with the closed form.
pub fn run_benchmark(kind: BenchmarkKind, n: usize, order: usize, seed: u64) -> Result<BenchmarkOutcome> {
    let space = kind.space(seed)?;
    let basis = build_basis(space.dimension(), space.jacobi_params(), Truncation::total(order))?;
    let samples = sample(&space, n)?;
    let y: Vec<f64> = samples.rows().map(|x| kind.eval(x)).collect();
    let surrogate = fit(&basis, &space, &samples, &y)?;
    let report = compute_sobol(&surrogate)?;
    let analytic = kind.analytic();
    let rows = analytic
        .all_subsets()
        .into_iter()
        .map(|subset| ComparisonRow {
            label: report.subset_label(&subset),
            estimated: report.index_of(&subset),
            analytic: analytic.index(&subset),
            subset,
        })
        .collect();
    Ok(BenchmarkOutcome {
        kind,
        surrogate,
        report,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ishigami_values() {
        let f = Ishigami::default();
        assert_eq!(f.eval(&[0.0, 0.0, 0.0]), 0.0);
        let x = [0.3, -1.2, 2.0];
        let direct = 0.3f64.sin() + 7.0 * (-1.2f64).sin().powi(2) + 0.1 * 16.0 * 0.3f64.sin();
        assert!((f.eval(&x) - direct).abs() < 1e-14);
    }

    #[test]
    fn ishigami_indices_sum_to_one() {
        let a = Ishigami::default().analytic();
        let sum: f64 = a.partial_variances.iter().map(|(_, v)| v).sum();
        assert!((sum - a.total_variance).abs() < 1e-12);
        assert!((a.index(&[1]) - 0.4424).abs() < 1e-4);
        assert_eq!(a.index(&[2]), 0.0);
    }

    #[test]
    fn gfunction_indices_sum_to_one() {
        let a = GFunction::default().analytic();
        let sum: f64 = a.partial_variances.iter().map(|(_, v)| v).sum();
        assert!((sum - a.total_variance).abs() < 1e-12);
        assert_eq!(a.all_subsets().len(), 15);
        assert_eq!(GFunction::default().eval(&[0.5, 0.5, 0.5, 0.5]), 0.0);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("Ishigami".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Ishigami);
        assert_eq!("gfunction".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Gfunction);
        assert!("rosenbrock".parse::<BenchmarkKind>().is_err());
    }
}
