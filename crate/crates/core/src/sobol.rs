//! Sobol indices of every interaction subset, read off the coefficients of
//! an orthonormal polynomial chaos expansion.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::surrogate::Surrogate;

/// Variance share of one subset of input variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEntry<T> {
    /// Zero-based variable positions, ascending.
    pub subset: Vec<usize>,
    /// Partial variance `D_tau`.
    #[serde(rename = "D_tau")]
    pub variance: T,
    /// Normalized index `S_tau = D_tau / V`.
    #[serde(rename = "S_tau")]
    pub index: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport<T> {
    pub names: Vec<String>,
    pub total_variance: T,
    /// Sorted by descending `S_tau`, ties broken by lexicographic subset.
    pub subsets: Vec<SobolEntry<T>>,
    /// For each variable, the sum of `S_tau` over every subset containing it.
    pub per_variable_total_order: Vec<T>,
}

impl<T: Real> SobolReport<T> {
    /// Report from externally supplied indices, e.g. published tables.
    /// The partial variances are taken relative to a unit total variance.
    pub fn from_indices(names: Vec<String>, indices: Vec<(Vec<usize>, T)>) -> Result<Self> {
        let d = names.len();
        let mut subsets = Vec::with_capacity(indices.len());
        for (mut subset, s) in indices {
            subset.sort_unstable();
            subset.dedup();
            if subset.is_empty() || subset.iter().any(|&i| i >= d) {
                return Err(Error::invalid(format!("invalid subset {subset:?} for {d} variables")));
            }
            subsets.push(SobolEntry {
                subset,
                variance: s,
                index: s,
            });
        }
        Self::assemble(names, T::one(), subsets)
    }

    fn assemble(names: Vec<String>, total_variance: T, mut subsets: Vec<SobolEntry<T>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if !subsets.iter().all(|e| seen.insert(e.subset.clone())) {
            return Err(Error::invalid("duplicate subset in Sobol report"));
        }
        subsets.sort_by(|a, b| {
            b.index
                .partial_cmp(&a.index)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.subset.cmp(&b.subset))
        });
        let per_variable_total_order = (0..names.len())
            .map(|i| {
                subsets
                    .iter()
                    .filter(|e| e.subset.contains(&i))
                    .map(|e| e.index)
                    .sum()
            })
            .collect();
        Ok(Self {
            names,
            total_variance,
            subsets,
            per_variable_total_order,
        })
    }

    /// Entry for the given subset of variable positions, in any order.
    pub fn get(&self, subset: &[usize]) -> Option<&SobolEntry<T>> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        self.subsets.iter().find(|e| e.subset == key)
    }

    /// `S_tau` for a subset, zero when the subset is not realizable.
    pub fn index_of(&self, subset: &[usize]) -> T {
        self.get(subset).map_or(T::zero(), |e| e.index)
    }

    pub fn first_order(&self) -> Vec<T> {
        (0..self.names.len()).map(|i| self.index_of(&[i])).collect()
    }

    pub fn index_sum(&self) -> T {
        self.subsets.iter().map(|e| e.index).sum()
    }

    pub fn subset_label(&self, subset: &[usize]) -> String {
        subset
            .iter()
            .map(|&i| self.names[i].as_str())
            .collect::<Vec<_>>()
            .join(":")
    }

    /// CSV with columns `subset,D_tau,S_tau`; subsets are variable names
    /// joined by `:`.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("subset,D_tau,S_tau\n");
        for e in &self.subsets {
            let _ = writeln!(out, "{},{},{}", self.subset_label(&e.subset), e.variance, e.index);
        }
        out
    }

    pub fn to_json(&self, config_digest: Option<&str>) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a, T> {
            subset: &'a [usize],
            label: String,
            #[serde(rename = "D_tau")]
            variance: T,
            #[serde(rename = "S_tau")]
            index: T,
        }
        #[derive(Serialize)]
        struct Doc<'a, T> {
            #[serde(skip_serializing_if = "Option::is_none")]
            config_digest: Option<&'a str>,
            names: &'a [String],
            total_variance: T,
            index_sum: T,
            subsets: Vec<Entry<'a, T>>,
            per_variable_total_order: BTreeMap<&'a str, T>,
        }
        let doc = Doc {
            config_digest,
            names: &self.names,
            total_variance: self.total_variance,
            index_sum: self.index_sum(),
            subsets: self
                .subsets
                .iter()
                .map(|e| Entry {
                    subset: &e.subset,
                    label: self.subset_label(&e.subset),
                    variance: e.variance,
                    index: e.index,
                })
                .collect(),
            per_variable_total_order: self
                .names
                .iter()
                .map(String::as_str)
                .zip(self.per_variable_total_order.iter().copied())
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }
}

/// Variance decomposition of an orthonormal expansion.
///
/// `V = sum_{a != 0} c_a^2`, and `D_tau` collects `c_a^2` over the indices
/// whose non-zero orders are exactly the variables in `tau`. The squared mean
/// `c_0^2` is excluded from the denominator. Every subset realizable under the
/// basis truncation is listed, including those with zero variance.
pub fn compute_sobol<T: Real>(s: &Surrogate<T>) -> Result<SobolReport<T>> {
    let mut partial: BTreeMap<Vec<usize>, T> = BTreeMap::new();
    for (alpha, &c) in s.basis().indices().iter().zip(s.coeffs()) {
        if alpha.is_zero() {
            continue;
        }
        let entry = partial.entry(alpha.support()).or_insert_with(T::zero);
        *entry = *entry + c * c;
    }
    let total: T = partial.values().copied().sum();
    if partial.is_empty() || total == T::zero() {
        return Err(Error::DegenerateVariance);
    }
    let subsets = partial
        .into_iter()
        .map(|(subset, variance)| SobolEntry {
            subset,
            variance,
            index: variance / total,
        })
        .collect();
    let names = s.space().names().into_iter().map(str::to_string).collect();
    SobolReport::assemble(names, total, subsets)
}

/// True when the indices sum to one within `tol` and each lies in `[-tol, 1 + tol]`.
pub fn validate_report<T: Real>(r: &SobolReport<T>, tol: T) -> bool {
    let sum = r.index_sum();
    let sum_ok = (sum - T::one()).abs() <= tol;
    let each_ok = r
        .subsets
        .iter()
        .all(|e| e.index >= -tol && e.index <= T::one() + tol);
    sum_ok && each_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, BasisSet, JacobiParams, MultiIndex, Truncation};
    use crate::randomspace::{ParameterSpace, RandomParameter};

    fn space2() -> ParameterSpace<f64> {
        ParameterSpace::new(
            vec![
                RandomParameter::uniform("a", -1.0, 1.0).unwrap(),
                RandomParameter::uniform("b", 0.0, 4.0).unwrap(),
            ],
            0,
        )
        .unwrap()
    }

    fn hand_surrogate() -> Surrogate<f64> {
        let basis = BasisSet::from_indices(
            vec![JacobiParams::legendre(); 2],
            vec![
                MultiIndex(vec![0, 0]),
                MultiIndex(vec![1, 0]),
                MultiIndex(vec![0, 1]),
                MultiIndex(vec![1, 1]),
            ],
        )
        .unwrap();
        Surrogate::from_coefficients(basis, space2(), vec![5.0, 2.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn hand_coefficients() {
        let r = compute_sobol(&hand_surrogate()).unwrap();
        assert!((r.index_of(&[0]) - 4.0 / 6.0).abs() < 1e-15);
        assert!((r.index_of(&[1]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.index_of(&[0, 1]) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.total_variance, 6.0);
        // descending, ties lexicographic: [0], [0,1], [1]
        let order: Vec<Vec<usize>> = r.subsets.iter().map(|e| e.subset.clone()).collect();
        assert_eq!(order, vec![vec![0], vec![0, 1], vec![1]]);
        assert!((r.per_variable_total_order[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!(validate_report(&r, 1e-9));
    }

    #[test]
    fn single_variable_dependence() {
        let basis = build_basis(2, vec![JacobiParams::legendre(); 2], Truncation::total(2)).unwrap();
        let mut c = vec![0.0; basis.len()];
        c[0] = 1.0;
        c[1] = 0.5; // (1,0)
        c[3] = -0.2; // (2,0)
        let s = Surrogate::from_coefficients(basis, space2(), c).unwrap();
        let r = compute_sobol(&s).unwrap();
        assert_eq!(r.index_of(&[0]), 1.0);
        assert_eq!(r.index_of(&[1]), 0.0);
        assert_eq!(r.index_of(&[0, 1]), 0.0);
        // zero-variance subsets are still listed
        assert_eq!(r.subsets.len(), 3);
    }

    #[test]
    fn constant_surrogate_is_degenerate() {
        let basis = build_basis(2, vec![JacobiParams::legendre(); 2], Truncation::total(1)).unwrap();
        let s = Surrogate::from_coefficients(basis, space2(), vec![3.0, 0.0, 0.0]).unwrap();
        assert!(matches!(compute_sobol(&s), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn published_table_validates() {
        let names = vec!["brightness".into(), "rotation".into(), "tilt".into()];
        let r = SobolReport::from_indices(
            names,
            vec![
                (vec![0], 0.171),
                (vec![0, 1], 0.03),
                (vec![0, 2], 0.162),
                (vec![1], 0.11),
                (vec![1, 2], 0.096),
                (vec![2], 0.37),
                (vec![0, 1, 2], 0.061),
            ],
        )
        .unwrap();
        assert!(validate_report(&r, 1e-3));
        assert_eq!(r.subsets[0].subset, vec![2]);
    }

    #[test]
    fn invalid_hand_report() {
        let r = SobolReport::from_indices(vec!["a".into(), "b".into()], vec![(vec![0], 0.5), (vec![1], 0.6)])
            .unwrap();
        assert!(!validate_report(&r, 1e-9));
        assert!(SobolReport::from_indices(vec!["a".into()], vec![(vec![1], 1.0)]).is_err());
        assert!(
            SobolReport::from_indices(vec!["a".into()], vec![(vec![0], 0.5), (vec![0], 0.5)]).is_err()
        );
    }

    #[test]
    fn csv_layout() {
        let r = compute_sobol(&hand_surrogate()).unwrap();
        let csv = r.to_csv(&[]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("subset,D_tau,S_tau"));
        assert!(lines.next().unwrap().starts_with("a,4,0.666"));
        let json = r.to_json(Some("d1")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["config_digest"], "d1");
        assert_eq!(v["subsets"][1]["label"], "a:b");
    }
}
