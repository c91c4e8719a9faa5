mod common;

use common::{anova_2d, gauss_jacobi};
use gpc_sense::basis::{build_basis, JacobiParams, Truncation};
use gpc_sense::randomspace::{sample, ParameterSpace, RandomParameter, SampleMatrix};
use gpc_sense::sobol::{compute_sobol, validate_report};
use gpc_sense::surrogate::{fit, nrmsd, Surrogate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space3(seed: u64) -> ParameterSpace<f64> {
    ParameterSpace::new(
        vec![
            RandomParameter::uniform("a", 0.0, 2.0).unwrap(),
            RandomParameter::beta("b", 2.0, 3.0, -10.0, 10.0).unwrap(),
            RandomParameter::uniform("c", -5.0, 15.0).unwrap(),
        ],
        seed,
    )
    .unwrap()
}

fn random_surrogate(space: ParameterSpace<f64>, order: usize, seed: u64) -> Surrogate<f64> {
    let basis = build_basis(space.dimension(), space.jacobi_params(), Truncation::total(order)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Surrogate::from_coefficients(basis, space, c).unwrap()
}

#[test]
fn refit_recovers_random_polynomial() {
    let truth = random_surrogate(space3(3), 4, 99);
    let n = 2 * truth.basis().len();
    let samples = sample(truth.space(), n).unwrap();
    let y = truth.predict_samples(&samples).unwrap();
    let refit = fit(truth.basis(), truth.space(), &samples, &y).unwrap();
    for (a, b) in refit.coeffs().iter().zip(truth.coeffs()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(nrmsd(&refit, &samples, &y).unwrap() <= 1e-10);
    let report = compute_sobol(&refit).unwrap();
    assert!((report.index_sum() - 1.0).abs() < 1e-9);
}

#[test]
fn indices_match_tensor_anova() {
    let space = ParameterSpace::new(
        vec![
            RandomParameter::beta("u", 2.0, 3.0, -1.0, 4.0).unwrap(),
            RandomParameter::uniform("v", 10.0, 12.0).unwrap(),
        ],
        0,
    )
    .unwrap();
    let s = random_surrogate(space.clone(), 3, 7);
    let report = compute_sobol(&s).unwrap();

    // quadrature in the standardized variable, mapped back to physical units
    let jp = space.jacobi_params();
    let to_phys = |rule: (Vec<f64>, Vec<f64>), p: &RandomParameter<f64>| {
        let (t, w) = rule;
        (t.iter().map(|&t| p.destandardize(t)).collect::<Vec<_>>(), w)
    };
    let rx = to_phys(gauss_jacobi(12, jp[0].alpha, jp[0].beta), &space.parameters[0]);
    let ry = to_phys(gauss_jacobi(12, jp[1].alpha, jp[1].beta), &space.parameters[1]);
    let (v, d1, d2, d12) = anova_2d(|x, y| s.predict(&[x, y]).unwrap(), &rx, &ry);

    assert!((report.total_variance - v).abs() < 1e-8 * v.max(1.0));
    assert!((report.index_of(&[0]) - d1 / v).abs() < 1e-8);
    assert!((report.index_of(&[1]) - d2 / v).abs() < 1e-8);
    assert!((report.index_of(&[0, 1]) - d12 / v).abs() < 1e-8);
    assert!(validate_report(&report, 1e-9));
}

#[test]
fn single_precision_fit_recovers_line() {
    let space = ParameterSpace::<f32>::new(vec![RandomParameter::uniform("x", -1.0, 1.0).unwrap()], 1).unwrap();
    let basis = build_basis(1, vec![JacobiParams::<f32>::legendre()], Truncation::total(2)).unwrap();
    let samples = sample(&space, 40).unwrap();
    let y: Vec<f32> = samples.rows().map(|r| 0.5 + 2.0 * r[0]).collect();
    let s = fit(&basis, &space, &samples, &y).unwrap();
    assert!((s.coeffs()[0] - 0.5).abs() < 1e-4);
    assert!((s.coeffs()[1] - 2.0 / 3f32.sqrt()).abs() < 1e-4);
    assert!(s.coeffs()[2].abs() < 1e-4);
}

fn fixed_design() -> (Surrogate<f64>, SampleMatrix<f64>) {
    let truth = random_surrogate(space3(8), 2, 1);
    let samples = sample(truth.space(), 60).unwrap();
    (truth, samples)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_ignores_row_order(seed in any::<u64>()) {
        let (truth, samples) = fixed_design();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = samples.rows().map(|r| r[0].sin() + r[1] * r[2] / 50.0 + rng.random_range(-0.1..0.1)).collect();
        let mut perm: Vec<usize> = (0..samples.n()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let shuffled = samples.select(&perm).unwrap();
        let y_shuffled: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let a = fit(truth.basis(), truth.space(), &samples, &y).unwrap();
        let b = fit(truth.basis(), truth.space(), &shuffled, &y_shuffled).unwrap();
        for (x, z) in a.coeffs().iter().zip(b.coeffs()) {
            prop_assert!((x - z).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_is_linear_in_targets(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let (truth, samples) = fixed_design();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y1: Vec<f64> = (0..samples.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..samples.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + alpha * b).collect();
        let f1 = fit(truth.basis(), truth.space(), &samples, &y1).unwrap();
        let f2 = fit(truth.basis(), truth.space(), &samples, &y2).unwrap();
        let fc = fit(truth.basis(), truth.space(), &samples, &combo).unwrap();
        for i in 0..fc.coeffs().len() {
            let expected = f1.coeffs()[i] + alpha * f2.coeffs()[i];
            prop_assert!((fc.coeffs()[i] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sobol_ignores_scale_and_offset(seed in any::<u64>(), scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], shift in -100.0f64..100.0) {
        let s = random_surrogate(space3(0), 3, seed);
        let mut c = s.coeffs().to_vec();
        for v in c.iter_mut() {
            *v *= scale;
        }
        c[0] += shift;
        let t = s.with_coefficients(c).unwrap();
        let (r1, r2) = (compute_sobol(&s).unwrap(), compute_sobol(&t).unwrap());
        prop_assert!((r1.index_sum() - 1.0).abs() < 1e-9);
        prop_assert!((r2.index_sum() - 1.0).abs() < 1e-9);
        for e in &r1.subsets {
            prop_assert!((e.index - r2.index_of(&e.subset)).abs() < 1e-12);
        }
    }
}
