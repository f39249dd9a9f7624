use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_core::data::{ColumnRole, Dataset};
use riesz_core::estimands::HTransform;
use riesz_core::learners::{Basis, ColumnRegressor, Family, FittedLearner, LearnerConfig, LearnerSpec, Regressor};
use riesz_core::linalg::least_squares_qr;
use riesz_core::math::{expit, logit, mean};
use riesz_core::riesz::{
    cumulative_weights, plugin_indicator, plugin_mediation_ratio, plugin_two_phase, riesz_coefficients,
    riesz_loss, riesz_regression, RepresenterKind, SamplingModel,
};
use riesz_core::sim::{draw_mediation, draw_single_timepoint, SingleTimepointCoefs};

fn constant_model(cov: &str, p: f64) -> ColumnRegressor {
    ColumnRegressor {
        covariates: vec![cov.to_string()],
        regressor: Regressor::Single(FittedLearner::from_coefficients(
            Family::Binomial,
            Basis::Intercept,
            vec![logit(p)],
            None,
        )),
    }
}

fn binary_la(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() < 0.4) as u8 as f64).collect();
    let a: Vec<f64> = l
        .iter()
        .map(|l| (rng.random::<f64>() < 0.3 + 0.4 * l) as u8 as f64)
        .collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    Dataset::from_columns(vec![
        ("L", ColumnRole::Baseline, l),
        ("A", ColumnRole::Treatment(1), a),
        ("Y", ColumnRole::Outcome, y),
    ])
    .unwrap()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn at_one() -> HTransform {
    HTransform::EvaluateAt(vec![("A".into(), 1.0)])
}

#[test]
fn saturated_riesz_regression_recovers_the_empirical_weights() {
    let data = binary_la(11, 400);
    let cols = names(&["A", "L"]);
    let alpha = riesz_regression(&data, &cols, Basis::Interactions, &at_one(), 1).unwrap();
    let values = alpha.evaluate(&data).unwrap().0;
    let (a, l) = (data.values("A").unwrap(), data.values("L").unwrap());
    for cell in [0.0, 1.0] {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| l[i] == cell).collect();
        let g = rows.iter().map(|&i| a[i]).sum::<f64>() / rows.len() as f64;
        for &i in &rows {
            let expected = a[i] / g;
            assert!((values[i] - expected).abs() <= 1e-8, "{} vs {expected}", values[i]);
        }
    }

    // Riesz identity on every basis element: P_n[α b_j] = P_n[b_j(A = 1, L)].
    let b = Basis::Interactions.expand(&data.design(&cols).unwrap());
    let hb = Basis::Interactions.expand(&at_one().view(&data).unwrap().design(&cols).unwrap());
    for j in 0..b.ncols() {
        let lhs = mean(&(0..data.n()).map(|i| values[i] * b.get(i, j)).collect::<Vec<_>>());
        let rhs = mean(&hb.column(j));
        assert!((lhs - rhs).abs() <= 1e-8, "basis {j}: {lhs} vs {rhs}");
    }
}

#[test]
fn riesz_coefficients_are_first_order_optimal() {
    let data = draw_single_timepoint(800, 3).unwrap();
    let cols = names(&["A", "L1", "L2", "L3", "L4", "L5"]);
    let b = Basis::Interactions.expand(&data.design(&cols).unwrap());
    let hb = Basis::Interactions.expand(&at_one().view(&data).unwrap().design(&cols).unwrap());
    let (beta, _) = riesz_coefficients(&b, &hb).unwrap();
    let best = riesz_loss(&b, &hb, &beta);
    for j in 0..beta.len() {
        for eps in [1e-4, -1e-4] {
            let mut moved = beta.clone();
            moved[j] += eps;
            assert!(best <= riesz_loss(&b, &hb, &moved), "coordinate {j}");
        }
    }
}

/// Rich-basis fit next to the true `A/g(L)`, returning the relative L2
/// errors of the Riesz regression and of the oracle least-squares
/// projection of the truth onto the same basis.
fn rich_basis_errors(n: usize, seed: u64) -> (f64, f64) {
    let data = draw_single_timepoint(n, seed).unwrap();
    let cols = names(&["A", "L1", "L2", "L3", "L4", "L5"]);
    let alpha = riesz_regression(&data, &cols, Basis::Interactions, &at_one(), 1).unwrap();
    let fitted = alpha.evaluate(&data).unwrap().0;
    let coefs = SingleTimepointCoefs::default();
    let a = data.values("A").unwrap();
    let ls: Vec<&[f64]> = ["L1", "L2", "L3", "L4", "L5"]
        .iter()
        .map(|c| data.values(c).unwrap())
        .collect();
    let truth: Vec<f64> = (0..data.n())
        .map(|i| {
            let l = [ls[0][i], ls[1][i], ls[2][i], ls[3][i], ls[4][i]];
            a[i] / coefs.propensity(&l)
        })
        .collect();
    let b = Basis::Interactions.expand(&data.design(&cols).unwrap());
    let projection = b.mul_vec(&least_squares_qr(&b, &truth).unwrap());
    let norm = mean(&truth.iter().map(|t| t * t).collect::<Vec<_>>()).sqrt();
    let rel = |f: &[f64]| mean(&f.iter().zip(&truth).map(|(f, t)| (f - t).powi(2)).collect::<Vec<_>>()).sqrt() / norm;
    (rel(&fitted), rel(&projection))
}

#[test]
fn rich_basis_tracks_the_best_approximation_of_the_truth() {
    let (fitted, best) = rich_basis_errors(5000, 61);
    assert!(fitted <= best + 0.05, "riesz regression {fitted}, oracle projection {best}");
}

/// The pairwise basis cannot represent `1/g(L)` to within 25% in L2: even
/// the oracle projection of the truth misses by about 0.47 at this size
/// (0.35 at n = 200000), so this bound fails. Run with `--ignored`.
#[test]
#[ignore = "bound below the approximation error of the basis itself"]
fn rich_basis_approximates_the_true_inverse_propensity() {
    let (fitted, best) = rich_basis_errors(5000, 61);
    assert!(fitted <= 0.25, "relative L2 error {fitted} (oracle projection {best})");
}

#[test]
fn mediation_ratio_has_mean_one_given_treatment() {
    let data = draw_mediation(10_000, 8).unwrap();
    let m = data.values("M").unwrap().to_vec();
    let model = ColumnRegressor::fit(
        &LearnerConfig::single(LearnerSpec::GlmInteractions),
        &data,
        &names(&["A", "L"]),
        &m,
        Family::Binomial,
        None,
        None,
        None,
    )
    .unwrap();
    let alpha = plugin_mediation_ratio(model, "M", "A", 1.0, 1, 0.01);
    let values = alpha.evaluate(&data).unwrap().0;
    let a = data.values("A").unwrap();
    let treated_out: Vec<f64> = (0..data.n()).filter(|&i| a[i] == 0.0).map(|i| values[i]).collect();
    let k = treated_out.len() as f64;
    let mu = mean(&treated_out);
    let se = (treated_out.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt();
    assert!((mu - 1.0).abs() <= 3.0 * se, "mean {mu}, se {se}");
}

#[test]
fn case_control_cases_have_unit_weight() {
    let data = Dataset::from_columns(vec![
        ("L", ColumnRole::Baseline, vec![0.2, 0.4, -1.0]),
        ("Y", ColumnRole::Outcome, vec![1.0, 0.0, 0.0]),
        ("D", ColumnRole::SamplingIndicator, vec![1.0, 1.0, 0.0]),
    ])
    .unwrap();
    let sampling = SamplingModel::CaseControl {
        outcome: "Y".into(),
        controls: constant_model("L", 0.25),
    };
    let alpha = plugin_two_phase(sampling, "D", 0.01);
    let (v, _) = alpha.evaluate(&data).unwrap();
    assert_eq!(v, vec![1.0, 4.0, 0.0]);
}

#[test]
fn cumulative_weight_vanishes_off_the_regime() {
    // Every path (a1, a2) twice, once per value of the baseline covariate.
    let a1 = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
    let a2 = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let l0 = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    let data = Dataset::from_columns(vec![
        ("L0", ColumnRole::Baseline, l0),
        ("A1", ColumnRole::Treatment(1), a1.clone()),
        ("A2", ColumnRole::Treatment(2), a2.clone()),
        ("Y", ColumnRole::Outcome, vec![0.0; 8]),
    ])
    .unwrap();
    let alpha1 = plugin_indicator(constant_model("L0", 0.5), "A1", 1.0, 1, 0.01);
    let alpha2 = plugin_indicator(constant_model("L0", 0.25), "A2", 1.0, 2, 0.01);
    let w = cumulative_weights(&[alpha1.evaluate(&data).unwrap().0, alpha2.evaluate(&data).unwrap().0]);
    for i in 0..8 {
        let on_regime = a1[i] == 1.0 && a2[i] == 1.0;
        assert_eq!(w.omega[1][i], if on_regime { 8.0 } else { 0.0 });
        assert_eq!(w.omega[0][i], if a1[i] == 1.0 { 2.0 } else { 0.0 });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn empirical_indicator_weights_have_mean_one(seed in any::<u64>(), n in 40usize..300, arm in 0usize..2) {
        let data = binary_la(seed, n);
        let a = data.values("A").unwrap().to_vec();
        let l = data.values("L").unwrap();
        // Each (L, arm) cell must be populated for the empirical propensity to exist.
        for cell in [0.0, 1.0] {
            let rows: Vec<usize> = (0..n).filter(|&i| l[i] == cell).collect();
            prop_assume!(rows.iter().any(|&i| a[i] == 1.0) && rows.iter().any(|&i| a[i] == 0.0));
        }
        let propensity = ColumnRegressor::fit(
            &LearnerConfig::single(LearnerSpec::Glm),
            &data,
            &names(&["L"]),
            &a,
            Family::Binomial,
            None,
            None,
            None,
        )
        .unwrap();
        let alpha = plugin_indicator(propensity, "A", arm as f64, 1, 1e-6);
        let is_indicator = matches!(alpha.kind, RepresenterKind::Indicator { .. });
        prop_assert!(is_indicator);
        let (v, truncated) = alpha.evaluate(&data).unwrap();
        prop_assert_eq!(truncated, 0);
        let m = mean(&v);
        prop_assert!((m - 1.0).abs() <= 1e-9, "mean {}", m);
    }
}

#[test]
fn logistic_check_of_constant_model() {
    let data = binary_la(1, 10);
    let p = constant_model("L", 0.3).predict(&data, None).unwrap();
    assert!(p.iter().all(|v| (v - 0.3).abs() < 1e-12));
    assert!((expit(logit(0.3)) - 0.3).abs() < 1e-15);
}
