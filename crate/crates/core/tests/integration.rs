//! End-to-end behavior of the full pipeline: load/generate data,
//! standardize, fit, and derive ROC and risk summaries.

use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use rocreg::dataset::{read_csv, write_csv, CsvSchema, StudyDesign, StudySample, SubjectRecord};
use rocreg::estimators::{
    fit_cml, fit_eml, fit_nonparametric_aroc, fit_psl, ConcavityPolicy, RiskModelFit,
};
use rocreg::glm::compute_offsets;
use rocreg::inference::{evaluate_roc, risk_cdf, risk_cdf_eml};
use rocreg::simgen::{generate_sample, Scenario};
use rocreg::standardize::{fit_reference, standardize_sample, StandardizedSample};
use rocreg::BasisSpec;

fn standardized(sample: &StudySample) -> StandardizedSample {
    let reference = fit_reference(sample).expect("reference");
    standardize_sample(sample, &reference).expect("standardize")
}

fn all_fits(std: &StandardizedSample) -> Vec<RiskModelFit> {
    let basis = BasisSpec::polynomial(2);
    let offsets = compute_offsets(&std.sample).expect("offsets");
    vec![
        fit_eml(std, &basis).expect("eml").fit,
        fit_cml(std, &basis, &offsets, ConcavityPolicy::Warn).expect("cml"),
        fit_psl(&std.case_u(), &basis, ConcavityPolicy::Warn).expect("psl"),
    ]
}

#[test]
fn all_estimators_are_rank_invariant() {
    // monotone transformation of the marker leaves every fit unchanged
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = 120;
    }
    let sample = generate_sample(&scn, 11).unwrap();
    let transformed = StudySample::new(
        sample
            .records
            .iter()
            .map(|r| SubjectRecord { d: r.d, y: (0.7 * r.y).exp() + r.y.powi(3) * 1e-3, x: r.x.clone() })
            .collect(),
        sample.design.clone(),
    );
    let fits_a = all_fits(&standardized(&sample));
    let fits_b = all_fits(&standardized(&transformed));
    for (a, b) in fits_a.iter().zip(&fits_b) {
        assert_abs_diff_eq!(a.beta0, b.beta0, epsilon = 1e-6);
        for (x, y) in a.beta1.iter().zip(&b.beta1) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-6);
        }
    }
}

#[test]
fn single_stratum_matches_two_identical_strata() {
    // splitting one population into two identically distributed strata
    // leaves the EML coefficient fit essentially unchanged
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut records = Vec::new();
    for i in 0..400 {
        let d = rng.gen_bool(0.4);
        let shift = if d { 1.0 } else { 0.0 };
        let y: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) + shift;
        records.push(SubjectRecord { d, y, x: format!("s{}", i % 2) });
    }
    let two_strata = StudySample::new(records.clone(), StudyDesign::cohort());
    let merged = StudySample::new(
        records
            .into_iter()
            .map(|mut r| {
                r.x = "all".to_string();
                r
            })
            .collect(),
        StudyDesign::cohort(),
    );
    let basis = BasisSpec::polynomial(2);
    let fit_two = fit_eml(&standardized(&two_strata), &basis).unwrap().fit;
    let fit_one = fit_eml(&standardized(&merged), &basis).unwrap().fit;
    // same records, but placement values in the stratified version are
    // computed against half-size reference sets, so allow sampling slack
    for (a, b) in fit_two.beta1.iter().zip(&fit_one.beta1) {
        assert_abs_diff_eq!(*a, *b, epsilon = 0.8);
    }
    let roc_two = evaluate_roc(&fit_two, 0.3).unwrap().roc;
    let roc_one = evaluate_roc(&fit_one, 0.3).unwrap().roc;
    assert_abs_diff_eq!(roc_two, roc_one, epsilon = 0.05);
}

#[test]
fn chance_marker_fits_near_chance_line() {
    // markers independent of disease: every estimator's ROC hugs the diagonal
    let mut scn = Scenario::default_two_population();
    scn.beta1 = vec![0.0, 0.0];
    for p in &mut scn.populations {
        p.n = 2000;
    }
    let sample = generate_sample(&scn, 13).unwrap();
    let std = standardized(&sample);
    for fit in all_fits(&std) {
        for t in [0.2, 0.5, 0.8] {
            let roc = evaluate_roc(&fit, t).unwrap().roc;
            assert_abs_diff_eq!(roc, t, epsilon = 0.07);
        }
    }
}

#[test]
fn estimators_recover_true_roc_on_large_sample() {
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = 4000;
    }
    let sample = generate_sample(&scn, 17).unwrap();
    let std = standardized(&sample);
    let truth = rocreg::simgen::scenario_truth(
        &scn,
        &[0.1, 0.3, 0.5, 0.7, 0.9],
        &BTreeMap::new(),
        &BTreeMap::new(),
    )
    .unwrap();
    for fit in all_fits(&std) {
        for &(t, roc_true) in &truth.roc {
            let roc = evaluate_roc(&fit, t).unwrap().roc;
            assert_abs_diff_eq!(roc, roc_true, epsilon = 0.04);
        }
    }
    // the nonparametric curve agrees too
    let aroc = fit_nonparametric_aroc(&std).unwrap();
    for &(t, roc_true) in &truth.roc {
        assert_abs_diff_eq!(aroc.eval(t), roc_true, epsilon = 0.04);
    }
}

#[test]
fn risk_cdf_pipeline_matches_truth() {
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = 4000;
    }
    let sample = generate_sample(&scn, 23).unwrap();
    let std = standardized(&sample);
    let basis = BasisSpec::polynomial(2);
    let offsets = compute_offsets(&sample).unwrap();
    let cml = fit_cml(&std, &basis, &offsets, ConcavityPolicy::Warn).unwrap();
    let eml = fit_eml(&std, &basis).unwrap();

    let mut p_grids = BTreeMap::new();
    // p values sit inside the attainable risk range (roughly [0.20, 0.76]
    // for this prevalence); near its edges the estimated CDF is unstable
    p_grids.insert("pop1".to_string(), vec![0.3, 0.43, 0.67]);
    let truth = rocreg::simgen::scenario_truth(&scn, &[], &BTreeMap::new(), &p_grids).unwrap();
    let rho = 0.44;
    for &(p, cdf_true) in &truth.cdf["pop1"] {
        let cdf_cml = risk_cdf(&cml, rho, p).unwrap();
        let cdf_eml = risk_cdf_eml(&eml, rho, p).unwrap();
        assert_abs_diff_eq!(cdf_cml, cdf_true, epsilon = 0.05);
        assert_abs_diff_eq!(cdf_eml, cdf_true, epsilon = 0.05);
    }
}

#[test]
fn csv_round_trip_preserves_fits() {
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = 100;
    }
    let sample = generate_sample(&scn, 29).unwrap();
    let schema = CsvSchema::default();
    let mut buf = Vec::new();
    write_csv(&sample, &schema, &mut buf).unwrap();
    let reloaded = read_csv(buf.as_slice(), &schema, StudyDesign::cohort()).unwrap();
    let fits_a = all_fits(&standardized(&sample));
    let fits_b = all_fits(&standardized(&reloaded));
    for (a, b) in fits_a.iter().zip(&fits_b) {
        assert_abs_diff_eq!(a.beta0, b.beta0, epsilon = 1e-9);
    }
}

#[test]
fn case_control_offset_changes_intercept_only_in_risk_scale() {
    // the same marker data analyzed as case-control with the true
    // prevalences supplied should give a similar ROC to cohort analysis
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = 1500;
    }
    let cohort = generate_sample(&scn, 31).unwrap();
    let mut prevalences = BTreeMap::new();
    prevalences.insert("pop1".to_string(), 0.44);
    prevalences.insert("pop2".to_string(), 0.27);
    let cc = StudySample::new(
        cohort.records.clone(),
        StudyDesign::case_control(prevalences).unwrap(),
    );
    let basis = BasisSpec::polynomial(2);
    let fit_cohort = {
        let std = standardized(&cohort);
        let offsets = compute_offsets(&cohort).unwrap();
        fit_cml(&std, &basis, &offsets, ConcavityPolicy::Warn).unwrap()
    };
    let fit_cc = {
        let std = standardized(&cc);
        let offsets = compute_offsets(&cc).unwrap();
        fit_cml(&std, &basis, &offsets, ConcavityPolicy::Warn).unwrap()
    };
    for t in [0.1, 0.5, 0.9] {
        let a = evaluate_roc(&fit_cohort, t).unwrap().roc;
        let b = evaluate_roc(&fit_cc, t).unwrap().roc;
        assert_abs_diff_eq!(a, b, epsilon = 0.03);
    }
}
