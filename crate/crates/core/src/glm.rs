//! Logistic regression with a fixed per-observation offset, fitted by
//! iteratively reweighted least squares with step-halving.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{DesignKind, StudySample};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-12; // scaled by n
const COEF_TOL: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 30.0;

/// Result of a logistic fit.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    /// Observed-information inverse at the solution. Valid for Wald tests
    /// only when observations are independent; with estimated placement
    /// values use a bootstrap covariance instead.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

/// Per-record offsets on the logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetVector(pub Vec<f64>);

impl OffsetVector {
    pub fn constant(value: f64, n: usize) -> Self {
        OffsetVector(vec![value; n])
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Offsets for the study design:
/// cohort -> per-record logit of the empirical stratum case fraction;
/// case-control -> constant log(n_D / n_Dbar) across records.
pub fn compute_offsets(sample: &StudySample) -> Result<OffsetVector> {
    match sample.design.kind {
        DesignKind::Cohort => {
            let counts = sample.stratum_counts();
            let mut logits = std::collections::BTreeMap::new();
            for (stratum, &(cases, controls)) in &counts {
                let frac = cases as f64 / (cases + controls) as f64;
                if frac == 0.0 || frac == 1.0 {
                    return Err(Error::DegeneratePrevalence(stratum.clone(), frac));
                }
                logits.insert(stratum.clone(), logit(frac));
            }
            Ok(OffsetVector(
                sample.records.iter().map(|r| logits[&r.x]).collect(),
            ))
        }
        DesignKind::CaseControl => {
            let n_d = sample.n_cases();
            let n_dbar = sample.n_controls();
            if n_d == 0 || n_dbar == 0 {
                return Err(Error::ConstantResponse);
            }
            Ok(OffsetVector::constant(
                (n_d as f64 / n_dbar as f64).ln(),
                sample.n(),
            ))
        }
    }
}

fn log_likelihood(
    features: &DMatrix<f64>,
    response: &[f64],
    offsets: &[f64],
    weights: Option<&[f64]>,
    beta: &DVector<f64>,
) -> f64 {
    let eta = features * beta;
    let mut ll = 0.0;
    for i in 0..response.len() {
        let e = eta[i] + offsets[i];
        let w = weights.map_or(1.0, |w| w[i]);
        // y*eta - log(1+exp(eta)), stable in both tails
        let log1pe = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        ll += w * (response[i] * e - log1pe);
    }
    ll
}

/// Maximize the Bernoulli log-likelihood with linear predictor
/// `features * beta + offset`, optionally with per-record weights
/// multiplying each log-likelihood contribution.
pub fn fit_logistic_offset(
    features: &DMatrix<f64>,
    response: &[f64],
    offsets: &OffsetVector,
    weights: Option<&[f64]>,
) -> Result<GlmFit> {
    let n = response.len();
    let p = features.ncols();
    assert_eq!(features.nrows(), n, "feature rows must align with response");
    assert_eq!(offsets.0.len(), n, "offsets must align with response");
    let n_cases = response.iter().filter(|&&y| y > 0.5).count();
    if n_cases == 0 || n_cases == n {
        return Err(Error::ConstantResponse);
    }

    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(features, response, &offsets.0, weights, &beta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_ITER {
        iterations = iter;
        let eta = features * &beta;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let mu = expit(eta[i] + offsets.0[i]);
            let w = weights.map_or(1.0, |w| w[i]);
            let resid = w * (response[i] - mu);
            let wv = w * mu * (1.0 - mu);
            for j in 0..p {
                score[j] += features[(i, j)] * resid;
                for k in j..p {
                    info[(j, k)] += wv * features[(i, j)] * features[(i, k)];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(j, k)] = info[(k, j)];
            }
        }

        if score.amax() <= SCORE_TOL * n as f64 {
            converged = true;
            break;
        }

        let chol = info
            .clone()
            .cholesky()
            .ok_or(Error::GlmNonConvergence(iter))?;
        let full_step = chol.solve(&score);

        // step-halving: never accept a likelihood decrease
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..30 {
            let candidate = &beta + scale * &full_step;
            let cand_ll = log_likelihood(features, response, &offsets.0, weights, &candidate);
            if cand_ll >= ll - 1e-12 {
                let delta = (&candidate - &beta).amax();
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                if delta <= COEF_TOL {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted && score.amax() <= SCORE_TOL * n as f64;
            break;
        }
        if beta.amax() > SEPARATION_BOUND {
            return Err(Error::Separation(SEPARATION_BOUND));
        }
    }

    if !converged {
        // final score check at the last iterate
        let eta = features * &beta;
        let mut max_score: f64 = 0.0;
        for j in 0..p {
            let mut s = 0.0;
            for i in 0..n {
                let w = weights.map_or(1.0, |w| w[i]);
                s += w * features[(i, j)] * (response[i] - expit(eta[i] + offsets.0[i]));
            }
            max_score = max_score.max(s.abs());
        }
        if max_score > SCORE_TOL * n as f64 {
            return Err(Error::GlmNonConvergence(MAX_ITER));
        }
        converged = true;
    }

    // a perfectly fit likelihood means every fitted probability sits on
    // its label, which only happens under complete separation
    if ll > -1e-6 {
        return Err(Error::Separation(SEPARATION_BOUND));
    }

    // observed information at the solution
    let eta = features * &beta;
    let mut info = DMatrix::zeros(p, p);
    for i in 0..n {
        let mu = expit(eta[i] + offsets.0[i]);
        let wv = weights.map_or(1.0, |w| w[i]) * mu * (1.0 - mu);
        for j in 0..p {
            for k in 0..p {
                info[(j, k)] += wv * features[(i, j)] * features[(i, k)];
            }
        }
    }
    let covariance = info
        .clone()
        .try_inverse()
        .ok_or(Error::GlmNonConvergence(iterations))?;

    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        covariance,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{StudyDesign, SubjectRecord};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn design_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
        let n = cols[0].len();
        DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
    }

    #[test]
    fn intercept_only_balanced_zero_offset_gives_zero() {
        let x = design_matrix(&[vec![1.0; 6]]);
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let fit = fit_logistic_offset(&x, &y, &OffsetVector::constant(0.0, 6), None).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_response_is_an_error() {
        let x = design_matrix(&[vec![1.0; 4]]);
        let y = [1.0; 4];
        assert!(matches!(
            fit_logistic_offset(&x, &y, &OffsetVector::constant(0.0, 4), None),
            Err(Error::ConstantResponse)
        ));
    }

    #[test]
    fn offset_shift_moves_intercept_by_minus_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 80;
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = z
                .iter()
                .map(|&zi| f64::from(rng.gen_bool(expit(0.3 + 0.8 * zi))))
                .collect();
            if y.iter().sum::<f64>() == 0.0 || y.iter().sum::<f64>() == n as f64 {
                continue;
            }
            let x = design_matrix(&[vec![1.0; n], z.clone()]);
            let c = rng.gen_range(-1.5..1.5);
            let f0 = fit_logistic_offset(&x, &y, &OffsetVector::constant(0.0, n), None).unwrap();
            let f1 = fit_logistic_offset(&x, &y, &OffsetVector::constant(c, n), None).unwrap();
            assert_abs_diff_eq!(f1.coefficients[0], f0.coefficients[0] - c, epsilon = 1e-8);
            assert_abs_diff_eq!(f1.coefficients[1], f0.coefficients[1], epsilon = 1e-8);
        }
    }

    /// Hand-iterated Newton oracle on a 6-row single-slope dataset.
    #[test]
    fn matches_newton_by_hand() {
        let z = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let offs = [0.1, -0.2, 0.0, 0.3, 0.0, -0.1];

        // independent scalar Newton iteration on the slope-only model
        let mut b = 0.0_f64;
        for _ in 0..50 {
            let mut score = 0.0;
            let mut info = 0.0;
            for i in 0..6 {
                let mu = 1.0 / (1.0 + (-(b * z[i] + offs[i])).exp());
                score += z[i] * (y[i] - mu);
                info += z[i] * z[i] * mu * (1.0 - mu);
            }
            b += score / info;
        }

        let x = design_matrix(&[z.to_vec()]);
        let fit = fit_logistic_offset(&x, &y, &OffsetVector(offs.to_vec()), None).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], b, epsilon = 1e-8);
    }

    #[test]
    fn score_is_small_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = z
            .iter()
            .map(|&zi| f64::from(rng.gen_bool(expit(-0.5 + 1.5 * zi))))
            .collect();
        let x = design_matrix(&[vec![1.0; n], z.clone()]);
        let fit = fit_logistic_offset(&x, &y, &OffsetVector::constant(0.0, n), None).unwrap();
        let beta = DVector::from_vec(fit.coefficients.clone());
        let eta = &x * &beta;
        for j in 0..2 {
            let s: f64 = (0..n).map(|i| x[(i, j)] * (y[i] - expit(eta[i]))).sum();
            assert!(s.abs() <= 1e-8 * n as f64, "score {s}");
        }
    }

    #[test]
    fn separation_is_detected() {
        let z = [-2.0, -1.0, 1.0, 2.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let x = design_matrix(&[z.to_vec()]);
        let err = fit_logistic_offset(&x, &y, &OffsetVector::constant(0.0, 4), None).unwrap_err();
        assert!(matches!(err, Error::Separation(_)), "{err}");
    }

    #[test]
    fn cohort_offsets_are_stratum_logits() {
        let mut records = Vec::new();
        for i in 0..100 {
            records.push(SubjectRecord { d: i < 44, y: i as f64, x: "s".into() });
        }
        let sample = StudySample::new(records, StudyDesign::cohort());
        let offs = compute_offsets(&sample).unwrap();
        let expected = (0.44_f64 / 0.56).ln();
        assert_abs_diff_eq!(expected, -0.24116, epsilon = 1e-4);
        for &o in &offs.0 {
            assert_abs_diff_eq!(o, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn balanced_case_control_offset_is_zero() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(SubjectRecord { d: i % 2 == 0, y: i as f64, x: "s".into() });
        }
        let design = StudyDesign::case_control(std::collections::BTreeMap::new()).unwrap();
        let sample = StudySample::new(records, design);
        let offs = compute_offsets(&sample).unwrap();
        assert_eq!(offs, OffsetVector::constant(0.0, 10));
    }

    #[test]
    fn stratum_without_cases_is_an_error() {
        let records = vec![
            SubjectRecord { d: false, y: 0.0, x: "s".into() },
            SubjectRecord { d: false, y: 1.0, x: "s".into() },
        ];
        let sample = StudySample::new(records, StudyDesign::cohort());
        assert!(matches!(
            compute_offsets(&sample),
            Err(Error::DegeneratePrevalence(_, _))
        ));
    }
}
