//! Quantities derived from fitted risk models (ROC curve, risk, risk-CDF)
//! and design-respecting percentile bootstrap confidence intervals.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignKind, StudySample};
use crate::error::{Error, Result};
use crate::estimators::{EmlFit, RiskModelFit, QUAD_TOL};
use crate::glm::{expit, logit};
use crate::quad;
use crate::standardize::{placement_value, ReferenceSet};

/// A point on the fitted ROC curve together with its derivative.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocEvaluation {
    pub t: f64,
    pub roc: f64,
    pub roc_derivative: f64,
}

/// ROC(t) = integral_0^t exp{G(u)} du, ROC'(t) = exp{G(t)}.
pub fn evaluate_roc(fit: &RiskModelFit, t: f64) -> Result<RocEvaluation> {
    assert!((0.0..=1.0).contains(&t), "t must lie in [0,1]");
    let roc = quad::integrate(|u| fit.g(u).exp(), 0.0, t, QUAD_TOL)?;
    Ok(RocEvaluation {
        t,
        roc,
        roc_derivative: fit.g(t).exp(),
    })
}

/// Absolute disease risk at marker value `y` in stratum `x`:
/// `expit( logit(prevalence) + G(U(y,x)) )`.
pub fn risk_at(
    fit: &RiskModelFit,
    ref_set: &ReferenceSet,
    y: f64,
    stratum: &str,
    prevalence: f64,
) -> Result<f64> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidPrevalence(prevalence));
    }
    let u = placement_value(ref_set, y, stratum)?;
    Ok(expit(logit(prevalence) + fit.g(u)))
}

/// Risk at a known placement value (no reference lookup).
pub fn risk_at_placement(fit: &RiskModelFit, u: f64, prevalence: f64) -> f64 {
    expit(logit(prevalence) + fit.g(u))
}

const BISECT_TOL: f64 = 1e-10;
const BISECT_MAX_ITER: usize = 200;

/// CDF of disease risk at threshold `p`, from the fitted ROC curve:
/// `CDF_R(p) = 1 - (1-rho) t - rho ROC(t)` at the `t` solving
/// `rho ROC'(t) / (rho ROC'(t) + 1 - rho) = p`.
///
/// Requires a monotone decreasing fitted G; otherwise the root solve is
/// ill-posed and an error directs callers to [`risk_cdf_eml`].
pub fn risk_cdf(fit: &RiskModelFit, prevalence: f64, p: f64) -> Result<f64> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidPrevalence(prevalence));
    }
    if !fit.g_is_decreasing() {
        return Err(Error::NonMonotoneRiskModel);
    }
    // risk-as-function-of-t is expit(logit(rho) + G(t)), decreasing in t
    let risk_of_t = |t: f64| expit(logit(prevalence) + fit.g(t));
    if p >= risk_of_t(0.0) {
        return Ok(1.0);
    }
    if p <= risk_of_t(1.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if risk_of_t(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECT_TOL {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let roc_t = quad::integrate(|u| fit.g(u).exp(), 0.0, t, QUAD_TOL)?;
    Ok(1.0 - (1.0 - prevalence) * t - prevalence * roc_t)
}

/// EML-path risk CDF: `1 - F_x(u(p,x))` where `u(p,x)` is the largest
/// observed placement value whose fitted risk is at least `p`, and
/// `F_x = (1-rho) F_control + rho F_case`.
///
/// If no observed placement value reaches risk `p`, the risk distribution
/// lies entirely below `p` and the CDF is 1.
pub fn risk_cdf_eml(eml: &EmlFit, prevalence: f64, p: f64) -> Result<f64> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidPrevalence(prevalence));
    }
    let base = logit(prevalence);
    let u_threshold = eml
        .f_u_control
        .support
        .iter()
        .copied()
        .filter(|&u| expit(base + eml.fit.g(u)) >= p)
        .fold(f64::NEG_INFINITY, f64::max);
    if u_threshold == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    let f_x = (1.0 - prevalence) * eml.f_u_control.eval(u_threshold)
        + prevalence * eml.f_u_case.eval(u_threshold);
    Ok(1.0 - f_x)
}

/// Percentile bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiResult {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Replicates requested.
    pub b: usize,
    /// Replicates that produced a value (failures are dropped).
    pub b_used: usize,
    pub seed: u64,
    /// Set when more than 1% of replicates were dropped.
    pub high_failure_warning: bool,
}

/// RNG for bootstrap replicate `b` under master seed `seed`; replicate
/// substreams are independent of execution order, so parallel and serial
/// runs agree bit for bit.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_add(1));
    rng
}

/// One design-respecting resample:
/// case-control -> resample cases and controls separately within each
/// stratum; cohort -> resample records within each stratum without regard
/// to outcome status. Per-stratum sizes are preserved either way.
pub fn resample(sample: &StudySample, rng: &mut impl Rng) -> StudySample {
    let mut records = Vec::with_capacity(sample.n());
    for stratum in sample.strata() {
        match sample.design.kind {
            DesignKind::CaseControl => {
                for want_case in [true, false] {
                    let pool: Vec<usize> = sample
                        .records
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.x == stratum && r.d == want_case)
                        .map(|(i, _)| i)
                        .collect();
                    for _ in 0..pool.len() {
                        records.push(sample.records[pool[rng.gen_range(0..pool.len())]].clone());
                    }
                }
            }
            DesignKind::Cohort => {
                let pool: Vec<usize> = sample
                    .records
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.x == stratum)
                    .map(|(i, _)| i)
                    .collect();
                for _ in 0..pool.len() {
                    records.push(sample.records[pool[rng.gen_range(0..pool.len())]].clone());
                }
            }
        }
    }
    StudySample::new(records, sample.design.clone())
}

/// Percentile bootstrap CI for a scalar statistic of the sample.
///
/// Deterministic given `seed`; replicates run in parallel. Replicates on
/// which the statistic fails are dropped, with a warning flag set when
/// more than 1% are lost.
pub fn bootstrap_percentile_ci<F>(
    statistic: F,
    sample: &StudySample,
    b: usize,
    seed: u64,
) -> Result<CiResult>
where
    F: Fn(&StudySample) -> Result<f64> + Sync,
{
    assert!(b >= 1, "at least one bootstrap replicate is required");
    let point = statistic(sample)?;
    let values: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let resampled = resample(sample, &mut rng);
            statistic(&resampled).ok()
        })
        .collect();
    let mut reps: Vec<f64> = values.into_iter().flatten().collect();
    let dropped = b - reps.len();
    if reps.is_empty() {
        return Err(Error::BootstrapFailure { dropped, total: b });
    }
    reps.sort_by(f64::total_cmp);
    let (lower, upper) = percentile_interval(&reps, 0.025, 0.975);
    Ok(CiResult {
        point,
        lower,
        upper,
        b,
        b_used: reps.len(),
        seed,
        high_failure_warning: dropped as f64 > 0.01 * b as f64,
    })
}

/// Order-statistic percentile endpoints of a sorted replicate vector.
pub fn percentile_interval(sorted: &[f64], alpha_lo: f64, alpha_hi: f64) -> (f64, f64) {
    let n = sorted.len();
    let idx = |q: f64| -> usize {
        let k = (q * n as f64).ceil() as usize;
        k.clamp(1, n) - 1
    };
    (sorted[idx(alpha_lo)], sorted[idx(alpha_hi)])
}
