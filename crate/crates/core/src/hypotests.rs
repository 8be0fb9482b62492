//! Tests for equality of ROC curves across two populations and Wald tests
//! for covariate effects on discrimination.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::{replicate_rng, resample};
use crate::standardize::{fit_reference, standardize_sample, StandardizedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RocEqualityMethod {
    /// Difference in mean case placement values, bootstrap null.
    AucDiff,
    /// Wilcoxon rank sum of case placement values across populations.
    Wilcoxon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    /// Resampling replicates behind the null distribution, when applicable.
    pub b: Option<usize>,
}

/// Replicates for the AucDiff bootstrap null.
pub const AUC_DIFF_NULL_REPLICATES: usize = 999;
/// Arms up to this size use exact permutation enumeration for Wilcoxon.
pub const WILCOXON_EXACT_LIMIT: usize = 10;

fn case_placements_by_population(std: &StandardizedSample) -> Result<Vec<Vec<f64>>> {
    let strata = std.sample.strata();
    if strata.len() != 2 {
        return Err(Error::NotTwoPopulations(strata.len()));
    }
    let mut groups = vec![Vec::new(), Vec::new()];
    for (r, u) in std.iter() {
        if r.d {
            let idx = usize::from(r.x == strata[1]);
            groups[idx].push(u);
        }
    }
    for (g, s) in groups.iter().zip(&strata) {
        if g.is_empty() {
            return Err(Error::NoCases(s.clone()));
        }
    }
    Ok(groups)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Test equality of the two populations' ROC curves through their case
/// placement value distributions.
pub fn test_roc_equality(
    std: &StandardizedSample,
    method: RocEqualityMethod,
    seed: u64,
) -> Result<TestResult> {
    match method {
        RocEqualityMethod::AucDiff => auc_diff_test(std, seed),
        RocEqualityMethod::Wilcoxon => {
            let groups = case_placements_by_population(std)?;
            wilcoxon_rank_sum(&groups[0], &groups[1])
        }
    }
}

/// AUC-difference test: statistic is the difference in mean case placement
/// values; the null is 999 design-respecting bootstrap replicates of the
/// recentered statistic.
fn auc_diff_test(std: &StandardizedSample, seed: u64) -> Result<TestResult> {
    let groups = case_placements_by_population(std)?;
    let observed = mean(&groups[0]) - mean(&groups[1]);

    let b = AUC_DIFF_NULL_REPLICATES;
    let mut exceed = 0usize;
    let mut used = 0usize;
    for rep in 0..b as u64 {
        let mut rng = replicate_rng(seed, rep);
        let resampled = resample(&std.sample, &mut rng);
        let refs = match fit_reference(&resampled) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let rs = match standardize_sample(&resampled, &refs) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let g = match case_placements_by_population(&rs) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let stat = mean(&g[0]) - mean(&g[1]);
        used += 1;
        if (stat - observed).abs() >= observed.abs() {
            exceed += 1;
        }
    }
    if used == 0 {
        return Err(Error::BootstrapFailure { dropped: b, total: b });
    }
    let p_value = (exceed + 1) as f64 / (used + 1) as f64;
    Ok(TestResult {
        statistic: observed,
        p_value,
        method: "auc-diff-bootstrap".into(),
        b: Some(used),
    })
}

/// Midranks of the pooled vector, aligned with input order.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // midrank of positions i..=j (1-based)
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Wilcoxon rank-sum test on the two case-placement samples. Uses exact
/// permutation enumeration when both arms have at most
/// [`WILCOXON_EXACT_LIMIT`] members, otherwise the normal approximation
/// with tie and continuity corrections.
pub fn wilcoxon_rank_sum(group1: &[f64], group2: &[f64]) -> Result<TestResult> {
    let n1 = group1.len();
    let n2 = group2.len();
    if n1 == 0 || n2 == 0 {
        return Err(Error::NoCasesInSample);
    }
    let mut pooled = Vec::with_capacity(n1 + n2);
    pooled.extend_from_slice(group1);
    pooled.extend_from_slice(group2);
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..n1].iter().sum();

    if n1 <= WILCOXON_EXACT_LIMIT && n2 <= WILCOXON_EXACT_LIMIT {
        let p_value = exact_rank_sum_p(&ranks, n1, w);
        return Ok(TestResult {
            statistic: w,
            p_value,
            method: "wilcoxon-exact".into(),
            b: None,
        });
    }

    let n = (n1 + n2) as f64;
    let mean_w = n1 as f64 * (n + 1.0) / 2.0;
    // tie correction over groups of equal pooled values
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var_w = (n1 as f64 * n2 as f64 / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var_w <= 0.0 {
        // all values tied: no evidence either way
        return Ok(TestResult {
            statistic: w,
            p_value: 1.0,
            method: "wilcoxon-normal".into(),
            b: None,
        });
    }
    let delta = w - mean_w;
    let z = (delta.abs() - 0.5).max(0.0) / var_w.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = 2.0 * (1.0 - normal.cdf(z));
    Ok(TestResult {
        statistic: w,
        p_value: p_value.min(1.0),
        method: "wilcoxon-normal".into(),
        b: None,
    })
}

/// Two-sided exact permutation p-value of the rank-sum statistic: the
/// proportion of n1-subsets whose rank sum deviates from the mean by at
/// least the observed deviation.
fn exact_rank_sum_p(ranks: &[f64], n1: usize, observed: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let mean_w = total * n1 as f64 / n as f64;
    let obs_dev = (observed - mean_w).abs();

    let mut count = 0u64;
    let mut hits = 0u64;
    // iterate all n1-subsets via a fixed-size index vector
    let mut idx: Vec<usize> = (0..n1).collect();
    loop {
        let w: f64 = idx.iter().map(|&i| ranks[i]).sum();
        count += 1;
        if (w - mean_w).abs() >= obs_dev - 1e-12 {
            hits += 1;
        }
        // next combination
        let mut k = n1;
        loop {
            if k == 0 {
                return hits as f64 / count as f64;
            }
            k -= 1;
            if idx[k] != k + n - n1 {
                idx[k] += 1;
                for j in k + 1..n1 {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Wald test that a subset of coefficients is zero:
/// `stat = beta_S' Sigma_S^{-1} beta_S`, chi-square with |S| df.
///
/// The covariance must be valid for the data at hand; with estimated
/// placement values or offsets, supply a bootstrap covariance.
pub fn wald_test_covariate_effect(
    coefficients: &[f64],
    covariance: &DMatrix<f64>,
    indices: &[usize],
) -> Result<TestResult> {
    if indices.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let k = indices.len();
    for &i in indices {
        assert!(i < coefficients.len(), "coefficient index out of range");
    }
    let beta_s = DVector::from_iterator(k, indices.iter().map(|&i| coefficients[i]));
    let sigma_s = DMatrix::from_fn(k, k, |r, c| covariance[(indices[r], indices[c])]);
    let inv = sigma_s.try_inverse().ok_or(Error::SingularCovariance)?;
    let statistic = (beta_s.transpose() * &inv * &beta_s)[(0, 0)];
    let chi2 = ChiSquared::new(k as f64).expect("positive dof");
    let p_value = if statistic <= 0.0 { 1.0 } else { 1.0 - chi2.cdf(statistic) };
    Ok(TestResult {
        statistic,
        p_value,
        method: "wald".into(),
        b: None,
    })
}
