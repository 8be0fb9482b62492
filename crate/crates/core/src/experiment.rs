//! Repeated-simulation experiments: generate datasets from a scenario,
//! fit one or more estimators to each replicate, and summarize bias,
//! variance, coverage, and relative efficiency against per-population
//! fitting.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{StudyDesign, StudySample, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimators::{
    self, ConcavityPolicy, Method, RiskModelFit, StepRoc,
};
use crate::inference::{percentile_interval, replicate_rng, resample};
use crate::quad;
use crate::simgen::{generate_sample, scenario_truth, Scenario};
use crate::standardize::{fit_reference, standardize_sample, StandardizedSample};

/// Largest tolerated fraction of failed replicates before the experiment
/// aborts.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// What to estimate on each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Pool all populations under the common-ROC model.
    Combined,
    /// Fit each population separately (the efficiency baseline).
    PerPopulation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub replicates: usize,
    /// Bootstrap replicates per dataset for coverage; 0 disables coverage.
    pub bootstrap: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    pub modes: Vec<FitMode>,
    /// ROC evaluation grid.
    pub t_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            replicates,
            bootstrap: 0,
            seed,
            estimators: vec![Method::Eml, Method::Cml, Method::Psl],
            modes: vec![FitMode::Combined],
            t_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

/// Summary for one estimand (one estimator/mode/target combination).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimator: Method,
    pub mode: FitMode,
    /// Population label for per-population estimands, "all" for combined.
    pub population: String,
    /// e.g. "roc(0.3)", "beta0", "beta1[1]".
    pub target: String,
    pub true_value: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Fraction of replicates whose 95% percentile interval covers the
    /// truth; `None` when bootstrapping is disabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    /// MSE of the per-population baseline divided by this estimand's MSE;
    /// only present for combined ROC estimands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_efficiency: Option<f64>,
    pub replicates_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<EstimandSummary>,
    pub replicates_requested: usize,
    pub replicates_failed: usize,
    /// Set when only one replicate was run, so variances are degenerate.
    pub degenerate_variance: bool,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Flat CSV with one row per estimand.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimator,mode,population,target,true_value,mean,bias,variance,mse,coverage,relative_efficiency,replicates_used\n",
        );
        for s in &self.summaries {
            let cov = s.coverage.map_or(String::new(), |c| format!("{c}"));
            let re = s.relative_efficiency.map_or(String::new(), |r| format!("{r}"));
            out.push_str(&format!(
                "{:?},{:?},{},{},{},{},{},{},{},{},{},{}\n",
                s.estimator,
                s.mode,
                s.population,
                s.target,
                s.true_value,
                s.mean,
                s.bias,
                s.variance,
                s.mse,
                cov,
                re,
                s.replicates_used,
            ));
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn find(
        &self,
        estimator: Method,
        mode: FitMode,
        population: &str,
        target: &str,
    ) -> Option<&EstimandSummary> {
        self.summaries.iter().find(|s| {
            s.estimator == estimator
                && s.mode == mode
                && s.population == population
                && s.target == target
        })
    }
}

/// One replicate's point estimates, keyed by (estimator, mode, population,
/// target).
type ReplicateEstimates = BTreeMap<(Method, FitMode, String, String), f64>;

fn roc_at(fit: &RiskModelFit, t: f64) -> Result<f64> {
    quad::integrate(|u| fit.g(u).exp(), 0.0, t, estimators::QUAD_TOL)
}

fn fit_by_method(
    method: Method,
    std: &StandardizedSample,
    scenario: &Scenario,
) -> Result<RiskModelFit> {
    let basis = scenario.basis;
    match method {
        Method::Eml => Ok(estimators::fit_eml(std, &basis)?.fit),
        Method::Cml => {
            let offsets = crate::glm::compute_offsets(&std.sample)?;
            estimators::fit_cml(std, &basis, &offsets, ConcavityPolicy::Warn)
        }
        Method::Psl => estimators::fit_psl(&std.case_u(), &basis, ConcavityPolicy::Warn),
    }
}

/// ROC evaluations for a fit; EML uses its concavified step curve, the
/// likelihood methods use the smooth parametric curve.
fn roc_grid_estimates(
    method: Method,
    std: &StandardizedSample,
    scenario: &Scenario,
    t_grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    match method {
        Method::Eml => {
            let basis = scenario.basis;
            let eml = estimators::fit_eml(std, &basis)?;
            let curve = eml.concave_roc();
            let rocs = t_grid.iter().map(|&t| curve.eval(t)).collect();
            Ok((rocs, coefficient_vector(&eml.fit)))
        }
        _ => {
            let fit = fit_by_method(method, std, scenario)?;
            let mut rocs = Vec::with_capacity(t_grid.len());
            for &t in t_grid {
                rocs.push(roc_at(&fit, t)?);
            }
            Ok((rocs, coefficient_vector(&fit)))
        }
    }
}

fn coefficient_vector(fit: &RiskModelFit) -> Vec<f64> {
    let mut v = vec![fit.beta0];
    v.extend_from_slice(&fit.beta1);
    v
}

fn coefficient_names(dim: usize) -> Vec<String> {
    let mut names = vec!["beta0".to_string()];
    for j in 0..dim {
        names.push(format!("beta1[{j}]"));
    }
    names
}

/// Nonparametric per-population ROC estimate (the baseline when a
/// population is fit on its own with the empirical AROC).
fn single_population_sample(sample: &StudySample, label: &str) -> StudySample {
    let records: Vec<SubjectRecord> = sample
        .records
        .iter()
        .filter(|r| r.x == label)
        .cloned()
        .collect();
    StudySample::new(records, StudyDesign::cohort())
}

fn analyze_replicate(
    config: &ExperimentConfig,
    sample: &StudySample,
) -> Result<ReplicateEstimates> {
    let mut out = ReplicateEstimates::new();
    let dim = config.scenario.basis.dim();
    let coef_names = coefficient_names(dim);
    for &mode in &config.modes {
        match mode {
            FitMode::Combined => {
                let reference = fit_reference(sample)?;
                let std = standardize_sample(sample, &reference)?;
                for &method in &config.estimators {
                    let (rocs, coefs) =
                        roc_grid_estimates(method, &std, &config.scenario, &config.t_grid)?;
                    for (&t, roc) in config.t_grid.iter().zip(&rocs) {
                        out.insert(
                            (method, mode, "all".into(), format!("roc({t})")),
                            *roc,
                        );
                    }
                    for (name, &c) in coef_names.iter().zip(&coefs) {
                        out.insert((method, mode, "all".into(), name.clone()), c);
                    }
                }
            }
            FitMode::PerPopulation => {
                for pop in &config.scenario.populations {
                    let sub = single_population_sample(sample, &pop.label);
                    if sub.n_cases() == 0 || sub.n_controls() == 0 {
                        return Err(Error::NoCasesInSample);
                    }
                    let reference = fit_reference(&sub)?;
                    let std = standardize_sample(&sub, &reference)?;
                    for &method in &config.estimators {
                        let (rocs, coefs) =
                            roc_grid_estimates(method, &std, &config.scenario, &config.t_grid)?;
                        for (&t, roc) in config.t_grid.iter().zip(&rocs) {
                            out.insert(
                                (method, mode, pop.label.clone(), format!("roc({t})")),
                                *roc,
                            );
                        }
                        for (name, &c) in coef_names.iter().zip(&coefs) {
                            out.insert((method, mode, pop.label.clone(), name.clone()), c);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-replicate bootstrap coverage indicators at level 95%.
fn replicate_coverage(
    config: &ExperimentConfig,
    sample: &StudySample,
    truths: &BTreeMap<(Method, FitMode, String, String), f64>,
    seed: u64,
) -> Result<BTreeMap<(Method, FitMode, String, String), bool>> {
    let mut draws: BTreeMap<(Method, FitMode, String, String), Vec<f64>> = BTreeMap::new();
    let mut used = 0usize;
    for b in 0..config.bootstrap {
        let mut rng = replicate_rng(seed, b as u64);
        let boot = resample(sample, &mut rng);
        match analyze_replicate(config, &boot) {
            Ok(est) => {
                used += 1;
                for (k, v) in est {
                    draws.entry(k).or_default().push(v);
                }
            }
            Err(_) => continue,
        }
    }
    if (used as f64) < 0.5 * config.bootstrap as f64 {
        return Err(Error::BootstrapFailure {
            dropped: config.bootstrap - used,
            total: config.bootstrap,
        });
    }
    let mut out = BTreeMap::new();
    for (k, vals) in draws {
        if vals.len() < used {
            continue; // estimand missing from some replicates
        }
        let Some(&truth) = truths.get(&k) else { continue };
        let mut sorted = vals;
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = percentile_interval(&sorted, 0.025, 0.975);
        out.insert(k, lo <= truth && truth <= hi);
    }
    Ok(out)
}

/// True values for every estimand the experiment produces.
fn truth_map(config: &ExperimentConfig) -> Result<BTreeMap<(Method, FitMode, String, String), f64>> {
    let scn = &config.scenario;
    let truth = scenario_truth(scn, &config.t_grid, &BTreeMap::new(), &BTreeMap::new())?;
    let beta0 = scn.beta0()?;
    let coef_names = coefficient_names(scn.basis.dim());
    let mut coef_truth = vec![beta0];
    coef_truth.extend_from_slice(&scn.beta1);

    let mut map = BTreeMap::new();
    for &method in &config.estimators {
        for &mode in &config.modes {
            match mode {
                FitMode::Combined => {
                    for &(t, roc) in &truth.roc {
                        map.insert((method, mode, "all".into(), format!("roc({t})")), roc);
                    }
                    for (name, &c) in coef_names.iter().zip(&coef_truth) {
                        map.insert((method, mode, "all".into(), name.clone()), c);
                    }
                }
                FitMode::PerPopulation => {
                    for pop in &scn.populations {
                        let curve = scn.population_roc(pop)?;
                        for &t in &config.t_grid {
                            map.insert(
                                (method, mode, pop.label.clone(), format!("roc({t})")),
                                curve.roc(t)?,
                            );
                        }
                        // coefficient truths only apply to the unperturbed curve
                        if pop.auc_ratio.is_none() {
                            for (name, &c) in coef_names.iter().zip(&coef_truth) {
                                map.insert(
                                    (method, mode, pop.label.clone(), name.clone()),
                                    c,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Run the experiment. Deterministic given the configuration; replicates
/// are processed in parallel with per-replicate derived seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.replicates == 0 {
        return Err(Error::Scenario("replicates must be positive".into()));
    }
    config.scenario.validate()?;
    let start = Instant::now();
    let truths = truth_map(config)?;

    // derive independent replicate seeds from the master seed
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.replicates)
        .map(|_| rand::Rng::gen(&mut seed_rng))
        .collect();

    type RepOutcome = Result<(
        ReplicateEstimates,
        Option<BTreeMap<(Method, FitMode, String, String), bool>>,
    )>;
    let outcomes: Vec<RepOutcome> = seeds
        .par_iter()
        .map(|&rep_seed| {
            let sample = generate_sample(&config.scenario, rep_seed)?;
            let est = analyze_replicate(config, &sample)?;
            let cov = if config.bootstrap > 0 {
                Some(replicate_coverage(config, &sample, &truths, rep_seed ^ 0x9e37_79b9)?)
            } else {
                None
            };
            Ok((est, cov))
        })
        .collect();

    let mut estimates: BTreeMap<(Method, FitMode, String, String), Vec<f64>> = BTreeMap::new();
    let mut covered: BTreeMap<(Method, FitMode, String, String), (usize, usize)> = BTreeMap::new();
    let mut failed = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok((est, cov)) => {
                for (k, v) in est {
                    estimates.entry(k).or_default().push(v);
                }
                if let Some(cov) = cov {
                    for (k, hit) in cov {
                        let e = covered.entry(k).or_insert((0, 0));
                        e.0 += usize::from(hit);
                        e.1 += 1;
                    }
                }
            }
            Err(_) => failed += 1,
        }
    }
    let failure_rate = failed as f64 / config.replicates as f64;
    if failure_rate > MAX_FAILURE_RATE {
        return Err(Error::ExperimentFailureRate(failure_rate));
    }

    let mut summaries = Vec::new();
    for (key, vals) in &estimates {
        let (method, mode, pop, target) = key;
        let Some(&truth) = truths.get(key) else { continue };
        let n = vals.len();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mse = vals.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n as f64;
        let coverage = covered.get(key).map(|&(hits, total)| hits as f64 / total as f64);
        summaries.push(EstimandSummary {
            estimator: *method,
            mode: *mode,
            population: pop.clone(),
            target: target.clone(),
            true_value: truth,
            mean,
            bias: mean - truth,
            variance,
            mse,
            coverage,
            relative_efficiency: None,
            replicates_used: n,
        });
    }

    // RE of combined vs per-population fits, matched by estimator/target:
    // for a combined estimand the baseline MSE is the average of the
    // per-population MSEs weighted equally.
    if config.modes.contains(&FitMode::Combined) && config.modes.contains(&FitMode::PerPopulation)
    {
        let baseline: BTreeMap<(Method, String), f64> = {
            let mut acc: BTreeMap<(Method, String), (f64, usize)> = BTreeMap::new();
            for s in &summaries {
                if s.mode == FitMode::PerPopulation && s.target.starts_with("roc(") {
                    let e = acc.entry((s.estimator, s.target.clone())).or_insert((0.0, 0));
                    e.0 += s.mse;
                    e.1 += 1;
                }
            }
            acc.into_iter()
                .map(|(k, (sum, n))| (k, sum / n as f64))
                .collect()
        };
        for s in &mut summaries {
            if s.mode == FitMode::Combined && s.target.starts_with("roc(") {
                if let Some(&base_mse) = baseline.get(&(s.estimator, s.target.clone())) {
                    if s.mse > 0.0 {
                        s.relative_efficiency = Some(base_mse / s.mse);
                    }
                }
            }
        }
    }

    Ok(ExperimentReport {
        config: config.clone(),
        summaries,
        replicates_requested: config.replicates,
        replicates_failed: failed,
        degenerate_variance: config.replicates - failed <= 1,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-population relative efficiency of a combined fit against
/// population-specific fits of the same estimator, averaged over the ROC
/// grid. Helper for efficiency studies where the comparison is organized
/// by population rather than by time point.
pub fn population_re_over_grid(
    report: &ExperimentReport,
    estimator: Method,
    population: &str,
) -> Option<f64> {
    let t_grid = &report.config.t_grid;
    let mut ratios = Vec::new();
    for &t in t_grid {
        let target = format!("roc({t})");
        let combined = report.find(estimator, FitMode::Combined, "all", &target)?;
        let separate = report.find(estimator, FitMode::PerPopulation, population, &target)?;
        if combined.mse > 0.0 {
            ratios.push(separate.mse / combined.mse);
        }
    }
    if ratios.is_empty() {
        None
    } else {
        Some(ratios.iter().sum::<f64>() / ratios.len() as f64)
    }
}

/// Same estimator-vs-estimator structure for the nonparametric AROC:
/// returns per-replicate ROC(t) draws of the empirical pooled curve so
/// callers can compare efficiency against the model-based fits.
pub fn nonparametric_roc_draws(
    config: &ExperimentConfig,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.replicates)
        .map(|_| rand::Rng::gen(&mut seed_rng))
        .collect();
    let per_rep: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&rep_seed| {
            let sample = generate_sample(&config.scenario, rep_seed)?;
            let reference = fit_reference(&sample)?;
            let std = standardize_sample(&sample, &reference)?;
            let curve: StepRoc = estimators::fit_nonparametric_aroc(&std)?;
            Ok(config.t_grid.iter().map(|&t| curve.eval(t)).collect())
        })
        .collect();
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut failed = 0usize;
    for r in per_rep {
        match r {
            Ok(vals) => {
                for (&t, v) in config.t_grid.iter().zip(vals) {
                    out.entry(format!("roc({t})")).or_default().push(v);
                }
            }
            Err(_) => failed += 1,
        }
    }
    if failed as f64 / config.replicates as f64 > MAX_FAILURE_RATE {
        return Err(Error::ExperimentFailureRate(
            failed as f64 / config.replicates as f64,
        ));
    }
    Ok(out)
}
