//! Scenario-driven data generation for the two-population simulation
//! design, plus analytic truth computation.
//!
//! Cases are generated on the placement-value scale: the distribution of
//! a case's placement value is the common ROC curve, so a uniform draw is
//! pushed through the inverse ROC and then through the control quantile
//! function to produce a marker value.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};

use crate::basis::BasisSpec;
use crate::dataset::{StudyDesign, StudySample, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimators::{solve_constrained_beta0, Method, RiskModelFit, QUAD_TOL};
use crate::glm::{expit, logit};
use crate::optim::{self, OptimOptions};
use crate::quad;

/// Calibrated quadratic-basis coefficients of the default scenario's true
/// log ROC derivative, fitted by least squares to the reference ROC values
/// in [`DEFAULT_TRUE_ROC`] under the ROC(1)=1 constraint.
pub const DEFAULT_TRUE_BETA1: [f64; 2] = [-3.761900300046087, 1.449103737618795];

/// Reference (t, ROC(t)) values the default scenario is calibrated to.
pub const DEFAULT_TRUE_ROC: [(f64, f64); 5] = [
    (0.1, 0.27),
    (0.3, 0.59),
    (0.5, 0.77),
    (0.7, 0.89),
    (0.9, 0.97),
];

/// Control marker distribution of a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlDist {
    Normal { mean: f64, sd: f64 },
    LogNormal { log_mean: f64, log_sd: f64 },
}

impl ControlDist {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ControlDist::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("valid normal").sample(rng)
            }
            ControlDist::LogNormal { log_mean, log_sd } => {
                LogNormal::new(log_mean, log_sd).expect("valid lognormal").sample(rng)
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            ControlDist::Normal { mean, sd } => Normal::new(mean, sd).unwrap().cdf(y),
            ControlDist::LogNormal { log_mean, log_sd } => {
                LogNormal::new(log_mean, log_sd).unwrap().cdf(y)
            }
        }
    }

    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            ControlDist::Normal { mean, sd } => Normal::new(mean, sd).unwrap().inverse_cdf(q),
            ControlDist::LogNormal { log_mean, log_sd } => {
                LogNormal::new(log_mean, log_sd).unwrap().inverse_cdf(q)
            }
        }
    }

    /// True placement value of marker `y`: P(Y > y | control).
    pub fn placement(&self, y: f64) -> f64 {
        1.0 - self.cdf(y)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub label: String,
    /// Disease prevalence in (0,1).
    pub prevalence: f64,
    pub control_dist: ControlDist,
    /// Subjects generated for this population (fixed, not Bernoulli-split).
    pub n: usize,
    /// Optional AUC multiplier for this population's true ROC (the
    /// unequal-ROC robustness scenario); realized as a power transform
    /// ROC(t)^gamma with gamma solved to hit the target AUC ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub populations: Vec<PopulationSpec>,
    /// True basis coefficients of the common log ROC derivative.
    pub beta1: Vec<f64>,
    pub basis: BasisSpec,
    /// Default seed for data generation.
    pub seed: u64,
}

impl Scenario {
    /// The default two-population scenario: prevalences 0.44 and 0.27,
    /// N(0,1) and N(1,1) controls, 300 subjects per population, and the
    /// calibrated quadratic common ROC.
    pub fn default_two_population() -> Self {
        Scenario {
            populations: vec![
                PopulationSpec {
                    label: "pop1".into(),
                    prevalence: 0.44,
                    control_dist: ControlDist::Normal { mean: 0.0, sd: 1.0 },
                    n: 300,
                    auc_ratio: None,
                },
                PopulationSpec {
                    label: "pop2".into(),
                    prevalence: 0.27,
                    control_dist: ControlDist::Normal { mean: 1.0, sd: 1.0 },
                    n: 300,
                    auc_ratio: None,
                },
            ],
            beta1: DEFAULT_TRUE_BETA1.to_vec(),
            basis: BasisSpec::polynomial(2),
            seed: 20130634,
        }
    }

    /// Variant with 100 subjects per population.
    pub fn small_sample() -> Self {
        let mut s = Self::default_two_population();
        for p in &mut s.populations {
            p.n = 100;
        }
        s
    }

    /// Variant with LogNormal(1,1) controls in population 2.
    pub fn lognormal_controls() -> Self {
        let mut s = Self::default_two_population();
        s.populations[1].control_dist = ControlDist::LogNormal { log_mean: 1.0, log_sd: 1.0 };
        s
    }

    /// Variant with population-2 AUC inflated by 5%.
    pub fn unequal_auc() -> Self {
        let mut s = Self::default_two_population();
        s.populations[1].auc_ratio = Some(1.05);
        s
    }

    /// Built-in scenario by name, for CLI convenience.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_two_population()),
            "small-sample" => Some(Self::small_sample()),
            "lognormal-controls" => Some(Self::lognormal_controls()),
            "unequal-auc" => Some(Self::unequal_auc()),
            _ => None,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(json).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.populations.is_empty() {
            return Err(Error::Scenario("no populations".into()));
        }
        for p in &self.populations {
            if !(p.prevalence > 0.0 && p.prevalence < 1.0) {
                return Err(Error::InvalidPrevalence(p.prevalence));
            }
            if p.n == 0 {
                return Err(Error::Scenario(format!("population {} has n = 0", p.label)));
            }
            if let Some(r) = p.auc_ratio {
                if r <= 0.0 {
                    return Err(Error::Scenario(format!("auc_ratio {r} must be positive")));
                }
            }
        }
        if self.beta1.len() != self.basis.dim() {
            return Err(Error::Scenario("beta1 length does not match basis".into()));
        }
        Ok(())
    }

    /// Intercept forced by the ROC(1)=1 constraint.
    pub fn beta0(&self) -> Result<f64> {
        solve_constrained_beta0(&self.beta1, &self.basis)
    }

    /// The common true ROC as a constrained risk-model fit.
    pub fn base_roc(&self) -> Result<RiskModelFit> {
        Ok(RiskModelFit {
            beta0: self.beta0()?,
            beta1: self.beta1.clone(),
            basis: self.basis,
            method: Method::Cml,
            offsets: Vec::new(),
            stratum_prevalences: self
                .populations
                .iter()
                .map(|p| (p.label.clone(), p.prevalence))
                .collect(),
        })
    }

    /// The true ROC curve of a specific population, including any
    /// perturbation.
    pub fn population_roc(&self, pop: &PopulationSpec) -> Result<TrueRoc> {
        let base = self.base_roc()?;
        match pop.auc_ratio {
            None => Ok(TrueRoc { fit: base, gamma: 1.0 }),
            Some(ratio) => {
                let gamma = solve_auc_power(&base, ratio)?;
                Ok(TrueRoc { fit: base, gamma })
            }
        }
    }
}

/// A true ROC curve: the parametric common curve, optionally raised to a
/// power to perturb its AUC.
#[derive(Debug, Clone)]
pub struct TrueRoc {
    pub fit: RiskModelFit,
    pub gamma: f64,
}

impl TrueRoc {
    pub fn roc(&self, t: f64) -> Result<f64> {
        let base = quad::integrate(|u| self.fit.g(u).exp(), 0.0, t, QUAD_TOL)?;
        Ok(base.powf(self.gamma))
    }

    /// log ROC'(t) of the (possibly powered) curve.
    pub fn g(&self, t: f64) -> Result<f64> {
        if self.gamma == 1.0 {
            return Ok(self.fit.g(t));
        }
        let base = quad::integrate(|u| self.fit.g(u).exp(), 0.0, t, QUAD_TOL)?;
        // d/dt base^gamma = gamma base^(gamma-1) base'
        Ok(self.gamma.ln() + (self.gamma - 1.0) * base.ln() + self.fit.g(t))
    }

    pub fn auc(&self) -> Result<f64> {
        quad::integrate(
            |t| {
                let base = quad::integrate(|u| self.fit.g(u).exp(), 0.0, t, 1e-11).unwrap_or(f64::NAN);
                base.powf(self.gamma)
            },
            0.0,
            1.0,
            1e-9,
        )
    }

    /// Invert ROC by bisection: the t with ROC(t) = q.
    pub fn inverse(&self, q: f64) -> Result<f64> {
        debug_assert!((0.0..=1.0).contains(&q));
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.roc(mid)?;
            if v < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::RocInversionFailure)
    }
}

/// Solve for gamma so that the AUC of ROC^gamma equals `ratio` times the
/// base AUC. Memoized: repeated generation from the same scenario is the
/// common case and the solve involves nested quadrature.
fn solve_auc_power(base: &RiskModelFit, ratio: f64) -> Result<f64> {
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<std::collections::HashMap<Vec<u64>, f64>>> = OnceLock::new();
    let mut key: Vec<u64> = vec![base.beta0.to_bits(), ratio.to_bits()];
    key.extend(base.beta1.iter().map(|b| b.to_bits()));
    let cache = CACHE.get_or_init(|| Mutex::new(std::collections::HashMap::new()));
    if let Some(&g) = cache.lock().unwrap().get(&key) {
        return Ok(g);
    }
    let g = solve_auc_power_uncached(base, ratio)?;
    cache.lock().unwrap().insert(key, g);
    Ok(g)
}

fn solve_auc_power_uncached(base: &RiskModelFit, ratio: f64) -> Result<f64> {
    let base_curve = TrueRoc { fit: base.clone(), gamma: 1.0 };
    let target = (base_curve.auc()? * ratio).min(0.9999);
    // AUC of ROC^gamma decreases in gamma
    let (mut lo, mut hi) = (1e-3_f64, 1.0_f64);
    let auc_at = |g: f64| -> Result<f64> {
        TrueRoc { fit: base.clone(), gamma: g }.auc()
    };
    while auc_at(hi)? > target {
        // should not happen for ratio > 1, but keep the bracket safe
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::RocInversionFailure);
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if auc_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generate a study sample from the scenario. Deterministic given
/// `(scenario, seed)`. Population sizes are fixed; disease labels are
/// Bernoulli(prevalence) within population.
pub fn generate_sample(scn: &Scenario, seed: u64) -> Result<StudySample> {
    scn.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for pop in &scn.populations {
        let roc = scn.population_roc(pop)?;
        for _ in 0..pop.n {
            let d = rng.gen_bool(pop.prevalence);
            let y = if d {
                let q: f64 = rng.gen();
                let u = roc.inverse(q)?;
                // placement u corresponds to the control upper-tail quantile
                pop.control_dist.quantile((1.0 - u).clamp(1e-12, 1.0 - 1e-12))
            } else {
                pop.control_dist.sample(&mut rng)
            };
            records.push(SubjectRecord { d, y, x: pop.label.clone() });
        }
    }
    Ok(StudySample::new(records, StudyDesign::cohort()))
}

/// Analytic truth for the scenario at requested evaluation points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthTable {
    pub beta0: f64,
    pub beta1: Vec<f64>,
    /// (t, common ROC(t)); for perturbed scenarios this is the base curve.
    pub roc: Vec<(f64, f64)>,
    /// Per population: (y, true Risk(y|x)).
    pub risk: BTreeMap<String, Vec<(f64, f64)>>,
    /// Per population: (p, true CDF_R(p)).
    pub cdf: BTreeMap<String, Vec<(f64, f64)>>,
}

/// Compute the scenario's true ROC, risk, and risk-CDF values.
pub fn scenario_truth(
    scn: &Scenario,
    t_grid: &[f64],
    y_grids: &BTreeMap<String, Vec<f64>>,
    p_grids: &BTreeMap<String, Vec<f64>>,
) -> Result<TruthTable> {
    scn.validate()?;
    let base = scn.base_roc()?;
    let mut roc = Vec::new();
    for &t in t_grid {
        roc.push((t, quad::integrate(|u| base.g(u).exp(), 0.0, t, QUAD_TOL)?));
    }

    let mut risk = BTreeMap::new();
    let mut cdf = BTreeMap::new();
    for pop in &scn.populations {
        let curve = scn.population_roc(pop)?;
        if let Some(ys) = y_grids.get(&pop.label) {
            let mut rows = Vec::new();
            for &y in ys {
                let u = pop.control_dist.placement(y);
                rows.push((y, expit(logit(pop.prevalence) + curve.g(u)?)));
            }
            risk.insert(pop.label.clone(), rows);
        }
        if let Some(ps) = p_grids.get(&pop.label) {
            let mut rows = Vec::new();
            for &p in ps {
                rows.push((p, true_risk_cdf(&curve, pop.prevalence, p)?));
            }
            cdf.insert(pop.label.clone(), rows);
        }
    }

    Ok(TruthTable {
        beta0: scn.beta0()?,
        beta1: scn.beta1.clone(),
        roc,
        risk,
        cdf,
    })
}

/// Risk-CDF of a (possibly perturbed) true ROC curve via the root solve.
pub fn true_risk_cdf(curve: &TrueRoc, prevalence: f64, p: f64) -> Result<f64> {
    let risk_of_t = |t: f64| -> Result<f64> { Ok(expit(logit(prevalence) + curve.g(t)?)) };
    if p >= risk_of_t(1e-12)? {
        return Ok(1.0);
    }
    if p <= risk_of_t(1.0 - 1e-12)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (1e-12_f64, 1.0 - 1e-12_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if risk_of_t(mid)? > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(1.0 - (1.0 - prevalence) * t - prevalence * curve.roc(t)?)
}

/// Refit the default scenario's true coefficients: least squares on the
/// reference ROC values with beta0 profiled out by the constraint.
/// [`DEFAULT_TRUE_BETA1`] is the frozen output of this procedure.
pub fn calibrate_default_beta() -> Result<Vec<f64>> {
    let basis = BasisSpec::polynomial(2);
    let objective = |beta1: &[f64]| -> f64 {
        let beta0 = match solve_constrained_beta0(beta1, &basis) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let mut sse = 0.0;
        for &(t, target) in &DEFAULT_TRUE_ROC {
            let roc = quad::integrate(|u| (beta0 + basis.dot(beta1, u)).exp(), 0.0, t, 1e-10)
                .unwrap_or(f64::NAN);
            sse += (roc - target).powi(2);
        }
        // decreasing-G constraint: penalize positive slope at the endpoints
        let pen0 = basis.dot_derivative(beta1, 0.0).max(0.0);
        let pen1 = basis.dot_derivative(beta1, 1.0).max(0.0);
        sse + 10.0 * (pen0 * pen0 + pen1 * pen1)
    };
    let opts = OptimOptions { grad_tol: 1e-9, ..Default::default() };
    let r = optim::minimize(objective, &[-4.0, 1.0], &opts)?;
    Ok(r.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frozen_beta_reproduces_reference_roc() {
        let scn = Scenario::default_two_population();
        let truth = scenario_truth(
            &scn,
            &[0.1, 0.3, 0.5, 0.7, 0.9],
            &BTreeMap::new(),
            &BTreeMap::new(),
        )
        .unwrap();
        for ((t, roc), (t_ref, target)) in truth.roc.iter().zip(DEFAULT_TRUE_ROC) {
            assert_eq!(*t, t_ref);
            assert_abs_diff_eq!(*roc, target, epsilon = 0.005);
        }
        assert_abs_diff_eq!(truth.beta0, 1.15868, epsilon = 1e-4);
    }

    #[test]
    fn calibration_recovers_frozen_beta() {
        let b = calibrate_default_beta().unwrap();
        assert_abs_diff_eq!(b[0], DEFAULT_TRUE_BETA1[0], epsilon = 1e-3);
        assert_abs_diff_eq!(b[1], DEFAULT_TRUE_BETA1[1], epsilon = 1e-3);
    }

    #[test]
    fn chance_scenario_truth() {
        let mut scn = Scenario::default_two_population();
        scn.beta1 = vec![0.0, 0.0];
        let mut p_grids = BTreeMap::new();
        p_grids.insert("pop1".to_string(), vec![0.2, 0.6]);
        let mut y_grids = BTreeMap::new();
        y_grids.insert("pop1".to_string(), vec![-1.0, 0.0, 1.0]);
        let truth = scenario_truth(&scn, &[0.25, 0.5, 0.75], &y_grids, &p_grids).unwrap();
        for &(t, roc) in &truth.roc {
            assert_abs_diff_eq!(roc, t, epsilon = 1e-9);
        }
        for &(_, risk) in &truth.risk["pop1"] {
            assert_abs_diff_eq!(risk, 0.44, epsilon = 1e-9);
        }
        // risk degenerate at prevalence: CDF is 0 below, 1 above
        assert_eq!(truth.cdf["pop1"][0].1, 0.0);
        assert_eq!(truth.cdf["pop1"][1].1, 1.0);
    }

    #[test]
    fn truth_matches_table_values() {
        let scn = Scenario::default_two_population();
        let mut y_grids = BTreeMap::new();
        y_grids.insert("pop1".to_string(), vec![-1.1]);
        y_grids.insert("pop2".to_string(), vec![-0.2]);
        let mut p_grids = BTreeMap::new();
        p_grids.insert("pop1".to_string(), vec![0.43, 0.67]);
        let truth = scenario_truth(&scn, &[], &y_grids, &p_grids).unwrap();
        assert_abs_diff_eq!(truth.risk["pop1"][0].1, 0.22, epsilon = 0.01);
        assert_abs_diff_eq!(truth.risk["pop2"][0].1, 0.12, epsilon = 0.01);
        assert_abs_diff_eq!(truth.cdf["pop1"][0].1, 0.50, epsilon = 0.01);
        assert_abs_diff_eq!(truth.cdf["pop1"][1].1, 0.90, epsilon = 0.01);
    }

    #[test]
    fn generation_is_deterministic() {
        let scn = Scenario::default_two_population();
        let a = generate_sample(&scn, 5).unwrap();
        let b = generate_sample(&scn, 5).unwrap();
        assert_eq!(a.records, b.records);
        let c = generate_sample(&scn, 6).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn case_fractions_and_control_means_in_band() {
        let scn = Scenario::default_two_population();
        let sample = generate_sample(&scn, 99).unwrap();
        let counts = sample.stratum_counts();
        for (pop, rho) in [("pop1", 0.44), ("pop2", 0.27)] {
            let (cases, controls) = counts[pop];
            let n = (cases + controls) as f64;
            let frac = cases as f64 / n;
            let band = 3.0 * (rho * (1.0 - rho) / n).sqrt();
            assert!((frac - rho).abs() <= band, "{pop}: {frac} vs {rho}");
        }
        let pop1_controls: Vec<f64> = sample
            .records
            .iter()
            .filter(|r| !r.d && r.x == "pop1")
            .map(|r| r.y)
            .collect();
        let mean = pop1_controls.iter().sum::<f64>() / pop1_controls.len() as f64;
        assert!(mean.abs() <= 3.0 / (pop1_controls.len() as f64).sqrt());
    }

    #[test]
    fn case_placements_follow_true_roc() {
        // KS test of generated case placement values against the ROC
        let mut scn = Scenario::default_two_population();
        scn.populations.truncate(1);
        scn.populations[0].n = 100_000;
        scn.populations[0].prevalence = 0.5;
        let sample = generate_sample(&scn, 2024).unwrap();
        let curve = scn.population_roc(&scn.populations[0]).unwrap();
        let dist = scn.populations[0].control_dist;
        let mut us: Vec<f64> = sample
            .records
            .iter()
            .filter(|r| r.d)
            .map(|r| dist.placement(r.y))
            .collect();
        us.sort_by(f64::total_cmp);
        let n = us.len();
        let mut ks: f64 = 0.0;
        for (k, &u) in us.iter().enumerate() {
            let f = curve.roc(u).unwrap();
            ks = ks.max((f - k as f64 / n as f64).abs());
            ks = ks.max((f - (k + 1) as f64 / n as f64).abs());
        }
        // level-0.01 KS critical value
        let crit = 1.63 / (n as f64).sqrt();
        assert!(ks <= crit, "KS {ks} > {crit}");
    }

    #[test]
    fn control_placements_are_uniform() {
        let mut scn = Scenario::default_two_population();
        scn.populations.truncate(1);
        scn.populations[0].n = 50_000;
        let sample = generate_sample(&scn, 7).unwrap();
        let dist = scn.populations[0].control_dist;
        let mut us: Vec<f64> = sample
            .records
            .iter()
            .filter(|r| !r.d)
            .map(|r| dist.placement(r.y))
            .collect();
        us.sort_by(f64::total_cmp);
        let n = us.len();
        let mut ks: f64 = 0.0;
        for (k, &u) in us.iter().enumerate() {
            ks = ks.max((u - k as f64 / n as f64).abs());
            ks = ks.max((u - (k + 1) as f64 / n as f64).abs());
        }
        assert!(ks <= 1.63 / (n as f64).sqrt(), "KS {ks}");
    }

    #[test]
    fn unequal_auc_scenario_inflates_auc() {
        let scn = Scenario::unequal_auc();
        let base = scn.population_roc(&scn.populations[0]).unwrap();
        let perturbed = scn.population_roc(&scn.populations[1]).unwrap();
        let ratio = perturbed.auc().unwrap() / base.auc().unwrap();
        assert_abs_diff_eq!(ratio, 1.05, epsilon = 1e-4);
        assert!(perturbed.gamma < 1.0);
    }

    #[test]
    fn scenario_json_round_trip() {
        let scn = Scenario::unequal_auc();
        let json = serde_json::to_string_pretty(&scn).unwrap();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(back.populations.len(), 2);
        assert_eq!(back.populations[1].auc_ratio, Some(1.05));
        assert_eq!(back.beta1, scn.beta1);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut scn = Scenario::default_two_population();
        scn.populations[0].prevalence = 1.5;
        assert!(scn.validate().is_err());
        let mut scn2 = Scenario::default_two_population();
        scn2.beta1 = vec![1.0];
        assert!(scn2.validate().is_err());
    }

    #[test]
    fn risk_truth_matches_binned_simulation() {
        // empirical mean of D in a narrow marker bin vs analytic risk
        let mut scn = Scenario::default_two_population();
        scn.populations.truncate(1);
        scn.populations[0].n = 2_000_000;
        let sample = generate_sample(&scn, 31).unwrap();
        let y0 = 0.33; // true risk ~ 0.43 per the calibrated curve
        let half_width = 0.02;
        let (mut cases, mut total) = (0usize, 0usize);
        for r in &sample.records {
            if (r.y - y0).abs() <= half_width {
                total += 1;
                cases += usize::from(r.d);
            }
        }
        let empirical = cases as f64 / total as f64;
        let mut y_grids = BTreeMap::new();
        y_grids.insert("pop1".to_string(), vec![y0]);
        let truth = scenario_truth(&scn, &[], &y_grids, &BTreeMap::new()).unwrap();
        assert_abs_diff_eq!(empirical, truth.risk["pop1"][0].1, epsilon = 0.01);
    }
}
