//! The three common-ROC estimators (EML, CML, PSL), the nonparametric
//! covariate-adjusted ROC, and the ROC(1)=1 constraint solver.
//!
//! All three parametric estimators fit the risk model
//! `logit P(D=1|U,X) = offset(X) + b0 + b1' r(U)` where `G(u) = b0 + b1' r(u)`
//! is the log-derivative of the common ROC curve, so `ROC(t) =
//! integral_0^t exp{G(u)} du` and the constraint `ROC(1) = 1` pins b0
//! given b1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::glm::{self, OffsetVector};
use crate::optim::{self, OptimOptions};
use crate::quad;
use crate::standardize::StandardizedSample;

/// Absolute quadrature tolerance for the constraint integral.
pub const QUAD_TOL: f64 = 1e-10;
/// Grid size for monotonicity checks of the fitted G.
pub const MONOTONICITY_GRID: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Eml,
    Cml,
    Psl,
}

/// Whether a decreasing G(u) is enforced during optimization or merely
/// reported through [`RiskModelFit::g_is_decreasing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConcavityPolicy {
    #[default]
    Warn,
    Enforce,
}

/// Fitted coefficients of the risk model; fully determines the ROC curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskModelFit {
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub basis: BasisSpec,
    pub method: Method,
    /// Per-record offsets the fit was computed with (empty for PSL).
    pub offsets: Vec<f64>,
    /// Empirical or externally supplied stratum prevalences, when known.
    pub stratum_prevalences: std::collections::BTreeMap<String, f64>,
}

impl RiskModelFit {
    /// G(u) = b0 + b1' r(u), the fitted log ROC derivative.
    pub fn g(&self, u: f64) -> f64 {
        self.beta0 + self.basis.dot(&self.beta1, u)
    }

    /// d/du G(u).
    pub fn g_derivative(&self, u: f64) -> f64 {
        self.basis.dot_derivative(&self.beta1, u)
    }

    /// True when G is nonincreasing on a 1001-point grid over [0,1].
    pub fn g_is_decreasing(&self) -> bool {
        (0..MONOTONICITY_GRID).all(|k| {
            let u = k as f64 / (MONOTONICITY_GRID - 1) as f64;
            self.g_derivative(u) <= 1e-10
        })
    }

    /// Residual of the ROC(1)=1 constraint.
    pub fn constraint_residual(&self) -> Result<f64> {
        let v = quad::integrate(|t| self.g(t).exp(), 0.0, 1.0, QUAD_TOL)?;
        Ok(v - 1.0)
    }
}

/// Solve the ROC(1)=1 constraint for the intercept:
/// `b0 = -log integral_0^1 exp{b1' r(t)} dt`.
pub fn solve_constrained_beta0(beta1: &[f64], basis: &BasisSpec) -> Result<f64> {
    let integral = quad::integrate(|t| basis.dot(beta1, t).exp(), 0.0, 1.0, QUAD_TOL)?;
    Ok(-integral.ln())
}

/// Empirical/step ROC curve: right-continuous, nondecreasing jump points
/// with ROC(0)=0 and ROC(1)=1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRoc {
    /// Jump locations in [0,1], strictly increasing.
    pub t: Vec<f64>,
    /// Curve heights at and after each jump, nondecreasing in [0,1].
    pub height: Vec<f64>,
}

impl StepRoc {
    pub fn new(t: Vec<f64>, height: Vec<f64>) -> Self {
        debug_assert_eq!(t.len(), height.len());
        debug_assert!(t.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(height.windows(2).all(|w| w[0] <= w[1]));
        StepRoc { t, height }
    }

    /// Right-continuous evaluation; 0 before the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&tk| tk <= t);
        if k == 0 {
            0.0
        } else {
            self.height[k - 1]
        }
    }
}

/// Piecewise-linear concave curve through (0,0) and (1,1); the least
/// concave majorant of a step ROC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcaveRoc {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

impl ConcaveRoc {
    /// Linear interpolation between retained hull vertices.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t[0] {
            return self.value[0];
        }
        let last = self.t.len() - 1;
        if t >= self.t[last] {
            return self.value[last];
        }
        let k = self.t.partition_point(|&tk| tk <= t);
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (v0, v1) = (self.value[k - 1], self.value[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Least concave majorant of a step ROC, anchored at (0,0) and (1,1).
///
/// The LCM is the upper convex hull of the graph points, evaluated with
/// linear interpolation between retained vertices.
pub fn concavify(roc: &StepRoc) -> ConcaveRoc {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(roc.t.len() + 2);
    pts.push((0.0, 0.0));
    for (&t, &h) in roc.t.iter().zip(&roc.height) {
        if t > 0.0 && t <= 1.0 {
            pts.push((t, h));
        }
    }
    if pts.last().map(|&(t, _)| t < 1.0).unwrap_or(true) {
        pts.push((1.0, 1.0));
    } else {
        let last = pts.len() - 1;
        pts[last].1 = pts[last].1.max(1.0);
    }

    // monotone-chain upper hull: keep slopes strictly decreasing
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    ConcaveRoc {
        t: hull.iter().map(|p| p.0).collect(),
        value: hull.iter().map(|p| p.1).collect(),
    }
}

/// Nondecreasing step CDF over a discrete support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepCdf {
    /// Sorted distinct support points.
    pub support: Vec<f64>,
    /// Cumulative mass at each support point.
    pub cumulative: Vec<f64>,
}

impl StepCdf {
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= u);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn terminal(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }
}

/// EML fit: risk-model coefficients plus the empirical-likelihood masses
/// and the implied step CDFs of U for controls and cases.
#[derive(Debug, Clone)]
pub struct EmlFit {
    pub fit: RiskModelFit,
    /// Empirical-likelihood mass per record, aligned with the sample.
    pub p_hat: Vec<f64>,
    /// Step CDF of U among controls (common across strata).
    pub f_u_control: StepCdf,
    /// Step CDF of U among cases (common across strata).
    pub f_u_case: StepCdf,
}

impl EmlFit {
    /// The step ROC implied by the two CDFs: points (F_control(u), F_case(u)).
    pub fn step_roc(&self) -> StepRoc {
        let mut t = Vec::with_capacity(self.f_u_control.support.len());
        let mut h = Vec::with_capacity(t.capacity());
        for k in 0..self.f_u_control.support.len() {
            let tk = self.f_u_control.cumulative[k];
            let hk = self.f_u_case.cumulative[k];
            if let Some(&prev) = t.last() {
                if tk <= prev {
                    // merge numerically coincident jump locations
                    let last = h.len() - 1;
                    h[last] = hk;
                    continue;
                }
            }
            t.push(tk);
            h.push(hk);
        }
        StepRoc::new(t, h)
    }

    /// Concavified (least concave majorant) ROC estimate.
    pub fn concave_roc(&self) -> ConcaveRoc {
        concavify(&self.step_roc())
    }
}

/// Stratum prevalences recorded on a fit: the externally supplied map for
/// case-control designs, otherwise the empirical case fractions.
fn empirical_prevalences(std: &StandardizedSample) -> std::collections::BTreeMap<String, f64> {
    if let Some(map) = &std.sample.design.prevalence_by_stratum {
        return map.clone();
    }
    std.sample
        .stratum_counts()
        .into_iter()
        .map(|(s, (cases, controls))| (s, cases as f64 / (cases + controls) as f64))
        .collect()
}

/// Estimated empirical likelihood fit: logistic regression of D on r(U)
/// with the constant offset log(n_D/n_Dbar), then the closed-form
/// empirical-likelihood masses and step CDFs.
pub fn fit_eml(std: &StandardizedSample, basis: &BasisSpec) -> Result<EmlFit> {
    let n = std.sample.n();
    let n_d = std.sample.n_cases();
    let n_dbar = std.sample.n_controls();
    if n_d == 0 || n_dbar == 0 {
        return Err(Error::ConstantResponse);
    }
    let offset = (n_d as f64 / n_dbar as f64).ln();

    let dim = basis.dim();
    let features = DMatrix::from_fn(n, dim + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            std.u_hat[i].powi(j as i32)
        }
    });
    let response: Vec<f64> = std.sample.records.iter().map(|r| f64::from(r.d)).collect();
    let glm_fit = glm::fit_logistic_offset(&features, &response, &OffsetVector::constant(offset, n), None)?;

    let beta0 = glm_fit.coefficients[0];
    let beta1 = glm_fit.coefficients[1..].to_vec();
    let fit = RiskModelFit {
        beta0,
        beta1,
        basis: *basis,
        method: Method::Eml,
        offsets: vec![offset; n],
        stratum_prevalences: empirical_prevalences(std),
    };

    // p_i = 1 / [n_Dbar + n_D exp{G(U_i)}]
    let p_hat: Vec<f64> = std
        .u_hat
        .iter()
        .map(|&u| 1.0 / (n_dbar as f64 + n_d as f64 * fit.g(u).exp()))
        .collect();

    // step CDFs over the sorted U support, accumulating tie multiplicities
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| std.u_hat[a].total_cmp(&std.u_hat[b]));
    let mut support = Vec::new();
    let mut cum_control = Vec::new();
    let mut cum_case = Vec::new();
    let (mut acc_control, mut acc_case) = (0.0, 0.0);
    for &i in &order {
        let u = std.u_hat[i];
        let g_exp = fit.g(u).exp();
        acc_control += p_hat[i];
        acc_case += g_exp * p_hat[i];
        // scale control CDF: F_control(u) = sum p_i over U_i <= u ... masses
        // already sum to one by the beta0 score equation
        if support.last().map(|&s: &f64| s == u).unwrap_or(false) {
            let k = support.len() - 1;
            cum_control[k] = acc_control;
            cum_case[k] = acc_case;
        } else {
            support.push(u);
            cum_control.push(acc_control);
            cum_case.push(acc_case);
        }
    }

    Ok(EmlFit {
        fit,
        p_hat,
        f_u_control: StepCdf { support: support.clone(), cumulative: cum_control },
        f_u_case: StepCdf { support, cumulative: cum_case },
    })
}

struct ProfileObjective<'a> {
    basis: &'a BasisSpec,
    /// (response, offset, b1-dot precomputation input u) per record.
    records: Vec<(f64, f64, f64)>,
    concavity: ConcavityPolicy,
    penalty_scale: f64,
}

impl ProfileObjective<'_> {
    /// Negative estimated log-likelihood with beta0 profiled out.
    fn eval(&self, beta1: &[f64]) -> f64 {
        let beta0 = match solve_constrained_beta0(beta1, self.basis) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let mut nll = 0.0;
        for &(d, offset, u) in &self.records {
            let eta = offset + beta0 + self.basis.dot(beta1, u);
            let log1pe = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            nll -= d * eta - log1pe;
        }
        nll + self.concavity_penalty(beta1)
    }

    fn concavity_penalty(&self, beta1: &[f64]) -> f64 {
        if self.concavity != ConcavityPolicy::Enforce {
            return 0.0;
        }
        let grid = 101;
        let mut pen = 0.0;
        for k in 0..grid {
            let u = k as f64 / (grid - 1) as f64;
            let slope = self.basis.dot_derivative(beta1, u);
            if slope > 0.0 {
                pen += slope * slope;
            }
        }
        self.penalty_scale * pen
    }
}

fn multi_start_minimize(
    objective: impl Fn(&[f64]) -> f64,
    starts: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let opts = OptimOptions::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for start in starts {
        match optim::minimize(&objective, start, &opts) {
            Ok(r) => {
                if best.as_ref().map(|(_, v)| r.value < *v).unwrap_or(true) {
                    best = Some((r.x, r.value));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::OptimNonConvergence(f64::NAN)))
}

/// Constrained maximum likelihood: maximize the estimated Bernoulli
/// log-likelihood over the constraint manifold ROC(1)=1, with beta0
/// profiled out analytically.
pub fn fit_cml(
    std: &StandardizedSample,
    basis: &BasisSpec,
    offsets: &OffsetVector,
    concavity: ConcavityPolicy,
) -> Result<RiskModelFit> {
    let n = std.sample.n();
    assert_eq!(offsets.0.len(), n, "offsets must align with the sample");
    let n_d = std.sample.n_cases();
    if n_d == 0 || n_d == n {
        return Err(Error::ConstantResponse);
    }

    let records: Vec<(f64, f64, f64)> = std
        .iter()
        .zip(&offsets.0)
        .map(|((r, u), &o)| (f64::from(r.d), o, u))
        .collect();
    let objective = ProfileObjective {
        basis,
        records,
        concavity,
        penalty_scale: 1e4 * n as f64,
    };

    // multi-start: the EML coefficients and the chance line
    let mut starts = vec![vec![0.0; basis.dim()]];
    if let Ok(eml) = fit_eml(std, basis) {
        starts.insert(0, eml.fit.beta1);
    }
    let (beta1, _) = multi_start_minimize(|b| objective.eval(b), &starts)?;
    let beta0 = solve_constrained_beta0(&beta1, basis)?;

    Ok(RiskModelFit {
        beta0,
        beta1,
        basis: *basis,
        method: Method::Cml,
        offsets: offsets.0.clone(),
        stratum_prevalences: empirical_prevalences(std),
    })
}

/// Constrained pseudo-likelihood: maximize the log ROC derivative over the
/// case placement values, subject to ROC(1)=1.
pub fn fit_psl(case_us: &[f64], basis: &BasisSpec, concavity: ConcavityPolicy) -> Result<RiskModelFit> {
    fit_psl_from(case_us, basis, concavity, None)
}

/// [`fit_psl`] with an extra warm start (typically the EML coefficients).
pub fn fit_psl_from(
    case_us: &[f64],
    basis: &BasisSpec,
    concavity: ConcavityPolicy,
    warm_start: Option<&[f64]>,
) -> Result<RiskModelFit> {
    if case_us.is_empty() {
        return Err(Error::NoCasesInSample);
    }
    let n_case = case_us.len() as f64;
    let dim = basis.dim();
    // sum of r(U_i) over cases; the objective only depends on this total
    let mut r_sum = vec![0.0; dim];
    let mut r_buf = vec![0.0; dim];
    for &u in case_us {
        basis.eval_into(u, &mut r_buf);
        for (acc, &v) in r_sum.iter_mut().zip(&r_buf) {
            *acc += v;
        }
    }

    let penalty_scale = 1e4 * n_case;
    let objective = |beta1: &[f64]| -> f64 {
        let beta0 = match solve_constrained_beta0(beta1, basis) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let mut ll = n_case * beta0;
        for (b, &s) in beta1.iter().zip(&r_sum) {
            ll += b * s;
        }
        let mut pen = 0.0;
        if concavity == ConcavityPolicy::Enforce {
            let grid = 101;
            for k in 0..grid {
                let u = k as f64 / (grid - 1) as f64;
                let slope = basis.dot_derivative(beta1, u);
                if slope > 0.0 {
                    pen += slope * slope;
                }
            }
        }
        -ll + penalty_scale * pen
    };

    let mut starts = vec![vec![0.0; dim]];
    if let Some(w) = warm_start {
        starts.insert(0, w.to_vec());
    }
    let (beta1, _) = multi_start_minimize(objective, &starts)?;
    let beta0 = solve_constrained_beta0(&beta1, basis)?;

    Ok(RiskModelFit {
        beta0,
        beta1,
        basis: *basis,
        method: Method::Psl,
        offsets: Vec::new(),
        stratum_prevalences: Default::default(),
    })
}

/// Nonparametric covariate-adjusted ROC: the empirical CDF of case
/// placement values, as a step function on [0,1].
pub fn fit_nonparametric_aroc(std: &StandardizedSample) -> Result<StepRoc> {
    let mut case_us = std.case_u();
    if case_us.is_empty() {
        return Err(Error::NoCasesInSample);
    }
    case_us.sort_by(f64::total_cmp);
    let n = case_us.len() as f64;
    let mut t = Vec::new();
    let mut h = Vec::new();
    for (k, &u) in case_us.iter().enumerate() {
        let height = (k + 1) as f64 / n;
        if t.last().map(|&last: &f64| last == u).unwrap_or(false) {
            let idx = h.len() - 1;
            h[idx] = height;
        } else {
            t.push(u);
            h.push(height);
        }
    }
    Ok(StepRoc::new(t, h))
}
