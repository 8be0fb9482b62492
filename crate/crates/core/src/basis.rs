//! Polynomial basis r(u) for the log ROC derivative G(u) = b0 + b1' r(u).

use serde::{Deserialize, Serialize};

/// Polynomial basis r(u) = (u, u^2, ..., u^degree).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        assert!(degree >= 1, "basis degree must be at least 1");
        BasisSpec { degree }
    }

    /// Basis dimension (length of r(u)).
    pub fn dim(&self) -> usize {
        self.degree
    }

    /// Evaluate r(u) into `out` (length `dim`).
    pub fn eval_into(&self, u: f64, out: &mut [f64]) {
        let mut p = 1.0;
        for slot in out.iter_mut() {
            p *= u;
            *slot = p;
        }
    }

    pub fn eval(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(u, &mut out);
        out
    }

    /// b1' r(u).
    pub fn dot(&self, beta1: &[f64], u: f64) -> f64 {
        debug_assert_eq!(beta1.len(), self.dim());
        let mut acc = 0.0;
        let mut p = 1.0;
        for &b in beta1 {
            p *= u;
            acc += b * p;
        }
        acc
    }

    /// d/du of b1' r(u).
    pub fn dot_derivative(&self, beta1: &[f64], u: f64) -> f64 {
        let mut acc = 0.0;
        let mut p = 1.0;
        for (k, &b) in beta1.iter().enumerate() {
            acc += b * (k + 1) as f64 * p;
            p *= u;
        }
        acc
    }
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::polynomial(2)
    }
}
