//! Placement-value standardization against per-stratum control reference
//! distributions.
//!
//! The placement value of a marker value `y` in stratum `x` is the
//! proportion of stratum-`x` control markers strictly greater than `y`.
//! The procedure is rank invariant: any strictly increasing transform of
//! the marker leaves every placement value unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::StudySample;
use crate::error::{Error, Result};

/// How ties between a marker value and reference controls are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRule {
    /// Ties count as "not above" (strict indicator). The default.
    #[default]
    Strict,
    /// Ties count one half; useful for rounded continuous markers.
    Midrank,
}

/// Per-stratum sorted control marker values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSet {
    controls: BTreeMap<String, Vec<f64>>,
}

impl ReferenceSet {
    /// Sorted control values for a stratum.
    pub fn controls(&self, stratum: &str) -> Option<&[f64]> {
        self.controls.get(stratum).map(|v| v.as_slice())
    }

    pub fn control_count(&self, stratum: &str) -> Option<usize> {
        self.controls.get(stratum).map(|v| v.len())
    }

    pub fn strata(&self) -> impl Iterator<Item = &str> {
        self.controls.keys().map(|s| s.as_str())
    }
}

/// Build the control reference distributions of a sample.
///
/// Errors if any stratum present in the sample has no controls.
pub fn fit_reference(sample: &StudySample) -> Result<ReferenceSet> {
    let mut controls: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for stratum in sample.strata() {
        controls.insert(stratum, Vec::new());
    }
    for r in &sample.records {
        if !r.d {
            controls.get_mut(&r.x).expect("stratum registered above").push(r.y);
        }
    }
    for (stratum, vals) in &mut controls {
        if vals.is_empty() {
            return Err(Error::NoControls(stratum.clone()));
        }
        vals.sort_by(|a, b| a.total_cmp(b));
    }
    Ok(ReferenceSet { controls })
}

/// Placement value: proportion of stratum controls strictly above `y`
/// (under [`TieRule::Midrank`], ties contribute one half).
pub fn placement_value_with(ref_set: &ReferenceSet, y: f64, stratum: &str, ties: TieRule) -> Result<f64> {
    let vals = ref_set
        .controls(stratum)
        .ok_or_else(|| Error::UnknownStratum(stratum.to_string()))?;
    let n = vals.len() as f64;
    // first index with v > y; values are sorted ascending
    let above = vals.len() - vals.partition_point(|&v| v <= y);
    match ties {
        TieRule::Strict => Ok(above as f64 / n),
        TieRule::Midrank => {
            let not_below = vals.len() - vals.partition_point(|&v| v < y);
            let tied = not_below - above;
            Ok((above as f64 + 0.5 * tied as f64) / n)
        }
    }
}

/// Placement value under the default strict tie rule.
pub fn placement_value(ref_set: &ReferenceSet, y: f64, stratum: &str) -> Result<f64> {
    placement_value_with(ref_set, y, stratum, TieRule::Strict)
}

/// Frequency-matched placement value: mixture of per-stratum placement
/// values with the supplied control stratum weights.
pub fn frequency_matched_placement(
    ref_set: &ReferenceSet,
    y: f64,
    stratum_weights: &BTreeMap<String, f64>,
) -> Result<f64> {
    let total: f64 = stratum_weights.values().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::WeightsNotNormalized(total));
    }
    let mut u = 0.0;
    for (stratum, &w) in stratum_weights {
        if w < 0.0 {
            return Err(Error::WeightsNotNormalized(total));
        }
        u += w * placement_value(ref_set, y, stratum)?;
    }
    Ok(u)
}

/// A study sample with estimated placement values attached to every record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizedSample {
    pub sample: StudySample,
    /// One placement value per record, aligned with `sample.records`.
    pub u_hat: Vec<f64>,
}

impl StandardizedSample {
    /// Placement values of the case records, in record order.
    pub fn case_u(&self) -> Vec<f64> {
        self.iter()
            .filter_map(|(r, u)| r.d.then_some(u))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&crate::dataset::SubjectRecord, f64)> {
        self.sample.records.iter().zip(self.u_hat.iter().copied())
    }
}

/// Attach placement values to every record of a sample (cases and
/// controls alike), standardizing against `ref_set`.
pub fn standardize_sample(sample: &StudySample, ref_set: &ReferenceSet) -> Result<StandardizedSample> {
    standardize_sample_with(sample, ref_set, TieRule::Strict)
}

pub fn standardize_sample_with(
    sample: &StudySample,
    ref_set: &ReferenceSet,
    ties: TieRule,
) -> Result<StandardizedSample> {
    let u_hat = sample
        .records
        .iter()
        .map(|r| placement_value_with(ref_set, r.y, &r.x, ties))
        .collect::<Result<Vec<_>>>()?;
    Ok(StandardizedSample {
        sample: sample.clone(),
        u_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{StudyDesign, SubjectRecord};

    fn rec(d: bool, y: f64, x: &str) -> SubjectRecord {
        SubjectRecord { d, y, x: x.into() }
    }

    fn one_stratum(controls: &[f64]) -> ReferenceSet {
        let records: Vec<_> = controls.iter().map(|&y| rec(false, y, "a")).collect();
        fit_reference(&StudySample::new(records, StudyDesign::cohort())).unwrap()
    }

    #[test]
    fn reference_sorts_controls() {
        let r = one_stratum(&[3.0, 1.0, 2.0]);
        assert_eq!(r.controls("a").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(r.control_count("a"), Some(3));
    }

    #[test]
    fn reference_counts_per_stratum() {
        let records = vec![
            rec(false, 1.0, "a"),
            rec(false, 2.0, "a"),
            rec(false, 1.0, "b"),
            rec(false, 2.0, "b"),
            rec(false, 3.0, "b"),
        ];
        let r = fit_reference(&StudySample::new(records, StudyDesign::cohort())).unwrap();
        assert_eq!(r.control_count("a"), Some(2));
        assert_eq!(r.control_count("b"), Some(3));
    }

    #[test]
    fn cases_only_stratum_is_an_error() {
        let records = vec![rec(false, 1.0, "a"), rec(true, 2.0, "b")];
        let err = fit_reference(&StudySample::new(records, StudyDesign::cohort())).unwrap_err();
        assert!(matches!(err, Error::NoControls(s) if s == "b"));
    }

    #[test]
    fn placement_counts_strictly_above() {
        let r = one_stratum(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(placement_value(&r, 2.5, "a").unwrap(), 0.5);
        assert_eq!(placement_value(&r, 0.0, "a").unwrap(), 1.0);
        assert_eq!(placement_value(&r, 4.0, "a").unwrap(), 0.0);
    }

    #[test]
    fn midrank_counts_ties_by_half() {
        let r = one_stratum(&[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(placement_value_with(&r, 2.0, "a", TieRule::Strict).unwrap(), 0.25);
        assert_eq!(placement_value_with(&r, 2.0, "a", TieRule::Midrank).unwrap(), 0.5);
    }

    #[test]
    fn unknown_stratum_is_an_error() {
        let r = one_stratum(&[1.0]);
        assert!(matches!(placement_value(&r, 1.0, "zzz"), Err(Error::UnknownStratum(_))));
    }

    #[test]
    fn control_placements_are_grid_multiples() {
        let controls = [0.3, 1.7, -0.2, 2.4, 0.9];
        let records: Vec<_> = controls.iter().map(|&y| rec(false, y, "a")).collect();
        let sample = StudySample::new(records, StudyDesign::cohort());
        let refs = fit_reference(&sample).unwrap();
        let std = standardize_sample(&sample, &refs).unwrap();
        let mut u = std.u_hat.clone();
        u.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..5).map(|k| k as f64 / 5.0).collect();
        assert_eq!(u, expected);
    }

    #[test]
    fn rank_invariance_under_monotone_transform() {
        let records = vec![
            rec(false, 0.3, "a"),
            rec(true, 1.1, "a"),
            rec(false, -0.5, "a"),
            rec(true, 0.4, "a"),
            rec(false, 2.0, "a"),
        ];
        let sample = StudySample::new(records.clone(), StudyDesign::cohort());
        let transformed = StudySample::new(
            records
                .iter()
                .map(|r| SubjectRecord { d: r.d, y: r.y.exp(), x: r.x.clone() })
                .collect(),
            StudyDesign::cohort(),
        );
        let u1 = standardize_sample(&sample, &fit_reference(&sample).unwrap()).unwrap();
        let u2 = standardize_sample(&transformed, &fit_reference(&transformed).unwrap()).unwrap();
        assert_eq!(u1.u_hat, u2.u_hat);
    }

    #[test]
    fn frequency_matched_mixture() {
        let records = vec![
            rec(false, 1.0, "s1"),
            rec(false, 2.0, "s1"),
            rec(false, 3.0, "s2"),
            rec(false, 4.0, "s2"),
        ];
        let refs = fit_reference(&StudySample::new(records, StudyDesign::cohort())).unwrap();
        let mut w = BTreeMap::new();
        w.insert("s1".to_string(), 0.5);
        w.insert("s2".to_string(), 0.5);
        assert_eq!(frequency_matched_placement(&refs, 2.5, &w).unwrap(), 0.5);

        // single stratum, weight 1 degenerates to placement_value
        let mut w1 = BTreeMap::new();
        w1.insert("s1".to_string(), 1.0);
        assert_eq!(
            frequency_matched_placement(&refs, 1.5, &w1).unwrap(),
            placement_value(&refs, 1.5, "s1").unwrap()
        );

        let mut bad = BTreeMap::new();
        bad.insert("s1".to_string(), 0.3);
        bad.insert("s2".to_string(), 0.6);
        assert!(matches!(
            frequency_matched_placement(&refs, 2.5, &bad),
            Err(Error::WeightsNotNormalized(_))
        ));
    }
}
