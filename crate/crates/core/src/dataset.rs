//! Data model and CSV ingestion for cohort and case-control biomarker
//! studies with discrete covariate strata.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study subject: disease label, marker value, covariate stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    /// Disease label: `false` control, `true` case.
    pub d: bool,
    /// Marker value (finite).
    pub y: f64,
    /// Stratum identifier, taken verbatim from the input.
    pub x: String,
}

/// Sampling design of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    Cohort,
    CaseControl,
}

/// Design tag plus externally supplied prevalences for case-control data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub kind: DesignKind,
    /// External disease prevalence per stratum; required to report absolute
    /// risks under a case-control design, never estimated from the sample.
    pub prevalence_by_stratum: Option<BTreeMap<String, f64>>,
}

impl StudyDesign {
    pub fn cohort() -> Self {
        StudyDesign {
            kind: DesignKind::Cohort,
            prevalence_by_stratum: None,
        }
    }

    pub fn case_control(prevalences: BTreeMap<String, f64>) -> Result<Self> {
        for &p in prevalences.values() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidPrevalence(p));
            }
        }
        Ok(StudyDesign {
            kind: DesignKind::CaseControl,
            prevalence_by_stratum: Some(prevalences),
        })
    }
}

/// Column-name map for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub d: String,
    pub y: String,
    pub x: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            d: "d".into(),
            y: "y".into(),
            x: "x".into(),
        }
    }
}

/// Immutable collection of subject records plus the study design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySample {
    pub records: Vec<SubjectRecord>,
    pub design: StudyDesign,
}

impl StudySample {
    pub fn new(records: Vec<SubjectRecord>, design: StudyDesign) -> Self {
        StudySample { records, design }
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_cases(&self) -> usize {
        self.records.iter().filter(|r| r.d).count()
    }

    pub fn n_controls(&self) -> usize {
        self.records.iter().filter(|r| !r.d).count()
    }

    /// Distinct stratum labels in first-appearance order.
    pub fn strata(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|s| s == &r.x) {
                out.push(r.x.clone());
            }
        }
        out
    }

    /// (cases, controls) counts per stratum.
    pub fn stratum_counts(&self) -> BTreeMap<String, (usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = out.entry(r.x.clone()).or_insert((0, 0));
            if r.d {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        out
    }

    /// Empirical case fraction of a stratum, as observed in the sample.
    pub fn stratum_case_fraction(&self, stratum: &str) -> Result<f64> {
        let counts = self.stratum_counts();
        let (cases, controls) = counts
            .get(stratum)
            .copied()
            .ok_or_else(|| Error::UnknownStratum(stratum.to_string()))?;
        Ok(cases as f64 / (cases + controls) as f64)
    }
}

/// Load a study sample from a headered CSV file.
///
/// Row order is preserved and stratum labels are taken verbatim. Rows with
/// a disease label outside {0,1} or a non-finite marker are rejected.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, design: StudyDesign) -> Result<StudySample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema, design)
}

/// Same as [`load_csv`] but over any reader.
pub fn read_csv(reader: impl std::io::Read, schema: &CsvSchema, design: StudyDesign) -> Result<StudySample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (di, yi, xi) = (col(&schema.d)?, col(&schema.y)?, col(&schema.x)?);

    let mut records = Vec::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = row_idx + 2; // 1-based, after the header line
        let d_raw = row.get(di).unwrap_or("").trim();
        let d = match d_raw {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidDiseaseLabel {
                    row: row_no,
                    value: other.to_string(),
                })
            }
        };
        let y_raw = row.get(yi).unwrap_or("").trim();
        let y: f64 = y_raw.parse().map_err(|_| Error::NonNumericMarker {
            row: row_no,
            value: y_raw.to_string(),
        })?;
        if !y.is_finite() {
            return Err(Error::NonNumericMarker {
                row: row_no,
                value: y_raw.to_string(),
            });
        }
        let x = row.get(xi).unwrap_or("").trim().to_string();
        records.push(SubjectRecord { d, y, x });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(StudySample::new(records, design))
}

/// Serialize a sample back to CSV with the given column names.
pub fn write_csv(sample: &StudySample, schema: &CsvSchema, writer: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([&schema.d, &schema.y, &schema.x])?;
    for r in &sample.records {
        wtr.write_record([
            if r.d { "1" } else { "0" }.to_string(),
            format!("{}", r.y),
            r.x.clone(),
        ])?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
