//! Epidemiological 2x2 tables and the association measures they support.
//!
//! Tables are always laid out with exposure on the rows and case status on
//! the columns:
//!
//! ```text
//!               cases   controls
//! exposed         a        b
//! unexposed       c        d
//! ```
//!
//! For prospective designs "controls" are read as non-cases. A case-control
//! sample fixes the column totals by design, so only the odds ratio is
//! estimable from it.

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("table has a zero cell; enable the 0.5 correction to proceed")]
    ZeroCell,
    #[error("risk ratio is not estimable from a retrospective (case-control) design")]
    RetrospectiveDesign,
    #[error("{0} arm of the table is empty")]
    ZeroRow(&'static str),
    #[error("baseline risk in the unexposed arm is zero")]
    ZeroBaselineRisk,
    #[error("table is empty")]
    EmptyTable,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {index}: field `{field}`: {message}")]
    Validation {
        index: usize,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwoTable {
    pub exposed_cases: u64,
    pub exposed_controls: u64,
    pub unexposed_cases: u64,
    pub unexposed_controls: u64,
}

impl TwoByTwoTable {
    pub fn new(
        exposed_cases: u64,
        exposed_controls: u64,
        unexposed_cases: u64,
        unexposed_controls: u64,
    ) -> Result<Self, StudyError> {
        let t = Self {
            exposed_cases,
            exposed_controls,
            unexposed_cases,
            unexposed_controls,
        };
        if t.total() == 0 {
            return Err(StudyError::EmptyTable);
        }
        Ok(t)
    }

    pub fn total(&self) -> u64 {
        self.exposed_cases + self.exposed_controls + self.unexposed_cases + self.unexposed_controls
    }

    /// Swaps the exposed and unexposed rows.
    pub fn swap_rows(&self) -> Self {
        Self {
            exposed_cases: self.unexposed_cases,
            exposed_controls: self.unexposed_controls,
            unexposed_cases: self.exposed_cases,
            unexposed_controls: self.exposed_controls,
        }
    }

    fn cells(&self) -> [f64; 4] {
        [
            self.exposed_cases as f64,
            self.exposed_controls as f64,
            self.unexposed_cases as f64,
            self.unexposed_controls as f64,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Randomized,
    Cohort,
    CaseControl,
}

impl DesignKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignKind::Randomized => "randomized",
            DesignKind::Cohort => "cohort",
            DesignKind::CaseControl => "case_control",
        }
    }

    pub fn is_prospective(&self) -> bool {
        !matches!(self, DesignKind::CaseControl)
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DesignKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "randomized" => Ok(DesignKind::Randomized),
            "cohort" => Ok(DesignKind::Cohort),
            "case_control" => Ok(DesignKind::CaseControl),
            other => Err(format!(
                "unknown design kind \"{other}\" (expected randomized, cohort or case_control)"
            )),
        }
    }
}

/// Design semantics plus an opaque label for the background stratum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyDesign {
    pub kind: DesignKind,
    pub stratum: String,
}

/// A published adjusted estimate carried verbatim; never recomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedEstimate {
    pub odds_ratio: f64,
    pub ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub source: String,
    pub design: StudyDesign,
    pub table: TwoByTwoTable,
    pub adjusted: Option<AdjustedEstimate>,
}

/// Odds ratio `ad / bc`, optionally with 0.5 added to every cell.
pub fn odds_ratio(t: &TwoByTwoTable, correction: bool) -> Result<f64, StudyError> {
    let [a, b, c, d] = t.cells();
    let [a, b, c, d] = if correction {
        [a + 0.5, b + 0.5, c + 0.5, d + 0.5]
    } else {
        if a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0 {
            return Err(StudyError::ZeroCell);
        }
        [a, b, c, d]
    };
    Ok((a * d) / (b * c))
}

fn cohort_risk_ratio(t: &TwoByTwoTable) -> Result<f64, StudyError> {
    let [a, b, c, d] = t.cells();
    if a + b == 0.0 {
        return Err(StudyError::ZeroRow("exposed"));
    }
    if c + d == 0.0 {
        return Err(StudyError::ZeroRow("unexposed"));
    }
    if c == 0.0 {
        return Err(StudyError::ZeroBaselineRisk);
    }
    Ok((a / (a + b)) / (c / (c + d)))
}

/// Ratio of response risks between the exposed and unexposed arms.
///
/// Only prospective designs sample the arms independently of outcome, so a
/// case-control record is refused outright.
pub fn risk_ratio_estimate(r: &StudyRecord) -> Result<f64, StudyError> {
    if !r.design.kind.is_prospective() {
        return Err(StudyError::RetrospectiveDesign);
    }
    cohort_risk_ratio(&r.table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RareOutcomeGap {
    pub odds_ratio: f64,
    pub risk_ratio: f64,
    pub relative_gap: f64,
}

/// Compares the odds ratio with the risk ratio the same table would give if
/// read prospectively. A small gap indicates the outcome is rare enough for
/// the odds ratio to stand in for the risk ratio.
pub fn rare_outcome_gap(t: &TwoByTwoTable) -> Result<RareOutcomeGap, StudyError> {
    let or = odds_ratio(t, false)?;
    let rr = cohort_risk_ratio(t)?;
    Ok(RareOutcomeGap {
        odds_ratio: or,
        risk_ratio: rr,
        relative_gap: (or - rr).abs() / rr,
    })
}

/// Per-record measures, with the risk ratio absent for retrospective designs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub source: String,
    pub design: DesignKind,
    pub stratum: String,
    pub odds_ratio: f64,
    pub risk_ratio: Option<f64>,
    pub relative_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_or: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_or_ci: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const RR_NOT_ESTIMABLE: &str = "RR: not estimable (retrospective design)";

pub fn measure_report(r: &StudyRecord, correction: bool) -> Result<MeasureReport, StudyError> {
    let or = odds_ratio(&r.table, correction)?;
    let (rr, gap, note) = if r.design.kind.is_prospective() {
        let rr = risk_ratio_estimate(r)?;
        (Some(rr), Some((or - rr).abs() / rr), None)
    } else {
        (None, None, Some(RR_NOT_ESTIMABLE.to_string()))
    };
    Ok(MeasureReport {
        source: r.source.clone(),
        design: r.design.kind,
        stratum: r.design.stratum.clone(),
        odds_ratio: or,
        risk_ratio: rr,
        relative_gap: gap,
        adjusted_or: r.adjusted.map(|a| a.odds_ratio),
        adjusted_or_ci: r.adjusted.and_then(|a| a.ci),
        note,
    })
}

/// CSV with columns `source, design, or, rr_or_NA, relative_gap_or_NA`.
pub fn reports_to_csv(reports: &[MeasureReport]) -> Result<String, StudyError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| StudyError::Io(std::io::Error::other(e));
    w.write_record(["source", "design", "or", "rr_or_NA", "relative_gap_or_NA"])
        .map_err(io)?;
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for r in reports {
        w.write_record([
            r.source.clone(),
            r.design.to_string(),
            r.odds_ratio.to_string(),
            na(r.risk_ratio),
            na(r.relative_gap),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| StudyError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

// Wire format. Counts are read as signed integers so negative values can be
// reported against their field instead of surfacing as a type error.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    exposed_cases: i64,
    exposed_controls: i64,
    unexposed_cases: i64,
    unexposed_controls: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    source: String,
    design: String,
    #[serde(default)]
    stratum: String,
    table: RawTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjusted_or: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjusted_or_ci: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInput {
    Many(Vec<RawRecord>),
    One(RawRecord),
}

fn validate(index: usize, raw: RawRecord) -> Result<StudyRecord, StudyError> {
    let invalid = |field: &str, message: String| StudyError::Validation {
        index,
        field: field.to_string(),
        message,
    };
    let kind: DesignKind = raw.design.parse().map_err(|m| invalid("design", m))?;
    let count = |field: &str, v: i64| -> Result<u64, StudyError> {
        u64::try_from(v).map_err(|_| invalid(&format!("table.{field}"), format!("count {v} is negative")))
    };
    let t = &raw.table;
    let table = TwoByTwoTable::new(
        count("exposed_cases", t.exposed_cases)?,
        count("exposed_controls", t.exposed_controls)?,
        count("unexposed_cases", t.unexposed_cases)?,
        count("unexposed_controls", t.unexposed_controls)?,
    )
    .map_err(|e| invalid("table", e.to_string()))?;
    if let Some(or) = raw.adjusted_or {
        if !(or.is_finite() && or > 0.0) {
            return Err(invalid("adjusted_or", format!("{or} is not a positive number")));
        }
    }
    if let Some([lo, hi]) = raw.adjusted_or_ci {
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(invalid(
                "adjusted_or_ci",
                format!("[{lo}, {hi}] is not a valid interval"),
            ));
        }
        if raw.adjusted_or.is_none() {
            return Err(invalid("adjusted_or_ci", "given without adjusted_or".to_string()));
        }
    }
    Ok(StudyRecord {
        source: raw.source,
        design: StudyDesign {
            kind,
            stratum: raw.stratum,
        },
        table,
        adjusted: raw.adjusted_or.map(|odds_ratio| AdjustedEstimate {
            odds_ratio,
            ci: raw.adjusted_or_ci,
        }),
    })
}

/// Reads a JSON array of study records (a single object is also accepted).
pub fn ingest<R: Read>(reader: R) -> Result<Vec<StudyRecord>, StudyError> {
    let raw: RawInput = serde_json::from_reader(reader).map_err(|e| StudyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raw = match raw {
        RawInput::Many(v) => v,
        RawInput::One(r) => vec![r],
    };
    raw.into_iter().enumerate().map(|(i, r)| validate(i, r)).collect()
}

pub fn ingest_path(path: &Path) -> Result<Vec<StudyRecord>, StudyError> {
    let file = std::fs::File::open(path)?;
    ingest(std::io::BufReader::new(file))
}

/// Serializes records in the same schema [`ingest`] reads.
pub fn serialize(records: &[StudyRecord]) -> String {
    let raw: Vec<RawRecord> = records
        .iter()
        .map(|r| RawRecord {
            source: r.source.clone(),
            design: r.design.kind.as_str().to_string(),
            stratum: r.design.stratum.clone(),
            table: RawTable {
                exposed_cases: r.table.exposed_cases as i64,
                exposed_controls: r.table.exposed_controls as i64,
                unexposed_cases: r.table.unexposed_cases as i64,
                unexposed_controls: r.table.unexposed_controls as i64,
            },
            adjusted_or: r.adjusted.map(|a| a.odds_ratio),
            adjusted_or_ci: r.adjusted.and_then(|a| a.ci),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(a: u64, b: u64, c: u64, d: u64) -> TwoByTwoTable {
        TwoByTwoTable::new(a, b, c, d).unwrap()
    }

    fn record(kind: DesignKind, t: TwoByTwoTable) -> StudyRecord {
        StudyRecord {
            source: "test".into(),
            design: StudyDesign {
                kind,
                stratum: String::new(),
            },
            table: t,
            adjusted: None,
        }
    }

    #[test]
    fn odds_ratio_examples() {
        // 19 * 51 / (3 * 8) = 969 / 24
        assert_eq!(odds_ratio(&table(19, 3, 8, 51), false).unwrap(), 40.375);
        assert_eq!(odds_ratio(&table(10, 10, 10, 10), false).unwrap(), 1.0);
        assert_eq!(odds_ratio(&table(5, 0, 5, 5), true).unwrap(), 11.0);
        assert!(matches!(
            odds_ratio(&table(5, 0, 5, 5), false),
            Err(StudyError::ZeroCell)
        ));
    }

    #[test]
    fn risk_ratio_examples() {
        let r = record(DesignKind::Randomized, table(30, 70, 12, 88));
        assert!((risk_ratio_estimate(&r).unwrap() - 2.5).abs() < 1e-12);

        let r = record(DesignKind::CaseControl, table(19, 3, 8, 51));
        assert!(matches!(risk_ratio_estimate(&r), Err(StudyError::RetrospectiveDesign)));

        let r = record(DesignKind::Cohort, table(0, 100, 0, 100));
        assert!(matches!(risk_ratio_estimate(&r), Err(StudyError::ZeroBaselineRisk)));

        let r = record(DesignKind::Cohort, table(0, 0, 3, 100));
        assert!(matches!(risk_ratio_estimate(&r), Err(StudyError::ZeroRow("exposed"))));
    }

    #[test]
    fn rare_outcome_gap_examples() {
        let g = rare_outcome_gap(&table(1, 999, 1, 999)).unwrap();
        assert_eq!(g.odds_ratio, 1.0);
        assert_eq!(g.relative_gap, 0.0);

        let g = rare_outcome_gap(&table(2, 998, 1, 999)).unwrap();
        // OR = 2*999/998, RR = 2.
        assert!((g.relative_gap - (2.0 * 999.0 / 998.0 - 2.0) / 2.0).abs() < 1e-12);
        assert!(g.relative_gap < 0.002);

        let g = rare_outcome_gap(&table(50, 50, 50, 50)).unwrap();
        assert_eq!((g.odds_ratio, g.risk_ratio, g.relative_gap), (1.0, 1.0, 0.0));

        let g = rare_outcome_gap(&table(30, 70, 12, 88)).unwrap();
        assert!((g.odds_ratio - 22.0 / 7.0).abs() < 1e-12);
        assert!((g.risk_ratio - 2.5).abs() < 1e-12);
        assert!((g.relative_gap - (22.0 / 7.0 - 2.5) / 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_table_rejected() {
        assert!(matches!(TwoByTwoTable::new(0, 0, 0, 0), Err(StudyError::EmptyTable)));
    }

    #[test]
    fn ingest_table_one() {
        let json = r#"[{"source": "case-control", "design": "case_control", "stratum": "",
            "table": {"exposed_cases": 19, "exposed_controls": 3, "unexposed_cases": 8, "unexposed_controls": 51},
            "adjusted_or": 17.1, "adjusted_or_ci": [3.5, 83.0]}]"#;
        let recs = ingest(json.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].design.kind, DesignKind::CaseControl);
        assert_eq!(recs[0].table, table(19, 3, 8, 51));
        assert_eq!(recs[0].adjusted.unwrap().ci, Some([3.5, 83.0]));
    }

    #[test]
    fn ingest_empty_array() {
        assert!(ingest("[]".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn ingest_reports_negative_count_field() {
        let json = r#"[{"source": "x", "design": "cohort",
            "table": {"exposed_cases": -1, "exposed_controls": 3, "unexposed_cases": 8, "unexposed_controls": 51}}]"#;
        match ingest(json.as_bytes()) {
            Err(StudyError::Validation { index, field, .. }) => {
                assert_eq!(index, 0);
                assert_eq!(field, "table.exposed_cases");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_unknown_design() {
        let json = r#"{"source": "x", "design": "ecological",
            "table": {"exposed_cases": 1, "exposed_controls": 3, "unexposed_cases": 8, "unexposed_controls": 51}}"#;
        assert!(matches!(
            ingest(json.as_bytes()),
            Err(StudyError::Validation { ref field, .. }) if field == "design"
        ));
    }

    #[test]
    fn ingest_reports_parse_position() {
        let err = ingest("[\n{\"source\": }".as_bytes()).unwrap_err();
        assert!(matches!(err, StudyError::Parse { line: 2, .. }), "{err}");
        assert!(matches!(ingest("".as_bytes()), Err(StudyError::Parse { .. })));
    }

    #[test]
    fn csv_marks_missing_rr() {
        let recs = [
            record(DesignKind::CaseControl, table(19, 3, 8, 51)),
            record(DesignKind::Randomized, table(30, 70, 12, 88)),
        ];
        let reports: Vec<_> = recs.iter().map(|r| measure_report(r, false).unwrap()).collect();
        let csv = reports_to_csv(&reports).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "source,design,or,rr_or_NA,relative_gap_or_NA");
        assert_eq!(lines[1], "test,case_control,40.375,NA,NA");
        assert!(lines[2].starts_with("test,randomized,3.142857142857143,2.5"));
    }
}
