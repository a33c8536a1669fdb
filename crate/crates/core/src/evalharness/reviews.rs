use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::savings::Distribution;
use crate::error::{Error, Result};

pub const LIKERT_COLUMNS: [&str; 4] = ["relevance", "correctness", "completeness", "readability"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Modify,
    Reject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "accept",
            Decision::Modify => "modify",
            Decision::Reject => "reject",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub requirement_id: String,
    pub test_id: String,
    pub decision: Decision,
    /// Scores 1 to 5 keyed by criterion; absent criteria are omitted.
    pub likert: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewLedger {
    pub rows: Vec<ReviewRow>,
    pub counts: BTreeMap<Decision, usize>,
    pub distribution: Distribution,
    /// (accept + modify) / total.
    pub usability: f64,
    pub likert_means: BTreeMap<String, f64>,
}

fn malformed(row: usize, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        row,
        message: message.into(),
    }
}

/// Parses the review CSV. Header: `requirement_id,test_id,decision` then any
/// of the Likert columns. Rows are numbered from 1 after the header.
pub fn parse_reviews(input: impl Read) -> Result<ReviewLedger> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(req_col), Some(test_col), Some(dec_col)) =
        (col("requirement_id"), col("test_id"), col("decision"))
    else {
        return Err(malformed(0, "header must name requirement_id, test_id and decision"));
    };
    let likert_cols: Vec<(&str, usize)> = LIKERT_COLUMNS
        .iter()
        .filter_map(|name| col(name).map(|i| (*name, i)))
        .collect();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let n = i + 1;
        let record = record.map_err(|e| malformed(n, e.to_string()))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let decision = match field(dec_col).to_ascii_lowercase().as_str() {
            "accept" => Decision::Accept,
            "modify" => Decision::Modify,
            "reject" => Decision::Reject,
            _ => {
                return Err(Error::InvalidDecision {
                    row: n,
                    value: field(dec_col).to_string(),
                })
            }
        };
        let mut likert = BTreeMap::new();
        for (name, idx) in &likert_cols {
            let raw = field(*idx);
            if raw.is_empty() {
                continue;
            }
            match raw.parse::<u8>() {
                Ok(v @ 1..=5) => {
                    likert.insert(name.to_string(), v);
                }
                _ => return Err(malformed(n, format!("{name} must be an integer 1-5, got `{raw}`"))),
            }
        }
        if field(req_col).is_empty() {
            return Err(malformed(n, "empty requirement_id"));
        }
        rows.push(ReviewRow {
            requirement_id: field(req_col).to_string(),
            test_id: field(test_col).to_string(),
            decision,
            likert,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyReportSet);
    }

    let mut counts: BTreeMap<Decision, usize> =
        [Decision::Accept, Decision::Modify, Decision::Reject].into_iter().map(|d| (d, 0)).collect();
    for r in &rows {
        *counts.get_mut(&r.decision).expect("all decisions present") += 1;
    }
    let total = rows.len() as f64;
    let share = |d| counts[&d] as f64 / total;
    let distribution = Distribution {
        accept: share(Decision::Accept),
        modify: share(Decision::Modify),
        reject: share(Decision::Reject),
    };
    let mut likert_means = BTreeMap::new();
    for name in LIKERT_COLUMNS {
        let scores: Vec<f64> = rows.iter().filter_map(|r| r.likert.get(name)).map(|&v| v as f64).collect();
        if !scores.is_empty() {
            likert_means.insert(name.to_string(), scores.iter().sum::<f64>() / scores.len() as f64);
        }
    }
    Ok(ReviewLedger {
        usability: distribution.accept + distribution.modify,
        rows,
        counts,
        distribution,
        likert_means,
    })
}

pub fn import_reviews(path: &Path) -> Result<ReviewLedger> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reviews(file)
}
