//! CSV and JSON emission of batch results.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::batch::{BatchConfig, BatchRow, PvalueTable};
use crate::error::{Error, Result};
use crate::ts::HypothesisKind;

/// One CSV line. Numeric fields are empty for failed hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub hypothesis: String,
    pub kind: HypothesisKind,
    pub statistic: Option<f64>,
    pub quantile: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_bh: Option<f64>,
    pub reject: Option<bool>,
    pub seed: u64,
}

impl From<&BatchRow> for CsvRow {
    fn from(r: &BatchRow) -> Self {
        Self {
            hypothesis: r.hypothesis.clone(),
            kind: r.kind,
            statistic: r.statistic,
            quantile: r.quantile,
            p_raw: r.p_raw,
            p_bh: r.p_bh,
            reject: r.reject,
            seed: r.seed,
        }
    }
}

pub fn csv_rows(table: &PvalueTable) -> Vec<CsvRow> {
    table.rows.iter().map(CsvRow::from).collect()
}

pub fn emit_csv<W: Write>(table: &PvalueTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in csv_rows(table) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub config: Option<BatchConfig>,
    /// Burn-in of simulated series; absent for observed data.
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total_seconds: Option<f64>,
}

impl Metadata {
    pub fn new(config: Option<&BatchConfig>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.cloned(),
            burn_in: None,
            total_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub metadata: Metadata,
    pub rows: Vec<BatchRow>,
}

pub fn emit_json<W: Write>(table: &PvalueTable, metadata: Metadata, mut out: W) -> Result<()> {
    let doc = JsonReport {
        metadata,
        rows: table.rows.clone(),
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n").map_err(|e| Error::io("<json>", e))?;
    Ok(())
}

pub fn parse_json<R: Read>(input: R) -> Result<JsonReport> {
    Ok(serde_json::from_reader(input)?)
}
