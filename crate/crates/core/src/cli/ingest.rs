//! CSV ingestion of price or return series.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts::{Role, TimeSeriesPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Price levels; converted to log returns.
    #[default]
    Prices,
    /// Returns used as given.
    Returns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub date_column: String,
    pub kind: InputKind,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            kind: InputKind::Prices,
        }
    }
}

/// Gap-free return series on a common calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsTable {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ReturnsTable {
    pub fn n(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown series {name}")))
    }

    /// Panel with the named series bound to roles, dimensions in order.
    pub fn panel(&self, bindings: &[(Role, &str)]) -> Result<TimeSeriesPanel> {
        let mut panel = TimeSeriesPanel::new(self.n())?;
        for (role, name) in bindings {
            panel.push(*role, *name, self.column(name)?.to_vec())?;
        }
        Ok(panel)
    }

    pub fn write_csv<W: Write>(&self, date_column: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![date_column.to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut record = vec![d.format("%Y-%m-%d").to_string()];
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "NaN" | "nan" | "null" | ".")
}

/// Linear interpolation over interior gaps; leading and trailing gaps
/// take the nearest observed value.
pub fn fill_gaps(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if let Some(v) = values[i] {
            v
        } else if i < first {
            values[first].unwrap()
        } else if i > last {
            values[last].unwrap()
        } else {
            let right = known.partition_point(|&k| k < i);
            let (l, r) = (known[right - 1], known[right]);
            let (vl, vr) = (values[l].unwrap(), values[r].unwrap());
            vl + (vr - vl) * (i - l) as f64 / (r - l) as f64
        };
    }
    Some(out)
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<ReturnsTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, options)
}

/// Reads a header row plus one row per date. Rows with every series
/// missing are dropped; dates must be ISO-8601 and strictly increasing.
/// A price return is `log(p_t / p_s)` with `s` the last earlier row
/// holding a price, and is missing where `p_t` is missing. Missing
/// returns are then filled by [`fill_gaps`].
pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<ReturnsTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == options.date_column)
        .ok_or_else(|| Error::Parse {
            row: 1,
            column: options.date_column.clone(),
            message: "date column not found in header".into(),
        })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: "no series columns".into(),
        });
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = i + 2;
        let date_field = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            column: options.date_column.clone(),
            message: format!("invalid date {date_field:?}: {e}"),
        })?;
        let mut values = Vec::with_capacity(names.len());
        for (col, field) in record.iter().enumerate().filter(|(c, _)| *c != date_idx) {
            let name = &headers[col];
            if is_missing(field) {
                values.push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("invalid number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value {field:?}"),
                });
            }
            if options.kind == InputKind::Prices && v <= 0.0 {
                return Err(Error::NonPositivePrice {
                    row,
                    column: name.to_string(),
                    value: v,
                });
            }
            values.push(Some(v));
        }
        if values.len() != names.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", names.len() + 1, values.len() + 1),
            });
        }
        if values.iter().all(Option::is_none) {
            continue;
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Parse {
                    row,
                    column: options.date_column.clone(),
                    message: format!("date {date} does not follow {prev}"),
                });
            }
        }
        dates.push(date);
        for (series, v) in raw.iter_mut().zip(values) {
            series.push(v);
        }
    }

    let returns: Vec<Vec<Option<f64>>> = match options.kind {
        InputKind::Returns => raw,
        InputKind::Prices => {
            if dates.len() < 2 {
                return Err(Error::InsufficientData("at least two price rows are required".into()));
            }
            dates.remove(0);
            raw.iter()
                .map(|prices| {
                    let mut last: Option<f64> = prices[0];
                    prices[1..]
                        .iter()
                        .map(|p| {
                            let r = match (p, last) {
                                (Some(p), Some(l)) => Some((p / l).ln()),
                                _ => None,
                            };
                            if p.is_some() {
                                last = *p;
                            }
                            r
                        })
                        .collect()
                })
                .collect()
        }
    };
    if dates.is_empty() {
        return Err(Error::InsufficientData("no data rows".into()));
    }
    let columns = names
        .iter()
        .zip(&returns)
        .map(|(name, r)| fill_gaps(r).ok_or_else(|| Error::AllMissingSeries(name.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnsTable { dates, names, columns })
}
