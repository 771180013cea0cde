//! Panels, time offsets and effective-time bookkeeping.
//!
//! Times are 1-based throughout the public API: a panel of length `n`
//! is observed at `t = 1, ..., n`. Offsets are signed (negative = lag,
//! positive = lead), and the value of a series at time `t` with offset
//! `a` is the raw observation at `t + a`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    X,
    Y,
    Z,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::X => f.write_str("X"),
            Role::Y => f.write_str("Y"),
            Role::Z => f.write_str("Z"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub role: Role,
    pub label: String,
    pub values: Vec<f64>,
}

/// Rectangular collection of observed series, each tagged with a role.
///
/// Dimension `k` of a role is the `k`-th series (0-based) pushed with
/// that role.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    n: usize,
    series: Vec<Series>,
}

impl TimeSeriesPanel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPanel("panel length must be positive".into()));
        }
        Ok(Self { n, series: Vec::new() })
    }

    pub fn with_series(
        mut self,
        role: Role,
        label: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        self.push(role, label, values)?;
        Ok(self)
    }

    pub fn push(&mut self, role: Role, label: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let label = label.into();
        if values.len() != self.n {
            return Err(Error::InvalidPanel(format!(
                "series {label} has length {} but the panel has length {}",
                values.len(),
                self.n
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel(format!(
                "series {label} has a non-finite value at t = {}",
                pos + 1
            )));
        }
        if self.series.iter().any(|s| s.role == role && s.label == label) {
            return Err(Error::InvalidPanel(format!(
                "duplicate label {label} for role {role}"
            )));
        }
        self.series.push(Series { role, label, values });
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn dims(&self, role: Role) -> usize {
        self.series.iter().filter(|s| s.role == role).count()
    }

    fn get(&self, role: Role, dim: usize) -> Result<&Series> {
        self.series
            .iter()
            .filter(|s| s.role == role)
            .nth(dim)
            .ok_or_else(|| Error::InvalidPanel(format!("no {role} series with dimension {dim}")))
    }

    pub fn values(&self, role: Role, dim: usize) -> Result<&[f64]> {
        Ok(&self.get(role, dim)?.values)
    }

    pub fn label(&self, role: Role, dim: usize) -> Result<&str> {
        Ok(&self.get(role, dim)?.label)
    }

    /// Observation of `(role, dim)` at time `t + offset`.
    pub fn response_value(&self, t: usize, role: Role, dim: usize, offset: i64) -> Result<f64> {
        let values = self.values(role, dim)?;
        let idx = shifted_index(t, offset, self.n)?;
        Ok(values[idx])
    }

    /// The conditioning vector at time `t`, one entry per pair in the
    /// order given (`HypothesisSpec` keeps pairs sorted by dimension,
    /// then offset).
    pub fn regressor_vector(&self, t: usize, conditioning: &[CondPair]) -> Result<Vec<f64>> {
        conditioning
            .iter()
            .map(|p| self.response_value(t, Role::Z, p.dim, p.offset))
            .collect()
    }
}

fn shifted_index(t: usize, offset: i64, n: usize) -> Result<usize> {
    let shifted = t as i64 + offset;
    if shifted < 1 || shifted > n as i64 {
        return Err(Error::OutOfRange { time: shifted, n });
    }
    Ok((shifted - 1) as usize)
}

/// Offset sets per dimension for each role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OffsetSpec {
    pub x: BTreeMap<usize, BTreeSet<i64>>,
    pub y: BTreeMap<usize, BTreeSet<i64>>,
    pub z: BTreeMap<usize, BTreeSet<i64>>,
}

impl OffsetSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bound = n as i64;
        for (role, map) in [(Role::X, &self.x), (Role::Y, &self.y), (Role::Z, &self.z)] {
            for (dim, set) in map {
                if set.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "empty offset set for {role} dimension {dim}"
                    )));
                }
                for &o in set {
                    if o <= -bound || o >= bound {
                        return Err(Error::InvalidConfig(format!(
                            "offset {o} for {role} dimension {dim} is outside (-{n}, {n})"
                        )));
                    }
                    if role == Role::Z && o > 0 {
                        return Err(Error::InvalidConfig(format!(
                            "conditioning offset {o} must be non-positive"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn all(&self) -> impl Iterator<Item = i64> + '_ {
        self.x
            .values()
            .chain(self.y.values())
            .chain(self.z.values())
            .flat_map(|s| s.iter().copied())
    }
}

/// Times `lo..=hi` (1-based) at which every offset is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveTimeRange {
    pub lo: usize,
    pub hi: usize,
}

impl EffectiveTimeRange {
    pub fn count(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn times(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.lo..=self.hi).contains(&t)
    }
}

/// Effective range for a panel of length `n`. Leads never move the first
/// time and lags never move the last time.
pub fn effective_times(n: usize, offsets: &OffsetSpec) -> Result<EffectiveTimeRange> {
    offsets.validate(n)?;
    let min = offsets.all().min().unwrap_or(0).min(0);
    let max = offsets.all().max().unwrap_or(0).max(0);
    let lo = 1 - min;
    let hi = n as i64 - max;
    if lo > hi {
        return Err(Error::EmptyRange { lo, hi });
    }
    Ok(EffectiveTimeRange {
        lo: lo as usize,
        hi: hi as usize,
    })
}

/// One element `(i, j, a, b)` of the tuple set: X dimension `i` at
/// offset `a` against Y dimension `j` at offset `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tuple {
    pub x_dim: usize,
    pub y_dim: usize,
    pub x_offset: i64,
    pub y_offset: i64,
}

impl Tuple {
    pub fn new(x_dim: usize, y_dim: usize, x_offset: i64, y_offset: i64) -> Self {
        Self {
            x_dim,
            y_dim,
            x_offset,
            y_offset,
        }
    }

    pub fn x_key(&self) -> ResponseKey {
        ResponseKey {
            role: Role::X,
            dim: self.x_dim,
            offset: self.x_offset,
        }
    }

    pub fn y_key(&self) -> ResponseKey {
        ResponseKey {
            role: Role::Y,
            dim: self.y_dim,
            offset: self.y_offset,
        }
    }
}

/// Conditioning pair `(k, c)`: Z dimension `k` at lag `c <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CondPair {
    pub dim: usize,
    pub offset: i64,
}

impl CondPair {
    pub fn new(dim: usize, offset: i64) -> Self {
        Self { dim, offset }
    }
}

/// A single regression response: one role/dimension/offset combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResponseKey {
    pub role: Role,
    pub dim: usize,
    pub offset: i64,
}

impl fmt::Display for ResponseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}({:+})", self.role, self.dim, self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisKind {
    Conditional,
    Unconditional,
}

impl fmt::Display for HypothesisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HypothesisKind::Conditional => f.write_str("conditional"),
            HypothesisKind::Unconditional => f.write_str("unconditional"),
        }
    }
}

/// One test: the tuple set and the conditioning pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HypothesisSpec {
    tuples: Vec<Tuple>,
    conditioning: Vec<CondPair>,
    kind: HypothesisKind,
}

impl HypothesisSpec {
    pub fn new(kind: HypothesisKind, tuples: Vec<Tuple>, conditioning: Vec<CondPair>) -> Result<Self> {
        if tuples.is_empty() {
            return Err(Error::InvalidConfig("hypothesis has no tuples".into()));
        }
        let distinct: BTreeSet<_> = tuples.iter().collect();
        if distinct.len() != tuples.len() {
            return Err(Error::InvalidConfig("hypothesis has duplicate tuples".into()));
        }
        let mut conditioning = conditioning;
        conditioning.sort();
        conditioning.dedup();
        match kind {
            HypothesisKind::Unconditional if !conditioning.is_empty() => {
                return Err(Error::InvalidConfig(
                    "unconditional hypothesis cannot have conditioning pairs".into(),
                ))
            }
            HypothesisKind::Conditional if conditioning.is_empty() => {
                return Err(Error::InvalidConfig(
                    "conditional hypothesis needs at least one conditioning pair".into(),
                ))
            }
            _ => {}
        }
        if let Some(p) = conditioning.iter().find(|p| p.offset > 0) {
            return Err(Error::InvalidConfig(format!(
                "conditioning offset {} must be non-positive",
                p.offset
            )));
        }
        Ok(Self {
            tuples,
            conditioning,
            kind,
        })
    }

    /// Univariate conditional hypothesis `X_a ⫫ Y_b | Z` on dimension 0 of each role.
    pub fn single(x_offset: i64, y_offset: i64, conditioning: Vec<CondPair>) -> Result<Self> {
        let kind = if conditioning.is_empty() {
            HypothesisKind::Unconditional
        } else {
            HypothesisKind::Conditional
        };
        Self::new(kind, vec![Tuple::new(0, 0, x_offset, y_offset)], conditioning)
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn conditioning(&self) -> &[CondPair] {
        &self.conditioning
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn offsets(&self) -> OffsetSpec {
        let mut spec = OffsetSpec::default();
        for t in &self.tuples {
            spec.x.entry(t.x_dim).or_default().insert(t.x_offset);
            spec.y.entry(t.y_dim).or_default().insert(t.y_offset);
        }
        for p in &self.conditioning {
            spec.z.entry(p.dim).or_default().insert(p.offset);
        }
        spec
    }

    /// Distinct regression responses, X keys before Y keys.
    pub fn response_keys(&self) -> Vec<ResponseKey> {
        let keys: BTreeSet<ResponseKey> = self
            .tuples
            .iter()
            .flat_map(|t| [t.x_key(), t.y_key()])
            .collect();
        keys.into_iter().collect()
    }

    pub fn effective_range(&self, n: usize) -> Result<EffectiveTimeRange> {
        effective_times(n, &self.offsets())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offsets(a: &[i64], b: &[i64], c: &[i64]) -> OffsetSpec {
        let mut s = OffsetSpec::default();
        s.x.insert(0, a.iter().copied().collect());
        s.y.insert(0, b.iter().copied().collect());
        if !c.is_empty() {
            s.z.insert(0, c.iter().copied().collect());
        }
        s
    }

    #[test]
    fn zero_offsets_cover_everything() {
        let r = effective_times(100, &offsets(&[0], &[0], &[0])).unwrap();
        assert_eq!((r.lo, r.hi, r.count()), (1, 100, 100));
    }

    #[test]
    fn leads_and_lags_shrink_range() {
        let r = effective_times(100, &offsets(&[0], &[7], &[-1, 0])).unwrap();
        assert_eq!((r.lo, r.hi), (2, 93));
        let r = effective_times(10, &offsets(&[-3], &[0], &[0])).unwrap();
        assert_eq!((r.lo, r.hi), (4, 10));
    }

    #[test]
    fn lead_only_offsets_keep_first_time() {
        let r = effective_times(10, &offsets(&[2], &[1], &[])).unwrap();
        assert_eq!((r.lo, r.hi), (1, 8));
    }

    #[test]
    fn empty_range_is_an_error() {
        let err = effective_times(5, &offsets(&[-3], &[3], &[])).unwrap_err();
        assert!(matches!(err, Error::EmptyRange { lo: 4, hi: 2 }));
    }

    #[test]
    fn positive_conditioning_offset_rejected() {
        assert!(effective_times(10, &offsets(&[0], &[0], &[1])).is_err());
        assert!(HypothesisSpec::single(0, 0, vec![CondPair::new(0, 1)]).is_err());
    }

    #[test]
    fn regressor_and_response_lookup() {
        let panel = TimeSeriesPanel::new(4)
            .unwrap()
            .with_series(Role::Z, "z", vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        assert_eq!(panel.regressor_vector(3, &[CondPair::new(0, 0)]).unwrap(), vec![3.0]);
        assert_eq!(
            panel
                .regressor_vector(3, &[CondPair::new(0, -1), CondPair::new(0, 0)])
                .unwrap(),
            vec![2.0, 3.0]
        );

        let panel = TimeSeriesPanel::new(3)
            .unwrap()
            .with_series(Role::X, "x", vec![10.0, 20.0, 30.0])
            .unwrap();
        assert_eq!(panel.response_value(1, Role::X, 0, 2).unwrap(), 30.0);
        assert_eq!(panel.response_value(2, Role::X, 0, 0).unwrap(), 20.0);
        assert!(matches!(
            panel.response_value(3, Role::X, 0, 1),
            Err(Error::OutOfRange { time: 4, n: 3 })
        ));
    }

    #[test]
    fn two_z_series_in_documented_order() {
        let panel = TimeSeriesPanel::new(3)
            .unwrap()
            .with_series(Role::Z, "a", vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_series(Role::Z, "b", vec![10.0, 20.0, 30.0])
            .unwrap();
        let spec = HypothesisSpec::single(0, 0, vec![CondPair::new(1, -1), CondPair::new(0, 0)]).unwrap();
        assert_eq!(spec.conditioning(), &[CondPair::new(0, 0), CondPair::new(1, -1)]);
        assert_eq!(panel.regressor_vector(2, spec.conditioning()).unwrap(), vec![2.0, 10.0]);
    }

    #[test]
    fn panel_invariants() {
        let p = TimeSeriesPanel::new(2).unwrap();
        assert!(p.clone().with_series(Role::X, "x", vec![1.0]).is_err());
        assert!(p.clone().with_series(Role::X, "x", vec![1.0, f64::NAN]).is_err());
        let p = p.with_series(Role::X, "x", vec![1.0, 2.0]).unwrap();
        assert!(p.clone().with_series(Role::X, "x", vec![1.0, 2.0]).is_err());
        assert!(p.with_series(Role::Y, "x", vec![1.0, 2.0]).is_ok());
        assert!(TimeSeriesPanel::new(0).is_err());
    }

    #[test]
    fn hypothesis_invariants() {
        let t = Tuple::new(0, 0, 0, 0);
        assert!(HypothesisSpec::new(HypothesisKind::Conditional, vec![], vec![CondPair::new(0, 0)]).is_err());
        assert!(HypothesisSpec::new(HypothesisKind::Conditional, vec![t, t], vec![CondPair::new(0, 0)]).is_err());
        assert!(HypothesisSpec::new(HypothesisKind::Unconditional, vec![t], vec![CondPair::new(0, 0)]).is_err());
        let spec = HypothesisSpec::new(
            HypothesisKind::Unconditional,
            vec![t, Tuple::new(0, 1, 0, 0), Tuple::new(0, 0, 0, -1)],
            vec![],
        )
        .unwrap();
        assert_eq!(spec.response_keys().len(), 4);
    }
}
