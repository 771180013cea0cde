//! Sieve least-squares estimation of time-varying regression functions.
//!
//! The conditional mean of a response is modelled additively over the
//! conditioning pairs, each partial response expanded in the tensor
//! basis `phi_l1(u) * varphi_l2(z)`:
//!
//! ```text
//! f(u, z) = sum_p sum_l1 sum_l2 beta[p, l1, l2] * phi_l1(u) * varphi_l2(z_p)
//! ```
//!
//! Design columns are ordered by conditioning pair (dimension, then
//! offset ascending), then time-basis index, then covariate-basis index.
//! With no conditioning pairs the covariate factor is the constant first
//! Legendre polynomial, which gives a time-varying mean fit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{legendre_into, map_covariate, DEFAULT_SCALE};
use crate::error::{Error, Result};
use crate::ts::{CondPair, EffectiveTimeRange, HypothesisSpec, ResponseKey, TimeSeriesPanel, Tuple};

/// Rows required per design column before a fit is attempted.
pub const MIN_ROWS_PER_COLUMN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// One fit on all effective times.
    #[default]
    Global,
    /// The prediction at time `t` uses only rows up to `t`.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SieveConfig {
    pub time_basis: usize,
    pub cov_basis: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub mode: FitMode,
    #[serde(default)]
    pub ridge: f64,
    /// On a rank-deficient design retry with ridge `1e-10 * tr(X'X) / cols`.
    #[serde(default)]
    pub fallback_ridge: bool,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

impl SieveConfig {
    pub fn new(time_basis: usize, cov_basis: usize) -> Self {
        Self {
            time_basis,
            cov_basis,
            scale: DEFAULT_SCALE,
            mode: FitMode::Global,
            ridge: 0.0,
            fallback_ridge: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_basis == 0 || self.cov_basis == 0 {
            return Err(Error::InvalidConfig("basis counts must be at least 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidConfig(format!("ridge {} must be >= 0", self.ridge)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale {} must be > 0", self.scale)));
        }
        Ok(())
    }
}

/// Affine map from time `t` to `[0, 1]`, sending `lo` to 0 and `hi` to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRemap {
    pub lo: usize,
    pub hi: usize,
    pub n: usize,
}

impl TimeRemap {
    pub fn from_range(range: &EffectiveTimeRange, n: usize) -> Self {
        Self {
            lo: range.lo,
            hi: range.hi,
            n,
        }
    }

    pub fn apply(&self, t: usize) -> f64 {
        if self.hi == self.lo {
            0.0
        } else {
            (t as f64 - self.lo as f64) / (self.hi - self.lo) as f64
        }
    }

    /// Bounds of the rescaled-time interval, `(lo / n, hi / n)`.
    pub fn rescaled_bounds(&self) -> (f64, f64) {
        (self.lo as f64 / self.n as f64, self.hi as f64 / self.n as f64)
    }
}

/// Column layout of a sieve design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pairs: Vec<CondPair>,
    time_basis: usize,
    cov_basis: usize,
    scale: f64,
}

impl DesignLayout {
    pub fn new(pairs: &[CondPair], time_basis: usize, cov_basis: usize, scale: f64) -> Self {
        let cov_basis = if pairs.is_empty() { 1 } else { cov_basis };
        Self {
            pairs: pairs.to_vec(),
            time_basis,
            cov_basis,
            scale,
        }
    }

    /// Time basis only, with the constant covariate function.
    pub fn time_only(time_basis: usize) -> Self {
        Self::new(&[], time_basis, 1, DEFAULT_SCALE)
    }

    pub fn pairs(&self) -> &[CondPair] {
        &self.pairs
    }

    pub fn time_basis(&self) -> usize {
        self.time_basis
    }

    pub fn cov_basis(&self) -> usize {
        self.cov_basis
    }

    fn blocks(&self) -> usize {
        self.pairs.len().max(1)
    }

    pub fn columns(&self) -> usize {
        self.blocks() * self.time_basis * self.cov_basis
    }

    /// Column of `(pair, l1, l2)`, all 0-based.
    pub fn column(&self, pair: usize, l1: usize, l2: usize) -> usize {
        (pair * self.time_basis + l1) * self.cov_basis + l2
    }

    /// Inverse of [`column`](Self::column).
    pub fn column_key(&self, col: usize) -> (usize, usize, usize) {
        let l2 = col % self.cov_basis;
        let rest = col / self.cov_basis;
        (rest / self.time_basis, rest % self.time_basis, l2)
    }

    /// Columns that are not exact copies of an earlier column. Every
    /// block contains the pure time functions `phi_l1(u) * 1`; only the
    /// first block keeps them.
    pub fn identifiable_columns(&self) -> Vec<usize> {
        (0..self.columns())
            .filter(|&c| {
                let (pair, _, l2) = self.column_key(c);
                pair == 0 || l2 > 0
            })
            .collect()
    }

    /// Writes the design row for rescaled time `u` and conditioning
    /// values `z` (one per pair) into `out`.
    pub fn row_into(&self, u: f64, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.columns());
        let mut tb = vec![0.0; self.time_basis];
        let mut cb = vec![0.0; self.cov_basis];
        legendre_into(u, &mut tb);
        for block in 0..self.blocks() {
            if self.pairs.is_empty() {
                cb[0] = 1.0;
            } else {
                legendre_into(map_covariate(z[block], self.scale), &mut cb);
            }
            for (l1, &phi) in tb.iter().enumerate() {
                let start = self.column(block, l1, 0);
                for (slot, &psi) in out[start..start + self.cov_basis].iter_mut().zip(&cb) {
                    *slot = phi * psi;
                }
            }
        }
    }

    pub fn row(&self, u: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.columns()];
        self.row_into(u, z, &mut out);
        out
    }
}

/// Design matrix with one row per time (in the given order).
pub fn build_design_matrix(
    times: &[usize],
    panel: &TimeSeriesPanel,
    layout: &DesignLayout,
    remap: &TimeRemap,
) -> Result<DMatrix<f64>> {
    let cols = layout.columns();
    let mut design = DMatrix::zeros(times.len(), cols);
    let mut row = vec![0.0; cols];
    for (s, &t) in times.iter().enumerate() {
        let z = panel.regressor_vector(t, layout.pairs())?;
        layout.row_into(remap.apply(t), &z, &mut row);
        for (c, v) in row.iter().enumerate() {
            design[(s, c)] = *v;
        }
    }
    Ok(design)
}

/// Least-squares coefficients and the numerical rank of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub beta: Vec<f64>,
    pub rank: usize,
}

fn rank_tolerance(rows: usize, cols: usize, r00: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * r00.abs()
}

/// Minimizes `|y - X b|^2 + ridge |b|^2` by column-pivoted Householder QR
/// (of the ridge-augmented system when `ridge > 0`).
pub fn fit_ols(design: &DMatrix<f64>, response: &[f64], ridge: f64) -> Result<LeastSquares> {
    let (rows, cols) = design.shape();
    if response.len() != rows {
        return Err(Error::InvalidConfig(format!(
            "response has {} entries for {rows} design rows",
            response.len()
        )));
    }
    if let Some(v) = response.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            what: "finite response",
            value: *v,
        });
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge {ridge} must be >= 0")));
    }
    if cols == 0 {
        return Ok(LeastSquares {
            beta: Vec::new(),
            rank: 0,
        });
    }
    let (a, b) = if ridge > 0.0 {
        let mut a = DMatrix::zeros(rows + cols, cols);
        a.view_mut((0, 0), (rows, cols)).copy_from(design);
        let s = ridge.sqrt();
        for c in 0..cols {
            a[(rows + c, c)] = s;
        }
        let mut b = DVector::zeros(rows + cols);
        b.rows_mut(0, rows).copy_from_slice(response);
        (a, b)
    } else {
        if rows < cols {
            return Err(Error::Underdetermined { rows, cols });
        }
        (design.clone(), DVector::from_column_slice(response))
    };

    let total_rows = a.nrows();
    let qr = a.col_piv_qr();
    let r = qr.r();
    let tol = rank_tolerance(total_rows, cols, r[(0, 0)]);
    let rank = (0..cols).take_while(|&i| r[(i, i)].abs() > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let mut qtb = b;
    qr.q_tr_mul(&mut qtb);
    let mut z = r
        .view((0, 0), (cols, cols))
        .solve_upper_triangular(&qtb.rows(0, cols))
        .ok_or(Error::RankDeficient { rank, cols })?;
    qr.p().inv_permute_rows(&mut z);
    Ok(LeastSquares {
        beta: z.iter().copied().collect(),
        rank,
    })
}

fn fallback_ridge_value(design: &DMatrix<f64>) -> f64 {
    let trace: f64 = design.iter().map(|v| v * v).sum();
    1e-10 * trace / design.ncols().max(1) as f64
}

/// Fitted sieve regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveFit {
    beta: Vec<f64>,
    layout: DesignLayout,
    remap: TimeRemap,
}

impl SieveFit {
    pub fn from_parts(beta: Vec<f64>, layout: DesignLayout, remap: TimeRemap) -> Result<Self> {
        if beta.len() != layout.columns() {
            return Err(Error::InvalidConfig(format!(
                "{} coefficients for {} columns",
                beta.len(),
                layout.columns()
            )));
        }
        Ok(Self {
            beta,
            layout,
            remap,
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    pub fn remap(&self) -> &TimeRemap {
        &self.remap
    }

    /// Prediction at time `t` with conditioning values `z`.
    pub fn predict(&self, t: usize, z: &[f64]) -> f64 {
        self.predict_rescaled(self.remap.apply(t), z)
    }

    pub fn predict_rescaled(&self, u: f64, z: &[f64]) -> f64 {
        let row = self.layout.row(u, z);
        row.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }
}

/// Solves least squares on the identifiable columns of `design` and
/// scatters the result back to full width (redundant columns get 0).
fn fit_identifiable(
    design: &DMatrix<f64>,
    response: &[f64],
    layout: &DesignLayout,
    ridge: f64,
    fallback: bool,
) -> Result<Vec<f64>> {
    let keep = layout.identifiable_columns();
    let reduced = if keep.len() == design.ncols() {
        design.clone()
    } else {
        design.select_columns(keep.iter())
    };
    let ls = match fit_ols(&reduced, response, ridge) {
        Err(Error::RankDeficient { .. }) if fallback && ridge == 0.0 => {
            fit_ols(&reduced, response, fallback_ridge_value(&reduced))?
        }
        other => other?,
    };
    let mut beta = vec![0.0; layout.columns()];
    for (&c, b) in keep.iter().zip(ls.beta) {
        beta[c] = b;
    }
    Ok(beta)
}

/// Global sieve fit of `response` (one value per time) on the rows `times`.
pub fn fit_sieve(
    times: &[usize],
    response: &[f64],
    panel: &TimeSeriesPanel,
    layout: &DesignLayout,
    remap: &TimeRemap,
    config: &SieveConfig,
) -> Result<SieveFit> {
    let design = build_design_matrix(times, panel, layout, remap)?;
    let beta = fit_identifiable(&design, response, layout, config.ridge, config.fallback_ridge)?;
    SieveFit::from_parts(beta, layout.clone(), *remap)
}

/// Time-varying mean of `series`, indexed `1..=len`, using `time_basis`
/// Legendre functions of rescaled time.
pub fn fit_time_varying_mean(series: &[f64], time_basis: usize) -> Result<SieveFit> {
    if time_basis == 0 {
        return Err(Error::InvalidConfig("time basis needs at least one function".into()));
    }
    let len = series.len();
    if len == 0 {
        return Err(Error::Underdetermined {
            rows: 0,
            cols: time_basis,
        });
    }
    let layout = DesignLayout::time_only(time_basis);
    let remap = TimeRemap { lo: 1, hi: len, n: len };
    let mut design = DMatrix::zeros(len, time_basis);
    let mut row = vec![0.0; time_basis];
    for t in 1..=len {
        layout.row_into(remap.apply(t), &[], &mut row);
        for (c, v) in row.iter().enumerate() {
            design[(t - 1, c)] = *v;
        }
    }
    let ls = fit_ols(&design, series, 0.0)?;
    SieveFit::from_parts(ls.beta, layout, remap)
}

/// Recursive least squares by Givens rotations on the triangular factor.
struct IncrementalQr {
    cols: usize,
    r: Vec<f64>,
    qty: Vec<f64>,
    rows: usize,
}

impl IncrementalQr {
    fn new(cols: usize, ridge: f64) -> Self {
        let mut r = vec![0.0; cols * cols];
        let s = ridge.sqrt();
        for i in 0..cols {
            r[i * cols + i] = s;
        }
        Self {
            cols,
            r,
            qty: vec![0.0; cols],
            rows: 0,
        }
    }

    fn add_row(&mut self, row: &[f64], y: f64) {
        let n = self.cols;
        let mut x = row.to_vec();
        let mut y = y;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            let rii = self.r[i * n + i];
            let h = rii.hypot(x[i]);
            let (c, s) = (rii / h, x[i] / h);
            for j in i..n {
                let a = self.r[i * n + j];
                let b = x[j];
                self.r[i * n + j] = c * a + s * b;
                x[j] = -s * a + c * b;
            }
            let a = self.qty[i];
            self.qty[i] = c * a + s * y;
            y = -s * a + c * y;
        }
        self.rows += 1;
    }

    fn full_rank(&self) -> bool {
        let n = self.cols;
        let max = (0..n).map(|i| self.r[i * n + i].abs()).fold(0.0, f64::max);
        if max == 0.0 {
            return false;
        }
        let tol = rank_tolerance(self.rows.max(n), n, max) * 1e3;
        (0..n).all(|i| self.r[i * n + i].abs() > tol)
    }

    fn solve(&self) -> Vec<f64> {
        let n = self.cols;
        let mut beta = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = self.qty[i];
            for j in i + 1..n {
                acc -= self.r[i * n + j] * beta[j];
            }
            beta[i] = acc / self.r[i * n + i];
        }
        beta
    }
}

/// One regression response over the effective times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFit {
    pub key: ResponseKey,
    /// Residual at each effective time, in time order.
    pub residuals: Vec<f64>,
    /// Index of the first usable residual; earlier entries are warm-up
    /// rows of a sequential fit and hold 0.
    pub usable_from: usize,
    /// `(time_basis, cov_basis)` used, when a sieve was fitted.
    pub basis: Option<(usize, usize)>,
}

impl ResponseFit {
    pub fn from_residuals(key: ResponseKey, residuals: Vec<f64>) -> Self {
        Self {
            key,
            residuals,
            usable_from: 0,
            basis: None,
        }
    }
}

/// Response values of `key` at the given times.
pub fn response_series(panel: &TimeSeriesPanel, key: &ResponseKey, times: &[usize]) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| panel.response_value(t, key.role, key.dim, key.offset))
        .collect()
}

/// Sieve regression of `key` on `conditioning` over the effective range,
/// in global or sequential mode.
pub fn fit_response(
    panel: &TimeSeriesPanel,
    key: &ResponseKey,
    conditioning: &[CondPair],
    range: &EffectiveTimeRange,
    config: &SieveConfig,
) -> Result<ResponseFit> {
    config.validate()?;
    let layout = DesignLayout::new(conditioning, config.time_basis, config.cov_basis, config.scale);
    let times: Vec<usize> = range.times().collect();
    let cols = layout.columns();
    if times.len() < MIN_ROWS_PER_COLUMN * cols {
        return Err(Error::InsufficientData(format!(
            "{} effective times for {cols} sieve columns (need {})",
            times.len(),
            MIN_ROWS_PER_COLUMN * cols
        )));
    }
    let remap = TimeRemap::from_range(range, panel.n());
    let y = response_series(panel, key, &times)?;
    let design = build_design_matrix(&times, panel, &layout, &remap)?;
    let basis = Some((layout.time_basis(), layout.cov_basis()));

    match config.mode {
        FitMode::Global => {
            let beta = fit_identifiable(&design, &y, &layout, config.ridge, config.fallback_ridge)?;
            let residuals = (0..times.len())
                .map(|s| {
                    let fitted: f64 = design.row(s).iter().zip(&beta).map(|(a, b)| a * b).sum();
                    y[s] - fitted
                })
                .collect();
            Ok(ResponseFit {
                key: *key,
                residuals,
                usable_from: 0,
                basis,
            })
        }
        FitMode::Sequential => {
            let keep = layout.identifiable_columns();
            let mut inc = IncrementalQr::new(keep.len(), config.ridge);
            let mut residuals = vec![0.0; times.len()];
            let mut usable_from = None;
            let mut row = vec![0.0; keep.len()];
            for s in 0..times.len() {
                for (slot, &c) in row.iter_mut().zip(&keep) {
                    *slot = design[(s, c)];
                }
                inc.add_row(&row, y[s]);
                if usable_from.is_none() && inc.rows >= keep.len() && inc.full_rank() {
                    usable_from = Some(s);
                }
                if usable_from.is_some() {
                    let beta = inc.solve();
                    let fitted: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
                    residuals[s] = y[s] - fitted;
                }
            }
            let usable_from = usable_from.ok_or(Error::RankDeficient {
                rank: 0,
                cols: keep.len(),
            })?;
            Ok(ResponseFit {
                key: *key,
                residuals,
                usable_from,
                basis,
            })
        }
    }
}

/// Sequential-mode coefficients at the last row, for consistency checks.
pub fn sequential_final_beta(
    times: &[usize],
    response: &[f64],
    panel: &TimeSeriesPanel,
    layout: &DesignLayout,
    remap: &TimeRemap,
) -> Result<Vec<f64>> {
    let design = build_design_matrix(times, panel, layout, remap)?;
    let keep = layout.identifiable_columns();
    let mut inc = IncrementalQr::new(keep.len(), 0.0);
    for s in 0..times.len() {
        let row: Vec<f64> = keep.iter().map(|&c| design[(s, c)]).collect();
        inc.add_row(&row, response[s]);
    }
    if !inc.full_rank() {
        return Err(Error::RankDeficient {
            rank: 0,
            cols: keep.len(),
        });
    }
    let mut beta = vec![0.0; layout.columns()];
    for (&c, b) in keep.iter().zip(inc.solve()) {
        beta[c] = b;
    }
    Ok(beta)
}

/// Fits every distinct response of `spec` exactly once.
pub fn fit_responses<F>(spec: &HypothesisSpec, mut fit: F) -> Result<BTreeMap<ResponseKey, ResponseFit>>
where
    F: FnMut(&ResponseKey) -> Result<ResponseFit>,
{
    spec.response_keys()
        .into_iter()
        .map(|key| fit(&key).map(|f| (key, f)))
        .collect()
}

/// Residual products, one row per usable effective time and one column
/// per tuple (in the hypothesis' tuple order). Row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProducts {
    times: Vec<usize>,
    tuples: Vec<Tuple>,
    data: Vec<f64>,
}

impl ResidualProducts {
    pub fn new(times: Vec<usize>, tuples: Vec<Tuple>, data: Vec<f64>) -> Result<Self> {
        if data.len() != times.len() * tuples.len() {
            return Err(Error::InvalidConfig(format!(
                "{} values for {} times x {} tuples",
                data.len(),
                times.len(),
                tuples.len()
            )));
        }
        Ok(Self { times, tuples, data })
    }

    /// Builds from rows; times are numbered from 1 and tuples are placeholders.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidConfig("ragged residual rows".into()));
        }
        let tuples = (0..dim).map(|m| Tuple::new(m, m, 0, 0)).collect();
        Self::new(
            (1..=rows.len()).collect(),
            tuples,
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tuples.len()
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim().max(1)).take(self.len())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            times: self.times.clone(),
            tuples: self.tuples.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Drops the first `k` rows.
    pub fn skip(&self, k: usize) -> Self {
        let d = self.dim();
        let k = k.min(self.len());
        Self {
            times: self.times[k..].to_vec(),
            tuples: self.tuples.clone(),
            data: self.data[k * d..].to_vec(),
        }
    }
}

/// `R[t, m] = eps_{x(m)}[t] * xi_{y(m)}[t]` over the effective range.
/// Warm-up rows of any sequential fit involved are dropped.
pub fn residual_products(
    spec: &HypothesisSpec,
    range: &EffectiveTimeRange,
    fits: &BTreeMap<ResponseKey, ResponseFit>,
) -> Result<ResidualProducts> {
    let count = range.count();
    let lookup = |key: ResponseKey| -> Result<&ResponseFit> {
        let fit = fits.get(&key).ok_or_else(|| Error::MissingFit(key.to_string()))?;
        if fit.residuals.len() != count {
            return Err(Error::InvalidConfig(format!(
                "fit for {key} has {} residuals, expected {count}",
                fit.residuals.len()
            )));
        }
        Ok(fit)
    };
    let pairs: Vec<(&ResponseFit, &ResponseFit)> = spec
        .tuples()
        .iter()
        .map(|t| Ok((lookup(t.x_key())?, lookup(t.y_key())?)))
        .collect::<Result<_>>()?;
    let start = pairs
        .iter()
        .map(|(x, y)| x.usable_from.max(y.usable_from))
        .max()
        .unwrap_or(0);
    let times: Vec<usize> = range.times().skip(start).collect();
    let mut data = Vec::with_capacity(times.len() * pairs.len());
    for s in start..count {
        for (x, y) in &pairs {
            data.push(x.residuals[s] * y.residuals[s]);
        }
    }
    ResidualProducts::new(times, spec.tuples().to_vec(), data)
}
