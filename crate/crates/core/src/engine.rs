//! Test statistics, Gaussian path simulation, Monte Carlo calibration and
//! the end-to-end conditional and unconditional test runners.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covest::{default_candidates, rolling_path, select_lag_window, CovariancePath, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::modelsel::{cross_validate, CvConfig};
use crate::rng::{substream, StreamRng};
use crate::sieve::{fit_response, fit_responses, residual_products, ResidualProducts, ResponseFit, SieveConfig};
use crate::ts::{CondPair, EffectiveTimeRange, HypothesisKind, HypothesisSpec, ResponseKey, TimeSeriesPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticFamily {
    /// Largest norm over the partial sums.
    #[default]
    MaxPartialSum,
    /// Norm of the full sum.
    FullSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatisticKind {
    pub family: StatisticFamily,
    pub norm: Norm,
}

impl StatisticKind {
    pub fn new(family: StatisticFamily, norm: Norm) -> Self {
        Self { family, norm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub sims: usize,
    pub seed: u64,
    #[serde(default)]
    pub statistic: StatisticKind,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            sims: 5000,
            seed: 0,
            statistic: StatisticKind::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} must be in (0, 1)", self.alpha)));
        }
        if self.sims == 0 {
            return Err(Error::InvalidConfig("at least one Monte Carlo simulation is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagWindowConfig {
    Fixed(usize),
    /// Minimum-volatility selection; `candidates = None` means
    /// `1..=floor(n^{3/4})`.
    Auto {
        candidates: Option<Vec<usize>>,
        delta: usize,
    },
}

impl Default for LagWindowConfig {
    fn default() -> Self {
        LagWindowConfig::Auto {
            candidates: None,
            delta: DEFAULT_DELTA,
        }
    }
}

/// Basis counts and, optionally, the cross-validation grid that
/// overrides them per response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub sieve: SieveConfig,
    pub cv: Option<CvConfig>,
}

impl RegressionConfig {
    pub fn fixed(sieve: SieveConfig) -> Self {
        Self { sieve, cv: None }
    }

    pub fn cross_validated(cv: CvConfig) -> Self {
        Self {
            sieve: SieveConfig::new(1, 1),
            cv: Some(cv),
        }
    }
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self::cross_validated(CvConfig::default())
    }
}

/// Regression of one response on the conditioning pairs.
pub trait ResponseFitter: Sync {
    fn fit(
        &self,
        panel: &TimeSeriesPanel,
        conditioning: &[CondPair],
        range: &EffectiveTimeRange,
        key: &ResponseKey,
    ) -> Result<ResponseFit>;
}

/// Sieve regression on the conditioning pairs, with optional
/// cross-validated basis counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveFitter {
    pub config: RegressionConfig,
}

impl ResponseFitter for SieveFitter {
    fn fit(
        &self,
        panel: &TimeSeriesPanel,
        conditioning: &[CondPair],
        range: &EffectiveTimeRange,
        key: &ResponseKey,
    ) -> Result<ResponseFit> {
        let mut sieve = self.config.sieve;
        if let Some(cv) = &self.config.cv {
            let res = cross_validate(panel, key, conditioning, range, cv, &sieve)?;
            sieve.time_basis = res.time_basis;
            sieve.cov_basis = res.cov_basis;
        }
        fit_response(panel, key, conditioning, range, &sieve)
    }
}

/// Time-varying mean fit (time basis only), ignoring any conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFitter {
    pub config: RegressionConfig,
}

impl ResponseFitter for MeanFitter {
    fn fit(
        &self,
        panel: &TimeSeriesPanel,
        _conditioning: &[CondPair],
        range: &EffectiveTimeRange,
        key: &ResponseKey,
    ) -> Result<ResponseFit> {
        let cv = self.config.cv.as_ref().map(|cv| CvConfig {
            grid: cv.grid.iter().map(|&(c, _)| (c, 1)).collect(),
            gamma: cv.gamma,
        });
        SieveFitter {
            config: RegressionConfig {
                sieve: SieveConfig {
                    cov_basis: 1,
                    ..self.config.sieve
                },
                cv,
            },
        }
        .fit(panel, &[], range, key)
    }
}

/// Scaled partial-sum statistic of the rows `data` (`dim` columns).
fn statistic_rows(data: &[f64], dim: usize, kind: StatisticKind) -> f64 {
    if dim == 0 || data.is_empty() {
        return 0.0;
    }
    let rows = data.len() / dim;
    let mut acc = vec![0.0; dim];
    let mut best: f64 = 0.0;
    for row in data.chunks(dim) {
        for (a, r) in acc.iter_mut().zip(row) {
            *a += r;
        }
        if kind.family == StatisticFamily::MaxPartialSum {
            best = best.max(norm_measure(&acc, kind.norm));
        }
    }
    if kind.family == StatisticFamily::FullSum {
        best = norm_measure(&acc, kind.norm);
    }
    finish_norm(best, kind.norm) / (rows as f64).sqrt()
}

/// Monotone surrogate of the norm (squared for L2).
fn norm_measure(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L2 => v.iter().map(|x| x * x).sum(),
        Norm::Max => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

fn finish_norm(measure: f64, norm: Norm) -> f64 {
    match norm {
        Norm::L2 => measure.sqrt(),
        Norm::Max => measure,
    }
}

/// Statistic over all rows of `r`, scaled by `1/sqrt(rows)`.
pub fn statistic(r: &ResidualProducts, kind: StatisticKind) -> f64 {
    statistic_rows(r.data(), r.dim(), kind)
}

/// One Gaussian path `a_t g_t` with independent standard normal `g_t`,
/// row-major over the window times.
pub fn simulate_gaussian_path(path: &CovariancePath, rng: &mut StreamRng) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len() * path.dim());
    for a in path.generators() {
        let g: f64 = rng.sample(StandardNormal);
        out.extend(a.iter().map(|x| x * g));
    }
    out
}

/// Statistic of one simulated path without materializing it.
fn simulated_statistic(path: &CovariancePath, kind: StatisticKind, rng: &mut StreamRng) -> f64 {
    let dim = path.dim();
    if dim == 0 || path.is_empty() {
        return 0.0;
    }
    let mut acc = vec![0.0; dim];
    let mut best: f64 = 0.0;
    for a in path.generators() {
        let g: f64 = rng.sample(StandardNormal);
        for (s, x) in acc.iter_mut().zip(a) {
            *s += x * g;
        }
        if kind.family == StatisticFamily::MaxPartialSum {
            best = best.max(norm_measure(&acc, kind.norm));
        }
    }
    if kind.family == StatisticFamily::FullSum {
        best = norm_measure(&acc, kind.norm);
    }
    finish_norm(best, kind.norm) / (path.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub quantile: f64,
    /// Simulated statistics, ascending.
    pub sorted: Vec<f64>,
}

/// 1-based index `ceil((1 - alpha) sims)` of the calibration order statistic.
pub fn quantile_index(sims: usize, alpha: f64) -> usize {
    let raw = ((1.0 - alpha) * sims as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(sims)
}

/// Order-statistic quantile of `sorted` (ascending).
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    sorted[quantile_index(sorted.len(), alpha) - 1]
}

/// Simulates `sims` statistics; simulation `k` draws from substream
/// `(seed, k)`, so the result does not depend on the thread count.
pub fn calibrate(path: &CovariancePath, kind: StatisticKind, sims: usize, alpha: f64, seed: u64) -> Result<Calibration> {
    if sims == 0 {
        return Err(Error::InvalidConfig("at least one Monte Carlo simulation is required".into()));
    }
    let mut sorted: Vec<f64> = (0..sims as u64)
        .into_par_iter()
        .map(|k| simulated_statistic(path, kind, &mut substream(seed, k)))
        .collect();
    sorted.sort_by(f64::total_cmp);
    Ok(Calibration {
        quantile: empirical_quantile(&sorted, alpha),
        sorted,
    })
}

/// Add-one Monte Carlo p-value `(1 + #{sim >= observed}) / (1 + sims)`.
pub fn p_value(observed: f64, simulated: &[f64]) -> f64 {
    let exceed = simulated.iter().filter(|&&s| s >= observed).count();
    (1 + exceed) as f64 / (1 + simulated.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisChoice {
    pub response: String,
    pub time_basis: usize,
    pub cov_basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub window: usize,
    pub window_selected: bool,
    /// Effective times `T_n`.
    pub effective_times: usize,
    /// Leading times dropped as sequential warm-up.
    pub warmup_dropped: usize,
    /// Window times `T_{n,L}`.
    pub window_times: usize,
    pub dim: usize,
    pub basis: Vec<BasisChoice>,
    pub seed: u64,
    pub sims: usize,
    pub alpha: f64,
    pub statistic_kind: StatisticKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub quantile: f64,
    pub p_value: f64,
    pub reject: bool,
    pub diagnostics: Diagnostics,
}

/// Window selection, calibration and decision on given residual products.
/// `n` is the panel length used for the default candidate windows.
pub fn run_on_residuals(
    rp: &ResidualProducts,
    n: usize,
    lag: &LagWindowConfig,
    config: &TestConfig,
) -> Result<TestReport> {
    config.validate()?;
    let (window, selected) = match lag {
        LagWindowConfig::Fixed(l) => (*l, false),
        LagWindowConfig::Auto { candidates, delta } => {
            let default;
            let candidates = match candidates {
                Some(c) => c.as_slice(),
                None => {
                    default = default_candidates(n, rp.len());
                    default.as_slice()
                }
            };
            (select_lag_window(rp, candidates, *delta)?.window, true)
        }
    };
    let path = rolling_path(rp, window)?;
    if path.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} window times for lag window {window}",
            path.len()
        )));
    }
    let observed = statistic(&rp.skip(window - 1), config.statistic);
    let cal = calibrate(&path, config.statistic, config.sims, config.alpha, config.seed)?;
    Ok(TestReport {
        statistic: observed,
        quantile: cal.quantile,
        p_value: p_value(observed, &cal.sorted),
        reject: observed > cal.quantile,
        diagnostics: Diagnostics {
            window,
            window_selected: selected,
            effective_times: rp.len(),
            warmup_dropped: 0,
            window_times: path.len(),
            dim: rp.dim(),
            basis: Vec::new(),
            seed: config.seed,
            sims: config.sims,
            alpha: config.alpha,
            statistic_kind: config.statistic,
        },
    })
}

/// Fits all responses of `spec` with `fitter` and builds the residual
/// products over the effective range.
pub fn fitted_residual_products<F: ResponseFitter>(
    panel: &TimeSeriesPanel,
    spec: &HypothesisSpec,
    fitter: &F,
) -> Result<(ResidualProducts, BTreeMap<ResponseKey, ResponseFit>, EffectiveTimeRange)> {
    let range = spec.effective_range(panel.n())?;
    let keys = spec.response_keys();
    let fitted: Vec<Result<ResponseFit>> = keys
        .par_iter()
        .map(|key| fitter.fit(panel, spec.conditioning(), &range, key))
        .collect();
    let mut fitted = keys.iter().zip(fitted).collect::<BTreeMap<_, _>>();
    let fits = fit_responses(spec, |key| fitted.remove(key).expect("every key was fitted"))?;
    let rp = residual_products(spec, &range, &fits)?;
    Ok((rp, fits, range))
}

/// Full pipeline with a caller-supplied response fitter.
pub fn run_with_fitter<F: ResponseFitter>(
    panel: &TimeSeriesPanel,
    spec: &HypothesisSpec,
    fitter: &F,
    lag: &LagWindowConfig,
    config: &TestConfig,
) -> Result<TestReport> {
    config.validate()?;
    let (rp, fits, range) = fitted_residual_products(panel, spec, fitter)?;
    let mut report = run_on_residuals(&rp, panel.n(), lag, config)?;
    report.diagnostics.effective_times = range.count();
    report.diagnostics.warmup_dropped = range.count() - rp.len();
    report.diagnostics.basis = fits
        .values()
        .filter_map(|f| {
            f.basis.map(|(time_basis, cov_basis)| BasisChoice {
                response: f.key.to_string(),
                time_basis,
                cov_basis,
            })
        })
        .collect();
    Ok(report)
}

/// Conditional independence test of `spec` given its conditioning pairs.
pub fn run_dgcm(
    panel: &TimeSeriesPanel,
    spec: &HypothesisSpec,
    regression: &RegressionConfig,
    lag: &LagWindowConfig,
    config: &TestConfig,
) -> Result<TestReport> {
    if spec.kind() != HypothesisKind::Conditional {
        return Err(Error::InvalidConfig("conditional test needs a conditional hypothesis".into()));
    }
    let fitter = SieveFitter {
        config: regression.clone(),
    };
    run_with_fitter(panel, spec, &fitter, lag, config)
}

/// Unconditional independence test, residuals taken around time-varying means.
pub fn run_independence(
    panel: &TimeSeriesPanel,
    spec: &HypothesisSpec,
    regression: &RegressionConfig,
    lag: &LagWindowConfig,
    config: &TestConfig,
) -> Result<TestReport> {
    if spec.kind() != HypothesisKind::Unconditional {
        return Err(Error::InvalidConfig("independence test needs an unconditional hypothesis".into()));
    }
    let fitter = MeanFitter {
        config: regression.clone(),
    };
    run_with_fitter(panel, spec, &fitter, lag, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(values: &[f64]) -> ResidualProducts {
        ResidualProducts::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn univariate_statistic() {
        let r = scalar(&[1.0, -2.0, 3.0]);
        let expected = 2.0 / 3f64.sqrt();
        for norm in [Norm::L2, Norm::Max] {
            let s = statistic(&r, StatisticKind::new(StatisticFamily::MaxPartialSum, norm));
            assert!((s - expected).abs() < 1e-15);
        }
        let full = statistic(&r, StatisticKind::new(StatisticFamily::FullSum, Norm::L2));
        assert!((full - expected).abs() < 1e-15);
        assert_eq!(statistic(&scalar(&[0.0; 4]), StatisticKind::default()), 0.0);
    }

    #[test]
    fn quantile_convention() {
        assert_eq!(quantile_index(5, 0.05), 5);
        assert_eq!(quantile_index(4, 0.5), 2);
        assert_eq!(quantile_index(2000, 0.05), 1900);
        assert_eq!(quantile_index(1, 0.99), 1);
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_eq!(empirical_quantile(&[7.0; 9], 0.05), 7.0);
    }

    #[test]
    fn p_values() {
        let sims = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(p_value(2.5, &sims), 3.0 / 5.0);
        assert_eq!(p_value(10.0, &sims), 1.0 / 5.0);
        assert_eq!(p_value(-1.0, &sims), 1.0);
    }

    #[test]
    fn zero_path_simulates_zero() {
        let path = rolling_path(&scalar(&[0.0; 6]), 2).unwrap();
        let draws = simulate_gaussian_path(&path, &mut substream(1, 0));
        assert!(draws.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulation_is_reproducible() {
        let path = rolling_path(&scalar(&[1.0, -0.5, 2.0, 0.3, -1.2]), 2).unwrap();
        let a = simulate_gaussian_path(&path, &mut substream(9, 4));
        let b = simulate_gaussian_path(&path, &mut substream(9, 4));
        assert_eq!(a, b);
        let k = StatisticKind::default();
        let c1 = calibrate(&path, k, 200, 0.05, 3).unwrap();
        let c2 = calibrate(&path, k, 200, 0.05, 3).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.sorted.len(), 200);
    }

    #[test]
    fn streamed_statistic_matches_materialized_path() {
        let rp = ResidualProducts::from_rows(&[
            vec![1.0, 0.2],
            vec![-0.4, 0.9],
            vec![0.3, -1.1],
            vec![2.0, 0.1],
        ])
        .unwrap();
        let path = rolling_path(&rp, 2).unwrap();
        for kind in [
            StatisticKind::new(StatisticFamily::MaxPartialSum, Norm::L2),
            StatisticKind::new(StatisticFamily::FullSum, Norm::Max),
        ] {
            let draws = simulate_gaussian_path(&path, &mut substream(5, 2));
            let direct = statistic_rows(&draws, 2, kind);
            let streamed = simulated_statistic(&path, kind, &mut substream(5, 2));
            assert!((direct - streamed).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_residuals_never_reject() {
        let rp = scalar(&[0.0; 30]);
        let config = TestConfig {
            sims: 50,
            ..TestConfig::default()
        };
        let report = run_on_residuals(&rp, 30, &LagWindowConfig::default(), &config).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.quantile, 0.0);
        assert!(!report.reject);
        assert_eq!(report.p_value, 1.0);
    }

    #[test]
    fn short_paths_are_rejected() {
        let rp = scalar(&[1.0, 2.0, 3.0]);
        let err = run_on_residuals(&rp, 3, &LagWindowConfig::Fixed(3), &TestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
