//! Synthetic data-generating processes and a replication harness for
//! empirical rejection rates.
//!
//! All autoregressions start at 0 and run a burn-in of [`BURN_IN`] steps
//! with their parameter curves held at `u = 0` before the `n` emitted
//! observations at `u = t/n`, `t = 1..=n`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_independence, run_dgcm, run_with_fitter, LagWindowConfig, RegressionConfig, ResponseFitter, TestConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, StreamRng};
use crate::sieve::ResponseFit;
use crate::ts::{CondPair, EffectiveTimeRange, HypothesisSpec, ResponseKey, Role, TimeSeriesPanel};

pub const BURN_IN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DgpSpec {
    /// Nonlinear time-varying regressions on a tvAR(1) covariate with
    /// correlated AR error shocks.
    CorrelatedShocks { k: u32, rho: f64 },
    /// `X` enters `Y` additively with coefficient `beta`.
    AdditiveEffect { k: u32, beta: f64 },
    /// Time-varying means, no covariate, correlated AR error shocks.
    IndepTrend { psi: u32, rho: f64 },
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let (complexity, param) = (self.complexity(), self.param());
        if complexity == 0 {
            return Err(Error::InvalidConfig("complexity parameter must be a positive integer".into()));
        }
        match self {
            DgpSpec::CorrelatedShocks { .. } | DgpSpec::IndepTrend { .. } if !(-1.0..=1.0).contains(&param) => {
                Err(Error::InvalidConfig(format!("correlation {param} outside [-1, 1]")))
            }
            _ if !param.is_finite() => Err(Error::InvalidConfig(format!("parameter {param} is not finite"))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpSpec::CorrelatedShocks { .. } => "correlated-shocks",
            DgpSpec::AdditiveEffect { .. } => "additive-effect",
            DgpSpec::IndepTrend { .. } => "indep-trend",
        }
    }

    pub fn complexity(&self) -> u32 {
        match *self {
            DgpSpec::CorrelatedShocks { k, .. } | DgpSpec::AdditiveEffect { k, .. } => k,
            DgpSpec::IndepTrend { psi, .. } => psi,
        }
    }

    /// Correlation `rho` or effect size `beta`.
    pub fn param(&self) -> f64 {
        match *self {
            DgpSpec::CorrelatedShocks { rho, .. } | DgpSpec::IndepTrend { rho, .. } => rho,
            DgpSpec::AdditiveEffect { beta, .. } => beta,
        }
    }

    pub fn with_param(self, value: f64) -> Self {
        match self {
            DgpSpec::CorrelatedShocks { k, .. } => DgpSpec::CorrelatedShocks { k, rho: value },
            DgpSpec::AdditiveEffect { k, .. } => DgpSpec::AdditiveEffect { k, beta: value },
            DgpSpec::IndepTrend { psi, .. } => DgpSpec::IndepTrend { psi, rho: value },
        }
    }

    /// `X ⫫ Y | Z` at offset 0, or `X ⫫ Y` for the trend family.
    pub fn hypothesis(&self) -> HypothesisSpec {
        let conditioning = match self {
            DgpSpec::IndepTrend { .. } => vec![],
            _ => vec![CondPair::new(0, 0)],
        };
        HypothesisSpec::single(0, 0, conditioning).expect("valid default hypothesis")
    }
}

pub fn f_corr(z: f64, u: f64, k: u32) -> f64 {
    (0.5 + 0.25 * (2.0 * PI * u).cos()) * (-z * z).exp() * (k as f64 * z).sin()
}

pub fn g_corr(z: f64, u: f64, k: u32) -> f64 {
    (0.3 + 0.15 * (PI * u).sin()) * (-z * z).exp() * (k as f64 * z).cos()
}

fn sigma_eps(z: f64, u: f64) -> f64 {
    // e^{-5z} / (1 + e^{-5z}) written as a logistic
    let w = 1.0 / (1.0 + (5.0 * z).exp());
    0.2 + (0.5 + 0.25 * (2.0 * PI * u).sin()) * w
}

fn sigma_xi(z: f64, u: f64) -> f64 {
    0.5 + (0.4 + 0.2 * (2.0 * PI * u).cos()) * (-z * z).exp() * z.sin()
}

fn theta_eps(u: f64) -> f64 {
    0.4 + 0.2 * (PI * u).sin()
}

fn theta_xi(u: f64) -> f64 {
    0.5 + 0.25 * (2.0 * PI * u).sin()
}

pub fn f_additive(z: f64, u: f64, k: u32) -> f64 {
    (0.4 + 0.2 * (2.0 * PI * u).sin()) * (-z * z).exp() * (k as f64 * z).sin()
}

pub fn mu_x_trend(u: f64, psi: u32) -> f64 {
    0.5 + 0.25 * (psi as f64 * PI * u).cos()
}

pub fn mu_y_trend(u: f64, psi: u32) -> f64 {
    0.3 + 0.15 * (psi as f64 * PI * u).sin()
}

/// Time-varying AR(1) `x_t = theta(u_t) x_{t-1} + shock_t` started at 0.
/// The first `burn_in` shocks are used with `theta(0)` and dropped.
pub fn tvar1(theta: impl Fn(f64) -> f64, shocks: &[f64], burn_in: usize) -> Vec<f64> {
    let n = shocks.len().saturating_sub(burn_in);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for (i, &e) in shocks.iter().enumerate() {
        let u = if i < burn_in { 0.0 } else { (i - burn_in + 1) as f64 / n as f64 };
        x = theta(u) * x + e;
        if i >= burn_in {
            out.push(x);
        }
    }
    out
}

/// Generated panel plus the true conditional means of `X` and `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub panel: TimeSeriesPanel,
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
}

fn normals(rng: &mut StreamRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Bivariate standard normal shocks with correlation `rho`.
fn correlated_pair(rng: &mut StreamRng, len: usize, rho: f64) -> (Vec<f64>, Vec<f64>) {
    let a = normals(rng, len);
    let b = normals(rng, len);
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let b = a.iter().zip(&b).map(|(x, y)| rho * x + c * y).collect();
    (a, b)
}

pub fn generate_sample(dgp: &DgpSpec, n: usize, rng: &mut StreamRng) -> Result<Sample> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("sample length must be positive".into()));
    }
    let len = n + BURN_IN;
    let u = |t: usize| (t + 1) as f64 / n as f64;
    let mut panel = TimeSeriesPanel::new(n)?;
    let (x, y, x_mean, y_mean, z) = match *dgp {
        DgpSpec::CorrelatedShocks { k, rho } => {
            let z = tvar1(|u| 0.35 + 0.2 * (2.0 * PI * u).cos(), &normals(rng, len), BURN_IN);
            let (se, sx) = correlated_pair(rng, len, rho);
            let e = tvar1(theta_eps, &se, BURN_IN);
            let x_ = tvar1(theta_xi, &sx, BURN_IN);
            let x_mean: Vec<f64> = (0..n).map(|t| f_corr(z[t], u(t), k)).collect();
            let y_mean: Vec<f64> = (0..n).map(|t| g_corr(z[t], u(t), k)).collect();
            let x = (0..n).map(|t| x_mean[t] + sigma_eps(z[t], u(t)) * e[t]).collect();
            let y = (0..n).map(|t| y_mean[t] + sigma_xi(z[t], u(t)) * x_[t]).collect();
            (x, y, x_mean, y_mean, Some(z))
        }
        DgpSpec::AdditiveEffect { k, beta } => {
            let theta = |u: f64| 0.45 + 0.3 * (2.0 * PI * u).sin();
            let z = tvar1(|u| 0.5 + 0.25 * (PI * u).cos(), &normals(rng, len), BURN_IN);
            let e = tvar1(theta, &normals(rng, len), BURN_IN);
            let x_ = tvar1(theta, &normals(rng, len), BURN_IN);
            let f: Vec<f64> = (0..n).map(|t| f_additive(z[t], u(t), k)).collect();
            let x: Vec<f64> = (0..n).map(|t| f[t] + 0.3 * e[t]).collect();
            let y = (0..n).map(|t| f[t] + beta * x[t] + 0.3 * x_[t]).collect();
            let y_mean = f.iter().map(|v| (1.0 + beta) * v).collect();
            (x, y, f, y_mean, Some(z))
        }
        DgpSpec::IndepTrend { psi, rho } => {
            let (se, sx) = correlated_pair(rng, len, rho);
            let e = tvar1(theta_eps, &se, BURN_IN);
            let x_ = tvar1(theta_xi, &sx, BURN_IN);
            let x_mean: Vec<f64> = (0..n).map(|t| mu_x_trend(u(t), psi)).collect();
            let y_mean: Vec<f64> = (0..n).map(|t| mu_y_trend(u(t), psi)).collect();
            let x = (0..n)
                .map(|t| x_mean[t] + (0.2 + 0.5 + 0.25 * (2.0 * PI * u(t)).sin()) * e[t])
                .collect();
            let y = (0..n)
                .map(|t| y_mean[t] + (0.5 + 0.4 + 0.2 * (2.0 * PI * u(t)).cos()) * x_[t])
                .collect();
            (x, y, x_mean, y_mean, None)
        }
    };
    panel.push(Role::X, "x", x)?;
    panel.push(Role::Y, "y", y)?;
    if let Some(z) = z {
        panel.push(Role::Z, "z", z)?;
    }
    Ok(Sample { panel, x_mean, y_mean })
}

pub fn generate(dgp: &DgpSpec, n: usize, rng: &mut StreamRng) -> Result<TimeSeriesPanel> {
    Ok(generate_sample(dgp, n, rng)?.panel)
}

/// Residuals around the true conditional means; no regression is fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFitter {
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
}

impl OracleFitter {
    pub fn from_sample(sample: &Sample) -> Self {
        Self {
            x_mean: sample.x_mean.clone(),
            y_mean: sample.y_mean.clone(),
        }
    }
}

impl ResponseFitter for OracleFitter {
    fn fit(
        &self,
        panel: &TimeSeriesPanel,
        _conditioning: &[CondPair],
        range: &EffectiveTimeRange,
        key: &ResponseKey,
    ) -> Result<ResponseFit> {
        if key.dim != 0 {
            return Err(Error::MissingFit(key.to_string()));
        }
        let mean = match key.role {
            Role::X => &self.x_mean,
            Role::Y => &self.y_mean,
            Role::Z => return Err(Error::MissingFit(key.to_string())),
        };
        let residuals = range
            .times()
            .map(|t| {
                let v = panel.response_value(t, key.role, key.dim, key.offset)?;
                Ok(v - mean[(t as i64 + key.offset - 1) as usize])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResponseFit::from_residuals(*key, residuals))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sieve,
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sieve => "sieve",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub method: Method,
    pub test: TestConfig,
    pub regression: RegressionConfig,
    pub lag: LagWindowConfig,
}

impl ReplicationPlan {
    pub fn new(ns: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            ns,
            replications,
            seed,
            method: Method::Sieve,
            test: TestConfig::default(),
            regression: RegressionConfig::default(),
            lag: LagWindowConfig::default(),
        }
    }

    /// Sample sizes 250, 500, 750, 1000 with 100 replications each.
    pub fn default_cells(seed: u64) -> Self {
        Self::new(vec![250, 500, 750, 1000], 100, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub dgp: String,
    pub method: String,
    pub n: usize,
    pub param: f64,
    pub complexity: u32,
    pub replications: usize,
    pub rejections: usize,
    pub failures: usize,
    /// Rejections over successful replications.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
}

/// Seed for the data of replication `rep` at sample size `n`. It does not
/// depend on the DGP parameters, so cells that differ only in `rho` or
/// `beta` share their underlying shocks.
pub fn replication_seed(base: u64, n: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(base, n as u64), rep as u64)
}

/// Runs one replication; `Ok(true)` if the test rejects.
pub fn run_replication(dgp: &DgpSpec, n: usize, rep: usize, plan: &ReplicationPlan) -> Result<bool> {
    let seed = replication_seed(plan.seed, n, rep);
    let sample = generate_sample(dgp, n, &mut substream(seed, 0))?;
    let spec = dgp.hypothesis();
    let test = TestConfig {
        seed: derive_seed(seed, 1),
        ..plan.test
    };
    let report = match (plan.method, dgp) {
        (Method::Oracle, _) => run_with_fitter(&sample.panel, &spec, &OracleFitter::from_sample(&sample), &plan.lag, &test)?,
        (Method::Sieve, DgpSpec::IndepTrend { .. }) => {
            run_independence(&sample.panel, &spec, &plan.regression, &plan.lag, &test)?
        }
        (Method::Sieve, _) => run_dgcm(&sample.panel, &spec, &plan.regression, &plan.lag, &test)?,
    };
    Ok(report.reject)
}

/// Empirical rejection rate per `(dgp, n)` cell, in `dgps`-major order.
/// Failed replications are counted in `failures` and excluded from `rate`.
pub fn rejection_rates(plan: &ReplicationPlan, dgps: &[DgpSpec]) -> Result<Vec<RateCell>> {
    if plan.replications == 0 {
        return Err(Error::InvalidConfig("at least one replication is required".into()));
    }
    if plan.ns.is_empty() || dgps.is_empty() {
        return Err(Error::InvalidConfig("replication plan has no cells".into()));
    }
    plan.test.validate()?;
    for dgp in dgps {
        dgp.validate()?;
    }
    let cells: Vec<(DgpSpec, usize)> = dgps.iter().flat_map(|d| plan.ns.iter().map(move |&n| (*d, n))).collect();
    let work: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.replications).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Result<bool>> = work
        .par_iter()
        .map(|&(c, r)| {
            let (dgp, n) = &cells[c];
            run_replication(dgp, *n, r, plan)
        })
        .collect();
    Ok(cells
        .iter()
        .zip(outcomes.chunks(plan.replications))
        .map(|((dgp, n), outs)| {
            let failures = outs.iter().filter(|o| o.is_err()).count();
            let rejections = outs.iter().filter(|o| matches!(o, Ok(true))).count();
            for e in outs.iter().filter_map(|o| o.as_ref().err()) {
                log::warn!("{} n={n}: replication failed: {e}", dgp.name());
            }
            let ok = plan.replications - failures;
            let rate = if ok == 0 { 0.0 } else { rejections as f64 / ok as f64 };
            let se = if ok == 0 { 0.0 } else { (rate * (1.0 - rate) / ok as f64).sqrt() };
            RateCell {
                dgp: dgp.name().to_string(),
                method: plan.method.name().to_string(),
                n: *n,
                param: dgp.param(),
                complexity: dgp.complexity(),
                replications: plan.replications,
                rejections,
                failures,
                rate,
                se,
            }
        })
        .collect())
}

/// Long-format CSV, one row per cell.
pub fn write_rates_csv<W: Write>(cells: &[RateCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for cell in cells {
        w.serialize(cell)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesDocument {
    pub metadata: RatesMetadata,
    pub cells: Vec<RateCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesMetadata {
    pub version: String,
    pub burn_in: usize,
    pub plan: ReplicationPlan,
    pub dgps: Vec<DgpSpec>,
}

impl RatesDocument {
    pub fn new(plan: &ReplicationPlan, dgps: &[DgpSpec], cells: Vec<RateCell>) -> Self {
        Self {
            metadata: RatesMetadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                burn_in: BURN_IN,
                plan: plan.clone(),
                dgps: dgps.to_vec(),
            },
            cells,
        }
    }
}
