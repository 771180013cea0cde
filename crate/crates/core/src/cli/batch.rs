//! Batch execution of a list of hypotheses from a TOML config.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bh::bh_adjust;
use super::ingest::{ingest_csv, IngestOptions, InputKind, ReturnsTable};
use crate::engine::{
    run_dgcm, run_independence, LagWindowConfig, Norm, RegressionConfig, StatisticFamily, StatisticKind, TestConfig,
    TestReport,
};
use crate::error::{Error, Result};
use crate::modelsel::{CvConfig, DEFAULT_COUNTS, DEFAULT_GAMMA};
use crate::rng::derive_seed;
use crate::sieve::{FitMode, SieveConfig};
use crate::ts::{CondPair, HypothesisKind, HypothesisSpec, Role, Tuple};

fn default_date_column() -> String {
    "date".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// CSV path, relative to the config file.
    pub data: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default)]
    pub input_kind: InputKind,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub sieve: SieveSection,
    #[serde(default)]
    pub lag_window: LagSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(rename = "hypothesis", default)]
    pub hypotheses: Vec<HypothesisDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSection {
    pub alpha: f64,
    pub sims: usize,
    pub seed: u64,
    pub statistic: StatisticFamily,
    pub norm: Norm,
}

impl Default for TestSection {
    fn default() -> Self {
        let t = TestConfig::default();
        Self {
            alpha: t.alpha,
            sims: t.sims,
            seed: t.seed,
            statistic: t.statistic.family,
            norm: t.statistic.norm,
        }
    }
}

impl TestSection {
    pub fn config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            sims: self.sims,
            seed: self.seed,
            statistic: StatisticKind::new(self.statistic, self.norm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SieveSection {
    pub mode: FitMode,
    /// Cross-validate the basis counts; otherwise use the fixed counts.
    pub cv: bool,
    pub time_basis: usize,
    pub cov_basis: usize,
    pub time_grid: Vec<usize>,
    pub cov_grid: Vec<usize>,
    pub gamma: usize,
    pub ridge: f64,
    pub fallback_ridge: bool,
    pub scale: f64,
}

impl Default for SieveSection {
    fn default() -> Self {
        Self {
            mode: FitMode::Global,
            cv: true,
            time_basis: 4,
            cov_basis: 4,
            time_grid: DEFAULT_COUNTS.to_vec(),
            cov_grid: DEFAULT_COUNTS.to_vec(),
            gamma: DEFAULT_GAMMA,
            ridge: 0.0,
            fallback_ridge: false,
            scale: 1.0,
        }
    }
}

impl SieveSection {
    pub fn regression(&self) -> RegressionConfig {
        let sieve = SieveConfig {
            time_basis: self.time_basis,
            cov_basis: self.cov_basis,
            scale: self.scale,
            mode: self.mode,
            ridge: self.ridge,
            fallback_ridge: self.fallback_ridge,
        };
        let cv = self.cv.then(|| CvConfig {
            grid: self
                .time_grid
                .iter()
                .flat_map(|&c| self.cov_grid.iter().map(move |&d| (c, d)))
                .collect(),
            gamma: self.gamma,
        });
        RegressionConfig { sieve, cv }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagSection {
    /// Fixed window; absent means minimum-volatility selection.
    pub window: Option<usize>,
    pub delta: usize,
    pub candidates: Option<Vec<usize>>,
}

impl Default for LagSection {
    fn default() -> Self {
        Self {
            window: None,
            delta: crate::covest::DEFAULT_DELTA,
            candidates: None,
        }
    }
}

impl LagSection {
    pub fn config(&self) -> LagWindowConfig {
        match self.window {
            Some(l) => LagWindowConfig::Fixed(l),
            None => LagWindowConfig::Auto {
                candidates: self.candidates.clone(),
                delta: self.delta,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// Worker threads; 0 or absent uses all cores.
    pub threads: Option<usize>,
    /// Include wall-clock timings in the JSON output.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesRef {
    pub series: String,
    #[serde(default = "zero_offset")]
    pub offsets: Vec<i64>,
}

fn zero_offset() -> Vec<i64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisDef {
    pub name: Option<String>,
    /// Inferred from `z` when absent.
    pub kind: Option<HypothesisKind>,
    pub x: Vec<SeriesRef>,
    pub y: Vec<SeriesRef>,
    #[serde(default)]
    pub z: Vec<SeriesRef>,
}

fn describe_refs(refs: &[SeriesRef]) -> String {
    refs.iter()
        .flat_map(|r| {
            r.offsets.iter().map(move |&o| match o {
                0 => format!("{}(t)", r.series),
                o => format!("{}(t{o:+})", r.series),
            })
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl HypothesisDef {
    pub fn kind(&self) -> HypothesisKind {
        self.kind.unwrap_or(if self.z.is_empty() {
            HypothesisKind::Unconditional
        } else {
            HypothesisKind::Conditional
        })
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let mut s = format!("{} ⫫ {}", describe_refs(&self.x), describe_refs(&self.y));
        if !self.z.is_empty() {
            s.push_str(" | ");
            s.push_str(&describe_refs(&self.z));
        }
        s
    }

    /// Series bindings (role, name) in dimension order, and the spec.
    pub fn resolve(&self) -> Result<(Vec<(Role, &str)>, HypothesisSpec)> {
        let mut bindings = Vec::new();
        for (role, refs) in [(Role::X, &self.x), (Role::Y, &self.y), (Role::Z, &self.z)] {
            for r in refs {
                if r.offsets.is_empty() {
                    return Err(Error::InvalidConfig(format!("series {} has no offsets", r.series)));
                }
                bindings.push((role, r.series.as_str()));
            }
        }
        let mut tuples = Vec::new();
        for (i, xr) in self.x.iter().enumerate() {
            for (j, yr) in self.y.iter().enumerate() {
                for &a in &xr.offsets {
                    for &b in &yr.offsets {
                        tuples.push(Tuple::new(i, j, a, b));
                    }
                }
            }
        }
        let conditioning = self
            .z
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.offsets.iter().map(move |&c| CondPair::new(k, c)))
            .collect();
        let spec = HypothesisSpec::new(self.kind(), tuples, conditioning)?;
        Ok((bindings, spec))
    }
}

impl BatchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; a relative data path is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if config.data.is_relative() {
            if let Some(dir) = path.parent() {
                config.data = dir.join(&config.data);
            }
        }
        for out in [&mut config.output.csv, &mut config.output.json].into_iter().flatten() {
            if out.is_relative() {
                if let Some(dir) = path.parent() {
                    *out = dir.join(&*out);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::InvalidConfig("config lists no hypotheses".into()));
        }
        self.test.config().validate()?;
        for h in &self.hypotheses {
            h.resolve()?;
        }
        Ok(())
    }

    /// Checks that every referenced series exists in `table`.
    pub fn check_series(&self, table: &ReturnsTable) -> Result<()> {
        for h in &self.hypotheses {
            for r in h.x.iter().chain(&h.y).chain(&h.z) {
                table.column(&r.series)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub hypothesis: String,
    pub kind: HypothesisKind,
    pub statistic: Option<f64>,
    pub quantile: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_bh: Option<f64>,
    pub reject: Option<bool>,
    pub seed: u64,
    pub error: Option<String>,
    pub report: Option<TestReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

/// Results in config order; `p_bh` is computed over the rows that succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvalueTable {
    pub rows: Vec<BatchRow>,
}

/// Seed of each hypothesis: identical hypotheses share the index of their
/// first occurrence and so receive identical seeds.
pub fn hypothesis_seeds(base: u64, hypotheses: &[HypothesisDef]) -> Vec<u64> {
    let mut first: HashMap<(HypothesisKind, &[SeriesRef], &[SeriesRef], &[SeriesRef]), usize> = HashMap::new();
    hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let idx = *first.entry((h.kind(), &h.x, &h.y, &h.z)).or_insert(i);
            derive_seed(base, idx as u64)
        })
        .collect()
}

fn run_one(table: &ReturnsTable, def: &HypothesisDef, config: &BatchConfig, seed: u64) -> Result<TestReport> {
    let (bindings, spec) = def.resolve()?;
    let panel = table.panel(&bindings)?;
    let test = TestConfig {
        seed,
        ..config.test.config()
    };
    let regression = config.sieve.regression();
    let lag = config.lag_window.config();
    match spec.kind() {
        HypothesisKind::Conditional => run_dgcm(&panel, &spec, &regression, &lag, &test),
        HypothesisKind::Unconditional => run_independence(&panel, &spec, &regression, &lag, &test),
    }
}

/// Runs every hypothesis on `table`. Failures become error rows.
pub fn run_batch_on(table: &ReturnsTable, config: &BatchConfig) -> Result<PvalueTable> {
    config.validate()?;
    let seeds = hypothesis_seeds(config.test.seed, &config.hypotheses);
    let mut rows: Vec<BatchRow> = config
        .hypotheses
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(def, &seed)| {
            let start = Instant::now();
            let outcome = run_one(table, def, config, seed);
            let seconds = config.output.timings.then(|| start.elapsed().as_secs_f64());
            match outcome {
                Ok(report) => BatchRow {
                    hypothesis: def.label(),
                    kind: def.kind(),
                    statistic: Some(report.statistic),
                    quantile: Some(report.quantile),
                    p_raw: Some(report.p_value),
                    p_bh: None,
                    reject: Some(report.reject),
                    seed,
                    error: None,
                    report: Some(report),
                    seconds,
                },
                Err(e) => {
                    log::warn!("{}: {e}", def.label());
                    BatchRow {
                        hypothesis: def.label(),
                        kind: def.kind(),
                        statistic: None,
                        quantile: None,
                        p_raw: None,
                        p_bh: None,
                        reject: None,
                        seed,
                        error: Some(e.to_string()),
                        report: None,
                        seconds,
                    }
                }
            }
        })
        .collect();
    let ok: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].p_raw.is_some()).collect();
    let raw: Vec<f64> = ok.iter().map(|&i| rows[i].p_raw.unwrap()).collect();
    for (&i, adj) in ok.iter().zip(bh_adjust(&raw)?) {
        rows[i].p_bh = Some(adj);
    }
    Ok(PvalueTable { rows })
}

/// Loads the data and runs the batch, using `threads` workers (0 = all).
pub fn run_batch(config: &BatchConfig) -> Result<PvalueTable> {
    let table = ingest_csv(
        &config.data,
        &IngestOptions {
            date_column: config.date_column.clone(),
            kind: config.input_kind,
        },
    )?;
    config.check_series(&table)?;
    let threads = config.output.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_batch_on(&table, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
data = "prices.csv"

[test]
sims = 100
seed = 7

[[hypothesis]]
x = [{ series = "A" }]
y = [{ series = "B", offsets = [-1] }]

[[hypothesis]]
x = [{ series = "A" }]
y = [{ series = "B" }]
z = [{ series = "C", offsets = [-1, 0] }]
"#;

    #[test]
    fn parses_minimal_config() {
        let c = BatchConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.hypotheses.len(), 2);
        assert_eq!(c.date_column, "date");
        assert_eq!(c.test.sims, 100);
        assert_eq!(c.hypotheses[0].kind(), HypothesisKind::Unconditional);
        assert_eq!(c.hypotheses[0].label(), "A(t) ⫫ B(t-1)");
        let (bindings, spec) = c.hypotheses[1].resolve().unwrap();
        assert_eq!(bindings, vec![(Role::X, "A"), (Role::Y, "B"), (Role::Z, "C")]);
        assert_eq!(spec.conditioning(), &[CondPair::new(0, -1), CondPair::new(0, 0)]);
        assert!(c.sieve.regression().cv.is_some());
        assert_eq!(c.lag_window.config(), LagWindowConfig::default());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(BatchConfig::from_toml("data = \"x.csv\"\n").is_err());
        assert!(BatchConfig::from_toml(&MINIMAL.replace("sims = 100", "sims = 100\nbogus = 1")).is_err());
        assert!(BatchConfig::from_toml(&MINIMAL.replace("offsets = [-1, 0]", "offsets = [1]")).is_err());
    }

    #[test]
    fn duplicate_hypotheses_share_seeds() {
        let c = BatchConfig::from_toml(MINIMAL).unwrap();
        let mut hyps = c.hypotheses.clone();
        hyps.push(c.hypotheses[0].clone());
        let seeds = hypothesis_seeds(3, &hyps);
        assert_eq!(seeds[0], seeds[2]);
        assert_ne!(seeds[0], seeds[1]);
    }
}
