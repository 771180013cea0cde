use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dgcm::cli::batch::{BatchConfig, SieveSection};
use dgcm::cli::report::Metadata;
use dgcm::cli::{bh_adjust, emit_csv, emit_json, ingest_csv, run_batch, IngestOptions, InputKind, ReturnsTable};
use dgcm::covest::{default_candidates, select_lag_window, DEFAULT_DELTA};
use dgcm::engine::{
    fitted_residual_products, run_dgcm, run_independence, LagWindowConfig, MeanFitter, Norm, RegressionConfig,
    SieveFitter, StatisticFamily, StatisticKind, TestConfig,
};
use dgcm::modelsel::{cross_validate, CvConfig, CvResult};
use dgcm::rng::substream;
use dgcm::sieve::FitMode;
use dgcm::simlab::{generate, rejection_rates, write_rates_csv, DgpSpec, Method, RatesDocument, ReplicationPlan};
use dgcm::ts::{CondPair, HypothesisKind, HypothesisSpec, Role, Tuple};
use dgcm::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "dgcm", version, about = "Conditional independence tests for nonstationary time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Common {
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo simulations for calibration.
    #[arg(long)]
    sims: Option<usize>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional independence test of one hypothesis.
    Test(SingleArgs),
    /// Unconditional independence test of one hypothesis.
    Indep(SingleArgs),
    /// Run every hypothesis of a TOML config.
    Batch(BatchArgs),
    /// Empirical rejection rates on synthetic data.
    Simulate(SimulateArgs),
    /// Cross-validated basis counts and lag window for one hypothesis.
    SelectParams(SingleArgs),
    /// Benjamini-Hochberg adjustment of p-values.
    Bh(BhArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    MaxPartialSum,
    FullSum,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Max,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with a date column and one column per series.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "date")]
    date_column: String,
    #[arg(long, value_enum, default_value_t = InputKind::Prices)]
    input_kind: InputKind,
    /// X series as NAME or NAME:o1,o2 (offsets); repeatable.
    #[arg(long = "x", required = true)]
    x: Vec<String>,
    /// Y series as NAME or NAME:o1,o2; repeatable.
    #[arg(long = "y", required = true)]
    y: Vec<String>,
    /// Conditioning series as NAME or NAME:c1,c2 with c <= 0; repeatable.
    #[arg(long = "z")]
    z: Vec<String>,
    /// Fixed time-basis count (disables cross-validation).
    #[arg(long, requires = "cov_basis")]
    time_basis: Option<usize>,
    /// Fixed covariate-basis count.
    #[arg(long)]
    cov_basis: Option<usize>,
    /// Cross-validation buffer.
    #[arg(long, default_value_t = 1)]
    gamma: usize,
    /// Fixed lag window (default: minimum-volatility selection).
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: usize,
    #[arg(long, value_enum, default_value_t = StatArg::MaxPartialSum)]
    statistic: StatArg,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    norm: NormArg,
    /// Sequential (one-sided) sieve fits.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// TOML batch config.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path (overrides the config).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON output path (overrides the config).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Record wall-clock timings in the JSON output.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    CorrelatedShocks,
    AdditiveEffect,
    IndepTrend,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    dgp: DgpArg,
    /// Correlation (rho) or effect size (beta) values.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    param: Vec<f64>,
    /// Complexity K or Psi.
    #[arg(long, default_value_t = 1)]
    complexity: u32,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![250, 500, 750, 1000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    /// Use the true regression functions instead of sieve fits.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write one generated sample (first n, first param) to this CSV and exit.
    #[arg(long)]
    emit_sample: Option<PathBuf>,
}

#[derive(Args)]
struct BhArgs {
    #[command(flatten)]
    common: Common,
    /// p-values; read one per line from stdin when omitted.
    pvalues: Vec<f64>,
}

fn parse_series(arg: &str) -> Result<(String, Vec<i64>)> {
    match arg.split_once(':') {
        None => Ok((arg.to_string(), vec![0])),
        Some((name, offsets)) => {
            let offsets = offsets
                .split(',')
                .map(|o| {
                    o.trim()
                        .parse::<i64>()
                        .map_err(|_| Error::InvalidConfig(format!("invalid offset {o:?} in {arg:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((name.to_string(), offsets))
        }
    }
}

impl SingleArgs {
    fn table(&self) -> Result<ReturnsTable> {
        ingest_csv(
            &self.data,
            &IngestOptions {
                date_column: self.date_column.clone(),
                kind: self.input_kind,
            },
        )
    }

    fn hypothesis(&self, kind: HypothesisKind) -> Result<(Vec<(Role, String)>, HypothesisSpec)> {
        let parse = |v: &[String]| v.iter().map(|s| parse_series(s)).collect::<Result<Vec<_>>>();
        let (x, y, z) = (parse(&self.x)?, parse(&self.y)?, parse(&self.z)?);
        let mut bindings = Vec::new();
        for (role, list) in [(Role::X, &x), (Role::Y, &y), (Role::Z, &z)] {
            bindings.extend(list.iter().map(|(name, _)| (role, name.clone())));
        }
        let mut tuples = Vec::new();
        for (i, (_, xo)) in x.iter().enumerate() {
            for (j, (_, yo)) in y.iter().enumerate() {
                for &a in xo {
                    for &b in yo {
                        tuples.push(Tuple::new(i, j, a, b));
                    }
                }
            }
        }
        let conditioning = z
            .iter()
            .enumerate()
            .flat_map(|(k, (_, cs))| cs.iter().map(move |&c| CondPair::new(k, c)))
            .collect();
        Ok((bindings, HypothesisSpec::new(kind, tuples, conditioning)?))
    }

    fn regression(&self) -> RegressionConfig {
        let mut section = SieveSection {
            mode: if self.sequential { FitMode::Sequential } else { FitMode::Global },
            gamma: self.gamma,
            ..SieveSection::default()
        };
        if let (Some(c), Some(d)) = (self.time_basis, self.cov_basis) {
            section.cv = false;
            section.time_basis = c;
            section.cov_basis = d;
        }
        section.regression()
    }

    fn lag(&self) -> LagWindowConfig {
        match self.window {
            Some(l) => LagWindowConfig::Fixed(l),
            None => LagWindowConfig::Auto {
                candidates: None,
                delta: self.delta,
            },
        }
    }

    fn test_config(&self) -> TestConfig {
        let d = TestConfig::default();
        TestConfig {
            alpha: self.common.alpha.unwrap_or(d.alpha),
            sims: self.common.sims.unwrap_or(d.sims),
            seed: self.common.seed.unwrap_or(d.seed),
            statistic: StatisticKind::new(
                match self.statistic {
                    StatArg::MaxPartialSum => StatisticFamily::MaxPartialSum,
                    StatArg::FullSum => StatisticFamily::FullSum,
                },
                match self.norm {
                    NormArg::L2 => Norm::L2,
                    NormArg::Max => Norm::Max,
                },
            ),
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn single(args: &SingleArgs, kind: HypothesisKind) -> Result<()> {
    let table = args.table()?;
    let (bindings, spec) = args.hypothesis(kind)?;
    let refs: Vec<(Role, &str)> = bindings.iter().map(|(r, n)| (*r, n.as_str())).collect();
    let panel = table.panel(&refs)?;
    let config = args.test_config();
    let report = with_threads(args.common.threads, || match kind {
        HypothesisKind::Conditional => run_dgcm(&panel, &spec, &args.regression(), &args.lag(), &config),
        HypothesisKind::Unconditional => run_independence(&panel, &spec, &args.regression(), &args.lag(), &config),
    })?;
    print_json(&report)
}

#[derive(Serialize)]
struct ResponseSelection {
    response: String,
    cv: Option<CvResult>,
}

#[derive(Serialize)]
struct ParamSelection {
    responses: Vec<ResponseSelection>,
    lag_window: dgcm::covest::LagWindowSelection,
}

fn select_params(args: &SingleArgs) -> Result<()> {
    let table = args.table()?;
    let kind = if args.z.is_empty() {
        HypothesisKind::Unconditional
    } else {
        HypothesisKind::Conditional
    };
    let (bindings, spec) = args.hypothesis(kind)?;
    let refs: Vec<(Role, &str)> = bindings.iter().map(|(r, n)| (*r, n.as_str())).collect();
    let panel = table.panel(&refs)?;
    let regression = args.regression();
    let selection = with_threads(args.common.threads, || {
        let range = spec.effective_range(panel.n())?;
        let responses = spec
            .response_keys()
            .iter()
            .map(|key| {
                let cv = match &regression.cv {
                    None => None,
                    Some(cv) => {
                        let cv = if kind == HypothesisKind::Unconditional {
                            CvConfig {
                                grid: cv.grid.iter().map(|&(c, _)| (c, 1)).collect(),
                                gamma: cv.gamma,
                            }
                        } else {
                            cv.clone()
                        };
                        Some(cross_validate(&panel, key, spec.conditioning(), &range, &cv, &regression.sieve)?)
                    }
                };
                Ok(ResponseSelection {
                    response: key.to_string(),
                    cv,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (rp, _, _) = match kind {
            HypothesisKind::Conditional => fitted_residual_products(&panel, &spec, &SieveFitter {
                config: regression.clone(),
            })?,
            HypothesisKind::Unconditional => fitted_residual_products(&panel, &spec, &MeanFitter {
                config: regression.clone(),
            })?,
        };
        let candidates = default_candidates(panel.n(), rp.len());
        let lag_window = select_lag_window(&rp, &candidates, args.delta)?;
        Ok(ParamSelection { responses, lag_window })
    })?;
    print_json(&selection)
}

fn batch(args: &BatchArgs) -> Result<()> {
    let mut config = BatchConfig::load(&args.config)?;
    if let Some(seed) = args.common.seed {
        config.test.seed = seed;
    }
    if let Some(sims) = args.common.sims {
        config.test.sims = sims;
    }
    if let Some(alpha) = args.common.alpha {
        config.test.alpha = alpha;
    }
    if let Some(threads) = args.common.threads {
        config.output.threads = Some(threads);
    }
    if args.csv.is_some() {
        config.output.csv = args.csv.clone();
    }
    if args.json.is_some() {
        config.output.json = args.json.clone();
    }
    config.output.timings |= args.timings;
    config.validate()?;

    let start = Instant::now();
    let table = run_batch(&config)?;
    let mut metadata = Metadata::new(Some(&config));
    if config.output.timings {
        metadata.total_seconds = Some(start.elapsed().as_secs_f64());
    }
    match &config.output.csv {
        Some(path) => emit_csv(&table, create(path)?)?,
        None if config.output.json.is_none() => emit_csv(&table, io::stdout().lock())?,
        None => {}
    }
    if let Some(path) = &config.output.json {
        emit_json(&table, metadata, create(path)?)?;
    }
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("{}: {}", row.hypothesis, row.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let seed = args.common.seed.unwrap_or(0);
    let dgps: Vec<DgpSpec> = args
        .param
        .iter()
        .map(|&p| match args.dgp {
            DgpArg::CorrelatedShocks => DgpSpec::CorrelatedShocks {
                k: args.complexity,
                rho: p,
            },
            DgpArg::AdditiveEffect => DgpSpec::AdditiveEffect {
                k: args.complexity,
                beta: p,
            },
            DgpArg::IndepTrend => DgpSpec::IndepTrend {
                psi: args.complexity,
                rho: p,
            },
        })
        .collect();
    if let Some(path) = &args.emit_sample {
        let n = *args.n.first().ok_or_else(|| Error::InvalidConfig("no sample size".into()))?;
        let panel = generate(&dgps[0], n, &mut substream(seed, 0))?;
        let mut w = csv::Writer::from_writer(create(path)?);
        let columns: Vec<&dgcm::ts::Series> = panel.series().iter().collect();
        let mut header = vec!["t".to_string()];
        header.extend(columns.iter().map(|s| s.role.to_string().to_lowercase()));
        w.write_record(&header)?;
        for t in 0..panel.n() {
            let mut record = vec![(t + 1).to_string()];
            record.extend(columns.iter().map(|s| s.values[t].to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    let mut plan = ReplicationPlan::new(args.n.clone(), args.replications, seed);
    plan.method = if args.oracle { Method::Oracle } else { Method::Sieve };
    plan.test.alpha = args.common.alpha.unwrap_or(plan.test.alpha);
    plan.test.sims = args.common.sims.unwrap_or(plan.test.sims);
    let cells = with_threads(args.common.threads, || rejection_rates(&plan, &dgps))?;
    match &args.csv {
        Some(path) => write_rates_csv(&cells, create(path)?)?,
        None if args.json.is_none() => write_rates_csv(&cells, io::stdout().lock())?,
        None => {}
    }
    if let Some(path) = &args.json {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &RatesDocument::new(&plan, &dgps, cells))?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn bh(args: &BhArgs) -> Result<()> {
    let pvalues = if args.pvalues.is_empty() {
        io::stdin()
            .lock()
            .lines()
            .map(|l| l.map_err(|e| Error::io("<stdin>", e)))
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| {
                let l = l?;
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse {
                        row: 0,
                        column: "p".into(),
                        message: format!("invalid p-value {l:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        args.pvalues.clone()
    };
    let adjusted = bh_adjust(&pvalues)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "p_raw,p_bh").map_err(|e| Error::io("<stdout>", e))?;
    for (p, a) in pvalues.iter().zip(adjusted) {
        writeln!(out, "{p},{a}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Test(args) => single(args, HypothesisKind::Conditional),
        Command::Indep(args) => single(args, HypothesisKind::Unconditional),
        Command::Batch(args) => batch(args),
        Command::Simulate(args) => simulate(args),
        Command::SelectParams(args) => select_params(args),
        Command::Bh(args) => bh(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
