use std::path::PathBuf;

use dgcm::cli::{emit_csv, ingest_csv, ingest_reader, run_batch_on, BatchConfig, IngestOptions, InputKind};
use dgcm::engine::{fitted_residual_products, LagWindowConfig, RegressionConfig, TestConfig};
use dgcm::rng::substream;
use dgcm::sieve::SieveConfig;
use dgcm::simlab::{generate_sample, rejection_rates, tvar1, DgpSpec, OracleFitter, ReplicationPlan, BURN_IN};
use dgcm::ts::Role;
use rand::Rng;
use rand_distr::StandardNormal;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn tvar1_matches_stationary_moments() {
    let mut rng = substream(4, 0);
    let theta = 0.6;
    let shocks: Vec<f64> = (0..200_000 + BURN_IN).map(|_| rng.sample(StandardNormal)).collect();
    let x = tvar1(|_| theta, &shocks, BURN_IN);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let lag1 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
    let target = 1.0 / (1.0 - theta * theta);
    assert!(mean.abs() < 0.03);
    assert!((var / target - 1.0).abs() < 0.03, "{var} vs {target}");
    assert!((lag1 / var - theta).abs() < 0.01);
}

#[test]
fn correlated_shocks_have_the_requested_correlation() {
    // with constant noise scales the residual correlation is close to rho
    let dgp = DgpSpec::IndepTrend { psi: 1, rho: 0.9 };
    let sample = generate_sample(&dgp, 20_000, &mut substream(8, 0)).unwrap();
    let x = sample.panel.values(Role::X, 0).unwrap();
    let y = sample.panel.values(Role::Y, 0).unwrap();
    let ex: Vec<f64> = x.iter().zip(&sample.x_mean).map(|(a, b)| a - b).collect();
    let ey: Vec<f64> = y.iter().zip(&sample.y_mean).map(|(a, b)| a - b).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let corr = dot(&ex, &ey) / (dot(&ex, &ex) * dot(&ey, &ey)).sqrt();
    assert!(corr > 0.5, "{corr}");
    let indep = generate_sample(&dgp.with_param(0.0), 20_000, &mut substream(8, 0)).unwrap();
    let ex0: Vec<f64> = indep.panel.values(Role::X, 0).unwrap().iter().zip(&indep.x_mean).map(|(a, b)| a - b).collect();
    let ey0: Vec<f64> = indep.panel.values(Role::Y, 0).unwrap().iter().zip(&indep.y_mean).map(|(a, b)| a - b).collect();
    let corr0 = dot(&ex0, &ey0) / (dot(&ex0, &ex0) * dot(&ey0, &ey0)).sqrt();
    assert!(corr0.abs() < 0.05, "{corr0}");
}

#[test]
fn oracle_residuals_are_the_true_noise() {
    let dgp = DgpSpec::CorrelatedShocks { k: 1, rho: 0.5 };
    let sample = generate_sample(&dgp, 300, &mut substream(12, 0)).unwrap();
    let spec = dgp.hypothesis();
    let (rp, _, range) = fitted_residual_products(&sample.panel, &spec, &OracleFitter::from_sample(&sample)).unwrap();
    let x = sample.panel.values(Role::X, 0).unwrap();
    let y = sample.panel.values(Role::Y, 0).unwrap();
    assert_eq!(rp.len(), range.count());
    for (i, t) in range.times().enumerate() {
        let expected = (x[t - 1] - sample.x_mean[t - 1]) * (y[t - 1] - sample.y_mean[t - 1]);
        assert_eq!(rp.row(i)[0], expected);
    }
}

#[test]
fn rejection_rates_do_not_depend_on_thread_count() {
    let mut plan = ReplicationPlan::new(vec![150], 6, 77);
    plan.test = TestConfig {
        sims: 200,
        ..TestConfig::default()
    };
    plan.regression = RegressionConfig::fixed(SieveConfig::new(2, 2));
    plan.lag = LagWindowConfig::Fixed(5);
    let dgps = [DgpSpec::CorrelatedShocks { k: 1, rho: 0.0 }, DgpSpec::CorrelatedShocks { k: 1, rho: 0.9 }];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rejection_rates(&plan, &dgps).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn ingest_round_trip_of_gap_free_returns() {
    let mut rng = substream(31, 0);
    let mut text = String::from("date,a,b\n");
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 2).unwrap();
    let mut prices = [100.0f64, 50.0];
    let mut returns = Vec::new();
    let mut price_text = String::from("date,a,b\n");
    price_text.push_str(&format!("{},{},{}\n", start, prices[0], prices[1]));
    for i in 1..=40 {
        let date = start + chrono::Days::new(i);
        let r: [f64; 2] = [0.01 * rng.sample::<f64, _>(StandardNormal), 0.02 * rng.sample::<f64, _>(StandardNormal)];
        text.push_str(&format!("{date},{},{}\n", r[0], r[1]));
        for k in 0..2 {
            prices[k] *= r[k].exp();
        }
        price_text.push_str(&format!("{date},{},{}\n", prices[0], prices[1]));
        returns.push(r);
    }
    let options = IngestOptions {
        date_column: "date".into(),
        kind: InputKind::Returns,
    };
    let table = ingest_reader(text.as_bytes(), &options).unwrap();
    let mut out = Vec::new();
    table.write_csv("date", &mut out).unwrap();
    let again = ingest_reader(out.as_slice(), &options).unwrap();
    assert_eq!(again.dates(), table.dates());
    for name in ["a", "b"] {
        for (x, y) in table.column(name).unwrap().iter().zip(again.column(name).unwrap()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
    let from_prices = ingest_reader(
        price_text.as_bytes(),
        &IngestOptions {
            kind: InputKind::Prices,
            ..options
        },
    )
    .unwrap();
    assert_eq!(from_prices.dates(), table.dates());
    for (k, name) in ["a", "b"].into_iter().enumerate() {
        for (r, v) in returns.iter().zip(from_prices.column(name).unwrap()) {
            assert!((r[k] - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn fixture_ingests_with_holidays_filled() {
    let table = ingest_csv(&fixture("indices.csv"), &IngestOptions::default()).unwrap();
    assert_eq!(table.names(), ["SP", "FTSE", "HSI", "N225"]);
    assert!(table.n() > 300);
    assert!(table.dates().windows(2).all(|w| w[0] < w[1]));
    for name in table.names() {
        assert!(table.column(name).unwrap().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn batch_output_is_deterministic() {
    let config = BatchConfig::load(&fixture("indices.toml")).unwrap();
    assert_eq!(config.hypotheses.len(), 24);
    let table = ingest_csv(
        &config.data,
        &IngestOptions {
            date_column: config.date_column.clone(),
            kind: config.input_kind,
        },
    )
    .unwrap();
    let render = || {
        let mut buf = Vec::new();
        emit_csv(&run_batch_on(&table, &config).unwrap(), &mut buf).unwrap();
        buf
    };
    let first = render();
    assert_eq!(first, render());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 25);
    assert!(text.lines().skip(1).all(|l| !l.contains(",,")));
}
