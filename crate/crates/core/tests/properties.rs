use dgcm::basis::{eval_covariate_basis, eval_time_basis, map_covariate};
use dgcm::cli::bh_adjust;
use dgcm::sieve::{fit_response, SieveConfig};
use dgcm::ts::{effective_times, CondPair, HypothesisSpec, OffsetSpec, ResponseKey, Role, TimeSeriesPanel};
use proptest::prelude::*;

fn binomial(n: i128, k: i128) -> i128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Orthonormal shifted Legendre polynomial at `u = num / den` from its
/// explicit expansion, summed exactly in integers.
fn legendre_direct(k: i128, num: i128, den: i128) -> f64 {
    let sum: i128 = (0..=k)
        .map(|j| binomial(k, j) * binomial(k + j, j) * (-num).pow(j as u32) * den.pow((k - j) as u32))
        .sum();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * (2.0 * k as f64 + 1.0).sqrt() * (sum as f64 / den.pow(k as u32) as f64)
}

#[test]
fn recurrence_matches_direct_expansion() {
    for i in 0..=200 {
        let u = i as f64 / 200.0;
        let values = eval_time_basis(u, 7).unwrap();
        for (k, v) in values.iter().enumerate() {
            let direct = legendre_direct(k as i128, i, 200);
            assert!((v - direct).abs() <= 1e-12, "degree {k} at {u}: {v} vs {direct}");
        }
    }
}

fn gram_error(eval: impl Fn(f64) -> Vec<f64>, count: usize) -> f64 {
    let points = 100_000;
    let mut gram = vec![0.0; count * count];
    for i in 0..points {
        let v = eval((i as f64 + 0.5) / points as f64);
        for a in 0..count {
            for b in 0..count {
                gram[a * count + b] += v[a] * v[b] / points as f64;
            }
        }
    }
    (0..count * count)
        .map(|i| (gram[i] - if i % (count + 1) == 0 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

#[test]
fn bases_are_orthonormal() {
    assert!(gram_error(|u| eval_time_basis(u, 10).unwrap(), 10) < 1e-3);
    // covariate basis is orthonormal in the mapped variable
    let scale = 1.7;
    let inverse = |w: f64| {
        let x = 2.0 * w - 1.0;
        scale * x / (1.0 - x * x).sqrt()
    };
    assert!(gram_error(|w| eval_covariate_basis(inverse(w), 10, scale).unwrap(), 10) < 1e-3);
}

proptest! {
    #[test]
    fn covariate_map_is_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6, s in 0.01f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (mlo, mhi) = (map_covariate(lo, s), map_covariate(hi, s));
        prop_assert!(mlo <= mhi);
        prop_assert!((0.0..=1.0).contains(&mlo) && (0.0..=1.0).contains(&mhi));
    }

    #[test]
    fn covariate_basis_is_scale_equivariant(z in -50.0f64..50.0, s in 0.1f64..10.0, e in -4i32..5) {
        let c = 2f64.powi(e);
        let a = eval_covariate_basis(z, 6, s).unwrap();
        let b = eval_covariate_basis(c * z, 6, c * s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn effective_range_shrinks_with_offsets(
        n in 20usize..200,
        base in proptest::collection::vec(-5i64..5, 1..4),
        extra in -8i64..8,
    ) {
        let mut offsets = OffsetSpec::default();
        offsets.x.insert(0, base.iter().copied().collect());
        let before = effective_times(n, &offsets).unwrap();
        offsets.y.insert(0, [extra].into_iter().collect());
        let after = effective_times(n, &offsets).unwrap();
        prop_assert!(after.lo >= before.lo && after.hi <= before.hi);
        prop_assert!(after.count() <= before.count());
    }

    #[test]
    fn bh_invariants(p in proptest::collection::vec(1e-6f64..=1.0, 1..60)) {
        let adj = bh_adjust(&p).unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in order.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]] + 1e-15);
        }
        for (a, raw) in adj.iter().zip(&p) {
            prop_assert!(*a <= 1.0 && *a >= *raw * (1.0 - 1e-15));
        }
        let twice = bh_adjust(&adj).unwrap();
        for (a, b) in adj.iter().zip(&twice) {
            prop_assert!(*b >= *a - 1e-15);
        }
    }

    #[test]
    fn bh_idempotent_on_monotone_fixed_points(v in 1e-3f64..=1.0, m in 1usize..30) {
        // equal p-values are a fixed point of the step-up procedure
        let p = vec![v; m];
        let once = bh_adjust(&p).unwrap();
        let twice = bh_adjust(&once).unwrap();
        for ((a, b), raw) in once.iter().zip(&twice).zip(&p) {
            prop_assert!((a - raw).abs() <= 1e-15 && (b - a).abs() <= 1e-15);
        }
    }
}

#[test]
fn sieve_residuals_are_scale_equivariant_in_the_covariate() {
    let n = 240;
    let z: Vec<f64> = (0..n).map(|t| ((t * 37 % 101) as f64 - 50.0) / 17.0).collect();
    let x: Vec<f64> = (0..n).map(|t| (t as f64 / 30.0).sin() + z[t].tanh() + ((t * 13 % 7) as f64) / 10.0).collect();
    let key = ResponseKey { role: Role::X, dim: 0, offset: 0 };
    let spec = HypothesisSpec::single(0, 0, vec![CondPair::new(0, 0)]).unwrap();
    let range = spec.effective_range(n).unwrap();
    let residuals = |c: f64| {
        let mut panel = TimeSeriesPanel::new(n).unwrap();
        panel.push(Role::X, "x", x.clone()).unwrap();
        panel.push(Role::Y, "y", x.clone()).unwrap();
        panel.push(Role::Z, "z", z.iter().map(|v| v * c).collect()).unwrap();
        let config = SieveConfig {
            scale: c,
            ..SieveConfig::new(4, 4)
        };
        fit_response(&panel, &key, spec.conditioning(), &range, &config).unwrap().residuals
    };
    let a = residuals(1.0);
    let b = residuals(8.0);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}
