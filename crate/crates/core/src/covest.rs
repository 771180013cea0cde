//! Lag-window covariance paths and minimum-volatility window selection.
//!
//! The lag-window estimate at time `t` is the rank-one matrix
//! `(1/L) (sum_{s=t-L+1}^{t} R_s)(...)^T`; it is stored as its generator
//! `a_t = L^{-1/2} sum R_s`, never as a matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sieve::ResidualProducts;

pub const DEFAULT_DELTA: usize = 12;

/// Rank-one generators over the window times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariancePath {
    window: usize,
    dim: usize,
    times: Vec<usize>,
    generators: Vec<f64>,
}

impl CovariancePath {
    pub fn from_generators(window: usize, times: Vec<usize>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != times.len() || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidConfig("ragged covariance generators".into()));
        }
        Ok(Self {
            window,
            dim,
            times,
            generators: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of window times `T_{n,L}`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn generator(&self, i: usize) -> &[f64] {
        &self.generators[i * self.dim..(i + 1) * self.dim]
    }

    pub fn generators(&self) -> impl Iterator<Item = &[f64]> {
        self.generators.chunks(self.dim.max(1)).take(self.len())
    }

    /// `Sigma_t = a_t a_t^T` at window-time index `i`.
    pub fn sigma(&self, i: usize) -> DMatrix<f64> {
        let a = self.generator(i);
        DMatrix::from_fn(self.dim, self.dim, |r, c| a[r] * a[c])
    }
}

/// Prefix sums of the rows of `rp`, `(T + 1) x D`, row-major.
fn prefix_sums(rp: &ResidualProducts) -> Vec<f64> {
    let d = rp.dim();
    let mut prefix = vec![0.0; (rp.len() + 1) * d];
    for (i, row) in rp.rows().enumerate() {
        for m in 0..d {
            prefix[(i + 1) * d + m] = prefix[i * d + m] + row[m];
        }
    }
    prefix
}

fn window_generator(prefix: &[f64], d: usize, end: usize, window: usize, out: &mut [f64]) {
    let scale = (window as f64).sqrt().recip();
    for m in 0..d {
        out[m] = (prefix[(end + 1) * d + m] - prefix[(end + 1 - window) * d + m]) * scale;
    }
}

/// Lag-window path of `rp` with window `window`.
pub fn rolling_path(rp: &ResidualProducts, window: usize) -> Result<CovariancePath> {
    let t = rp.len();
    if window == 0 {
        return Err(Error::InvalidConfig("lag window must be at least 1".into()));
    }
    if window > t {
        return Err(Error::WindowTooLarge {
            window,
            available: t,
        });
    }
    let d = rp.dim();
    let prefix = prefix_sums(rp);
    let mut generators = vec![0.0; (t - window + 1) * d];
    for (k, end) in (window - 1..t).enumerate() {
        window_generator(&prefix, d, end, window, &mut generators[k * d..(k + 1) * d]);
    }
    Ok(CovariancePath {
        window,
        dim: d,
        times: rp.times()[window - 1..].to_vec(),
        generators,
    })
}

/// `Q_t = sum_{s <= t} a_s a_s^T` over window times up to `t`.
pub fn cumulative_cov(path: &CovariancePath, t: usize) -> Result<DMatrix<f64>> {
    let last = path
        .times
        .binary_search(&t)
        .map_err(|_| Error::OutOfRange { time: t as i64, n: path.times.last().copied().unwrap_or(0) })?;
    let d = path.dim;
    let mut q = DMatrix::zeros(d, d);
    for a in path.generators().take(last + 1) {
        q.ger(1.0, &nalgebra::DVectorView::from_slice(a, d), &nalgebra::DVectorView::from_slice(a, d), 1.0);
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagWindowSelection {
    pub candidates: Vec<usize>,
    pub delta: usize,
    /// 0-based index of the chosen candidate.
    pub chosen_index: usize,
    pub window: usize,
    pub mv: Vec<f64>,
}

/// Candidate windows `1..=floor(n^{3/4})`, capped at `available - 1`
/// (and at least `[1]`).
pub fn default_candidates(n: usize, available: usize) -> Vec<usize> {
    let h = ((n as f64).powf(0.75) + 1e-9).floor() as usize;
    let cap = h.min(available.saturating_sub(1)).max(1);
    (1..=cap).collect()
}

fn validate_candidates(candidates: &[usize], available: usize) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::InvalidCandidates("no candidate windows".into()));
    }
    if candidates[0] == 0 {
        return Err(Error::InvalidCandidates("candidate windows must be positive".into()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCandidates("candidate windows must be strictly increasing".into()));
    }
    let largest = *candidates.last().unwrap();
    let limit = if candidates.len() == 1 { available } else { available.saturating_sub(1) };
    if largest > limit {
        return Err(Error::InvalidCandidates(format!(
            "largest window {largest} leaves no comparison times among {available}"
        )));
    }
    Ok(())
}

/// Trace of the PSD square root of a symmetric PSD matrix.
fn trace_sqrt(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum()
}

/// `se` of each sliding neighbourhood of candidates at one time, given
/// the per-candidate generators `gens` (`H x D`, row-major).
fn volatility_at(gens: &[f64], d: usize, h: usize, delta: usize, out: &mut [f64]) {
    if d == 1 {
        let sig: Vec<f64> = gens.iter().map(|a| a * a).collect();
        for (j, slot) in out.iter_mut().enumerate() {
            let w = &sig[j.saturating_sub(delta)..(j + delta + 1).min(h)];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / w.len() as f64;
            *slot = var.sqrt();
        }
        return;
    }
    for (j, slot) in out.iter_mut().enumerate() {
        let range = j.saturating_sub(delta)..(j + delta + 1).min(h);
        let count = range.len() as f64;
        let mut mean = DMatrix::<f64>::zeros(d, d);
        for k in range.clone() {
            let a = &gens[k * d..(k + 1) * d];
            for r in 0..d {
                for c in 0..d {
                    mean[(r, c)] += a[r] * a[c];
                }
            }
        }
        mean /= count;
        let mut msd = DMatrix::<f64>::zeros(d, d);
        for k in range {
            let a = &gens[k * d..(k + 1) * d];
            let dev = DMatrix::from_fn(d, d, |r, c| a[r] * a[c]) - &mean;
            msd += &dev * &dev;
        }
        msd /= count;
        *slot = trace_sqrt(msd);
    }
}

/// Minimum-volatility choice among `candidates` with half-width `delta`.
/// The volatility of neighbourhood `j` is maximized over the times at
/// least `l_H` rows after the first; ties go to the smallest window.
pub fn select_lag_window(rp: &ResidualProducts, candidates: &[usize], delta: usize) -> Result<LagWindowSelection> {
    let t = rp.len();
    validate_candidates(candidates, t)?;
    let h = candidates.len();
    if h == 1 {
        return Ok(LagWindowSelection {
            candidates: candidates.to_vec(),
            delta,
            chosen_index: 0,
            window: candidates[0],
            mv: vec![0.0],
        });
    }
    let d = rp.dim();
    let prefix = prefix_sums(rp);
    let largest = candidates[h - 1];
    let mv = (largest..t)
        .into_par_iter()
        .fold(
            || (vec![f64::NEG_INFINITY; h], vec![0.0; h * d], vec![0.0; h]),
            |(mut best, mut gens, mut se), end| {
                for (k, &l) in candidates.iter().enumerate() {
                    window_generator(&prefix, d, end, l, &mut gens[k * d..(k + 1) * d]);
                }
                volatility_at(&gens, d, h, delta, &mut se);
                for (b, s) in best.iter_mut().zip(&se) {
                    *b = b.max(*s);
                }
                (best, gens, se)
            },
        )
        .map(|(best, _, _)| best)
        .reduce(
            || vec![f64::NEG_INFINITY; h],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        );
    let mut chosen_index = 0;
    for (j, v) in mv.iter().enumerate() {
        if *v < mv[chosen_index] {
            chosen_index = j;
        }
    }
    Ok(LagWindowSelection {
        candidates: candidates.to_vec(),
        delta,
        chosen_index,
        window: candidates[chosen_index],
        mv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(values: &[f64]) -> ResidualProducts {
        ResidualProducts::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn scalar_window_two() {
        let path = rolling_path(&scalar(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path.times(), &[2, 3]);
        assert!((path.sigma(0)[(0, 0)] - 4.5).abs() < 1e-12);
        assert!((path.sigma(1)[(0, 0)] - 12.5).abs() < 1e-12);
        assert!((cumulative_cov(&path, 2).unwrap()[(0, 0)] - 4.5).abs() < 1e-12);
        assert!((cumulative_cov(&path, 3).unwrap()[(0, 0)] - 17.0).abs() < 1e-12);
        assert!(matches!(cumulative_cov(&path, 1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn zero_and_unit_windows() {
        let path = rolling_path(&scalar(&[0.0; 5]), 3).unwrap();
        assert!(path.generators().all(|a| a == [0.0]));
        let rp = ResidualProducts::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let path = rolling_path(&rp, 1).unwrap();
        assert_eq!(path.generator(1), &[0.5, 3.0]);
        assert!(matches!(rolling_path(&rp, 3), Err(Error::WindowTooLarge { window: 3, available: 2 })));
    }

    #[test]
    fn mv_constant_path_picks_first() {
        // identical windows everywhere: every window sum is 0
        let values: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sel = select_lag_window(&scalar(&values), &[2, 4, 6, 8], 1).unwrap();
        assert!(sel.mv.iter().all(|&v| v == 0.0));
        assert_eq!(sel.chosen_index, 0);
        assert_eq!(sel.window, 2);
    }

    #[test]
    fn mv_single_candidate() {
        let sel = select_lag_window(&scalar(&[1.0, 2.0, 0.5]), &[3], 12).unwrap();
        assert_eq!(sel.window, 3);
    }

    #[test]
    fn mv_matrix_path_reduces_to_scalar() {
        let values: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let one = select_lag_window(&scalar(&values), &[1, 2, 3, 4, 5, 6], 2).unwrap();
        let mut gens = vec![0.0; 6];
        let mut se_scalar = vec![0.0; 6];
        let mut se_matrix = vec![0.0; 6];
        for (k, g) in gens.iter_mut().enumerate() {
            *g = (k as f64 - 2.5) * 0.7;
        }
        volatility_at(&gens, 1, 6, 2, &mut se_scalar);
        // embed as a 2-d path with a zero second coordinate
        let gens2: Vec<f64> = gens.iter().flat_map(|g| [*g, 0.0]).collect();
        volatility_at(&gens2, 2, 6, 2, &mut se_matrix);
        for (a, b) in se_scalar.iter().zip(&se_matrix) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(one.mv.len(), 6);
    }

    #[test]
    fn invalid_candidates() {
        let rp = scalar(&[1.0, 2.0, 3.0, 4.0]);
        assert!(select_lag_window(&rp, &[], 1).is_err());
        assert!(select_lag_window(&rp, &[2, 2], 1).is_err());
        assert!(select_lag_window(&rp, &[3, 2], 1).is_err());
        assert!(select_lag_window(&rp, &[1, 4], 1).is_err());
        assert!(select_lag_window(&rp, &[0, 1], 1).is_err());
    }

    #[test]
    fn default_candidate_grid() {
        assert_eq!(default_candidates(16, 100), (1..=8).collect::<Vec<_>>());
        assert_eq!(default_candidates(1000, 1000).len(), 177);
        assert_eq!(default_candidates(1000, 10).len(), 9);
        assert_eq!(default_candidates(1, 1), vec![1]);
    }
}
