//! Subsampling cross-validation with a buffer for the sieve basis counts.
//!
//! The effective range is split into `2(gamma + 1)` interleaved folds with
//! stride `2(gamma + 1)`. Fold `k` is fitted and scored on fold
//! `k + gamma + 1` (and vice versa), so every scored time is separated
//! from the nearest training time by at least `gamma` times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sieve::{
    build_design_matrix, fit_sieve, response_series, DesignLayout, SieveConfig, TimeRemap, MIN_ROWS_PER_COLUMN,
};
use crate::ts::{CondPair, EffectiveTimeRange, ResponseKey, TimeSeriesPanel};

pub const DEFAULT_GAMMA: usize = 1;
pub const DEFAULT_COUNTS: [usize; 5] = [2, 4, 6, 8, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    /// `(time_basis, cov_basis)` candidates.
    pub grid: Vec<(usize, usize)>,
    pub gamma: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl CvConfig {
    /// Time-basis-only grid for mean fits.
    pub fn time_only(counts: &[usize], gamma: usize) -> Self {
        Self {
            grid: counts.iter().map(|&c| (c, 1)).collect(),
            gamma,
        }
    }
}

pub fn default_grid() -> Vec<(usize, usize)> {
    DEFAULT_COUNTS
        .iter()
        .flat_map(|&c| DEFAULT_COUNTS.iter().map(move |&d| (c, d)))
        .collect()
}

/// Fold `k` (1-based) is `{lo + k - 1 + 2j(gamma + 1)} ∩ range`.
pub fn build_cv_folds(range: &EffectiveTimeRange, gamma: usize) -> Result<Vec<Vec<usize>>> {
    let folds = 2 * (gamma + 1);
    if range.count() < folds {
        return Err(Error::RangeTooSmall {
            count: range.count(),
            folds,
        });
    }
    Ok((0..folds)
        .map(|k| (range.lo + k..=range.hi).step_by(folds).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub time_basis: usize,
    pub cov_basis: usize,
    /// Mean of the per-fold MSEs; `None` when the candidate was skipped.
    pub mse: Option<f64>,
    pub fold_mse: Vec<f64>,
    /// Out-of-fold residuals, one vector per (train, score) split.
    pub fold_residuals: Vec<Vec<f64>>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub time_basis: usize,
    pub cov_basis: usize,
    pub mse: f64,
    pub scores: Vec<CandidateScore>,
}

impl CvResult {
    pub fn chosen(&self) -> &CandidateScore {
        self.scores
            .iter()
            .find(|s| s.time_basis == self.time_basis && s.cov_basis == self.cov_basis)
            .expect("chosen candidate is scored")
    }
}

fn score_split(
    panel: &TimeSeriesPanel,
    key: &ResponseKey,
    train: &[usize],
    test: &[usize],
    layout: &DesignLayout,
    remap: &TimeRemap,
    config: &SieveConfig,
) -> Result<Vec<f64>> {
    let y_train = response_series(panel, key, train)?;
    let fit = fit_sieve(train, &y_train, panel, layout, remap, config)?;
    let y_test = response_series(panel, key, test)?;
    let design = build_design_matrix(test, panel, layout, remap)?;
    Ok((0..test.len())
        .map(|s| {
            let fitted: f64 = design.row(s).iter().zip(fit.beta()).map(|(a, b)| a * b).sum();
            y_test[s] - fitted
        })
        .collect())
}

fn score_candidate(
    panel: &TimeSeriesPanel,
    key: &ResponseKey,
    conditioning: &[CondPair],
    folds: &[Vec<usize>],
    gamma: usize,
    remap: &TimeRemap,
    config: &SieveConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let layout = DesignLayout::new(conditioning, config.time_basis, config.cov_basis, config.scale);
    let cols = layout.columns();
    let smallest = folds.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < MIN_ROWS_PER_COLUMN * cols {
        return Err(Error::FoldTooSmall {
            rows: smallest,
            time_basis: config.time_basis,
            cov_basis: config.cov_basis,
        });
    }
    let half = gamma + 1;
    let mut fold_mse = Vec::with_capacity(2 * half);
    let mut residuals = Vec::with_capacity(2 * half);
    for k in 0..half {
        for (train, test) in [(&folds[k], &folds[k + half]), (&folds[k + half], &folds[k])] {
            let r = score_split(panel, key, train, test, &layout, remap, config)?;
            fold_mse.push(r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64);
            residuals.push(r);
        }
    }
    Ok((fold_mse, residuals))
}

/// Scores every grid candidate for the response `key` and returns the
/// one with the lowest average out-of-fold MSE. Ties go to the smallest
/// `time_basis * cov_basis`, then the smallest `time_basis`. Candidates
/// that cannot be fitted on a fold are skipped; one warning lists them.
pub fn cross_validate(
    panel: &TimeSeriesPanel,
    key: &ResponseKey,
    conditioning: &[CondPair],
    range: &EffectiveTimeRange,
    cv: &CvConfig,
    base: &SieveConfig,
) -> Result<CvResult> {
    if cv.grid.is_empty() {
        return Err(Error::InvalidConfig("empty cross-validation grid".into()));
    }
    let folds = build_cv_folds(range, cv.gamma)?;
    let remap = TimeRemap::from_range(range, panel.n());
    let mut scores = Vec::with_capacity(cv.grid.len());
    let mut first_error = None;
    for &(c, d) in &cv.grid {
        let config = SieveConfig {
            time_basis: c,
            cov_basis: d,
            ..*base
        };
        config.validate()?;
        match score_candidate(panel, key, conditioning, &folds, cv.gamma, &remap, &config) {
            Ok((fold_mse, fold_residuals)) => scores.push(CandidateScore {
                time_basis: c,
                cov_basis: d,
                mse: Some(fold_mse.iter().sum::<f64>() / fold_mse.len() as f64),
                fold_mse,
                fold_residuals,
                skipped: None,
            }),
            Err(e) => {
                scores.push(CandidateScore {
                    time_basis: c,
                    cov_basis: d,
                    mse: None,
                    fold_mse: Vec::new(),
                    fold_residuals: Vec::new(),
                    skipped: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let skipped: Vec<String> = scores
        .iter()
        .filter(|s| s.skipped.is_some())
        .map(|s| format!("({}, {})", s.time_basis, s.cov_basis))
        .collect();
    if !skipped.is_empty() {
        log::warn!(
            "{key}: skipped {} of {} candidates: {}",
            skipped.len(),
            scores.len(),
            skipped.join(" ")
        );
    }
    let best = scores
        .iter()
        .filter_map(|s| s.mse.map(|m| (m, s)))
        .min_by(|(ma, a), (mb, b)| {
            ma.total_cmp(mb)
                .then((a.time_basis * a.cov_basis).cmp(&(b.time_basis * b.cov_basis)))
                .then(a.time_basis.cmp(&b.time_basis))
        })
        .map(|(m, s)| (m, s.time_basis, s.cov_basis));
    match best {
        Some((mse, time_basis, cov_basis)) => Ok(CvResult {
            time_basis,
            cov_basis,
            mse,
            scores,
        }),
        None => Err(first_error.unwrap_or_else(|| Error::InvalidConfig("no candidate could be scored".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ts::Role;

    #[test]
    fn folds_gamma_zero_and_one() {
        let range = EffectiveTimeRange { lo: 3, hi: 12 };
        let f = build_cv_folds(&range, 0).unwrap();
        assert_eq!(f, vec![vec![3, 5, 7, 9, 11], vec![4, 6, 8, 10, 12]]);
        let f = build_cv_folds(&range, 1).unwrap();
        assert_eq!(f, vec![vec![3, 7, 11], vec![4, 8, 12], vec![5, 9], vec![6, 10]]);
        assert!(matches!(
            build_cv_folds(&EffectiveTimeRange { lo: 1, hi: 3 }, 1),
            Err(Error::RangeTooSmall { count: 3, folds: 4 })
        ));
    }

    #[test]
    fn folds_partition_range() {
        for lo in 1..4 {
            for hi in lo + 5..lo + 30 {
                for gamma in 0..3 {
                    let range = EffectiveTimeRange { lo, hi };
                    let Ok(folds) = build_cv_folds(&range, gamma) else { continue };
                    let mut all: Vec<usize> = folds.concat();
                    all.sort_unstable();
                    assert_eq!(all, range.times().collect::<Vec<_>>());
                }
            }
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], (2, 2));
        assert_eq!(g[24], (10, 10));
    }

    #[test]
    fn single_candidate_grid() {
        let n = 200;
        let z: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64 / 20.0 - 2.4).collect();
        let x: Vec<f64> = z.iter().map(|v| v.sin()).collect();
        let panel = TimeSeriesPanel::new(n)
            .unwrap()
            .with_series(Role::X, "x", x)
            .unwrap()
            .with_series(Role::Z, "z", z)
            .unwrap();
        let key = ResponseKey { role: Role::X, dim: 0, offset: 0 };
        let cv = CvConfig { grid: vec![(2, 3)], gamma: 1 };
        let res = cross_validate(
            &panel,
            &key,
            &[CondPair::new(0, 0)],
            &EffectiveTimeRange { lo: 1, hi: n },
            &cv,
            &SieveConfig::new(1, 1),
        )
        .unwrap();
        assert_eq!((res.time_basis, res.cov_basis), (2, 3));
        assert_eq!(res.chosen().fold_mse.len(), 4);
    }
}
