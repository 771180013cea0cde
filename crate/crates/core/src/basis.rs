//! Orthonormal shifted Legendre bases on `[0, 1]`.
//!
//! Component `l` (1-based) is `sqrt(2l - 1) * P_{l-1}(2u - 1)`, so the
//! family is orthonormal in `L2[0, 1]`. Covariates on the real line are
//! first squashed into `(0, 1)` by the inverse of the algebraic map
//! `h(v) = v / sqrt(1 - v^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBasis {
    count: usize,
}

impl TimeBasis {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("time basis needs at least one function".into()));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn eval(&self, u: f64) -> Result<Vec<f64>> {
        eval_time_basis(u, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateBasis {
    count: usize,
    scale: f64,
}

impl CovariateBasis {
    pub fn new(count: usize, scale: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig(
                "covariate basis needs at least one function".into(),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("covariate scale {scale} must be positive")));
        }
        Ok(Self { count, scale })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        eval_covariate_basis(z, self.count, self.scale)
    }
}

/// Writes the first `out.len()` orthonormal shifted Legendre values at
/// `u` into `out`. No domain check.
pub(crate) fn legendre_into(u: f64, out: &mut [f64]) {
    let x = 2.0 * u - 1.0;
    let (mut p_prev, mut p) = (0.0, 1.0);
    for (l, slot) in out.iter_mut().enumerate() {
        if l > 0 {
            // l P_l = (2l - 1) x P_{l-1} - (l - 1) P_{l-2}
            let lf = l as f64;
            let next = ((2.0 * lf - 1.0) * x * p - (lf - 1.0) * p_prev) / lf;
            p_prev = p;
            p = next;
        }
        *slot = (2.0 * l as f64 + 1.0).sqrt() * p;
    }
}

pub fn eval_time_basis(u: f64, count: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain {
            what: "rescaled time [0, 1]",
            value: u,
        });
    }
    let mut out = vec![0.0; count];
    legendre_into(u, &mut out);
    Ok(out)
}

/// Maps `z` into `(0, 1)`: `(z / sqrt(s^2 + z^2) + 1) / 2`.
pub fn map_covariate(z: f64, scale: f64) -> f64 {
    // z / sqrt(s^2 + z^2) written to avoid overflow for huge |z|
    let r = scale / z.abs();
    let squashed = if z == 0.0 {
        0.0
    } else if r.is_finite() && r < 1.0 {
        z.signum() / (1.0 + r * r).sqrt()
    } else {
        z / (scale * scale + z * z).sqrt()
    };
    0.5 * (squashed + 1.0)
}

pub fn eval_covariate_basis(z: f64, count: usize, scale: f64) -> Result<Vec<f64>> {
    if !z.is_finite() {
        return Err(Error::Domain {
            what: "finite covariate",
            value: z,
        });
    }
    let mut out = vec![0.0; count];
    legendre_into(map_covariate(z, scale), &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_values() {
        for &u in &[0.0, 0.2, 0.7, 1.0] {
            assert_eq!(eval_time_basis(u, 1).unwrap(), vec![1.0]);
        }
        assert!(eval_time_basis(0.5, 2).unwrap()[1].abs() < 1e-15);
        let v = eval_time_basis(1.0, 3).unwrap();
        assert!((v[2] - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn domain_is_checked() {
        assert!(eval_time_basis(-0.01, 2).is_err());
        assert!(eval_time_basis(1.01, 2).is_err());
        assert!(eval_covariate_basis(f64::INFINITY, 2, 1.0).is_err());
    }

    #[test]
    fn covariate_map() {
        assert_eq!(map_covariate(0.0, 1.0), 0.5);
        let expected = (1.0 / 2f64.sqrt() + 1.0) / 2.0;
        assert!((map_covariate(1.0, 1.0) - expected).abs() < 1e-15);
        assert!(map_covariate(1e300, 1.0) <= 1.0);
        assert!(map_covariate(1e300, 1.0) > 0.999_999);
        assert!(map_covariate(-1e300, 1.0) < 1e-6);
        assert!(map_covariate(1e6, 1.0) > map_covariate(1e5, 1.0));
    }

    #[test]
    fn covariate_basis_composes_with_time_basis() {
        let v = eval_covariate_basis(0.0, 3, 1.0).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-15);
        let direct = eval_time_basis(map_covariate(1.0, 1.0), 5).unwrap();
        assert_eq!(eval_covariate_basis(1.0, 5, 1.0).unwrap(), direct);
    }

    #[test]
    fn invalid_basis_params() {
        assert!(TimeBasis::new(0).is_err());
        assert!(CovariateBasis::new(2, 0.0).is_err());
        assert!(CovariateBasis::new(0, 1.0).is_err());
    }
}
