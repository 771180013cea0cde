use crate::error::{Error, Result};

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(&p) = pvalues.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::Domain {
            what: "p-value (0, 1]",
            value: p,
        });
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvalues[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let adj = bh_adjust(&[0.01, 0.04, 0.03]).unwrap();
        for (a, e) in adj.iter().zip([0.03, 0.04, 0.04]) {
            assert!((a - e).abs() < 1e-15);
        }
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        assert!(bh_adjust(&[]).unwrap().is_empty());
    }

    #[test]
    fn domain() {
        assert!(bh_adjust(&[0.0]).is_err());
        assert!(bh_adjust(&[1.5]).is_err());
        assert!(bh_adjust(&[f64::NAN]).is_err());
    }
}
