//! Rank and linear correlation between predictions and opinion scores.

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_pair<T: Real>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Metric(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Metric(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite value".into()));
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Real>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let r = T::from_usize_lossy(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Pearson linear correlation coefficient.
pub fn lcc<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::Metric("correlation of a constant vector is undefined".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    lcc(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0, 2.0]), vec![4.0, 1.0, 2.5, 2.5]);
        assert_eq!(average_ranks(&[5.0f64; 3]), vec![2.0; 3]);
    }

    #[test]
    fn perfect_correlations() {
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!((lcc(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((lcc(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn tied_fixture() {
        // Average ranks x: 1, 2.5, 2.5, 4; y: 1, 2, 3, 4.
        // Centered: (-1.5, 0, 0, 1.5) and (-1.5, -0.5, 0.5, 1.5): 4.5 / sqrt(4.5 * 5).
        let r = srcc(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(lcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Metric(_))));
        assert!(matches!(srcc(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Metric(_))));
        assert!(matches!(srcc(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::Metric(_))));
        assert!(matches!(srcc(&[4.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::Metric(_))));
    }

    proptest! {
        #[test]
        fn srcc_monotone_invariant(x in proptest::collection::vec(-10.0f64..10.0, 5..30), seed in 0u64..100) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + ((i as u64 * 7 + seed) % 13) as f64).collect();
            if let Ok(base) = srcc(&x, &y) {
                let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
                let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 4.0).collect();
                prop_assert!((srcc(&tx, &ty).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn correlations_bounded(x in proptest::collection::vec(-1e3f64..1e3, 3..40), y in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
            let n = x.len().min(y.len());
            for r in [lcc(&x[..n], &y[..n]), srcc(&x[..n], &y[..n])].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
