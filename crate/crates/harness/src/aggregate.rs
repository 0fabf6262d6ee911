//! Pointwise statistics over runs.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// Sample standard deviation over runs divided by `√runs`.
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("need at least two curves, got {0}")]
    TooFew(usize),
    #[error("curve {index} has length {found}, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, found: usize },
}

pub fn aggregate(curves: &[Vec<f64>]) -> Result<Aggregate, AggregateError> {
    if curves.len() < 2 {
        return Err(AggregateError::TooFew(curves.len()));
    }
    let len = curves[0].len();
    if let Some((index, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != len) {
        return Err(AggregateError::LengthMismatch {
            index,
            expected: len,
            found: c.len(),
        });
    }
    let k = curves.len() as f64;
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for t in 0..len {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / k;
        let ss: f64 = curves.iter().map(|c| (c[t] - m).powi(2)).sum();
        mean[t] = m;
        stderr[t] = (ss / (k - 1.0)).sqrt() / k.sqrt();
    }
    Ok(Aggregate { mean, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_sample_formulas() {
        let a = aggregate(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(a.mean, vec![2.0]);
        assert!((a.stderr[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_and_constant_curves() {
        let c = vec![4.0, 4.0, 4.0];
        let a = aggregate(&[c.clone(), c.clone(), c]).unwrap();
        assert_eq!(a.mean, vec![4.0; 3]);
        assert_eq!(a.stderr, vec![0.0; 3]);
    }

    #[test]
    fn errors() {
        assert_eq!(aggregate(&[vec![1.0]]), Err(AggregateError::TooFew(1)));
        assert!(matches!(
            aggregate(&[vec![1.0], vec![1.0, 2.0]]),
            Err(AggregateError::LengthMismatch { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn run_order_does_not_matter(curves in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 5), 2..8), rot in 0usize..8) {
            let mut shuffled = curves.clone();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
            let a = aggregate(&curves).unwrap();
            let b = aggregate(&shuffled).unwrap();
            for t in 0..5 {
                prop_assert!((a.mean[t] - b.mean[t]).abs() < 1e-12);
                prop_assert!((a.stderr[t] - b.stderr[t]).abs() < 1e-12);
            }
        }
    }
}
