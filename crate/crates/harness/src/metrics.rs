//! Reward-curve metrics.

/// Trailing window over which a ratio must hold before it counts.
pub const RATIO_WINDOW: usize = 500;

/// Relative slack below which a ratio is treated as not exceeding the
/// threshold, so that a trace paying exactly the threshold fraction does not
/// pass on accumulated round-off.
pub const RATIO_TOLERANCE: f64 = 1e-9;

pub const RATIO_THRESHOLDS: [f64; 3] = [0.80, 0.85, 0.90];

pub fn cumulative(trace: &[f64]) -> Vec<f64> {
    trace
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect()
}

/// For each threshold, the first step `t` (1-based) at which
/// `cumsum(trace)[t] / (baseline_per_step · t)` exceeds the threshold and
/// keeps exceeding it for every step of the following [`RATIO_WINDOW`]
/// (truncated at the end of the trace). `None` when never reached.
pub fn steps_to_ratio(trace: &[f64], baseline_per_step: f64, thresholds: &[f64]) -> Vec<(f64, Option<usize>)> {
    assert!(baseline_per_step > 0.0, "baseline must be positive");
    let cum = cumulative(trace);
    let ratios: Vec<f64> = cum
        .iter()
        .enumerate()
        .map(|(i, c)| c / (baseline_per_step * (i + 1) as f64))
        .collect();
    thresholds
        .iter()
        .map(|&thr| (thr, first_stable_crossing(&ratios, thr * (1.0 + RATIO_TOLERANCE))))
        .collect()
}

fn first_stable_crossing(ratios: &[f64], thr: f64) -> Option<usize> {
    // Steps until the next ratio at or below the threshold, scanning back.
    let n = ratios.len();
    let mut run = vec![0usize; n + 1];
    for i in (0..n).rev() {
        run[i] = if ratios[i] > thr { run[i + 1] + 1 } else { 0 };
    }
    (0..n).find(|&i| run[i] >= RATIO_WINDOW.min(n - i)).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_baseline_meets_everything_immediately() {
        let trace = vec![0.25; 2000];
        let res = steps_to_ratio(&trace, 0.25 / 0.95, &RATIO_THRESHOLDS);
        assert!(res.iter().all(|(_, s)| *s == Some(1)));
    }

    #[test]
    fn zero_trace_meets_nothing() {
        let res = steps_to_ratio(&[0.0; 1000], 0.3, &RATIO_THRESHOLDS);
        assert!(res.iter().all(|(_, s)| s.is_none()));
    }

    #[test]
    fn exact_ninety_percent_trace() {
        let b = 0.247;
        let trace = vec![0.9 * b; 3000];
        let res = steps_to_ratio(&trace, b, &RATIO_THRESHOLDS);
        assert_eq!(res[0].1, Some(1));
        assert_eq!(res[1].1, Some(1));
        assert_eq!(res[2].1, None);
    }

    #[test]
    fn a_lucky_spike_does_not_count() {
        // one big reward early, then nothing: the ratio decays below 0.8
        let mut trace = vec![0.0; 2000];
        trace[0] = 100.0;
        let res = steps_to_ratio(&trace, 1.0, &[0.8]);
        assert_eq!(res[0].1, None);
    }

    #[test]
    fn window_is_truncated_at_the_end() {
        let mut trace = vec![0.0; 1000];
        trace.extend(vec![10.0; 100]);
        let res = steps_to_ratio(&trace, 1.0, &[0.8]);
        // cumsum reaches 0.8·t once 10·k ≥ 0.8·(1000+k)
        let k = (1..=100).find(|k| 10.0 * *k as f64 > 0.8 * (1000 + k) as f64).unwrap();
        assert_eq!(res[0].1, Some(1000 + k));
    }

    proptest! {
        #[test]
        fn pointwise_greater_never_crosses_later(
            base in proptest::collection::vec(0.0f64..1.0, 1..800),
            bumps in proptest::collection::vec(0.0f64..0.5, 800),
            thr in 0.1f64..0.9,
        ) {
            let better: Vec<f64> = base.iter().zip(&bumps).map(|(x, d)| x + d).collect();
            let a = steps_to_ratio(&base, 0.5, &[thr])[0].1;
            let b = steps_to_ratio(&better, 0.5, &[thr])[0].1;
            if let Some(ta) = a {
                prop_assert!(b.is_some_and(|tb| tb <= ta), "{a:?} vs {b:?}");
            }
        }
    }
}
