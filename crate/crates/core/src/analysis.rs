//! Intermarking-interval distributions, expected-time curves, Monte Carlo
//! interval experiments and run-level statistics.
//!
//! An intermarking interval is the number of packets from one mark/drop up to
//! and including the next, so the smallest interval is 1. Applying a fixed
//! probability `p` to every packet gives the geometric law
//! `P(T = n) = (1 - p)^(n-1) p`. Applying the uniformized probability
//! `p / (2 - count p)` instead makes the survival function fall linearly,
//! `S(k) = 1 - k p / 2`, so every support point carries mass `p/2`. When
//! `2/p` is not an integer the last support point `N = ceil(2/p)` absorbs the
//! remainder `1 - (N - 1) p / 2`; [`uniform_pmf`] implements that exact law.

use std::collections::{BTreeMap, HashMap};

use num_traits::pow;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::aqm::fn_uniformize;
use crate::rng::stream_rng;
use crate::scalar::{max, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("interval record is empty")]
    EmptyRecord,
    #[error("interval values must be at least 1")]
    ZeroInterval,
}

fn check_prob<S: Scalar>(p: S) -> Result<(), AnalysisError> {
    if p > S::zero() && p <= S::one() {
        Ok(())
    } else {
        Err(AnalysisError::InvalidProbability(
            p.to_f64().unwrap_or(f64::NAN),
        ))
    }
}

/// How the per-packet probability is applied in an interval experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// `p` applied to every packet: geometric intervals.
    Direct,
    /// `fn_uniformize(p, count)` applied: uniform intervals.
    Uniformized,
}

/// Which closed form [`expected_interval`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntervalLaw {
    Geometric,
    Uniform,
}

/// `(1 - p)^(n-1) * p` for `n >= 1`, zero for `n = 0`.
pub fn geometric_pmf<S: Scalar>(p: S, n: u64) -> S {
    if n == 0 {
        return S::zero();
    }
    pow(S::one() - p, (n - 1) as usize) * p
}

/// `P(T <= n) = 1 - (1 - p)^n`.
pub fn geometric_cdf<S: Scalar>(p: S, n: u64) -> S {
    S::one() - pow(S::one() - p, n as usize)
}

/// Number of support points of the uniformized interval law: the smallest
/// `N` with `N p >= 2`. A `1e-12` guard keeps integral `2/p` (0.1, 0.05, ...)
/// from gaining a spurious point through rounding.
pub fn uniform_support_len<S: Scalar>(p: S) -> u64 {
    let p = p.to_f64().expect("probability representable as f64");
    (2.0 / p - 1e-12).floor() as u64 + 1
}

/// Exact pmf of the uniformized interval law: `p/2` on `1..N`, the
/// remaining mass at `N`, zero elsewhere.
pub fn uniform_pmf<S: Scalar>(p: S, n: u64) -> S {
    let len = uniform_support_len(p);
    if n == 0 || n > len {
        S::zero()
    } else if n < len {
        p * S::half()
    } else {
        max(S::zero(), S::one() - S::from_count(len - 1) * p * S::half())
    }
}

pub fn uniform_cdf<S: Scalar>(p: S, n: u64) -> S {
    let len = uniform_support_len(p);
    if n >= len {
        S::one()
    } else {
        S::from_count(n) * p * S::half()
    }
}

/// Closed-form mean interval: `1/p` (geometric) or `1/p + 1/2` (uniform).
pub fn expected_interval<S: Scalar>(p: S, law: IntervalLaw) -> S {
    let geometric = S::one() / p;
    match law {
        IntervalLaw::Geometric => geometric,
        IntervalLaw::Uniform => geometric + S::half(),
    }
}

/// One row of the expected-interval comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow<S> {
    pub p: S,
    pub e_geometric: S,
    pub e_uniform: S,
}

impl<S: Scalar> CurveRow<S> {
    pub fn difference(&self) -> S {
        self.e_uniform - self.e_geometric
    }
}

/// Expected intervals under both laws for every `p` in the grid.
pub fn expected_time_curve<S: Scalar>(grid: &[S]) -> Result<Vec<CurveRow<S>>, AnalysisError> {
    grid.iter()
        .map(|&p| {
            check_prob(p)?;
            Ok(CurveRow {
                p,
                e_geometric: expected_interval(p, IntervalLaw::Geometric),
                e_uniform: expected_interval(p, IntervalLaw::Uniform),
            })
        })
        .collect()
}

/// `0.01, 0.02, ..., 1.00`, each computed as `k / 100`.
pub fn percent_grid() -> Vec<f64> {
    (1..=100).map(|k| f64::from(k) / 100.0).collect()
}

/// Ordered intermarking intervals; every entry is at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IntervalRecord {
    pub intervals: Vec<u64>,
}

impl IntervalRecord {
    pub fn new(intervals: Vec<u64>) -> Result<Self, AnalysisError> {
        if intervals.contains(&0) {
            return Err(AnalysisError::ZeroInterval);
        }
        Ok(Self { intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn max(&self) -> Option<u64> {
        self.intervals.iter().copied().max()
    }

    pub fn histogram(&self) -> BTreeMap<u64, u64> {
        let mut h = BTreeMap::new();
        for &i in &self.intervals {
            *h.entry(i).or_insert(0) += 1;
        }
        h
    }
}

/// Queue-free Bernoulli experiment: virtual packets are marked with
/// probability `p` (direct) or `fn_uniformize(p, count)` (uniformized) until
/// `n_intervals` intervals have been observed.
pub fn simulate_intervals(
    p: f64,
    n_intervals: usize,
    mode: IntervalMode,
    seed: u64,
) -> Result<IntervalRecord, AnalysisError> {
    check_prob(p)?;
    let mut rng = stream_rng(seed, 0);
    let mut intervals = Vec::with_capacity(n_intervals);
    let mut count = 0_u64;
    while intervals.len() < n_intervals {
        let prob = match mode {
            IntervalMode::Direct => p,
            IntervalMode::Uniformized => fn_uniformize(p, count),
        };
        let draw: f64 = rng.random();
        if draw < prob {
            intervals.push(count + 1);
            count = 0;
        } else {
            count += 1;
        }
    }
    Ok(IntervalRecord { intervals })
}

/// Empirical summary of an interval record.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    pub n: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub histogram: BTreeMap<u64, u64>,
    /// KS distance to the uniformized law.
    pub ks_uniform: f64,
    /// KS distance to the geometric law.
    pub ks_geometric: f64,
}

pub fn interval_stats(rec: &IntervalRecord, p: f64) -> Result<IntervalStats, AnalysisError> {
    if rec.is_empty() {
        return Err(AnalysisError::EmptyRecord);
    }
    check_prob(p)?;
    let n = rec.len();
    let nf = n as f64;
    let mean = rec.intervals.iter().map(|&x| x as f64).sum::<f64>() / nf;
    let variance = rec
        .intervals
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / nf;
    let histogram = rec.histogram();
    let ks_uniform = ks_discrete(&histogram, n, uniform_support_len(p), |k| uniform_cdf(p, k));
    let ks_geometric = ks_discrete(&histogram, n, 1, |k| geometric_cdf(p, k));
    Ok(IntervalStats {
        n,
        mean,
        variance,
        histogram,
        ks_uniform,
        ks_geometric,
    })
}

/// Kolmogorov-Smirnov distance between the empirical CDF of integer samples
/// (given as a histogram over `n` samples) and a reference CDF on the
/// positive integers. Both are step functions jumping only at integers, so
/// the supremum is attained at an integer in `1..=max(observed, min_upper)`.
pub fn ks_discrete(
    histogram: &BTreeMap<u64, u64>,
    n: usize,
    min_upper: u64,
    cdf: impl Fn(u64) -> f64,
) -> f64 {
    let upper = histogram
        .keys()
        .next_back()
        .copied()
        .unwrap_or(0)
        .max(min_upper);
    let mut cum = 0_u64;
    let mut d = 0.0_f64;
    for k in 1..=upper {
        cum += histogram.get(&k).copied().unwrap_or(0);
        let emp = cum as f64 / n as f64;
        d = d.max((emp - cdf(k)).abs());
    }
    d
}

/// A multiplicative decrease applied by an AIMD source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackoffEvent {
    pub time: f64,
    pub flow_id: usize,
}

/// Largest fraction of the `n_flows` responsive flows that back off within
/// any window of length `window` that starts at a backoff event. 1 means all
/// flows halved together; 0 means no backoff happened.
pub fn sync_index(backoffs: &[BackoffEvent], n_flows: usize, window: f64) -> f64 {
    if n_flows == 0 || backoffs.is_empty() {
        return 0.0;
    }
    let mut events = backoffs.to_vec();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut in_window: HashMap<usize, usize> = HashMap::new();
    let mut best = 0;
    let mut hi = 0;
    for lo in 0..events.len() {
        while hi < events.len() && events[hi].time <= events[lo].time + window {
            *in_window.entry(events[hi].flow_id).or_insert(0) += 1;
            hi += 1;
        }
        best = best.max(in_window.len());
        let f = events[lo].flow_id;
        if let Some(c) = in_window.get_mut(&f) {
            *c -= 1;
            if *c == 0 {
                in_window.remove(&f);
            }
        }
    }
    best as f64 / n_flows as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn geometric_pmf_examples() {
        assert_eq!(geometric_pmf(1.0, 1), 1.0);
        assert_eq!(geometric_pmf(0.5, 2), 0.25);
        let total: f64 = (1..=10_000).map(|n| geometric_pmf(0.1, n)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        assert_eq!(geometric_pmf(Ratio::new(1_i64, 2), 3), Ratio::new(1, 8));
    }

    #[test]
    fn uniform_pmf_examples() {
        assert_eq!(uniform_support_len(0.5), 4);
        assert_eq!(uniform_pmf(0.5, 3), 0.25);
        assert_eq!(uniform_pmf(0.5, 4), 0.25);
        assert_eq!(uniform_pmf(0.5, 5), 0.0);
        assert_eq!(uniform_pmf(0.5, 0), 0.0);
        assert_eq!(uniform_support_len(0.1), 20);
        assert_eq!(uniform_support_len(0.05), 40);
        assert_eq!(uniform_support_len(0.01), 200);
        assert_eq!(uniform_support_len(1.0), 2);
    }

    #[test]
    fn uniform_law_is_exact_in_rationals() {
        let p = Ratio::new(1_i64, 10);
        let total: Ratio<i64> = (1..=20).map(|n| uniform_pmf(p, n)).sum();
        assert_eq!(total, Ratio::from_integer(1));
        assert_eq!(uniform_pmf(p, 20), Ratio::new(1, 20));
        assert_eq!(uniform_pmf(p, 21), Ratio::from_integer(0));
    }

    #[test]
    fn non_integral_support_absorbs_remainder() {
        // 2/0.3 = 6.67: six points of 0.15 would exceed 1, so N = 7 with
        // 1 - 6 * 0.15 = 0.1 at the end.
        let p = Ratio::new(3_i64, 10);
        assert_eq!(uniform_support_len(p), 7);
        assert_eq!(uniform_pmf(p, 6), Ratio::new(3, 20));
        assert_eq!(uniform_pmf(p, 7), Ratio::new(1, 10));
        let total: Ratio<i64> = (1..=7).map(|n| uniform_pmf(p, n)).sum();
        assert_eq!(total, Ratio::from_integer(1));
    }

    #[test]
    fn expected_interval_examples() {
        assert_eq!(expected_interval(0.1, IntervalLaw::Geometric), 10.0);
        assert_eq!(expected_interval(0.1, IntervalLaw::Uniform), 10.5);
        assert_eq!(expected_interval(1.0, IntervalLaw::Geometric), 1.0);
        assert_eq!(expected_interval(1.0, IntervalLaw::Uniform), 1.5);
    }

    #[test]
    fn curve_rows() {
        let rows = expected_time_curve(&[0.1, 1.0]).unwrap();
        assert_eq!(
            rows[0],
            CurveRow {
                p: 0.1,
                e_geometric: 10.0,
                e_uniform: 10.5
            }
        );
        assert_eq!(
            rows[1],
            CurveRow {
                p: 1.0,
                e_geometric: 1.0,
                e_uniform: 1.5
            }
        );
        assert!(expected_time_curve(&[0.0]).is_err());
        assert!(expected_time_curve(&[1.5]).is_err());
        let exact: Vec<Ratio<i64>> = (1..=100).map(|k| Ratio::new(k, 100)).collect();
        for row in expected_time_curve(&exact).unwrap() {
            assert_eq!(row.difference(), Ratio::new(1, 2));
        }
    }

    #[test]
    fn uniformized_p_one_alternates_between_one_and_two() {
        let rec = simulate_intervals(1.0, 10_000, IntervalMode::Uniformized, 3).unwrap();
        let h = rec.histogram();
        assert_eq!(h.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        let direct = simulate_intervals(1.0, 100, IntervalMode::Direct, 3).unwrap();
        assert!(direct.intervals.iter().all(|&i| i == 1));
    }

    #[test]
    fn stats_of_constant_record() {
        let rec = IntervalRecord::new(vec![2, 2, 2]).unwrap();
        let s = interval_stats(&rec, 0.5).unwrap();
        assert_eq!((s.n, s.mean, s.variance), (3, 2.0, 0.0));
        assert_eq!(s.histogram.get(&2), Some(&3));
    }

    #[test]
    fn stats_reject_empty_and_zero() {
        assert_eq!(
            interval_stats(&IntervalRecord::default(), 0.1),
            Err(AnalysisError::EmptyRecord)
        );
        assert_eq!(
            IntervalRecord::new(vec![1, 0]),
            Err(AnalysisError::ZeroInterval)
        );
    }

    #[test]
    fn ks_prefers_the_true_law() {
        let uni = simulate_intervals(0.1, 200_000, IntervalMode::Uniformized, 11).unwrap();
        let s = interval_stats(&uni, 0.1).unwrap();
        assert!(s.ks_uniform < s.ks_geometric);
        let geo = simulate_intervals(0.1, 200_000, IntervalMode::Direct, 11).unwrap();
        let s = interval_stats(&geo, 0.1).unwrap();
        assert!(s.ks_geometric < s.ks_uniform);
        assert!((s.variance - 90.0).abs() / 90.0 < 0.05);
    }

    #[test]
    fn sync_index_examples() {
        let ev = |time, flow_id| BackoffEvent { time, flow_id };
        let all = [ev(1.0, 0), ev(1.01, 1), ev(1.02, 2), ev(1.05, 3)];
        assert_eq!(sync_index(&all, 4, 0.1), 1.0);
        let one = [ev(1.0, 2), ev(3.0, 2), ev(9.0, 2)];
        assert_eq!(sync_index(&one, 4, 0.1), 0.25);
        let spread = [ev(0.0, 0), ev(0.5, 1), ev(1.0, 2), ev(1.05, 3)];
        assert_eq!(sync_index(&spread, 4, 0.1), 0.5);
        assert_eq!(sync_index(&[], 4, 0.1), 0.0);
    }

    proptest! {
        #[test]
        fn pmfs_normalize(k in 1_i64..=100) {
            let p = Ratio::new(k, 100);
            let len = uniform_support_len(p);
            let total: Ratio<i64> = (1..=len).map(|n| uniform_pmf(p, n)).sum();
            prop_assert_eq!(total, Ratio::from_integer(1));
            let pf = k as f64 / 100.0;
            let geo: f64 = (1..=20_000).map(|n| geometric_pmf(pf, n)).sum();
            prop_assert!((geo - 1.0).abs() < 1e-9);
        }

        #[test]
        fn sync_index_in_unit_interval(
            events in prop::collection::vec((0.0_f64..10.0, 0_usize..5), 0..50),
            window in 0.0_f64..2.0,
        ) {
            let ev: Vec<_> = events.iter().map(|&(time, flow_id)| BackoffEvent { time, flow_id }).collect();
            let s = sync_index(&ev, 5, window);
            prop_assert!((0.0..=1.0).contains(&s));
            if !ev.is_empty() {
                prop_assert!(s >= 0.2);
            }
        }
    }
}
