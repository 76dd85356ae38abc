//! Quantile-based discretization of continuous readings into states.
//!
//! Fitting places bin edges at the empirical quantiles i/k (i = 1..k-1) using
//! linear interpolation between order statistics: for sorted values x[0..n-1]
//! and level q, with h = (n-1)·q, the edge is
//! x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋]).
//!
//! A value maps to the state given by the number of edges strictly below it.
//! That rule is total and monotone: ties resolve downward and out-of-range
//! values clamp to the extreme states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::NodeSeries;

/// Number of states used when nothing else is configured.
pub const DEFAULT_STATE_COUNT: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum BinError {
    #[error("cannot fit bins on an empty value set")]
    EmptyInput,
    #[error("state count must be at least 1")]
    ZeroStates,
    #[error("non-finite value {0} cannot be binned")]
    NonFinite(f64),
    #[error("binner shape: {0}")]
    Shape(String),
}

/// Fitted quantile bin edges mapping continuous values to states 0..k-1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBinner {
    k: usize,
    edges: Vec<f64>,
    fit_count: usize,
}

/// Fit `k` equal-mass bins on training values.
///
/// Degenerate (tied) edges are permitted; with heavily repeated values some
/// states may end up unreachable, which the tie rule handles deterministically.
pub fn fit_bins(values: &[f64], k: usize) -> Result<QuantileBinner, BinError> {
    if k < 1 {
        return Err(BinError::ZeroStates);
    }
    if values.is_empty() {
        return Err(BinError::EmptyInput);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(BinError::NonFinite(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges = (1..k)
        .map(|i| quantile_linear(&sorted, i as f64 / k as f64))
        .collect();
    Ok(QuantileBinner {
        k,
        edges,
        fit_count: values.len(),
    })
}

/// Linear-interpolation empirical quantile of pre-sorted values.
fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

impl QuantileBinner {
    /// Reassemble a binner from stored parts, validating shape.
    pub fn from_parts(k: usize, edges: Vec<f64>, fit_count: usize) -> Result<Self, BinError> {
        if k < 1 {
            return Err(BinError::ZeroStates);
        }
        if edges.len() != k - 1 {
            return Err(BinError::Shape(format!(
                "expected {} edges for k={k}, found {}",
                k - 1,
                edges.len()
            )));
        }
        for pair in edges.windows(2) {
            if pair[0] > pair[1] {
                return Err(BinError::Shape("edges must be non-decreasing".into()));
            }
        }
        if let Some(&bad) = edges.iter().find(|e| !e.is_finite()) {
            return Err(BinError::NonFinite(bad));
        }
        Ok(QuantileBinner { k, edges, fit_count })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn fit_count(&self) -> usize {
        self.fit_count
    }

    /// State for a value: the count of edges strictly below it.
    pub fn assign_state(&self, value: f64) -> Result<usize, BinError> {
        if !value.is_finite() {
            return Err(BinError::NonFinite(value));
        }
        // edges are non-decreasing, so the strictly-less prefix is contiguous
        Ok(self.edges.iter().take_while(|&&edge| edge < value).count())
    }
}

/// Encode a resampled series as contiguous state-sequence segments.
///
/// Segments split wherever consecutive points are more than one interval
/// apart, so no state transition ever spans a gap.
pub fn encode_series(
    binner: &QuantileBinner,
    series: &NodeSeries,
) -> Result<Vec<Vec<usize>>, BinError> {
    let step = series.interval_s as i64;
    let mut segments = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut prev_secs: Option<i64> = None;
    for &(ts, value) in &series.points {
        let secs = ts.and_utc().timestamp();
        if let Some(prev) = prev_secs {
            if secs - prev != step && !current.is_empty() {
                segments.push(std::mem::take(&mut current));
            }
        }
        current.push(binner.assign_state(value)?);
        prev_secs = Some(secs);
    }
    if !current.is_empty() {
        segments.push(current);
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Feature;
    use chrono::NaiveDateTime;

    fn hour(h: i64) -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2004-03-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap()
            + chrono::Duration::hours(h)
    }

    fn series_of(hours: &[(i64, f64)]) -> NodeSeries {
        NodeSeries::from_points(
            1,
            Feature::Temperature,
            3600,
            hours.iter().map(|&(h, v)| (hour(h), v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn eight_distinct_values_four_bins() {
        // hand-derived: h = 7q gives edges at 2.75, 4.5, 6.25
        let values: Vec<f64> = (1..=8).map(f64::from).collect();
        let binner = fit_bins(&values, 4).unwrap();
        assert_eq!(binner.edges(), &[2.75, 4.5, 6.25]);
        let mut counts = [0usize; 4];
        for &v in &values {
            counts[binner.assign_state(v).unwrap()] += 1;
        }
        assert_eq!(counts, [2, 2, 2, 2]);
    }

    #[test]
    fn single_state_maps_everything_to_zero() {
        let binner = fit_bins(&[5.0, -2.0, 100.0], 1).unwrap();
        assert!(binner.edges().is_empty());
        for v in [-1e9, 0.0, 1e9] {
            assert_eq!(binner.assign_state(v).unwrap(), 0);
        }
    }

    #[test]
    fn constant_values_degenerate_edges() {
        let binner = fit_bins(&[7.0; 10], 3).unwrap();
        assert_eq!(binner.edges(), &[7.0, 7.0]);
        // tie rule: no edge is strictly below 7.0
        assert_eq!(binner.assign_state(7.0).unwrap(), 0);
        assert_eq!(binner.assign_state(7.1).unwrap(), 2);
    }

    #[test]
    fn interior_clamp_and_tie_rules() {
        let binner = QuantileBinner::from_parts(3, vec![10.0, 20.0], 0).unwrap();
        assert_eq!(binner.assign_state(15.0).unwrap(), 1);
        assert_eq!(binner.assign_state(-100.0).unwrap(), 0);
        assert_eq!(binner.assign_state(10.0).unwrap(), 0);
        assert_eq!(binner.assign_state(1e9).unwrap(), 2);
        let tied = QuantileBinner::from_parts(3, vec![10.0, 10.0], 0).unwrap();
        assert_eq!(tied.assign_state(10.0).unwrap(), 0);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(fit_bins(&[], 3), Err(BinError::EmptyInput));
        assert_eq!(fit_bins(&[1.0], 0), Err(BinError::ZeroStates));
        assert!(matches!(
            fit_bins(&[1.0, f64::NAN], 3),
            Err(BinError::NonFinite(_))
        ));
        assert!(matches!(
            binner_err_shape(),
            Err(BinError::Shape(_))
        ));
    }

    fn binner_err_shape() -> Result<QuantileBinner, BinError> {
        QuantileBinner::from_parts(5, vec![1.0, 2.0, 3.0], 0)
    }

    #[test]
    fn assign_rejects_non_finite() {
        let binner = fit_bins(&[1.0, 2.0], 2).unwrap();
        assert!(matches!(
            binner.assign_state(f64::INFINITY),
            Err(BinError::NonFinite(_))
        ));
    }

    #[test]
    fn encode_contiguous_series_is_one_segment() {
        let binner = QuantileBinner::from_parts(2, vec![5.0], 0).unwrap();
        let series = series_of(&[(0, 1.0), (1, 9.0), (2, 2.0), (3, 8.0), (4, 3.0)]);
        let segments = encode_series(&binner, &series).unwrap();
        assert_eq!(segments, vec![vec![0, 1, 0, 1, 0]]);
    }

    #[test]
    fn encode_splits_at_gap() {
        let binner = QuantileBinner::from_parts(2, vec![5.0], 0).unwrap();
        let series = series_of(&[(0, 1.0), (1, 9.0), (3, 2.0), (4, 8.0)]);
        let segments = encode_series(&binner, &series).unwrap();
        assert_eq!(segments, vec![vec![0, 1], vec![0, 1]]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_distinct_values() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::btree_set(-1_000_000i64..1_000_000, 1..200).prop_map(|set| {
                set.into_iter().map(|v| v as f64 / 7.0).collect::<Vec<f64>>()
            })
        }

        proptest! {
            // Distinct training values land in bins of near-equal mass.
            #[test]
            fn bin_balance_for_distinct_values(values in arb_distinct_values(), k in 1usize..9) {
                let binner = fit_bins(&values, k).unwrap();
                let mut counts = vec![0usize; k];
                for &v in &values {
                    counts[binner.assign_state(v).unwrap()] += 1;
                }
                let n = values.len();
                let lo = (n / k).saturating_sub(1);
                let hi = n.div_ceil(k) + 1;
                for (state, &c) in counts.iter().enumerate() {
                    prop_assert!(
                        c >= lo && c <= hi,
                        "state {} got {} samples, expected within [{}, {}]",
                        state, c, lo, hi
                    );
                }
            }

            // value_a <= value_b implies state(value_a) <= state(value_b).
            #[test]
            fn assignment_is_monotone(
                values in proptest::collection::vec(-1e6f64..1e6, 2..50),
                k in 1usize..7,
                a in -2e6f64..2e6,
                b in -2e6f64..2e6,
            ) {
                let binner = fit_bins(&values, k).unwrap();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(
                    binner.assign_state(lo).unwrap() <= binner.assign_state(hi).unwrap()
                );
            }

            // Encoding preserves the total point count across segments.
            #[test]
            fn encode_preserves_point_count(
                hours in proptest::collection::btree_set(0i64..300, 1..80),
                k in 1usize..6,
            ) {
                let points: Vec<(i64, f64)> = hours
                    .iter()
                    .map(|&h| (h, (h % 17) as f64))
                    .collect();
                let series = series_of(&points);
                let binner = fit_bins(&series.values(), k).unwrap();
                let segments = encode_series(&binner, &series).unwrap();
                let total: usize = segments.iter().map(Vec::len).sum();
                prop_assert_eq!(total, series.len());
                for segment in &segments {
                    prop_assert!(!segment.is_empty());
                }
            }
        }
    }
}
