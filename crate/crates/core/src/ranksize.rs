//! Rank-size (empirical complementary cdf) curves and tail regressions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub c: f64,
    pub rank_fraction: f64,
}

/// Values sorted descending with their normalized rank.
///
/// Unweighted: `rank / n`. Weighted: cumulative weight fraction, so the curve
/// is the worker-weighted `P>(c)` when weights are head counts.
pub fn ranksize(values: &[f64], weights: Option<&[f64]>) -> Vec<RankPoint> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    match weights {
        None => {
            let n = values.len() as f64;
            idx.iter()
                .enumerate()
                .map(|(r, &i)| RankPoint {
                    c: values[i],
                    rank_fraction: (r + 1) as f64 / n,
                })
                .collect()
        }
        Some(w) => {
            assert_eq!(w.len(), values.len(), "one weight per value");
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            let last = idx.len().saturating_sub(1);
            idx.iter()
                .enumerate()
                .map(|(r, &i)| {
                    acc += w[i];
                    RankPoint {
                        c: values[i],
                        rank_fraction: if r == last { 1.0 } else { acc / total },
                    }
                })
                .collect()
        }
    }
}

fn ols_slope(xs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn top(points: &[RankPoint], top_fraction: f64) -> impl Iterator<Item = &RankPoint> {
    points
        .iter()
        .filter(move |p| p.rank_fraction <= top_fraction && p.c > 0.0)
}

/// Tail index from regressing `ln P>` on `ln c` over the top `top_fraction`.
pub fn tail_index(points: &[RankPoint], top_fraction: f64) -> Option<f64> {
    ols_slope(top(points, top_fraction).map(|p| (p.c.ln(), p.rank_fraction.ln()))).map(|s| -s)
}

/// Slope of `ln c` against `ln rank` over the top `top_fraction`; about `-1/μ`
/// for a Pareto tail.
pub fn loglog_slope(points: &[RankPoint], top_fraction: f64) -> Option<f64> {
    ols_slope(top(points, top_fraction).map(|p| (p.rank_fraction.ln(), p.c.ln())))
}

/// Weighted median (lower median on ties of cumulative weight).
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let half = 0.5 * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= half {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gb2::Gb2Params;
    use proptest::prelude::*;

    #[test]
    fn three_values() {
        let r = ranksize(&[1.0, 2.0, 3.0], None);
        let got: Vec<(f64, f64)> = r.iter().map(|p| (p.c, p.rank_fraction)).collect();
        assert_eq!(got, vec![(3.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (1.0, 1.0)]);
    }

    #[test]
    fn single_value() {
        assert_eq!(
            ranksize(&[4.2], None),
            vec![RankPoint {
                c: 4.2,
                rank_fraction: 1.0
            }]
        );
        assert_eq!(ranksize(&[4.2], Some(&[7.0]))[0].rank_fraction, 1.0);
    }

    #[test]
    fn weighted_fractions() {
        let r = ranksize(&[1.0, 2.0, 3.0], Some(&[1.0, 1.0, 2.0]));
        let f: Vec<f64> = r.iter().map(|p| p.rank_fraction).collect();
        assert_eq!(f, vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn gb2_curve_tracks_ccdf() {
        let p = Gb2Params::new(2.0, 1.2, 1.5, 1.0).unwrap();
        let xs = p.sample(100_000, 5);
        let r = ranksize(&xs, None);
        let n = r.len() as f64;
        let d = r
            .iter()
            .map(|pt| (pt.rank_fraction - p.ccdf(pt.c)).abs())
            .fold(0.0, f64::max);
        assert!(d < 0.01 + 1.0 / n, "{d}");
    }

    #[test]
    fn tail_regressions_on_pareto() {
        // exact Pareto quantiles, μ = 1.6
        let n = 10_000;
        let xs: Vec<f64> = (1..=n)
            .map(|i| (i as f64 / n as f64).powf(-1.0 / 1.6))
            .collect();
        let r = ranksize(&xs, None);
        assert!((tail_index(&r, 0.1).unwrap() - 1.6).abs() < 1e-9);
        assert!((loglog_slope(&r, 0.1).unwrap() + 1.0 / 1.6).abs() < 1e-9);
    }

    #[test]
    fn median() {
        assert_eq!(weighted_median(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]), 2.0);
        assert_eq!(weighted_median(&[3.0, 1.0, 2.0], &[10.0, 1.0, 1.0]), 3.0);
    }

    proptest! {
        #[test]
        fn monotone(values in prop::collection::vec(0.01f64..1e6, 1..200),
                    weighted in any::<bool>()) {
            let w: Vec<f64> = values.iter().map(|v| 1.0 + v.sqrt().fract()).collect();
            let r = ranksize(&values, weighted.then_some(&w[..]));
            for pair in r.windows(2) {
                prop_assert!(pair[0].c >= pair[1].c);
                prop_assert!(pair[0].rank_fraction < pair[1].rank_fraction);
            }
            prop_assert_eq!(r.last().unwrap().rank_fraction, 1.0);
        }
    }
}
