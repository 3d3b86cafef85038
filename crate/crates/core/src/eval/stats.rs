//! Paired significance tests over per-task metric vectors.
//!
//! The Wilcoxon signed-rank test uses the exact conditional null distribution
//! (all 2^m sign assignments of the observed ranks) whenever at most 20
//! nonzero differences remain, computed by dynamic programming over doubled
//! ranks so mid-ranks from ties stay in integer arithmetic. Larger samples
//! use the normal approximation with tie and continuity corrections.

use serde::{Deserialize, Serialize};

use super::special::{normal_cdf, student_t_cdf};
use super::EvalError;

/// Largest number of nonzero differences for which the exact Wilcoxon null
/// distribution is enumerated.
pub const WILCOXON_EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    #[serde(rename = "t-test")]
    TTest,
    #[serde(rename = "wilcoxon-exact")]
    WilcoxonExact,
    #[serde(rename = "wilcoxon-normal-approx")]
    WilcoxonNormalApprox,
}

/// Outcome of one paired test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    /// t statistic, or the W+ rank sum for the Wilcoxon variants.
    pub statistic: f64,
    /// P(result at least this extreme in favor of x > y).
    pub p_greater: f64,
    /// P(result at least this extreme in favor of x < y).
    pub p_less: f64,
    pub p_two_sided: f64,
    /// Pairs used: all pairs for the t-test, nonzero differences for Wilcoxon.
    pub n: usize,
    pub method: TestMethod,
}

fn differences(x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EvalError::BadPair {
            x: x.len(),
            y: y.len(),
        });
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(diffs)
}

/// Paired Student's t-test on x - y with n - 1 degrees of freedom.
///
/// Degenerate inputs are defined rather than rejected: all-equal differences
/// with mean zero give statistic 0 and two-sided p = 1; a constant nonzero
/// difference gives an infinite statistic with the limiting p-values.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<PairedTestResult, EvalError> {
    let diffs = differences(x, y)?;
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();

    let (statistic, p_greater, p_less) = if se == 0.0 {
        if mean == 0.0 {
            (0.0, 0.5, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0, 1.0)
        } else {
            (f64::NEG_INFINITY, 1.0, 0.0)
        }
    } else {
        let t = mean / se;
        let cdf = student_t_cdf(t, (n - 1) as f64);
        (t, 1.0 - cdf, cdf)
    };
    Ok(PairedTestResult {
        statistic,
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        n,
        method: TestMethod::TTest,
    })
}

/// Wilcoxon signed-rank test on x - y. Zero differences are dropped; ties in
/// |difference| get mid-ranks. Errors with [`EvalError::DegenerateSample`]
/// when every difference is zero.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<PairedTestResult, EvalError> {
    let diffs = differences(x, y)?;
    let nonzero: Vec<f64> = diffs.into_iter().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(EvalError::DegenerateSample);
    }
    let m = nonzero.len();

    // Rank |d|, mid-ranking ties. Doubling every rank keeps mid-ranks (k + 1/2)
    // in integer arithmetic for the exact distribution.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        nonzero[a]
            .abs()
            .partial_cmp(&nonzero[b].abs())
            .expect("finite by construction")
    });
    let mut doubled_ranks = vec![0u64; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // Positions i..=j (0-based) share ranks i+1..=j+1; doubled mid-rank
        // = (i+1) + (j+1).
        let doubled = (i + j + 2) as u64;
        for &idx in &order[i..=j] {
            doubled_ranks[idx] = doubled;
        }
        i = j + 1;
    }

    let w_plus_doubled: u64 = nonzero
        .iter()
        .zip(&doubled_ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let statistic = w_plus_doubled as f64 / 2.0;

    let (p_greater, p_less, method) = if m <= WILCOXON_EXACT_LIMIT {
        let (pg, pl) = exact_sign_distribution(&doubled_ranks, w_plus_doubled);
        (pg, pl, TestMethod::WilcoxonExact)
    } else {
        let (pg, pl) = normal_approximation(&doubled_ranks, statistic);
        (pg, pl, TestMethod::WilcoxonNormalApprox)
    };
    Ok(PairedTestResult {
        statistic,
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        n: m,
        method,
    })
}

/// Exact tail probabilities of W+ under the null, conditioning on the
/// observed (doubled) ranks: each rank enters the sum with probability 1/2.
/// DP over achievable sums; counts fit u64 easily for m <= 20.
fn exact_sign_distribution(doubled_ranks: &[u64], w_doubled: u64) -> (f64, f64) {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reachable = 0usize;
    for &rank in doubled_ranks {
        let rank = rank as usize;
        reachable += rank;
        // Descending so each rank is used at most once.
        for sum in (rank..=reachable).rev() {
            counts[sum] += counts[sum - rank];
        }
    }
    let denom = 2f64.powi(doubled_ranks.len() as i32);
    let at_least: u64 = counts[w_doubled as usize..].iter().sum();
    let at_most: u64 = counts[..=w_doubled as usize].iter().sum();
    (at_least as f64 / denom, at_most as f64 / denom)
}

/// Normal approximation with tie correction and continuity correction.
fn normal_approximation(doubled_ranks: &[u64], w_plus: f64) -> (f64, f64) {
    let m = doubled_ranks.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    // Tie correction: subtract sum(t^3 - t)/48 over tie groups.
    let mut tie_term = 0.0;
    let mut sorted = doubled_ranks.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let p_greater = 1.0 - normal_cdf((w_plus - 0.5 - mean) / sd);
    let p_less = normal_cdf((w_plus + 0.5 - mean) / sd);
    (p_greater, p_less)
}

/// Runs both paired tests. The t-test is always defined; the Wilcoxon slot is
/// `None` when every difference is zero (degenerate sample).
pub fn paired_tests(
    x: &[f64],
    y: &[f64],
) -> Result<(PairedTestResult, Option<PairedTestResult>), EvalError> {
    let t = paired_t_test(x, y)?;
    let w = match wilcoxon_signed_rank(x, y) {
        Ok(res) => Some(res),
        Err(EvalError::DegenerateSample) => None,
        Err(e) => return Err(e),
    };
    Ok((t, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_positive_differences_give_one_in_512() {
        let x: Vec<f64> = (1..=9).map(|i| 0.8 + 0.01 * i as f64).collect();
        let y: Vec<f64> = (1..=9).map(|i| 0.7 + 0.005 * i as f64).collect();
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.method, TestMethod::WilcoxonExact);
        // All mass on the maximal rank sum: the losing side sees p = 1/2^9.
        assert!((w.p_less - 1.0).abs() < 1e-12);
        assert!((w.p_greater - 1.0 / 512.0).abs() < 1e-15);
        assert!((w.p_two_sided - 2.0 / 512.0).abs() < 1e-15);
        assert_eq!(w.statistic, 45.0);
    }

    #[test]
    fn mixed_signs_match_hand_enumeration() {
        // Differences 1, -2, 3: ranks 1, 2, 3; W+ = 4.
        // Of the 8 sign assignments, 3 reach a sum >= 4 and 6 stay <= 4.
        let x = [1.0, 0.0, 3.0];
        let y = [0.0, 2.0, 0.0];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.statistic, 4.0);
        assert!((w.p_greater - 3.0 / 8.0).abs() < 1e-15);
        assert!((w.p_less - 6.0 / 8.0).abs() < 1e-15);
        assert!((w.p_two_sided - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tied_magnitudes_get_mid_ranks() {
        // Differences 1, 1, -1, 2: |d| has a three-way tie at 1, so the
        // mid-rank is (1+2+3)/3 = 2, and |2| gets rank 4. W+ = 2 + 2 + 4 = 8.
        // Hand enumeration of the 16 sign assignments over ranks {2, 2, 2, 4}
        // gives sums [0, 2x3, 4x4, 6x4, 8x3, 10]:
        // P(W >= 8) = 4/16, P(W <= 8) = 15/16.
        let x = [1.0, 1.0, 0.0, 2.0];
        let y = [0.0, 0.0, 1.0, 0.0];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.statistic, 8.0);
        assert!((w.p_greater - 4.0 / 16.0).abs() < 1e-15);
        assert!((w.p_less - 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn zeros_are_dropped_before_ranking() {
        let x = [1.0, 2.0, 5.0, 7.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.n, 2, "two zero differences dropped");
        assert_eq!(w.statistic, 3.0);
        assert!((w.p_greater - 0.25).abs() < 1e-15);
    }

    #[test]
    fn all_zero_differences_is_degenerate() {
        let x = [0.5, 0.6, 0.7];
        match wilcoxon_signed_rank(&x, &x) {
            Err(EvalError::DegenerateSample) => {}
            other => panic!("expected degenerate sample, got {other:?}"),
        }
        // paired_tests still yields the t-test.
        let (t, w) = paired_tests(&x, &x).unwrap();
        assert!(w.is_none());
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_two_sided, 1.0);
    }

    #[test]
    fn large_samples_switch_to_normal_approximation() {
        let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.9).collect();
        let y: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.method, TestMethod::WilcoxonNormalApprox);
        assert!(
            w.p_less < 0.05,
            "clear negative shift: p_less = {}",
            w.p_less
        );
    }

    #[test]
    fn t_test_matches_reference_values() {
        // Hand-checked example: d = [1, 2, 3, 4, 5], mean 3, sd sqrt(2.5),
        // t = 3 / sqrt(2.5/5) = 4.2426..., df = 4.
        let x = [2.0, 4.0, 6.0, 8.0, 10.0];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = paired_t_test(&x, &y).unwrap();
        assert!((t.statistic - 4.242_640_687_119_285).abs() < 1e-12);
        // Two-sided p for t(4): with x = df/(df+t^2) = 2/11 the tail is
        // I_x(2, 1/2), which integrates in closed form to 0.013235599...
        assert!((t.p_two_sided - 0.013_235_599_563_68).abs() < 1e-9);
        assert!(t.p_greater < 0.01 && t.p_less > 0.99);
    }

    #[test]
    fn t_test_zero_mean_symmetric() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0];
        let t = paired_t_test(&x, &y).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_two_sided - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_nonzero_difference_hits_the_limit() {
        let x = [2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 3.0];
        let t = paired_t_test(&x, &y).unwrap();
        assert!(t.statistic.is_infinite() && t.statistic > 0.0);
        assert_eq!(t.p_greater, 0.0);
        assert_eq!(t.p_two_sided, 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, f64::NAN], &[0.0, 0.0, 0.0]).is_err());
    }
}
