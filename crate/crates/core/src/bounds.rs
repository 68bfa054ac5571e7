//! Estimated lower bounds on pairwise precision, recall and F1 of a test
//! resolution, computed from validation-pair statistics.
//!
//! * precision: `|T_M| / |R|` times validation precision re-weighted from the
//!   validation class balance `C_V` to the test class balance `C_T`;
//! * recall: validation recall, unchanged;
//! * F1: harmonic mean of the two.
//!
//! Confidence intervals come from Wilson score intervals on validation
//! precision and recall, pushed through the bounds by evaluating them at the
//! interval endpoints (both bounds are monotone in their validation input).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::harmonic_mean;

/// Smallest and largest admissible class-balance estimate.
pub const CLASS_BALANCE_CLIP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("|T_M| = {tm} exceeds |R| = {r}; direct matches must lie inside the resolution")]
    DirectMatchesExceedResolution { tm: u64, r: u64 },
    #[error("validation set has no positive pairs")]
    NoValidationPositives,
    #[error("validation set has no negative pairs")]
    NoValidationNegatives,
    #[error("validation precision is undefined: no validation pair is predicted to match")]
    UndefinedPrecision,
    #[error("matcher is uninformative on validation (tpr {tpr} <= fpr {fpr}); cannot estimate C_T")]
    UninformativeMatcher { tpr: f64, fpr: f64 },
    #[error("inconsistent validation counts: {0}")]
    InvalidCounts(String),
    #[error("binomial interval needs at least one trial")]
    NoTrials,
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::Domain {
            name,
            value,
            range: "(0, 1)",
        })
    }
}

fn check_closed_unit(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(BoundsError::Domain {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

/// Confusion counts of the base match function on labeled validation pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationStats {
    /// |V|
    pub n_pairs: u64,
    /// |V_S|
    pub n_positive: u64,
    /// |V_M|
    pub n_predicted_match: u64,
    /// |V_M ∩ V_S|
    pub n_true_match: u64,
}

impl ValidationStats {
    pub fn new(n_pairs: u64, n_positive: u64, n_predicted_match: u64, n_true_match: u64) -> Result<Self, BoundsError> {
        if n_positive == 0 {
            return Err(BoundsError::NoValidationPositives);
        }
        if n_positive >= n_pairs {
            return Err(BoundsError::NoValidationNegatives);
        }
        if n_true_match > n_positive.min(n_predicted_match) {
            return Err(BoundsError::InvalidCounts(format!(
                "{n_true_match} true matches with {n_positive} positives and {n_predicted_match} predicted"
            )));
        }
        if n_predicted_match - n_true_match > n_pairs - n_positive {
            return Err(BoundsError::InvalidCounts(format!(
                "{} false matches with only {} negatives",
                n_predicted_match - n_true_match,
                n_pairs - n_positive
            )));
        }
        Ok(Self {
            n_pairs,
            n_positive,
            n_predicted_match,
            n_true_match,
        })
    }

    /// Counts from `(is_match_label, predicted_match)` pairs.
    pub fn from_predictions<I>(outcomes: I) -> Result<Self, BoundsError>
    where
        I: IntoIterator<Item = (bool, bool)>,
    {
        let (mut n, mut pos, mut pred, mut tp) = (0, 0, 0, 0);
        for (label, predicted) in outcomes {
            n += 1;
            pos += u64::from(label);
            pred += u64::from(predicted);
            tp += u64::from(label && predicted);
        }
        Self::new(n, pos, pred, tp)
    }

    /// `Prec(V_M, V_S)`; undefined when nothing is predicted to match.
    pub fn precision(&self) -> Option<f64> {
        (self.n_predicted_match > 0).then(|| self.n_true_match as f64 / self.n_predicted_match as f64)
    }

    /// `Recall(V_M, V_S)`, also the true positive rate.
    pub fn recall(&self) -> f64 {
        self.n_true_match as f64 / self.n_positive as f64
    }

    pub fn tpr(&self) -> f64 {
        self.recall()
    }

    pub fn fpr(&self) -> f64 {
        (self.n_predicted_match - self.n_true_match) as f64 / (self.n_pairs - self.n_positive) as f64
    }

    /// `C_V = |V_S| / |V|`.
    pub fn class_balance(&self) -> f64 {
        self.n_positive as f64 / self.n_pairs as f64
    }
}

/// Precision of a classifier measured at class balance `c_v`, re-expressed at
/// class balance `c_t` (same true and false positive rates).
pub fn rebalance_precision(p_v: f64, c_v: f64, c_t: f64) -> Result<f64, BoundsError> {
    check_closed_unit("p_v", p_v)?;
    check_open_unit("c_v", c_v)?;
    check_open_unit("c_t", c_t)?;
    // C_V(1−C_T) + (C_T−C_V)P_V rewritten as the sum of the rebalanced true
    // and false match masses, so P_V = 1 maps to exactly 1.
    let true_mass = p_v * c_t * (1.0 - c_v);
    let false_mass = (1.0 - p_v) * c_v * (1.0 - c_t);
    if true_mass == 0.0 {
        return Ok(0.0);
    }
    Ok((true_mass / (true_mass + false_mass)).clamp(0.0, 1.0))
}

/// Lower bound on test pairwise precision: `(tm / r) × rebalance(p_v)`.
/// Vacuous (0) for an empty resolution.
pub fn precision_lower_bound(tm: u64, r: u64, p_v: f64, c_v: f64, c_t: f64) -> Result<f64, BoundsError> {
    if tm > r {
        return Err(BoundsError::DirectMatchesExceedResolution { tm, r });
    }
    let rebalanced = rebalance_precision(p_v, c_v, c_t)?;
    if r == 0 {
        return Ok(0.0);
    }
    Ok(tm as f64 / r as f64 * rebalanced)
}

/// Lower bound on test pairwise recall: the validation recall itself.
pub fn recall_lower_bound(stats: &ValidationStats) -> Result<f64, BoundsError> {
    if stats.n_positive == 0 {
        return Err(BoundsError::NoValidationPositives);
    }
    Ok(stats.recall())
}

pub fn f1_lower_bound(p_lb: f64, r_lb: f64) -> f64 {
    harmonic_mean(p_lb, r_lb)
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    fn poly(coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_545_925,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let magnitude = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Self { low: x, high: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Two-sided Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<Interval, BoundsError> {
    if trials == 0 {
        return Err(BoundsError::NoTrials);
    }
    if successes > trials {
        return Err(BoundsError::InvalidCounts(format!("{successes} successes in {trials} trials")));
    }
    check_open_unit("confidence", confidence)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
    let z2 = z * z;
    let denominator = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denominator;
    let half = z / denominator * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let high = if successes == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok(Interval { low, high })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundIntervals {
    pub precision: Interval,
    pub recall: Interval,
    pub f1: Interval,
}

/// Pushes intervals on validation precision and recall through the bounds.
///
/// The precision bound is increasing in validation precision (the derivative
/// of the rebalanced term has numerator `C_T(1−C_V)C_V(1−C_T) > 0`) and F1 is
/// increasing in both arguments, so endpoint evaluation is exact.
pub fn propagate_intervals(
    precision_v: Interval,
    recall_v: Interval,
    tm: u64,
    r: u64,
    c_v: f64,
    c_t: f64,
) -> Result<BoundIntervals, BoundsError> {
    let precision = Interval {
        low: precision_lower_bound(tm, r, precision_v.low, c_v, c_t)?,
        high: precision_lower_bound(tm, r, precision_v.high, c_v, c_t)?,
    };
    let f1 = Interval {
        low: f1_lower_bound(precision.low, recall_v.low),
        high: f1_lower_bound(precision.high, recall_v.high),
    };
    Ok(BoundIntervals {
        precision,
        recall: recall_v,
        f1,
    })
}

/// Wilson intervals of the validation statistics, propagated through the
/// bounds.
pub fn propagate_bound_interval(
    stats: &ValidationStats,
    tm: u64,
    r: u64,
    c_t: f64,
    confidence: f64,
) -> Result<BoundIntervals, BoundsError> {
    if stats.n_predicted_match == 0 {
        return Err(BoundsError::UndefinedPrecision);
    }
    let precision_v = wilson_interval(stats.n_true_match, stats.n_predicted_match, confidence)?;
    let recall_v = wilson_interval(stats.n_true_match, stats.n_positive, confidence)?;
    propagate_intervals(precision_v, recall_v, tm, r, stats.class_balance(), c_t)
}

/// Source of the test class balance `C_T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ClassBalance {
    /// Adjusted-count estimate from the test match rate.
    #[default]
    Estimate,
    /// Known prevalence supplied by the user.
    Fixed(f64),
}

/// `Ĉ_T = (rate − fpr) / (tpr − fpr)`, clipped to `[1e-9, 1 − 1e-9]`, or the
/// fixed value when one is given.
pub fn estimate_test_class_balance(
    predicted_match_rate: f64,
    stats: &ValidationStats,
    mode: ClassBalance,
) -> Result<f64, BoundsError> {
    match mode {
        ClassBalance::Fixed(c_t) => {
            check_open_unit("c_t", c_t)?;
            Ok(c_t)
        }
        ClassBalance::Estimate => {
            check_closed_unit("predicted_match_rate", predicted_match_rate)?;
            let (tpr, fpr) = (stats.tpr(), stats.fpr());
            if tpr <= fpr {
                return Err(BoundsError::UninformativeMatcher { tpr, fpr });
            }
            let estimate = (predicted_match_rate - fpr) / (tpr - fpr);
            Ok(estimate.clamp(CLASS_BALANCE_CLIP, 1.0 - CLASS_BALANCE_CLIP))
        }
    }
}

/// Everything needed to judge one test resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// |R|
    pub r_pairs: u64,
    /// |T_M|
    pub tm_pairs: u64,
    /// |Pairs(T)|
    pub test_pairs: u64,
    pub c_t_estimate: f64,
    pub class_balance: ClassBalance,
    pub precision_lb: f64,
    pub recall_lb: f64,
    pub f1_lb: f64,
    pub ci: BoundIntervals,
    pub confidence_level: f64,
    pub validation: ValidationStats,
    pub c_v: f64,
    pub precision_v: f64,
    pub recall_v: f64,
}

impl BoundReport {
    pub fn compute(
        stats: &ValidationStats,
        tm_pairs: u64,
        r_pairs: u64,
        test_pairs: u64,
        class_balance: ClassBalance,
        confidence_level: f64,
    ) -> Result<Self, BoundsError> {
        if tm_pairs > r_pairs {
            return Err(BoundsError::DirectMatchesExceedResolution { tm: tm_pairs, r: r_pairs });
        }
        if r_pairs > test_pairs {
            return Err(BoundsError::InvalidCounts(format!(
                "{r_pairs} resolved pairs among {test_pairs} test pairs"
            )));
        }
        let precision_v = stats.precision().ok_or(BoundsError::UndefinedPrecision)?;
        let rate = if test_pairs == 0 {
            0.0
        } else {
            tm_pairs as f64 / test_pairs as f64
        };
        let c_v = stats.class_balance();
        let c_t = estimate_test_class_balance(rate, stats, class_balance)?;
        let precision_lb = precision_lower_bound(tm_pairs, r_pairs, precision_v, c_v, c_t)?;
        let recall_lb = recall_lower_bound(stats)?;
        let ci = propagate_bound_interval(stats, tm_pairs, r_pairs, c_t, confidence_level)?;
        Ok(Self {
            r_pairs,
            tm_pairs,
            test_pairs,
            c_t_estimate: c_t,
            class_balance,
            precision_lb,
            recall_lb,
            f1_lb: f1_lower_bound(precision_lb, recall_lb),
            ci,
            confidence_level,
            validation: *stats,
            c_v,
            precision_v,
            recall_v: stats.recall(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rebalance_examples() {
        // 0.045 / 0.09 in exact arithmetic; a couple of ulps in f64
        assert!((rebalance_precision(0.9, 0.5, 0.1).unwrap() - 0.5).abs() < 1e-15);
        for c in [0.01, 0.3, 0.5, 0.97] {
            assert_eq!(rebalance_precision(1.0, c, 0.2).unwrap(), 1.0);
            assert_eq!(rebalance_precision(0.0, c, 0.2).unwrap(), 0.0);
            assert!((rebalance_precision(0.42, c, c).unwrap() - 0.42).abs() < 1e-15);
        }
        assert!(rebalance_precision(0.5, 0.0, 0.1).is_err());
        assert!(rebalance_precision(0.5, 0.2, 1.0).is_err());
        assert!(rebalance_precision(1.2, 0.2, 0.1).is_err());
        assert!(rebalance_precision(f64::NAN, 0.2, 0.1).is_err());
    }

    /// Precision of a classifier with fixed rates at prevalence `c`.
    fn precision_at(tpr: f64, fpr: f64, c: f64) -> f64 {
        c * tpr / (c * tpr + (1.0 - c) * fpr)
    }

    #[test]
    fn rebalance_follows_fixed_rates() {
        for (tpr, fpr) in [(0.9, 0.1), (0.6, 0.02), (0.99, 0.3)] {
            for (c_v, c_t) in [(0.5, 0.1), (0.2, 0.01), (0.05, 0.6)] {
                let p_v = precision_at(tpr, fpr, c_v);
                let p_t = precision_at(tpr, fpr, c_t);
                assert!((rebalance_precision(p_v, c_v, c_t).unwrap() - p_t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn precision_bound_examples() {
        let lb = precision_lower_bound(90, 100, 0.9, 0.5, 0.1).unwrap();
        assert!((lb - 0.45).abs() < 1e-15);
        assert_eq!(precision_lower_bound(40, 40, 1.0, 0.3, 0.3).unwrap(), 1.0);
        assert_eq!(precision_lower_bound(0, 0, 0.9, 0.3, 0.3).unwrap(), 0.0);
        assert_eq!(
            precision_lower_bound(5, 4, 0.9, 0.3, 0.3),
            Err(BoundsError::DirectMatchesExceedResolution { tm: 5, r: 4 })
        );
    }

    #[test]
    fn recall_and_f1_bounds() {
        let stats = ValidationStats::new(100, 50, 45, 40).unwrap();
        assert_eq!(recall_lower_bound(&stats).unwrap(), 0.8);
        let perfect = ValidationStats::new(10, 5, 5, 5).unwrap();
        assert_eq!(recall_lower_bound(&perfect).unwrap(), 1.0);
        assert_eq!(f1_lower_bound(1.0, 1.0), 1.0);
        assert!((f1_lower_bound(0.45, 0.8) - 0.576).abs() < 1e-15);
        assert_eq!(f1_lower_bound(0.7, 0.0), 0.0);
        assert_eq!(f1_lower_bound(0.0, 0.0), 0.0);
    }

    #[test]
    fn validation_stats_checks() {
        assert_eq!(ValidationStats::new(10, 0, 0, 0), Err(BoundsError::NoValidationPositives));
        assert_eq!(ValidationStats::new(10, 10, 0, 0), Err(BoundsError::NoValidationNegatives));
        assert!(ValidationStats::new(10, 5, 3, 4).is_err());
        assert!(ValidationStats::new(10, 5, 9, 2).is_err());
        let s = ValidationStats::from_predictions([(true, true), (true, false), (false, true), (false, false)]).unwrap();
        assert_eq!(s, ValidationStats::new(4, 2, 2, 1).unwrap());
        assert_eq!(s.precision(), Some(0.5));
        assert_eq!(s.fpr(), 0.5);
        assert_eq!(s.class_balance(), 0.5);
        assert_eq!(ValidationStats::new(4, 2, 0, 0).unwrap().precision(), None);
    }

    #[test]
    fn normal_quantile_reference_values() {
        // reference values from scipy.stats.norm.ppf
        let cases = [
            (0.975, 1.959963984540054),
            (0.995, 2.5758293035489004),
            (0.9999999, 5.199337582290661),
            (1e-12, -7.034483825301131),
            (0.5, 0.0),
            (0.3, -0.5244005127080409),
            (0.9, 1.2815515655446004),
            (0.05, -1.6448536269514729),
            (1e-300, -37.0470962993612),
        ];
        for (p, z) in cases {
            let got = normal_quantile(p);
            assert!((got - z).abs() <= 1e-8 * z.abs().max(1.0), "p={p}: {got} vs {z}");
        }
    }

    #[test]
    fn wilson_examples() {
        let iv = wilson_interval(50, 100, 0.95).unwrap();
        assert!((iv.low - 0.4038).abs() < 5e-4, "{iv:?}");
        assert!((iv.high - 0.5962).abs() < 5e-4, "{iv:?}");
        for n in [1, 7, 100, 10_000] {
            assert_eq!(wilson_interval(0, n, 0.9).unwrap().low, 0.0);
            assert_eq!(wilson_interval(n, n, 0.9).unwrap().high, 1.0);
        }
        assert_eq!(wilson_interval(0, 0, 0.95), Err(BoundsError::NoTrials));
        assert!(wilson_interval(3, 2, 0.95).is_err());
        assert!(wilson_interval(1, 2, 1.0).is_err());
    }

    #[test]
    fn class_balance_estimates() {
        // tpr 0.9, fpr 0.1
        let stats = ValidationStats::new(200, 100, 100, 90).unwrap();
        let est = estimate_test_class_balance(0.2, &stats, ClassBalance::Estimate).unwrap();
        assert!((est - 0.125).abs() < 1e-15);
        let floor = estimate_test_class_balance(0.1, &stats, ClassBalance::Estimate).unwrap();
        assert_eq!(floor, CLASS_BALANCE_CLIP);
        assert_eq!(estimate_test_class_balance(0.2, &stats, ClassBalance::Fixed(0.01)).unwrap(), 0.01);
        let useless = ValidationStats::new(200, 100, 20, 10).unwrap();
        assert!(matches!(
            estimate_test_class_balance(0.2, &useless, ClassBalance::Estimate),
            Err(BoundsError::UninformativeMatcher { .. })
        ));
    }

    #[test]
    fn zero_width_input_gives_zero_width_bounds() {
        let ci = propagate_intervals(Interval::point(0.8), Interval::point(0.7), 30, 50, 0.4, 0.05).unwrap();
        assert_eq!(ci.precision.width(), 0.0);
        assert_eq!(ci.recall.width(), 0.0);
        assert_eq!(ci.f1.width(), 0.0);
        assert_eq!(ci.precision.low, precision_lower_bound(30, 50, 0.8, 0.4, 0.05).unwrap());
    }

    #[test]
    fn report_bounds_lie_inside_intervals() {
        let stats = ValidationStats::new(200, 100, 95, 90).unwrap();
        let report = BoundReport::compute(&stats, 400, 450, 100_000, ClassBalance::Estimate, 0.95).unwrap();
        assert!(report.ci.precision.contains(report.precision_lb));
        assert!(report.ci.recall.contains(report.recall_lb));
        assert!(report.ci.f1.contains(report.f1_lb));
        assert_eq!(report.recall_lb, stats.recall());
        assert!(report.precision_lb <= 400.0 / 450.0);
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<BoundReport>(&json).unwrap(), report);

        let silent = ValidationStats::new(200, 100, 0, 0).unwrap();
        assert_eq!(
            BoundReport::compute(&silent, 0, 0, 100, ClassBalance::Estimate, 0.95),
            Err(BoundsError::UndefinedPrecision)
        );
    }

    proptest! {
        #[test]
        fn precision_bound_is_monotone_in_validation_precision(
            lo in 0.0f64..=1.0, hi in 0.0f64..=1.0,
            c_v in 0.01f64..0.99, c_t in 0.0001f64..0.99,
            r in 1u64..10_000, frac in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let tm = (r as f64 * frac).floor() as u64;
            let at_lo = precision_lower_bound(tm, r, lo, c_v, c_t).unwrap();
            let at_hi = precision_lower_bound(tm, r, hi, c_v, c_t).unwrap();
            prop_assert!(at_hi >= at_lo);
            prop_assert!(at_hi <= tm as f64 / r as f64 + 1e-15);
        }

        #[test]
        fn wilson_contains_point_estimate(n in 1u64..5000, k_frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
            let k = (n as f64 * k_frac).round() as u64;
            let iv = wilson_interval(k, n, conf).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= iv.low && iv.low <= p && p <= iv.high && iv.high <= 1.0);
        }
    }

    #[test]
    fn rebalance_is_monotone_on_grid() {
        let grid: Vec<f64> = (0..20).map(|i| (f64::from(i) + 0.5) / 20.0).collect();
        for &c_v in &grid {
            for w in grid.windows(2) {
                for &x in &grid {
                    // in p_v at fixed c_t = x
                    assert!(rebalance_precision(w[1], c_v, x).unwrap() >= rebalance_precision(w[0], c_v, x).unwrap());
                    // in c_t at fixed p_v = x
                    assert!(rebalance_precision(x, c_v, w[1]).unwrap() >= rebalance_precision(x, c_v, w[0]).unwrap());
                }
            }
        }
    }
}
