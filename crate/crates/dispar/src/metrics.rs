//! Distances and test statistics: earth mover's distance between
//! displacement distributions, attachment scores and their deltas,
//! precision/recall by displacement, Welch's t-test from summary statistics,
//! and Pearson correlation.
//!
//! The t-distribution CDF is computed locally via the regularized incomplete
//! beta function (continued fraction, relative tolerance 1e-12) so that the
//! statistics need no external dependency.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::transitions::System;
use crate::treebank::{DisplacementDistribution, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("head vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("{0} series is constant; correlation is undefined")]
    ConstantSeries(&'static str),
    #[error("sample sizes must be at least 2 for a t-test, got {0} and {1}")]
    SampleTooSmall(usize, usize),
    #[error("standard deviations must be non-negative, got {0}")]
    NegativeDeviation(f64),
    #[error("no scores given")]
    Empty,
}

// === Earth mover's distance ===

/// Earth mover's distance (1-Wasserstein) between two displacement
/// distributions on the integer grid with unit ground distance: the sum of
/// absolute CDF differences over consecutive integers spanning the union
/// support. Distributions are non-empty and normalized by construction, so
/// this cannot fail.
pub fn emd(p: &DisplacementDistribution, q: &DisplacementDistribution) -> f64 {
    let lo = p.min_displacement().min(q.min_displacement());
    let hi = p.max_displacement().max(q.max_displacement());
    let mut cdf_p = 0.0;
    let mut cdf_q = 0.0;
    let mut total = 0.0;
    for d in lo..hi {
        cdf_p += p.prob(d);
        cdf_q += q.prob(d);
        total += (cdf_p - cdf_q).abs();
    }
    total
}

// === Attachment scores ===

/// Unlabeled attachment counts of a predicted head vector against gold.
/// Arcs to the artificial root count like any other arc.
pub fn uas_counts(predicted: &[NodeId], gold: &[NodeId]) -> Result<(usize, usize), MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok((correct, gold.len()))
}

/// Per-algorithm UAS deviation from the mean over the compared algorithms.
/// The deltas sum to zero by construction.
pub fn delta_uas(scores: &BTreeMap<System, f64>) -> Result<BTreeMap<System, f64>, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mean = scores.values().sum::<f64>() / scores.len() as f64;
    Ok(scores.iter().map(|(&sys, &s)| (sys, s - mean)).collect())
}

/// All ordered pairwise score differences: entry (a, b) holds score(a) -
/// score(b), so the matrix is antisymmetric.
pub fn pairwise_deltas(scores: &BTreeMap<System, f64>) -> BTreeMap<(System, System), f64> {
    let mut out = BTreeMap::new();
    for (&a, &sa) in scores {
        for (&b, &sb) in scores {
            if a != b {
                out.insert((a, b), sa - sb);
            }
        }
    }
    out
}

// === Precision and recall by displacement ===

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrCell {
    /// Gold arcs with this displacement.
    pub gold: u64,
    /// Predicted arcs with this displacement.
    pub predicted: u64,
    /// Predicted arcs that match the gold head (shared by both sides, since
    /// an identical arc has an identical displacement).
    pub correct: u64,
}

impl PrCell {
    /// None when no arc of this displacement was predicted.
    pub fn precision(&self) -> Option<f64> {
        (self.predicted > 0).then(|| self.correct as f64 / self.predicted as f64)
    }

    /// None when no gold arc has this displacement.
    pub fn recall(&self) -> Option<f64> {
        (self.gold > 0).then(|| self.correct as f64 / self.gold as f64)
    }
}

/// Precision/recall per signed displacement over aligned (predicted, gold)
/// head-vector pairs. Undefined cells stay representable as `None` through
/// [`PrCell`] so that aggregation can exclude them.
pub fn pr_by_displacement(
    pairs: &[(&[NodeId], &[NodeId])],
) -> Result<BTreeMap<i32, PrCell>, MetricsError> {
    let mut table: BTreeMap<i32, PrCell> = BTreeMap::new();
    for (predicted, gold) in pairs {
        if predicted.len() != gold.len() {
            return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
        }
        for (i, (&p, &g)) in predicted.iter().zip(gold.iter()).enumerate() {
            let dep = (i + 1) as i32;
            let dp = p as i32 - dep;
            let dg = g as i32 - dep;
            table.entry(dp).or_default().predicted += 1;
            let cell = table.entry(dg).or_default();
            cell.gold += 1;
            if p == g {
                cell.correct += 1;
            }
        }
    }
    Ok(table)
}

// === Welch's t-test ===

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom; NaN for the degenerate
    /// zero-variance case.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Welch's unequal-variance t-test from summary statistics (mean, sample
/// standard deviation, size). With both deviations zero the convention is
/// p = 1 for equal means and p = 0 otherwise.
pub fn welch_t_from_summary(
    m1: f64,
    s1: f64,
    n1: usize,
    m2: f64,
    s2: f64,
    n2: usize,
) -> Result<WelchTest, MetricsError> {
    if n1 < 2 || n2 < 2 {
        return Err(MetricsError::SampleTooSmall(n1, n2));
    }
    if s1 < 0.0 {
        return Err(MetricsError::NegativeDeviation(s1));
    }
    if s2 < 0.0 {
        return Err(MetricsError::NegativeDeviation(s2));
    }
    let v1 = s1 * s1 / n1 as f64;
    let v2 = s2 * s2 / n2 as f64;
    if v1 + v2 == 0.0 {
        return Ok(if m1 == m2 {
            WelchTest { t: 0.0, df: f64::NAN, p: 1.0 }
        } else {
            WelchTest { t: (m1 - m2).signum() * f64::INFINITY, df: f64::NAN, p: 0.0 }
        });
    }
    let t = (m1 - m2) / (v1 + v2).sqrt();
    let df = (v1 + v2).powi(2)
        / (v1 * v1 / (n1 as f64 - 1.0) + v2 * v2 / (n2 as f64 - 1.0));
    let p = student_t_two_sided_p(t, df);
    Ok(WelchTest { t, df, p })
}

// === Pearson correlation ===

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub r: f64,
    pub r_squared: f64,
    /// Two-sided p-value under the t-distribution with n - 2 degrees of
    /// freedom; exactly 0 when |r| = 1.
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with a two-sided significance test. Needs at least 3
/// points and non-constant series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Pearson, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints { n, min: 3 });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(MetricsError::ConstantSeries("x"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ConstantSeries("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let denom = 1.0 - r * r;
    let p = if denom <= 0.0 {
        0.0
    } else {
        let t = r * ((nf - 2.0) / denom).sqrt();
        student_t_two_sided_p(t, nf - 2.0)
    };
    Ok(Pearson { r, r_squared: r * r, p, n })
}

// === t-distribution machinery ===

/// Two-sided p-value for a t statistic: P(|T_df| >= |t|), computed as
/// I_x(df/2, 1/2) with x = df / (df + t^2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(df / 2.0, 0.5, x)
}

/// Natural log of the gamma function (Lanczos approximation, g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function I_x(a, b) via Lentz's continued
/// fraction, using the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for convergence.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-12;
    const TINY: f64 = 1e-30;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dist(pairs: &[(i32, f64)]) -> DisplacementDistribution {
        let mass: BTreeMap<i32, f64> = pairs.iter().copied().collect();
        DisplacementDistribution::from_probs(mass, pairs.len() as u64).unwrap()
    }

    #[test]
    fn emd_worked_examples() {
        let p = dist(&[(-1, 0.5), (1, 0.5)]);
        assert_eq!(emd(&p, &p), 0.0);

        // Point masses two integers apart.
        let plus = dist(&[(1, 1.0)]);
        let minus = dist(&[(-1, 1.0)]);
        assert_eq!(emd(&plus, &minus), 2.0);

        // Split mass vs. the midpoint: average move of 1.
        let mid = dist(&[(2, 1.0)]);
        let split = dist(&[(1, 0.5), (3, 0.5)]);
        assert!((emd(&split, &mid) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn emd_is_symmetric_and_respects_identity() {
        let p = dist(&[(-3, 0.25), (1, 0.5), (4, 0.25)]);
        let q = dist(&[(-2, 0.75), (5, 0.25)]);
        assert_eq!(emd(&p, &q), emd(&q, &p));
        assert_eq!(emd(&p, &p), 0.0);
        assert!(emd(&p, &q) > 0.0);
    }

    #[test]
    fn uas_counts_and_errors() {
        assert_eq!(uas_counts(&[2, 0, 2], &[2, 0, 2]).unwrap(), (3, 3));
        assert_eq!(uas_counts(&[2, 0, 1], &[2, 0, 2]).unwrap(), (2, 3));
        assert!(matches!(uas_counts(&[1], &[1, 2]), Err(MetricsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn delta_uas_centers_on_the_mean() {
        let mut scores = BTreeMap::new();
        scores.insert(System::ArcStandard, 80.0);
        scores.insert(System::ArcEager, 82.0);
        scores.insert(System::CovingtonProj, 84.0);
        let deltas = delta_uas(&scores).unwrap();
        assert_eq!(deltas[&System::ArcStandard], -2.0);
        assert_eq!(deltas[&System::ArcEager], 0.0);
        assert_eq!(deltas[&System::CovingtonProj], 2.0);
        assert!(deltas.values().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn pairwise_deltas_are_antisymmetric() {
        let mut scores = BTreeMap::new();
        scores.insert(System::ArcStandard, 90.0);
        scores.insert(System::ArcEager, 89.42);
        let deltas = pairwise_deltas(&scores);
        let ab = deltas[&(System::ArcStandard, System::ArcEager)];
        let ba = deltas[&(System::ArcEager, System::ArcStandard)];
        assert!((ab - 0.58).abs() < 1e-12);
        assert_eq!(ab, -ba);
    }

    #[test]
    fn pr_table_counts_gold_predicted_and_correct() {
        // Gold heads [2, 0, 2]; predicted [2, 0, 1].
        let gold = vec![2, 0, 2];
        let pred = vec![2, 0, 1];
        let table = pr_by_displacement(&[(&pred, &gold)]).unwrap();
        // d = +1: gold arc (2,1) predicted correctly.
        assert_eq!(table[&1], PrCell { gold: 1, predicted: 1, correct: 1 });
        // d = -1: gold arc (2,3); predicted none.
        assert_eq!(table[&-1], PrCell { gold: 1, predicted: 0, correct: 0 });
        assert_eq!(table[&-1].precision(), None);
        assert_eq!(table[&-1].recall(), Some(0.0));
        // d = -2: predicted arcs (0,2) [correct] and (1,3) [wrong]; gold (0,2).
        assert_eq!(table[&-2], PrCell { gold: 1, predicted: 2, correct: 1 });
        assert_eq!(table[&-2].precision(), Some(0.5));
    }

    #[test]
    fn welch_matches_frozen_reference() {
        // Reference values computed independently (scipy
        // ttest_ind_from_stats, equal_var=False).
        let w = welch_t_from_summary(0.0, 1.0, 30, 1.0, 1.0, 30).unwrap();
        assert!((w.t - -3.872_983_346_207_417).abs() < 1e-12, "t = {}", w.t);
        assert!((w.df - 58.0).abs() < 1e-9, "df = {}", w.df);
        assert!((w.p - 2.757_026_928_258_989e-4).abs() / 2.757e-4 < 1e-9, "p = {}", w.p);

        let w2 = welch_t_from_summary(2.5, 1.2, 8, 1.1, 0.9, 13).unwrap();
        assert!((w2.t - 2.844_097_201_026_872).abs() < 1e-9);
        assert!((w2.p - 0.014_939_361_341_111_766).abs() < 1e-9, "p = {}", w2.p);
    }

    #[test]
    fn welch_degenerate_conventions() {
        let same = welch_t_from_summary(1.0, 0.0, 5, 1.0, 0.0, 9).unwrap();
        assert_eq!(same.p, 1.0);
        let diff = welch_t_from_summary(1.0, 0.0, 5, 2.0, 0.0, 9).unwrap();
        assert_eq!(diff.p, 0.0);
        assert_eq!(diff.t, f64::NEG_INFINITY);
        assert!(matches!(
            welch_t_from_summary(0.0, 1.0, 1, 0.0, 1.0, 5),
            Err(MetricsError::SampleTooSmall(1, 5))
        ));
    }

    #[test]
    fn pearson_matches_frozen_reference() {
        let got = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got.r - 0.8).abs() < 1e-12, "r = {}", got.r);
        assert!((got.r_squared - 0.64).abs() < 1e-12);
        // p = 0.2 exactly for this configuration (scipy pearsonr).
        assert!((got.p - 0.2).abs() < 1e-9, "p = {}", got.p);
        assert_eq!(got.n, 4);
    }

    #[test]
    fn pearson_rejects_degenerate_input() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(MetricsError::TooFewPoints { n: 2, min: 3 })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricsError::ConstantSeries("x"))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(MetricsError::ConstantSeries("y"))
        ));
    }

    #[test]
    fn perfect_correlation_has_zero_p() {
        let got = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_eq!(got.r, 1.0);
        assert_eq!(got.p, 0.0);
        let neg = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(neg.r, -1.0);
        assert_eq!(neg.p, 0.0);
    }

    #[test]
    fn ln_gamma_hits_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(2.0)).abs() < 1e-12);
        // Gamma(0.5) = sqrt(pi).
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        // Gamma(6) = 120.
        assert!((ln_gamma(6.0) - 120f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn incomplete_beta_basics() {
        assert_eq!(reg_inc_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(reg_inc_beta(2.0, 3.0, 1.0), 1.0);
        // I_x(1, 1) = x.
        assert!((reg_inc_beta(1.0, 1.0, 0.37) - 0.37).abs() < 1e-12);
        // Symmetry: I_x(a, b) = 1 - I_{1-x}(b, a).
        let a = reg_inc_beta(2.5, 4.0, 0.3);
        let b = 1.0 - reg_inc_beta(4.0, 2.5, 0.7);
        assert!((a - b).abs() < 1e-11);
    }
}
