//! Nonparametric trend statistics.
//!
//! The Mann-Kendall test counts concordant minus discordant pairs of a
//! series and compares that count against its null distribution. Ties
//! shrink the null variance; serial correlation is handled with the
//! Hamed-Rao variance correction, which scales the variance by a factor
//! computed from the autocorrelation of the ranks. Trend magnitude comes
//! from the Theil-Sen estimator, the median of all pairwise slopes.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::series::TopicYearSeries;

/// Smallest series accepted by [`mann_kendall`].
pub const MIN_TEST_LEN: usize = 4;

/// Lower bound applied to the Hamed-Rao factor before it scales the variance.
pub const MIN_CORRECTION_FACTOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TrendError {
    #[error("series of length {n} is too short (need at least {required})")]
    InsufficientData { n: usize, required: usize },
    #[error("lag {k} outside 1..={max} for series of length {n}", max = n.saturating_sub(1))]
    LagOutOfRange { k: usize, n: usize },
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("invalid trend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    HamedRaoAllLags,
    #[default]
    HamedRaoSignificantLags,
}

impl Correction {
    pub fn lag_selection(self) -> Option<LagSelection> {
        match self {
            Correction::None => None,
            Correction::HamedRaoAllLags => Some(LagSelection::All),
            Correction::HamedRaoSignificantLags => Some(LagSelection::Significant),
        }
    }
}

impl std::str::FromStr for Correction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Correction::None),
            "hamed_rao_all_lags" => Ok(Correction::HamedRaoAllLags),
            "hamed_rao_significant_lags" => Ok(Correction::HamedRaoSignificantLags),
            other => Err(format!(
                "unknown correction {other:?} (none, hamed_rao_all_lags, hamed_rao_significant_lags)"
            )),
        }
    }
}

/// Which rank autocorrelations enter the Hamed-Rao sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSelection {
    /// Every lag from 1 to n - 3.
    All,
    /// Only lags with |ρ_k| above the two-sided `alpha` critical value
    /// divided by √n.
    Significant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub correction: Correction,
    pub alpha: f64,
    /// Subtract the Theil-Sen trend before ranking for the autocorrelation
    /// (the pymannkendall behaviour). Off by default.
    pub detrend: bool,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            correction: Correction::default(),
            alpha: 0.05,
            detrend: false,
        }
    }
}

impl TrendConfig {
    pub fn uncorrected(alpha: f64) -> Self {
        TrendConfig {
            correction: Correction::None,
            alpha,
            detrend: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrendError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TrendError::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendClass {
    Increasing,
    Decreasing,
    NoTrend,
}

impl TrendClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrendClass::Increasing => "increasing",
            TrendClass::Decreasing => "decreasing",
            TrendClass::NoTrend => "no_trend",
        }
    }

    pub fn classify(z: f64, p: f64, alpha: f64) -> Self {
        if p < alpha && z > 0.0 {
            TrendClass::Increasing
        } else if p < alpha && z < 0.0 {
            TrendClass::Decreasing
        } else {
            TrendClass::NoTrend
        }
    }
}

impl fmt::Display for TrendClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrendClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "increasing" => Ok(TrendClass::Increasing),
            "decreasing" => Ok(TrendClass::Decreasing),
            "no_trend" => Ok(TrendClass::NoTrend),
            other => Err(format!("unknown trend class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannKendallResult {
    pub n: usize,
    #[serde(rename = "S")]
    pub s: i64,
    /// Tie-corrected variance of S, already multiplied by
    /// `correction_factor`.
    pub var_s: f64,
    pub correction_factor: f64,
    pub z: f64,
    pub p: f64,
    /// Theil-Sen slope in counts per year.
    pub slope: f64,
    #[serde(rename = "trend")]
    pub trend_class: TrendClass,
}

fn check_finite(series: &[f64]) -> Result<(), TrendError> {
    if series.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TrendError::NonFinite)
    }
}

/// Σ_{i<j} sign(x_j − x_i).
pub fn kendall_s(series: &[f64]) -> i64 {
    let mut s = 0i64;
    for (i, &a) in series.iter().enumerate() {
        for &b in &series[i + 1..] {
            s += match b.partial_cmp(&a) {
                Some(Ordering::Greater) => 1,
                Some(Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

/// Sizes of the groups of exactly equal values, including singletons.
pub fn tie_groups(series: &[f64]) -> Vec<usize> {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        groups.push(j);
        i += j;
    }
    groups
}

/// Null variance of S with the tie correction.
pub fn tie_corrected_variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let ties: f64 = tie_groups(series)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * (t - 1.0) * (2.0 * t + 5.0)
        })
        .sum();
    (n * (n - 1.0) * (2.0 * n + 5.0) - ties) / 18.0
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(series: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]));
    let mut ranks = vec![0.0; series.len()];
    let mut i = 0;
    while i < order.len() {
        let v = series[order[i]];
        let j = i + order[i..].iter().take_while(|&&k| series[k] == v).count();
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Rank autocorrelations ρ_1 ..= ρ_{n−1}; element `k − 1` holds lag `k`.
/// A constant series has zero rank variance and gets all zeros.
fn rank_acf(series: &[f64]) -> Vec<f64> {
    let ranks = average_ranks(series);
    let n = ranks.len();
    let mean = ranks.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = ranks.iter().map(|r| r - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    (1..n)
        .map(|k| {
            if denom == 0.0 {
                return 0.0;
            }
            dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
        })
        .collect()
}

/// Lag-`k` autocorrelation of the average ranks of `series`.
pub fn rank_autocorrelation(series: &[f64], k: usize) -> Result<f64, TrendError> {
    let n = series.len();
    if k == 0 || k >= n {
        return Err(TrendError::LagOutOfRange { k, n });
    }
    check_finite(series)?;
    Ok(rank_acf(series)[k - 1])
}

/// The Hamed-Rao factor n/n* from precomputed rank autocorrelations
/// (`acf[k - 1]` is lag `k`). Lags beyond `acf.len()` count as zero.
pub fn hamed_rao_factor_from_acf(n: usize, acf: &[f64], lags: LagSelection, alpha: f64) -> f64 {
    let nf = n as f64;
    let bound = match lags {
        LagSelection::All => None,
        LagSelection::Significant => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            Some(normal.inverse_cdf(1.0 - alpha / 2.0) / nf.sqrt())
        }
    };
    let mut sum = 0.0;
    for k in 1..n.saturating_sub(2) {
        let Some(&rho) = acf.get(k - 1) else { break };
        if bound.is_some_and(|b| rho.abs() <= b) {
            continue;
        }
        let m = (n - k) as f64;
        sum += m * (m - 1.0) * (m - 2.0) * rho;
    }
    let factor = 1.0 + 2.0 / (nf * (nf - 1.0) * (nf - 2.0)) * sum;
    factor.max(MIN_CORRECTION_FACTOR)
}

/// Variance correction factor for serially correlated data.
pub fn hamed_rao_factor(
    series: &[f64],
    lags: LagSelection,
    alpha: f64,
    detrend: bool,
) -> Result<f64, TrendError> {
    let n = series.len();
    if n < MIN_TEST_LEN {
        return Err(TrendError::InsufficientData {
            n,
            required: MIN_TEST_LEN,
        });
    }
    check_finite(series)?;
    let acf = if detrend {
        let slope = theil_sen(series)?;
        let residual: Vec<f64> = series
            .iter()
            .enumerate()
            .map(|(t, x)| x - slope * t as f64)
            .collect();
        rank_acf(&residual)
    } else {
        rank_acf(series)
    };
    Ok(hamed_rao_factor_from_acf(n, &acf, lags, alpha))
}

/// Median of the pairwise slopes (x_j − x_i)/(j − i) on a unit-spaced axis.
pub fn theil_sen(series: &[f64]) -> Result<f64, TrendError> {
    let n = series.len();
    if n < 2 {
        return Err(TrendError::InsufficientData { n, required: 2 });
    }
    check_finite(series)?;
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            slopes.push((series[j] - series[i]) / (j - i) as f64);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    Ok(if m % 2 == 1 {
        slopes[m / 2]
    } else {
        (slopes[m / 2 - 1] + slopes[m / 2]) / 2.0
    })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Mann-Kendall test with the configured variance correction and the
/// Theil-Sen slope filled in.
///
/// A fully tied series has zero variance and is reported as `z = 0`,
/// `p = 1`, no trend.
pub fn mann_kendall(series: &[f64], config: &TrendConfig) -> Result<MannKendallResult, TrendError> {
    config.validate()?;
    let n = series.len();
    if n < MIN_TEST_LEN {
        return Err(TrendError::InsufficientData {
            n,
            required: MIN_TEST_LEN,
        });
    }
    check_finite(series)?;

    let s = kendall_s(series);
    let base_var = tie_corrected_variance(series);
    let correction_factor = match config.correction.lag_selection() {
        None => 1.0,
        Some(lags) => hamed_rao_factor(series, lags, config.alpha, config.detrend)?,
    };
    let var_s = base_var * correction_factor;
    let slope = theil_sen(series)?;

    if base_var <= 0.0 {
        return Ok(MannKendallResult {
            n,
            s,
            var_s: 0.0,
            correction_factor,
            z: 0.0,
            p: 1.0,
            slope,
            trend_class: TrendClass::NoTrend,
        });
    }
    let sd = var_s.sqrt();
    let z = match s.cmp(&0) {
        Ordering::Greater => (s - 1) as f64 / sd,
        Ordering::Less => (s + 1) as f64 / sd,
        Ordering::Equal => 0.0,
    };
    let p = two_sided_p(z);
    Ok(MannKendallResult {
        n,
        s,
        var_s,
        correction_factor,
        z,
        p,
        slope,
        trend_class: TrendClass::classify(z, p, config.alpha),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReportRow {
    pub topic: String,
    #[serde(flatten)]
    pub result: MannKendallResult,
    pub hot: bool,
}

/// Rank increasing topics by slope and mark the hot ones.
///
/// Only `Increasing` results are kept. They are ordered by slope
/// descending, then z descending, then topic name, truncated to `top_k`,
/// and a row is hot when its slope is strictly above the mean slope of the
/// kept rows.
pub fn classify_and_rank(rows: Vec<(String, MannKendallResult)>, top_k: usize) -> Vec<TrendReportRow> {
    let mut kept: Vec<_> = rows
        .into_iter()
        .filter(|(_, r)| r.trend_class == TrendClass::Increasing)
        .collect();
    kept.sort_by(|(ta, a), (tb, b)| {
        b.slope
            .total_cmp(&a.slope)
            .then(b.z.total_cmp(&a.z))
            .then(ta.cmp(tb))
    });
    kept.truncate(top_k);
    if kept.is_empty() {
        return Vec::new();
    }
    let mean = mean_slope(kept.iter().map(|(_, r)| r.slope));
    kept.into_iter()
        .map(|(topic, result)| TrendReportRow {
            hot: result.slope > mean,
            topic,
            result,
        })
        .collect()
}

pub fn mean_slope(slopes: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = slopes.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Results of testing every topic of a series set.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicTrends {
    pub results: Vec<(String, MannKendallResult)>,
    /// Topics whose series were too short to test.
    pub untestable: Vec<String>,
}

/// Run [`mann_kendall`] over the document-frequency series of every topic.
/// Output order follows the input order.
pub fn test_topics(topics: &[TopicYearSeries], config: &TrendConfig) -> Result<TopicTrends, TrendError> {
    config.validate()?;
    let outcomes: Vec<_> = topics
        .par_iter()
        .map(|t| (t.topic.clone(), mann_kendall(&t.counts_f64(), config)))
        .collect();
    let mut out = TopicTrends {
        results: Vec::new(),
        untestable: Vec::new(),
    };
    for (topic, r) in outcomes {
        match r {
            Ok(r) => out.results.push((topic, r)),
            Err(TrendError::InsufficientData { .. }) => out.untestable.push(topic),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
