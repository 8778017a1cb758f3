//! Two-state burst detection over batched counts.
//!
//! Each year contributes `r` relevant documents out of `d`. A hidden
//! automaton is either in the base state, emitting at the corpus-wide rate
//! `p0 = Σr / Σd`, or in the burst state with rate `p1 = min(s·p0, cap)`.
//! A state's cost for a year is the negative binomial log-likelihood of
//! that year's batch (without the binomial coefficient, which is the same
//! in both states). Entering the burst state costs `gamma · ln T`; leaving
//! it is free. The cheapest state sequence is found by dynamic programming
//! and maximal runs of the burst state become [`BurstInterval`]s.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::SeriesSet;

/// Default number of topics kept by [`burst_table`].
pub const DEFAULT_TOP_N: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum BurstError {
    #[error("empty series")]
    EmptySeries,
    #[error("counts and totals differ in length ({counts} vs {totals})")]
    LengthMismatch { counts: usize, totals: usize },
    #[error("count {count} exceeds total {total} at index {index}")]
    CountExceedsTotal { index: usize, count: u64, total: u64 },
    #[error("all batch totals are zero")]
    NoDocuments,
    #[error("invalid burst parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstParams {
    /// Ratio between the burst rate and the base rate.
    pub s: f64,
    /// Scale of the cost of entering the burst state.
    pub gamma: f64,
    /// Upper bound on the burst rate.
    pub p1_cap: f64,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            s: 2.0,
            gamma: 1.0,
            p1_cap: 0.9999,
        }
    }
}

impl BurstParams {
    pub fn validate(&self) -> Result<(), BurstError> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(BurstError::InvalidParams(format!("s = {} must be > 1", self.s)));
        }
        if !(self.gamma >= 0.0) {
            return Err(BurstError::InvalidParams(format!(
                "gamma = {} must be >= 0",
                self.gamma
            )));
        }
        if !(self.p1_cap > 0.0 && self.p1_cap < 1.0) {
            return Err(BurstError::InvalidParams(format!(
                "p1_cap = {} must lie in (0, 1)",
                self.p1_cap
            )));
        }
        Ok(())
    }
}

/// Per-batch costs of both states plus the model rates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCosts {
    pub p0: f64,
    pub p1: f64,
    /// `costs[t][state]`
    pub costs: Vec<[f64; 2]>,
    /// Cost of moving from the base state to the burst state.
    pub up_cost: f64,
}

fn xlny(x: u64, y: f64) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * y.ln()
    }
}

/// Negative log-likelihood of `r` successes in `d` trials at rate `p`,
/// without the binomial coefficient.
pub fn batch_cost(r: u64, d: u64, p: f64) -> f64 {
    -(xlny(r, p) + xlny(d - r, 1.0 - p))
}

pub fn state_costs(counts: &[u64], totals: &[u64], params: &BurstParams) -> Result<StateCosts, BurstError> {
    params.validate()?;
    if counts.len() != totals.len() {
        return Err(BurstError::LengthMismatch {
            counts: counts.len(),
            totals: totals.len(),
        });
    }
    if counts.is_empty() {
        return Err(BurstError::EmptySeries);
    }
    for (index, (&count, &total)) in counts.iter().zip(totals).enumerate() {
        if count > total {
            return Err(BurstError::CountExceedsTotal { index, count, total });
        }
    }
    let r_sum: u64 = counts.iter().sum();
    let d_sum: u64 = totals.iter().sum();
    if d_sum == 0 {
        return Err(BurstError::NoDocuments);
    }
    let p0 = r_sum as f64 / d_sum as f64;
    let p1 = (params.s * p0).min(params.p1_cap);
    let costs = counts
        .iter()
        .zip(totals)
        .map(|(&r, &d)| [batch_cost(r, d, p0), batch_cost(r, d, p1)])
        .collect();
    Ok(StateCosts {
        p0,
        p1,
        costs,
        up_cost: params.gamma * (counts.len() as f64).ln(),
    })
}

/// The cheapest state sequence (`true` = burst state).
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub states: Vec<bool>,
    pub cost: f64,
}

/// Minimum-cost state sequence, starting from the base state.
///
/// Ties prefer the base state, resolved from the last batch backwards:
/// among all optimal sequences this returns the one that is in the base
/// state as late as possible, then as late as possible before that, and so
/// on.
pub fn optimal_states(costs: &StateCosts) -> StatePath {
    let n = costs.costs.len();
    let mut back: Vec<[bool; 2]> = Vec::with_capacity(n);
    let (mut d0, mut d1) = (0.0f64, f64::INFINITY);
    for &[c0, c1] in &costs.costs {
        // Into base: from base (free) or from burst (free).
        let from1_to0 = d0 > d1;
        let to0 = if from1_to0 { d1 } else { d0 } + c0;
        // Into burst: from base (pay up_cost) or stay.
        let enter = d0 + costs.up_cost;
        let from1_to1 = enter > d1;
        let to1 = if from1_to1 { d1 } else { enter } + c1;
        back.push([from1_to0, from1_to1]);
        d0 = to0;
        d1 = to1;
    }
    let mut states = vec![false; n];
    let mut state = d0 > d1;
    let cost = if state { d1 } else { d0 };
    for t in (0..n).rev() {
        states[t] = state;
        state = back[t][state as usize];
    }
    StatePath { states, cost }
}

/// A run of burst-state batches, by index, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstRun {
    pub start: usize,
    pub end: usize,
    /// Σ over the run of (base-state cost − burst-state cost).
    pub weight: f64,
}

/// Detect bursts in one series of `(count, total)` batches.
///
/// Batches with a zero total cost nothing in either state; they never
/// begin or end a run. Only runs with strictly positive weight are
/// returned.
pub fn detect_bursts(counts: &[u64], totals: &[u64], params: &BurstParams) -> Result<Vec<BurstRun>, BurstError> {
    let costs = state_costs(counts, totals, params)?;
    let path = optimal_states(&costs);
    let mut runs = Vec::new();
    let mut t = 0;
    while t < path.states.len() {
        if !path.states[t] {
            t += 1;
            continue;
        }
        let mut end = t;
        while end + 1 < path.states.len() && path.states[end + 1] {
            end += 1;
        }
        let (mut lo, mut hi) = (t, end);
        while lo < hi && totals[lo] == 0 {
            lo += 1;
        }
        while hi > lo && totals[hi] == 0 {
            hi -= 1;
        }
        let weight: f64 = costs.costs[lo..=hi].iter().map(|[c0, c1]| c0 - c1).sum();
        if totals[lo] > 0 && weight > 0.0 {
            runs.push(BurstRun {
                start: lo,
                end: hi,
                weight,
            });
        }
        t = end + 1;
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstInterval {
    pub topic: String,
    pub start_year: i32,
    pub end_year: i32,
    pub weight: f64,
}

/// Burst intervals for every topic of `set`.
///
/// With `top_n`, only the topics with the largest total burst weight are
/// kept. Intervals are ordered by start year, then weight descending, then
/// topic name.
pub fn burst_table(
    set: &SeriesSet,
    params: &BurstParams,
    top_n: Option<usize>,
) -> Result<Vec<BurstInterval>, BurstError> {
    params.validate()?;
    let totals = &set.totals;
    let per_topic: Vec<(String, Vec<BurstRun>)> = set
        .topics
        .par_iter()
        .map(|s| Ok((s.topic.clone(), detect_bursts(&s.counts, &totals.totals, params)?)))
        .collect::<Result<_, BurstError>>()?;

    let mut bursting: Vec<(String, Vec<BurstRun>, f64)> = per_topic
        .into_iter()
        .filter(|(_, runs)| !runs.is_empty())
        .map(|(t, runs)| {
            let total = runs.iter().map(|r| r.weight).sum();
            (t, runs, total)
        })
        .collect();
    if let Some(n) = top_n {
        bursting.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        bursting.truncate(n);
    }

    let mut out: Vec<BurstInterval> = bursting
        .into_iter()
        .flat_map(|(topic, runs, _)| {
            runs.into_iter().map(move |r| BurstInterval {
                topic: topic.clone(),
                start_year: totals.year_at(r.start),
                end_year: totals.year_at(r.end),
                weight: r.weight,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.start_year
            .cmp(&b.start_year)
            .then(b.weight.total_cmp(&a.weight))
            .then(a.topic.cmp(&b.topic))
    });
    Ok(out)
}
