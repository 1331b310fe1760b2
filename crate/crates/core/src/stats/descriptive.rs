use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{mean, sample_sd, StatsError};

/// `100 * (baseline - treated) / baseline`.
pub fn percent_reduction(baseline: f64, treated: f64) -> Result<f64, StatsError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(StatsError::NonPositiveBaseline(baseline));
    }
    Ok(100.0 * (baseline - treated) / baseline)
}

/// One-decimal percentage, e.g. `18.3%`.
pub fn render_percent(value: f64) -> String {
    format!("{value:.1}%")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample SD (n - 1 denominator); 0 for a single value.
    pub sd: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}±{:.2}", self.mean, self.sd)
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFewObservations {
            needed: 1,
            found: 0,
        });
    }
    Ok(Summary {
        n: values.len(),
        mean: mean(values),
        sd: sample_sd(values),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceOutcome<T: Ord> {
    /// Option reaching the threshold on each case, if any.
    pub per_case_winner: Vec<Option<T>>,
    /// Share of cases won by each option that received any vote.
    pub proportion_preferring_each: BTreeMap<T, f64>,
}

/// Majority aggregation of per-case rater choices. `None` marks an
/// abstention, which is rejected.
pub fn preference_majority<T: Ord + Clone>(
    votes: &[Vec<Option<T>>],
    threshold: usize,
) -> Result<PreferenceOutcome<T>, StatsError> {
    let Some(first) = votes.first() else {
        return Err(StatsError::TooFewObservations {
            needed: 1,
            found: 0,
        });
    };
    let raters = first.len();
    if threshold == 0 || threshold > raters {
        return Err(StatsError::InvalidParameter(format!(
            "threshold {threshold} with {raters} raters"
        )));
    }
    let mut wins: BTreeMap<T, usize> = BTreeMap::new();
    let mut per_case_winner = Vec::with_capacity(votes.len());
    for (case, case_votes) in votes.iter().enumerate() {
        if case_votes.len() != raters {
            return Err(StatsError::VoteCount {
                case,
                found: case_votes.len(),
                expected: raters,
            });
        }
        let mut tally: BTreeMap<T, usize> = BTreeMap::new();
        for v in case_votes {
            let choice = v.as_ref().ok_or(StatsError::Abstention { case })?;
            *tally.entry(choice.clone()).or_default() += 1;
            wins.entry(choice.clone()).or_default();
        }
        // With threshold <= raters/2 two options could both qualify; the
        // larger count wins and an exact tie has no winner.
        let mut best: Option<(&T, usize)> = None;
        let mut tied = false;
        for (opt, &count) in &tally {
            if count < threshold {
                continue;
            }
            match best {
                Some((_, c)) if count == c => tied = true,
                Some((_, c)) if count < c => {}
                _ => {
                    best = Some((opt, count));
                    tied = false;
                }
            }
        }
        let winner = if tied {
            None
        } else {
            best.map(|(o, _)| o.clone())
        };
        if let Some(w) = &winner {
            *wins.get_mut(w).expect("tallied") += 1;
        }
        per_case_winner.push(winner);
    }
    let n = votes.len() as f64;
    Ok(PreferenceOutcome {
        per_case_winner,
        proportion_preferring_each: wins.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
    })
}
