//! Statistics for the reader study: paired t, repeated-measures ANOVA,
//! Kendall's W, sample size, and descriptive summaries.

mod concordance;
mod descriptive;
mod inference;
mod power;
pub mod special;

use thiserror::Error;

pub use concordance::{kendalls_w, KendallW};
pub use descriptive::{
    percent_reduction, preference_majority, render_percent, summarize, PreferenceOutcome, Summary,
};
pub use inference::{paired_t, rm_anova, PairedSample, PairedT, RmAnova};
pub use power::{paired_t_power, power_paired_n};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("matrix row {row} has {found} cells, expected {expected}")]
    RaggedMatrix {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("case {case} has an abstention")]
    Abstention { case: usize },
    #[error("case {case} has {found} votes, expected {expected}")]
    VoteCount {
        case: usize,
        found: usize,
        expected: usize,
    },
    #[error("every rater tied all items; concordance is undefined")]
    AllTied,
}

/// A complete rows × columns matrix of scores.
///
/// For Kendall's W rows are raters and columns items; for repeated-measures
/// ANOVA rows are subjects and columns conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let expected = rows.first().map_or(0, Vec::len);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != expected {
                return Err(StatsError::RaggedMatrix {
                    row: r,
                    found: row.len(),
                    expected,
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { row: r, col: c });
            }
        }
        Ok(RatingMatrix { rows })
    }

    /// Builds from columns, e.g. one vector per condition.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self, StatsError> {
        let n = cols.first().map_or(0, Vec::len);
        for c in cols {
            if c.len() != n {
                return Err(StatsError::LengthMismatch(n, c.len()));
            }
        }
        Self::new(
            (0..n)
                .map(|i| cols.iter().map(|c| c[i]).collect())
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rejected() {
        assert!(matches!(
            RatingMatrix::new(vec![vec![1.0, 2.0], vec![1.0]]),
            Err(StatsError::RaggedMatrix { row: 1, .. })
        ));
        assert!(matches!(
            RatingMatrix::new(vec![vec![1.0, f64::NAN]]),
            Err(StatsError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn columns_transpose() {
        let m = RatingMatrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.rows()[2], vec![3.0, 6.0]);
        assert_eq!((m.n_rows(), m.n_cols()), (3, 2));
    }
}
