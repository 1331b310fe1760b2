use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use super::{RatingMatrix, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KendallW {
    pub w: f64,
    pub raters: usize,
    pub items: usize,
    /// Friedman-style chi-square m(n-1)W with n-1 degrees of freedom.
    pub chi_square: f64,
    pub p: f64,
}

/// Mid-ranks (1-based) of `xs`.
pub(crate) fn mid_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sum over tie groups of (t^3 - t).
fn tie_term(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Kendall's coefficient of concordance; rows are raters, columns items.
pub fn kendalls_w(matrix: &RatingMatrix) -> Result<KendallW, StatsError> {
    let m = matrix.n_rows();
    let n = matrix.n_cols();
    if m < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            found: m,
        });
    }
    if n < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            found: n,
        });
    }
    let mut rank_sums = vec![0.0; n];
    let mut ties = 0.0;
    for row in matrix.rows() {
        for (s, r) in rank_sums.iter_mut().zip(mid_ranks(row)) {
            *s += r;
        }
        ties += tie_term(row);
    }
    let (mf, nf) = (m as f64, n as f64);
    let mean_sum = mf * (nf + 1.0) / 2.0;
    let s: f64 = rank_sums.iter().map(|r| (r - mean_sum).powi(2)).sum();
    let denom = mf * mf * (nf.powi(3) - nf) - mf * ties;
    if denom <= 0.0 {
        return Err(StatsError::AllTied);
    }
    let w = (12.0 * s / denom).clamp(0.0, 1.0);
    let chi_square = mf * (nf - 1.0) * w;
    Ok(KendallW {
        w,
        raters: m,
        items: n,
        chi_square,
        p: chi_square_sf(chi_square, nf - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(rows: Vec<Vec<f64>>) -> f64 {
        kendalls_w(&RatingMatrix::new(rows).unwrap()).unwrap().w
    }

    #[test]
    fn fixtures() {
        assert!((w(vec![vec![1.0, 2.0, 3.0]; 4]) - 1.0).abs() < 1e-12);
        let mixed = w(vec![
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0],
            vec![3.0, 2.0, 1.0],
        ]);
        assert!((mixed - 1.0 / 9.0).abs() < 1e-12);
        assert!(w(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_for_ties() {
        assert_eq!(mid_ranks(&[5.0, 3.0, 5.0, 1.0]), vec![3.5, 2.0, 3.5, 1.0]);
    }

    #[test]
    fn tied_agreement_is_perfect() {
        // Identical ratings with ties: the correction keeps W at 1.
        let row = vec![4.0, 4.0, 5.0, 3.0, 5.0];
        assert!((w(vec![row.clone(), row.clone(), row]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let one_item = RatingMatrix::new(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(kendalls_w(&one_item).is_err());
        let all_tied = RatingMatrix::new(vec![vec![3.0, 3.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(kendalls_w(&all_tied).unwrap_err(), StatsError::AllTied);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..6, 2usize..10).prop_flat_map(|(m, n)| {
            prop::collection::vec(prop::collection::vec(1u8..6, n), m).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| r.into_iter().map(f64::from).collect())
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn bounded_and_rank_invariant(rows in matrix()) {
            let Ok(base) = kendalls_w(&RatingMatrix::new(rows.clone()).unwrap()) else {
                return Ok(());
            };
            prop_assert!((0.0..=1.0).contains(&base.w));
            let transformed: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|x| x.powi(3) * 2.0 + 1.0).collect())
                .collect();
            let t = kendalls_w(&RatingMatrix::new(transformed).unwrap()).unwrap();
            prop_assert!((base.w - t.w).abs() < 1e-12);
        }
    }
}
