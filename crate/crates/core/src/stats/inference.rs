use serde::Serialize;

use super::special::{f_sf, t_quantile, t_two_sided_p};
use super::{mean, sample_sd, RatingMatrix, StatsError};

/// Per-case values under two conditions, paired by index.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub label_a: String,
    pub label_b: String,
}

impl PairedSample {
    pub fn new(
        label_a: impl Into<String>,
        values_a: Vec<f64>,
        label_b: impl Into<String>,
        values_b: Vec<f64>,
    ) -> Result<Self, StatsError> {
        if values_a.len() != values_b.len() {
            return Err(StatsError::LengthMismatch(values_a.len(), values_b.len()));
        }
        if values_a.len() < 2 {
            return Err(StatsError::TooFewObservations {
                needed: 2,
                found: values_a.len(),
            });
        }
        for (col, vals) in [&values_a, &values_b].into_iter().enumerate() {
            if let Some(row) = vals.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { row, col });
            }
        }
        Ok(PairedSample {
            values_a,
            values_b,
            label_a: label_a.into(),
            label_b: label_b.into(),
        })
    }

    pub fn swapped(&self) -> Self {
        PairedSample {
            values_a: self.values_b.clone(),
            values_b: self.values_a.clone(),
            label_a: self.label_b.clone(),
            label_b: self.label_a.clone(),
        }
    }

    pub fn differences(&self) -> Vec<f64> {
        self.values_a
            .iter()
            .zip(&self.values_b)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Paired t-test on `a - b`.
///
/// When every difference is identical the statistic is undefined: `t` is
/// `None`, and `p` is 1 if the differences are all zero and `None` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedT {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub se: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p: Option<f64>,
    pub alpha: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn paired_t(sample: &PairedSample, alpha: f64) -> Result<PairedT, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidParameter(format!("alpha {alpha}")));
    }
    let d = sample.differences();
    let n = d.len();
    let df = n - 1;
    let mean_diff = mean(&d);
    let sd_diff = sample_sd(&d);
    let se = sd_diff / (n as f64).sqrt();
    let constant = d.iter().all(|x| *x == d[0]);
    let (t, p) = if constant {
        (None, (mean_diff == 0.0).then_some(1.0))
    } else {
        let t = mean_diff / se;
        (Some(t), Some(t_two_sided_p(t, df as f64)))
    };
    let half = t_quantile(1.0 - alpha / 2.0, df as f64) * se;
    Ok(PairedT {
        n,
        mean_diff,
        sd_diff,
        se,
        t,
        df,
        p,
        alpha,
        ci_low: mean_diff - half,
        ci_high: mean_diff + half,
    })
}

/// One-way repeated-measures ANOVA; no sphericity correction is applied.
///
/// `f` and `p` are `None` when the error sum of squares is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmAnova {
    pub f: Option<f64>,
    pub df_between: usize,
    pub df_error: usize,
    pub p: Option<f64>,
    pub ss_conditions: f64,
    pub ss_subjects: f64,
    pub ss_error: f64,
    pub sphericity_correction: &'static str,
}

/// Rows are subjects, columns conditions.
pub fn rm_anova(matrix: &RatingMatrix) -> Result<RmAnova, StatsError> {
    let n = matrix.n_rows();
    let k = matrix.n_cols();
    if n < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            found: n,
        });
    }
    if k < 2 {
        return Err(StatsError::InvalidParameter(format!(
            "need at least 2 conditions, got {k}"
        )));
    }
    let rows = matrix.rows();
    let grand = rows.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = rows.iter().map(|r| mean(r)).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();

    let ss_conditions = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_subjects = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            ss_error += (x - row_means[i] - col_means[j] + grand).powi(2);
        }
    }

    let df_between = k - 1;
    let df_error = (k - 1) * (n - 1);
    let scale = ss_conditions + ss_subjects + ss_error;
    let degenerate = ss_error <= 1e-24 * scale;
    let (f, p) = if degenerate {
        (None, None)
    } else {
        let f = (ss_conditions / df_between as f64) / (ss_error / df_error as f64);
        (Some(f), Some(f_sf(f, df_between as f64, df_error as f64)))
    };
    Ok(RmAnova {
        f,
        df_between,
        df_error,
        p,
        ss_conditions,
        ss_subjects,
        ss_error,
        sphericity_correction: "none",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(a: &[f64], b: &[f64]) -> PairedSample {
        PairedSample::new("a", a.to_vec(), "b", b.to_vec()).unwrap()
    }

    #[test]
    fn identical_arms() {
        let r = paired_t(&sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.05).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert_eq!(r.t, None);
        assert_eq!(r.p, Some(1.0));
    }

    #[test]
    fn constant_nonzero_difference() {
        let r = paired_t(&sample(&[2.0, 3.0], &[1.0, 2.0]), 0.05).unwrap();
        assert_eq!((r.t, r.p), (None, None));
        assert_eq!((r.ci_low, r.ci_high), (1.0, 1.0));
    }

    #[test]
    fn hand_computed_t() {
        // diffs {1,1,2}: mean 4/3, sd 0.577, se 1/3
        let r = paired_t(&sample(&[2.0, 3.0, 5.0], &[1.0, 2.0, 3.0]), 0.05).unwrap();
        assert!((r.t.unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.sd_diff - 0.57735).abs() < 1e-5);
        assert!((r.se - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PairedSample::new("a", vec![1.0], "b", vec![1.0]).is_err());
        assert!(PairedSample::new("a", vec![1.0, 2.0], "b", vec![1.0]).is_err());
        assert!(paired_t(&sample(&[1.0, 2.0], &[0.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn anova_fixture() {
        let m = RatingMatrix::new(vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 5.0]]).unwrap();
        let r = rm_anova(&m).unwrap();
        assert!((r.f.unwrap() - 16.0).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_error), (1, 2));
    }

    #[test]
    fn anova_all_equal_is_degenerate() {
        let m = RatingMatrix::new(vec![vec![3.0; 3]; 4]).unwrap();
        let r = rm_anova(&m).unwrap();
        assert_eq!((r.f, r.p), (None, None));
    }

    #[test]
    fn anova_three_conditions_by_hand() {
        let m = RatingMatrix::new(vec![
            vec![1.0, 2.0, 4.0],
            vec![2.0, 2.0, 3.0],
            vec![3.0, 5.0, 5.0],
        ])
        .unwrap();
        let r = rm_anova(&m).unwrap();
        // grand 3; cond means 2, 3, 4 -> SS_c = 3*(1+0+1) = 6
        // subj means 7/3, 7/3, 13/3 -> SS_s = 3*(4/9+4/9+16/9) = 8
        // SS_total = 4+1+1+1+1+0+0+4+4 = 16 -> SS_e = 2
        assert!((r.ss_conditions - 6.0).abs() < 1e-12);
        assert!((r.ss_subjects - 8.0).abs() < 1e-12);
        assert!((r.ss_error - 2.0).abs() < 1e-12);
        assert!((r.f.unwrap() - 6.0).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_error), (2, 4));
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..60)
            .prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn antisymmetry((a, b) in pairs()) {
            let s = PairedSample::new("a", a, "b", b).unwrap();
            let x = paired_t(&s, 0.05).unwrap();
            let y = paired_t(&s.swapped(), 0.05).unwrap();
            prop_assert!((x.mean_diff + y.mean_diff).abs() < 1e-9);
            match (x.t, y.t) {
                (Some(tx), Some(ty)) => prop_assert!((tx + ty).abs() < 1e-9 * tx.abs().max(1.0)),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
            prop_assert_eq!(x.p.map(|p| (p * 1e9).round()), y.p.map(|p| (p * 1e9).round()));
            let wx = x.ci_high - x.ci_low;
            let wy = y.ci_high - y.ci_low;
            prop_assert!((wx - wy).abs() < 1e-9);
        }

        #[test]
        fn anova_two_conditions_is_t_squared((a, b) in pairs()) {
            let s = PairedSample::new("a", a.clone(), "b", b.clone()).unwrap();
            let t = paired_t(&s, 0.05).unwrap().t;
            let m = RatingMatrix::from_columns(&[a, b]).unwrap();
            let r = rm_anova(&m).unwrap();
            if let (Some(t), Some(f)) = (t, r.f) {
                prop_assert!((f - t * t).abs() <= 1e-9 * f.max(1.0));
                let p = paired_t(&s, 0.05).unwrap().p.unwrap();
                prop_assert!((r.p.unwrap() - p).abs() < 1e-9);
            }
        }
    }
}
