use cxrkit_core::stats::{
    kendalls_w, paired_t, power_paired_n, rm_anova, PairedSample, RatingMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[test]
fn ci_from_summary_statistics() {
    // Build 296 differences with exactly mean 0.25 and sd 0.294.
    let n = 296;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let m = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let diffs: Vec<f64> = raw.iter().map(|x| 0.25 + 0.294 * (x - m) / sd).collect();
    let s = PairedSample::new("ai", diffs, "standard", vec![0.0; n]).unwrap();
    let r = paired_t(&s, 0.05).unwrap();
    assert!((r.mean_diff - 0.25).abs() < 1e-12);
    assert!((r.sd_diff - 0.294).abs() < 1e-12);
    // Oracle: statrs quantile times the standard error.
    let tq = StudentsT::new(0.0, 1.0, 295.0).unwrap().inverse_cdf(0.975);
    let half = tq * 0.294 / (296f64).sqrt();
    assert!((r.ci_low - (0.25 - half)).abs() < 1e-10);
    assert!((r.ci_high - (0.25 + half)).abs() < 1e-10);
    assert!((r.ci_low - 0.216).abs() <= 0.001);
    assert!((r.ci_high - 0.284).abs() <= 0.001);
}

#[test]
fn paired_t_matches_statrs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..200 {
        let n = rng.random_range(2..50);
        let a: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng) + 0.3).collect();
        let r = paired_t(
            &PairedSample::new("a", a.clone(), "b", b.clone()).unwrap(),
            0.05,
        )
        .unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = mean / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let p = 2.0 * dist.sf(t.abs());
        assert!((r.t.unwrap() - t).abs() < 1e-9 * t.abs().max(1.0));
        assert!((r.p.unwrap() - p).abs() < 1e-10);
    }
}

#[test]
fn anova_equals_t_squared_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let t = paired_t(
            &PairedSample::new("a", a.clone(), "b", b.clone()).unwrap(),
            0.05,
        )
        .unwrap()
        .t
        .unwrap();
        let f = rm_anova(&RatingMatrix::from_columns(&[a, b]).unwrap())
            .unwrap()
            .f
            .unwrap();
        assert!((f - t * t).abs() < 1e-9 * f.max(1.0));
    }
}

#[test]
fn kendall_fixtures() {
    let w = |rows: Vec<Vec<f64>>| kendalls_w(&RatingMatrix::new(rows).unwrap()).unwrap().w;
    assert_eq!(w(vec![vec![1.0, 2.0, 3.0]; 3]), 1.0);
    let mixed = w(vec![
        vec![1.0, 2.0, 3.0],
        vec![1.0, 2.0, 3.0],
        vec![3.0, 2.0, 1.0],
    ]);
    assert!((mixed - 0.111).abs() < 0.0005);
    assert_eq!(w(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]), 0.0);
}

/// Rejection rate of the two-sided paired t-test at the computed n.
fn simulated_power(n: usize, dz: f64, reps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(dz, 1.0).unwrap();
    let crit = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .unwrap()
        .inverse_cdf(0.975);
    let mut hits = 0;
    for _ in 0..reps {
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n {
            let x = dist.sample(&mut rng);
            s += x;
            ss += x * x;
        }
        let mean = s / n as f64;
        let var = (ss - n as f64 * mean * mean) / (n - 1) as f64;
        if (mean / (var / n as f64).sqrt()).abs() > crit {
            hits += 1;
        }
    }
    hits as f64 / reps as f64
}

#[test]
fn computed_sample_size_achieves_target_power() {
    let n = power_paired_n(0.2, 0.05, 0.90).unwrap();
    assert_eq!(n, 265);
    let power = simulated_power(n, 0.2, 10_000, 2024);
    assert!((power - 0.90).abs() <= 0.02, "simulated power {power}");
}
