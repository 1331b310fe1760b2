use super::special::{normal_cdf, normal_quantile, t_quantile};
use super::StatsError;

fn required(n: usize, dz: f64, alpha: f64, power: f64) -> f64 {
    let df = (n - 1) as f64;
    let q = t_quantile(1.0 - alpha / 2.0, df) + t_quantile(power, df);
    (q / dz).powi(2)
}

/// Sample size for a two-sided paired t-test with standardized effect `dz`.
///
/// Starts from the normal approximation `((z_{1-a/2} + z_power) / dz)^2` and
/// moves to the smallest n >= 2 satisfying the same relation with t quantiles
/// at n - 1 degrees of freedom.
pub fn power_paired_n(effect_dz: f64, alpha: f64, power: f64) -> Result<usize, StatsError> {
    if !(effect_dz > 0.0 && effect_dz.is_finite()) {
        return Err(StatsError::InvalidParameter(format!(
            "effect size {effect_dz}"
        )));
    }
    for (name, v) in [("alpha", alpha), ("power", power)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(StatsError::InvalidParameter(format!("{name} {v}")));
        }
    }
    let z = (normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power)) / effect_dz;
    let mut n = (z * z).ceil().max(2.0) as usize;
    while (n as f64) < required(n, effect_dz, alpha, power) {
        n += 1;
    }
    while n > 2 && ((n - 1) as f64) >= required(n - 1, effect_dz, alpha, power) {
        n -= 1;
    }
    Ok(n)
}

/// Approximate power of the two-sided paired t-test at sample size `n`.
pub fn paired_t_power(n: usize, effect_dz: f64, alpha: f64) -> f64 {
    let df = (n.max(2) - 1) as f64;
    let crit = t_quantile(1.0 - alpha / 2.0, df);
    let shift = effect_dz * (n as f64).sqrt();
    normal_cdf(shift - crit) + normal_cdf(-shift - crit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_effect() {
        assert_eq!(power_paired_n(0.2, 0.05, 0.90).unwrap(), 265);
        let z = (normal_quantile(0.975) + normal_quantile(0.90)) / 0.2;
        assert_eq!((z * z).ceil() as usize, 263);
    }

    #[test]
    fn floor_of_two() {
        assert_eq!(power_paired_n(50.0, 0.05, 0.5).unwrap(), 2);
    }

    #[test]
    fn monotone_in_power_and_effect() {
        for dz in [0.1, 0.3, 0.5, 0.8, 1.2, 2.0] {
            let a = power_paired_n(dz, 0.05, 0.90).unwrap();
            let b = power_paired_n(dz, 0.05, 0.95).unwrap();
            assert!(b >= a, "dz={dz}");
        }
        let mut prev = usize::MAX;
        for dz in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let n = power_paired_n(dz, 0.05, 0.9).unwrap();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(power_paired_n(0.0, 0.05, 0.9).is_err());
        assert!(power_paired_n(0.2, 0.0, 0.9).is_err());
        assert!(power_paired_n(0.2, 0.05, 1.0).is_err());
    }

    #[test]
    fn approximate_power_near_target() {
        let p = paired_t_power(265, 0.2, 0.05);
        assert!((p - 0.90).abs() < 0.01, "{p}");
    }
}
