//! One-way ANOVA with its own F-distribution tail.

use crate::error::{validation_err, Result};

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
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
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
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

/// `P(F > f)` for an F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Classic between/within mean-square ratio.
///
/// Errors on fewer than two groups, a group with fewer than two values, or
/// zero within-group variance alongside nonzero between-group variance.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(validation_err!("ANOVA needs at least two groups, got {}", groups.len()));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(validation_err!("group {g} has fewer than two values"));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(validation_err!("non-finite value in ANOVA input"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let (df_between, df_within) = (k - 1, n - k);
    let scale = groups.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
    let tol = 1e-24 * scale * scale * n as f64;
    if ssw <= tol {
        if ssb <= tol {
            return Ok(AnovaResult {
                f_stat: 0.0,
                p_value: 1.0,
                df_between,
                df_within,
            });
        }
        return Err(validation_err!("zero within-group variance"));
    }
    let f_stat = (ssb / df_between as f64) / (ssw / df_within as f64);
    Ok(AnovaResult {
        f_stat,
        p_value: f_survival(f_stat, df_between as f64, df_within as f64),
        df_between,
        df_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

    #[test]
    fn hand_example() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]).unwrap();
        assert!((r.f_stat - 3.0).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_within), (2, 6));
        let oracle = FisherSnedecor::new(2.0, 6.0).unwrap().sf(3.0);
        assert!((r.p_value - oracle).abs() < 1e-9);
    }

    #[test]
    fn identical_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let flat = one_way_anova(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!((flat.f_stat, flat.p_value), (0.0, 1.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 1.0], vec![3.0, 3.0]]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ln_gamma_matches_statrs(x in 0.01f64..200.0) {
            prop_assert!((ln_gamma(x) - statrs_ln_gamma(x)).abs() < 1e-9 * (1.0 + statrs_ln_gamma(x).abs()));
        }

        #[test]
        fn f_tail_matches_statrs(f in 0.0f64..30.0, d1 in 1u32..40, d2 in 1u32..200) {
            let ours = f_survival(f, d1 as f64, d2 as f64);
            let oracle = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().sf(f);
            prop_assert!((ours - oracle).abs() < 1e-6, "{} vs {}", ours, oracle);
        }
    }
}
