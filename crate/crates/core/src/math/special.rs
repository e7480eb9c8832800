//! Special functions and stable reductions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

// B_{2k} / (2k) for k = 1..=8
const DIGAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
    -3_617.0 / 8_160.0,
];

/// Digamma ψ(x) for finite `x > 0`.
///
/// Shifts the argument up to at least 6 with the recurrence
/// ψ(x) = ψ(x + 1) − 1/x, then sums the asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(format!("digamma needs a finite positive argument, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    let mut pow = inv2;
    for c in DIGAMMA_SERIES {
        series += c * pow;
        pow *= inv2;
    }
    shift + x.ln() - 0.5 / x - series
}

/// `log Σ exp(vᵢ)` with the max-shift trick.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("log_sum_exp of an empty vector"));
    }
    Ok(log_sum_exp_unchecked(v))
}

pub(crate) fn log_sum_exp_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log of the multivariate gamma function Γ_D(a).
pub fn ln_multigamma(a: f64, dim: usize) -> f64 {
    let d = dim as f64;
    d * (d - 1.0) / 4.0 * PI.ln()
        + (1..=dim)
            .map(|i| ln_gamma(a + (1.0 - i as f64) / 2.0))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_recurrence_step() {
        let d = digamma(2.0).unwrap() - digamma(1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
        let half = -EULER_GAMMA - 2.0 * 2f64.ln();
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-12);
        assert!((half + 1.963_510_026_0).abs() < 1e-9);
    }

    #[test]
    fn digamma_rejects_bad_input() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
        assert!(digamma(f64::INFINITY).is_err());
    }

    #[test]
    fn ln_gamma_small_integers() {
        // Γ(n) = (n-1)!
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn lse_examples() {
        let ln2 = 2f64.ln();
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + ln2)).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 3f64.ln()]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(log_sum_exp(&[]).is_err());
    }
}
