//! Lanczos log-gamma.

use std::f64::consts::PI;

const G: f64 = 7.0;
const COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
/// Accurate to ~1e-13 relative over the range used here (arguments > 0).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection for small arguments.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_factorials() {
        // ln Γ(n) = ln (n-1)!
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(11.0) - 3_628_800.0f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn half_integer_values() {
        // Γ(1/2) = √π, Γ(5/2) = 3√π/4.
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-12);
        assert!((ln_gamma(2.5) - (3.0 * PI.sqrt() / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_implementation() {
        for &x in &[0.1, 0.7, 1.3, 2.5, 4.0, 9.9, 63.0, 127.5] {
            let ours = ln_gamma(x);
            let reference = statrs::function::gamma::ln_gamma(x);
            assert!(
                (ours - reference).abs() < 1e-10 * reference.abs().max(1.0),
                "x={x}: {ours} vs {reference}"
            );
        }
    }
}
