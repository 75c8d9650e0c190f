//! Digamma, trigamma and log-gamma for positive reals.
//!
//! All three shift the argument upward with the recurrence until it reaches
//! [`ASYMPTOTIC_FROM`], then evaluate the asymptotic (Bernoulli) series.

use crate::error::{Error, Result};

const ASYMPTOTIC_FROM: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// B_{2k} / 2k for k = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// B_{2k} / (2k (2k - 1)) for k = 1..7.
const LGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

fn check_domain(name: &str, x: f64) -> Result<()> {
    if x.is_nan() {
        return Err(Error::numeric(format!("{name} of NaN")));
    }
    if x <= 0.0 {
        return Err(Error::domain(format!("{name} requires x > 0, got {x}")));
    }
    Ok(())
}

/// ψ(x) = d/dx ln Γ(x).
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    let mut acc = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut term = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    Ok(acc + x.ln() - 0.5 / x - series)
}

/// ψ'(x), needed for the backward pass through [`digamma`].
pub fn trigamma(x: f64) -> Result<f64> {
    check_domain("trigamma", x)?;
    let mut acc = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv2 * inv;
    let mut series = 0.0;
    for c in TRIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + series)
}

/// ln Γ(x).
pub fn lgamma(x: f64) -> Result<f64> {
    check_domain("lgamma", x)?;
    let mut shift = 1.0;
    let mut x = x;
    while x < ASYMPTOTIC_FROM {
        shift *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv;
    let mut series = 0.0;
    for c in LGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    Ok((x - 0.5) * x.ln() - x + HALF_LN_2PI + series - shift.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    const ZETA3: f64 = 1.202_056_903_159_594_3;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn digamma_reference_points() {
        assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(rel(digamma(1.0).unwrap(), -EULER_GAMMA) < 1e-12);
        // ψ(1/2) = -γ - 2 ln 2
        let half = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert!(rel(digamma(0.5).unwrap(), half) < 1e-12);
        assert!(rel(digamma(0.5).unwrap(), -1.963_510_026_021_423_5) < 1e-12);
    }

    #[test]
    fn digamma_recurrence_over_range() {
        let mut x = 0.01;
        while x <= 100.0 {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!(rel(lhs, 1.0 / x) < 1e-10, "x={x}");
            x *= 1.37;
        }
    }

    #[test]
    fn digamma_extremes() {
        // ψ(x) ≈ -1/x - γ for small x
        let x: f64 = 1e-3;
        let approx = -1.0 / x - EULER_GAMMA + 1.644_934_066_848_226_4 * x - ZETA3 * x * x;
        assert!(rel(digamma(x).unwrap(), approx) < 1e-10);
        let big: f64 = 1e6;
        let asym = big.ln() - 0.5 / big - 1.0 / (12.0 * big * big);
        assert!(rel(digamma(big).unwrap(), asym) < 1e-14);
    }

    #[test]
    fn lgamma_reference_points() {
        assert!(lgamma(1.0).unwrap().abs() < 1e-14);
        assert!(lgamma(2.0).unwrap().abs() < 1e-14);
        assert!(rel(lgamma(5.0).unwrap(), 24f64.ln()) < 1e-13);
        let sqrt_pi_ln = 0.5 * std::f64::consts::PI.ln();
        assert!(rel(lgamma(0.5).unwrap(), sqrt_pi_ln) < 1e-12);
        // ln Γ(x) ≈ -ln x - γx near zero
        let x: f64 = 1e-3;
        let approx = -x.ln() - EULER_GAMMA * x + 0.822_467_033_424_113_2 * x * x - ZETA3 / 3.0 * x * x * x;
        assert!(rel(lgamma(x).unwrap(), approx) < 1e-10);
        // ln(100!) = lgamma(101)
        let ln_fact: f64 = (1..=100).map(|k| (k as f64).ln()).sum();
        assert!(rel(lgamma(101.0).unwrap(), ln_fact) < 1e-13);
    }

    #[test]
    fn lgamma_recurrence_over_range() {
        let mut x = 1e-3;
        while x < 1e6 {
            let lhs = lgamma(x + 1.0).unwrap() - lgamma(x).unwrap();
            assert!((lhs - x.ln()).abs() < 1e-10 * x.ln().abs().max(1.0), "x={x}");
            x *= 3.1;
        }
    }

    #[test]
    fn trigamma_matches_digamma_slope() {
        for &x in &[0.05, 0.7, 1.0, 3.3, 12.0, 250.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
            assert!(rel(trigamma(x).unwrap(), fd) < 1e-6, "x={x}");
        }
        // ψ'(1) = π²/6
        assert!(rel(trigamma(1.0).unwrap(), 1.644_934_066_848_226_4) < 1e-12);
    }

    #[test]
    fn nonpositive_is_domain_error() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(lgamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(trigamma(-2.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(f64::NAN), Err(Error::Numeric(_))));
    }
}
