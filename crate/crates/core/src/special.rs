//! Gamma-family special functions needed by the focusing model.
//!
//! The focusing-strength closed form evaluates upper incomplete gamma
//! functions at `x = 1/u^2`, which reaches ~400 for the smallest focusing
//! strengths of interest. The bare incomplete gamma underflows there while
//! the model multiplies it by exp(2x), so everything here works with the
//! exponentially scaled function `e^x * Gamma(a, x)` and never forms the
//! explosive factors separately.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("incomplete gamma arguments outside supported domain: a={a}, x={x}")]
    Domain { a: f64, x: f64 },
    #[error("incomplete gamma evaluation did not converge for a={a}, x={x}")]
    NoConvergence { a: f64, x: f64 },
}

const MAX_ITER: usize = 400;

// Lanczos approximation, g = 7 with 9 coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
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

/// Complete gamma function for real arguments that are not nonpositive
/// integers. Negative arguments go through the reflection formula.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Gamma(x) Gamma(1-x) = pi / sin(pi x)
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Exponentially scaled upper incomplete gamma function, `e^x * Gamma(a, x)`.
///
/// Supports x > 0 and a > -1 with a != 0; a in (-1, 0) is lifted to the
/// positive domain with one step of the recurrence
/// `Gamma(a, x) = (Gamma(a+1, x) - x^a e^{-x}) / a`, which in scaled form
/// has the pure-power inhomogeneity `x^a`.
pub fn upper_gamma_scaled(a: f64, x: f64) -> Result<f64, SpecialError> {
    if !(x.is_finite() && x > 0.0) || !a.is_finite() || a == 0.0 || a <= -1.0 {
        return Err(SpecialError::Domain { a, x });
    }
    if a < 0.0 {
        let lifted = upper_gamma_scaled_positive(a + 1.0, x)?;
        return Ok((lifted - x.powf(a)) / a);
    }
    upper_gamma_scaled_positive(a, x)
}

fn upper_gamma_scaled_positive(a: f64, x: f64) -> Result<f64, SpecialError> {
    if x > a + 1.0 {
        continued_fraction_scaled(a, x)
    } else {
        series_complement_scaled(a, x)
    }
}

/// Modified Lentz continued fraction; in scaled form the prefactor is just
/// x^a, so no exponentials appear for large x.
fn continued_fraction_scaled(a: f64, x: f64) -> Result<f64, SpecialError> {
    const TINY: f64 = 1e-300;
    let b0 = x + 1.0 - a;
    let mut f = if b0.abs() < TINY { TINY } else { b0 };
    let mut c = f;
    let mut d = 0.0;
    for n in 1..=MAX_ITER {
        let nf = n as f64;
        let an = nf * (a - nf);
        let bn = x + 2.0 * nf + 1.0 - a;
        d = bn + an * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = bn + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(x.powf(a) / f);
        }
    }
    Err(SpecialError::NoConvergence { a, x })
}

/// For x <= a + 1 the lower incomplete gamma series converges quickly:
/// `e^x gamma(a, x) = x^a sum_n x^n / (a (a+1) ... (a+n))`, and the scaled
/// upper function is `e^x Gamma(a) - e^x gamma(a, x)` with e^x harmless here.
fn series_complement_scaled(a: f64, x: f64) -> Result<f64, SpecialError> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(x.exp() * gamma(a) - x.powf(a) * sum);
        }
    }
    Err(SpecialError::NoConvergence { a, x })
}
