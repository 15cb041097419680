//! Thermal position spread of the trapped atom and its reduction of the
//! effective scattering ratio.
//!
//! The trapped atom samples a classical thermal Gaussian in each axis of the
//! harmonic trap. Because the scattered power scales with the local probe
//! intensity, averaging the paraxial focal-intensity profile over that
//! position distribution multiplies the scattering ratio by a factor below
//! one. The average is available as a seeded Monte Carlo estimate (with
//! counter-based per-sample streams, so the result is independent of
//! evaluation order) and as a deterministic tensor-product Gauss-Hermite
//! quadrature for cross-checking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::focus::FocusGeometry;
use crate::quadrature::gauss_hermite;

/// Boltzmann constant in J/K.
pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;

/// Mass of Rb-87 in kg.
pub const RB87_MASS_KG: f64 = 1.443_16e-25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("position spread must be finite and non-negative, got {0}")]
    InvalidSpread(f64),
    #[error("Monte Carlo estimate needs at least {minimum} samples, got {got}")]
    TooFewSamples { minimum: usize, got: usize },
    #[error("scattering ratio must be finite and non-negative, got {0}")]
    InvalidRatio(f64),
}

/// Trap frequencies, atom temperature and mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    pub nu_transverse_khz: f64,
    pub nu_longitudinal_khz: f64,
    pub temperature_uk: f64,
    pub atom_mass_kg: f64,
}

impl TrapConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        for (name, value) in [
            ("nu_transverse_khz", self.nu_transverse_khz),
            ("nu_longitudinal_khz", self.nu_longitudinal_khz),
            ("temperature_uk", self.temperature_uk),
            ("atom_mass_kg", self.atom_mass_kg),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(MotionError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

impl Default for TrapConfig {
    /// 70 kHz transverse, 20 kHz longitudinal, 100 uK, Rb-87.
    fn default() -> Self {
        Self {
            nu_transverse_khz: 70.0,
            nu_longitudinal_khz: 20.0,
            temperature_uk: 100.0,
            atom_mass_kg: RB87_MASS_KG,
        }
    }
}

/// RMS thermal position spread along the trap axes, in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSpread {
    pub sigma_transverse_nm: f64,
    pub sigma_longitudinal_nm: f64,
}

impl PositionSpread {
    pub fn new(sigma_transverse_nm: f64, sigma_longitudinal_nm: f64) -> Result<Self, MotionError> {
        for value in [sigma_transverse_nm, sigma_longitudinal_nm] {
            if !value.is_finite() || value < 0.0 {
                return Err(MotionError::InvalidSpread(value));
            }
        }
        Ok(Self {
            sigma_transverse_nm,
            sigma_longitudinal_nm,
        })
    }

    /// Thermal spread of a harmonic trap at the configured temperature.
    pub fn thermal(trap: &TrapConfig) -> Result<Self, MotionError> {
        trap.validate()?;
        Ok(Self {
            sigma_transverse_nm: thermal_sigma(
                trap.nu_transverse_khz,
                trap.temperature_uk,
                trap.atom_mass_kg,
            ),
            sigma_longitudinal_nm: thermal_sigma(
                trap.nu_longitudinal_khz,
                trap.temperature_uk,
                trap.atom_mass_kg,
            ),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_transverse_nm == 0.0 && self.sigma_longitudinal_nm == 0.0
    }
}

/// RMS position spread `sqrt(k_B T / m) / (2 pi nu)` of a classical thermal
/// harmonic oscillator, in nm.
pub fn thermal_sigma(nu_khz: f64, temperature_uk: f64, mass_kg: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * nu_khz * 1e3;
    let kt = BOLTZMANN_J_PER_K * temperature_uk * 1e-6;
    (kt / mass_kg).sqrt() / omega * 1e9
}

/// Paraxial Gaussian intensity relative to the focal maximum,
/// `(w_f / w(z))^2 exp(-2 rho^2 / w(z)^2)` with
/// `w(z) = w_f sqrt(1 + (z / z_R)^2)`.
pub fn focal_intensity_ratio(rho_nm: f64, z_nm: f64, geometry: &FocusGeometry) -> f64 {
    let w_f = geometry.focal_waist_um() * 1e3;
    let z_r = geometry.rayleigh_range_nm();
    let w_sq = w_f * w_f * (1.0 + (z_nm / z_r).powi(2));
    (w_f * w_f / w_sq) * (-2.0 * rho_nm * rho_nm / w_sq).exp()
}

/// Monte Carlo estimate of the motion-averaged scattering ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEstimate {
    pub mean: f64,
    pub std_error: f64,
}

const MIN_SAMPLES: usize = 1_000;

/// Motion-averaged effective scattering ratio
/// `r0 * < I(rho, z) / I(0, 0) >` over the thermal position distribution
/// (two transverse axes with sigma_t, one longitudinal with sigma_z).
///
/// Sample i draws its Gaussian displacements from stream i of a
/// counter-based generator keyed by `seed`, so the estimate is bit-identical
/// for a fixed `(seed, n_samples)` regardless of evaluation order.
pub fn effective_scattering_ratio(
    r0: f64,
    spread: &PositionSpread,
    geometry: &FocusGeometry,
    n_samples: usize,
    seed: u64,
) -> Result<MotionEstimate, MotionError> {
    if !r0.is_finite() || r0 < 0.0 {
        return Err(MotionError::InvalidRatio(r0));
    }
    if n_samples < MIN_SAMPLES {
        return Err(MotionError::TooFewSamples {
            minimum: MIN_SAMPLES,
            got: n_samples,
        });
    }
    if spread.is_zero() {
        return Ok(MotionEstimate {
            mean: r0,
            std_error: 0.0,
        });
    }

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for index in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let gx: f64 = StandardNormal.sample(&mut rng);
        let gy: f64 = StandardNormal.sample(&mut rng);
        let gz: f64 = StandardNormal.sample(&mut rng);
        let x = gx * spread.sigma_transverse_nm;
        let y = gy * spread.sigma_transverse_nm;
        let z = gz * spread.sigma_longitudinal_nm;
        let value = r0 * focal_intensity_ratio(x.hypot(y), z, geometry);
        sum += value;
        sum_sq += value * value;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(MotionEstimate {
        mean,
        std_error: (variance / n).sqrt(),
    })
}

/// Deterministic cross-check of [`effective_scattering_ratio`] by
/// tensor-product Gauss-Hermite quadrature of the same average.
pub fn effective_scattering_ratio_quadrature(
    r0: f64,
    spread: &PositionSpread,
    geometry: &FocusGeometry,
    order: usize,
) -> f64 {
    if spread.is_zero() {
        return r0;
    }
    let (nodes, weights) = gauss_hermite(order.max(2));
    let norm = std::f64::consts::PI.powf(-1.5);
    let scale_t = 2f64.sqrt() * spread.sigma_transverse_nm;
    let scale_z = 2f64.sqrt() * spread.sigma_longitudinal_nm;
    let mut total = 0.0;
    for (i, (&ti, &wi)) in nodes.iter().zip(&weights).enumerate() {
        let _ = i;
        let x = ti * scale_t;
        for (&tj, &wj) in nodes.iter().zip(&weights) {
            let y = tj * scale_t;
            let rho = x.hypot(y);
            let w_ij = wi * wj;
            for (&tk, &wk) in nodes.iter().zip(&weights) {
                let z = tk * scale_z;
                total += w_ij * wk * focal_intensity_ratio(rho, z, geometry);
            }
        }
    }
    r0 * norm * total
}
