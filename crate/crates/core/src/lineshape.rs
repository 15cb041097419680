//! Complex atomic response, phase-shift and transmission models as functions
//! of detuning.
//!
//! A driven two-level atom in the probe focus multiplies the collected probe
//! amplitude by
//!
//! ```text
//! E'/E = 1 - (R_sc / 2) * i*Gamma / (2*(delta - delta0) + i*Gamma)
//! ```
//!
//! where `R_sc` is the scattering ratio set by the focusing geometry. The
//! transmission `T = |E'/E|^2` and the phase shift `arg(E'/E)` both follow
//! from this single complex ratio.
//!
//! # Units and conventions
//!
//! Detunings and linewidths are linear frequencies in MHz; every expression
//! depends only on their ratio, so the unit cancels. Phase shifts are
//! reported in degrees on the principal branch (-180, 180], with the sign
//! fixed so that positive detuning (above resonance) gives a positive phase
//! (phase advancement) and negative detuning gives a phase lag. The raw
//! argument of the amplitude ratio has the opposite sign; [`phase_shift`]
//! applies the convention uniformly and the interferometer module extracts
//! phases in the same convention.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LineshapeError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("linewidth must be positive, got {0} MHz")]
    InvalidLinewidth(f64),
    #[error("wavelength must be positive, got {0} nm")]
    InvalidWavelength(f64),
    #[error("scattering ratio must lie in [0, 2), got {0}")]
    InvalidScatteringRatio(f64),
    #[error("phase curve is flat for r_sc = 0; no extremum exists")]
    DegenerateFlatCurve,
    #[error("sampling step {step} MHz too coarse for kernel FWHM {fwhm} MHz (need step <= fwhm/4)")]
    InsufficientSampling { step: f64, fwhm: f64 },
    #[error("convolution input must contain at least one sample")]
    EmptyCurve,
    #[error("convolution expects step > 0 and fwhm >= 0, got step {step}, fwhm {fwhm}")]
    InvalidKernel { step: f64, fwhm: f64 },
}

/// Natural linewidth and wavelength of the probed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicTransition {
    gamma_nat_mhz: f64,
    wavelength_nm: f64,
}

impl AtomicTransition {
    pub fn new(gamma_nat_mhz: f64, wavelength_nm: f64) -> Result<Self, LineshapeError> {
        if !gamma_nat_mhz.is_finite() || gamma_nat_mhz <= 0.0 {
            return Err(LineshapeError::InvalidLinewidth(gamma_nat_mhz));
        }
        if !wavelength_nm.is_finite() || wavelength_nm <= 0.0 {
            return Err(LineshapeError::InvalidWavelength(wavelength_nm));
        }
        Ok(Self {
            gamma_nat_mhz,
            wavelength_nm,
        })
    }

    pub fn gamma_nat_mhz(&self) -> f64 {
        self.gamma_nat_mhz
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }
}

impl Default for AtomicTransition {
    /// The D2 line of Rb-87: natural linewidth 6 MHz, wavelength 780 nm.
    fn default() -> Self {
        Self {
            gamma_nat_mhz: 6.0,
            wavelength_nm: 780.0,
        }
    }
}

/// Dimensionless complex amplitude (the probe-mode ratio E'/E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexAmplitude {
    pub re: f64,
    pub im: f64,
}

impl ComplexAmplitude {
    pub fn new(re: f64, im: f64) -> Result<Self, LineshapeError> {
        if !re.is_finite() {
            return Err(LineshapeError::NonFinite {
                name: "re",
                value: re,
            });
        }
        if !im.is_finite() {
            return Err(LineshapeError::NonFinite {
                name: "im",
                value: im,
            });
        }
        Ok(Self { re, im })
    }

    pub(crate) fn from_complex(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Principal-branch argument in degrees, in (-180, 180].
    pub fn argument_deg(&self) -> f64 {
        self.im.atan2(self.re).to_degrees()
    }
}

/// The (Gamma, Delta0, R_sc) triple that fully determines the phase and
/// transmission curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineshapeParams {
    gamma_mhz: f64,
    delta0_mhz: f64,
    r_sc: f64,
}

impl LineshapeParams {
    /// `r_sc = 2` is the full-extinction boundary and is excluded.
    pub fn new(gamma_mhz: f64, delta0_mhz: f64, r_sc: f64) -> Result<Self, LineshapeError> {
        if !gamma_mhz.is_finite() || gamma_mhz <= 0.0 {
            return Err(LineshapeError::InvalidLinewidth(gamma_mhz));
        }
        if !delta0_mhz.is_finite() {
            return Err(LineshapeError::NonFinite {
                name: "delta0_mhz",
                value: delta0_mhz,
            });
        }
        if !r_sc.is_finite() || !(0.0..2.0).contains(&r_sc) {
            return Err(LineshapeError::InvalidScatteringRatio(r_sc));
        }
        Ok(Self {
            gamma_mhz,
            delta0_mhz,
            r_sc,
        })
    }

    pub fn gamma_mhz(&self) -> f64 {
        self.gamma_mhz
    }

    pub fn delta0_mhz(&self) -> f64 {
        self.delta0_mhz
    }

    pub fn r_sc(&self) -> f64 {
        self.r_sc
    }

    /// Same linewidth and offset with a different scattering ratio.
    pub fn with_r_sc(&self, r_sc: f64) -> Result<Self, LineshapeError> {
        Self::new(self.gamma_mhz, self.delta0_mhz, r_sc)
    }
}

/// Complex response of a rotating dipole, `i*Gamma / (2*delta + i*Gamma)`.
///
/// `delta` is measured from resonance; the expression is homogeneous in
/// (delta, gamma) so any common frequency unit works.
pub fn lorentzian_response(
    delta_mhz: f64,
    gamma_mhz: f64,
) -> Result<ComplexAmplitude, LineshapeError> {
    if !delta_mhz.is_finite() {
        return Err(LineshapeError::NonFinite {
            name: "delta_mhz",
            value: delta_mhz,
        });
    }
    if !gamma_mhz.is_finite() || gamma_mhz <= 0.0 {
        return Err(LineshapeError::InvalidLinewidth(gamma_mhz));
    }
    let ig = Complex64::new(0.0, gamma_mhz);
    Ok(ComplexAmplitude::from_complex(
        ig / (Complex64::new(2.0 * delta_mhz, 0.0) + ig),
    ))
}

/// Probe-mode amplitude ratio `1 - (R_sc/2) * i*Gamma / (2*(delta-delta0) + i*Gamma)`.
pub fn amplitude_ratio(params: &LineshapeParams, delta_mhz: f64) -> ComplexAmplitude {
    let detuning = delta_mhz - params.delta0_mhz;
    let ig = Complex64::new(0.0, params.gamma_mhz);
    let lorentz = ig / (Complex64::new(2.0 * detuning, 0.0) + ig);
    ComplexAmplitude::from_complex(Complex64::new(1.0, 0.0) - 0.5 * params.r_sc * lorentz)
}

/// Atom-induced phase shift of the probe mode, in degrees.
///
/// Sign convention: positive above resonance (phase advancement), negative
/// below (phase lag); see the module docs.
pub fn phase_shift(params: &LineshapeParams, delta_mhz: f64) -> f64 {
    -amplitude_ratio(params, delta_mhz).argument_deg()
}

/// Transmission of the probe past the atom,
/// `1 - Gamma^2 R_sc (1 - R_sc/4) / (4 (delta-delta0)^2 + Gamma^2)`.
///
/// Algebraically identical to `|amplitude_ratio|^2`.
pub fn transmission_model(params: &LineshapeParams, delta_mhz: f64) -> f64 {
    let detuning = delta_mhz - params.delta0_mhz;
    let gamma_sq = params.gamma_mhz * params.gamma_mhz;
    let depth = gamma_sq * params.r_sc * (1.0 - 0.25 * params.r_sc);
    1.0 - depth / (4.0 * detuning * detuning + gamma_sq)
}

/// Location and value of the positive-detuning extremum of the phase curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseExtremum {
    /// Detuning of the stationary point, `delta0 + (Gamma/2) sqrt(1 - R_sc/2)`.
    pub delta_mhz: f64,
    /// Extremal phase shift `atan(R_sc / (4 sqrt(1 - R_sc/2)))` in degrees.
    pub phase_deg: f64,
}

/// Exact stationary point of [`phase_shift`] over detuning.
///
/// The curve is odd around `delta0`; the mirror extremum sits at
/// `delta0 - (Gamma/2) sqrt(1 - R_sc/2)` with value `-phase_deg`.
pub fn phase_extremum(params: &LineshapeParams) -> Result<PhaseExtremum, LineshapeError> {
    if params.r_sc == 0.0 {
        return Err(LineshapeError::DegenerateFlatCurve);
    }
    let root = (1.0 - 0.5 * params.r_sc).sqrt();
    let delta_mhz = params.delta0_mhz + 0.5 * params.gamma_mhz * root;
    let phase_deg = (params.r_sc / (4.0 * root)).atan().to_degrees();
    Ok(PhaseExtremum {
        delta_mhz,
        phase_deg,
    })
}

/// The Lorentzian kernel is truncated at +/- 40 FWHM; the discrete weights
/// are then renormalized to unit sum so a constant curve is reproduced
/// exactly.
pub const KERNEL_HALF_WIDTH_FWHM: f64 = 40.0;

/// Convolve a uniformly sampled curve with a unit-area Lorentzian kernel of
/// the given FWHM (the probe-laser lineshape).
///
/// The curve is extended by edge replication; `fwhm = 0` returns the input
/// unchanged. The sampling step must satisfy `step <= fwhm/4` when
/// `fwhm > 0`.
pub fn convolve_probe_linewidth(
    values: &[f64],
    step_mhz: f64,
    fwhm_mhz: f64,
) -> Result<Vec<f64>, LineshapeError> {
    if values.is_empty() {
        return Err(LineshapeError::EmptyCurve);
    }
    if !(step_mhz.is_finite() && step_mhz > 0.0) || !(fwhm_mhz.is_finite() && fwhm_mhz >= 0.0) {
        return Err(LineshapeError::InvalidKernel {
            step: step_mhz,
            fwhm: fwhm_mhz,
        });
    }
    if fwhm_mhz == 0.0 {
        return Ok(values.to_vec());
    }
    if step_mhz > fwhm_mhz / 4.0 {
        return Err(LineshapeError::InsufficientSampling {
            step: step_mhz,
            fwhm: fwhm_mhz,
        });
    }

    let half_width = (KERNEL_HALF_WIDTH_FWHM * fwhm_mhz / step_mhz).ceil() as i64;
    let hwhm = 0.5 * fwhm_mhz;
    let mut kernel = Vec::with_capacity(2 * half_width as usize + 1);
    for j in -half_width..=half_width {
        let x = j as f64 * step_mhz;
        kernel.push(hwhm / (std::f64::consts::PI * (x * x + hwhm * hwhm)));
    }
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }

    let n = values.len() as i64;
    let out = (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(idx, &k)| {
                    let j = idx as i64 - half_width;
                    let src = (i - j).clamp(0, n - 1) as usize;
                    k * values[src]
                })
                .sum()
        })
        .collect();
    Ok(out)
}
