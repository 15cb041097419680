//! Forward model of the locked Mach-Zehnder interferometer with photon
//! counting, plus the extraction of transmission and phase from output
//! powers.
//!
//! Without an atom the two output powers are
//! `P_{c,d} = (|E_a|^2 + |E_b|^2 +/- 2 V |E_a||E_b| cos(phi_ab)) / 2`; the
//! atom rescales the atom-arm amplitude by `|E'/E|` and offsets the arm
//! phase by the lineshape phase shift. Inverting those relations recovers
//! the transmission `T = 2 (P_c' + P_d') / (P_c + P_d) - 1` and the phase
//! `phi'_ab = arccos[(P_c' - P_d') / ((P_c + P_d) sqrt(T))]`; both hold for
//! balanced arms (`|E_a| = |E_b|`).
//!
//! [`simulate_sequence`] reproduces the measurement cycle: 20 ms of optical
//! pumping, a probe window of 130-140 ms recorded at both detectors, and a
//! 20 ms trap check. When the atom is lost the immediately preceding probe
//! record is discarded and the empty interferometer is observed for 2 s as a
//! background record; pump and check windows produce no records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::focus::FocusGeometry;
use crate::lineshape::{amplitude_ratio, ComplexAmplitude, LineshapeError, LineshapeParams};
use crate::motion::{effective_scattering_ratio_quadrature, PositionSpread};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterferometerError {
    #[error("invalid interferometer configuration: {0}")]
    InvalidConfig(String),
    #[error("reference powers must have a positive sum")]
    NonPositiveReference,
    #[error("extracted transmission {0} is outside [-1, 1] beyond the noise allowance")]
    InconsistentTransmission(f64),
    #[error("transmission must be positive for phase extraction, got {0}")]
    NonPositiveTransmission(f64),
    #[error("arccos argument {argument} outside [-1, 1]; clamp knowingly or gather more data")]
    ArccosOutOfDomain { argument: f64 },
    #[error("detuning grid must not be empty")]
    EmptyGrid,
    #[error("survival probability must lie in [0, 1], got {0}")]
    InvalidSurvival(f64),
    #[error("cycles per point must be at least 1")]
    NoCycles,
    #[error(transparent)]
    Params(#[from] LineshapeError),
}

/// Measurement-cycle timing, in ms.
pub const PUMP_WINDOW_MS: f64 = 20.0;
pub const PROBE_WINDOW_MIN_MS: f64 = 130.0;
pub const PROBE_WINDOW_MAX_MS: f64 = 140.0;
pub const MOT_CHECK_WINDOW_MS: f64 = 20.0;
pub const BACKGROUND_WINDOW_MS: f64 = 2000.0;

/// Tolerated overshoot of the extracted transmission beyond [-1, 1] before
/// the input pair is rejected as inconsistent (covers shot noise at
/// realistic count rates).
pub const TRANSMISSION_SLACK: f64 = 0.05;

/// Arm amplitudes, lock point, detection chain, and fringe visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziConfig {
    /// Field amplitude of the atom arm, |E_a| (arbitrary units).
    pub amp_atom_arm: f64,
    /// Field amplitude of the reference arm, |E_b|.
    pub amp_ref_arm: f64,
    /// Locked phase difference between the arms, in degrees.
    pub lock_phase_deg: f64,
    /// Fiber coupling efficiency of output c.
    pub coupling_eff_c: f64,
    /// Fiber coupling efficiency of output d.
    pub coupling_eff_d: f64,
    /// Detector background rate B1, counts/s.
    pub dark_rate_c: f64,
    /// Detector background rate B2, counts/s.
    pub dark_rate_d: f64,
    /// Detected counts/s per unit optical power at unit coupling.
    pub probe_rate_scale: f64,
    /// Fringe visibility V of the empty interferometer.
    pub visibility: f64,
}

impl Default for MziConfig {
    /// Balanced arms locked at 90 degrees (maximal phase sensitivity),
    /// 84% fiber coupling, 98% visibility. The count-rate scale is chosen
    /// so a default-length run reaches ~0.1 degree statistical phase error
    /// per spectrum point.
    fn default() -> Self {
        Self {
            amp_atom_arm: 1.0,
            amp_ref_arm: 1.0,
            lock_phase_deg: 90.0,
            coupling_eff_c: 0.84,
            coupling_eff_d: 0.84,
            dark_rate_c: 300.0,
            dark_rate_d: 300.0,
            probe_rate_scale: 15_000.0,
            visibility: 0.98,
        }
    }
}

impl MziConfig {
    pub fn validate(&self) -> Result<(), InterferometerError> {
        let check_nonneg = |name: &str, v: f64| {
            if !v.is_finite() || v < 0.0 {
                Err(InterferometerError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )))
            } else {
                Ok(())
            }
        };
        check_nonneg("amp_atom_arm", self.amp_atom_arm)?;
        check_nonneg("amp_ref_arm", self.amp_ref_arm)?;
        check_nonneg("dark_rate_c", self.dark_rate_c)?;
        check_nonneg("dark_rate_d", self.dark_rate_d)?;
        check_nonneg("probe_rate_scale", self.probe_rate_scale)?;
        if !self.lock_phase_deg.is_finite() {
            return Err(InterferometerError::InvalidConfig(format!(
                "lock_phase_deg must be finite, got {}",
                self.lock_phase_deg
            )));
        }
        for (name, v) in [
            ("coupling_eff_c", self.coupling_eff_c),
            ("coupling_eff_d", self.coupling_eff_d),
            ("visibility", self.visibility),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(InterferometerError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The extraction relations assume |E_a| = |E_b|.
    pub fn is_balanced(&self) -> bool {
        let scale = self.amp_atom_arm.abs().max(self.amp_ref_arm.abs()).max(1e-300);
        (self.amp_atom_arm - self.amp_ref_arm).abs() <= 1e-9 * scale
    }
}

/// Optical powers at the two interferometer outputs (arbitrary units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPair {
    pub p_c: f64,
    pub p_d: f64,
}

/// One probe or background interval of the measurement sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRecord {
    pub detuning_mhz: f64,
    pub counts_c: u64,
    pub counts_d: u64,
    pub duration_ms: f64,
    pub atom_present: bool,
}

/// Output powers of the empty interferometer at arm phase `phi_deg`.
pub fn output_powers(cfg: &MziConfig, phi_deg: f64) -> PowerPair {
    let a = cfg.amp_atom_arm;
    let b = cfg.amp_ref_arm;
    let interference = 2.0 * cfg.visibility * a * b * phi_deg.to_radians().cos();
    let total = a * a + b * b;
    PowerPair {
        p_c: 0.5 * (total + interference),
        p_d: 0.5 * (total - interference),
    }
}

/// Output powers with the atom in the trap: the atom arm amplitude becomes
/// `|E_a| * |ratio|` and the arm phase picks up the lineshape phase shift
/// (positive above resonance).
pub fn output_powers_with_atom(cfg: &MziConfig, ratio: ComplexAmplitude) -> PowerPair {
    let a = cfg.amp_atom_arm * ratio.magnitude();
    let b = cfg.amp_ref_arm;
    let phase_deg = cfg.lock_phase_deg - ratio.argument_deg();
    let interference = 2.0 * cfg.visibility * a * b * phase_deg.to_radians().cos();
    let total = a * a + b * b;
    PowerPair {
        p_c: 0.5 * (total + interference),
        p_d: 0.5 * (total - interference),
    }
}

/// Count-rate setpoints `(N^max - N^min)/2 + B` for locking at the point of
/// maximal phase sensitivity.
///
/// With full visibility and balanced arms this coincides with the fringe
/// midpoint `(N^max + N^min)/2`; at reduced visibility the two differ
/// because the fringe minimum then sits above the detector background.
pub fn lock_setpoints(
    n_max_c: f64,
    n_min_c: f64,
    n_max_d: f64,
    n_min_d: f64,
    b1: f64,
    b2: f64,
) -> (f64, f64) {
    (
        0.5 * (n_max_c - n_min_c) + b1,
        0.5 * (n_max_d - n_min_d) + b2,
    )
}

/// Transmission of the atom arm from output powers with and without the
/// atom: `T = 2 (P_c' + P_d') / (P_c + P_d) - 1`.
///
/// Values inside `[-1, 1 + slack]` are returned as-is (a negative value is
/// itself the flag for unphysical-but-consistent inputs); values beyond the
/// slack indicate inconsistent power pairs and are rejected.
pub fn extract_transmission(
    with_atom: &PowerPair,
    without_atom: &PowerPair,
) -> Result<f64, InterferometerError> {
    let reference = without_atom.p_c + without_atom.p_d;
    if !(reference.is_finite() && reference > 0.0) {
        return Err(InterferometerError::NonPositiveReference);
    }
    let t = 2.0 * (with_atom.p_c + with_atom.p_d) / reference - 1.0;
    if !t.is_finite() || !(-1.0 - TRANSMISSION_SLACK..=1.0 + TRANSMISSION_SLACK).contains(&t) {
        return Err(InterferometerError::InconsistentTransmission(t));
    }
    Ok(t)
}

/// Atom-induced phase shift from output powers:
/// `phi'_ab = arccos[(P_c' - P_d') / ((P_c + P_d) sqrt(T))]` on the branch
/// [0, 180] degrees (valid for a lock at 90 degrees), minus the lock phase.
///
/// Noise can push the arccos argument outside [-1, 1]; that case is
/// reported as an error carrying the raw argument so callers can clamp
/// knowingly.
pub fn extract_phase(
    with_atom: &PowerPair,
    without_atom: &PowerPair,
    transmission: f64,
    lock_phase_deg: f64,
) -> Result<f64, InterferometerError> {
    if !(transmission.is_finite() && transmission > 0.0) {
        return Err(InterferometerError::NonPositiveTransmission(transmission));
    }
    let reference = without_atom.p_c + without_atom.p_d;
    if !(reference.is_finite() && reference > 0.0) {
        return Err(InterferometerError::NonPositiveReference);
    }
    let argument = (with_atom.p_c - with_atom.p_d) / (reference * transmission.sqrt());
    if !argument.is_finite() || argument.abs() > 1.0 {
        return Err(InterferometerError::ArccosOutOfDomain { argument });
    }
    Ok(argument.acos().to_degrees() - lock_phase_deg)
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite Poisson mean");
    dist.sample(rng) as u64
}

fn draw_counts<R: Rng>(
    rng: &mut R,
    powers: &PowerPair,
    cfg: &MziConfig,
    duration_ms: f64,
) -> (u64, u64) {
    let duration_s = duration_ms * 1e-3;
    let mean_c =
        (cfg.coupling_eff_c * cfg.probe_rate_scale * powers.p_c + cfg.dark_rate_c) * duration_s;
    let mean_d =
        (cfg.coupling_eff_d * cfg.probe_rate_scale * powers.p_d + cfg.dark_rate_d) * duration_s;
    (poisson_draw(rng, mean_c), poisson_draw(rng, mean_d))
}

/// Poisson photon counts for both detectors over one interval: the channel
/// means are `(eta * scale * P + B) * duration`. Deterministic per seed.
pub fn counts_from_powers(
    powers: &PowerPair,
    cfg: &MziConfig,
    duration_ms: f64,
    seed: u64,
) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_counts(&mut rng, powers, cfg, duration_ms)
}

/// Lineshape parameters driving a simulated run, optionally averaged over
/// the thermal motion of the atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequencePhysics {
    lineshape: LineshapeParams,
}

impl SequencePhysics {
    pub fn new(lineshape: LineshapeParams) -> Self {
        Self { lineshape }
    }

    /// Reduce the scattering ratio by the motion average before simulating;
    /// uses the deterministic Gauss-Hermite path so identical inputs give
    /// identical sequences.
    pub fn with_motion(
        lineshape: LineshapeParams,
        spread: &PositionSpread,
        geometry: &FocusGeometry,
    ) -> Result<Self, InterferometerError> {
        let reduced =
            effective_scattering_ratio_quadrature(lineshape.r_sc(), spread, geometry, 40);
        Ok(Self {
            lineshape: lineshape.with_r_sc(reduced)?,
        })
    }

    pub fn effective_lineshape(&self) -> &LineshapeParams {
        &self.lineshape
    }
}

/// Simulate the full measurement sequence over a detuning grid.
///
/// Per grid point, `cycles_per_point` cycles are attempted. Each cycle pumps
/// (no record), probes for a uniformly drawn 130-140 ms window, then checks
/// the trap: with probability `p_survive` the probe record is kept
/// (atom present); otherwise it is discarded and a 2 s background record of
/// the empty interferometer is emitted. Deterministic per seed.
pub fn simulate_sequence(
    physics: &SequencePhysics,
    cfg: &MziConfig,
    detuning_grid: &[f64],
    cycles_per_point: usize,
    p_survive: f64,
    seed: u64,
) -> Result<Vec<SpectrumRecord>, InterferometerError> {
    cfg.validate()?;
    if detuning_grid.is_empty() {
        return Err(InterferometerError::EmptyGrid);
    }
    if !(0.0..=1.0).contains(&p_survive) {
        return Err(InterferometerError::InvalidSurvival(p_survive));
    }
    if cycles_per_point == 0 {
        return Err(InterferometerError::NoCycles);
    }

    let params = physics.effective_lineshape();
    let empty_powers = output_powers(cfg, cfg.lock_phase_deg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for &detuning_mhz in detuning_grid {
        let ratio = amplitude_ratio(params, detuning_mhz);
        let atom_powers = output_powers_with_atom(cfg, ratio);
        for _ in 0..cycles_per_point {
            // pump and trap-check windows advance time but record nothing
            let duration_ms = rng.random_range(PROBE_WINDOW_MIN_MS..PROBE_WINDOW_MAX_MS);
            let (counts_c, counts_d) = draw_counts(&mut rng, &atom_powers, cfg, duration_ms);
            let survived = rng.random_bool(p_survive);
            if survived {
                records.push(SpectrumRecord {
                    detuning_mhz,
                    counts_c,
                    counts_d,
                    duration_ms,
                    atom_present: true,
                });
            } else {
                // the probe result above is dropped; observe the empty
                // interferometer as a background measurement
                let (counts_c, counts_d) =
                    draw_counts(&mut rng, &empty_powers, cfg, BACKGROUND_WINDOW_MS);
                records.push(SpectrumRecord {
                    detuning_mhz,
                    counts_c,
                    counts_d,
                    duration_ms: BACKGROUND_WINDOW_MS,
                    atom_present: false,
                });
            }
        }
    }
    Ok(records)
}
