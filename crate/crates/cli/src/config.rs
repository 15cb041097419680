//! Flat key-value run configuration with SI-suffixed quantities.
//!
//! The format is one `key = value` assignment per line, `#` starting a
//! comment, blank lines ignored. Values may carry a unit suffix matching the
//! key's dimension (`gamma_nat = 6 MHz`, `temperature = 100 uK`,
//! `waist_at_lens = 1.1 mm`); bare numbers are taken in the key's canonical
//! unit. Unknown keys are hard errors; omitted keys keep their defaults.

use std::path::Path;

use atomphase_core::{
    AtomicTransition, FocusGeometry, LineshapeParams, MziConfig, TrapConfig,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// All knobs of a run, with the measured-setup values as defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub transition: AtomicTransition,
    /// Spectrum parameters used by `curves` and `simulate`.
    pub lineshape: LineshapeParams,
    pub focus: FocusGeometry,
    pub trap: TrapConfig,
    pub mzi: MziConfig,
    pub grid_min_mhz: f64,
    pub grid_max_mhz: f64,
    pub grid_step_mhz: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u_step: f64,
    pub cycles_per_point: usize,
    pub p_survive: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub probe_fwhm_mhz: f64,
    /// Reduce the simulated scattering ratio by the thermal-motion average.
    pub apply_motion: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            transition: AtomicTransition::default(),
            lineshape: LineshapeParams::new(8.20, 35.1, 0.064)
                .expect("default lineshape parameters are valid"),
            focus: FocusGeometry::default(),
            trap: TrapConfig::default(),
            mzi: MziConfig::default(),
            grid_min_mhz: 5.1,
            grid_max_mhz: 65.1,
            grid_step_mhz: 1.0,
            u_min: 0.05,
            u_max: 10.0,
            u_step: 0.005,
            cycles_per_point: 100,
            p_survive: 0.98,
            n_samples: 100_000,
            seed: 1,
            probe_fwhm_mhz: 0.75,
            apply_motion: false,
        }
    }
}

impl RunConfig {
    /// Detuning grid `[grid_min, grid_max]` in steps of `grid_step` (MHz).
    pub fn detuning_grid(&self) -> Vec<f64> {
        uniform_grid(self.grid_min_mhz, self.grid_max_mhz, self.grid_step_mhz)
    }

    /// Focusing-strength grid `[u_min, u_max]` in steps of `u_step`.
    pub fn u_grid(&self) -> Vec<f64> {
        uniform_grid(self.u_min, self.u_max, self.u_step)
    }
}

fn uniform_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 0.5 * step / step).floor() as usize;
    (0..=n)
        .map(|i| min + i as f64 * step)
        .take_while(|&x| x <= max + 1e-9 * step)
        .collect()
}

#[derive(Clone, Copy)]
enum Dimension {
    FrequencyMhz,
    FrequencyKhz,
    LengthMm,
    LengthUm,
    LengthNm,
    TemperatureUk,
    MassKg,
    AngleDeg,
    RatePerSecond,
    Dimensionless,
}

impl Dimension {
    fn unit_factor(&self, unit: &str) -> Option<f64> {
        let table: &[(&str, f64)] = match self {
            Dimension::FrequencyMhz => &[("Hz", 1e-6), ("kHz", 1e-3), ("MHz", 1.0), ("GHz", 1e3)],
            Dimension::FrequencyKhz => &[("Hz", 1e-3), ("kHz", 1.0), ("MHz", 1e3)],
            Dimension::LengthMm => &[("nm", 1e-6), ("um", 1e-3), ("µm", 1e-3), ("mm", 1.0), ("cm", 10.0), ("m", 1e3)],
            Dimension::LengthUm => &[("nm", 1e-3), ("um", 1.0), ("µm", 1.0), ("mm", 1e3)],
            Dimension::LengthNm => &[("nm", 1.0), ("um", 1e3), ("µm", 1e3), ("mm", 1e6), ("m", 1e9)],
            Dimension::TemperatureUk => &[("nK", 1e-3), ("uK", 1.0), ("µK", 1.0), ("mK", 1e3), ("K", 1e6)],
            Dimension::MassKg => &[("kg", 1.0)],
            Dimension::AngleDeg => &[("deg", 1.0), ("rad", 57.295_779_513_082_32)],
            Dimension::RatePerSecond => &[("1/s", 1.0), ("/s", 1.0), ("cps", 1.0), ("kcps", 1e3)],
            Dimension::Dimensionless => &[],
        };
        table.iter().find(|(name, _)| *name == unit).map(|(_, f)| *f)
    }

    fn allowed_units(&self) -> String {
        match self {
            Dimension::FrequencyMhz => "Hz, kHz, MHz, GHz".into(),
            Dimension::FrequencyKhz => "Hz, kHz, MHz".into(),
            Dimension::LengthMm => "nm, um, mm, cm, m".into(),
            Dimension::LengthUm => "nm, um, mm".into(),
            Dimension::LengthNm => "nm, um, mm, m".into(),
            Dimension::TemperatureUk => "nK, uK, mK, K".into(),
            Dimension::MassKg => "kg".into(),
            Dimension::AngleDeg => "deg, rad".into(),
            Dimension::RatePerSecond => "1/s, /s, cps, kcps".into(),
            Dimension::Dimensionless => "none".into(),
        }
    }
}

/// Split a value like `6 MHz`, `6MHz`, or `1.44316e-25 kg` into the number
/// and an optional unit token (the longest numeric prefix wins).
fn split_quantity(text: &str) -> Option<(f64, Option<&str>)> {
    let trimmed = text.trim();
    if let Ok(v) = trimmed.parse::<f64>() {
        return Some((v, None));
    }
    for split in (1..trimmed.len()).rev() {
        if !trimmed.is_char_boundary(split) {
            continue;
        }
        let (head, tail) = trimmed.split_at(split);
        if let Ok(v) = head.trim().parse::<f64>() {
            let unit = tail.trim();
            if !unit.is_empty() {
                return Some((v, Some(unit)));
            }
        }
    }
    None
}

fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, String> {
    let (value, unit) = split_quantity(text)
        .ok_or_else(|| format!("cannot parse `{}` as a number with optional unit", text.trim()))?;
    match unit {
        None => Ok(value),
        Some(u) => match dimension.unit_factor(u) {
            Some(factor) => Ok(value * factor),
            None => Err(format!(
                "unit `{u}` not valid here (allowed: {})",
                dimension.allowed_units()
            )),
        },
    }
}

fn check_range(key: &str, value: f64, lo: f64, hi: f64, lo_text: &str) -> Result<(), String> {
    if !value.is_finite() || value < lo || value >= hi {
        return Err(format!("{key} = {value} violates invariant {lo_text}"));
    }
    Ok(())
}

fn require_positive(key: &str, value: f64) -> Result<(), String> {
    if !value.is_finite() || value <= 0.0 {
        return Err(format!("{key} = {value} must be positive"));
    }
    Ok(())
}

fn require_non_negative(key: &str, value: f64) -> Result<(), String> {
    if !value.is_finite() || value < 0.0 {
        return Err(format!("{key} = {value} must be non-negative"));
    }
    Ok(())
}

/// Parse a configuration file; omitted keys take the defaults.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parse configuration text (see the module docs for the format).
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    // mutable scalars for the validated-constructor types
    let mut gamma_nat = cfg.transition.gamma_nat_mhz();
    let mut wavelength = cfg.transition.wavelength_nm();
    let mut gamma = cfg.lineshape.gamma_mhz();
    let mut delta0 = cfg.lineshape.delta0_mhz();
    let mut r_sc = cfg.lineshape.r_sc();
    let mut waist_at_lens = cfg.focus.waist_at_lens_mm();
    let mut focal_length = cfg.focus.focal_length_mm();
    let mut focal_waist = cfg.focus.focal_waist_um();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let fail = |message: String| ConfigError::Line { line, message };
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if content.trim().is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| fail(format!("expected `key = value`, got `{}`", content.trim())))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(fail(format!("key `{key}` has no value")));
        }

        let quantity =
            |dimension: Dimension| parse_quantity(value, dimension).map_err(&fail);

        match key {
            "gamma_nat" => {
                gamma_nat = quantity(Dimension::FrequencyMhz)?;
                require_positive(key, gamma_nat).map_err(&fail)?;
            }
            "wavelength" => {
                wavelength = quantity(Dimension::LengthNm)?;
                require_positive(key, wavelength).map_err(&fail)?;
            }
            "gamma" => {
                gamma = quantity(Dimension::FrequencyMhz)?;
                require_positive(key, gamma).map_err(&fail)?;
            }
            "delta0" => {
                delta0 = quantity(Dimension::FrequencyMhz)?;
                if !delta0.is_finite() {
                    return Err(fail(format!("{key} must be finite")));
                }
            }
            "r_sc" => {
                r_sc = quantity(Dimension::Dimensionless)?;
                check_range(key, r_sc, 0.0, 2.0, "0 <= r_sc < 2").map_err(&fail)?;
            }
            "waist_at_lens" => {
                waist_at_lens = quantity(Dimension::LengthMm)?;
                require_positive(key, waist_at_lens).map_err(&fail)?;
            }
            "focal_length" => {
                focal_length = quantity(Dimension::LengthMm)?;
                require_positive(key, focal_length).map_err(&fail)?;
            }
            "focal_waist" => {
                focal_waist = quantity(Dimension::LengthUm)?;
                require_positive(key, focal_waist).map_err(&fail)?;
            }
            "nu_transverse" => {
                cfg.trap.nu_transverse_khz = quantity(Dimension::FrequencyKhz)?;
                require_positive(key, cfg.trap.nu_transverse_khz).map_err(&fail)?;
            }
            "nu_longitudinal" => {
                cfg.trap.nu_longitudinal_khz = quantity(Dimension::FrequencyKhz)?;
                require_positive(key, cfg.trap.nu_longitudinal_khz).map_err(&fail)?;
            }
            "temperature" => {
                cfg.trap.temperature_uk = quantity(Dimension::TemperatureUk)?;
                require_positive(key, cfg.trap.temperature_uk).map_err(&fail)?;
            }
            "atom_mass" => {
                cfg.trap.atom_mass_kg = quantity(Dimension::MassKg)?;
                require_positive(key, cfg.trap.atom_mass_kg).map_err(&fail)?;
            }
            "amp_atom_arm" => {
                cfg.mzi.amp_atom_arm = quantity(Dimension::Dimensionless)?;
                require_non_negative(key, cfg.mzi.amp_atom_arm).map_err(&fail)?;
            }
            "amp_ref_arm" => {
                cfg.mzi.amp_ref_arm = quantity(Dimension::Dimensionless)?;
                require_non_negative(key, cfg.mzi.amp_ref_arm).map_err(&fail)?;
            }
            "lock_phase" => {
                cfg.mzi.lock_phase_deg = quantity(Dimension::AngleDeg)?;
                if !cfg.mzi.lock_phase_deg.is_finite() {
                    return Err(fail(format!("{key} must be finite")));
                }
            }
            "coupling_eff_c" => {
                cfg.mzi.coupling_eff_c = quantity(Dimension::Dimensionless)?;
                check_range(key, cfg.mzi.coupling_eff_c, 0.0, 1.0 + f64::EPSILON, "0 <= eff <= 1")
                    .map_err(&fail)?;
            }
            "coupling_eff_d" => {
                cfg.mzi.coupling_eff_d = quantity(Dimension::Dimensionless)?;
                check_range(key, cfg.mzi.coupling_eff_d, 0.0, 1.0 + f64::EPSILON, "0 <= eff <= 1")
                    .map_err(&fail)?;
            }
            "dark_rate_c" => {
                cfg.mzi.dark_rate_c = quantity(Dimension::RatePerSecond)?;
                require_non_negative(key, cfg.mzi.dark_rate_c).map_err(&fail)?;
            }
            "dark_rate_d" => {
                cfg.mzi.dark_rate_d = quantity(Dimension::RatePerSecond)?;
                require_non_negative(key, cfg.mzi.dark_rate_d).map_err(&fail)?;
            }
            "probe_rate_scale" => {
                cfg.mzi.probe_rate_scale = quantity(Dimension::RatePerSecond)?;
                require_non_negative(key, cfg.mzi.probe_rate_scale).map_err(&fail)?;
            }
            "visibility" => {
                cfg.mzi.visibility = quantity(Dimension::Dimensionless)?;
                check_range(key, cfg.mzi.visibility, 0.0, 1.0 + f64::EPSILON, "0 <= V <= 1")
                    .map_err(&fail)?;
            }
            "grid_min" => cfg.grid_min_mhz = quantity(Dimension::FrequencyMhz)?,
            "grid_max" => cfg.grid_max_mhz = quantity(Dimension::FrequencyMhz)?,
            "grid_step" => {
                cfg.grid_step_mhz = quantity(Dimension::FrequencyMhz)?;
                require_positive(key, cfg.grid_step_mhz).map_err(&fail)?;
            }
            "u_min" => {
                cfg.u_min = quantity(Dimension::Dimensionless)?;
                require_positive(key, cfg.u_min).map_err(&fail)?;
            }
            "u_max" => {
                cfg.u_max = quantity(Dimension::Dimensionless)?;
                require_positive(key, cfg.u_max).map_err(&fail)?;
            }
            "u_step" => {
                cfg.u_step = quantity(Dimension::Dimensionless)?;
                require_positive(key, cfg.u_step).map_err(&fail)?;
            }
            "cycles_per_point" => {
                cfg.cycles_per_point = value
                    .parse()
                    .map_err(|_| fail(format!("cannot parse `{value}` as a positive integer")))?;
                if cfg.cycles_per_point == 0 {
                    return Err(fail("cycles_per_point must be at least 1".into()));
                }
            }
            "p_survive" => {
                cfg.p_survive = quantity(Dimension::Dimensionless)?;
                check_range(key, cfg.p_survive, 0.0, 1.0 + f64::EPSILON, "0 <= p <= 1")
                    .map_err(&fail)?;
            }
            "n_samples" => {
                cfg.n_samples = value
                    .parse()
                    .map_err(|_| fail(format!("cannot parse `{value}` as a positive integer")))?;
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| fail(format!("cannot parse `{value}` as an unsigned integer")))?;
            }
            "probe_fwhm" => {
                cfg.probe_fwhm_mhz = quantity(Dimension::FrequencyMhz)?;
                require_non_negative(key, cfg.probe_fwhm_mhz).map_err(&fail)?;
            }
            "apply_motion" => {
                cfg.apply_motion = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(fail(format!(
                            "cannot parse `{other}` as a boolean (true/false)"
                        )))
                    }
                };
            }
            unknown => {
                return Err(fail(format!("unknown key `{unknown}`")));
            }
        }
    }

    cfg.transition = AtomicTransition::new(gamma_nat, wavelength)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.lineshape = LineshapeParams::new(gamma, delta0, r_sc)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.focus = FocusGeometry::new(waist_at_lens, focal_length, focal_waist, wavelength)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.trap
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.mzi
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if !(cfg.grid_min_mhz.is_finite() && cfg.grid_max_mhz.is_finite() && cfg.grid_min_mhz < cfg.grid_max_mhz) {
        return Err(ConfigError::Invalid(format!(
            "grid_min ({}) must be smaller than grid_max ({})",
            cfg.grid_min_mhz, cfg.grid_max_mhz
        )));
    }
    if !(cfg.u_min.is_finite() && cfg.u_max.is_finite() && cfg.u_min < cfg.u_max) {
        return Err(ConfigError::Invalid(format!(
            "u_min ({}) must be smaller than u_max ({})",
            cfg.u_min, cfg.u_max
        )));
    }
    Ok(cfg)
}
