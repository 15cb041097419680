//! Transmission-spectrum normalization and weighted least-squares fitting.
//!
//! Raw [`SpectrumRecord`]s are reduced to transmission points with Poisson
//! uncertainties by normalizing atom-present rates against the pooled
//! atom-absent background. The transmission model is then fitted by damped
//! Gauss-Newton iterations in a conditioned parameter space: frequencies
//! scaled by 10 MHz and the scattering ratio constrained to [0, 2) through a
//! logistic reparameterization. The phase curve is not fitted; it is
//! predicted from the transmission fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::interferometer::{MziConfig, SpectrumRecord};
use crate::lineshape::{
    convolve_probe_linewidth, phase_extremum, phase_shift, transmission_model, LineshapeError,
    LineshapeParams, PhaseExtremum, KERNEL_HALF_WIDTH_FWHM,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("spectrum contains no atom-absent background records")]
    MissingBackground,
    #[error("background records contain no counts")]
    ZeroBackgroundCounts,
    #[error("net background rate is not positive (dark counts only?)")]
    BackgroundBelowDark,
    #[error("spectrum contains no atom-present records")]
    NoAtomRecords,
    #[error("need at least {minimum} spectrum points, got {got}")]
    TooFewPoints { minimum: usize, got: usize },
    #[error("every point needs a finite positive uncertainty")]
    InvalidUncertainty,
    #[error("spectrum shows no significant dip (depth below 3x the median uncertainty)")]
    NoDip,
    #[error("normal equations are singular; the fit is degenerate")]
    DegenerateFit,
    #[error("fit did not converge")]
    NotConverged,
    #[error(transparent)]
    Params(#[from] LineshapeError),
}

/// One normalized transmission point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    pub detuning_mhz: f64,
    pub transmission: f64,
    pub sigma: f64,
}

/// Result of the transmission fit. Parameter order in `std_errors` and
/// `covariance` is (gamma, delta0, r_sc).
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: LineshapeParams,
    pub std_errors: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    /// Unweighted RMS of the transmission residuals.
    pub residual_rms: f64,
    pub n_points: usize,
    pub converged: bool,
}

/// Fit options; the default fits the bare transmission model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convolve the model with a Lorentzian probe lineshape of this FWHM
    /// (MHz) before comparing with the data.
    pub convolve_fwhm_mhz: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            convolve_fwhm_mhz: None,
            max_iterations: 200,
        }
    }
}

/// Reduce raw records to transmission points.
///
/// Atom-present records are grouped by detuning; all atom-absent records are
/// pooled into one background estimate (the locked empty interferometer does
/// not depend on the probe detuning). Dark rates are subtracted, each
/// channel is converted to power units through its coupling efficiency, and
/// `T = 2 * (atom power sum) / (background power sum) - 1` per detuning with
/// Poisson uncertainties propagated into `sigma`.
pub fn normalize_spectrum(
    records: &[SpectrumRecord],
    cfg: &MziConfig,
) -> Result<Vec<NormalizedPoint>, EstimationError> {
    let mut bg_counts_c: u64 = 0;
    let mut bg_counts_d: u64 = 0;
    let mut bg_duration_s = 0.0;
    let mut groups: Vec<(f64, u64, u64, f64)> = Vec::new();
    for r in records {
        if r.atom_present {
            match groups
                .iter_mut()
                .find(|(detuning, ..)| *detuning == r.detuning_mhz)
            {
                Some(group) => {
                    group.1 += r.counts_c;
                    group.2 += r.counts_d;
                    group.3 += r.duration_ms * 1e-3;
                }
                None => groups.push((
                    r.detuning_mhz,
                    r.counts_c,
                    r.counts_d,
                    r.duration_ms * 1e-3,
                )),
            }
        } else {
            bg_counts_c += r.counts_c;
            bg_counts_d += r.counts_d;
            bg_duration_s += r.duration_ms * 1e-3;
        }
    }
    if bg_duration_s == 0.0 {
        return Err(EstimationError::MissingBackground);
    }
    if bg_counts_c + bg_counts_d == 0 {
        return Err(EstimationError::ZeroBackgroundCounts);
    }
    if groups.is_empty() {
        return Err(EstimationError::NoAtomRecords);
    }

    // counts -> net power per channel; a Poisson floor of one count keeps
    // the variance positive for empty channels
    let power = |counts: u64, duration_s: f64, dark: f64, eff: f64| {
        let rate = counts as f64 / duration_s;
        let variance = (counts.max(1)) as f64 / (duration_s * duration_s);
        let scale = eff * cfg.probe_rate_scale;
        ((rate - dark) / scale, variance / (scale * scale))
    };

    let (bg_c, var_bg_c) = power(bg_counts_c, bg_duration_s, cfg.dark_rate_c, cfg.coupling_eff_c);
    let (bg_d, var_bg_d) = power(bg_counts_d, bg_duration_s, cfg.dark_rate_d, cfg.coupling_eff_d);
    let bg_sum = bg_c + bg_d;
    let var_bg = var_bg_c + var_bg_d;
    if bg_sum <= 0.0 {
        return Err(EstimationError::BackgroundBelowDark);
    }

    let mut points: Vec<NormalizedPoint> = groups
        .into_iter()
        .map(|(detuning_mhz, counts_c, counts_d, duration_s)| {
            let (a_c, var_a_c) = power(counts_c, duration_s, cfg.dark_rate_c, cfg.coupling_eff_c);
            let (a_d, var_a_d) = power(counts_d, duration_s, cfg.dark_rate_d, cfg.coupling_eff_d);
            let atom_sum = a_c + a_d;
            let var_atom = var_a_c + var_a_d;
            let transmission = 2.0 * atom_sum / bg_sum - 1.0;
            let sigma = 2.0
                * (var_atom / (bg_sum * bg_sum)
                    + atom_sum * atom_sum * var_bg / bg_sum.powi(4))
                .sqrt();
            NormalizedPoint {
                detuning_mhz,
                transmission,
                sigma,
            }
        })
        .collect();
    points.sort_by(|a, b| a.detuning_mhz.total_cmp(&b.detuning_mhz));
    Ok(points)
}

const MIN_POINTS: usize = 5;

/// Starting parameters for the fit, read off the spectrum directly:
/// the resonance offset from the deepest point, the linewidth from the full
/// width at half depth (linear interpolation), and the scattering ratio by
/// inverting the dip depth `d = R (1 - R/4)` as `R = 2 (1 - sqrt(1 - d))`.
pub fn estimate_initial(spectrum: &[NormalizedPoint]) -> Result<LineshapeParams, EstimationError> {
    if spectrum.len() < MIN_POINTS {
        return Err(EstimationError::TooFewPoints {
            minimum: MIN_POINTS,
            got: spectrum.len(),
        });
    }
    let mut points = spectrum.to_vec();
    points.sort_by(|a, b| a.detuning_mhz.total_cmp(&b.detuning_mhz));

    let (min_idx, min_point) = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.transmission.total_cmp(&b.1.transmission))
        .expect("non-empty spectrum");
    let depth = 1.0 - min_point.transmission;

    let mut sigmas: Vec<f64> = points.iter().map(|p| p.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    let median_sigma = sigmas[sigmas.len() / 2];
    if depth <= 0.0 || depth < 3.0 * median_sigma {
        return Err(EstimationError::NoDip);
    }

    let delta0 = min_point.detuning_mhz;
    let half_level = 1.0 - 0.5 * depth;

    // walk outward from the minimum to the half-depth crossings
    let crossing = |indices: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = min_idx;
        for i in indices {
            if points[i].transmission >= half_level {
                let (x0, y0) = (points[prev].detuning_mhz, points[prev].transmission);
                let (x1, y1) = (points[i].detuning_mhz, points[i].transmission);
                let frac = if y1 == y0 { 0.5 } else { (half_level - y0) / (y1 - y0) };
                return Some(x0 + frac * (x1 - x0));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..min_idx).rev());
    let right = crossing(&mut (min_idx + 1..points.len()));
    let gamma = match (left, right) {
        (Some(l), Some(r)) => r - l,
        // dip truncated by the grid edge: take twice the resolved side
        (Some(l), None) => 2.0 * (delta0 - l),
        (None, Some(r)) => 2.0 * (r - delta0),
        (None, None) => points.last().unwrap().detuning_mhz - points[0].detuning_mhz,
    };

    let r_sc = 2.0 * (1.0 - (1.0 - depth.min(1.0)).sqrt());
    Ok(LineshapeParams::new(
        gamma.max(f64::MIN_POSITIVE),
        delta0,
        r_sc.clamp(0.0, 1.999_999),
    )?)
}

/// Analytic Jacobian of the transmission model with respect to
/// (gamma, delta0, r_sc).
pub fn transmission_jacobian(params: &LineshapeParams, delta_mhz: f64) -> [f64; 3] {
    let gamma = params.gamma_mhz();
    let r = params.r_sc();
    let dd = delta_mhz - params.delta0_mhz();
    let q = 4.0 * dd * dd + gamma * gamma;
    let a = r * (1.0 - 0.25 * r);
    [
        -8.0 * gamma * a * dd * dd / (q * q),
        -8.0 * gamma * gamma * a * dd / (q * q),
        -gamma * gamma * (1.0 - 0.5 * r) / q,
    ]
}

const FREQ_SCALE_MHZ: f64 = 10.0;
const COST_TOLERANCE: f64 = 1e-10;
const STEP_TOLERANCE: f64 = 1e-8;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e14;
// pure Gauss-Newton steps after convergence to drive the gradient to
// numerical zero
const POLISH_STEPS: usize = 2;

fn logistic(q: f64) -> f64 {
    1.0 / (1.0 + (-q).exp())
}

fn to_internal(params: &LineshapeParams) -> [f64; 3] {
    let r = params.r_sc().clamp(1e-9, 2.0 - 1e-9);
    [
        params.gamma_mhz() / FREQ_SCALE_MHZ,
        params.delta0_mhz() / FREQ_SCALE_MHZ,
        (r / (2.0 - r)).ln(),
    ]
}

fn from_internal(x: &[f64; 3]) -> Result<LineshapeParams, LineshapeError> {
    LineshapeParams::new(
        x[0] * FREQ_SCALE_MHZ,
        x[1] * FREQ_SCALE_MHZ,
        2.0 * logistic(x[2]),
    )
}

/// d(natural)/d(internal) for the diagonal reparameterization.
fn internal_scales(params: &LineshapeParams) -> [f64; 3] {
    let r = params.r_sc();
    [FREQ_SCALE_MHZ, FREQ_SCALE_MHZ, 0.5 * r * (2.0 - r)]
}

/// Model values alongside the three natural-parameter Jacobian columns.
type ModelColumns = (Vec<f64>, [Vec<f64>; 3]);

/// Normal-equations matrix, gradient, and weighted cost, all in internal
/// coordinates.
type NormalEquations = ([[f64; 3]; 3], [f64; 3], f64);

/// Model values and natural-parameter Jacobian columns at the data
/// detunings, optionally convolved with the probe lineshape.
fn model_set(
    params: &LineshapeParams,
    detunings: &[f64],
    convolve_fwhm_mhz: Option<f64>,
) -> Result<ModelColumns, EstimationError> {
    match convolve_fwhm_mhz {
        None | Some(0.0) => {
            let mut values = Vec::with_capacity(detunings.len());
            let mut jac = [
                Vec::with_capacity(detunings.len()),
                Vec::with_capacity(detunings.len()),
                Vec::with_capacity(detunings.len()),
            ];
            for &d in detunings {
                values.push(transmission_model(params, d));
                let j = transmission_jacobian(params, d);
                for k in 0..3 {
                    jac[k].push(j[k]);
                }
            }
            Ok((values, jac))
        }
        Some(fwhm) => {
            // evaluate on a fine grid padded by the kernel half-width, so the
            // interior never sees the replicated edges, then interpolate
            let pad = KERNEL_HALF_WIDTH_FWHM * fwhm;
            let lo = detunings.iter().copied().fold(f64::INFINITY, f64::min) - pad;
            let hi = detunings.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
            let step = fwhm / 8.0;
            let n = ((hi - lo) / step).ceil() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();

            let mut fine_values = Vec::with_capacity(n);
            let mut fine_jac = [
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
            ];
            for &d in &grid {
                fine_values.push(transmission_model(params, d));
                let j = transmission_jacobian(params, d);
                for k in 0..3 {
                    fine_jac[k].push(j[k]);
                }
            }
            let conv_values = convolve_probe_linewidth(&fine_values, step, fwhm)?;
            let conv_jac = [
                convolve_probe_linewidth(&fine_jac[0], step, fwhm)?,
                convolve_probe_linewidth(&fine_jac[1], step, fwhm)?,
                convolve_probe_linewidth(&fine_jac[2], step, fwhm)?,
            ];

            let interp = |curve: &[f64], d: f64| {
                let pos = (d - lo) / step;
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                curve[i] * (1.0 - frac) + curve[i + 1] * frac
            };
            let values = detunings.iter().map(|&d| interp(&conv_values, d)).collect();
            let jac = [
                detunings.iter().map(|&d| interp(&conv_jac[0], d)).collect(),
                detunings.iter().map(|&d| interp(&conv_jac[1], d)).collect(),
                detunings.iter().map(|&d| interp(&conv_jac[2], d)).collect(),
            ];
            Ok((values, jac))
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < 1e-300 || !m[pivot_row][col].is_finite() {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    Some([rhs[0] / m[0][0], rhs[1] / m[1][1], rhs[2] / m[2][2]])
}

#[allow(clippy::needless_range_loop)]
fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut unit = [0.0; 3];
        unit[col] = 1.0;
        let solution = solve3(m, unit)?;
        for row in 0..3 {
            inv[row][col] = solution[row];
        }
    }
    // symmetrize away round-off
    for i in 0..3 {
        for j in (i + 1)..3 {
            let avg = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = avg;
            inv[j][i] = avg;
        }
    }
    Some(inv)
}

struct Design<'a> {
    detunings: Vec<f64>,
    values: &'a [f64],
    weights: Vec<f64>,
    convolve_fwhm_mhz: Option<f64>,
}

impl Design<'_> {
    fn cost(&self, params: &LineshapeParams) -> Result<f64, EstimationError> {
        let (model, _) = model_set(params, &self.detunings, self.convolve_fwhm_mhz)?;
        Ok(self
            .values
            .iter()
            .zip(&model)
            .zip(&self.weights)
            .map(|((&y, &f), &w)| w * (y - f) * (y - f))
            .sum())
    }

    /// Normal-equations matrix and gradient in internal coordinates.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(
        &self,
        params: &LineshapeParams,
        internal: &[f64; 3],
    ) -> Result<NormalEquations, EstimationError> {
        let _ = internal;
        let (model, jac_nat) = model_set(params, &self.detunings, self.convolve_fwhm_mhz)?;
        let scales = internal_scales(params);
        let mut h = [[0.0; 3]; 3];
        let mut g = [0.0; 3];
        let mut cost = 0.0;
        for i in 0..self.detunings.len() {
            let w = self.weights[i];
            let r = self.values[i] - model[i];
            cost += w * r * r;
            let j = [
                jac_nat[0][i] * scales[0],
                jac_nat[1][i] * scales[1],
                jac_nat[2][i] * scales[2],
            ];
            for a in 0..3 {
                g[a] += w * r * j[a];
                for b in a..3 {
                    h[a][b] += w * j[a] * j[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        Ok((h, g, cost))
    }
}

/// Weighted least-squares fit of the transmission model (weights `1/sigma^2`).
pub fn fit_transmission(
    spectrum: &[NormalizedPoint],
    init: &LineshapeParams,
) -> Result<FitResult, EstimationError> {
    fit_transmission_with(spectrum, init, &FitOptions::default())
}

/// [`fit_transmission`] with explicit options (probe-linewidth convolution,
/// iteration budget).
pub fn fit_transmission_with(
    spectrum: &[NormalizedPoint],
    init: &LineshapeParams,
    options: &FitOptions,
) -> Result<FitResult, EstimationError> {
    if spectrum.len() < MIN_POINTS {
        return Err(EstimationError::TooFewPoints {
            minimum: MIN_POINTS,
            got: spectrum.len(),
        });
    }
    if spectrum
        .iter()
        .any(|p| !p.sigma.is_finite() || p.sigma <= 0.0 || !p.transmission.is_finite())
    {
        return Err(EstimationError::InvalidUncertainty);
    }

    let design = Design {
        detunings: spectrum.iter().map(|p| p.detuning_mhz).collect(),
        values: &spectrum.iter().map(|p| p.transmission).collect::<Vec<_>>(),
        weights: spectrum.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect(),
        convolve_fwhm_mhz: options.convolve_fwhm_mhz,
    };
    // borrow gymnastics: rebuild the view with the owned values
    let values: Vec<f64> = spectrum.iter().map(|p| p.transmission).collect();
    let design = Design {
        values: &values,
        ..design
    };

    let mut x = to_internal(init);
    let mut params = from_internal(&x)?;
    let mut cost = design.cost(&params)?;
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (h, g, _) = design.normal_equations(&params, &x)?;
        let mut damped = h;
        for k in 0..3 {
            damped[k][k] += lambda * h[k][k].max(1e-300);
        }
        let Some(step) = solve3(damped, g) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                return Err(EstimationError::DegenerateFit);
            }
            continue;
        };
        let step_norm = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        if step_norm < STEP_TOLERANCE {
            converged = true;
            break;
        }
        let trial_x = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
        let trial_params = match from_internal(&trial_x) {
            Ok(p) => p,
            Err(_) => {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    return Err(EstimationError::DegenerateFit);
                }
                continue;
            }
        };
        let trial_cost = design.cost(&trial_params)?;
        if trial_cost.is_finite() && trial_cost <= cost {
            let improvement = cost - trial_cost;
            x = trial_x;
            params = trial_params;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if improvement <= COST_TOLERANCE * cost.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at maximal damping
                converged = true;
                break;
            }
        }
    }

    if converged {
        // undamped polish steps settle the gradient to numerical zero
        for _ in 0..POLISH_STEPS {
            let (h, g, _) = design.normal_equations(&params, &x)?;
            let Some(step) = solve3(h, g) else { break };
            let trial_x = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
            let Ok(trial_params) = from_internal(&trial_x) else {
                break;
            };
            let trial_cost = design.cost(&trial_params)?;
            if trial_cost.is_finite() && trial_cost <= cost {
                x = trial_x;
                params = trial_params;
                cost = trial_cost;
            } else {
                break;
            }
        }
    }

    let (h, _, final_cost) = design.normal_equations(&params, &x)?;
    let cov_internal = invert3(h).ok_or(EstimationError::DegenerateFit)?;
    let dof = (spectrum.len() - 3).max(1) as f64;
    let chi2_red = final_cost / dof;
    let scales = internal_scales(&params);
    let mut covariance = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            covariance[a][b] = cov_internal[a][b] * scales[a] * scales[b] * chi2_red;
        }
    }
    let std_errors = [
        covariance[0][0].max(0.0).sqrt(),
        covariance[1][1].max(0.0).sqrt(),
        covariance[2][2].max(0.0).sqrt(),
    ];
    let (model, _) = model_set(&params, &design.detunings, options.convolve_fwhm_mhz)?;
    let residual_rms = (values
        .iter()
        .zip(&model)
        .map(|(&y, &f)| (y - f) * (y - f))
        .sum::<f64>()
        / values.len() as f64)
        .sqrt();

    Ok(FitResult {
        params,
        std_errors,
        covariance,
        residual_rms,
        n_points: spectrum.len(),
        converged,
    })
}

/// Phase curve predicted from a transmission fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePrediction {
    /// (detuning MHz, phase shift degrees) along the requested grid.
    pub curve: Vec<(f64, f64)>,
    /// Positive-detuning extremum of the phase curve; `None` when the fitted
    /// scattering ratio is zero (flat curve).
    pub extremum: Option<PhaseExtremum>,
}

/// Compose the phase model over a detuning grid with the fitted parameters
/// and report the analytic extremum.
pub fn predict_phase_curve(
    fit: &FitResult,
    detuning_grid: &[f64],
) -> Result<PhasePrediction, EstimationError> {
    if !fit.converged {
        return Err(EstimationError::NotConverged);
    }
    let curve = detuning_grid
        .iter()
        .map(|&d| (d, phase_shift(&fit.params, d)))
        .collect();
    let extremum = phase_extremum(&fit.params).ok();
    Ok(PhasePrediction { curve, extremum })
}

/// Gaussian-noise synthetic spectrum used by the self-tests and the
/// acceptance suite's coverage check.
pub fn synthetic_spectrum(
    truth: &LineshapeParams,
    detunings: &[f64],
    sigma: f64,
    seed: u64,
) -> Vec<NormalizedPoint> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    detunings
        .iter()
        .map(|&d| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            NormalizedPoint {
                detuning_mhz: d,
                transmission: transmission_model(truth, d) + sigma * noise,
                sigma,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{simulate_sequence, SequencePhysics};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn paper_params() -> LineshapeParams {
        LineshapeParams::new(8.20, 35.1, 0.064).unwrap()
    }

    fn default_grid() -> Vec<f64> {
        (0..61).map(|i| 5.1 + i as f64).collect()
    }

    #[test]
    fn normalize_recovers_unity_for_identical_rates() {
        let cfg = MziConfig::default();
        // atom rows carrying exactly the background rate
        let mut records = Vec::new();
        for _ in 0..5 {
            records.push(SpectrumRecord {
                detuning_mhz: 10.0,
                counts_c: 13_000,
                counts_d: 13_000,
                duration_ms: 1000.0,
                atom_present: true,
            });
        }
        records.push(SpectrumRecord {
            detuning_mhz: 10.0,
            counts_c: 26_000,
            counts_d: 26_000,
            duration_ms: 2000.0,
            atom_present: false,
        });
        let points = normalize_spectrum(&records, &cfg).unwrap();
        assert_eq!(points.len(), 1);
        assert_abs_diff_eq!(points[0].transmission, 1.0, epsilon = 3.0 * points[0].sigma);
        assert!(points[0].sigma > 0.0);
    }

    #[test]
    fn normalize_requires_background() {
        let cfg = MziConfig::default();
        let records = [SpectrumRecord {
            detuning_mhz: 10.0,
            counts_c: 100,
            counts_d: 100,
            duration_ms: 100.0,
            atom_present: true,
        }];
        assert!(matches!(
            normalize_spectrum(&records, &cfg),
            Err(EstimationError::MissingBackground)
        ));
    }

    #[test]
    fn normalize_rejects_dark_only_background() {
        let cfg = MziConfig::default();
        // background counts exactly at the dark rate: net rate zero
        let records = [
            SpectrumRecord {
                detuning_mhz: 10.0,
                counts_c: 600,
                counts_d: 600,
                duration_ms: 1000.0,
                atom_present: true,
            },
            SpectrumRecord {
                detuning_mhz: 10.0,
                counts_c: 600,
                counts_d: 600,
                duration_ms: 2000.0,
                atom_present: false,
            },
        ];
        assert!(matches!(
            normalize_spectrum(&records, &cfg),
            Err(EstimationError::BackgroundBelowDark)
        ));
        // background with literally zero counts
        let records = [
            SpectrumRecord {
                detuning_mhz: 10.0,
                counts_c: 600,
                counts_d: 600,
                duration_ms: 1000.0,
                atom_present: true,
            },
            SpectrumRecord {
                detuning_mhz: 10.0,
                counts_c: 0,
                counts_d: 0,
                duration_ms: 2000.0,
                atom_present: false,
            },
        ];
        assert!(matches!(
            normalize_spectrum(&records, &cfg),
            Err(EstimationError::ZeroBackgroundCounts)
        ));
    }

    #[test]
    fn normalize_end_to_end_against_sequence() {
        let truth = paper_params();
        let physics = SequencePhysics::new(truth);
        let cfg = MziConfig::default();
        let records =
            simulate_sequence(&physics, &cfg, &[truth.delta0_mhz()], 400, 0.95, 5).unwrap();
        let points = normalize_spectrum(&records, &cfg).unwrap();
        assert_eq!(points.len(), 1);
        let expected = transmission_model(&truth, truth.delta0_mhz());
        assert!(
            (points[0].transmission - expected).abs() <= 3.0 * points[0].sigma,
            "t = {} +/- {} vs {}",
            points[0].transmission,
            points[0].sigma,
            expected
        );
    }

    #[test]
    fn initial_estimate_close_to_truth() {
        let truth = paper_params();
        let spectrum: Vec<NormalizedPoint> = (0..121)
            .map(|i| {
                let d = 5.1 + 0.5 * i as f64;
                NormalizedPoint {
                    detuning_mhz: d,
                    transmission: transmission_model(&truth, d),
                    sigma: 1e-4,
                }
            })
            .collect();
        let init = estimate_initial(&spectrum).unwrap();
        assert_relative_eq!(init.gamma_mhz(), truth.gamma_mhz(), max_relative = 0.1);
        assert_relative_eq!(init.delta0_mhz(), truth.delta0_mhz(), max_relative = 0.1);
        assert_relative_eq!(init.r_sc(), truth.r_sc(), max_relative = 0.1);
    }

    #[test]
    fn initial_estimate_depth_inversion_boundary() {
        // depth d = 1 corresponds to R = 2
        let depth: f64 = 1.0;
        let r = 2.0 * (1.0 - (1.0 - depth).sqrt());
        assert_eq!(r, 2.0);
    }

    #[test]
    fn initial_estimate_rejects_flat_spectrum() {
        let spectrum: Vec<NormalizedPoint> = (0..20)
            .map(|i| NormalizedPoint {
                detuning_mhz: i as f64,
                transmission: 1.0 + 1e-4 * ((i % 3) as f64 - 1.0),
                sigma: 0.01,
            })
            .collect();
        assert!(matches!(
            estimate_initial(&spectrum),
            Err(EstimationError::NoDip)
        ));
    }

    #[test]
    fn initial_estimate_requires_five_points() {
        let spectrum: Vec<NormalizedPoint> = (0..2)
            .map(|i| NormalizedPoint {
                detuning_mhz: i as f64,
                transmission: 0.9,
                sigma: 0.01,
            })
            .collect();
        assert!(matches!(
            estimate_initial(&spectrum),
            Err(EstimationError::TooFewPoints { .. })
        ));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        for _ in 0..20 {
            let gamma = rng.random_range(2.0..20.0);
            let delta0 = rng.random_range(-50.0..50.0);
            let r_sc = rng.random_range(0.01..1.9);
            let delta = rng.random_range(-80.0..80.0);
            let p = LineshapeParams::new(gamma, delta0, r_sc).unwrap();
            let analytic = transmission_jacobian(&p, delta);
            let fd = |idx: usize| {
                let h = 1e-6 * (1.0 + [gamma, delta0, r_sc][idx].abs());
                let mut lo = [gamma, delta0, r_sc];
                let mut hi = lo;
                lo[idx] -= h;
                hi[idx] += h;
                let p_lo = LineshapeParams::new(lo[0], lo[1], lo[2]).unwrap();
                let p_hi = LineshapeParams::new(hi[0], hi[1], hi[2]).unwrap();
                (transmission_model(&p_hi, delta) - transmission_model(&p_lo, delta)) / (2.0 * h)
            };
            for idx in 0..3 {
                let numeric = fd(idx);
                let scale = analytic[idx].abs().max(1e-8);
                assert!(
                    (analytic[idx] - numeric).abs() <= 1e-6 * scale,
                    "component {idx}: analytic {} vs fd {}",
                    analytic[idx],
                    numeric
                );
            }
        }
    }

    #[test]
    fn noiseless_fit_recovers_exactly() {
        let truth = paper_params();
        let spectrum: Vec<NormalizedPoint> = default_grid()
            .into_iter()
            .map(|d| NormalizedPoint {
                detuning_mhz: d,
                transmission: transmission_model(&truth, d),
                sigma: 0.005,
            })
            .collect();
        let init = estimate_initial(&spectrum).unwrap();
        let fit = fit_transmission(&spectrum, &init).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.gamma_mhz(), 8.20, max_relative = 1e-8);
        assert_relative_eq!(fit.params.delta0_mhz(), 35.1, max_relative = 1e-8);
        assert_relative_eq!(fit.params.r_sc(), 0.064, max_relative = 1e-8);
        assert!(fit.residual_rms < 1e-10);
        // covariance symmetric with matching std_errors
        for a in 0..3 {
            assert_relative_eq!(
                fit.std_errors[a],
                fit.covariance[a][a].sqrt(),
                max_relative = 1e-12
            );
            for b in 0..3 {
                assert_relative_eq!(
                    fit.covariance[a][b],
                    fit.covariance[b][a],
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let truth = paper_params();
        let spectrum = synthetic_spectrum(&truth, &default_grid(), 0.009, 31);
        let init = estimate_initial(&spectrum).unwrap();
        let fit = fit_transmission(&spectrum, &init).unwrap();
        assert!(fit.converged);
        // weighted-residual gradient in internal (scaled) units
        let scales = internal_scales(&fit.params);
        let mut g = [0.0; 3];
        for p in &spectrum {
            let w = 1.0 / (p.sigma * p.sigma);
            let r = p.transmission - transmission_model(&fit.params, p.detuning_mhz);
            let j = transmission_jacobian(&fit.params, p.detuning_mhz);
            for k in 0..3 {
                g[k] += w * r * j[k] * scales[k];
            }
        }
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn fit_invariant_under_weight_rescaling() {
        let truth = paper_params();
        let spectrum = synthetic_spectrum(&truth, &default_grid(), 0.009, 17);
        let init = estimate_initial(&spectrum).unwrap();
        let fit_a = fit_transmission(&spectrum, &init).unwrap();
        let rescaled: Vec<NormalizedPoint> = spectrum
            .iter()
            .map(|p| NormalizedPoint {
                sigma: p.sigma * 3.0,
                ..*p
            })
            .collect();
        let fit_b = fit_transmission(&rescaled, &init).unwrap();
        assert_relative_eq!(
            fit_a.params.gamma_mhz(),
            fit_b.params.gamma_mhz(),
            max_relative = 1e-8
        );
        assert_relative_eq!(
            fit_a.params.delta0_mhz(),
            fit_b.params.delta0_mhz(),
            max_relative = 1e-8
        );
        assert_relative_eq!(fit_a.params.r_sc(), fit_b.params.r_sc(), max_relative = 1e-8);
    }

    #[test]
    fn noisy_fit_matches_paper_scale_uncertainties() {
        // noise tuned so the reported errors land near the published
        // 0.47 MHz / 0.2 MHz / 0.004 scale
        let truth = paper_params();
        let spectrum = synthetic_spectrum(&truth, &default_grid(), 0.005, 4242);
        let init = estimate_initial(&spectrum).unwrap();
        let fit = fit_transmission(&spectrum, &init).unwrap();
        assert!(fit.converged);
        for ((value, truth_value), err) in [
            (fit.params.gamma_mhz(), 8.20),
            (fit.params.delta0_mhz(), 35.1),
            (fit.params.r_sc(), 0.064),
        ]
        .into_iter()
        .zip(fit.std_errors)
        {
            assert!(
                (value - truth_value).abs() <= 3.0 * err,
                "{value} vs {truth_value} +/- {err}"
            );
        }
        let reference = [0.47, 0.2, 0.004];
        for (err, reference) in fit.std_errors.iter().zip(reference) {
            assert!(
                *err >= reference / 2.0 && *err <= reference * 2.0,
                "std error {err} outside factor 2 of {reference}"
            );
        }
    }

    #[test]
    fn fit_requires_enough_points_and_valid_sigmas() {
        let truth = paper_params();
        let two: Vec<NormalizedPoint> = [30.0, 40.0]
            .iter()
            .map(|&d| NormalizedPoint {
                detuning_mhz: d,
                transmission: transmission_model(&truth, d),
                sigma: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_transmission(&two, &truth),
            Err(EstimationError::TooFewPoints { .. })
        ));
        let mut bad = synthetic_spectrum(&truth, &default_grid(), 0.01, 1);
        bad[3].sigma = 0.0;
        assert!(matches!(
            fit_transmission(&bad, &truth),
            Err(EstimationError::InvalidUncertainty)
        ));
    }

    #[test]
    fn convolved_fit_recovers_convolved_truth() {
        let truth = paper_params();
        let fwhm = 0.75;
        // data generated from the convolved model on the fit grid
        let grid = default_grid();
        let (conv, _) = model_set(&truth, &grid, Some(fwhm)).unwrap();
        let spectrum: Vec<NormalizedPoint> = grid
            .iter()
            .zip(&conv)
            .map(|(&d, &t)| NormalizedPoint {
                detuning_mhz: d,
                transmission: t,
                sigma: 0.005,
            })
            .collect();
        let init = estimate_initial(&spectrum).unwrap();
        let options = FitOptions {
            convolve_fwhm_mhz: Some(fwhm),
            ..FitOptions::default()
        };
        let fit = fit_transmission_with(&spectrum, &init, &options).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.gamma_mhz(), 8.20, max_relative = 1e-6);
        assert_relative_eq!(fit.params.delta0_mhz(), 35.1, max_relative = 1e-6);
        assert_relative_eq!(fit.params.r_sc(), 0.064, max_relative = 1e-6);
        // fitting the bare model against convolved data over-estimates the width
        let bare = fit_transmission(&spectrum, &init).unwrap();
        assert!(bare.params.gamma_mhz() > truth.gamma_mhz());
    }

    #[test]
    fn coverage_of_reported_intervals() {
        // 200 synthetic spectra: the 1-sigma interval covers the truth at a
        // rate compatible with 68% (binomial band 58-78%)
        let truth = paper_params();
        let grid = default_grid();
        let trials = 200;
        let mut covered = [0usize; 3];
        for trial in 0..trials {
            let spectrum = synthetic_spectrum(&truth, &grid, 0.009, 10_000 + trial);
            let init = estimate_initial(&spectrum).unwrap();
            let fit = fit_transmission(&spectrum, &init).unwrap();
            assert!(fit.converged);
            let truths = [8.20, 35.1, 0.064];
            for k in 0..3 {
                let fitted = [
                    fit.params.gamma_mhz(),
                    fit.params.delta0_mhz(),
                    fit.params.r_sc(),
                ][k];
                if (fitted - truths[k]).abs() <= fit.std_errors[k] {
                    covered[k] += 1;
                }
            }
        }
        for (k, &count) in covered.iter().enumerate() {
            let rate = count as f64 / trials as f64;
            assert!(
                (0.58..=0.78).contains(&rate),
                "parameter {k}: coverage {rate}"
            );
        }
    }

    #[test]
    fn phase_prediction_from_fit() {
        let truth = paper_params();
        let spectrum: Vec<NormalizedPoint> = default_grid()
            .into_iter()
            .map(|d| NormalizedPoint {
                detuning_mhz: d,
                transmission: transmission_model(&truth, d),
                sigma: 0.002,
            })
            .collect();
        let init = estimate_initial(&spectrum).unwrap();
        let fit = fit_transmission(&spectrum, &init).unwrap();
        let grid: Vec<f64> = (0..121).map(|i| 5.1 + 0.5 * i as f64).collect();
        let prediction = predict_phase_curve(&fit, &grid).unwrap();
        let extremum = prediction.extremum.unwrap();
        assert_abs_diff_eq!(extremum.phase_deg, 0.932, epsilon = 2e-3);
        // odd symmetry of the predicted curve around delta0
        let phase_at = |d: f64| {
            prediction
                .curve
                .iter()
                .find(|(x, _)| (*x - d).abs() < 1e-9)
                .unwrap()
                .1
        };
        assert_abs_diff_eq!(phase_at(35.1 - 10.0), -phase_at(35.1 + 10.0), epsilon = 1e-9);

        // a zero scattering ratio produces an identically zero curve and no extremum
        let flat = FitResult {
            params: LineshapeParams::new(8.2, 35.1, 0.0).unwrap(),
            std_errors: [0.0; 3],
            covariance: [[0.0; 3]; 3],
            residual_rms: 0.0,
            n_points: 61,
            converged: true,
        };
        let p = predict_phase_curve(&flat, &grid).unwrap();
        assert!(p.extremum.is_none());
        assert!(p.curve.iter().all(|(_, phi)| phi.abs() < 1e-12));

        let unconverged = FitResult {
            converged: false,
            ..fit
        };
        assert!(matches!(
            predict_phase_curve(&unconverged, &grid),
            Err(EstimationError::NotConverged)
        ));
    }
}
