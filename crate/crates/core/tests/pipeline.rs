//! Library-level pipeline test: thermal motion feeding the sequence
//! simulation, normalization, fitting, and phase prediction in one pass.

use atomphase_core::estimation::{
    estimate_initial, fit_transmission, normalize_spectrum, predict_phase_curve,
};
use atomphase_core::interferometer::{simulate_sequence, MziConfig, SequencePhysics};
use atomphase_core::lineshape::{phase_shift, LineshapeParams};
use atomphase_core::motion::{
    effective_scattering_ratio_quadrature, PositionSpread, TrapConfig,
};
use atomphase_core::FocusGeometry;

#[test]
fn motion_reduced_spectrum_round_trip() {
    let bare = LineshapeParams::new(8.20, 35.1, 0.16).unwrap();
    let geometry = FocusGeometry::default();
    let spread = PositionSpread::thermal(&TrapConfig::default()).unwrap();
    let physics = SequencePhysics::with_motion(bare, &spread, &geometry).unwrap();
    let reduced = physics.effective_lineshape().r_sc();
    let expected =
        effective_scattering_ratio_quadrature(bare.r_sc(), &spread, &geometry, 40);
    assert!((reduced - expected).abs() < 1e-12);
    assert!(reduced < bare.r_sc());

    let cfg = MziConfig::default();
    let grid: Vec<f64> = (0..61).map(|i| 5.1 + i as f64).collect();
    let records = simulate_sequence(&physics, &cfg, &grid, 600, 0.97, 99).unwrap();
    assert!(records.iter().any(|r| !r.atom_present));

    let spectrum = normalize_spectrum(&records, &cfg).unwrap();
    assert_eq!(spectrum.len(), 61);
    let init = estimate_initial(&spectrum).unwrap();
    let fit = fit_transmission(&spectrum, &init).unwrap();
    assert!(fit.converged);

    // the fit sees the motion-reduced scattering ratio, not the bare one
    assert!(
        (fit.params.r_sc() - reduced).abs() <= 4.0 * fit.std_errors[2],
        "fitted r_sc {} vs reduced {} (err {})",
        fit.params.r_sc(),
        reduced,
        fit.std_errors[2]
    );
    assert!((fit.params.r_sc() - bare.r_sc()).abs() > 6.0 * fit.std_errors[2]);

    let prediction = predict_phase_curve(&fit, &grid).unwrap();
    let extremum = prediction.extremum.unwrap();
    // prediction is consistent with the phase model at the fitted parameters
    let direct = phase_shift(&fit.params, extremum.delta_mhz);
    assert!((extremum.phase_deg - direct).abs() < 1e-9);
    assert!(extremum.phase_deg > 0.0);
}
