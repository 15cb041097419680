//! Simulation and parameter estimation for the phase shift and extinction a
//! single trapped atom imposes on a weakly driven, strongly focused probe
//! beam inside a locked Mach-Zehnder interferometer.
//!
//! The crate is organized around the signal chain of such an experiment:
//!
//! * [`lineshape`] — complex atomic response, phase-shift and transmission
//!   models as functions of detuning,
//! * [`focus`] — beam geometry, focusing strength and the scattering ratio
//!   `R_sc(u)`, including an independent far-field overlap computation,
//! * [`motion`] — thermal position spread of the trapped atom and the
//!   resulting reduction of the effective scattering ratio,
//! * [`interferometer`] — forward model of the locked interferometer with
//!   photon counting, plus transmission/phase extraction from output powers,
//! * [`estimation`] — weighted least-squares fit of transmission spectra and
//!   phase-curve prediction from the fitted parameters.
//!
//! All detunings and linewidths are linear frequencies in MHz; every model in
//! this crate depends only on the ratio of detuning to linewidth, so no 2*pi
//! factors appear anywhere.

pub mod estimation;
pub mod focus;
pub mod interferometer;
pub mod lineshape;
pub mod motion;
pub mod quadrature;
pub mod special;

pub use estimation::{FitResult, NormalizedPoint};
pub use focus::FocusGeometry;
pub use interferometer::{MziConfig, PowerPair, SpectrumRecord};
pub use lineshape::{AtomicTransition, ComplexAmplitude, LineshapeParams};
pub use motion::{PositionSpread, TrapConfig};
