//! Compact interaction-matrix models of metasurface-programmable scattering
//! environments: a synthetic ground truth, calibration from coherent,
//! phaseless or masked data, linear and neural baselines, accuracy metrics
//! and wave control.
//!
//! Numerical code is generic over [`scalar::Real`]; the aliases below fix
//! it to `f64`, which is what the baselines, sweeps and file formats use.

pub mod baselines;
pub mod calib;
pub mod cavity;
pub mod control;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Complex = scalar::Cplx<f64>;
pub type Params = model::CompactModelParams<f64>;
pub type Scattering = model::ScatteringMatrix<f64>;
pub type Data = dataset::Dataset<f64>;
pub type Cavity = cavity::CavityInstance<f64>;
pub type Truth = cavity::GroundTruth<f64>;
pub type Model = calib::CalibratedModel<f64>;
pub type Pilots = calib::PilotSet<f64>;
pub type Wavefront = control::Wavefront<f64>;

pub type ParamsF32 = model::CompactModelParams<f32>;
pub type ScatteringF32 = model::ScatteringMatrix<f32>;
