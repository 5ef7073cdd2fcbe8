pub mod error;
pub mod scalar;
pub mod theta;
pub mod data;
pub mod jet;
pub mod conditions;
pub mod divisor;
pub mod wave;
pub mod psdo;
pub mod cm;
pub mod spectral;

pub use error::{Error, ErrorClass, Result};
pub use num_complex::Complex64;
pub use scalar::{Real, Scalar};

/// Double-precision period matrix.
pub type PeriodMatrix = theta::PeriodMatrix<f64>;
pub type ThetaResult = theta::ThetaResult<f64>;
pub type DerivativeSpec = theta::DerivativeSpec<f64>;
pub type Jet2 = jet::Jet2<Complex64>;
