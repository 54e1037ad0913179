//! Planar photoacoustic tomography toolkit.
//!
//! Axis convention for images and volumes: lateral axes first, depth last,
//! C order (depth varies fastest). Depth index 0 lies on the detection plane.

pub mod error;
pub mod field;
pub mod forward;
pub mod masks;
pub mod metrics;
pub mod nufft;
pub mod recon;

pub use error::{PatError, Result};
pub use field::{ScalarField, SensorRecord};
pub use nufft::WindowSpec;
