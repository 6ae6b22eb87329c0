//! Online partially linear kernel adaptive filtering for NOMA uplink detection.
//!
//! The filter lives in the sum of a linear and a Gaussian RKHS and is trained
//! with a sliding-window adaptive projected subgradient iteration. The Gaussian
//! part is kept sparse by an approximate-linear-dependence dictionary with a
//! recursively maintained Gram inverse.
//!
//! Besides the learning code the crate ships a single-cluster NOMA uplink
//! simulator ([`sim`]), a genie-aided MMSE-SIC baseline ([`mmse_sic`]) and an
//! experiment harness ([`harness`]) producing BER/RMSE curves as CSV.

pub mod dictionary;
pub mod error;
pub mod filter;
pub mod harness;
pub mod kernel;
pub mod mmse_sic;
pub mod oracle;
pub mod sim;

pub use dictionary::{Admission, GaussianDictionary, ProjectionResult};
pub use error::{Error, Result};
pub use filter::{FilterConfig, PartiallyLinearFilter, TrainingSample};
pub use harness::{DetectorKind, ExperimentConfig, MetricsRecord};

pub use kernel::{KernelConfig, RealSample};
pub use sim::{ClusterScenario, CoherenceBlock, DeviceProfile};

/// Complex baseband sample type used throughout.
pub type C64 = num_complex::Complex64;
