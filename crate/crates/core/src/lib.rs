//! Kernel reconstruction of time-vertex graph signals.

pub mod baselines;
pub mod error;
pub mod graph;
pub mod harness;
pub mod hexfloat;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod online_rff;
pub mod quadrature;
pub mod reconstruct;
pub mod variance;

pub use error::{Error, ErrorKind, Result};
pub use graph::{Graph, Gso};
pub use kernels::{GraphKernel, KernelSpec, ProductKernel, TimeKernel};
pub use quadrature::TimeDomain;
pub use reconstruct::{fit_krr, GpPosterior, KrrModel, PosteriorQuery, Sample, SampleSet};
pub use online_rff::{RffFeatureMap, RffPredictor};
