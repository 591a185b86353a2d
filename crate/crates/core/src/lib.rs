//! Critical multitype Galton-Watson forests and discrete snakes.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectra`]: offspring models, mean matrices, Perron vectors and the
//!   variance constant `sigma`.
//! * [`forest`]: typed planar forests stored in depth-first arrays, and their
//!   integer encodings (height process, Lukasiewicz walk, type counts).
//! * [`sampler`]: exact samplers for unconditioned, size-biased (spine) and
//!   conditioned trees, driven by reproducible counter-based RNG streams.
//! * [`reduce`]: type reductions of forests and exact distributional
//!   recursions (size laws, component counts and height tails).
//! * [`snake`]: spatial displacement laws and discrete snakes.
//! * [`verify`]: Monte Carlo experiments against Brownian limit functionals.
//! * [`cli`]: the `mgw` command line front end.
//!
//! Types are 0-based everywhere inside the library. File formats and the CLI
//! use 1-based type labels.

pub mod cli;
pub mod error;
pub mod forest;
pub mod reduce;
pub mod sampler;
pub mod scalar;
pub mod snake;
pub mod spectra;
pub mod verify;

pub use error::{Error, Result};
pub use forest::{Encodings, PlanarForest};
pub use sampler::{OffspringSampler, RngStream};
pub use spectra::{OffspringModel, SpectralData};
