//! Common randomness generation from correlated sources.

pub mod binomial_tails;
pub mod bits;
pub mod bounds;
pub mod error;
pub mod estimator;
pub mod codebooks;
pub mod cr_scheme;
pub mod gaussian_tails;
pub mod gf2m;
pub mod gip_sketch;
mod quad;
pub mod rng;
pub mod sources;

pub use bits::BitVector;
pub use error::{Error, Result};
pub use sources::{CorrelationSource, SamplePair, Samples, SourceKind};
pub use bounds::CrBoundQuery;
pub use codebooks::{Codebook, CodebookDescriptor, CodebookFamily, Coloring};
pub use cr_scheme::{RunOutcome, SchemeParams};
pub use estimator::{EstimateReport, TrialPlan};
pub use gip_sketch::{Decision, GipInstance, SketchBits};
