//! Normalized iterated sums and integrals of bounded paths, the
//! contraction-principle rate function they inherit from a sample-path large
//! deviations principle, and numerical checks of their regularity, law of
//! large numbers and decay rates.

pub mod diagnostics;
pub mod error;
pub mod mcprobe;
pub mod path;
pub mod processes;
pub mod rate;
pub mod rng;
pub mod signature;
pub mod tensor;

pub use error::{Error, Result};
pub use path::{PiecewisePath, SampledSequence};
pub use signature::SignatureStack;
pub use tensor::LevelTensor;
