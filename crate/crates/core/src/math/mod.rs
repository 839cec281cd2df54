//! Deterministic random-number streams, small dense linear algebra and
//! normal-distribution utilities shared by the other modules.

mod linalg;
mod normal;
mod rng;

pub use linalg::{cholesky, LowerTriangularFactor, Matrix};
pub use normal::{normal_cdf, normal_pdf};
pub use rng::{derive_seed, NormalSampler, RandomStream};
