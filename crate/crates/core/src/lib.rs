//! Training and evaluation kernel for a CTC recognition head with an
//! optional lateral inhibition layer, trained with surrogate gradients.

pub mod checkpoint;
pub mod ctc;
pub mod error;
pub mod harness;
pub mod head;
pub mod li;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use head::{AcousticHead, Alphabet, HeadKind};
pub use li::{LiParams, SurrogateMode};
pub use linalg::{Matrix, Vector};
