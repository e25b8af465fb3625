//! Angular contrastive learning, from first principles.
//!
//! The crate is `no_std` (with `alloc`) and holds every piece of numeric work:
//! NT-Xent and angular-margin losses with analytic gradients, embedding-quality
//! metrics, a small MLP encoder with a batch-normalized projection head, the
//! optimizer, data generation and augmentation, and the training loops.
//! File formats, configuration parsing and the command line live in the
//! `acl-lab` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod checkpoint;
pub mod data;
pub mod encoder;
mod error;
pub mod losses;
pub(crate) mod math;
pub mod metrics;
pub mod numerics;
pub mod optim;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
pub use rng::CounterRng;
