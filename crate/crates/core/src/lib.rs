//! Exact policy iteration on finite MDPs, with constructions that force
//! long runs out of the common PI variants and tools to check them.

pub mod codec;
pub mod engine;
pub mod error;
pub mod families;
pub mod linalg;
pub mod mdp;
pub mod rational;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{Mdp, MdpDefinition, Policy};
pub use rational::Rational;
