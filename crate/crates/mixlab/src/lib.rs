//! Agnostic learning from simulated mixture-of-superpositions quantum examples,
//! and interactive verification of such learners by a classical verifier.

#![allow(clippy::too_many_arguments)]

pub mod distribution;
pub mod estimation;
pub mod experiments;
pub mod fourier;
pub mod learners;
pub mod oracles;
pub mod theory;
pub mod verification;
