//! Belief-constrained dialogue-act engine.
//!
//! The crate is layered bottom-up:
//!
//! * [`epistemic`] is the exact state-space layer: information partitions,
//!   events as state sets, the knowledge operator and probabilistic beliefs.
//! * [`belief`] lifts that to a finite world set of natural-language events
//!   and the estimators that score them from a dialogue context.
//! * [`selection`] filters the world set through the ε-constraints of the
//!   adversarial and alignment acts and picks conditioning events uniformly.
//! * [`generation`] renders the conditioned prompts and talks to generators.
//! * [`games`] holds the keeper-burglar, mutual-friends and negotiation
//!   environments, and [`harness`] runs seeded experiments over them.

pub mod belief;
pub mod epistemic;
mod error;
pub mod games;
pub mod generation;
pub mod harness;
pub mod seed;
pub mod selection;
mod text;

pub use error::{Error, Result};
