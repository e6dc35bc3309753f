//! Moderate actor-critic methods for continuous control.
//!
//! Critics bootstrap from a blend of the target critic and a protester
//! network `V_ψ` fitted as a low expectile of the online critic, which damps
//! the overestimation of greedy bootstrapping.

pub mod agents;
pub mod error;
pub mod expectile;
pub mod harness;
pub mod mdp;
pub mod nn;
pub mod replay;
pub mod seeding;
pub mod tabular;
pub mod targets;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tabular.md")]
    mod tabular {}
    #[doc = include_str!("../../../book/src/expectiles.md")]
    mod expectiles {}
    #[doc = include_str!("../../../book/src/targets.md")]
    mod targets {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
