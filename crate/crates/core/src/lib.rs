//! Hedging a short European call in a frictional trinomial market.
//!
//! The crate is organised bottom-up:
//!
//! * [`market`] builds the recombining trinomial lattice and samples paths.
//! * [`instruments`] holds the call payoff and proportional cost primitives.
//! * [`mdp`] defines the hedging state, the 21-action space, self-financing
//!   dynamics, the reward models and the gauge that maps losses into `[-1, 1]`.
//! * [`oracle`] contains exact reference solvers: risk-neutral pricing,
//!   backward-induction hedgers, brute-force enumeration and pricing rules.
//! * [`search`] is the UCT engine over alternating decision and chance nodes.
//! * [`apprentice`] is the policy/value network and the expert-iteration loop.
//! * [`cli`] wires everything into reproducible experiment commands.

pub mod apprentice;
pub mod cli;
pub mod error;
pub mod instruments;
pub mod market;
pub mod mdp;
pub mod oracle;
pub mod search;
pub mod stats;

pub use error::{HedgeError, Result};
