//! Actor–critic reinforcement learning with logit best responses in
//! continuous-action potential games.
//!
//! The crate is organised bottom-up:
//!
//! * [`measure`]: mixed strategies on compact intervals (weighted atoms and
//!   grid densities), the actor update, and bounded-Lipschitz distances.
//! * [`game`]: games, utility slices, potential validation, Wonderful Life
//!   Utility construction and the builtin test games.
//! * [`logit`]: the logit (Gibbs) best response, grid sampling and the
//!   damped fixed-point solver for logit equilibria.
//! * [`dynamics`]: the mean-field logit best-response flow, its Lyapunov
//!   function and the KL form of the Lyapunov derivative.
//! * [`learner`]: the two-timescale actor–critic iteration itself.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod learner;
pub mod logit;
pub mod measure;

pub use error::{Error, Result};
