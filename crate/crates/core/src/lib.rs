//! Link-level simulation suite for the L-user AWGN broadcast channel with
//! passive, possibly noisy, channel-output feedback.
//!
//! The crate implements four linear feedback codes and the machinery to
//! compare them by Monte Carlo:
//!
//! - [`ol`]: the Ozarow-Leung two-user LMMSE scheme, its two-sample
//!   ("enhanced") estimator variant, and the single-user Schalkwijk-Kailath
//!   recursion used as the TDD baseline.
//! - [`lqg`]: the control-theoretic LQG broadcast code.
//! - [`bmcl`]: the β-parameterised SNR-maximising code with Hadamard
//!   spreading, its capacity formulas and closed-form noise terms.
//! - [`harness`]: seeded, order-independent Monte Carlo, sweeps and CSV output.
//!
//! Randomness is derived per trial from `(seed, trial_index)` so results do
//! not depend on the number of worker threads.

pub mod bmcl;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod linear;
pub mod lqg;
pub mod modulation;
pub mod ol;
pub mod roots;
pub mod scheme;
pub mod stats;

pub use channel::{ChannelConfig, TrialTape};
pub use error::{Error, Result};
pub use modulation::PamConstellation;
pub use scheme::FeedbackCode;
