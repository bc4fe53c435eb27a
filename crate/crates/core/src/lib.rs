//! CRC-aided belief-propagation decoding of polar codes over factor-graph
//! permutations, with the permutation bundle for each failed frame chosen
//! online by a multi-armed bandit.
//!
//! The modules build on each other bottom-up:
//!
//! - [`polar`]: code construction, encoding, CRC.
//! - [`channel`]: BPSK/AWGN and channel LLRs.
//! - [`permutation`]: stage permutations and their bit-index maps.
//! - [`bp`]: min-sum BP and the CRC-aided decoder.
//! - [`bandit`]: ε-greedy, UCB and Thompson sampling.
//! - [`rl`]: the bandit-driven decoder and its baselines.
//! - [`sim`]: Monte-Carlo campaigns and result files.

pub mod bandit;
pub mod bp;
pub mod channel;
pub mod error;
pub mod permutation;
pub mod polar;
pub mod rl;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
