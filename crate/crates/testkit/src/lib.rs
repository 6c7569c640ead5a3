//! Random program generators and reference oracles for `stf-core` tests.
//!
//! Everything here is deliberately independent of the runtime's internals:
//! the oracles replay the model's rules on plain data so that runtime output
//! can be compared against them.

pub mod comm;
pub mod devprog;
pub mod dot;
pub mod lru;
pub mod matrix;
pub mod program;
pub mod sched;
pub mod svg;

pub use matrix::Matrix;
pub use program::{host_engine, run_on, Program, ProgramConfig, RunOutcome, TaskSpec};
pub use sched::ReversingScheduler;

/// Seeded generator with a stream that is stable across platforms.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
