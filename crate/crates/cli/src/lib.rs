//! Command-line harness for `stf-core`: the overhead protocol and demos.

pub mod demo;
pub mod overhead;
pub mod sleep;

pub use demo::{run_demo, DemoOptions, DEMOS};
pub use overhead::{run_overhead, BenchConfig, BenchReport, Mode, RepRow, TaskTimes};
pub use sleep::precise_sleep;
