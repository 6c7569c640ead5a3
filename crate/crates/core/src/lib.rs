//! A task-based runtime following the sequential task-flow model.
//!
//! One thread inserts tasks into a [`TaskGraph`], declaring how each task
//! accesses its [`Data`] objects. The runtime derives the dependencies from
//! the insertion order, so a parallel run produces the same result as running
//! the tasks one by one in that order. Tasks execute on the workers of a
//! [`ComputeEngine`]: host threads and workers of simulated devices with
//! their own memory.

pub mod comms;
mod data;
mod deps;
mod device;
mod engine;
mod error;
mod graph;
mod scheduler;
mod speculation;
mod task;
pub mod trace;

pub use data::{ArrayView, Data, DataArray, DataMut, DataRef};
pub use deps::{AccessMode, HandleId, HandleRegistry, SlotKind};
pub use device::{Descriptor, DeviceArena, DeviceContext, Movable, Mover};
pub use engine::{
    worker_census, ComputeEngine, EngineBuilder, WorkerCensus, WorkerKind, WorkerTeam,
    DEFAULT_DEVICE_MEMORY,
};
pub use error::{CommError, DeviceError, Result, RuntimeError};
pub use graph::{GraphBuilder, GraphStats, TaskBuilder, TaskGraph, DEFAULT_MAX_MESSAGE};
pub use scheduler::{scheduler_by_name, FifoScheduler, PriorityScheduler, Scheduler};
pub use speculation::SpeculationPair;
pub use task::{TaskContext, TaskId, TaskRef, TaskState, TaskViewer};
