use std::io;

use thiserror::Error;

use crate::deps::HandleId;
use crate::task::TaskId;

/// Errors surfaced by the runtime to callers.
#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("object {0:#x} is already registered")]
    DuplicateRegistration(usize),
    #[error("object {0:#x} is not registered")]
    NotRegistered(usize),
    #[error("task graph has no compute engine attached")]
    NoEngine,
    #[error("task graph is already attached to a compute engine")]
    AlreadyAttached,
    #[error("task declares more than one access to the same object")]
    DuplicateAccess,
    #[error("task has no callable")]
    NoCallable,
    #[error("host and device callables return different types")]
    CallableMismatch,
    #[error("array index {index} is out of bounds for an array of {len} elements")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("worker team has no workers")]
    EmptyTeam,
    #[error("device index {0} is not configured")]
    UnknownDevice(usize),
    #[error("device task accesses an object without device support (handle {0})")]
    NotMovable(HandleId),
    #[error("speculation: {0}")]
    Speculation(String),
    #[error("task {0} was disabled: its speculative branch was cancelled")]
    TaskDisabled(TaskId),
    #[error("task {id} failed: {message}")]
    TaskFailed { id: TaskId, message: String },
    #[error("compute engine is poisoned by an earlier task failure")]
    Poisoned,
    #[error("graph has no communication agent attached")]
    NoCommAgent,
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error("internal consistency violation: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Clone for RuntimeError {
    fn clone(&self) -> Self {
        match self {
            RuntimeError::TaskFailed { id, message } => RuntimeError::TaskFailed {
                id: *id,
                message: message.clone(),
            },
            RuntimeError::Device(e) => RuntimeError::Device(e.clone()),
            RuntimeError::Comm(e) => RuntimeError::Comm(e.clone()),
            RuntimeError::TaskDisabled(id) => RuntimeError::TaskDisabled(*id),
            RuntimeError::Poisoned => RuntimeError::Poisoned,
            other => RuntimeError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("object needs {needed} bytes but the device arena holds {capacity}")]
    TooLarge { needed: usize, capacity: usize },
    #[error("cannot free {needed} bytes: every resident block is in use")]
    Unsatisfiable { needed: usize },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CommError {
    #[error("rank {rank} is outside a communicator of size {size}")]
    BadRank { rank: usize, size: usize },
    #[error("tag {0:#x} uses reserved bits")]
    ReservedTag(u32),
    #[error("announced message size {size} exceeds the limit of {limit} bytes")]
    MessageTooLarge { size: u64, limit: u64 },
    #[error("payload of {actual} bytes does not match the announced size {announced}")]
    SizeMismatch { announced: u64, actual: u64 },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("broadcast sequence diverged: expected #{expected}, received #{received}")]
    BroadcastDivergence { expected: u64, received: u64 },
    #[error("deserialization failed: {0}")]
    Decode(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

pub type Result<T, E = RuntimeError> = std::result::Result<T, E>;
