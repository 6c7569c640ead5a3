//! Tasks, their execution context and the viewers handed back at insertion.

use std::any::Any;
use std::fmt;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU8, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock, Weak};

use parking_lot::{Condvar, Mutex};

use crate::comms::CommOp;
use crate::data::{Data, DataArray, DataCell, DataMut, DataRef};
use crate::deps::{AccessMode, DataHandle};
use crate::device::DeviceContext;
use crate::engine::WorkerKind;
use crate::error::{Result, RuntimeError};
use crate::graph::GraphShared;
use crate::speculation::SpecRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TaskState {
    Inserted = 0,
    Ready = 1,
    Executing = 2,
    Finished = 3,
    Disabled = 4,
}

impl TaskState {
    fn from_u8(v: u8) -> TaskState {
        match v {
            0 => TaskState::Inserted,
            1 => TaskState::Ready,
            2 => TaskState::Executing,
            3 => TaskState::Finished,
            _ => TaskState::Disabled,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Finished | TaskState::Disabled)
    }
}

pub(crate) type Output = Box<dyn Any + Send>;
pub(crate) type HostFn = Arc<Mutex<dyn FnMut(&TaskContext<'_>) -> Output + Send>>;
pub(crate) type DeviceFn = Arc<Mutex<dyn FnMut(&DeviceContext<'_>) -> Output + Send>>;

pub(crate) enum TaskBody {
    Compute {
        host: Option<HostFn>,
        device: Option<DeviceFn>,
    },
    Comm(CommOp),
}

/// One declared access of a task, resolved to its ledger slot.
pub(crate) struct TaskAccess {
    /// Identity of the object the callable names (differs from the handle's
    /// object for speculative duplicates).
    pub user_key: usize,
    pub handle: Arc<DataHandle>,
    pub mode: AccessMode,
    pub slot: usize,
}

pub(crate) struct Task {
    pub id: TaskId,
    pub graph: Weak<GraphShared>,
    pub priority: i32,
    pub name: Mutex<Option<String>>,
    pub accesses: OnceLock<Vec<TaskAccess>>,
    /// Unsatisfied slot activations, plus one while insertion is in progress.
    pub pending: AtomicUsize,
    /// Set while the task sits in (or is on its way to) a scheduler.
    pub queued: AtomicBool,
    state: AtomicU8,
    released: AtomicBool,
    /// Number of times the body ran. At most one.
    pub executions: AtomicU32,
    pub body: TaskBody,
    pub spec: SpecRole,
    pub internal: bool,
    result: Mutex<Option<Output>>,
    done: Mutex<bool>,
    done_cv: Condvar,
}

impl Task {
    pub(crate) fn new(
        id: TaskId,
        graph: Weak<GraphShared>,
        priority: i32,
        name: Option<String>,
        body: TaskBody,
        spec: SpecRole,
        internal: bool,
    ) -> Task {
        Task {
            id,
            graph,
            priority,
            name: Mutex::new(name),
            accesses: OnceLock::new(),
            pending: AtomicUsize::new(1),
            queued: AtomicBool::new(false),
            state: AtomicU8::new(TaskState::Inserted as u8),
            released: AtomicBool::new(false),
            executions: AtomicU32::new(0),
            body,
            spec,
            internal,
            result: Mutex::new(None),
            done: Mutex::new(false),
            done_cv: Condvar::new(),
        }
    }

    pub(crate) fn accesses(&self) -> &[TaskAccess] {
        self.accesses.get().map_or(&[], Vec::as_slice)
    }

    pub(crate) fn state(&self) -> TaskState {
        TaskState::from_u8(self.state.load(Ordering::SeqCst))
    }

    pub(crate) fn set_state(&self, state: TaskState) {
        self.state.store(state as u8, Ordering::SeqCst);
    }

    pub(crate) fn transition(&self, from: TaskState, to: TaskState) -> bool {
        self.state
            .compare_exchange(from as u8, to as u8, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    /// Moves a not-yet-executing task to `Disabled`. Idempotent.
    pub(crate) fn disable(&self) -> bool {
        loop {
            let cur = self.state();
            match cur {
                TaskState::Inserted | TaskState::Ready => {
                    if self.transition(cur, TaskState::Disabled) {
                        return true;
                    }
                }
                TaskState::Disabled => return true,
                _ => return false,
            }
        }
    }

    pub(crate) fn mark_released(&self) -> bool {
        !self.released.swap(true, Ordering::SeqCst)
    }

    pub(crate) fn is_comm(&self) -> bool {
        matches!(self.body, TaskBody::Comm(_))
    }

    pub(crate) fn host_fn(&self) -> Option<&HostFn> {
        match &self.body {
            TaskBody::Compute { host, .. } => host.as_ref(),
            TaskBody::Comm(_) => None,
        }
    }

    pub(crate) fn device_fn(&self) -> Option<&DeviceFn> {
        match &self.body {
            TaskBody::Compute { device, .. } => device.as_ref(),
            TaskBody::Comm(_) => None,
        }
    }

    pub(crate) fn runs_on(&self, kind: WorkerKind) -> bool {
        match kind {
            WorkerKind::Host => self.host_fn().is_some(),
            WorkerKind::Device(_) => self.device_fn().is_some(),
        }
    }

    pub(crate) fn has_commutative(&self) -> bool {
        self.accesses()
            .iter()
            .any(|a| a.mode == AccessMode::CommutativeWrite)
    }

    pub(crate) fn display_name(&self) -> String {
        self.name
            .lock()
            .clone()
            .unwrap_or_else(|| self.id.to_string())
    }

    pub(crate) fn store_result(&self, value: Output) {
        *self.result.lock() = Some(value);
    }

    pub(crate) fn with_result<R: 'static, F: FnOnce(Option<&R>) -> X, X>(&self, f: F) -> X {
        let guard = self.result.lock();
        f(guard.as_ref().and_then(|b| b.downcast_ref::<R>()))
    }

    pub(crate) fn notify_done(&self) {
        let mut done = self.done.lock();
        *done = true;
        self.done_cv.notify_all();
    }

    pub(crate) fn wait_done(&self) {
        let mut done = self.done.lock();
        while !*done {
            self.done_cv.wait(&mut done);
        }
    }
}

/// Scheduler-facing handle to a ready task.
#[derive(Clone)]
pub struct TaskRef(pub(crate) Arc<Task>);

impl TaskRef {
    /// A task detached from any graph, for exercising schedulers directly.
    /// Its callables do nothing.
    pub fn standalone(id: u64, priority: i32, host: bool, device: bool) -> TaskRef {
        let host: Option<HostFn> = host
            .then(|| Arc::new(Mutex::new(|_: &TaskContext<'_>| Box::new(()) as Output)) as HostFn);
        let device: Option<DeviceFn> = device.then(|| {
            Arc::new(Mutex::new(|_: &DeviceContext<'_>| Box::new(()) as Output)) as DeviceFn
        });
        TaskRef(Arc::new(Task::new(
            TaskId(id),
            Weak::new(),
            priority,
            None,
            TaskBody::Compute { host, device },
            SpecRole::None,
            false,
        )))
    }

    pub fn id(&self) -> TaskId {
        self.0.id
    }

    pub fn priority(&self) -> i32 {
        self.0.priority
    }

    pub fn runs_on(&self, kind: WorkerKind) -> bool {
        self.0.runs_on(kind)
    }

    pub fn has_host_callable(&self) -> bool {
        self.0.host_fn().is_some()
    }

    pub fn has_device_callable(&self) -> bool {
        self.0.device_fn().is_some()
    }
}

impl fmt::Debug for TaskRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskRef")
            .field("id", &self.0.id)
            .field("priority", &self.0.priority)
            .finish()
    }
}

/// What a host callable receives: access to the objects the task declared.
///
/// Accessing an object the task did not declare (or writing through a Read
/// declaration) panics, which fails the task.
pub struct TaskContext<'a> {
    task: &'a Task,
    worker: WorkerKind,
}

impl<'a> TaskContext<'a> {
    pub(crate) fn new(task: &'a Task, worker: WorkerKind) -> Self {
        TaskContext { task, worker }
    }

    pub fn task_id(&self) -> TaskId {
        self.task.id
    }

    pub fn worker_kind(&self) -> WorkerKind {
        self.worker
    }

    fn cell<T: Send + Sync + 'static>(&self, data: &Data<T>) -> (&'a DataCell<T>, AccessMode) {
        let key = data.key();
        let task: &'a Task = self.task;
        let access = task
            .accesses()
            .iter()
            .find(|a| a.user_key == key)
            .unwrap_or_else(|| panic!("task {} did not declare this object", task.id));
        let cell = access
            .handle
            .object()
            .as_any()
            .downcast_ref::<DataCell<T>>()
            .expect("object type mismatch");
        (cell, access.mode)
    }

    pub fn read<T: Send + Sync + 'static>(&self, data: &Data<T>) -> DataRef<'a, T> {
        self.cell(data).0.read()
    }

    pub fn write<T: Send + Sync + 'static>(&self, data: &Data<T>) -> DataMut<'a, T> {
        let (cell, mode) = self.cell(data);
        assert!(
            mode.is_writing(),
            "task {} declared {:?} and cannot write",
            self.task.id,
            mode
        );
        cell.write()
    }

    /// Exclusive access for an `AtomicWrite` declaration. Concurrent atomic
    /// writers serialize on the object's own lock for the guard's lifetime.
    pub fn atomic<T: Send + Sync + 'static>(&self, data: &Data<T>) -> DataMut<'a, T> {
        self.write(data)
    }

    pub fn read_elem<T: Send + Sync + 'static>(
        &self,
        array: &DataArray<T>,
        index: usize,
    ) -> DataRef<'a, T> {
        self.read(array.element(index))
    }

    pub fn write_elem<T: Send + Sync + 'static>(
        &self,
        array: &DataArray<T>,
        index: usize,
    ) -> DataMut<'a, T> {
        self.write(array.element(index))
    }
}

/// Handle on an inserted task. `R` is the callable's return type.
pub struct TaskViewer<R = ()> {
    pub(crate) task: Arc<Task>,
    _result: PhantomData<fn() -> R>,
}

impl<R> Clone for TaskViewer<R> {
    fn clone(&self) -> Self {
        TaskViewer {
            task: Arc::clone(&self.task),
            _result: PhantomData,
        }
    }
}

impl<R: 'static> TaskViewer<R> {
    pub(crate) fn new(task: Arc<Task>) -> Self {
        TaskViewer {
            task,
            _result: PhantomData,
        }
    }

    pub fn id(&self) -> TaskId {
        self.task.id
    }

    /// Names set after execution still show up in exports, but the scheduler
    /// may already have seen the task unnamed.
    pub fn set_name(&self, name: impl Into<String>) -> &Self {
        *self.task.name.lock() = Some(name.into());
        self
    }

    pub fn name(&self) -> String {
        self.task.display_name()
    }

    pub fn state(&self) -> TaskState {
        self.task.state()
    }

    /// Blocks until the task is finished or disabled (or its graph is
    /// poisoned). Must not be called from inside a task of the same graph.
    pub fn wait(&self) -> TaskState {
        self.task.wait_done();
        self.task.state()
    }

    pub fn get_value(&self) -> Result<R>
    where
        R: Clone,
    {
        match self.wait() {
            TaskState::Disabled => Err(RuntimeError::TaskDisabled(self.task.id)),
            TaskState::Finished => {
                self.task
                    .with_result::<R, _, _>(|r| r.cloned())
                    .ok_or_else(|| {
                        RuntimeError::Internal(format!("task {} has no result", self.task.id))
                    })
            }
            _ => Err(RuntimeError::Poisoned),
        }
    }
}

impl<R> fmt::Debug for TaskViewer<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskViewer")
            .field("id", &self.task.id)
            .field("state", &self.task.state())
            .finish()
    }
}
