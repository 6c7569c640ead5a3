//! Task graphs: the insertion API and completion bookkeeping.
//!
//! A graph is fed by a single inserting thread. Each inserted task is
//! appended to the ledger of every object it declares; tasks whose slots are
//! all active go straight to the attached engine's scheduler, the others are
//! pushed by whichever release activates their last slot.

use std::any::TypeId;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::marker::PhantomData;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock, Weak};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::comms::{wire, Codec, CommAgent, CommKind, CommOp, Transferable, Transport};
use crate::data::{ArrayView, Data, DataArray, DataObject};
use crate::deps::{self, AccessMode, HandleId, HandleTable, SlotKind};
use crate::device::DeviceContext;
use crate::engine::{ComputeEngine, EngineShared};
use crate::error::{CommError, Result, RuntimeError};
use crate::speculation::{SpecRole, SpecState, SpeculationPair};
use crate::task::{
    DeviceFn, HostFn, Output, Task, TaskAccess, TaskBody, TaskContext, TaskId, TaskRef, TaskState,
    TaskViewer,
};
use crate::trace::{dot, svg, EventKind, Recorder, Timeline, TraceEvent};

/// Largest size message a receive accepts unless configured otherwise.
pub const DEFAULT_MAX_MESSAGE: u64 = 1 << 30;

/// How long `wait_all` waits without progress before diagnosing a stall.
const STALL_AFTER: Duration = Duration::from_secs(2);

pub(crate) struct PreparedAccess {
    pub user_key: usize,
    pub object: Arc<dyn DataObject>,
    pub mode: AccessMode,
    pub internal: bool,
}

pub(crate) struct PreparedTask {
    pub accesses: Vec<PreparedAccess>,
    pub host: Option<HostFn>,
    pub device: Option<DeviceFn>,
    pub priority: i32,
    pub name: Option<String>,
    pub result_type: TypeId,
}

pub(crate) struct GraphShared {
    me: Weak<GraphShared>,
    spec: Option<SpecState>,
    handles: Mutex<HandleTable>,
    tasks: Mutex<Vec<Arc<Task>>>,
    next_id: AtomicU64,
    engine: OnceLock<Arc<EngineShared>>,
    /// Serializes commutative guard transitions.
    pub commute_region: Mutex<()>,
    inserted: AtomicUsize,
    terminated: AtomicUsize,
    idle: Mutex<()>,
    idle_cv: Condvar,
    failure: Mutex<Option<RuntimeError>>,
    poisoned: AtomicBool,
    violations: AtomicUsize,
    recorder: Recorder,
    comm: OnceLock<CommAgent>,
    max_message: u64,
    broadcasts: AtomicU64,
    comm_keys: Mutex<HashSet<usize>>,
    stalls: Mutex<Vec<String>>,
}

impl GraphShared {
    pub(crate) fn record(&self, kind: EventKind, worker: Option<usize>, task: TaskId) {
        self.recorder.record(kind, worker, task);
    }

    pub(crate) fn is_poisoned(&self) -> bool {
        self.poisoned.load(Ordering::SeqCst)
    }

    pub(crate) fn note_conflict(&self) {
        self.violations.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn used_by_comm(&self, key: usize) -> bool {
        self.comm_keys.lock().contains(&key)
    }

    fn engine(&self) -> Result<&Arc<EngineShared>> {
        self.engine.get().ok_or(RuntimeError::NoEngine)
    }

    fn fresh_id(&self) -> TaskId {
        TaskId(self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    /// Appends a task to its ledgers and dispatches it if already ready.
    fn insert_body(
        &self,
        accesses: Vec<PreparedAccess>,
        body: TaskBody,
        priority: i32,
        name: Option<String>,
        role: SpecRole,
    ) -> Result<Arc<Task>> {
        let engine = self.engine()?;
        if self.is_poisoned() || engine.is_poisoned() {
            return Err(self.failure());
        }
        let handles = {
            let mut table = self.handles.lock();
            accesses
                .iter()
                .map(|a| table.get_or_register(Arc::clone(&a.object), a.internal))
                .collect::<Result<Vec<_>>>()?
        };
        if let TaskBody::Compute {
            device: Some(_), ..
        } = &body
        {
            if let Some(h) = handles.iter().find(|h| !h.object().device_capable()) {
                return Err(RuntimeError::NotMovable(h.id));
            }
        }
        let internal = role.is_speculative();
        let task = Arc::new(Task::new(
            self.fresh_id(),
            self.me.clone(),
            priority,
            name,
            body,
            role,
            internal,
        ));
        let mut resolved = Vec::with_capacity(accesses.len());
        for (a, handle) in accesses.into_iter().zip(handles) {
            let mode = match a.mode {
                AccessMode::MaybeWrite => AccessMode::Write,
                m => m,
            };
            let (slot, _) = handle.append_access(mode, &task);
            resolved.push(TaskAccess {
                user_key: a.user_key,
                handle,
                mode,
                slot,
            });
        }
        let _ = task.accesses.set(resolved);
        self.tasks.lock().push(Arc::clone(&task));
        self.inserted.fetch_add(1, Ordering::SeqCst);
        if deps::finish_insertion(&task) {
            self.dispatch(Arc::clone(&task));
        }
        Ok(task)
    }

    pub(crate) fn insert_prepared(&self, task: PreparedTask, role: SpecRole) -> Result<Arc<Task>> {
        self.insert_body(
            task.accesses,
            TaskBody::Compute {
                host: task.host,
                device: task.device,
            },
            task.priority,
            task.name,
            role,
        )
    }

    pub(crate) fn insert_internal(
        &self,
        accesses: Vec<PreparedAccess>,
        mut f: impl FnMut(&TaskContext<'_>) + Send + 'static,
        role: SpecRole,
        name: &str,
    ) -> Result<Arc<Task>> {
        let host: HostFn = Arc::new(Mutex::new(move |ctx: &TaskContext<'_>| {
            f(ctx);
            Box::new(()) as Output
        }));
        self.insert_body(
            accesses,
            TaskBody::Compute {
                host: Some(host),
                device: None,
            },
            0,
            Some(name.to_string()),
            role,
        )
    }

    /// Hands a ready task to whoever executes it.
    fn dispatch(&self, task: Arc<Task>) {
        if task.is_comm() {
            match self.comm.get() {
                Some(agent) => agent.submit(task),
                None => self.fail(&task, RuntimeError::NoCommAgent.to_string()),
            }
            return;
        }
        let Some(engine) = self.engine.get() else {
            return;
        };
        self.record(EventKind::Push, None, task.id);
        engine.push(TaskRef(task));
    }

    /// Releases a finished or disabled task and dispatches what it enabled.
    pub(crate) fn complete(&self, task: &Arc<Task>) {
        match deps::release_access(task, &self.commute_region) {
            Ok(ready) => {
                for t in ready {
                    self.dispatch(t);
                }
            }
            Err(e) => self.poison(e),
        }
        task.notify_done();
        let terminated = self.terminated.fetch_add(1, Ordering::SeqCst) + 1;
        if terminated == self.inserted.load(Ordering::SeqCst) {
            let _idle = self.idle.lock();
            self.idle_cv.notify_all();
        }
    }

    pub(crate) fn fail(&self, task: &Task, message: String) {
        log::error!("task {} failed: {message}", task.display_name());
        {
            let mut failure = self.failure.lock();
            if failure.is_none() {
                *failure = Some(RuntimeError::TaskFailed {
                    id: task.id,
                    message,
                });
            }
        }
        match self.engine.get() {
            Some(engine) => engine.poison(),
            None => self.poison(RuntimeError::Poisoned),
        }
        // The engine may already have been poisoned by another graph.
        self.poison(RuntimeError::Poisoned);
    }

    /// Stops the graph and wakes every waiter. The first recorded failure
    /// is kept.
    pub(crate) fn poison(&self, error: RuntimeError) {
        {
            let mut failure = self.failure.lock();
            if failure.is_none() {
                *failure = Some(error);
            }
        }
        self.poisoned.store(true, Ordering::SeqCst);
        let tasks: Vec<_> = self.tasks.lock().clone();
        for t in tasks {
            t.notify_done();
        }
        let _idle = self.idle.lock();
        self.idle_cv.notify_all();
    }

    fn failure(&self) -> RuntimeError {
        self.failure
            .lock()
            .clone()
            .unwrap_or(RuntimeError::Poisoned)
    }

    fn quiescent(&self) -> bool {
        self.terminated.load(Ordering::SeqCst) >= self.inserted.load(Ordering::SeqCst)
    }

    /// Non-terminal tasks no worker of the engine can run.
    fn unservable(&self) -> Vec<String> {
        let Some(engine) = self.engine.get() else {
            return Vec::new();
        };
        let kinds = engine.worker_kinds();
        self.tasks
            .lock()
            .iter()
            .filter(|t| t.state() == TaskState::Ready && !t.is_comm())
            .filter(|t| !kinds.iter().any(|k| t.runs_on(*k)))
            .map(|t| t.display_name())
            .collect()
    }

    fn diagnose_stall(&self) {
        let stuck = self.unservable();
        if stuck.is_empty() {
            return;
        }
        let message = format!(
            "ready tasks no attached worker can run: {}",
            stuck.join(", ")
        );
        let mut stalls = self.stalls.lock();
        if !stalls.contains(&message) {
            log::warn!("{message}");
            stalls.push(message);
        }
    }

    fn wait_until(&self, deadline: Option<Instant>) -> Result<bool> {
        let mut last = self.terminated.load(Ordering::SeqCst);
        let mut progress_at = Instant::now();
        let mut idle = self.idle.lock();
        loop {
            if self.is_poisoned() {
                return Err(self.failure());
            }
            if self.quiescent() {
                return Ok(true);
            }
            let now = Instant::now();
            if deadline.is_some_and(|d| now >= d) {
                drop(idle);
                self.diagnose_stall();
                return Ok(false);
            }
            let slice = Duration::from_millis(100);
            let slice = deadline.map_or(slice, |d| slice.min(d - now));
            self.idle_cv.wait_for(&mut idle, slice);
            let done = self.terminated.load(Ordering::SeqCst);
            if done != last {
                last = done;
                progress_at = Instant::now();
            } else if progress_at.elapsed() >= STALL_AFTER {
                drop(idle);
                self.diagnose_stall();
                progress_at = Instant::now();
                idle = self.idle.lock();
            }
        }
    }

    fn teardown(&self) {
        if let Some(agent) = self.comm.get() {
            agent.shutdown();
        }
        if let Some(spec) = &self.spec {
            spec.clear();
        }
        self.handles.lock().clear();
        self.tasks.lock().clear();
    }
}

/// Counters describing a graph's run so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphStats {
    pub inserted: usize,
    pub finished: usize,
    pub disabled: usize,
    /// Body executions over all tasks, communication transfers included.
    pub executions: u64,
    /// Times a task started while a conflicting task on one of its objects
    /// was running. Always zero unless the runtime is broken.
    pub conflict_violations: usize,
    pub user_handles: usize,
    pub internal_handles: usize,
}

/// Configures a [`TaskGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    speculation: bool,
    tracing: bool,
    max_message: u64,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        GraphBuilder {
            speculation: false,
            tracing: true,
            max_message: DEFAULT_MAX_MESSAGE,
        }
    }
}

impl GraphBuilder {
    pub fn speculation(mut self, on: bool) -> Self {
        self.speculation = on;
        self
    }

    /// Event recording for trace export. On by default.
    pub fn tracing(mut self, on: bool) -> Self {
        self.tracing = on;
        self
    }

    /// Largest incoming message, in bytes, a receive will accept.
    pub fn max_message(mut self, bytes: u64) -> Self {
        self.max_message = bytes;
        self
    }

    pub fn build(self) -> TaskGraph {
        let shared = Arc::new_cyclic(|me| GraphShared {
            me: me.clone(),
            spec: self.speculation.then(SpecState::default),
            handles: Mutex::new(HandleTable::default()),
            tasks: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(0),
            engine: OnceLock::new(),
            commute_region: Mutex::new(()),
            inserted: AtomicUsize::new(0),
            terminated: AtomicUsize::new(0),
            idle: Mutex::new(()),
            idle_cv: Condvar::new(),
            failure: Mutex::new(None),
            poisoned: AtomicBool::new(false),
            violations: AtomicUsize::new(0),
            recorder: Recorder::new(self.tracing),
            comm: OnceLock::new(),
            max_message: self.max_message,
            broadcasts: AtomicU64::new(0),
            comm_keys: Mutex::new(HashSet::new()),
            stalls: Mutex::new(Vec::new()),
        });
        TaskGraph { shared }
    }
}

/// A sequential task flow.
///
/// ```
/// use stf_core::{ComputeEngine, Data, TaskGraph, WorkerTeam};
///
/// let engine = ComputeEngine::new(WorkerTeam::host(2)).unwrap();
/// let graph = TaskGraph::new();
/// graph.compute_on(&engine).unwrap();
///
/// let init = Data::new(1);
/// let val = Data::new(0);
/// let (i, v) = (init.clone(), val.clone());
/// graph
///     .task()
///     .read(&init)
///     .write(&val)
///     .host(move |ctx| *ctx.write(&v) += *ctx.read(&i))
///     .insert()
///     .unwrap();
/// graph.wait_all().unwrap();
/// assert_eq!(val.get(), 1);
/// ```
pub struct TaskGraph {
    shared: Arc<GraphShared>,
}

impl Default for TaskGraph {
    fn default() -> Self {
        TaskGraph::new()
    }
}

impl TaskGraph {
    pub fn new() -> Self {
        GraphBuilder::default().build()
    }

    pub fn with_speculation() -> Self {
        GraphBuilder::default().speculation(true).build()
    }

    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn is_speculative(&self) -> bool {
        self.shared.spec.is_some()
    }

    /// Attaches the graph to `engine`. A graph cannot change engines.
    pub fn compute_on(&self, engine: &ComputeEngine) -> Result<()> {
        self.shared
            .engine
            .set(Arc::clone(&engine.shared))
            .map_err(|_| RuntimeError::AlreadyAttached)?;
        engine.shared.attach(&self.shared);
        self.shared.recorder.start_clock();
        Ok(())
    }

    /// Starts declaring a task.
    pub fn task(&self) -> TaskBuilder<'_, ()> {
        TaskBuilder {
            graph: self,
            accesses: Vec::new(),
            error: None,
            host: None,
            device: None,
            result_type: None,
            priority: 0,
            name: None,
            _result: PhantomData,
        }
    }

    /// Blocks until every inserted task finished or was disabled.
    pub fn wait_all(&self) -> Result<()> {
        self.shared.wait_until(None).map(|_| ())
    }

    /// Like [`wait_all`](Self::wait_all) but gives up after `timeout`.
    /// Returns whether the graph went quiescent.
    pub fn wait_all_timeout(&self, timeout: Duration) -> Result<bool> {
        self.shared.wait_until(Some(Instant::now() + timeout))
    }

    /// Warnings about ready tasks that no worker of the engine can run.
    pub fn stall_diagnostics(&self) -> Vec<String> {
        self.shared.stalls.lock().clone()
    }

    pub fn is_poisoned(&self) -> bool {
        self.shared.is_poisoned()
    }

    /// Inserts a host task writing `data`, which brings any device copy back
    /// to the host before later host tasks run.
    pub fn flush_to_host<T: Send + Sync + 'static>(
        &self,
        data: &Data<T>,
    ) -> Result<TaskViewer<()>> {
        self.task().write(data).name("flush").host(|_| ()).insert()
    }

    /// Forgets `data`. Later uses register it afresh. The object must have no
    /// unfinished accesses.
    pub fn unregister<T: Send + Sync + 'static>(&self, data: &Data<T>) -> Result<()> {
        let mut table = self.shared.handles.lock();
        let key = data.key();
        if let Some(h) = table.lookup(key) {
            if !h.is_quiescent() {
                return Err(RuntimeError::Internal(
                    "object unregistered with accesses still pending".into(),
                ));
            }
        }
        table.unregister(key)
    }

    /// Current handle id of `data`, if registered.
    pub fn handle_id<T: Send + Sync + 'static>(&self, data: &Data<T>) -> Option<HandleId> {
        self.shared.handles.lock().lookup(data.key()).map(|h| h.id)
    }

    /// The access slots of `data`'s ledger, in order.
    pub fn slots_of<T: Send + Sync + 'static>(
        &self,
        data: &Data<T>,
    ) -> Option<Vec<(SlotKind, Vec<TaskId>)>> {
        self.shared
            .handles
            .lock()
            .lookup(data.key())
            .map(|h| h.slots())
    }

    // ---- communication ----

    /// Connects the graph to its instance's transport and starts the
    /// background agent that progresses communication tasks.
    pub fn attach_transport(&self, transport: impl Transport + 'static) -> Result<()> {
        if self.shared.comm.get().is_some() {
            return Err(RuntimeError::AlreadyAttached);
        }
        let agent = CommAgent::start(Box::new(transport), self.shared.max_message)?;
        self.shared
            .comm
            .set(agent)
            .map_err(|_| RuntimeError::AlreadyAttached)
    }

    pub fn rank(&self) -> Option<usize> {
        self.shared.comm.get().map(CommAgent::rank)
    }

    /// Times the communication agent woke from an idle wait.
    pub fn comm_wakeups(&self) -> Option<u64> {
        self.shared.comm.get().map(CommAgent::wakeups)
    }

    pub fn comm_send<T: Transferable + Send + Sync + 'static>(
        &self,
        data: &Data<T>,
        dest: usize,
        tag: u32,
    ) -> Result<TaskViewer<()>> {
        wire::check_tag(tag)?;
        self.check_rank(dest)?;
        self.insert_comm(data, AccessMode::Read, CommKind::Send { dest, tag }, "send")
    }

    pub fn comm_recv<T: Transferable + Send + Sync + 'static>(
        &self,
        data: &Data<T>,
        source: usize,
        tag: u32,
    ) -> Result<TaskViewer<()>> {
        wire::check_tag(tag)?;
        self.check_rank(source)?;
        self.insert_comm(
            data,
            AccessMode::Write,
            CommKind::Recv { source, tag },
            "recv",
        )
    }

    /// Replicates `root`'s value of `data` on every instance. All instances
    /// must insert the same broadcasts in the same order.
    pub fn comm_broadcast<T: Transferable + Send + Sync + 'static>(
        &self,
        data: &Data<T>,
        root: usize,
    ) -> Result<TaskViewer<()>> {
        self.check_rank(root)?;
        let rank = self.rank().ok_or(RuntimeError::NoCommAgent)?;
        let sequence = self.shared.broadcasts.fetch_add(1, Ordering::SeqCst);
        if rank == root {
            self.insert_comm(
                data,
                AccessMode::Read,
                CommKind::BroadcastRoot { sequence },
                "bcast",
            )
        } else {
            self.insert_comm(
                data,
                AccessMode::Write,
                CommKind::BroadcastLeaf { root, sequence },
                "bcast",
            )
        }
    }

    fn check_rank(&self, rank: usize) -> Result<()> {
        let agent = self.shared.comm.get().ok_or(RuntimeError::NoCommAgent)?;
        if rank >= agent.size() {
            return Err(CommError::BadRank {
                rank,
                size: agent.size(),
            }
            .into());
        }
        Ok(())
    }

    fn insert_comm<T: Transferable + Send + Sync + 'static>(
        &self,
        data: &Data<T>,
        mode: AccessMode,
        kind: CommKind,
        name: &str,
    ) -> Result<TaskViewer<()>> {
        let key = data.key();
        if self
            .shared
            .spec
            .as_ref()
            .is_some_and(|s| s.ever_planned(key))
        {
            return Err(RuntimeError::Speculation(
                "communication on an object that takes part in speculation".into(),
            ));
        }
        self.shared.comm_keys.lock().insert(key);
        let task = self.shared.insert_body(
            vec![PreparedAccess {
                user_key: key,
                object: data.object(),
                mode,
                internal: false,
            }],
            TaskBody::Comm(CommOp {
                kind,
                codec: Codec::of::<T>(),
            }),
            0,
            Some(name.to_string()),
            SpecRole::None,
        )?;
        Ok(TaskViewer::new(task))
    }

    // ---- inspection and export ----

    pub fn stats(&self) -> GraphStats {
        let tasks = self.shared.tasks.lock();
        let table = self.shared.handles.lock();
        let internal_handles = table.all().iter().filter(|h| h.internal).count();
        GraphStats {
            inserted: self.shared.inserted.load(Ordering::SeqCst),
            finished: tasks
                .iter()
                .filter(|t| t.state() == TaskState::Finished)
                .count(),
            disabled: tasks
                .iter()
                .filter(|t| t.state() == TaskState::Disabled)
                .count(),
            executions: tasks
                .iter()
                .map(|t| u64::from(t.executions.load(Ordering::SeqCst)))
                .sum(),
            conflict_violations: self.shared.violations.load(Ordering::SeqCst),
            user_handles: table.all().len() - internal_handles,
            internal_handles,
        }
    }

    /// Per-task body execution counts, by id.
    pub fn execution_counts(&self) -> Vec<(TaskId, u32)> {
        self.shared
            .tasks
            .lock()
            .iter()
            .map(|t| (t.id, t.executions.load(Ordering::SeqCst)))
            .collect()
    }

    pub fn speculation_pairs(&self) -> Vec<SpeculationPair> {
        self.shared
            .spec
            .as_ref()
            .map(SpecState::pairs)
            .unwrap_or_default()
    }

    /// Immediate-successor edges induced by consecutive slots, deduplicated
    /// and sorted.
    pub fn edges(&self) -> Vec<(TaskId, TaskId)> {
        let table = self.shared.handles.lock();
        let set: BTreeSet<(TaskId, TaskId)> = table
            .all()
            .iter()
            .flat_map(|h| h.successor_edges())
            .collect();
        set.into_iter().collect()
    }

    pub fn dot_string(&self, show_deps: bool) -> String {
        let nodes: Vec<dot::DotNode> = self
            .shared
            .tasks
            .lock()
            .iter()
            .map(|t| dot::DotNode {
                id: t.id,
                label: t.display_name(),
                dashed: t.internal || t.state() == TaskState::Disabled,
            })
            .collect();
        let edges = if show_deps { self.edges() } else { Vec::new() };
        dot::render(&nodes, &edges)
    }

    pub fn generate_dot(&self, path: impl AsRef<Path>, show_deps: bool) -> Result<()> {
        std::fs::write(path, self.dot_string(show_deps))?;
        Ok(())
    }

    pub fn trace_events(&self) -> Vec<TraceEvent> {
        self.shared.recorder.events()
    }

    pub fn timeline(&self) -> Timeline {
        Timeline::from_events(&self.trace_events())
    }

    pub fn trace_svg_string(&self, show_dep_arrows: bool) -> String {
        let names: HashMap<TaskId, String> = self
            .shared
            .tasks
            .lock()
            .iter()
            .map(|t| (t.id, t.display_name()))
            .collect();
        let edges = show_dep_arrows.then(|| self.edges());
        svg::render(&self.timeline(), &names, edges.as_deref())
    }

    pub fn generate_trace_svg(&self, path: impl AsRef<Path>, show_dep_arrows: bool) -> Result<()> {
        std::fs::write(path, self.trace_svg_string(show_dep_arrows))?;
        Ok(())
    }
}

impl Drop for TaskGraph {
    fn drop(&mut self) {
        let shared = &self.shared;
        if !shared.is_poisoned() && shared.stalls.lock().is_empty() {
            if let Err(e) = shared.wait_until(None) {
                log::warn!("task graph dropped after failure: {e}");
            }
        } else if !shared.quiescent() {
            log::warn!("task graph dropped with unfinished tasks");
        }
        shared.teardown();
    }
}

/// Declares one task. Obtained from [`TaskGraph::task`]; `R` is the
/// callable's return type.
#[must_use = "a task is only inserted by calling insert()"]
pub struct TaskBuilder<'g, R> {
    graph: &'g TaskGraph,
    accesses: Vec<PreparedAccess>,
    error: Option<RuntimeError>,
    host: Option<HostFn>,
    device: Option<DeviceFn>,
    result_type: Option<TypeId>,
    priority: i32,
    name: Option<String>,
    _result: PhantomData<fn() -> R>,
}

impl<'g, R: 'static> TaskBuilder<'g, R> {
    pub fn access<T: Send + Sync + 'static>(mut self, data: &Data<T>, mode: AccessMode) -> Self {
        self.accesses.push(PreparedAccess {
            user_key: data.key(),
            object: data.object(),
            mode,
            internal: false,
        });
        self
    }

    pub fn read<T: Send + Sync + 'static>(self, data: &Data<T>) -> Self {
        self.access(data, AccessMode::Read)
    }

    pub fn write<T: Send + Sync + 'static>(self, data: &Data<T>) -> Self {
        self.access(data, AccessMode::Write)
    }

    pub fn atomic_write<T: Send + Sync + 'static>(self, data: &Data<T>) -> Self {
        self.access(data, AccessMode::AtomicWrite)
    }

    pub fn commutative_write<T: Send + Sync + 'static>(self, data: &Data<T>) -> Self {
        self.access(data, AccessMode::CommutativeWrite)
    }

    /// In a graph without speculation this is a plain write.
    pub fn maybe_write<T: Send + Sync + 'static>(self, data: &Data<T>) -> Self {
        self.access(data, AccessMode::MaybeWrite)
    }

    /// One dependency per selected element of `array`.
    pub fn array<T: Send + Sync + 'static>(
        mut self,
        array: &DataArray<T>,
        view: impl Into<ArrayView>,
        mode: AccessMode,
    ) -> Self {
        for &i in view.into().indices() {
            match array.try_element(i) {
                Some(element) => self = self.access(element, mode),
                None => {
                    self.error.get_or_insert(RuntimeError::IndexOutOfBounds {
                        index: i,
                        len: array.len(),
                    });
                }
            }
        }
        self
    }

    /// Higher is more urgent. Defaults to 0.
    pub fn priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn retype<R2: 'static>(mut self) -> TaskBuilder<'g, R2> {
        let ty = TypeId::of::<R2>();
        if self.result_type.is_some_and(|t| t != ty) {
            self.error.get_or_insert(RuntimeError::CallableMismatch);
        }
        TaskBuilder {
            graph: self.graph,
            accesses: self.accesses,
            error: self.error,
            host: self.host,
            device: self.device,
            result_type: Some(ty),
            priority: self.priority,
            name: self.name,
            _result: PhantomData,
        }
    }

    /// The callable host workers run.
    pub fn host<R2, F>(mut self, mut f: F) -> TaskBuilder<'g, R2>
    where
        R2: Send + 'static,
        F: FnMut(&TaskContext<'_>) -> R2 + Send + 'static,
    {
        self.host = Some(Arc::new(Mutex::new(move |ctx: &TaskContext<'_>| {
            Box::new(f(ctx)) as Output
        })));
        self.retype()
    }

    /// The callable device workers run, against staged device copies.
    pub fn device<R2, F>(mut self, mut f: F) -> TaskBuilder<'g, R2>
    where
        R2: Send + 'static,
        F: FnMut(&DeviceContext<'_>) -> R2 + Send + 'static,
    {
        self.device = Some(Arc::new(Mutex::new(move |ctx: &DeviceContext<'_>| {
            Box::new(f(ctx)) as Output
        })));
        self.retype()
    }

    pub fn insert(self) -> Result<TaskViewer<R>> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let shared = &self.graph.shared;
        shared.engine()?;
        if shared.is_poisoned() {
            return Err(shared.failure());
        }
        if self.host.is_none() && self.device.is_none() {
            return Err(RuntimeError::NoCallable);
        }
        let mut keys = HashSet::with_capacity(self.accesses.len());
        if !self.accesses.iter().all(|a| keys.insert(a.user_key)) {
            return Err(RuntimeError::DuplicateAccess);
        }
        let prepared = PreparedTask {
            accesses: self.accesses,
            host: self.host,
            device: self.device,
            priority: self.priority,
            name: self.name,
            result_type: self.result_type.unwrap_or(TypeId::of::<()>()),
        };
        let task = match &shared.spec {
            Some(spec) => spec.insert(shared, prepared)?,
            None => shared.insert_prepared(prepared, SpecRole::None)?,
        };
        Ok(TaskViewer::new(task))
    }
}
