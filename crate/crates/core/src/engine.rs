//! Compute engines and their worker teams.
//!
//! Each worker is a thread bound to one [`WorkerKind`] that pops ready tasks
//! from its engine's scheduler, parks when nothing compatible is queued, and
//! may be moved to another engine at runtime. Device workers carry their
//! device arena with them.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{fence, AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Weak};
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex};

use crate::comms;
use crate::deps;
use crate::device::{self, DeviceArena};
use crate::error::{Result, RuntimeError};
use crate::graph::GraphShared;
use crate::scheduler::{FifoScheduler, Scheduler};
use crate::speculation;
use crate::task::{Task, TaskContext, TaskRef, TaskState};
use crate::trace::EventKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkerKind {
    Host,
    Device(usize),
}

impl fmt::Display for WorkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkerKind::Host => f.write_str("host"),
            WorkerKind::Device(i) => write!(f, "device{i}"),
        }
    }
}

/// How many workers of each kind an engine starts with.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkerTeam {
    groups: Vec<(WorkerKind, usize)>,
}

impl WorkerTeam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host(count: usize) -> Self {
        WorkerTeam::new().with(WorkerKind::Host, count)
    }

    /// One worker per device plus one host worker per remaining hardware
    /// thread (at least one).
    pub fn host_and_devices(devices: usize) -> Self {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        WorkerTeam::with_parallelism(threads, devices)
    }

    pub fn with_parallelism(threads: usize, devices: usize) -> Self {
        let mut team = WorkerTeam::host(threads.saturating_sub(devices).max(1));
        for d in 0..devices {
            team = team.with(WorkerKind::Device(d), 1);
        }
        team
    }

    pub fn with(mut self, kind: WorkerKind, count: usize) -> Self {
        if count > 0 {
            self.groups.push((kind, count));
        }
        self
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|(_, n)| n).sum()
    }

    pub fn count(&self, kind: WorkerKind) -> usize {
        self.groups
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn groups(&self) -> &[(WorkerKind, usize)] {
        &self.groups
    }

    fn device_count(&self) -> usize {
        self.groups
            .iter()
            .filter_map(|(k, _)| match k {
                WorkerKind::Device(i) => Some(i + 1),
                WorkerKind::Host => None,
            })
            .max()
            .unwrap_or(0)
    }
}

enum Command {
    Run,
    MoveTo(Arc<EngineShared>),
    Stop,
}

pub(crate) struct WorkerRecord {
    pub id: usize,
    pub kind: WorkerKind,
    command: Mutex<Command>,
    has_command: AtomicBool,
    arena: Option<Arc<DeviceArena>>,
    join: Mutex<Option<JoinHandle<()>>>,
}

impl WorkerRecord {
    fn take_command(&self) -> Command {
        self.has_command.store(false, Ordering::SeqCst);
        std::mem::replace(&mut *self.command.lock(), Command::Run)
    }

    fn send(&self, command: Command) {
        *self.command.lock() = command;
        self.has_command.store(true, Ordering::SeqCst);
    }
}

/// Process-wide worker accounting. Every change to an engine's worker list
/// happens under this lock, so a census is always consistent.
struct Census {
    live: usize,
    in_migration: usize,
    engines: Vec<Weak<EngineShared>>,
}

static CENSUS: Mutex<Census> = Mutex::new(Census {
    live: 0,
    in_migration: 0,
    engines: Vec::new(),
});

static NEXT_WORKER: AtomicUsize = AtomicUsize::new(0);

/// Snapshot of where every live worker is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerCensus {
    pub attached: usize,
    pub in_migration: usize,
    pub live: usize,
}

pub fn worker_census() -> WorkerCensus {
    let mut census = CENSUS.lock();
    census.engines.retain(|e| e.strong_count() > 0);
    let attached = census
        .engines
        .iter()
        .filter_map(Weak::upgrade)
        .map(|e| e.workers.lock().len())
        .sum();
    WorkerCensus {
        attached,
        in_migration: census.in_migration,
        live: census.live,
    }
}

#[derive(Default)]
struct Sleepers {
    host: usize,
    device: usize,
}

pub(crate) struct EngineShared {
    pub scheduler: Arc<dyn Scheduler>,
    workers: Mutex<Vec<Arc<WorkerRecord>>>,
    arenas: Vec<Arc<DeviceArena>>,
    park: Mutex<Sleepers>,
    host_cv: Condvar,
    device_cv: Condvar,
    sleeping: AtomicUsize,
    wakeups: AtomicU64,
    poisoned: AtomicBool,
    stopped: AtomicBool,
    graphs: Mutex<Vec<Weak<GraphShared>>>,
}

impl EngineShared {
    pub(crate) fn push(&self, task: TaskRef) {
        let host = task.has_host_callable();
        let device = task.has_device_callable();
        self.scheduler.push(task);
        fence(Ordering::SeqCst);
        if self.sleeping.load(Ordering::SeqCst) == 0 {
            return;
        }
        let park = self.park.lock();
        if host && park.host > 0 {
            self.host_cv.notify_one();
        }
        if device && park.device > 0 {
            self.device_cv.notify_one();
        }
    }

    fn wake_all(&self) {
        let _park = self.park.lock();
        self.host_cv.notify_all();
        self.device_cv.notify_all();
    }

    pub(crate) fn attach(&self, graph: &Arc<GraphShared>) {
        let mut graphs = self.graphs.lock();
        graphs.retain(|g| g.strong_count() > 0);
        graphs.push(Arc::downgrade(graph));
    }

    pub(crate) fn is_poisoned(&self) -> bool {
        self.poisoned.load(Ordering::SeqCst)
    }

    /// Stops new tasks from starting on this engine and wakes every waiter
    /// of every attached graph.
    pub(crate) fn poison(&self) {
        if self.poisoned.swap(true, Ordering::SeqCst) {
            return;
        }
        let graphs: Vec<_> = self
            .graphs
            .lock()
            .iter()
            .filter_map(Weak::upgrade)
            .collect();
        for g in graphs {
            g.poison(RuntimeError::Poisoned);
        }
    }

    pub(crate) fn worker_kinds(&self) -> Vec<WorkerKind> {
        let mut kinds: Vec<_> = self.workers.lock().iter().map(|w| w.kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        kinds
    }

    /// Blocks until woken, unless a compatible task or a command turned up.
    /// Returns a task popped under the park lock.
    fn park(&self, rec: &WorkerRecord) -> Option<TaskRef> {
        let mut park = self.park.lock();
        let device = matches!(rec.kind, WorkerKind::Device(_));
        if device {
            park.device += 1;
        } else {
            park.host += 1;
        }
        self.sleeping.fetch_add(1, Ordering::SeqCst);
        fence(Ordering::SeqCst);
        let found = if rec.has_command.load(Ordering::SeqCst) {
            None
        } else if let Some(task) = self.scheduler.pop(rec.kind) {
            Some(task)
        } else {
            let cv = if device {
                &self.device_cv
            } else {
                &self.host_cv
            };
            cv.wait(&mut park);
            self.wakeups.fetch_add(1, Ordering::Relaxed);
            None
        };
        self.sleeping.fetch_sub(1, Ordering::SeqCst);
        if device {
            park.device -= 1;
        } else {
            park.host -= 1;
        }
        found
    }
}

fn spawn_worker(engine: &Arc<EngineShared>, census: &mut Census, kind: WorkerKind) -> Result<()> {
    let arena = match kind {
        WorkerKind::Device(i) => Some(Arc::clone(
            engine.arenas.get(i).ok_or(RuntimeError::UnknownDevice(i))?,
        )),
        WorkerKind::Host => None,
    };
    let rec = Arc::new(WorkerRecord {
        id: NEXT_WORKER.fetch_add(1, Ordering::Relaxed),
        kind,
        command: Mutex::new(Command::Run),
        has_command: AtomicBool::new(false),
        arena,
        join: Mutex::new(None),
    });
    let (r, e) = (Arc::clone(&rec), Arc::clone(engine));
    let handle = std::thread::Builder::new()
        .name(format!("stf-{kind}-{}", rec.id))
        .spawn(move || worker_main(r, e))?;
    *rec.join.lock() = Some(handle);
    engine.workers.lock().push(rec);
    census.live += 1;
    Ok(())
}

fn worker_main(rec: Arc<WorkerRecord>, mut engine: Arc<EngineShared>) {
    comms::mark_worker_thread();
    loop {
        if rec.has_command.load(Ordering::SeqCst) {
            match rec.take_command() {
                Command::Run => {}
                Command::Stop => return,
                Command::MoveTo(to) => {
                    let mut census = CENSUS.lock();
                    census.in_migration -= 1;
                    if to.stopped.load(Ordering::SeqCst) {
                        census.live -= 1;
                        return;
                    }
                    to.workers.lock().push(Arc::clone(&rec));
                    drop(census);
                    engine = to;
                    continue;
                }
            }
        }
        let task = match engine.scheduler.pop(rec.kind) {
            Some(task) => Some(task),
            None => engine.park(&rec),
        };
        if let Some(task) = task {
            run_task(&engine, &rec, task.0);
        }
    }
}

/// Runs one popped task to completion on this worker.
fn run_task(engine: &EngineShared, rec: &WorkerRecord, task: Arc<Task>) {
    let Some(graph) = task.graph.upgrade() else {
        return;
    };
    graph.record(EventKind::Pop, Some(rec.id), task.id);
    if engine.is_poisoned() || graph.is_poisoned() {
        return;
    }
    if task.state() == TaskState::Disabled {
        graph.complete(&task);
        return;
    }
    debug_assert!(deps::task_slot_active(&task));
    if !deps::acquire_for_execution(&task, &graph.commute_region) {
        return;
    }
    if !task.transition(TaskState::Ready, TaskState::Executing) {
        // Disabled between pop and start.
        graph.complete(&task);
        return;
    }

    let mut overlap = false;
    for a in task.accesses() {
        overlap |= !a.handle.probe.enter(a.mode);
    }
    if overlap {
        graph.note_conflict();
    }
    task.executions.fetch_add(1, Ordering::SeqCst);
    graph.record(EventKind::TaskStart, Some(rec.id), task.id);
    let outcome = catch_unwind(AssertUnwindSafe(|| execute_body(&graph, rec, &task)));
    graph.record(EventKind::TaskEnd, Some(rec.id), task.id);
    for a in task.accesses() {
        a.handle.probe.exit(a.mode);
    }

    match outcome {
        Ok(Ok(output)) => {
            speculation::resolve_uncertain(&task, &output);
            task.store_result(output);
            task.set_state(TaskState::Finished);
            speculation::settle_duplicate(&task);
            graph.complete(&task);
        }
        Ok(Err(e)) => graph.fail(&task, e.to_string()),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "task panicked".into());
            graph.fail(&task, message);
        }
    }
}

fn execute_body(
    graph: &GraphShared,
    rec: &WorkerRecord,
    task: &Task,
) -> Result<crate::task::Output> {
    match rec.kind {
        WorkerKind::Host => {
            let host = task.host_fn().ok_or(RuntimeError::NoCallable)?;
            device::prepare_host(task);
            let ctx = TaskContext::new(task, rec.kind);
            let mut f = host.lock();
            Ok(f(&ctx))
        }
        WorkerKind::Device(_) => {
            let kernel = task.device_fn().ok_or(RuntimeError::NoCallable)?;
            let arena = rec.arena.as_ref().ok_or(RuntimeError::NoCallable)?;
            graph.record(EventKind::StageInBegin, Some(rec.id), task.id);
            let mut f = kernel.lock();
            let out = arena.execute(task, &mut |ctx| {
                graph.record(EventKind::StageInEnd, Some(rec.id), task.id);
                f(ctx)
            })?;
            Ok(out)
        }
    }
}

/// Builds a [`ComputeEngine`].
pub struct EngineBuilder {
    team: WorkerTeam,
    scheduler: Option<Arc<dyn Scheduler>>,
    devices: Option<usize>,
    device_memory: usize,
}

impl EngineBuilder {
    pub fn scheduler(mut self, scheduler: Arc<dyn Scheduler>) -> Self {
        self.scheduler = Some(scheduler);
        self
    }

    /// Number of simulated devices. Defaults to what the team references.
    pub fn devices(mut self, count: usize) -> Self {
        self.devices = Some(count);
        self
    }

    /// Arena capacity per device, in bytes.
    pub fn device_memory(mut self, bytes: usize) -> Self {
        self.device_memory = bytes;
        self
    }

    pub fn build(self) -> Result<ComputeEngine> {
        if self.team.total() == 0 {
            return Err(RuntimeError::EmptyTeam);
        }
        let devices = self.devices.unwrap_or_else(|| self.team.device_count());
        if let Some(i) = (devices..self.team.device_count()).next() {
            return Err(RuntimeError::UnknownDevice(i));
        }
        let shared = Arc::new(EngineShared {
            scheduler: self
                .scheduler
                .unwrap_or_else(|| Arc::new(FifoScheduler::new())),
            workers: Mutex::new(Vec::new()),
            arenas: (0..devices)
                .map(|i| Arc::new(DeviceArena::new(i, self.device_memory)))
                .collect(),
            park: Mutex::new(Sleepers::default()),
            host_cv: Condvar::new(),
            device_cv: Condvar::new(),
            sleeping: AtomicUsize::new(0),
            wakeups: AtomicU64::new(0),
            poisoned: AtomicBool::new(false),
            stopped: AtomicBool::new(false),
            graphs: Mutex::new(Vec::new()),
        });
        let engine = ComputeEngine { shared };
        let mut census = CENSUS.lock();
        census.engines.push(Arc::downgrade(&engine.shared));
        for (kind, count) in self.team.groups() {
            for _ in 0..*count {
                spawn_worker(&engine.shared, &mut census, *kind)?;
            }
        }
        Ok(engine)
    }
}

/// A set of workers serving one or more task graphs.
///
/// Dropping the engine stops its workers after their current task. Graphs
/// attached to it should be waited on first.
pub struct ComputeEngine {
    pub(crate) shared: Arc<EngineShared>,
}

impl fmt::Debug for ComputeEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComputeEngine")
            .field("workers", &self.worker_count())
            .finish()
    }
}

pub const DEFAULT_DEVICE_MEMORY: usize = 64 << 20;

impl ComputeEngine {
    pub fn builder(team: WorkerTeam) -> EngineBuilder {
        EngineBuilder {
            team,
            scheduler: None,
            devices: None,
            device_memory: DEFAULT_DEVICE_MEMORY,
        }
    }

    pub fn new(team: WorkerTeam) -> Result<Self> {
        ComputeEngine::builder(team).build()
    }

    pub fn with_scheduler(team: WorkerTeam, scheduler: Arc<dyn Scheduler>) -> Result<Self> {
        ComputeEngine::builder(team).scheduler(scheduler).build()
    }

    pub fn worker_count(&self) -> usize {
        self.shared.workers.lock().len()
    }

    pub fn worker_count_of(&self, kind: WorkerKind) -> usize {
        self.shared
            .workers
            .lock()
            .iter()
            .filter(|w| w.kind == kind)
            .count()
    }

    pub fn worker_kinds(&self) -> Vec<WorkerKind> {
        self.shared.worker_kinds()
    }

    pub fn ready_count(&self) -> usize {
        self.shared.scheduler.ready_count()
    }

    /// Times a parked worker of this engine woke up.
    pub fn wakeups(&self) -> u64 {
        self.shared.wakeups.load(Ordering::Relaxed)
    }

    pub fn is_poisoned(&self) -> bool {
        self.shared.is_poisoned()
    }

    pub fn device_count(&self) -> usize {
        self.shared.arenas.len()
    }

    pub fn arena(&self, device: usize) -> Option<&Arc<DeviceArena>> {
        self.shared.arenas.get(device)
    }

    /// Moves up to `count` workers of `kind` to `to`. Each finishes its
    /// current task first. Returns how many were moved.
    pub fn migrate_workers(&self, to: &ComputeEngine, kind: WorkerKind, count: usize) -> usize {
        if Arc::ptr_eq(&self.shared, &to.shared) || to.shared.stopped.load(Ordering::SeqCst) {
            return 0;
        }
        let mut census = CENSUS.lock();
        let moved: Vec<Arc<WorkerRecord>> = {
            let mut workers = self.shared.workers.lock();
            let mut moved = Vec::new();
            let mut i = 0;
            while i < workers.len() && moved.len() < count {
                if workers[i].kind == kind {
                    moved.push(workers.remove(i));
                } else {
                    i += 1;
                }
            }
            moved
        };
        census.in_migration += moved.len();
        for w in &moved {
            w.send(Command::MoveTo(Arc::clone(&to.shared)));
        }
        drop(census);
        self.shared.wake_all();
        // The join handle travels with the record; the last owner joins it.
        moved.len()
    }

    fn stop(&self) {
        let workers = {
            let mut census = CENSUS.lock();
            self.shared.stopped.store(true, Ordering::SeqCst);
            let workers = std::mem::take(&mut *self.shared.workers.lock());
            census.live -= workers.len();
            workers
        };
        for w in &workers {
            w.send(Command::Stop);
        }
        self.shared.wake_all();
        for w in workers {
            if let Some(handle) = w.join.lock().take() {
                let _ = handle.join();
            }
        }
    }
}

impl Drop for ComputeEngine {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn team_policies() {
        let t = WorkerTeam::with_parallelism(8, 2);
        assert_eq!(t.count(WorkerKind::Host), 6);
        assert_eq!(t.count(WorkerKind::Device(0)), 1);
        assert_eq!(t.count(WorkerKind::Device(1)), 1);
        assert_eq!(t.total(), 8);
        assert_eq!(
            WorkerTeam::with_parallelism(1, 2).count(WorkerKind::Host),
            1
        );
        assert_eq!(WorkerTeam::host(0).total(), 0);
    }

    #[test]
    fn empty_team_is_rejected() {
        assert!(matches!(
            ComputeEngine::new(WorkerTeam::host(0)),
            Err(RuntimeError::EmptyTeam)
        ));
    }

    #[test]
    fn unknown_device_is_rejected() {
        let team = WorkerTeam::host(1).with(WorkerKind::Device(2), 1);
        assert!(matches!(
            ComputeEngine::builder(team).devices(1).build(),
            Err(RuntimeError::UnknownDevice(_))
        ));
    }

    #[test]
    fn migration_moves_and_clamps() {
        let a = ComputeEngine::new(WorkerTeam::host(4)).unwrap();
        let b = ComputeEngine::new(WorkerTeam::host(1)).unwrap();
        assert_eq!(a.migrate_workers(&b, WorkerKind::Host, 2), 2);
        assert_eq!(a.worker_count(), 2);
        assert_eq!(a.migrate_workers(&b, WorkerKind::Host, 10), 2);
        assert_eq!(a.worker_count(), 0);
        assert_eq!(a.migrate_workers(&b, WorkerKind::Device(0), 1), 0);
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(5);
        while b.worker_count() < 5 {
            assert!(
                std::time::Instant::now() < deadline,
                "workers never arrived"
            );
            std::thread::yield_now();
        }
    }

    #[test]
    fn idle_workers_park() {
        let e = ComputeEngine::new(WorkerTeam::host(4)).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(50));
        let before = e.wakeups();
        std::thread::sleep(std::time::Duration::from_millis(100));
        assert_eq!(e.wakeups(), before);
    }
}
