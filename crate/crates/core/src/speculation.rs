//! Speculation over uncertain writes.
//!
//! A task declaring `MaybeWrite` on X opens a window: X is first snapshotted
//! into a private twin X′, then the uncertain task U is inserted as an
//! ordinary writer. While U's outcome is unknown, every later task T touching
//! an object in the window is inserted twice:
//!
//! * T′ reads the window's private versions and writes fresh private copies
//!   of T's outputs, so it only waits for the snapshot and may overlap U;
//! * T is inserted unchanged and therefore runs after U;
//! * a select task S copies T′'s outputs over the real objects, but only if
//!   U reports it did not write.
//!
//! When U finishes, its boolean result decides: no write commits the
//! duplicates and disables every T, a write disables every T′. Exactly one
//! task of each pair ends `Finished`. Windows never nest: a second uncertain
//! task, or a successor that cannot be duplicated, closes the open window.

use std::any::TypeId;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::data::DataObject;
use crate::deps::AccessMode;
use crate::error::{Result, RuntimeError};
use crate::graph::{GraphShared, PreparedAccess, PreparedTask};
use crate::task::{Output, Task, TaskId, TaskState};

const UNDECIDED: u8 = 0;
const COMMIT: u8 = 1;
const ROLLBACK: u8 = 2;

#[derive(Clone, Default)]
pub(crate) enum SpecRole {
    #[default]
    None,
    /// Snapshot or version copy.
    Copy,
    Uncertain(Arc<Window>),
    Duplicate(Arc<Window>),
    Normal,
    Select,
}

impl SpecRole {
    /// Tasks the runtime created on its own behalf.
    pub(crate) fn is_speculative(&self) -> bool {
        matches!(
            self,
            SpecRole::Copy | SpecRole::Duplicate(_) | SpecRole::Select
        )
    }
}

pub(crate) struct Window {
    outcome: AtomicU8,
    /// (normal, duplicate) pairs. Held while successors are inserted so a
    /// concurrent resolve sees either none or both of a pair.
    pairs: Mutex<Vec<(Arc<Task>, Arc<Task>)>>,
}

impl Window {
    fn new() -> Self {
        Window {
            outcome: AtomicU8::new(UNDECIDED),
            pairs: Mutex::new(Vec::new()),
        }
    }

    fn decided(&self) -> bool {
        self.outcome.load(Ordering::SeqCst) != UNDECIDED
    }

    pub(crate) fn committed(&self) -> bool {
        self.outcome.load(Ordering::SeqCst) == COMMIT
    }

    pub(crate) fn rolled_back(&self) -> bool {
        self.outcome.load(Ordering::SeqCst) == ROLLBACK
    }

    /// Runs on the worker that executed the uncertain task, before its
    /// dependencies are released.
    pub(crate) fn resolve(&self, wrote: bool) {
        let outcome = if wrote { ROLLBACK } else { COMMIT };
        self.outcome.store(outcome, Ordering::SeqCst);
        let pairs = self.pairs.lock();
        for (normal, duplicate) in pairs.iter() {
            if wrote {
                // A duplicate that already ran keeps no visible effect: its
                // outputs are private and the select task skips them.
                if !duplicate.disable() {
                    duplicate.transition(TaskState::Finished, TaskState::Disabled);
                }
            } else {
                let disabled = normal.disable();
                debug_assert!(disabled, "normal branch ran before its uncertain task");
            }
        }
    }

    fn clear(&self) {
        self.pairs.lock().clear();
    }
}

/// The state of one normal/duplicate pair after a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeculationPair {
    pub normal: TaskId,
    pub duplicate: TaskId,
    pub normal_state: TaskState,
    pub duplicate_state: TaskState,
    /// `Some(true)` when the duplicate was committed.
    pub committed: Option<bool>,
}

#[derive(Default)]
struct Plan {
    window: Option<Arc<Window>>,
    /// User object key to the private version current inside the window.
    redirect: HashMap<usize, Arc<dyn DataObject>>,
    /// Keys that ever took part in a window.
    planned: HashSet<usize>,
    windows: Vec<Arc<Window>>,
}

impl Plan {
    fn close(&mut self) {
        self.window = None;
        self.redirect.clear();
    }
}

#[derive(Default)]
pub(crate) struct SpecState {
    plan: Mutex<Plan>,
}

impl SpecState {
    pub(crate) fn ever_planned(&self, key: usize) -> bool {
        self.plan.lock().planned.contains(&key)
    }

    pub(crate) fn pairs(&self) -> Vec<SpeculationPair> {
        let plan = self.plan.lock();
        let mut out = Vec::new();
        for w in &plan.windows {
            let committed = w.decided().then(|| w.committed());
            for (n, d) in w.pairs.lock().iter() {
                out.push(SpeculationPair {
                    normal: n.id,
                    duplicate: d.id,
                    normal_state: n.state(),
                    duplicate_state: d.state(),
                    committed,
                });
            }
        }
        out
    }

    pub(crate) fn clear(&self) {
        let mut plan = self.plan.lock();
        for w in plan.windows.drain(..) {
            w.clear();
        }
        plan.close();
    }

    pub(crate) fn insert(&self, graph: &GraphShared, task: PreparedTask) -> Result<Arc<Task>> {
        let mut plan = self.plan.lock();
        if task
            .accesses
            .iter()
            .any(|a| a.mode == AccessMode::MaybeWrite)
        {
            return open_window(graph, &mut plan, task);
        }
        let Some(window) = plan.window.clone() else {
            return graph.insert_prepared(task, SpecRole::None);
        };
        if !task
            .accesses
            .iter()
            .any(|a| plan.redirect.contains_key(&a.user_key))
        {
            return graph.insert_prepared(task, SpecRole::None);
        }
        if task.device.is_some() {
            return Err(RuntimeError::Speculation(
                "a task with a device callable cannot depend on an uncertain write".into(),
            ));
        }
        let mut pairs = window.pairs.lock();
        if window.decided() || !duplicable(&task) {
            drop(pairs);
            plan.close();
            return graph.insert_prepared(task, SpecRole::None);
        }

        let mut dup_accesses = Vec::with_capacity(task.accesses.len());
        let mut outputs = Vec::new();
        for a in &task.accesses {
            let source = plan
                .redirect
                .get(&a.user_key)
                .cloned()
                .unwrap_or_else(|| Arc::clone(&a.object));
            let private = !Arc::ptr_eq(&source, &a.object);
            if a.mode == AccessMode::Read {
                dup_accesses.push(PreparedAccess {
                    user_key: a.user_key,
                    object: source,
                    mode: AccessMode::Read,
                    internal: private,
                });
            } else {
                let version = a.object.twin();
                insert_copy(graph, &source, private, &version)?;
                dup_accesses.push(PreparedAccess {
                    user_key: a.user_key,
                    object: Arc::clone(&version),
                    mode: AccessMode::Write,
                    internal: true,
                });
                outputs.push((a.user_key, Arc::clone(&a.object), version));
            }
        }

        let duplicate = graph.insert_prepared(
            PreparedTask {
                accesses: dup_accesses,
                host: task.host.clone(),
                device: None,
                priority: task.priority,
                name: task.name.as_ref().map(|n| format!("{n}'")),
                result_type: task.result_type,
            },
            SpecRole::Duplicate(Arc::clone(&window)),
        )?;
        let normal = graph.insert_prepared(task, SpecRole::Normal)?;
        pairs.push((Arc::clone(&normal), duplicate));
        drop(pairs);

        let mut select_accesses = Vec::with_capacity(outputs.len() * 2);
        for (key, real, version) in &outputs {
            select_accesses.push(PreparedAccess {
                user_key: version.key(),
                object: Arc::clone(version),
                mode: AccessMode::Read,
                internal: true,
            });
            select_accesses.push(PreparedAccess {
                user_key: *key,
                object: Arc::clone(real),
                mode: AccessMode::Write,
                internal: false,
            });
        }
        let pairs_for_select: Vec<_> = outputs
            .iter()
            .map(|(_, real, version)| (Arc::clone(real), Arc::clone(version)))
            .collect();
        let decision = Arc::downgrade(&window);
        graph.insert_internal(
            select_accesses,
            move |_| {
                if decision.upgrade().is_some_and(|w| w.committed()) {
                    for (real, version) in &pairs_for_select {
                        version.copy_into(real.as_ref());
                    }
                }
            },
            SpecRole::Select,
            "select",
        )?;
        for (key, _, version) in outputs {
            plan.redirect.insert(key, version);
            plan.planned.insert(key);
        }
        Ok(normal)
    }
}

fn duplicable(task: &PreparedTask) -> bool {
    task.host.is_some()
        && task
            .accesses
            .iter()
            .all(|a| a.mode == AccessMode::Read || a.object.duplicable())
}

fn insert_copy(
    graph: &GraphShared,
    source: &Arc<dyn DataObject>,
    source_internal: bool,
    target: &Arc<dyn DataObject>,
) -> Result<Arc<Task>> {
    let (src, dst) = (Arc::clone(source), Arc::clone(target));
    graph.insert_internal(
        vec![
            PreparedAccess {
                user_key: source.key(),
                object: Arc::clone(source),
                mode: AccessMode::Read,
                internal: source_internal,
            },
            PreparedAccess {
                user_key: target.key(),
                object: Arc::clone(target),
                mode: AccessMode::Write,
                internal: true,
            },
        ],
        move |_| src.copy_into(dst.as_ref()),
        SpecRole::Copy,
        "copy",
    )
}

fn open_window(graph: &GraphShared, plan: &mut Plan, mut task: PreparedTask) -> Result<Arc<Task>> {
    plan.close();
    if task.result_type != TypeId::of::<bool>() {
        return Err(RuntimeError::Speculation(
            "a task with a maybe-write access must return whether it wrote (bool)".into(),
        ));
    }
    if task.device.is_some() {
        return Err(RuntimeError::Speculation(
            "a task with a maybe-write access cannot have a device callable".into(),
        ));
    }
    for a in task
        .accesses
        .iter()
        .filter(|a| a.mode == AccessMode::MaybeWrite)
    {
        if !a.object.duplicable() {
            return Err(RuntimeError::Speculation(
                "maybe-write target cannot be duplicated".into(),
            ));
        }
        if graph.used_by_comm(a.user_key) {
            return Err(RuntimeError::Speculation(
                "maybe-write target is used by a communication task".into(),
            ));
        }
    }
    let window = Arc::new(Window::new());
    let mut snapshots = Vec::new();
    for a in task
        .accesses
        .iter()
        .filter(|a| a.mode == AccessMode::MaybeWrite)
    {
        let twin = a.object.twin();
        insert_copy(graph, &a.object, false, &twin)?;
        snapshots.push((a.user_key, twin));
    }
    for a in &mut task.accesses {
        if a.mode == AccessMode::MaybeWrite {
            a.mode = AccessMode::Write;
        }
    }
    let uncertain = graph.insert_prepared(task, SpecRole::Uncertain(Arc::clone(&window)))?;
    for (key, twin) in snapshots {
        plan.redirect.insert(key, twin);
        plan.planned.insert(key);
    }
    plan.window = Some(Arc::clone(&window));
    plan.windows.push(window);
    Ok(uncertain)
}

/// Applies an uncertain task's result. Called with the callable's output.
pub(crate) fn resolve_uncertain(task: &Task, output: &Output) {
    if let SpecRole::Uncertain(window) = &task.spec {
        let wrote = output.downcast_ref::<bool>().copied().unwrap_or(true);
        window.resolve(wrote);
    }
}

/// After a duplicate finished: if its window rolled back meanwhile, it is
/// relabelled so exactly one branch of the pair reads `Finished`.
pub(crate) fn settle_duplicate(task: &Task) {
    if let SpecRole::Duplicate(window) = &task.spec {
        if window.rolled_back() {
            task.transition(TaskState::Finished, TaskState::Disabled);
        }
    }
}
