//! Per-object dependency ledgers.
//!
//! Every object used as a dependency gets a [`DataHandle`] holding the ordered
//! list of access slots applied to it. A slot groups consecutive compatible
//! accesses (reads, atomic writes or commutative writes); an exclusive write
//! always gets a slot of its own. Slot `i + 1` only activates once every task
//! in slot `i` completed. A task is ready when the slot it occupies on every
//! handle it touches is active.
//!
//! No explicit graph is built: each task carries a counter of the slots it is
//! still waiting on, decremented by whichever release activates them.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::data::DataObject;
use crate::device::DeviceArena;
use crate::error::{Result, RuntimeError};
use crate::task::{Task, TaskId, TaskState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessMode {
    /// The task only reads the object.
    Read,
    /// The task reads and/or writes the object.
    Write,
    /// Concurrent writers allowed; they protect the object themselves.
    AtomicWrite,
    /// Writers that may run in any order, but never concurrently.
    CommutativeWrite,
    /// The task may write the object; enables speculation.
    MaybeWrite,
}

impl AccessMode {
    pub const ALL: [AccessMode; 5] = [
        AccessMode::Read,
        AccessMode::Write,
        AccessMode::AtomicWrite,
        AccessMode::CommutativeWrite,
        AccessMode::MaybeWrite,
    ];

    pub fn is_writing(self) -> bool {
        !matches!(self, AccessMode::Read)
    }

    pub fn slot_kind(self) -> SlotKind {
        match self {
            AccessMode::Read => SlotKind::ReadGroup,
            AccessMode::AtomicWrite => SlotKind::AtomicGroup,
            AccessMode::CommutativeWrite => SlotKind::CommuteGroup,
            AccessMode::Write | AccessMode::MaybeWrite => SlotKind::ExclusiveWrite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotKind {
    ReadGroup,
    AtomicGroup,
    CommuteGroup,
    ExclusiveWrite,
}

impl SlotKind {
    pub fn groups(self) -> bool {
        !matches!(self, SlotKind::ExclusiveWrite)
    }
}

/// Identity of a registered object. The generation distinguishes successive
/// registrations of the same address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandleId {
    pub identity: usize,
    pub generation: u32,
}

impl fmt::Display for HandleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{:x}.{}", self.identity, self.generation)
    }
}

#[derive(Debug, Default)]
struct RegistryEntry {
    generation: u32,
    live: bool,
}

/// Maps object identities to handle ids.
#[derive(Debug, Default)]
pub struct HandleRegistry {
    entries: HashMap<usize, RegistryEntry>,
}

impl HandleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, identity: usize) -> Result<HandleId> {
        match self.entries.get_mut(&identity) {
            Some(entry) if entry.live => Err(RuntimeError::DuplicateRegistration(identity)),
            Some(entry) => {
                entry.generation += 1;
                entry.live = true;
                Ok(HandleId {
                    identity,
                    generation: entry.generation,
                })
            }
            None => {
                self.entries.insert(
                    identity,
                    RegistryEntry {
                        generation: 0,
                        live: true,
                    },
                );
                Ok(HandleId {
                    identity,
                    generation: 0,
                })
            }
        }
    }

    pub fn unregister(&mut self, identity: usize) -> Result<()> {
        match self.entries.get_mut(&identity) {
            Some(entry) if entry.live => {
                entry.live = false;
                Ok(())
            }
            _ => Err(RuntimeError::NotRegistered(identity)),
        }
    }

    pub fn lookup(&self, identity: usize) -> Option<HandleId> {
        self.entries
            .get(&identity)
            .filter(|e| e.live)
            .map(|e| HandleId {
                identity,
                generation: e.generation,
            })
    }
}

pub(crate) struct AccessSlot {
    pub kind: SlotKind,
    pub members: Vec<Arc<Task>>,
    pub completed: usize,
}

#[derive(Default)]
pub(crate) struct Ledger {
    pub slots: Vec<AccessSlot>,
    pub active: usize,
    /// Slots as the grouping rules alone form them. A physical slot that
    /// completed before a compatible access arrived cannot take it, so
    /// `slots` may split a logical group; `logical` never does, which keeps
    /// the exported dependency relation independent of timing.
    logical: Vec<(SlotKind, Vec<TaskId>)>,
}

/// Entry/exit counters used to prove that conflicting tasks never overlap.
#[derive(Debug, Default)]
pub(crate) struct ConflictProbe {
    readers: AtomicUsize,
    atomics: AtomicUsize,
    exclusive: AtomicUsize,
}

impl ConflictProbe {
    /// Returns false when entering overlaps a conflicting access.
    pub fn enter(&self, mode: AccessMode) -> bool {
        match mode.slot_kind() {
            SlotKind::ReadGroup => {
                self.readers.fetch_add(1, Ordering::SeqCst);
                self.exclusive.load(Ordering::SeqCst) == 0
                    && self.atomics.load(Ordering::SeqCst) == 0
            }
            SlotKind::AtomicGroup => {
                self.atomics.fetch_add(1, Ordering::SeqCst);
                self.exclusive.load(Ordering::SeqCst) == 0
                    && self.readers.load(Ordering::SeqCst) == 0
            }
            SlotKind::CommuteGroup | SlotKind::ExclusiveWrite => {
                let prev = self.exclusive.fetch_add(1, Ordering::SeqCst);
                prev == 0
                    && self.readers.load(Ordering::SeqCst) == 0
                    && self.atomics.load(Ordering::SeqCst) == 0
            }
        }
    }

    pub fn exit(&self, mode: AccessMode) {
        let counter = match mode.slot_kind() {
            SlotKind::ReadGroup => &self.readers,
            SlotKind::AtomicGroup => &self.atomics,
            _ => &self.exclusive,
        };
        counter.fetch_sub(1, Ordering::SeqCst);
    }
}

pub(crate) struct DataHandle {
    pub id: HandleId,
    object: Arc<dyn DataObject>,
    /// Runtime-created objects (speculative copies) unreachable from user code.
    pub internal: bool,
    ledger: Mutex<Ledger>,
    /// Holder of the commutative exclusivity guard. Only changed while the
    /// graph's commutative region is held.
    guard: Mutex<Option<TaskId>>,
    pub probe: ConflictProbe,
    /// Device arenas that hold (or held) a block for this object.
    pub residency: Mutex<Vec<Arc<DeviceArena>>>,
}

impl DataHandle {
    pub(crate) fn new(id: HandleId, object: Arc<dyn DataObject>, internal: bool) -> Self {
        DataHandle {
            id,
            object,
            internal,
            ledger: Mutex::new(Ledger::default()),
            guard: Mutex::new(None),
            probe: ConflictProbe::default(),
            residency: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn object(&self) -> &Arc<dyn DataObject> {
        &self.object
    }

    /// Appends `task` to the ledger. Returns its slot and whether that slot is
    /// already active; when it is not, the task's pending counter is raised
    /// under the ledger lock so the activating release sees it.
    pub(crate) fn append_access(&self, mode: AccessMode, task: &Arc<Task>) -> (usize, bool) {
        let kind = mode.slot_kind();
        let mut ledger = self.ledger.lock();
        let active = ledger.active;
        let len = ledger.slots.len();
        let slot = match ledger.slots.last_mut() {
            Some(last) if kind.groups() && last.kind == kind && len > active => {
                last.members.push(Arc::clone(task));
                len - 1
            }
            _ => {
                ledger.slots.push(AccessSlot {
                    kind,
                    members: vec![Arc::clone(task)],
                    completed: 0,
                });
                len
            }
        };
        match ledger.logical.last_mut() {
            Some((k, members)) if kind.groups() && *k == kind => members.push(task.id),
            _ => ledger.logical.push((kind, vec![task.id])),
        }
        let is_active = slot == active;
        if !is_active {
            task.pending.fetch_add(1, Ordering::SeqCst);
        }
        (slot, is_active)
    }

    #[cfg(test)]
    pub(crate) fn active_slot(&self) -> usize {
        self.ledger.lock().active
    }

    /// True when every appended access has completed.
    pub(crate) fn is_quiescent(&self) -> bool {
        let ledger = self.ledger.lock();
        ledger.active >= ledger.slots.len()
    }

    #[cfg(test)]
    pub(crate) fn guard_holder(&self) -> Option<TaskId> {
        *self.guard.lock()
    }

    /// Logical slot kinds and member ids, in ledger order.
    pub(crate) fn slots(&self) -> Vec<(SlotKind, Vec<TaskId>)> {
        self.ledger.lock().logical.clone()
    }

    /// Immediate-successor pairs induced by consecutive logical slots.
    pub(crate) fn successor_edges(&self) -> Vec<(TaskId, TaskId)> {
        let ledger = self.ledger.lock();
        let mut edges = Vec::new();
        for pair in ledger.logical.windows(2) {
            for a in &pair[0].1 {
                for b in &pair[1].1 {
                    edges.push((*a, *b));
                }
            }
        }
        edges
    }

    pub(crate) fn clear(&self) {
        let mut ledger = self.ledger.lock();
        ledger.slots.clear();
        ledger.logical.clear();
        ledger.active = 0;
    }
}

/// Claims the right to push `task` to a scheduler. At most one claimant wins
/// until the task is popped and fails a commutative acquisition.
pub(crate) fn claim_for_push(task: &Task) -> bool {
    if task
        .queued
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return false;
    }
    task.transition(TaskState::Inserted, TaskState::Ready);
    true
}

/// Drops the insertion hold on `task`. Returns true if it is ready to push.
pub(crate) fn finish_insertion(task: &Task) -> bool {
    task.pending.fetch_sub(1, Ordering::SeqCst) == 1 && claim_for_push(task)
}

/// True iff the task occupies the active slot of every handle it touches.
pub(crate) fn task_slot_active(task: &Task) -> bool {
    task.accesses()
        .iter()
        .all(|a| a.handle.ledger.lock().active == a.slot)
}

/// Takes every commutative guard of `task` or none, in handle order, inside
/// the graph's commutative region. Never blocks holding a partial set.
pub(crate) fn acquire_for_execution(task: &Task, region: &Mutex<()>) -> bool {
    let mut commutes: Vec<_> = task
        .accesses()
        .iter()
        .filter(|a| a.mode == AccessMode::CommutativeWrite)
        .collect();
    if commutes.is_empty() {
        return true;
    }
    commutes.sort_by_key(|a| a.handle.id);
    let _region = region.lock();
    let blocked = commutes
        .iter()
        .any(|a| matches!(*a.handle.guard.lock(), Some(holder) if holder != task.id));
    if blocked {
        // Re-pushed by the next guard release on one of these handles.
        task.queued.store(false, Ordering::SeqCst);
        return false;
    }
    for a in &commutes {
        *a.handle.guard.lock() = Some(task.id);
    }
    true
}

/// Completes `task`'s accesses and returns the tasks that became ready, in
/// slot order. Also re-offers commutative tasks that lost a guard race.
pub(crate) fn release_access(task: &Arc<Task>, region: &Mutex<()>) -> Result<Vec<Arc<Task>>> {
    if !task.mark_released() {
        return Err(RuntimeError::Internal(format!(
            "task {} released twice",
            task.id
        )));
    }
    let mut ready = Vec::new();
    for access in task.accesses() {
        let mut ledger = access.handle.ledger.lock();
        let active = ledger.active;
        let slot = &mut ledger.slots[access.slot];
        slot.completed += 1;
        debug_assert!(slot.completed <= slot.members.len());
        if access.slot == active && slot.completed == slot.members.len() {
            ledger.active += 1;
            if let Some(next) = ledger.slots.get(ledger.active) {
                for member in &next.members {
                    if member.pending.fetch_sub(1, Ordering::SeqCst) == 1 && claim_for_push(member)
                    {
                        ready.push(Arc::clone(member));
                    }
                }
            }
        }
    }

    if task.has_commutative() {
        let _region = region.lock();
        let commutes = task
            .accesses()
            .iter()
            .filter(|a| a.mode == AccessMode::CommutativeWrite);
        for access in commutes.clone() {
            let mut guard = access.handle.guard.lock();
            if *guard == Some(task.id) {
                *guard = None;
            }
        }
        for access in commutes {
            let ledger = access.handle.ledger.lock();
            let Some(slot) = ledger.slots.get(ledger.active) else {
                continue;
            };
            if slot.kind != SlotKind::CommuteGroup {
                continue;
            }
            for member in &slot.members {
                if member.state() == TaskState::Ready
                    && member.pending.load(Ordering::SeqCst) == 0
                    && claim_for_push(member)
                {
                    ready.push(Arc::clone(member));
                }
            }
        }
    }
    Ok(ready)
}

/// All handles of one graph, keyed by object identity.
#[derive(Default)]
pub(crate) struct HandleTable {
    registry: HandleRegistry,
    handles: HashMap<usize, Arc<DataHandle>>,
    ordered: Vec<Arc<DataHandle>>,
}

impl HandleTable {
    pub(crate) fn get_or_register(
        &mut self,
        object: Arc<dyn DataObject>,
        internal: bool,
    ) -> Result<Arc<DataHandle>> {
        let key = object.key();
        if let Some(h) = self.handles.get(&key) {
            return Ok(Arc::clone(h));
        }
        let id = self.registry.register(key)?;
        let handle = Arc::new(DataHandle::new(id, object, internal));
        self.handles.insert(key, Arc::clone(&handle));
        self.ordered.push(Arc::clone(&handle));
        Ok(handle)
    }

    pub(crate) fn lookup(&self, key: usize) -> Option<&Arc<DataHandle>> {
        self.handles.get(&key)
    }

    pub(crate) fn unregister(&mut self, key: usize) -> Result<()> {
        self.registry.unregister(key)?;
        self.handles.remove(&key);
        Ok(())
    }

    pub(crate) fn all(&self) -> &[Arc<DataHandle>] {
        &self.ordered
    }

    pub(crate) fn clear(&mut self) {
        for h in &self.ordered {
            h.clear();
        }
        self.ordered.clear();
        self.handles.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Data;
    use crate::speculation::SpecRole;
    use crate::task::{TaskAccess, TaskBody};
    use std::sync::Weak;

    fn task(n: u64) -> Arc<Task> {
        Arc::new(Task::new(
            TaskId(n),
            Weak::new(),
            0,
            None,
            TaskBody::Compute {
                host: None,
                device: None,
            },
            SpecRole::None,
            false,
        ))
    }

    fn handle() -> Arc<DataHandle> {
        let d = Data::new(0i64);
        let obj = d.object();
        Arc::new(DataHandle::new(
            HandleId {
                identity: obj.key(),
                generation: 0,
            },
            obj,
            false,
        ))
    }

    /// Inserts `t` with the given accesses; returns whether it became ready.
    fn insert(t: &Arc<Task>, accesses: &[(&Arc<DataHandle>, AccessMode)]) -> bool {
        let mut list = Vec::new();
        for (h, mode) in accesses {
            let (slot, _) = h.append_access(*mode, t);
            list.push(TaskAccess {
                user_key: h.object().key(),
                handle: Arc::clone(h),
                mode: *mode,
                slot,
            });
        }
        t.accesses.set(list).ok().unwrap();
        finish_insertion(t)
    }

    fn ids(tasks: &[Arc<Task>]) -> Vec<u64> {
        tasks.iter().map(|t| t.id.0).collect()
    }

    #[test]
    fn registry_generations() {
        let mut reg = HandleRegistry::new();
        let a = reg.register(0x1000).unwrap();
        let b = reg.register(0x2000).unwrap();
        assert_ne!(a, b);
        assert!(matches!(
            reg.register(0x1000),
            Err(RuntimeError::DuplicateRegistration(0x1000))
        ));
        reg.unregister(0x1000).unwrap();
        assert_eq!(reg.lookup(0x1000), None);
        let a2 = reg.register(0x1000).unwrap();
        assert_eq!(a2.identity, a.identity);
        assert_eq!(a2.generation, a.generation + 1);
        assert!(a2 > a);
        assert_eq!(reg.lookup(0x1000), Some(a2));
        assert!(reg.unregister(0x3000).is_err());
    }

    #[test]
    fn reads_group_into_one_slot() {
        let h = handle();
        let (r1, r2) = (task(1), task(2));
        assert!(insert(&r1, &[(&h, AccessMode::Read)]));
        assert!(insert(&r2, &[(&h, AccessMode::Read)]));
        let slots = h.slots();
        assert_eq!(slots.len(), 1);
        assert_eq!(slots[0], (SlotKind::ReadGroup, vec![TaskId(1), TaskId(2)]));
    }

    #[test]
    fn grouping_rules() {
        let h = handle();
        let seq = [
            AccessMode::Read,
            AccessMode::Write,
            AccessMode::Read,
            AccessMode::Read,
        ];
        for (i, m) in seq.iter().enumerate() {
            insert(&task(i as u64 + 1), &[(&h, *m)]);
        }
        let slots: Vec<Vec<u64>> = h
            .slots()
            .into_iter()
            .map(|(_, m)| m.into_iter().map(|t| t.0).collect())
            .collect();
        assert_eq!(slots, vec![vec![1], vec![2], vec![3, 4]]);

        let h = handle();
        insert(&task(1), &[(&h, AccessMode::CommutativeWrite)]);
        insert(&task(2), &[(&h, AccessMode::CommutativeWrite)]);
        insert(&task(3), &[(&h, AccessMode::AtomicWrite)]);
        let slots = h.slots();
        assert_eq!(
            slots[0],
            (SlotKind::CommuteGroup, vec![TaskId(1), TaskId(2)])
        );
        assert_eq!(slots[1], (SlotKind::AtomicGroup, vec![TaskId(3)]));

        // Writes never merge, atomic and read groups never merge.
        let h = handle();
        insert(&task(1), &[(&h, AccessMode::Write)]);
        insert(&task(2), &[(&h, AccessMode::MaybeWrite)]);
        insert(&task(3), &[(&h, AccessMode::Read)]);
        insert(&task(4), &[(&h, AccessMode::AtomicWrite)]);
        assert_eq!(h.slots().len(), 4);
    }

    #[test]
    fn slot_activity_follows_completion() {
        let region = Mutex::new(());
        let h = handle();
        let (w1, r2) = (task(1), task(2));
        assert!(insert(&w1, &[(&h, AccessMode::Write)]));
        assert!(!insert(&r2, &[(&h, AccessMode::Read)]));
        assert!(task_slot_active(&w1));
        assert!(!task_slot_active(&r2));
        assert_eq!(ids(&release_access(&w1, &region).unwrap()), vec![2]);
        assert!(task_slot_active(&r2));
    }

    #[test]
    fn chain_and_group_gate() {
        let region = Mutex::new(());
        let h = handle();
        let (w1, w2) = (task(1), task(2));
        insert(&w1, &[(&h, AccessMode::Write)]);
        insert(&w2, &[(&h, AccessMode::Write)]);
        assert_eq!(ids(&release_access(&w1, &region).unwrap()), vec![2]);

        let h = handle();
        let (r1, r2, w) = (task(1), task(2), task(3));
        insert(&r1, &[(&h, AccessMode::Read)]);
        insert(&r2, &[(&h, AccessMode::Read)]);
        insert(&w, &[(&h, AccessMode::Write)]);
        assert!(release_access(&r1, &region).unwrap().is_empty());
        assert_eq!(ids(&release_access(&r2, &region).unwrap()), vec![3]);
    }

    #[test]
    fn diamond_readiness() {
        // a writes x and y; b reads x writes z1; c reads y writes z2; d reads z1, z2.
        let region = Mutex::new(());
        let (x, y, z1, z2) = (handle(), handle(), handle(), handle());
        let (a, b, c, d) = (task(1), task(2), task(3), task(4));
        assert!(insert(
            &a,
            &[(&x, AccessMode::Write), (&y, AccessMode::Write)]
        ));
        assert!(!insert(
            &b,
            &[(&x, AccessMode::Read), (&z1, AccessMode::Write)]
        ));
        assert!(!insert(
            &c,
            &[(&y, AccessMode::Read), (&z2, AccessMode::Write)]
        ));
        assert!(!insert(
            &d,
            &[(&z1, AccessMode::Read), (&z2, AccessMode::Read)]
        ));
        let ready = release_access(&a, &region).unwrap();
        assert_eq!(ids(&ready), vec![2, 3]);
        assert!(task_slot_active(&b) && task_slot_active(&c));
        assert!(!task_slot_active(&d));
        assert!(release_access(&b, &region).unwrap().is_empty());
        assert_eq!(ids(&release_access(&c, &region).unwrap()), vec![4]);
    }

    #[test]
    fn appending_after_completion_opens_a_new_active_slot() {
        let region = Mutex::new(());
        let h = handle();
        let r1 = task(1);
        insert(&r1, &[(&h, AccessMode::Read)]);
        release_access(&r1, &region).unwrap();
        let r2 = task(2);
        assert!(insert(&r2, &[(&h, AccessMode::Read)]));
        assert_eq!(h.active_slot(), 1);
        // Logically both reads are still one group.
        assert_eq!(
            h.slots(),
            vec![(SlotKind::ReadGroup, vec![TaskId(1), TaskId(2)])]
        );
        assert!(h.successor_edges().is_empty());
    }

    #[test]
    fn double_release_is_an_error() {
        let region = Mutex::new(());
        let h = handle();
        let t = task(1);
        insert(&t, &[(&h, AccessMode::Write)]);
        release_access(&t, &region).unwrap();
        assert!(matches!(
            release_access(&t, &region),
            Err(RuntimeError::Internal(_))
        ));
    }

    #[test]
    fn commutative_guard_exclusion_and_repush() {
        let region = Mutex::new(());
        let h = handle();
        let (c1, c2, c3) = (task(1), task(2), task(3));
        for c in [&c1, &c2, &c3] {
            assert!(insert(c, &[(&h, AccessMode::CommutativeWrite)]));
        }
        // Simulate the scheduler: all three popped; c1 wins.
        assert!(acquire_for_execution(&c1, &region));
        c1.set_state(TaskState::Executing);
        assert_eq!(h.guard_holder(), Some(TaskId(1)));
        assert!(!acquire_for_execution(&c2, &region));
        assert!(!acquire_for_execution(&c3, &region));
        assert!(!c2.queued.load(Ordering::SeqCst));
        c1.set_state(TaskState::Finished);
        let again = release_access(&c1, &region).unwrap();
        assert_eq!(ids(&again), vec![2, 3]);
        assert_eq!(h.guard_holder(), None);
        // Already queued: a second scan must not return them again.
        assert!(!claim_for_push(&c2));
        assert!(acquire_for_execution(&c2, &region));
    }

    #[test]
    fn read_only_tasks_need_no_guard() {
        let region = Mutex::new(());
        let h = handle();
        let r = task(1);
        insert(&r, &[(&h, AccessMode::Read)]);
        let _held = region.lock();
        // Would deadlock if the region were taken for non-commutative tasks.
        assert!(acquire_for_execution(&r, &Mutex::new(())));
    }

    #[test]
    fn overlapping_commutative_sets_one_winner() {
        let region = Mutex::new(());
        let (h1, h2, h3) = (handle(), handle(), handle());
        let (c1, c2) = (task(1), task(2));
        insert(
            &c1,
            &[
                (&h1, AccessMode::CommutativeWrite),
                (&h2, AccessMode::CommutativeWrite),
            ],
        );
        insert(
            &c2,
            &[
                (&h2, AccessMode::CommutativeWrite),
                (&h3, AccessMode::CommutativeWrite),
            ],
        );
        let a = acquire_for_execution(&c1, &region);
        let b = acquire_for_execution(&c2, &region);
        assert!(a ^ b);
        // The loser did not keep a partial guard.
        assert_eq!(h3.guard_holder(), None);
    }

    #[test]
    fn probe_detects_conflicts() {
        let p = ConflictProbe::default();
        assert!(p.enter(AccessMode::Read));
        assert!(p.enter(AccessMode::Read));
        assert!(!p.enter(AccessMode::Write));
        p.exit(AccessMode::Write);
        p.exit(AccessMode::Read);
        p.exit(AccessMode::Read);
        assert!(p.enter(AccessMode::AtomicWrite));
        assert!(p.enter(AccessMode::AtomicWrite));
        assert!(!p.enter(AccessMode::Read));
        p.exit(AccessMode::Read);
        p.exit(AccessMode::AtomicWrite);
        p.exit(AccessMode::AtomicWrite);
        assert!(p.enter(AccessMode::CommutativeWrite));
        assert!(!p.enter(AccessMode::CommutativeWrite));
    }
}
