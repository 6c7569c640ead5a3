//! Ready-task schedulers.
//!
//! A scheduler only stores tasks whose dependencies are satisfied. Engines push
//! into it and workers pop from it with their own [`WorkerKind`]; `pop` must
//! never return a task that lacks a callable for that kind.

use std::cmp::{Ordering as CmpOrdering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::engine::WorkerKind;
use crate::task::TaskRef;

pub trait Scheduler: Send + Sync {
    fn push(&self, task: TaskRef);
    /// May return `None` even when compatible tasks are queued.
    fn pop(&self, kind: WorkerKind) -> Option<TaskRef>;
    /// Racy snapshot of pushed and not yet popped tasks.
    fn ready_count(&self) -> usize;
}

/// Looks up a built-in scheduler: `fifo` or `prio`.
pub fn scheduler_by_name(name: &str) -> Option<Arc<dyn Scheduler>> {
    match name {
        "fifo" => Some(Arc::new(FifoScheduler::default())),
        "prio" | "priority" => Some(Arc::new(PriorityScheduler::default())),
        _ => None,
    }
}

struct Entry {
    task: TaskRef,
    seq: u64,
    /// Shared by the host and device copies of a dual-callable task.
    claim: Option<Arc<AtomicBool>>,
}

impl Entry {
    fn claim(&self) -> bool {
        self.claim
            .as_ref()
            .is_none_or(|c| !c.swap(true, Ordering::AcqRel))
    }

    fn twin(&self) -> Entry {
        Entry {
            task: self.task.clone(),
            seq: self.seq,
            claim: self.claim.clone(),
        }
    }
}

trait Lane: Default + Send {
    fn put(&mut self, entry: Entry);
    fn take(&mut self) -> Option<Entry>;
}

impl Lane for VecDeque<Entry> {
    fn put(&mut self, entry: Entry) {
        self.push_back(entry);
    }

    fn take(&mut self) -> Option<Entry> {
        self.pop_front()
    }
}

struct Ranked(Entry);

impl Ranked {
    fn key(&self) -> (i32, Reverse<u64>) {
        (self.0.task.priority(), Reverse(self.0.seq))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.key().cmp(&other.key())
    }
}

#[derive(Default)]
struct Heap(BinaryHeap<Ranked>);

impl Lane for Heap {
    fn put(&mut self, entry: Entry) {
        self.0.push(Ranked(entry));
    }

    fn take(&mut self) -> Option<Entry> {
        self.0.pop().map(|r| r.0)
    }
}

#[derive(Default)]
struct Lanes<L> {
    host: L,
    device: L,
    seq: u64,
}

/// One host lane and one device lane. Dual-callable tasks go in both and
/// are claimed by whichever lane pops them first.
#[derive(Default)]
struct Split<L> {
    lanes: Mutex<Lanes<L>>,
    ready: AtomicUsize,
}

impl<L: Lane> Split<L> {
    fn push(&self, task: TaskRef) {
        let host = task.has_host_callable();
        let device = task.has_device_callable();
        let mut lanes = self.lanes.lock();
        lanes.seq += 1;
        let claim = (host && device).then(|| Arc::new(AtomicBool::new(false)));
        let entry = Entry {
            task,
            seq: lanes.seq,
            claim,
        };
        self.ready.fetch_add(1, Ordering::SeqCst);
        match (host, device) {
            (true, true) => {
                lanes.device.put(entry.twin());
                lanes.host.put(entry);
            }
            (false, true) => lanes.device.put(entry),
            _ => lanes.host.put(entry),
        }
    }

    fn pop(&self, kind: WorkerKind) -> Option<TaskRef> {
        let mut lanes = self.lanes.lock();
        let lane = match kind {
            WorkerKind::Host => &mut lanes.host,
            WorkerKind::Device(_) => &mut lanes.device,
        };
        while let Some(entry) = lane.take() {
            if entry.claim() {
                self.ready.fetch_sub(1, Ordering::SeqCst);
                return Some(entry.task);
            }
        }
        None
    }
}

/// First-in first-out among tasks runnable by the same worker kind.
#[derive(Default)]
pub struct FifoScheduler {
    inner: Split<VecDeque<Entry>>,
}

impl FifoScheduler {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Scheduler for FifoScheduler {
    fn push(&self, task: TaskRef) {
        self.inner.push(task);
    }

    fn pop(&self, kind: WorkerKind) -> Option<TaskRef> {
        self.inner.pop(kind)
    }

    fn ready_count(&self) -> usize {
        self.inner.ready.load(Ordering::SeqCst)
    }
}

/// Highest priority first; equal priorities in push order.
#[derive(Default)]
pub struct PriorityScheduler {
    inner: Split<Heap>,
}

impl PriorityScheduler {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Scheduler for PriorityScheduler {
    fn push(&self, task: TaskRef) {
        self.inner.push(task);
    }

    fn pop(&self, kind: WorkerKind) -> Option<TaskRef> {
        self.inner.pop(kind)
    }

    fn ready_count(&self) -> usize {
        self.inner.ready.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn host(id: u64, prio: i32) -> TaskRef {
        TaskRef::standalone(id, prio, true, false)
    }

    fn ids(s: &dyn Scheduler, kind: WorkerKind) -> Vec<u64> {
        std::iter::from_fn(|| s.pop(kind))
            .map(|t| t.id().0)
            .collect()
    }

    #[test]
    fn fifo_order_and_count() {
        let s = FifoScheduler::new();
        assert!(s.pop(WorkerKind::Host).is_none());
        assert_eq!(s.ready_count(), 0);
        for i in 0..3 {
            s.push(host(i, 0));
        }
        assert_eq!(s.pop(WorkerKind::Host).unwrap().id().0, 0);
        assert_eq!(s.ready_count(), 2);
        assert_eq!(ids(&s, WorkerKind::Host), vec![1, 2]);
    }

    #[test]
    fn priority_pops_highest_first() {
        let s = PriorityScheduler::new();
        s.push(host(1, 5));
        s.push(host(2, 9));
        s.push(host(3, 9));
        assert_eq!(ids(&s, WorkerKind::Host), vec![2, 3, 1]);
    }

    #[test]
    fn kind_filter() {
        let s = FifoScheduler::new();
        s.push(host(1, 0));
        assert!(s.pop(WorkerKind::Device(0)).is_none());
        assert_eq!(s.pop(WorkerKind::Host).unwrap().id().0, 1);
        s.push(TaskRef::standalone(2, 0, false, true));
        assert!(s.pop(WorkerKind::Host).is_none());
        assert_eq!(s.pop(WorkerKind::Device(1)).unwrap().id().0, 2);
    }

    #[test]
    fn dual_callable_is_claimed_once() {
        for first in [WorkerKind::Host, WorkerKind::Device(0)] {
            let s = FifoScheduler::new();
            s.push(TaskRef::standalone(7, 0, true, true));
            assert_eq!(s.ready_count(), 1);
            assert_eq!(s.pop(first).unwrap().id().0, 7);
            assert!(s.pop(WorkerKind::Host).is_none());
            assert!(s.pop(WorkerKind::Device(0)).is_none());
            assert_eq!(s.ready_count(), 0);
        }
    }

    #[test]
    fn concurrent_dual_pops_agree() {
        let s = Arc::new(FifoScheduler::new());
        for i in 0..2000 {
            s.push(TaskRef::standalone(i, 0, true, true));
        }
        let handles: Vec<_> = [WorkerKind::Host, WorkerKind::Device(0)]
            .into_iter()
            .map(|k| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || ids(&*s, k))
            })
            .collect();
        let mut all: Vec<u64> = handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..2000).collect::<Vec<_>>());
    }

    #[test]
    fn by_name() {
        assert!(scheduler_by_name("fifo").is_some());
        assert!(scheduler_by_name("prio").is_some());
        assert!(scheduler_by_name("lifo").is_none());
    }

    proptest! {
        #[test]
        fn priority_sequence_is_non_increasing(prios in prop::collection::vec(-20i32..20, 0..64)) {
            let s = PriorityScheduler::new();
            for (i, p) in prios.iter().enumerate() {
                s.push(host(i as u64, *p));
            }
            let popped: Vec<TaskRef> = std::iter::from_fn(|| s.pop(WorkerKind::Host)).collect();
            prop_assert_eq!(popped.len(), prios.len());
            for w in popped.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                prop_assert!(a.priority() > b.priority()
                    || (a.priority() == b.priority() && a.id() < b.id()));
            }
        }
    }
}
