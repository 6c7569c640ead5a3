//! Execution events, the timeline derived from them, and the dot and SVG
//! exports.

pub mod dot;
pub mod svg;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;
use std::time::Instant;

use parking_lot::Mutex;

use crate::task::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    TaskStart,
    TaskEnd,
    Push,
    Pop,
    StageInBegin,
    StageInEnd,
    CommPosted,
    CommComplete,
}

impl EventKind {
    /// Tie-break for events with equal timestamps: a push is always seen
    /// before the pop it enables, and a start before its end.
    fn rank(self) -> u8 {
        match self {
            EventKind::Push => 0,
            EventKind::Pop => 1,
            EventKind::CommPosted | EventKind::StageInBegin => 2,
            EventKind::StageInEnd => 3,
            EventKind::TaskStart => 4,
            EventKind::TaskEnd => 5,
            EventKind::CommComplete => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: EventKind,
    /// Nanoseconds since the graph was attached to its engine.
    pub t_ns: u64,
    /// Worker id; `None` for events raised outside workers.
    pub worker: Option<usize>,
    pub task: TaskId,
}

const SHARDS: usize = 64;

/// Append-only event buffers, sharded to keep workers off each other's
/// locks. Merged and sorted on export.
pub(crate) struct Recorder {
    enabled: AtomicBool,
    origin: OnceLock<Instant>,
    shards: Vec<Mutex<Vec<TraceEvent>>>,
}

impl Recorder {
    pub(crate) fn new(enabled: bool) -> Self {
        Recorder {
            enabled: AtomicBool::new(enabled),
            origin: OnceLock::new(),
            shards: (0..SHARDS).map(|_| Mutex::new(Vec::new())).collect(),
        }
    }

    pub(crate) fn start_clock(&self) {
        self.origin.get_or_init(Instant::now);
    }

    pub(crate) fn is_enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub(crate) fn record(&self, kind: EventKind, worker: Option<usize>, task: TaskId) {
        if !self.is_enabled() {
            return;
        }
        let origin = *self.origin.get_or_init(Instant::now);
        let shard = worker.map_or(SHARDS - 1, |w| w % (SHARDS - 1));
        let mut buf = self.shards[shard].lock();
        // Taken under the shard lock so each buffer is time-ordered.
        let t_ns = origin.elapsed().as_nanos() as u64;
        buf.push(TraceEvent {
            kind,
            t_ns,
            worker,
            task,
        });
    }

    pub(crate) fn events(&self) -> Vec<TraceEvent> {
        let mut all: Vec<TraceEvent> = self.shards.iter().flat_map(|s| s.lock().clone()).collect();
        all.sort_by_key(|e| (e.t_ns, e.kind.rank()));
        all
    }
}

/// One executed task on one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub task: TaskId,
    pub start_ns: u64,
    pub end_ns: u64,
}

/// Per-worker lanes of task intervals plus the ready-task curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    pub lanes: BTreeMap<usize, Vec<Interval>>,
    /// `(time, ready count)` after each push or pop, in time order.
    pub ready: Vec<(u64, i64)>,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl Timeline {
    pub fn from_events(events: &[TraceEvent]) -> Timeline {
        let mut lanes: BTreeMap<usize, Vec<Interval>> = BTreeMap::new();
        let mut open: HashMap<(usize, TaskId), u64> = HashMap::new();
        let mut ready = Vec::new();
        let mut count = 0i64;
        for e in events {
            match (e.kind, e.worker) {
                (EventKind::TaskStart, Some(w)) => {
                    open.insert((w, e.task), e.t_ns);
                }
                (EventKind::TaskEnd, Some(w)) => {
                    if let Some(start_ns) = open.remove(&(w, e.task)) {
                        lanes.entry(w).or_default().push(Interval {
                            task: e.task,
                            start_ns,
                            end_ns: e.t_ns,
                        });
                    }
                }
                (EventKind::Push, _) => {
                    count += 1;
                    ready.push((e.t_ns, count));
                }
                (EventKind::Pop, _) => {
                    count -= 1;
                    ready.push((e.t_ns, count));
                }
                _ => {}
            }
        }
        Timeline {
            lanes,
            ready,
            start_ns: events.first().map_or(0, |e| e.t_ns),
            end_ns: events.last().map_or(0, |e| e.t_ns),
        }
    }

    /// Ready-count step function: `count` holds from each point until the
    /// next one.
    pub fn ready_steps(&self) -> &[(u64, i64)] {
        &self.ready
    }

    /// Time each worker spent outside task bodies between the first and
    /// last event.
    pub fn idle_ns(&self) -> BTreeMap<usize, u64> {
        let span = self.end_ns - self.start_ns;
        self.lanes
            .iter()
            .map(|(w, lane)| {
                let busy: u64 = lane.iter().map(|i| i.end_ns - i.start_ns).sum();
                (*w, span.saturating_sub(busy))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, t_ns: u64, worker: Option<usize>, task: u64) -> TraceEvent {
        TraceEvent {
            kind,
            t_ns,
            worker,
            task: TaskId(task),
        }
    }

    #[test]
    fn disabled_recorder_keeps_nothing() {
        let r = Recorder::new(false);
        r.record(EventKind::Push, None, TaskId(1));
        assert!(r.events().is_empty());
    }

    #[test]
    fn events_merge_in_time_order() {
        let r = Recorder::new(true);
        for i in 0..200 {
            r.record(EventKind::Push, Some(i % 7), TaskId(i as u64));
        }
        let events = r.events();
        assert_eq!(events.len(), 200);
        assert!(events.windows(2).all(|w| w[0].t_ns <= w[1].t_ns));
    }

    #[test]
    fn ready_curve_steps() {
        use EventKind::*;
        let events = [
            ev(Push, 0, None, 1),
            ev(Push, 0, None, 2),
            ev(Push, 0, None, 3),
            ev(Pop, 5, Some(0), 1),
            ev(Pop, 9, Some(0), 2),
            ev(Pop, 12, Some(0), 3),
        ];
        let tl = Timeline::from_events(&events);
        let heights: Vec<i64> = tl.ready_steps().iter().map(|s| s.1).collect();
        assert_eq!(heights, vec![1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn lanes_and_idle_time() {
        use EventKind::*;
        let events = [
            ev(TaskStart, 0, Some(0), 1),
            ev(TaskStart, 2, Some(1), 2),
            ev(TaskEnd, 4, Some(0), 1),
            ev(TaskEnd, 10, Some(1), 2),
        ];
        let tl = Timeline::from_events(&events);
        assert_eq!(tl.lanes[&0].len(), 1);
        assert_eq!(tl.idle_ns()[&0], 6);
        assert_eq!(tl.idle_ns()[&1], 2);
    }
}
