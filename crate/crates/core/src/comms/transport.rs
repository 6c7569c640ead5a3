//! Nonblocking point-to-point transports.
//!
//! A transport is driven by exactly one thread (the communication agent of
//! its instance). [`LocalCluster`] connects several endpoints inside one
//! process through ordered per-pair channels.

use std::cell::Cell;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};

use super::wire;
use crate::error::CommError;

pub type RequestId = u64;

/// A finished request. Receives carry the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub id: RequestId,
    pub payload: Option<Vec<u8>>,
}

pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn isend(&mut self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<RequestId, CommError>;
    /// Matches the oldest unmatched message from `source` with `tag`.
    fn irecv(&mut self, source: usize, tag: u32) -> Result<RequestId, CommError>;
    /// Returns one completed request, if any, without blocking.
    fn test_any(&mut self) -> Result<Option<Completion>, CommError>;
}

thread_local! {
    static ON_WORKER: Cell<bool> = const { Cell::new(false) };
}

static WORKER_ENTRIES: AtomicUsize = AtomicUsize::new(0);

pub(crate) fn mark_worker_thread() {
    ON_WORKER.with(|w| w.set(true));
}

/// Transports call this on entry; calls from worker threads are counted.
pub fn note_transport_entry() {
    if ON_WORKER.with(Cell::get) {
        WORKER_ENTRIES.fetch_add(1, Ordering::SeqCst);
    }
}

/// How many transport calls were made from worker threads. Always zero
/// unless a task body talks to a transport directly.
pub fn worker_transport_entries() -> usize {
    WORKER_ENTRIES.load(Ordering::SeqCst)
}

type DelayFn = dyn Fn(usize, usize, u32) -> Duration + Send + Sync;

struct Frame {
    tag: u32,
    bytes: Vec<u8>,
    deliver_at: Instant,
}

struct ClusterShared {
    size: usize,
    /// Index `source * size + dest`.
    channels: Vec<Mutex<VecDeque<Frame>>>,
    /// Last delivery time per (source, dest, tag); keeps matching FIFO.
    latest: Mutex<HashMap<(usize, usize, u32), Instant>>,
    delay: RwLock<Option<Arc<DelayFn>>>,
}

/// In-process communicator of `size` instances.
#[derive(Clone)]
pub struct LocalCluster {
    shared: Arc<ClusterShared>,
}

impl LocalCluster {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "a communicator needs at least one instance");
        LocalCluster {
            shared: Arc::new(ClusterShared {
                size,
                channels: (0..size * size)
                    .map(|_| Mutex::new(VecDeque::new()))
                    .collect(),
                latest: Mutex::new(HashMap::new()),
                delay: RwLock::new(None),
            }),
        }
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    /// Delays delivery of each frame by `f(source, dest, tag)`. Frames with
    /// the same source, destination and tag still arrive in order.
    pub fn set_delay(&self, f: impl Fn(usize, usize, u32) -> Duration + Send + Sync + 'static) {
        *self.shared.delay.write() = Some(Arc::new(f));
    }

    pub fn endpoint(&self, rank: usize) -> LocalEndpoint {
        assert!(rank < self.shared.size, "rank out of range");
        LocalEndpoint {
            rank,
            shared: Arc::clone(&self.shared),
            next_id: 0,
            sent: VecDeque::new(),
            recvs: Vec::new(),
        }
    }

    pub fn endpoints(&self) -> Vec<LocalEndpoint> {
        (0..self.shared.size).map(|r| self.endpoint(r)).collect()
    }

    /// Frames sent but not yet received, over all pairs.
    pub fn in_flight(&self) -> usize {
        self.shared.channels.iter().map(|c| c.lock().len()).sum()
    }
}

struct PendingRecv {
    id: RequestId,
    source: usize,
    tag: u32,
}

pub struct LocalEndpoint {
    rank: usize,
    shared: Arc<ClusterShared>,
    next_id: RequestId,
    sent: VecDeque<RequestId>,
    recvs: Vec<PendingRecv>,
}

impl LocalEndpoint {
    fn check_rank(&self, rank: usize) -> Result<(), CommError> {
        if rank < self.shared.size {
            Ok(())
        } else {
            Err(CommError::BadRank {
                rank,
                size: self.shared.size,
            })
        }
    }

    fn fresh_id(&mut self) -> RequestId {
        self.next_id += 1;
        self.next_id
    }
}

impl Transport for LocalEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.shared.size
    }

    fn isend(&mut self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<RequestId, CommError> {
        note_transport_entry();
        self.check_rank(dest)?;
        let now = Instant::now();
        let delay = self
            .shared
            .delay
            .read()
            .as_ref()
            .map_or(Duration::ZERO, |f| f(self.rank, dest, tag));
        let deliver_at = {
            let mut latest = self.shared.latest.lock();
            let slot = latest.entry((self.rank, dest, tag)).or_insert(now);
            *slot = (*slot).max(now + delay);
            *slot
        };
        let frame = Frame {
            tag,
            bytes: wire::encode_frame(tag, self.rank as u32, &payload),
            deliver_at,
        };
        self.shared.channels[self.rank * self.shared.size + dest]
            .lock()
            .push_back(frame);
        let id = self.fresh_id();
        self.sent.push_back(id);
        Ok(id)
    }

    fn irecv(&mut self, source: usize, tag: u32) -> Result<RequestId, CommError> {
        note_transport_entry();
        self.check_rank(source)?;
        let id = self.fresh_id();
        self.recvs.push(PendingRecv { id, source, tag });
        Ok(id)
    }

    fn test_any(&mut self) -> Result<Option<Completion>, CommError> {
        note_transport_entry();
        if let Some(id) = self.sent.pop_front() {
            return Ok(Some(Completion { id, payload: None }));
        }
        let now = Instant::now();
        // A receive only ever looks at the oldest frame with its tag, so a
        // delayed frame holds back later ones on the same (source, tag).
        let mut claimed: Vec<(usize, u32)> = Vec::new();
        for i in 0..self.recvs.len() {
            let (source, tag) = (self.recvs[i].source, self.recvs[i].tag);
            if claimed.contains(&(source, tag)) {
                continue;
            }
            claimed.push((source, tag));
            let mut channel = self.shared.channels[source * self.shared.size + self.rank].lock();
            let Some(pos) = channel.iter().position(|f| f.tag == tag) else {
                continue;
            };
            if channel[pos].deliver_at > now {
                continue;
            }
            let frame = channel.remove(pos).expect("frame vanished");
            drop(channel);
            let envelope = wire::decode_frame(&frame.bytes)?;
            if envelope.tag != tag || envelope.source as usize != source {
                return Err(CommError::Malformed(format!(
                    "frame for tag {} from {} matched tag {tag} from {source}",
                    envelope.tag, envelope.source
                )));
            }
            let recv = self.recvs.remove(i);
            return Ok(Some(Completion {
                id: recv.id,
                payload: Some(envelope.payload),
            }));
        }
        Ok(None)
    }
}
