//! The background agent that owns an instance's transport.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use super::wire::{self, BROADCAST_BIT, PAYLOAD_BIT};
use super::{CommKind, Transport};
use crate::error::CommError;
use crate::task::{Task, TaskBody, TaskState};
use crate::trace::EventKind;

/// How long the agent sleeps between polls while requests are pending.
const POLL_INTERVAL: Duration = Duration::from_micros(50);

#[derive(Default)]
struct Queue {
    tasks: VecDeque<Arc<Task>>,
    stop: bool,
}

struct AgentShared {
    queue: Mutex<Queue>,
    cv: Condvar,
    wakeups: AtomicU64,
}

pub(crate) struct CommAgent {
    shared: Arc<AgentShared>,
    rank: usize,
    size: usize,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl CommAgent {
    pub(crate) fn start(transport: Box<dyn Transport>, max_message: u64) -> std::io::Result<Self> {
        let shared = Arc::new(AgentShared {
            queue: Mutex::new(Queue::default()),
            cv: Condvar::new(),
            wakeups: AtomicU64::new(0),
        });
        let (rank, size) = (transport.rank(), transport.size());
        let s = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name(format!("stf-comm-{rank}"))
            .spawn(move || {
                Progress {
                    transport,
                    max_message,
                    ops: HashMap::new(),
                    requests: HashMap::new(),
                    next_op: 0,
                }
                .run(&s)
            })?;
        Ok(CommAgent {
            shared,
            rank,
            size,
            thread: Mutex::new(Some(thread)),
        })
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn size(&self) -> usize {
        self.size
    }

    pub(crate) fn wakeups(&self) -> u64 {
        self.shared.wakeups.load(Ordering::Relaxed)
    }

    pub(crate) fn submit(&self, task: Arc<Task>) {
        self.shared.queue.lock().tasks.push_back(task);
        self.shared.cv.notify_one();
    }

    /// Stops after the handoff queue drains. Requests still pending are
    /// reported and abandoned.
    pub(crate) fn shutdown(&self) {
        self.shared.queue.lock().stop = true;
        self.shared.cv.notify_one();
        if let Some(t) = self.thread.lock().take() {
            let _ = t.join();
        }
    }
}

impl Drop for CommAgent {
    fn drop(&mut self) {
        self.shutdown();
    }
}

enum Stage {
    Sending {
        outstanding: usize,
    },
    AwaitSize {
        source: usize,
        tag: u32,
        sequence: Option<u64>,
    },
    AwaitPayload {
        announced: u64,
    },
}

struct Op {
    task: Arc<Task>,
    stage: Stage,
}

struct Progress {
    transport: Box<dyn Transport>,
    max_message: u64,
    ops: HashMap<u64, Op>,
    requests: HashMap<u64, u64>,
    next_op: u64,
}

impl Progress {
    fn run(mut self, shared: &AgentShared) {
        loop {
            let fresh: Vec<Arc<Task>> = {
                let mut q = shared.queue.lock();
                if q.tasks.is_empty() {
                    if q.stop {
                        break;
                    }
                    if self.ops.is_empty() {
                        shared.cv.wait(&mut q);
                        shared.wakeups.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    shared.cv.wait_for(&mut q, POLL_INTERVAL);
                }
                q.tasks.drain(..).collect()
            };
            for task in fresh {
                if let Err(e) = self.post(&task) {
                    fail(&task, e);
                }
            }
            self.progress();
        }
        if !self.ops.is_empty() {
            let stuck: Vec<String> = self.ops.values().map(|op| op.task.display_name()).collect();
            log::warn!(
                "communication agent stopped with {} pending requests: {}",
                stuck.len(),
                stuck.join(", ")
            );
        }
    }

    fn progress(&mut self) {
        loop {
            match self.transport.test_any() {
                Ok(Some(c)) => {
                    let Some(op_id) = self.requests.remove(&c.id) else {
                        continue;
                    };
                    if let Err((task, e)) = self.advance(op_id, c.payload) {
                        fail(&task, e);
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    for (_, op) in self.ops.drain() {
                        fail(&op.task, e.clone());
                    }
                    self.requests.clear();
                    return;
                }
            }
        }
    }

    fn track(&mut self, request: u64, op_id: u64) {
        self.requests.insert(request, op_id);
    }

    fn post(&mut self, task: &Arc<Task>) -> Result<(), CommError> {
        let TaskBody::Comm(op) = &task.body else {
            return Err(CommError::Transport("not a communication task".into()));
        };
        task.set_state(TaskState::Executing);
        task.executions.fetch_add(1, Ordering::SeqCst);
        if let Some(g) = task.graph.upgrade() {
            g.record(EventKind::CommPosted, None, task.id);
        }
        // Sends read the host copy; receives overwrite it.
        crate::device::prepare_host(task);
        let object = Arc::clone(task.accesses()[0].handle.object());
        let op_id = self.next_op;
        self.next_op += 1;
        let stage = match op.kind {
            CommKind::Send { dest, tag } => {
                let payload = (op.codec.encode)(object.as_ref());
                self.send_pair(op_id, dest, tag, payload, None)?;
                Stage::Sending { outstanding: 2 }
            }
            CommKind::BroadcastRoot { sequence } => {
                let payload = (op.codec.encode)(object.as_ref());
                let peers: Vec<usize> = (0..self.transport.size())
                    .filter(|&r| r != self.transport.rank())
                    .collect();
                for &r in &peers {
                    self.send_pair(op_id, r, BROADCAST_BIT, payload.clone(), Some(sequence))?;
                }
                if peers.is_empty() {
                    complete(task);
                    return Ok(());
                }
                Stage::Sending {
                    outstanding: 2 * peers.len(),
                }
            }
            CommKind::Recv { source, tag } => {
                let req = self.transport.irecv(source, tag)?;
                self.track(req, op_id);
                Stage::AwaitSize {
                    source,
                    tag,
                    sequence: None,
                }
            }
            CommKind::BroadcastLeaf { root, sequence } => {
                let req = self.transport.irecv(root, BROADCAST_BIT)?;
                self.track(req, op_id);
                Stage::AwaitSize {
                    source: root,
                    tag: BROADCAST_BIT,
                    sequence: Some(sequence),
                }
            }
        };
        self.ops.insert(
            op_id,
            Op {
                task: Arc::clone(task),
                stage,
            },
        );
        Ok(())
    }

    fn send_pair(
        &mut self,
        op_id: u64,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
        sequence: Option<u64>,
    ) -> Result<(), CommError> {
        let size =
            self.transport
                .isend(dest, tag, wire::encode_size(payload.len() as u64, sequence))?;
        self.track(size, op_id);
        let body = self.transport.isend(dest, tag | PAYLOAD_BIT, payload)?;
        self.track(body, op_id);
        Ok(())
    }

    fn advance(
        &mut self,
        op_id: u64,
        payload: Option<Vec<u8>>,
    ) -> Result<(), (Arc<Task>, CommError)> {
        let Some(mut op) = self.ops.remove(&op_id) else {
            return Ok(());
        };
        let result = self.step(op_id, &mut op, payload);
        match result {
            Ok(true) => {
                complete(&op.task);
                Ok(())
            }
            Ok(false) => {
                self.ops.insert(op_id, op);
                Ok(())
            }
            Err(e) => Err((op.task, e)),
        }
    }

    /// Returns true once the operation is complete.
    fn step(
        &mut self,
        op_id: u64,
        op: &mut Op,
        payload: Option<Vec<u8>>,
    ) -> Result<bool, CommError> {
        match &mut op.stage {
            Stage::Sending { outstanding } => {
                *outstanding -= 1;
                Ok(*outstanding == 0)
            }
            Stage::AwaitSize {
                source,
                tag,
                sequence,
            } => {
                let bytes = payload.unwrap_or_default();
                let (announced, received) = wire::decode_size(&bytes)?;
                if let Some(expected) = *sequence {
                    let received = received.unwrap_or(u64::MAX);
                    if received != expected {
                        return Err(CommError::BroadcastDivergence { expected, received });
                    }
                }
                if announced > self.max_message {
                    return Err(CommError::MessageTooLarge {
                        size: announced,
                        limit: self.max_message,
                    });
                }
                let req = self.transport.irecv(*source, *tag | PAYLOAD_BIT)?;
                self.track(req, op_id);
                op.stage = Stage::AwaitPayload { announced };
                Ok(false)
            }
            Stage::AwaitPayload { announced } => {
                let bytes = payload.unwrap_or_default();
                if bytes.len() as u64 != *announced {
                    return Err(CommError::SizeMismatch {
                        announced: *announced,
                        actual: bytes.len() as u64,
                    });
                }
                let TaskBody::Comm(comm) = &op.task.body else {
                    unreachable!("only communication tasks reach the agent");
                };
                let object = Arc::clone(op.task.accesses()[0].handle.object());
                (comm.codec.decode)(object.as_ref(), &bytes)?;
                Ok(true)
            }
        }
    }
}

fn complete(task: &Arc<Task>) {
    if let Some(g) = task.graph.upgrade() {
        g.record(EventKind::CommComplete, None, task.id);
        task.store_result(Box::new(()));
        task.set_state(TaskState::Finished);
        g.complete(task);
    }
}

fn fail(task: &Arc<Task>, e: CommError) {
    if let Some(g) = task.graph.upgrade() {
        g.fail(task, e.to_string());
    }
}
