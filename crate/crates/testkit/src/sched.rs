//! A user-defined scheduler: the most recently pushed compatible task
//! goes first.

use std::sync::Mutex;
use stf_core::{Scheduler, TaskRef, WorkerKind};

#[derive(Default)]
pub struct ReversingScheduler {
    stack: Mutex<Vec<TaskRef>>,
}

impl ReversingScheduler {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Scheduler for ReversingScheduler {
    fn push(&self, task: TaskRef) {
        self.stack.lock().unwrap().push(task);
    }

    fn pop(&self, kind: WorkerKind) -> Option<TaskRef> {
        let mut stack = self.stack.lock().unwrap();
        let at = stack.iter().rposition(|t| t.runs_on(kind))?;
        Some(stack.remove(at))
    }

    fn ready_count(&self) -> usize {
        self.stack.lock().unwrap().len()
    }
}
