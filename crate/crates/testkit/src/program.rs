//! Random task programs over integer cells, and their sequential meaning.
//!
//! Every task computes `s = constant + sum of the cells it reads`, then
//! updates each cell it writes:
//!
//! * `Write` (and `MaybeWrite` when the task decides to write):
//!   `x = 3x + s`, which does not commute, so any reordering shows up;
//! * `AtomicWrite` and `CommutativeWrite`: `x = x + s`, which commutes, as
//!   both modes allow members of one group to run in any order.
//!
//! All arithmetic wraps. A task's callable returns whether one of its
//! `MaybeWrite` accesses wrote.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use stf_core::{
    AccessMode, ComputeEngine, Data, GraphStats, Result, Scheduler, SpeculationPair, TaskGraph,
    TaskId, WorkerTeam,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    /// Distinct cells with their access modes, in declaration order.
    pub accesses: Vec<(usize, AccessMode)>,
    pub constant: i64,
    pub priority: i32,
    /// Whether `MaybeWrite` accesses actually write.
    pub writes: bool,
}

impl TaskSpec {
    pub fn apply(&self, state: &mut [i64]) {
        let s = self.read_sum(|c| state[c]);
        for &(c, mode) in &self.accesses {
            if let Some(v) = self.update(mode, state[c], s) {
                state[c] = v;
            }
        }
    }

    pub fn read_sum(&self, read: impl Fn(usize) -> i64) -> i64 {
        self.accesses
            .iter()
            .filter(|(_, m)| *m == AccessMode::Read)
            .fold(self.constant, |acc, &(c, _)| acc.wrapping_add(read(c)))
    }

    /// New value of a cell accessed with `mode`, or `None` if untouched.
    pub fn update(&self, mode: AccessMode, old: i64, s: i64) -> Option<i64> {
        match mode {
            AccessMode::Read => None,
            AccessMode::Write => Some(old.wrapping_mul(3).wrapping_add(s)),
            AccessMode::MaybeWrite => self.writes.then(|| old.wrapping_mul(3).wrapping_add(s)),
            AccessMode::AtomicWrite | AccessMode::CommutativeWrite => Some(old.wrapping_add(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub init: Vec<i64>,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone)]
pub struct ProgramConfig {
    pub max_tasks: usize,
    pub cells: usize,
    pub max_accesses: usize,
    pub modes: Vec<AccessMode>,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        ProgramConfig {
            max_tasks: 64,
            cells: 16,
            max_accesses: 4,
            modes: AccessMode::ALL.to_vec(),
        }
    }
}

impl Program {
    pub fn random(rng: &mut impl Rng, cfg: &ProgramConfig) -> Program {
        let cells = cfg.cells.max(1);
        let init = (0..cells).map(|_| rng.gen_range(-100..100)).collect();
        let n = rng.gen_range(1..=cfg.max_tasks.max(1));
        let all: Vec<usize> = (0..cells).collect();
        let tasks = (0..n)
            .map(|_| {
                let k = rng.gen_range(0..=cfg.max_accesses.min(cells));
                let accesses = all
                    .choose_multiple(rng, k)
                    .map(|&c| (c, *cfg.modes.choose(rng).expect("no modes configured")))
                    .collect();
                TaskSpec {
                    accesses,
                    constant: rng.gen_range(-50..50),
                    priority: rng.gen_range(0..4),
                    writes: rng.gen_bool(0.5),
                }
            })
            .collect();
        Program { init, tasks }
    }

    /// The same program with every `MaybeWrite` forced to `writes`.
    pub fn with_writes(mut self, writes: bool) -> Program {
        for t in &mut self.tasks {
            t.writes = writes;
        }
        self
    }

    /// Final state of running the tasks one by one in insertion order.
    pub fn sequential(&self) -> Vec<i64> {
        let mut state = self.init.clone();
        for t in &self.tasks {
            t.apply(&mut state);
        }
        state
    }

    pub fn make_cells(&self) -> Vec<Data<i64>> {
        self.init.iter().map(|&v| Data::new(v)).collect()
    }

    /// Inserts every task into `graph`, in order.
    pub fn insert(&self, graph: &TaskGraph, cells: &[Data<i64>]) -> Result<Vec<TaskId>> {
        let mut ids = Vec::with_capacity(self.tasks.len());
        for spec in &self.tasks {
            let mut builder = graph.task().priority(spec.priority);
            let mut captured = Vec::with_capacity(spec.accesses.len());
            for &(c, mode) in &spec.accesses {
                builder = builder.access(&cells[c], mode);
                captured.push((cells[c].clone(), mode));
            }
            let spec = spec.clone();
            let viewer = builder
                .host(move |ctx| {
                    let s = captured.iter().fold(spec.constant, |acc, (d, m)| {
                        if *m == AccessMode::Read {
                            acc.wrapping_add(*ctx.read(d))
                        } else {
                            acc
                        }
                    });
                    let mut wrote = false;
                    for (d, m) in &captured {
                        if *m == AccessMode::Read {
                            continue;
                        }
                        if *m == AccessMode::MaybeWrite && !spec.writes {
                            continue;
                        }
                        let mut guard = ctx.write(d);
                        if let Some(v) = spec.update(*m, *guard, s) {
                            *guard = v;
                            wrote |= *m == AccessMode::MaybeWrite;
                        }
                    }
                    wrote
                })
                .insert()?;
            ids.push(viewer.id());
        }
        Ok(ids)
    }

    /// The successor relation the grouping rules induce, over task indices.
    /// `MaybeWrite` counts as `Write`.
    pub fn stf_edges(&self) -> BTreeSet<(usize, usize)> {
        #[derive(PartialEq, Clone, Copy)]
        enum Group {
            Reads,
            Atomics,
            Commutes,
            Exclusive,
        }
        let cells = self.init.len();
        let mut slots: Vec<Vec<(Group, Vec<usize>)>> = vec![Vec::new(); cells];
        for (i, t) in self.tasks.iter().enumerate() {
            for &(c, mode) in &t.accesses {
                let g = match mode {
                    AccessMode::Read => Group::Reads,
                    AccessMode::AtomicWrite => Group::Atomics,
                    AccessMode::CommutativeWrite => Group::Commutes,
                    AccessMode::Write | AccessMode::MaybeWrite => Group::Exclusive,
                };
                match slots[c].last_mut() {
                    Some((last, members)) if *last == g && g != Group::Exclusive => members.push(i),
                    _ => slots[c].push((g, vec![i])),
                }
            }
        }
        let mut edges = BTreeSet::new();
        for per_cell in &slots {
            for pair in per_cell.windows(2) {
                for &a in &pair[0].1 {
                    for &b in &pair[1].1 {
                        edges.insert((a, b));
                    }
                }
            }
        }
        edges
    }
}

/// What a parallel run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: Vec<i64>,
    pub stats: GraphStats,
    pub pairs: Vec<SpeculationPair>,
    pub edges: Vec<(TaskId, TaskId)>,
}

/// Runs `program` on a fresh graph attached to `engine`.
pub fn run_on(engine: &ComputeEngine, program: &Program, speculation: bool) -> Result<RunOutcome> {
    let graph = TaskGraph::builder()
        .speculation(speculation)
        .tracing(false)
        .build();
    graph.compute_on(engine)?;
    let cells = program.make_cells();
    program.insert(&graph, &cells)?;
    graph.wait_all()?;
    Ok(RunOutcome {
        state: cells.iter().map(Data::get).collect(),
        stats: graph.stats(),
        pairs: graph.speculation_pairs(),
        edges: graph.edges(),
    })
}

/// Engine with `workers` host workers and an optional custom scheduler.
pub fn host_engine(workers: usize, scheduler: Option<Arc<dyn Scheduler>>) -> ComputeEngine {
    let team = WorkerTeam::host(workers);
    match scheduler {
        Some(s) => ComputeEngine::with_scheduler(team, s),
        None => ComputeEngine::new(team),
    }
    .expect("engine")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(accesses: Vec<(usize, AccessMode)>, constant: i64) -> TaskSpec {
        TaskSpec {
            accesses,
            constant,
            priority: 0,
            writes: true,
        }
    }

    #[test]
    fn hand_computed_semantics() {
        let p = Program {
            init: vec![1, 2],
            tasks: vec![
                spec(vec![(0, AccessMode::Read), (1, AccessMode::Write)], 10),
                spec(vec![(0, AccessMode::CommutativeWrite)], 5),
            ],
        };
        // x1 = 3*2 + (10 + 1) = 17; x0 = 1 + 5 = 6
        assert_eq!(p.sequential(), vec![6, 17]);
    }

    #[test]
    fn grouping_oracle_matches_hand_derivation() {
        use AccessMode::*;
        let p = Program {
            init: vec![0],
            tasks: vec![
                spec(vec![(0, Read)], 0),
                spec(vec![(0, Write)], 0),
                spec(vec![(0, Read)], 0),
                spec(vec![(0, Read)], 0),
            ],
        };
        let edges: Vec<_> = p.stf_edges().into_iter().collect();
        assert_eq!(edges, vec![(0, 1), (1, 2), (1, 3)]);
    }
}
