//! The runtime overhead protocol.
//!
//! `T` workers serve `T` independent chains of `N` tasks each. Every task
//! only sleeps for `D`, so an ideal runtime finishes in `N * D`; the excess
//! per task is the overhead `O = makespan / N - D`. Insertion of all `T * N`
//! tasks is timed separately as `I`.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use stf_core::{scheduler_by_name, AccessMode, ComputeEngine, Data, TaskGraph, WorkerTeam};

use crate::sleep::precise_sleep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Write,
    Commute,
}

impl Mode {
    fn access(self) -> AccessMode {
        match self {
            Mode::Write => AccessMode::Write,
            Mode::Commute => AccessMode::CommutativeWrite,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub workers: usize,
    pub tasks_per_chain: usize,
    /// Seconds.
    pub duration: f64,
    pub mode: Mode,
    /// Objects each task depends on, at least 1.
    pub deps: usize,
    pub sched: String,
    pub reps: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.tasks_per_chain == 0 || self.deps == 0 || self.reps == 0 {
            bail!("workers, tasks-per-chain, deps and reps must be at least 1");
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            bail!("duration must be a non-negative number of seconds");
        }
        if scheduler_by_name(&self.sched).is_none() {
            bail!("unknown scheduler {:?}", self.sched);
        }
        Ok(())
    }
}

/// One repetition. Raw timestamps are nanoseconds from the repetition's
/// origin; every derived column is computed from them as printed.
#[derive(Debug, Clone, Serialize)]
pub struct RepRow {
    pub rep: usize,
    pub insert_start_ns: u64,
    pub insert_end_ns: u64,
    pub first_start_ns: u64,
    pub last_end_ns: u64,
    /// Seconds, total and per task.
    pub insertion: f64,
    pub insertion_per_task: f64,
    pub makespan: f64,
    pub overhead_avg: f64,
    pub overhead_max: f64,
}

/// Start and end of one task, nanoseconds from the origin.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TaskTimes {
    pub rep: usize,
    pub task: usize,
    pub chain: usize,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: impl IntoIterator<Item = f64>) -> Stats {
        let mut v: Vec<f64> = values.into_iter().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Stats {
            mean: v.iter().sum::<f64>() / n as f64,
            median: if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            },
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<RepRow>,
    #[serde(skip)]
    pub tasks: Vec<TaskTimes>,
    pub insertion: Stats,
    pub makespan: Stats,
    pub overhead_avg: Stats,
    /// Largest per-task overhead over all repetitions.
    pub overhead_max: f64,
}

fn secs(ns: u64) -> f64 {
    ns as f64 * 1e-9
}

/// Per-task overheads of one chain: each task's end minus the previous
/// end (the global first start for the first task), minus `D`. They sum
/// to the chain's span over `N` tasks minus `N * D`.
fn chain_overheads(ends: &[u64], origin: u64, d: f64) -> impl Iterator<Item = f64> + '_ {
    let mut prev = origin;
    ends.iter().map(move |&e| {
        let gap = secs(e - prev);
        prev = e;
        gap - d
    })
}

/// Derives a row from raw timestamps. `tasks` belong to one repetition.
pub fn derive_row(
    rep: usize,
    config: &BenchConfig,
    insert: (u64, u64),
    tasks: &[TaskTimes],
) -> RepRow {
    let first_start_ns = tasks.iter().map(|t| t.start_ns).min().unwrap_or(0);
    let last_end_ns = tasks.iter().map(|t| t.end_ns).max().unwrap_or(0);
    let makespan = secs(last_end_ns - first_start_ns);
    let n = config.tasks_per_chain as f64;
    let mut overhead_max = f64::MIN;
    for chain in 0..config.workers {
        let mut ends: Vec<u64> = tasks
            .iter()
            .filter(|t| t.chain == chain)
            .map(|t| t.end_ns)
            .collect();
        ends.sort_unstable();
        for o in chain_overheads(&ends, first_start_ns, config.duration) {
            overhead_max = overhead_max.max(o);
        }
    }
    let insertion = secs(insert.1 - insert.0);
    RepRow {
        rep,
        insert_start_ns: insert.0,
        insert_end_ns: insert.1,
        first_start_ns,
        last_end_ns,
        insertion,
        insertion_per_task: insertion / tasks.len().max(1) as f64,
        makespan,
        overhead_avg: makespan / n - config.duration,
        overhead_max,
    }
}

fn run_once(
    engine: &ComputeEngine,
    config: &BenchConfig,
    rep: usize,
) -> Result<(RepRow, Vec<TaskTimes>)> {
    let t = config.workers;
    let total = t * config.tasks_per_chain;
    let graph = TaskGraph::builder().tracing(false).build();
    graph.compute_on(engine)?;
    // Chain c owns object c plus a private pool for the extra dependencies,
    // so the chains stay independent.
    let objects: Vec<Vec<Data<u64>>> = (0..t)
        .map(|_| (0..config.deps).map(|_| Data::new(0)).collect())
        .collect();
    let stamps: Arc<Vec<(AtomicU64, AtomicU64)>> = Arc::new(
        (0..total)
            .map(|_| (AtomicU64::new(0), AtomicU64::new(0)))
            .collect(),
    );
    let d = Duration::from_secs_f64(config.duration);
    let mode = config.mode.access();

    let origin = Instant::now();
    let ns = move || origin.elapsed().as_nanos() as u64;
    let insert_start = ns();
    for k in 0..total {
        let mut b = graph.task();
        for o in &objects[k % t] {
            b = b.access(o, mode);
        }
        let stamps = Arc::clone(&stamps);
        b.host(move |_| {
            stamps[k].0.store(ns(), Ordering::Relaxed);
            precise_sleep(d);
            stamps[k].1.store(ns(), Ordering::Relaxed);
        })
        .insert()?;
    }
    let insert_end = ns();
    graph.wait_all()?;

    let tasks: Vec<TaskTimes> = stamps
        .iter()
        .enumerate()
        .map(|(k, s)| TaskTimes {
            rep,
            task: k,
            chain: k % t,
            start_ns: s.0.load(Ordering::Relaxed),
            end_ns: s.1.load(Ordering::Relaxed),
        })
        .collect();
    let row = derive_row(rep, config, (insert_start, insert_end), &tasks);
    Ok((row, tasks))
}

pub fn run_overhead(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let sched = scheduler_by_name(&config.sched).expect("validated");
    let engine = ComputeEngine::with_scheduler(WorkerTeam::host(config.workers), sched)?;
    let mut rows = Vec::with_capacity(config.reps);
    let mut tasks = Vec::new();
    for rep in 0..config.reps {
        let (row, times) = run_once(&engine, config, rep)?;
        rows.push(row);
        tasks.extend(times);
    }
    Ok(BenchReport {
        config: config.clone(),
        insertion: Stats::of(rows.iter().map(|r| r.insertion)),
        makespan: Stats::of(rows.iter().map(|r| r.makespan)),
        overhead_avg: Stats::of(rows.iter().map(|r| r.overhead_avg)),
        overhead_max: rows.iter().map(|r| r.overhead_max).fold(f64::MIN, f64::max),
        rows,
        tasks,
    })
}

impl BenchReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_task_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.tasks {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn human_summary(&self) -> String {
        let c = &self.config;
        format!(
            "T={} N={} D={:e}s mode={:?} deps={} sched={} reps={}\n\
             insertion I: {:.6} s total ({:.3e} s/task), makespan {:.6} s (ideal {:.6} s)\n\
             overhead O: average {:.3e} s, maximum {:.3e} s",
            c.workers,
            c.tasks_per_chain,
            c.duration,
            c.mode,
            c.deps,
            c.sched,
            c.reps,
            self.insertion.mean,
            self.insertion.mean / (c.workers * c.tasks_per_chain) as f64,
            self.makespan.mean,
            c.tasks_per_chain as f64 * c.duration,
            self.overhead_avg.mean,
            self.overhead_max,
        )
    }

    /// Writes `overhead.csv`, `tasks.csv` and `summary.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.write_csv(std::fs::File::create(dir.join("overhead.csv"))?)?;
        self.write_task_csv(std::fs::File::create(dir.join("tasks.csv"))?)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(workers: usize, n: usize, d: f64) -> BenchConfig {
        BenchConfig {
            workers,
            tasks_per_chain: n,
            duration: d,
            mode: Mode::Write,
            deps: 1,
            sched: "fifo".into(),
            reps: 1,
        }
    }

    #[test]
    fn single_chain_lower_bound() {
        let r = run_overhead(&config(1, 10, 0.001)).unwrap();
        assert!(r.rows[0].makespan >= 0.010);
        assert!(r.rows[0].overhead_avg >= 0.0);
    }

    #[test]
    fn derived_columns_follow_from_timestamps() {
        let c = config(2, 2, 0.001);
        let t = |task, chain, start_ns, end_ns| TaskTimes {
            rep: 0,
            task,
            chain,
            start_ns,
            end_ns,
        };
        let tasks = [
            t(0, 0, 100, 1_100_100),
            t(1, 1, 200, 1_000_200),
            t(2, 0, 1_200_100, 2_200_100),
            t(3, 1, 1_000_300, 2_000_300),
        ];
        let row = derive_row(0, &c, (0, 50), &tasks);
        assert_eq!(row.makespan, secs(2_200_000));
        assert!((row.overhead_avg - (0.0011 - 0.001)).abs() < 1e-12);
        // Chain 0: gaps of 1.1 ms and 1.1 ms.
        assert!((row.overhead_max - 0.0001).abs() < 1e-12);
        assert_eq!(row.insertion_per_task, secs(50) / 4.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(config(0, 1, 0.0).validate().is_err());
        assert!(config(1, 1, -1.0).validate().is_err());
        let mut c = config(1, 1, 0.0);
        c.sched = "nope".into();
        assert!(c.validate().is_err());
    }
}
