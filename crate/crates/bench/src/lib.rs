//! Workloads shared by the criterion benchmarks.

use stf_core::{AccessMode, ComputeEngine, Data, Result, TaskGraph};

/// Inserts `chains * per_chain` empty tasks, task `k` touching object
/// `k % chains` with `mode`, and waits for all of them.
pub fn empty_chains(
    engine: &ComputeEngine,
    chains: usize,
    per_chain: usize,
    mode: AccessMode,
) -> Result<()> {
    let graph = TaskGraph::builder().tracing(false).build();
    graph.compute_on(engine)?;
    let objects: Vec<Data<u64>> = (0..chains).map(|_| Data::new(0)).collect();
    for k in 0..chains * per_chain {
        graph
            .task()
            .access(&objects[k % chains], mode)
            .host(|_| ())
            .insert()?;
    }
    graph.wait_all()
}

/// A layered graph: each task reads `fan_in` objects of the previous layer
/// and writes one of its own.
pub fn layered(engine: &ComputeEngine, width: usize, layers: usize, fan_in: usize) -> Result<()> {
    let graph = TaskGraph::builder().tracing(false).build();
    graph.compute_on(engine)?;
    let grid: Vec<Vec<Data<u64>>> = (0..layers)
        .map(|_| (0..width).map(|_| Data::new(1)).collect())
        .collect();
    for l in 1..layers {
        for i in 0..width {
            let mut b = graph.task().write(&grid[l][i]);
            let inputs: Vec<Data<u64>> = (0..fan_in)
                .map(|j| grid[l - 1][(i + j) % width].clone())
                .collect();
            for d in &inputs {
                b = b.read(d);
            }
            let out = grid[l][i].clone();
            b.host(move |ctx| *ctx.write(&out) = inputs.iter().map(|d| *ctx.read(d)).sum())
                .insert()?;
        }
    }
    graph.wait_all()
}
