//! End-to-end scenarios. Each writes `graph.dot` and `trace.svg` and
//! returns report lines; an `Err` means the scenario's own check failed.

use std::path::Path;
use std::thread;
use std::time::Duration;

use anyhow::{ensure, Context, Result};
use rand::Rng;
use stf_core::comms::LocalCluster;
use stf_core::{ComputeEngine, Data, TaskGraph, WorkerKind, WorkerTeam, DEFAULT_DEVICE_MEMORY};

pub const DEMOS: [&str; 4] = [
    "daggraph",
    "device-roundtrip",
    "comm-pingpong",
    "speculation-coin",
];

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub workers: usize,
    pub devices: usize,
    pub device_mem: usize,
    pub ranks: usize,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            workers: 4,
            devices: 1,
            device_mem: DEFAULT_DEVICE_MEMORY,
            ranks: 2,
            seed: 7,
        }
    }
}

pub fn run_demo(name: &str, out: &Path, opts: &DemoOptions) -> Result<Vec<String>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match name {
        "daggraph" => daggraph(out, opts),
        "device-roundtrip" => device_roundtrip(out, opts),
        "comm-pingpong" => comm_pingpong(out, opts),
        "speculation-coin" => speculation_coin(out, opts),
        other => anyhow::bail!("unknown demo {other:?}"),
    }
}

fn export(graph: &TaskGraph, out: &Path) -> Result<()> {
    graph.generate_dot(out.join("graph.dot"), true)?;
    graph.generate_trace_svg(out.join("trace.svg"), true)?;
    Ok(())
}

fn add(
    graph: &TaskGraph,
    name: &str,
    reads: &[&Data<i64>],
    write: &Data<i64>,
    k: i64,
) -> Result<()> {
    let ins: Vec<Data<i64>> = reads.iter().map(|d| (*d).clone()).collect();
    let outc = write.clone();
    let mut b = graph.task().name(name);
    for r in reads {
        b = b.read(r);
    }
    b.write(write)
        .host(move |ctx| {
            let s: i64 = ins.iter().map(|d| *ctx.read(d)).sum();
            *ctx.write(&outc) += s + k;
        })
        .insert()?;
    Ok(())
}

/// A small diamond-shaped pipeline with fan-out and fan-in.
fn daggraph(out: &Path, opts: &DemoOptions) -> Result<Vec<String>> {
    let engine = ComputeEngine::new(WorkerTeam::host(opts.workers))?;
    let graph = TaskGraph::new();
    graph.compute_on(&engine)?;
    let [a, b, c, d, e, f] = [0; 6].map(Data::new);
    add(&graph, "init-a", &[], &a, 1)?;
    add(&graph, "init-b", &[], &b, 2)?;
    add(&graph, "c=a", &[&a], &c, 0)?;
    add(&graph, "d=a+b", &[&a, &b], &d, 0)?;
    add(&graph, "e=b", &[&b], &e, 0)?;
    add(&graph, "c+=d", &[&d], &c, 0)?;
    add(&graph, "e+=d", &[&d], &e, 0)?;
    add(&graph, "f=c+e", &[&c, &e], &f, 0)?;
    add(&graph, "a+=f", &[&f], &a, 0)?;
    add(&graph, "b+=f", &[&f], &b, 0)?;
    graph.wait_all()?;
    export(&graph, out)?;
    // a=1 b=2 c=1+3 d=3 e=2+3 f=9 a=10 b=11
    let got = [a.get(), b.get(), c.get(), d.get(), e.get(), f.get()];
    ensure!(
        got == [10, 11, 4, 3, 5, 9],
        "unexpected final values {got:?}"
    );
    let edges = graph.edges().len();
    Ok(vec![format!(
        "daggraph: {} tasks, {edges} edges, final values {got:?}",
        graph.stats().inserted
    )])
}

/// Host init, device kernels, flush back, host check.
fn device_roundtrip(out: &Path, opts: &DemoOptions) -> Result<Vec<String>> {
    let devices = opts.devices.max(1);
    let mut team = WorkerTeam::host(1);
    for i in 0..devices {
        team = team.with(WorkerKind::Device(i), 1);
    }
    let engine = ComputeEngine::builder(team)
        .devices(devices)
        .device_memory(opts.device_mem)
        .build()?;
    let graph = TaskGraph::new();
    graph.compute_on(&engine)?;
    let buffers: Vec<Data<Vec<f64>>> = (0..4).map(|_| Data::with_device(Vec::new())).collect();
    for (i, buf) in buffers.iter().enumerate() {
        let w = buf.clone();
        graph
            .task()
            .write(buf)
            .name(format!("init{i}"))
            .host(move |ctx| *ctx.write(&w) = (0..256).map(|x| (x + i) as f64).collect())
            .insert()?;
    }
    for round in 0..3 {
        for (i, buf) in buffers.iter().enumerate() {
            let w = buf.clone();
            graph
                .task()
                .write(buf)
                .name(format!("scale{i}.{round}"))
                .device(move |ctx| {
                    for v in ctx.slice_mut::<f64, _>(&w).iter_mut() {
                        *v = *v * 2.0 + 1.0;
                    }
                })
                .insert()?;
        }
    }
    for buf in &buffers {
        graph.flush_to_host(buf)?;
    }
    graph.wait_all()?;
    export(&graph, out)?;
    for (i, buf) in buffers.iter().enumerate() {
        let expected: Vec<f64> = (0..256)
            .map(|x| (0..3).fold((x + i) as f64, |v, _| v * 2.0 + 1.0))
            .collect();
        ensure!(
            buf.get() == expected,
            "buffer {i} differs from the host oracle"
        );
    }
    let mut lines = vec![format!(
        "device-roundtrip: {} buffers match the host oracle",
        buffers.len()
    )];
    for i in 0..devices {
        let arena = engine.arena(i).expect("configured device");
        lines.push(format!(
            "device {i}: {} bytes to device, {} bytes to host, {} evictions",
            arena.bytes_to_device(),
            arena.bytes_to_host(),
            arena.evictions().len()
        ));
    }
    Ok(lines)
}

/// Rank 0 sends a counter around the ring; every other rank increments it
/// and passes it on.
fn comm_pingpong(out: &Path, opts: &DemoOptions) -> Result<Vec<String>> {
    let world = opts.ranks.max(2);
    let rounds = 8u32;
    let cluster = LocalCluster::new(world);
    let out = out.to_path_buf();
    let ranks: Vec<_> = cluster
        .endpoints()
        .into_iter()
        .map(|ep| {
            let out = out.clone();
            thread::spawn(move || -> Result<(usize, Vec<u64>)> {
                let engine = ComputeEngine::new(WorkerTeam::host(1))?;
                let graph = TaskGraph::new();
                graph.compute_on(&engine)?;
                graph.attach_transport(ep)?;
                let rank = graph.rank().expect("attached");
                let (next, prev) = ((rank + 1) % world, (rank + world - 1) % world);
                let ball = Data::new(0u64);
                let mut seen = Vec::new();
                for r in 0..rounds {
                    if rank == 0 {
                        let b = ball.clone();
                        graph
                            .task()
                            .write(&ball)
                            .name(format!("serve{r}"))
                            .host(move |ctx| *ctx.write(&b) = u64::from(r) * 100)
                            .insert()?;
                        graph.comm_send(&ball, next, r)?;
                        graph.comm_recv(&ball, prev, r)?;
                    } else {
                        graph.comm_recv(&ball, prev, r)?;
                        let b = ball.clone();
                        graph
                            .task()
                            .write(&ball)
                            .name(format!("hit{r}"))
                            .host(move |ctx| *ctx.write(&b) += 1)
                            .insert()?;
                        graph.comm_send(&ball, next, r)?;
                    }
                    let viewer = graph
                        .task()
                        .read(&ball)
                        .host({
                            let b = ball.clone();
                            move |ctx| *ctx.read(&b)
                        })
                        .insert()?;
                    seen.push(viewer.get_value()?);
                }
                graph.wait_all()?;
                if rank == 0 {
                    export(&graph, &out)?;
                }
                Ok((rank, seen))
            })
        })
        .collect();
    let mut lines = Vec::new();
    for h in ranks {
        let (rank, seen) = h.join().expect("rank thread panicked")?;
        let expected: Vec<u64> = (0..rounds)
            .map(|r| {
                let served = u64::from(r) * 100;
                if rank == 0 {
                    served + world as u64 - 1
                } else {
                    served + rank as u64
                }
            })
            .collect();
        ensure!(
            seen == expected,
            "rank {rank} saw {seen:?}, expected {expected:?}"
        );
        lines.push(format!(
            "rank {rank}: {rounds} round trips matched, last value {}",
            seen[seen.len() - 1]
        ));
    }
    Ok(lines)
}

/// An uncertain task flips a seeded coin to decide whether it writes;
/// a successor reads the result speculatively.
fn speculation_coin(out: &Path, opts: &DemoOptions) -> Result<Vec<String>> {
    let engine = ComputeEngine::new(WorkerTeam::host(opts.workers.max(2)))?;
    let graph = TaskGraph::with_speculation();
    graph.compute_on(&engine)?;
    let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(opts.seed);
    let heads = rng.gen_bool(0.5);
    let x = Data::new(10i64);
    let y = Data::new(0i64);
    let xw = x.clone();
    graph
        .task()
        .maybe_write(&x)
        .name("coin")
        .host(move |ctx| {
            // Long enough that the consumer is inserted while undecided.
            thread::sleep(Duration::from_millis(20));
            if heads {
                *ctx.write(&xw) += 5;
            }
            heads
        })
        .insert()?;
    let (xr, yw) = (x.clone(), y.clone());
    graph
        .task()
        .read(&x)
        .write(&y)
        .name("consume")
        .host(move |ctx| *ctx.write(&yw) = *ctx.read(&xr) * 3)
        .insert()?;
    graph.wait_all()?;
    export(&graph, out)?;
    let sequential_x = if heads { 15 } else { 10 };
    ensure!(
        (x.get(), y.get()) == (sequential_x, sequential_x * 3),
        "speculative result ({}, {}) differs from the sequential one",
        x.get(),
        y.get()
    );
    let pairs = graph.speculation_pairs();
    let path = match pairs.first().and_then(|p| p.committed) {
        Some(true) => "commit",
        Some(false) => "rollback",
        None => "none",
    };
    Ok(vec![format!(
        "speculation-coin: coin wrote={heads}, path taken: {path}, x={} y={}",
        x.get(),
        y.get()
    )])
}
