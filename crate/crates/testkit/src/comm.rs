//! Multi-instance communication scenarios over the in-process transport.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::Rng;
use stf_core::comms::{LocalCluster, Transferable};
use stf_core::{Data, TaskGraph};

use crate::{host_engine, rng, Matrix};

/// Values both ends can regenerate from the sender's rank and message index.
pub trait Sample:
    Transferable + Clone + PartialEq + std::fmt::Debug + Default + Send + Sync + 'static
{
    fn sample(from: usize, i: usize) -> Self;
}

fn seed(from: usize, i: usize) -> u64 {
    ((from as u64) << 32) | i as u64
}

impl Sample for u64 {
    fn sample(from: usize, i: usize) -> Self {
        rng(seed(from, i)).gen()
    }
}

impl Sample for Vec<f32> {
    fn sample(from: usize, i: usize) -> Self {
        let mut r = rng(seed(from, i));
        (0..r.gen_range(0..64)).map(|_| r.gen()).collect()
    }
}

impl Sample for Matrix {
    fn sample(from: usize, i: usize) -> Self {
        let mut r = rng(seed(from, i));
        let (rows, cols) = (r.gen_range(0..6), r.gen_range(0..6));
        Matrix::new(rows, cols, (0..rows * cols).map(|_| r.gen()).collect())
    }
}

/// Every rank sends `pairs` messages to its right neighbour and receives as
/// many from its left one. Returns the first mismatch, if any.
pub fn ring_round_trip<T: Sample>(world: usize, pairs: usize) -> Result<(), String> {
    let cluster = LocalCluster::new(world);
    let handles: Vec<_> = cluster
        .endpoints()
        .into_iter()
        .map(|ep| {
            thread::spawn(move || -> Result<(), String> {
                let engine = host_engine(2, None);
                let graph = TaskGraph::new();
                graph.compute_on(&engine).map_err(|e| e.to_string())?;
                graph.attach_transport(ep).map_err(|e| e.to_string())?;
                let rank = graph.rank().expect("attached");
                let (right, left) = ((rank + 1) % world, (rank + world - 1) % world);
                let mut inbox = Vec::with_capacity(pairs);
                for i in 0..pairs {
                    let out = Data::new(T::sample(rank, i));
                    graph
                        .comm_send(&out, right, i as u32)
                        .map_err(|e| e.to_string())?;
                    let slot = Data::new(T::default());
                    graph
                        .comm_recv(&slot, left, i as u32)
                        .map_err(|e| e.to_string())?;
                    inbox.push(slot);
                }
                graph.wait_all().map_err(|e| e.to_string())?;
                for (i, slot) in inbox.iter().enumerate() {
                    let (got, want) = (slot.get(), T::sample(left, i));
                    if got != want {
                        return Err(format!("rank {rank} message {i}: {got:?} != {want:?}"));
                    }
                    if got.encode() != want.encode() {
                        return Err(format!("rank {rank} message {i}: bytes differ"));
                    }
                }
                Ok(())
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| "rank thread panicked".to_string())??;
    }
    if cluster.in_flight() != 0 {
        return Err(format!("{} frames left undelivered", cluster.in_flight()));
    }
    Ok(())
}

/// Rank 1 sends a slow message (tag 1) and then a fast one (tag 2); rank 0
/// receives them in that order, each followed by a host task that logs it.
/// Returns the order the successors ran in.
pub fn completion_order(slow: Duration) -> Vec<&'static str> {
    let cluster = LocalCluster::new(2);
    cluster.set_delay(move |_, _, tag| {
        if tag & 0xff == 1 {
            slow
        } else {
            Duration::ZERO
        }
    });
    let sender_ep = cluster.endpoint(1);
    let sender = thread::spawn(move || {
        let engine = host_engine(1, None);
        let graph = TaskGraph::new();
        graph.compute_on(&engine).unwrap();
        graph.attach_transport(sender_ep).unwrap();
        let (a, b) = (Data::new(1u32), Data::new(2u32));
        graph.comm_send(&a, 0, 1).unwrap();
        graph.comm_send(&b, 0, 2).unwrap();
        graph.wait_all().unwrap();
    });

    let engine = host_engine(2, None);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    graph.attach_transport(cluster.endpoint(0)).unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    for (tag, name) in [(1u32, "slow"), (2, "fast")] {
        let slot = Data::new(0u32);
        graph.comm_recv(&slot, 1, tag).unwrap();
        let log = Arc::clone(&log);
        graph
            .task()
            .read(&slot)
            .host(move |_| log.lock().unwrap().push(name))
            .insert()
            .unwrap();
    }
    graph.wait_all().unwrap();
    sender.join().unwrap();
    let order = log.lock().unwrap().clone();
    order
}
