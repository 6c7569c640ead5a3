//! Reference model of device memory replacement: blocks occupy their size
//! rounded up to 8 bytes, and a miss evicts least recently used blocks
//! until the new one fits.

use std::collections::HashMap;

use rand::Rng;
use stf_core::{ComputeEngine, Data, Result, TaskGraph, WorkerKind, WorkerTeam};

#[derive(Debug, Clone)]
pub struct LruSim {
    capacity: usize,
    clock: u64,
    /// Object index to (rounded size, last use).
    resident: HashMap<usize, (usize, u64)>,
    pub evictions: Vec<usize>,
    pub misses: usize,
}

fn rounded(size: usize) -> usize {
    size.div_ceil(8) * 8
}

impl LruSim {
    pub fn new(capacity: usize) -> Self {
        LruSim {
            capacity,
            clock: 0,
            resident: HashMap::new(),
            evictions: Vec::new(),
            misses: 0,
        }
    }

    fn used(&self) -> usize {
        self.resident.values().map(|r| r.0).sum()
    }

    pub fn access(&mut self, object: usize, size: usize) {
        self.clock += 1;
        if let Some(r) = self.resident.get_mut(&object) {
            r.1 = self.clock;
            return;
        }
        self.misses += 1;
        let need = rounded(size);
        assert!(need <= self.capacity, "object larger than the device");
        while self.used() + need > self.capacity {
            let (&victim, _) = self
                .resident
                .iter()
                .min_by_key(|(_, r)| r.1)
                .expect("nothing left to evict");
            self.resident.remove(&victim);
            self.evictions.push(victim);
        }
        self.resident.insert(object, (need, self.clock));
    }
}

/// A trace of single-object device reads over objects of various sizes.
#[derive(Debug, Clone)]
pub struct AccessTrace {
    /// Element counts of `Vec<u32>` objects; byte size is 4 per element.
    pub lengths: Vec<usize>,
    pub sequence: Vec<usize>,
    pub capacity: usize,
}

impl AccessTrace {
    pub fn random(rng: &mut impl Rng) -> Self {
        let objects = rng.gen_range(2..10);
        let lengths: Vec<usize> = (0..objects).map(|_| rng.gen_range(1..40)).collect();
        let largest = lengths.iter().map(|&l| rounded(l * 4)).max().unwrap();
        let total: usize = lengths.iter().map(|&l| rounded(l * 4)).sum();
        let capacity = rng.gen_range(largest..=total.max(largest));
        let sequence = (0..rng.gen_range(1..60))
            .map(|_| rng.gen_range(0..objects))
            .collect();
        AccessTrace {
            lengths,
            sequence,
            capacity,
        }
    }

    pub fn simulate(&self) -> Vec<usize> {
        let mut sim = LruSim::new(self.capacity);
        for &o in &self.sequence {
            sim.access(o, self.lengths[o] * 4);
        }
        sim.evictions
    }

    /// Runs the trace on one device worker and maps the arena's eviction
    /// record back to object indices.
    pub fn run(&self) -> Result<Vec<usize>> {
        let engine = ComputeEngine::builder(WorkerTeam::new().with(WorkerKind::Device(0), 1))
            .device_memory(self.capacity)
            .build()?;
        let graph = TaskGraph::builder().tracing(false).build();
        graph.compute_on(&engine)?;
        let objects: Vec<Data<Vec<u32>>> = self
            .lengths
            .iter()
            .map(|&l| Data::with_device(vec![1u32; l]))
            .collect();
        for &o in &self.sequence {
            graph.task().read(&objects[o]).device(|_| ()).insert()?;
        }
        graph.wait_all()?;
        let index: HashMap<usize, usize> = objects
            .iter()
            .enumerate()
            .map(|(i, d)| (d.identity(), i))
            .collect();
        let arena = engine.arena(0).expect("device 0");
        Ok(arena
            .evictions()
            .iter()
            .map(|h| index[&h.identity])
            .collect())
    }
}
