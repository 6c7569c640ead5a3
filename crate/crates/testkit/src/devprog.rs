//! Random programs mixing host and device tasks over integer buffers.

use rand::seq::SliceRandom;
use rand::Rng;
use stf_core::{AccessMode, ComputeEngine, Data, Result, TaskGraph};

#[derive(Debug, Clone)]
pub struct DevTask {
    pub on_device: bool,
    /// Distinct buffers, each `Read` or `Write`.
    pub accesses: Vec<(usize, AccessMode)>,
    pub constant: i64,
}

#[derive(Debug, Clone)]
pub struct DevProgram {
    pub init: Vec<Vec<i64>>,
    pub tasks: Vec<DevTask>,
}

/// `s` is the constant plus the first element of every read buffer; each
/// written buffer gets `v[i] = 3 v[i] + s + i`.
fn apply(task: &DevTask, read_firsts: i64, buf: &mut [i64]) {
    let s = task.constant.wrapping_add(read_firsts);
    for (i, v) in buf.iter_mut().enumerate() {
        *v = v.wrapping_mul(3).wrapping_add(s).wrapping_add(i as i64);
    }
}

impl DevProgram {
    pub fn random(rng: &mut impl Rng) -> Self {
        let buffers = rng.gen_range(1..6);
        let init = (0..buffers)
            .map(|_| {
                (0..rng.gen_range(1..16))
                    .map(|_| rng.gen_range(-9..9))
                    .collect()
            })
            .collect();
        let all: Vec<usize> = (0..buffers).collect();
        let tasks = (0..rng.gen_range(1..24))
            .map(|_| {
                let k = rng.gen_range(1..=buffers.min(3));
                DevTask {
                    on_device: rng.gen_bool(0.6),
                    accesses: all
                        .choose_multiple(rng, k)
                        .map(|&b| {
                            let m = if rng.gen_bool(0.5) {
                                AccessMode::Read
                            } else {
                                AccessMode::Write
                            };
                            (b, m)
                        })
                        .collect(),
                    constant: rng.gen_range(-5..5),
                }
            })
            .collect();
        DevProgram { init, tasks }
    }

    pub fn sequential(&self) -> Vec<Vec<i64>> {
        let mut state = self.init.clone();
        for t in &self.tasks {
            let firsts = read_firsts(t, |b| state[b][0]);
            for &(b, m) in &t.accesses {
                if m == AccessMode::Write {
                    apply(t, firsts, &mut state[b]);
                }
            }
        }
        state
    }

    /// Runs on `engine`, flushes every buffer to the host and returns the
    /// host values.
    pub fn run(&self, engine: &ComputeEngine) -> Result<Vec<Vec<i64>>> {
        let graph = TaskGraph::builder().tracing(false).build();
        graph.compute_on(engine)?;
        let data: Vec<Data<Vec<i64>>> = self
            .init
            .iter()
            .map(|v| Data::with_device(v.clone()))
            .collect();
        for t in &self.tasks {
            let mut b = graph.task();
            let captured: Vec<(Data<Vec<i64>>, AccessMode)> = t
                .accesses
                .iter()
                .map(|&(i, m)| (data[i].clone(), m))
                .collect();
            for (d, m) in &captured {
                b = b.access(d, *m);
            }
            let task = t.clone();
            if t.on_device {
                b.device(move |ctx| {
                    let firsts = captured
                        .iter()
                        .filter(|(_, m)| *m == AccessMode::Read)
                        .fold(0i64, |a, (d, _)| a.wrapping_add(ctx.slice::<i64, _>(d)[0]));
                    for (d, m) in &captured {
                        if *m == AccessMode::Write {
                            apply(&task, firsts, &mut ctx.slice_mut::<i64, _>(d));
                        }
                    }
                })
                .insert()?;
            } else {
                b.host(move |ctx| {
                    let firsts = captured
                        .iter()
                        .filter(|(_, m)| *m == AccessMode::Read)
                        .fold(0i64, |a, (d, _)| a.wrapping_add(ctx.read(d)[0]));
                    for (d, m) in &captured {
                        if *m == AccessMode::Write {
                            apply(&task, firsts, &mut ctx.write(d));
                        }
                    }
                })
                .insert()?;
            }
        }
        for d in &data {
            graph.flush_to_host(d)?;
        }
        graph.wait_all()?;
        Ok(data.iter().map(Data::get).collect())
    }
}

fn read_firsts(t: &DevTask, first: impl Fn(usize) -> i64) -> i64 {
    t.accesses
        .iter()
        .filter(|(_, m)| *m == AccessMode::Read)
        .fold(0i64, |a, &(b, _)| a.wrapping_add(first(b)))
}
