use proptest::prelude::*;
use stf_core::{ComputeEngine, Data, TaskGraph, WorkerKind, WorkerTeam};
use stf_testkit::devprog::DevProgram;
use stf_testkit::lru::{AccessTrace, LruSim};
use stf_testkit::rng;

fn device_engine(memory: usize) -> ComputeEngine {
    ComputeEngine::builder(WorkerTeam::host(2).with(WorkerKind::Device(0), 1))
        .device_memory(memory)
        .build()
        .unwrap()
}

#[test]
fn eviction_order_matches_the_reference_model() {
    let mut r = rng(41);
    for _ in 0..200 {
        let trace = AccessTrace::random(&mut r);
        assert_eq!(trace.run().unwrap(), trace.simulate(), "{trace:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eviction_matches_model_for_arbitrary_traces(
        lengths in prop::collection::vec(1usize..20, 2..6),
        picks in prop::collection::vec(0usize..100, 1..40),
        slack in 0usize..64,
    ) {
        let largest = lengths.iter().map(|l| (l * 4).div_ceil(8) * 8).max().unwrap();
        let sequence = picks.iter().map(|p| p % lengths.len()).collect();
        let trace = AccessTrace { capacity: largest + slack, lengths, sequence };
        prop_assert_eq!(trace.run().unwrap(), trace.simulate());
    }

    #[test]
    fn model_never_exceeds_capacity(sizes in prop::collection::vec(1usize..64, 1..50)) {
        let mut sim = LruSim::new(64);
        for (i, s) in sizes.iter().enumerate() {
            sim.access(i % 5, *s);
        }
        prop_assert!(sim.evictions.len() <= sim.misses);
    }
}

#[test]
fn restaging_an_unmodified_object_moves_nothing() {
    let engine = device_engine(1 << 16);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let v = Data::with_device(vec![1.5f64; 128]);
    graph.task().read(&v).device(|_| ()).insert().unwrap();
    graph.wait_all().unwrap();
    let arena = engine.arena(0).unwrap();
    let after_first = arena.bytes_to_device();
    assert_eq!(after_first, 128 * 8);
    for _ in 0..3 {
        graph.task().read(&v).device(|_| ()).insert().unwrap();
    }
    graph.wait_all().unwrap();
    assert_eq!(arena.bytes_to_device(), after_first);
    assert_eq!(arena.bytes_to_host(), 0);
}

#[test]
fn device_write_is_dirty_until_flushed() {
    let engine = device_engine(1 << 16);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let v = Data::with_device(vec![1i32, 2, 3]);
    let vc = v.clone();
    graph
        .task()
        .write(&v)
        .device(move |ctx| {
            for x in ctx.slice_mut::<i32, _>(&vc).iter_mut() {
                *x *= 10;
            }
        })
        .insert()
        .unwrap();
    graph.wait_all().unwrap();
    let arena = engine.arena(0).unwrap();
    assert!(arena.is_dirty(&v));
    assert_eq!(v.get(), vec![1, 2, 3], "host copy is stale until flushed");
    graph.flush_to_host(&v).unwrap();
    graph.wait_all().unwrap();
    assert_eq!(v.get(), vec![10, 20, 30]);
    assert!(!arena.is_valid(&v), "a host write drops the device copy");
}

#[test]
fn host_device_round_trip_equals_host_only_execution() {
    let engine = device_engine(512);
    let mut r = rng(42);
    for _ in 0..100 {
        let p = DevProgram::random(&mut r);
        assert_eq!(p.run(&engine).unwrap(), p.sequential());
    }
}

#[test]
fn oversized_object_fails_the_task() {
    let engine = device_engine(16);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let v = Data::with_device(vec![0u64; 4]);
    graph.task().read(&v).device(|_| ()).insert().unwrap();
    assert!(graph.wait_all().is_err());
    assert!(graph.is_poisoned());
}

#[test]
fn device_tasks_require_device_support() {
    let engine = device_engine(64);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let plain = Data::new(vec![0u8]);
    let err = graph.task().read(&plain).device(|_| ()).insert();
    assert!(matches!(err, Err(stf_core::RuntimeError::NotMovable(_))));
}

#[test]
fn dual_callable_task_runs_once() {
    let engine = device_engine(1 << 10);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let v = Data::with_device(5u64);
    for _ in 0..50 {
        let (h, d) = (v.clone(), v.clone());
        graph
            .task()
            .write(&v)
            .host(move |ctx| *ctx.write(&h) += 1)
            .device(move |ctx| ctx.slice_mut::<u64, _>(&d)[0] += 1)
            .insert()
            .unwrap();
    }
    graph.flush_to_host(&v).unwrap();
    graph.wait_all().unwrap();
    assert_eq!(v.get(), 55);
}
