use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use stf_core::{Data, TaskGraph};
use stf_testkit::{host_engine, rng, run_on, Program, ProgramConfig};

/// Waits until `n` parties arrived, or gives up after `timeout`.
fn rendezvous(state: &(Mutex<usize>, Condvar), n: usize, timeout: Duration) -> bool {
    let (lock, cv) = state;
    let mut arrived = lock.lock().unwrap();
    *arrived += 1;
    cv.notify_all();
    let (arrived, res) = cv.wait_timeout_while(arrived, timeout, |a| *a < n).unwrap();
    drop(arrived);
    !res.timed_out()
}

#[test]
fn two_readers_of_one_object_overlap() {
    let engine = host_engine(2, None);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let x = Data::new(1u32);
    let meet = Arc::new((Mutex::new(0usize), Condvar::new()));
    let viewers: Vec<_> = (0..2)
        .map(|_| {
            let meet = Arc::clone(&meet);
            graph
                .task()
                .read(&x)
                .host(move |_| rendezvous(&meet, 2, Duration::from_secs(5)))
                .insert()
                .unwrap()
        })
        .collect();
    graph.wait_all().unwrap();
    for v in viewers {
        assert!(v.get_value().unwrap(), "readers did not run concurrently");
    }
}

#[test]
fn writers_never_overlap_with_anything_on_their_object() {
    let engine = host_engine(8, None);
    let mut r = rng(31);
    for _ in 0..60 {
        let p = Program::random(&mut r, &ProgramConfig::default());
        let out = run_on(&engine, &p, false).unwrap();
        assert_eq!(out.stats.conflict_violations, 0);
        assert_eq!(out.state, p.sequential());
    }
}

#[test]
fn commutative_writers_are_mutually_exclusive() {
    let engine = host_engine(8, None);
    let graph = TaskGraph::builder().tracing(false).build();
    graph.compute_on(&engine).unwrap();
    let handles: Vec<Data<u64>> = (0..8).map(|_| Data::new(0)).collect();
    let inside: Arc<Vec<AtomicUsize>> = Arc::new((0..8).map(|_| AtomicUsize::new(0)).collect());
    let overlaps = Arc::new(AtomicUsize::new(0));
    let started = Instant::now();
    let n = 10_000;
    for i in 0..n {
        let h = i % 8;
        let d = handles[h].clone();
        let (inside, overlaps) = (Arc::clone(&inside), Arc::clone(&overlaps));
        graph
            .task()
            .commutative_write(&handles[h])
            .host(move |ctx| {
                if inside[h].fetch_add(1, Ordering::SeqCst) != 0 {
                    overlaps.fetch_add(1, Ordering::SeqCst);
                }
                *ctx.write(&d) += 1;
                inside[h].fetch_sub(1, Ordering::SeqCst);
            })
            .insert()
            .unwrap();
    }
    graph.wait_all().unwrap();
    assert!(started.elapsed() < Duration::from_secs(120));
    assert_eq!(overlaps.load(Ordering::SeqCst), 0);
    assert_eq!(graph.stats().conflict_violations, 0);
    assert_eq!(handles.iter().map(|d| d.get()).sum::<u64>(), n as u64);
}

#[test]
fn commutative_tasks_on_disjoint_objects_run_in_parallel() {
    let engine = host_engine(2, None);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let a = Data::new(0u8);
    let b = Data::new(0u8);
    let meet = Arc::new((Mutex::new(0usize), Condvar::new()));
    let mut viewers = Vec::new();
    for d in [&a, &b] {
        let meet = Arc::clone(&meet);
        viewers.push(
            graph
                .task()
                .commutative_write(d)
                .host(move |_| rendezvous(&meet, 2, Duration::from_secs(5)))
                .insert()
                .unwrap(),
        );
    }
    graph.wait_all().unwrap();
    assert!(viewers.iter().all(|v| v.get_value().unwrap()));
}

#[test]
fn atomic_writers_serialize_on_the_object() {
    let engine = host_engine(4, None);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let x = Data::new(0u64);
    for _ in 0..500 {
        let d = x.clone();
        graph
            .task()
            .atomic_write(&x)
            .host(move |ctx| *ctx.atomic(&d) += 1)
            .insert()
            .unwrap();
    }
    graph.wait_all().unwrap();
    assert_eq!(x.get(), 500);
}
