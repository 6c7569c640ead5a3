use std::thread;
use std::time::Duration;

use stf_core::{AccessMode, Data, TaskGraph, TaskState};
use stf_testkit::{host_engine, rng, run_on, Program, ProgramConfig};

fn maybe_write_config() -> ProgramConfig {
    ProgramConfig {
        max_tasks: 32,
        cells: 6,
        max_accesses: 3,
        modes: vec![
            AccessMode::Read,
            AccessMode::Read,
            AccessMode::MaybeWrite,
            AccessMode::MaybeWrite,
            AccessMode::Write,
        ],
    }
}

#[test]
fn speculative_runs_match_plain_runs_in_both_outcomes() {
    let engine = host_engine(4, None);
    let mut r = rng(21);
    let mut pairs_seen = 0;
    for _ in 0..100 {
        let base = Program::random(&mut r, &maybe_write_config());
        for writes in [true, false] {
            let p = base.clone().with_writes(writes);
            let plain = run_on(&engine, &p, false).unwrap();
            let spec = run_on(&engine, &p, true).unwrap();
            assert_eq!(plain.state, p.sequential());
            assert_eq!(spec.state, plain.state);
            for pair in &spec.pairs {
                pairs_seen += 1;
                let finished = [pair.normal_state, pair.duplicate_state]
                    .iter()
                    .filter(|s| **s == TaskState::Finished)
                    .count();
                let disabled = [pair.normal_state, pair.duplicate_state]
                    .iter()
                    .filter(|s| **s == TaskState::Disabled)
                    .count();
                assert_eq!((finished, disabled), (1, 1), "{pair:?}");
                assert_eq!(pair.committed, Some(!writes));
                let winner = if writes {
                    pair.normal_state
                } else {
                    pair.duplicate_state
                };
                assert_eq!(winner, TaskState::Finished);
            }
        }
    }
    assert!(pairs_seen > 0, "no speculative pairs were generated");
}

#[test]
fn uncertain_task_that_skips_its_write_commits_the_duplicate() {
    let engine = host_engine(2, None);
    let graph = TaskGraph::with_speculation();
    graph.compute_on(&engine).unwrap();
    let x = Data::new(5i64);
    let y = Data::new(0i64);
    let (xc, yc) = (x.clone(), y.clone());
    // Still running when the successor is inserted, so the successor is
    // duplicated instead of simply waiting.
    graph
        .task()
        .maybe_write(&x)
        .host(|_| {
            thread::sleep(Duration::from_millis(50));
            false
        })
        .insert()
        .unwrap();
    graph
        .task()
        .read(&x)
        .write(&y)
        .host(move |ctx| *ctx.write(&yc) = *ctx.read(&xc) * 2)
        .insert()
        .unwrap();
    graph.wait_all().unwrap();
    assert_eq!(y.get(), 10);
    let pairs = graph.speculation_pairs();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].committed, Some(true));
    assert_eq!(pairs[0].duplicate_state, TaskState::Finished);
    assert_eq!(pairs[0].normal_state, TaskState::Disabled);
}

#[test]
fn uncertain_task_that_writes_rolls_back() {
    let engine = host_engine(2, None);
    let graph = TaskGraph::with_speculation();
    graph.compute_on(&engine).unwrap();
    let x = Data::new(5i64);
    let y = Data::new(0i64);
    let (xw, xc, yc) = (x.clone(), x.clone(), y.clone());
    graph
        .task()
        .maybe_write(&x)
        .host(move |ctx| {
            thread::sleep(Duration::from_millis(50));
            *ctx.write(&xw) = 7;
            true
        })
        .insert()
        .unwrap();
    graph
        .task()
        .read(&x)
        .write(&y)
        .host(move |ctx| *ctx.write(&yc) = *ctx.read(&xc) * 2)
        .insert()
        .unwrap();
    graph.wait_all().unwrap();
    assert_eq!((x.get(), y.get()), (7, 14));
    let pairs = graph.speculation_pairs();
    assert_eq!(pairs[0].committed, Some(false));
    assert_eq!(pairs[0].normal_state, TaskState::Finished);
    assert_eq!(pairs[0].duplicate_state, TaskState::Disabled);
}

#[test]
fn non_speculative_graph_treats_maybe_write_as_write() {
    let engine = host_engine(2, None);
    let graph = TaskGraph::new();
    graph.compute_on(&engine).unwrap();
    let x = Data::new(1i64);
    graph
        .task()
        .maybe_write(&x)
        .host(|_| false)
        .insert()
        .unwrap();
    graph.task().read(&x).host(|_| ()).insert().unwrap();
    graph.wait_all().unwrap();
    assert!(graph.speculation_pairs().is_empty());
    assert_eq!(graph.stats().disabled, 0);
}
