use std::sync::Arc;

use stf_core::AccessMode;
use stf_testkit::{host_engine, rng, run_on, Program, ProgramConfig, ReversingScheduler};

#[test]
fn random_programs_match_sequential_order() {
    let cfg = ProgramConfig::default();
    let engines: Vec<_> = [1, 2, 4, 8].iter().map(|&w| host_engine(w, None)).collect();
    let mut r = rng(11);
    for round in 0..120 {
        let p = Program::random(&mut r, &cfg);
        let expected = p.sequential();
        for e in &engines {
            let out = run_on(e, &p, false).unwrap();
            assert_eq!(
                out.state,
                expected,
                "round {round} on {} workers",
                e.worker_count()
            );
            assert_eq!(out.stats.conflict_violations, 0);
        }
    }
}

#[test]
fn user_scheduler_preserves_semantics() {
    let engine = host_engine(4, Some(Arc::new(ReversingScheduler::new())));
    let mut r = rng(12);
    for _ in 0..80 {
        let p = Program::random(&mut r, &ProgramConfig::default());
        assert_eq!(run_on(&engine, &p, false).unwrap().state, p.sequential());
    }
}

#[test]
fn priority_scheduler_preserves_semantics() {
    let engine = host_engine(3, stf_core::scheduler_by_name("prio"));
    let mut r = rng(13);
    for _ in 0..80 {
        let p = Program::random(&mut r, &ProgramConfig::default());
        assert_eq!(run_on(&engine, &p, false).unwrap().state, p.sequential());
    }
}

#[test]
fn edges_follow_the_grouping_rules() {
    let engine = host_engine(4, None);
    let mut r = rng(14);
    let cfg = ProgramConfig {
        modes: vec![
            AccessMode::Read,
            AccessMode::Write,
            AccessMode::AtomicWrite,
            AccessMode::CommutativeWrite,
        ],
        ..ProgramConfig::default()
    };
    for _ in 0..50 {
        let p = Program::random(&mut r, &cfg);
        let out = run_on(&engine, &p, false).unwrap();
        let got: std::collections::BTreeSet<(usize, usize)> = out
            .edges
            .iter()
            .map(|(a, b)| (a.0 as usize, b.0 as usize))
            .collect();
        assert_eq!(got, p.stf_edges());
    }
}
