use dfrsim_core::engine::{integrate_timeline, run_simulation, run_with_planner, FailureContext, RunOptions, SimOutput};
use dfrsim_core::failure::{generate_trace, FailureEvent, FailureTrace, HOUR};
use dfrsim_core::graph::{build_task_graph, TaskGraph, TaskId, TaskState};
use dfrsim_core::platform::{HostState, Platform, DEFAULT_TASK_FLOPS};
use dfrsim_core::strategy::{self, RecoveryPlan, Strategy};
use dfrsim_core::topology::ProcessTopology;
use dfrsim_core::Error;
use proptest::prelude::*;

fn setup(n: usize, iters: usize, c_it: usize) -> (TaskGraph, Platform) {
    let g = build_task_graph(ProcessTopology::line(n).unwrap(), iters, c_it, DEFAULT_TASK_FLOPS).unwrap();
    (g, Platform::with_defaults(n))
}

fn run(g: &TaskGraph, p: &Platform, trace: &FailureTrace, s: &str, options: RunOptions) -> SimOutput {
    run_simulation(g, p, trace, s.parse().unwrap(), &options).unwrap()
}

fn timeline_opts(scaling: bool) -> RunOptions {
    RunOptions { frequency_scaling: scaling, record_timeline: true, ..RunOptions::default() }
}

fn check_invariants(g: &TaskGraph, out: &SimOutput) {
    let nodes = out.graph.nodes();
    assert!(nodes.iter().all(|t| t.state == TaskState::Done && t.generation >= 1));
    let extra: u64 = nodes.iter().map(|t| u64::from(t.generation - 1)).sum();
    assert_eq!(extra, out.metrics.recomputed_tasks);
    assert_eq!(nodes.len(), g.len());
    let total: f64 = out.metrics.per_host_energy.iter().sum();
    assert_eq!(total, out.metrics.total_energy);
    for w in out.log.failures.windows(2) {
        assert!(w[1].fired_time >= w[0].recovery_end, "overlapping recoveries");
    }
    if let Some(t) = &out.timeline {
        let (per_host, sum) = integrate_timeline(t, &Platform::with_defaults(g.processes()).power).unwrap();
        assert!((sum - out.metrics.total_energy).abs() <= 1e-9 * sum);
        for (a, b) in per_host.iter().zip(&out.metrics.per_host_energy) {
            assert!((a - b).abs() <= 1e-9 * a);
        }
        assert_eq!(t.makespan, out.metrics.makespan);
    }
}

/// Process 4 fails one second into iteration 7 of a 9-process run with checkpoints every 4 iterations.
fn nine_process_trace(p: &Platform) -> FailureTrace {
    let t = 7.0 * (10.0 + p.exchange_time()) + 1.0;
    FailureTrace::scripted(vec![FailureEvent { time: t, host: 4 }])
}

#[test]
fn nine_process_recompute_counts() {
    let (g, p) = setup(9, 12, 4);
    let trace = nine_process_trace(&p);
    let expected = [("global", 18, (0..9).collect::<Vec<_>>()), ("dfr-rect", 10, vec![2, 3, 4, 5, 6]), ("dfr-min", 4, vec![2, 3, 4, 5, 6]), ("log", 2, vec![4])];
    for (s, count, participants) in expected {
        let out = run(&g, &p, &trace, s, timeline_opts(true));
        check_invariants(&g, &out);
        assert_eq!(out.metrics.recomputed_tasks, count, "{s}");
        let rec = &out.log.failures[0];
        assert_eq!((rec.base, rec.failed_iter, rec.d), (Some(4), 7, 3), "{s}");
        assert_eq!(rec.participants, participants, "{s}");
        assert_eq!(rec.planned_recompute as u64, count);
    }
}

#[test]
fn only_the_failed_process_rolls_back_under_dfr() {
    let (g, p) = setup(9, 12, 4);
    let out = run(&g, &p, &nine_process_trace(&p), "dfr-rect", RunOptions::default());
    let gens = |proc_: usize| -> Vec<u32> { (0..12).map(|i| out.graph.node(TaskId::new(proc_, i)).unwrap().generation).collect() };
    assert_eq!(gens(4), vec![1, 1, 1, 1, 1, 2, 2, 1, 1, 1, 1, 1]);
    assert_eq!(gens(2), gens(4));
    assert_eq!(gens(0), vec![1; 12]);
    assert_eq!(gens(8), vec![1; 12]);
}

#[test]
fn second_failure_waits_for_the_first_recovery() {
    let (g, p) = setup(9, 12, 4);
    let t = 7.0 * (10.0 + p.exchange_time()) + 1.0;
    let trace = FailureTrace::scripted(vec![FailureEvent { time: t, host: 4 }, FailureEvent { time: t + 1.0, host: 1 }]);
    for s in Strategy::ALL {
        let out = run_simulation(&g, &p, &trace, s, &timeline_opts(true)).unwrap();
        check_invariants(&g, &out);
        let f = &out.log.failures;
        assert_eq!(f.len(), 2, "{s}");
        assert!(!f[0].deferred);
        assert!(f[0].recovery_end > t + 1.0, "{s}");
        assert!(f[1].deferred);
        assert_eq!(f[1].fired_time, f[0].recovery_end);
        assert_eq!(f[1].scheduled_time, t + 1.0);
    }
}

#[test]
fn failure_during_checkpoint_transfer_keeps_the_older_checkpoint() {
    let (g, p) = setup(3, 8, 2);
    let step = 10.0 + p.exchange_time();
    // Iteration 2 finishes at 2 * step + 10; its checkpoint takes one more transfer.
    let t = 2.0 * step + 10.0 + 0.5 * p.exchange_time();
    let trace = FailureTrace::scripted(vec![FailureEvent { time: t, host: 1 }]);
    let out = run(&g, &p, &trace, "log", RunOptions::default());
    let rec = &out.log.failures[0];
    assert_eq!((rec.base, rec.failed_iter, rec.d), (Some(0), 3, 3));
    assert_eq!(out.metrics.recomputed_tasks, 2);
}

#[test]
fn neighbours_support_a_distance_two_recovery() {
    let (g, p) = setup(20, 12, 6);
    let t = 2.0 * (10.0 + p.exchange_time()) + 4.0;
    let trace = FailureTrace::scripted(vec![FailureEvent { time: t, host: 10 }]);
    let out = run(&g, &p, &trace, "dfr-min", timeline_opts(true));
    let rec = &out.log.failures[0];
    assert_eq!(rec.d, 2);
    assert_eq!(rec.participants, vec![9, 10, 11]);
    assert_eq!(out.metrics.recomputed_tasks, 1);
    check_invariants(&g, &out);
}

#[test]
fn invalid_plans_abort_the_run() {
    let (g, p) = setup(5, 8, 4);
    let trace = FailureTrace::scripted(vec![FailureEvent { time: 35.0, host: 2 }]);
    let outside = |ctx: &FailureContext<'_>| -> dfrsim_core::Result<RecoveryPlan> {
        let mut plan = Strategy::Global.plan_for(ctx)?;
        plan.recompute.push(TaskId::new(7, 1));
        plan.recompute.sort();
        Ok(plan)
    };
    let err = run_with_planner(&g, &p, &trace, Strategy::Global, &outside, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::PlanTaskOutOfGraph { .. }), "{err}");
    let bad_participants = |ctx: &FailureContext<'_>| -> dfrsim_core::Result<RecoveryPlan> {
        let mut plan = Strategy::LogBased.plan_for(ctx)?;
        plan.participants.push(11);
        Ok(plan)
    };
    let err = run_with_planner(&g, &p, &trace, Strategy::LogBased, &bad_participants, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidPlan(_)), "{err}");
}

trait PlanFor {
    fn plan_for(&self, ctx: &FailureContext<'_>) -> dfrsim_core::Result<RecoveryPlan>;
}

impl PlanFor for Strategy {
    fn plan_for(&self, ctx: &FailureContext<'_>) -> dfrsim_core::Result<RecoveryPlan> {
        dfrsim_core::engine::Planner::plan(self, ctx)
    }
}

#[test]
fn frequency_scaling_only_changes_idle_power() {
    let (g, p) = setup(40, 60, 6);
    let trace = generate_trace(3, 40, 2.0 * HOUR, 700.0).unwrap();
    assert!(!trace.is_empty());
    let on = run(&g, &p, &trace, "dfr-min", timeline_opts(true));
    let off = run(&g, &p, &trace, "dfr-min", timeline_opts(false));
    assert_eq!(on.metrics.makespan.to_bits(), off.metrics.makespan.to_bits());
    assert_eq!(on.metrics.recomputed_tasks, off.metrics.recomputed_tasks);
    let idx = |s: HostState| s.index();
    let scaled = on.metrics.state_seconds[idx(HostState::IdleScaled)];
    let moved = off.metrics.state_seconds[idx(HostState::IdleUnscaled)] - on.metrics.state_seconds[idx(HostState::IdleUnscaled)];
    assert!((scaled - moved).abs() < 1e-6 * scaled, "{scaled} vs {moved}");
    assert!(on.metrics.state_seconds[idx(HostState::IdleScaled)] > 0.0);
    assert!(on.metrics.total_energy < off.metrics.total_energy);

    // Idle hosts inside a recovery window are non-participants at scaled power.
    let t = on.timeline.as_ref().unwrap();
    for rec in &on.log.failures {
        for (host, intervals) in t.hosts.iter().enumerate() {
            for iv in intervals {
                let inside = iv.start >= rec.fired_time && iv.end <= rec.recovery_end;
                if inside && iv.state.is_idle() {
                    assert_eq!(iv.state, HostState::IdleScaled);
                    assert!(!rec.participants.contains(&host));
                }
            }
        }
    }
    check_invariants(&g, &on);
    check_invariants(&g, &off);
}

#[test]
fn identical_inputs_give_identical_runs() {
    let (g, p) = setup(30, 50, 6);
    let trace = generate_trace(11, 30, 1.0 * HOUR, 600.0).unwrap();
    for s in Strategy::ALL {
        let a = run_simulation(&g, &p, &trace, s, &timeline_opts(true)).unwrap();
        let b = run_simulation(&g, &p, &trace, s, &timeline_opts(true)).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.timeline, b.timeline);
        assert_eq!(a.log, b.log);
    }
}

#[test]
fn reload_switch_only_removes_reload_time() {
    let (g, p) = setup(9, 12, 4);
    let trace = nine_process_trace(&p);
    let with = run(&g, &p, &trace, "global", RunOptions::default());
    let without = run(&g, &p, &trace, "global", RunOptions { reload_checkpoints: false, ..RunOptions::default() });
    assert_eq!(with.metrics.recomputed_tasks, without.metrics.recomputed_tasks);
    // Survivors finish their running task while the reload is in flight.
    assert!(with.metrics.makespan >= without.metrics.makespan);
    // The log-based replacement restarts alone, so its reload is on the critical path.
    let with = run(&g, &p, &trace, "log", RunOptions::default());
    let without = run(&g, &p, &trace, "log", RunOptions { reload_checkpoints: false, ..RunOptions::default() });
    assert_eq!(with.metrics.recomputed_tasks, without.metrics.recomputed_tasks);
    assert!(with.metrics.makespan > without.metrics.makespan);
}

#[test]
fn mismatched_platform_is_rejected() {
    let (g, _) = setup(4, 4, 2);
    let p = Platform::with_defaults(5);
    assert!(run_simulation(&g, &p, &FailureTrace::none(), Strategy::Global, &RunOptions::default()).is_err());
}

#[test]
fn closed_form_matches_engine_for_synchronous_failures() {
    // With all processes in lock-step the engine recomputes exactly what the plan says.
    let n = 25;
    let (g, p) = setup(n, 30, 6);
    let step = 10.0 + p.exchange_time();
    for it in [7usize, 9, 12, 13] {
        for j in [0usize, 3, 12, 24] {
            let trace = FailureTrace::scripted(vec![FailureEvent { time: it as f64 * step + 2.0, host: j }]);
            for s in Strategy::ALL {
                let out = run_simulation(&g, &p, &trace, s, &RunOptions::default()).unwrap();
                let d = out.log.failures[0].d;
                assert_eq!(d, if it > 12 { it - 12 } else { it - 6 });
                assert_eq!(out.metrics.recomputed_tasks as usize, strategy::recompute_count_closed_form(s, n, d, j), "{s} it={it} j={j}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_traces_keep_invariants(seed in 0u64..10_000, n in 3usize..24, c_it in 1usize..8) {
        let (g, p) = setup(n, 40, c_it);
        let trace = generate_trace(seed, n, 0.5 * HOUR, 800.0).unwrap();
        let mut recomputed = Vec::new();
        for s in Strategy::ALL {
            let out = run_simulation(&g, &p, &trace, s, &timeline_opts(true)).unwrap();
            check_invariants(&g, &out);
            prop_assert!(out.metrics.makespan >= 40.0 * 10.0);
            recomputed.push(out.metrics.recomputed_tasks);
        }
        let _ = recomputed;
    }
}
