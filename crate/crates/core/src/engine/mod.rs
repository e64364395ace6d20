//! Deterministic discrete-event execution of a stencil task graph.
//!
//! Each process runs on its own host and executes one task at a time. A task
//! output is pushed to the neighbouring consumers as soon as it exists; a host
//! that finds an input missing pulls it from the producer. Checkpoints follow
//! every checkpoint iteration except the last and delay the next task of that
//! host. Failures come from a [`FailureTrace`], one recovery at a time.
//!
//! On a failure the planner decides which tasks are recomputed and by whom.
//! Participants reload their checkpoint from the buddy, then work through
//! their part of the plan in iteration order; the plan's internal data flow is
//! honoured, including transfers between participants. Global rollback throws
//! away everything after the checkpoint on every process. The localised
//! strategies only throw away the failed process's results, and the other
//! participants compute on duplicate data that is discarded afterwards.

mod checkpoint;
mod metrics;
mod timeline;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use checkpoint::{buddy_of, CheckpointStore};
pub use metrics::{FailureRecord, RunLog, RunMetrics};
pub use timeline::{integrate_timeline, StateInterval, StateTimeline};

use crate::error::{Error, Result};
use crate::failure::{Admission, FailureCursor, FailureEvent, FailureTrace};
use crate::graph::{TaskGraph, TaskId, TaskState};
use crate::platform::{power_draw, task_duration, HostState, Platform};
use crate::strategy::{self, InputSource, RecoveryPlan, Strategy};
use crate::topology::ProcessTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Idle non-participants drop to the scaled idle power during recovery.
    pub frequency_scaling: bool,
    /// Model the checkpoint reload as one subdomain transfer; otherwise it is free.
    pub reload_checkpoints: bool,
    pub record_timeline: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { frequency_scaling: true, reload_checkpoints: true, record_timeline: false }
    }
}

/// What a planner knows about a failure.
#[derive(Debug, Clone, Copy)]
pub struct FailureContext<'a> {
    pub event: FailureEvent,
    /// First iteration whose result exists only on the failed process.
    pub failed_iter: usize,
    /// Newest checkpoint committed by the failed process.
    pub own_checkpoint: Option<usize>,
    /// Newest checkpoint committed by every process.
    pub global_checkpoint: Option<usize>,
    pub topology: &'a ProcessTopology,
}

pub trait Planner {
    fn plan(&self, ctx: &FailureContext<'_>) -> Result<RecoveryPlan>;
}

impl Planner for Strategy {
    fn plan(&self, ctx: &FailureContext<'_>) -> Result<RecoveryPlan> {
        let base = if self.is_global() { ctx.global_checkpoint } else { ctx.own_checkpoint };
        let d = strategy::rollback_distance(base, ctx.failed_iter);
        strategy::plan(*self, ctx.event.host, d, ctx.topology, base)
    }
}

impl<F: Fn(&FailureContext<'_>) -> Result<RecoveryPlan>> Planner for F {
    fn plan(&self, ctx: &FailureContext<'_>) -> Result<RecoveryPlan> {
        self(ctx)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: RunMetrics,
    pub timeline: Option<StateTimeline>,
    pub log: RunLog,
    /// The graph with final task states and generations.
    pub graph: TaskGraph,
}

/// Runs `graph` on `platform` under the failures of `trace`.
pub fn run_simulation(
    graph: &TaskGraph,
    platform: &Platform,
    trace: &FailureTrace,
    strategy: Strategy,
    options: &RunOptions,
) -> Result<SimOutput> {
    run_with_planner(graph, platform, trace, strategy, &strategy, options)
}

/// Like [`run_simulation`] with a custom planner; `strategy` only labels the metrics.
pub fn run_with_planner(
    graph: &TaskGraph,
    platform: &Platform,
    trace: &FailureTrace,
    strategy: Strategy,
    planner: &dyn Planner,
    options: &RunOptions,
) -> Result<SimOutput> {
    let n = graph.processes();
    if platform.len() != n {
        return Err(Error::InvalidParameter(format!("{} hosts for {n} processes", platform.len())));
    }
    if let Some(e) = trace.events.iter().find(|e| e.host >= n) {
        return Err(Error::ProcessOutOfRange { index: e.host, n });
    }
    let mut engine = Engine::new(graph.clone(), platform, trace, planner, options);
    engine.run()?;
    Ok(engine.finish(strategy, trace.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    TaskComplete { incarnation: u32 },
    CheckpointComplete { iteration: usize, incarnation: u32 },
    ReloadComplete { recovery: u32 },
    Transfer { task: usize, slot: u8, epoch: u32 },
    RecoveryTransfer { recovery: u32, rtask: usize },
    Failure,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::TaskComplete { .. } => 0,
            EventKind::CheckpointComplete { .. } => 1,
            EventKind::ReloadComplete { .. } => 2,
            EventKind::Transfer { .. } => 3,
            EventKind::RecoveryTransfer { .. } => 4,
            EventKind::Failure => 5,
        }
    }

    fn key(&self) -> usize {
        match *self {
            EventKind::CheckpointComplete { iteration, .. } => iteration,
            EventKind::Transfer { task, .. } => task,
            EventKind::RecoveryTransfer { rtask, .. } => rtask,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    host: usize,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn order(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.host.cmp(&other.host))
            .then(self.kind.key().cmp(&other.kind.key()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.order(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.order(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Idle,
    Task(usize),
    RecoveryTask(usize),
    Checkpoint(usize),
}

#[derive(Debug, Clone)]
struct Host {
    /// Next iteration of normal execution.
    forefront: usize,
    activity: Activity,
    /// Bumped whenever the current activity is aborted.
    incarnation: u32,
    pending_checkpoint: Option<usize>,
    state: HostState,
    since: f64,
    state_seconds: [f64; 4],
}

#[derive(Debug, Clone)]
struct RecoveryTask {
    id: TaskId,
    missing: u32,
    dependents: SmallVec<[(usize, bool); 4]>,
}

#[derive(Debug, Clone)]
struct HostRecovery {
    reloaded: bool,
    reload_dependents: SmallVec<[(usize, bool); 4]>,
    /// Recovery task indices in iteration order.
    tasks: Vec<usize>,
    next: usize,
}

impl HostRecovery {
    fn finished(&self) -> bool {
        self.reloaded && self.next == self.tasks.len()
    }
}

#[derive(Debug, Clone)]
struct Recovery {
    id: u32,
    plan: RecoveryPlan,
    tasks: Vec<RecoveryTask>,
    hosts: Vec<Option<HostRecovery>>,
    remaining: usize,
    record: usize,
}

struct Engine<'a> {
    graph: TaskGraph,
    platform: &'a Platform,
    planner: &'a dyn Planner,
    options: RunOptions,
    cursor: FailureCursor<'a>,
    failure_scheduled: bool,
    transfer_time: f64,
    hosts: Vec<Host>,
    checkpoints: CheckpointStore,
    /// Per task: neighbour inputs received, as bits indexed by `q + 1 - p`.
    have: Vec<u8>,
    inflight: Vec<u8>,
    epoch: Vec<u32>,
    done: usize,
    executions: u64,
    recovery: Option<Recovery>,
    recoveries: u32,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    dirty: Vec<usize>,
    is_dirty: Vec<bool>,
    timeline: Option<StateTimeline>,
    log: RunLog,
}

fn slot(consumer: usize, producer: usize) -> u8 {
    1 << (producer + 1 - consumer)
}

impl<'a> Engine<'a> {
    fn new(
        graph: TaskGraph,
        platform: &'a Platform,
        trace: &'a FailureTrace,
        planner: &'a dyn Planner,
        options: &RunOptions,
    ) -> Self {
        let n = graph.processes();
        let tasks = graph.len();
        let host = Host {
            forefront: 0,
            activity: Activity::Idle,
            incarnation: 0,
            pending_checkpoint: None,
            state: HostState::Communicating,
            since: 0.0,
            state_seconds: [0.0; 4],
        };
        Engine {
            graph,
            platform,
            planner,
            options: *options,
            cursor: trace.cursor(),
            failure_scheduled: false,
            transfer_time: platform.exchange_time(),
            hosts: vec![host; n],
            checkpoints: CheckpointStore::new(n, platform.subdomain_bytes()),
            have: vec![0; tasks],
            inflight: vec![0; tasks],
            epoch: vec![0; tasks],
            done: 0,
            executions: 0,
            recovery: None,
            recoveries: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            dirty: (0..n).collect(),
            is_dirty: vec![true; n],
            timeline: options.record_timeline.then(|| StateTimeline::new(n)),
            log: RunLog::default(),
        }
    }

    fn schedule(&mut self, time: f64, host: usize, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, host, seq: self.seq, kind });
    }

    fn mark(&mut self, host: usize) {
        if !self.is_dirty[host] {
            self.is_dirty[host] = true;
            self.dirty.push(host);
        }
    }

    fn mark_all(&mut self) {
        for h in 0..self.hosts.len() {
            self.mark(h);
        }
    }

    fn index(&self, p: usize, i: usize) -> usize {
        self.graph.index(TaskId::new(p, i))
    }

    fn task_time(&self, p: usize, i: usize) -> f64 {
        let flops = self.graph.nodes()[self.index(p, i)].flops;
        task_duration(flops, &self.platform.hosts[p])
    }

    fn finished(&self) -> bool {
        self.done == self.graph.len() && self.recovery.is_none()
    }

    fn run(&mut self) -> Result<()> {
        self.schedule_next_failure();
        self.settle();
        while !self.finished() {
            let Some(event) = self.heap.pop() else {
                return Err(Error::Unsupported(format!(
                    "simulation stalled at t={} with {} of {} tasks done",
                    self.now,
                    self.done,
                    self.graph.len()
                )));
            };
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            self.handle(event)?;
            self.settle();
        }
        Ok(())
    }

    fn schedule_next_failure(&mut self) {
        if let Some(e) = self.cursor.peek() {
            let time = e.time.max(self.now);
            let host = e.host;
            self.schedule(time, host, EventKind::Failure);
            self.failure_scheduled = true;
        } else {
            self.failure_scheduled = false;
        }
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        let p = event.host;
        match event.kind {
            EventKind::TaskComplete { incarnation } => {
                if incarnation != self.hosts[p].incarnation {
                    return Ok(());
                }
                match self.hosts[p].activity {
                    Activity::Task(i) if self.graph.nodes()[self.index(p, i)].state != TaskState::Running => {
                        // Rolled back while it ran.
                        self.hosts[p].activity = Activity::Idle;
                        self.mark(p);
                    }
                    Activity::Task(i) => self.complete_task(p, i),
                    Activity::RecoveryTask(k) => self.complete_recovery_task(p, k)?,
                    other => unreachable!("task completion while {other:?}"),
                }
            }
            EventKind::CheckpointComplete { iteration, incarnation } => {
                if incarnation == self.hosts[p].incarnation {
                    debug_assert_eq!(self.hosts[p].activity, Activity::Checkpoint(iteration));
                    self.checkpoints.commit(p, iteration);
                    self.hosts[p].activity = Activity::Idle;
                    self.mark(p);
                }
            }
            EventKind::ReloadComplete { recovery } => {
                if self.recovery.as_ref().is_some_and(|r| r.id == recovery) {
                    self.complete_reload(p)?;
                }
            }
            EventKind::Transfer { task, slot, epoch } => {
                if epoch == self.epoch[task] {
                    self.inflight[task] &= !slot;
                    self.have[task] |= slot;
                    self.mark(p);
                }
            }
            EventKind::RecoveryTransfer { recovery, rtask } => {
                if self.recovery.as_ref().is_some_and(|r| r.id == recovery) {
                    self.satisfy(rtask);
                }
            }
            EventKind::Failure => {
                self.failure_scheduled = false;
                match self.cursor.admit(self.now, self.recovery.is_some()) {
                    Some(Admission::Fire(e)) => {
                        self.fail(e)?;
                        self.schedule_next_failure();
                    }
                    Some(Admission::Defer(_)) => {}
                    None => self.schedule_next_failure(),
                }
            }
        }
        Ok(())
    }

    fn complete_task(&mut self, p: usize, i: usize) {
        let idx = self.index(p, i);
        let node = &mut self.graph.nodes_mut()[idx];
        debug_assert_eq!(node.state, TaskState::Running);
        node.state = TaskState::Done;
        node.generation += 1;
        self.done += 1;
        self.executions += 1;
        let iterations = self.graph.iterations();
        let host = &mut self.hosts[p];
        host.forefront = i + 1;
        host.activity = Activity::Idle;
        if self.graph.is_checkpoint_iteration(i) && i + 1 < iterations {
            host.pending_checkpoint = Some(i);
        }
        self.push_outputs(p, i);
        self.mark(p);
    }

    /// Sends the output of `(q, i)` to neighbouring consumers that still need it.
    fn push_outputs(&mut self, q: usize, i: usize) {
        if i + 1 >= self.graph.iterations() {
            return;
        }
        for p in self.graph.stencil(q) {
            if p == q {
                continue;
            }
            let idx = self.index(p, i + 1);
            if matches!(self.graph.nodes()[idx].state, TaskState::Pending | TaskState::Discarded) {
                self.send(idx, p, slot(p, q));
            }
        }
    }

    fn send(&mut self, task: usize, dest: usize, bit: u8) {
        if (self.have[task] | self.inflight[task]) & bit != 0 {
            return;
        }
        self.inflight[task] |= bit;
        let time = self.now + self.transfer_time;
        self.schedule(time, dest, EventKind::Transfer { task, slot: bit, epoch: self.epoch[task] });
    }

    /// Pulls any missing neighbour input of `(p, i)` whose producer is done.
    fn request_inputs(&mut self, p: usize, i: usize) {
        if i == 0 {
            return;
        }
        let idx = self.index(p, i);
        for q in self.graph.stencil(p) {
            if q != p && self.graph.nodes()[self.index(q, i - 1)].state == TaskState::Done {
                self.send(idx, p, slot(p, q));
            }
        }
    }

    fn inputs_ready(&self, p: usize, i: usize) -> bool {
        if i == 0 {
            return true;
        }
        if self.graph.nodes()[self.index(p, i - 1)].state != TaskState::Done {
            return false;
        }
        let needed = self.graph.stencil(p).iter().filter(|&&q| q != p).fold(0u8, |m, &q| m | slot(p, q));
        self.have[self.index(p, i)] & needed == needed
    }

    fn settle(&mut self) {
        while let Some(p) = self.dirty.pop() {
            self.is_dirty[p] = false;
            self.try_start(p);
            self.update_state(p);
        }
    }

    fn try_start(&mut self, p: usize) {
        if self.hosts[p].activity != Activity::Idle {
            return;
        }
        let now = self.now;
        if let Some(i) = self.hosts[p].pending_checkpoint.take() {
            self.hosts[p].activity = Activity::Checkpoint(i);
            let incarnation = self.hosts[p].incarnation;
            self.schedule(now + self.transfer_time, p, EventKind::CheckpointComplete { iteration: i, incarnation });
            return;
        }
        if let Some(rec) = &mut self.recovery {
            if let Some(hr) = rec.hosts[p].as_mut() {
                if hr.next < hr.tasks.len() {
                    let k = hr.tasks[hr.next];
                    if rec.tasks[k].missing == 0 {
                        let id = rec.tasks[k].id;
                        self.hosts[p].activity = Activity::RecoveryTask(k);
                        let time = now + self.task_time(id.process, id.iteration);
                        let incarnation = self.hosts[p].incarnation;
                        self.schedule(time, p, EventKind::TaskComplete { incarnation });
                    }
                    return;
                }
                if !hr.finished() {
                    return;
                }
            }
        }
        let i = self.hosts[p].forefront;
        if i >= self.graph.iterations() {
            return;
        }
        if self.inputs_ready(p, i) {
            let idx = self.index(p, i);
            let node = &mut self.graph.nodes_mut()[idx];
            debug_assert!(matches!(node.state, TaskState::Pending | TaskState::Discarded), "{:?}", node);
            node.state = TaskState::Running;
            self.hosts[p].activity = Activity::Task(i);
            let time = now + self.task_time(p, i);
            let incarnation = self.hosts[p].incarnation;
            self.schedule(time, p, EventKind::TaskComplete { incarnation });
        } else {
            self.request_inputs(p, i);
        }
    }

    fn participates(&self, p: usize) -> bool {
        self.recovery.as_ref().is_some_and(|r| r.hosts[p].is_some())
    }

    fn current_state(&self, p: usize) -> HostState {
        let host = &self.hosts[p];
        match host.activity {
            Activity::Task(_) | Activity::RecoveryTask(_) => HostState::Computing,
            Activity::Checkpoint(_) => HostState::Communicating,
            Activity::Idle => {
                if self.recovery.is_some() && !self.participates(p) {
                    if self.options.frequency_scaling {
                        HostState::IdleScaled
                    } else {
                        HostState::IdleUnscaled
                    }
                } else if host.forefront >= self.graph.iterations() && !self.participates(p) {
                    HostState::IdleUnscaled
                } else {
                    HostState::Communicating
                }
            }
        }
    }

    fn update_state(&mut self, p: usize) {
        let state = self.current_state(p);
        if state != self.hosts[p].state {
            self.close_interval(p);
            self.hosts[p].state = state;
        }
    }

    fn close_interval(&mut self, p: usize) {
        let now = self.now;
        let host = &mut self.hosts[p];
        if now > host.since {
            host.state_seconds[host.state.index()] += now - host.since;
            if let Some(t) = &mut self.timeline {
                t.push(p, host.since, now, host.state);
            }
            host.since = now;
        }
    }

    /// Aborts whatever `p` is doing; a checkpoint in flight is not committed.
    fn abort(&mut self, p: usize) {
        let host = &mut self.hosts[p];
        host.incarnation += 1;
        host.pending_checkpoint = None;
        if let Activity::Task(i) = host.activity {
            let idx = self.graph.index(TaskId::new(p, i));
            self.graph.nodes_mut()[idx].state = TaskState::Pending;
        }
        host.activity = Activity::Idle;
    }

    /// Forgets every result and input of `p` from iteration `first` on.
    fn reset_from(&mut self, p: usize, first: usize) {
        for i in first..self.graph.iterations() {
            let idx = self.index(p, i);
            let node = &mut self.graph.nodes_mut()[idx];
            match node.state {
                TaskState::Done => {
                    node.state = TaskState::Discarded;
                    self.done -= 1;
                }
                TaskState::Running => node.state = TaskState::Pending,
                _ => {}
            }
            self.have[idx] = 0;
            self.inflight[idx] = 0;
            self.epoch[idx] = self.epoch[idx].wrapping_add(1);
        }
    }

    fn fail(&mut self, event: FailureEvent) -> Result<()> {
        debug_assert!(self.recovery.is_none(), "overlapping recoveries");
        let j = event.host;
        let failed_iter = self.hosts[j].forefront;
        let ctx = FailureContext {
            event,
            failed_iter,
            own_checkpoint: self.checkpoints.last(j),
            global_checkpoint: self.checkpoints.global_consistent(),
            topology: &self.graph.topology(),
        };
        let plan = self.planner.plan(&ctx)?;
        plan.validate(&self.graph)?;
        if plan.failed != j {
            return Err(Error::InvalidPlan(format!("plan is for process {}, process {j} failed", plan.failed)));
        }
        if plan.rejoin_iteration != failed_iter {
            return Err(Error::InvalidPlan(format!(
                "plan rejoins at {}, the failure happened in iteration {failed_iter}",
                plan.rejoin_iteration
            )));
        }
        if let Some(c) = plan.base {
            if let Some(&p) = plan.participants.iter().find(|&&p| !self.checkpoints.holds(p, c)) {
                return Err(Error::InvalidPlan(format!("process {p} holds no checkpoint of iteration {c}")));
            }
        }

        let first = strategy::first_iteration(plan.base);
        if plan.strategy.is_global() {
            // Survivors notice the failure at their next communication, so a
            // task in progress runs to its end and is then thrown away.
            for p in 0..self.hosts.len() {
                if p == j || matches!(self.hosts[p].activity, Activity::Checkpoint(_)) {
                    self.abort(p);
                }
                self.hosts[p].pending_checkpoint = None;
                self.reset_from(p, first);
                self.hosts[p].forefront = failed_iter;
            }
            self.checkpoints.rollback_all(plan.base);
        } else {
            self.abort(j);
            self.reset_from(j, first);
        }

        self.recoveries += 1;
        let record = self.log.failures.len();
        self.log.failures.push(FailureRecord {
            host: j,
            scheduled_time: event.time,
            fired_time: self.now,
            deferred: self.now > event.time,
            failed_iter,
            base: plan.base,
            d: plan.d(),
            planned_recompute: plan.recompute.len(),
            participants: plan.participants.clone(),
            recovery_end: self.now,
        });
        // Checkpoints come from buddy memory, so reloading does not wait for the participant.
        let reload = if self.options.reload_checkpoints && plan.base.is_some() { self.transfer_time } else { 0.0 };
        let recovery = self.build_recovery(plan, record);
        for &p in &recovery.plan.participants {
            self.schedule(self.now + reload, p, EventKind::ReloadComplete { recovery: recovery.id });
        }
        self.recovery = Some(recovery);
        self.mark_all();
        Ok(())
    }

    fn build_recovery(&self, plan: RecoveryPlan, record: usize) -> Recovery {
        let order = plan.in_dependency_order();
        let index: HashMap<TaskId, usize> = order.iter().enumerate().map(|(k, &t)| (t, k)).collect();
        let mut hosts: Vec<Option<HostRecovery>> = vec![None; self.hosts.len()];
        for &p in &plan.participants {
            hosts[p] = Some(HostRecovery {
                reloaded: false,
                reload_dependents: SmallVec::new(),
                tasks: Vec::new(),
                next: 0,
            });
        }
        let mut tasks: Vec<RecoveryTask> =
            order.iter().map(|&id| RecoveryTask { id, missing: 0, dependents: SmallVec::new() }).collect();
        for (k, &id) in order.iter().enumerate() {
            hosts[id.process].as_mut().expect("plan tasks run on participants").tasks.push(k);
            if id.iteration == 0 {
                continue;
            }
            let own = TaskId::new(id.process, id.iteration - 1);
            if let Some(&k0) = index.get(&own) {
                tasks[k0].dependents.push((k, false));
                tasks[k].missing += 1;
            } else if plan.base == Some(own.iteration) {
                hosts[id.process].as_mut().unwrap().reload_dependents.push((k, false));
                tasks[k].missing += 1;
            }
            for q in self.graph.stencil(id.process) {
                if q == id.process {
                    continue;
                }
                match plan.input_source(id, q) {
                    InputSource::Recomputed(t) => {
                        tasks[index[&t]].dependents.push((k, true));
                        tasks[k].missing += 1;
                    }
                    InputSource::Checkpoint(q) => {
                        hosts[q].as_mut().unwrap().reload_dependents.push((k, true));
                        tasks[k].missing += 1;
                    }
                    InputSource::Logged | InputSource::Frozen => {}
                }
            }
        }
        let remaining = tasks.len() + plan.participants.len();
        Recovery { id: self.recoveries, plan, tasks, hosts, remaining, record }
    }

    fn notify(&mut self, dependents: SmallVec<[(usize, bool); 4]>) {
        let id = self.recovery.as_ref().unwrap().id;
        for (k, via_network) in dependents {
            if via_network {
                let dest = self.recovery.as_ref().unwrap().tasks[k].id.process;
                self.schedule(self.now + self.transfer_time, dest, EventKind::RecoveryTransfer { recovery: id, rtask: k });
            } else {
                self.satisfy(k);
            }
        }
    }

    fn satisfy(&mut self, k: usize) {
        let rec = self.recovery.as_mut().unwrap();
        let task = &mut rec.tasks[k];
        task.missing -= 1;
        let p = task.id.process;
        self.mark(p);
    }

    fn complete_reload(&mut self, p: usize) -> Result<()> {
        let rec = self.recovery.as_mut().unwrap();
        let hr = rec.hosts[p].as_mut().unwrap();
        hr.reloaded = true;
        let dependents = std::mem::take(&mut hr.reload_dependents);
        rec.remaining -= 1;
        self.notify(dependents);
        self.mark(p);
        self.maybe_end_recovery()
    }

    fn complete_recovery_task(&mut self, p: usize, k: usize) -> Result<()> {
        self.hosts[p].activity = Activity::Idle;
        self.executions += 1;
        let rec = self.recovery.as_mut().unwrap();
        let id = rec.tasks[k].id;
        let keep = rec.plan.keeps(id);
        let hr = rec.hosts[p].as_mut().unwrap();
        debug_assert_eq!(hr.tasks[hr.next], k);
        hr.next += 1;
        rec.remaining -= 1;
        let dependents = std::mem::take(&mut rec.tasks[k].dependents);
        let idx = self.graph.index(id);
        let node = &mut self.graph.nodes_mut()[idx];
        node.generation += 1;
        if keep && node.state != TaskState::Done {
            node.state = TaskState::Done;
            self.done += 1;
            self.push_outputs(id.process, id.iteration);
            // A recovered result at a checkpoint iteration is checkpointed again.
            if self.graph.is_checkpoint_iteration(id.iteration) && id.iteration + 1 < self.graph.iterations() {
                self.hosts[p].pending_checkpoint = Some(id.iteration);
            }
        }
        self.notify(dependents);
        self.mark(p);
        self.maybe_end_recovery()
    }

    fn maybe_end_recovery(&mut self) -> Result<()> {
        if self.recovery.as_ref().is_some_and(|r| r.remaining == 0) {
            self.end_recovery()?;
        }
        Ok(())
    }

    fn end_recovery(&mut self) -> Result<()> {
        let rec = self.recovery.take().expect("active recovery");
        self.log.failures[rec.record].recovery_end = self.now;
        self.mark_all();
        if !self.failure_scheduled && !self.finished() {
            if let Some(Admission::Fire(e)) = self.cursor.admit(self.now, false) {
                self.fail(e)?;
            }
            if self.recovery.is_none() || !self.failure_scheduled {
                self.schedule_next_failure();
            }
        }
        Ok(())
    }

    fn finish(mut self, strategy: Strategy, seed: u64) -> SimOutput {
        let makespan = self.now;
        for p in 0..self.hosts.len() {
            self.close_interval(p);
        }
        let power = &self.platform.power;
        let per_host_energy: Vec<f64> = self
            .hosts
            .iter()
            .map(|h| HostState::ALL.iter().map(|&s| power_draw(s, power) * h.state_seconds[s.index()]).sum())
            .collect();
        let total_energy = per_host_energy.iter().sum();
        let mut state_seconds = [0.0; 4];
        for h in &self.hosts {
            for (acc, s) in state_seconds.iter_mut().zip(h.state_seconds) {
                *acc += s;
            }
        }
        let timeline = self.timeline.take().map(|mut t| {
            t.makespan = makespan;
            t
        });
        let metrics = RunMetrics {
            strategy,
            seed,
            makespan,
            recomputed_tasks: self.executions - self.graph.len() as u64,
            failures_fired: self.log.failures.len(),
            per_host_energy,
            total_energy,
            projected_savings: 0.0,
            state_seconds,
        };
        SimOutput { metrics, timeline, log: self.log, graph: self.graph }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_task_graph;
    use crate::platform::DEFAULT_TASK_FLOPS;
    use crate::strategy::DfrVariant;

    fn setup(n: usize, iters: usize, c_it: usize) -> (TaskGraph, Platform) {
        let g = build_task_graph(ProcessTopology::line(n).unwrap(), iters, c_it, DEFAULT_TASK_FLOPS).unwrap();
        (g, Platform::with_defaults(n))
    }

    #[test]
    fn failure_free_makespan() {
        let (g, p) = setup(5, 20, 6);
        for s in Strategy::ALL {
            let out = run_simulation(&g, &p, &FailureTrace::none(), s, &RunOptions::default()).unwrap();
            let expected = 20.0 * 10.0 + 19.0 * p.exchange_time();
            assert!((out.metrics.makespan - expected).abs() < 1e-9, "{}", out.metrics.makespan);
            assert_eq!(out.metrics.recomputed_tasks, 0);
            assert!(out.graph.nodes().iter().all(|t| t.state == TaskState::Done && t.generation == 1));
            assert_eq!(out.metrics.state_seconds[HostState::IdleScaled.index()], 0.0);
            assert_eq!(out.metrics.state_seconds[HostState::IdleUnscaled.index()], 0.0);
        }
    }

    #[test]
    fn events_order_by_time_then_kind_then_host() {
        let mk = |time, host, kind| Event { time, host, seq: 0, kind };
        let mut heap = BinaryHeap::new();
        heap.push(mk(1.0, 0, EventKind::Failure));
        heap.push(mk(1.0, 3, EventKind::TaskComplete { incarnation: 0 }));
        heap.push(mk(1.0, 1, EventKind::TaskComplete { incarnation: 0 }));
        heap.push(mk(0.5, 9, EventKind::Failure));
        let order: Vec<_> = std::iter::from_fn(|| heap.pop()).map(|e| (e.time, e.host)).collect();
        assert_eq!(order, vec![(0.5, 9), (1.0, 1), (1.0, 3), (1.0, 0)]);
    }

    #[test]
    fn first_checkpoint_commits_after_iteration_zero() {
        let (g, p) = setup(3, 4, 2);
        // Fail process 1 during iteration 1: the checkpoint of iteration 0 is committed.
        let t = 10.0 + p.exchange_time() + 1.0;
        let trace = FailureTrace::scripted(vec![FailureEvent { time: t, host: 1 }]);
        let out = run_simulation(&g, &p, &trace, Strategy::Dfr(DfrVariant::Minimal), &RunOptions::default()).unwrap();
        let rec = &out.log.failures[0];
        assert_eq!((rec.base, rec.failed_iter, rec.d), (Some(0), 1, 1));
        assert_eq!(out.metrics.recomputed_tasks, 0);
    }

    #[test]
    fn failure_before_any_checkpoint_restarts_from_scratch() {
        let (g, p) = setup(3, 4, 2);
        let trace = FailureTrace::scripted(vec![FailureEvent { time: 5.0, host: 2 }]);
        let out = run_simulation(&g, &p, &trace, Strategy::Global, &RunOptions::default()).unwrap();
        let rec = &out.log.failures[0];
        assert_eq!((rec.base, rec.failed_iter, rec.d), (None, 0, 1));
        assert_eq!(out.metrics.recomputed_tasks, 0);
        // Survivors only notice the failure when their first task ends at t = 10.
        assert!((out.metrics.makespan - (50.0 + 3.0 * p.exchange_time())).abs() < 1e-9);
    }
}
