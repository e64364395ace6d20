//! Application-level check of the rollback strategies on a real 2D Jacobi solve.
//!
//! Ranks are emulated in-process and driven in lock-step supersteps. Each
//! iteration runs ghost exchange, an optional buddy checkpoint, the local
//! update, a rank-major residual allreduce and the buffer swap. Killing a rank
//! poisons the communicator; the next communication call on any rank observes
//! it and every rank enters recovery.

mod comm;
mod grid;

use serde::{Deserialize, Serialize};

pub use comm::{Communicator, Poisoned};
pub use grid::{jacobi_step, Grid, Side};

use crate::engine::buddy_of;
use crate::error::{Error, Result};
use crate::platform::{HostState, PowerModel};
use crate::topology::ProcessTopology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Constant(f64),
    /// `amplitude * sin(pi x) * sin(pi y)` on the unit square.
    Sinusoid { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub local_n: usize,
    /// Mesh spacing; `None` fits the global grid into the unit square.
    pub h: Option<f64>,
    pub source: Source,
    pub boundary_value: f64,
    pub max_iters: usize,
    pub checkpoint_interval: usize,
    /// Stop once the global residual drops below this; 0 never stops early.
    pub residual_tolerance: f64,
    /// Wall time charged per iteration by the energy bookkeeping.
    pub iteration_seconds: f64,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig {
            grid_rows: 2,
            grid_cols: 4,
            local_n: 100,
            h: None,
            source: Source::Sinusoid { amplitude: 1.0 },
            boundary_value: 1.0,
            max_iters: 10,
            checkpoint_interval: 10,
            residual_tolerance: 0.0,
            iteration_seconds: 4.0,
        }
    }
}

impl JacobiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_n < 3 {
            return Err(Error::InvalidParameter(format!("local_n must be at least 3, got {}", self.local_n)));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::InvalidTopology(format!(
                "grid extents must be positive, got {}x{}",
                self.grid_rows, self.grid_cols
            )));
        }
        if !(self.mesh_spacing() > 0.0 && self.mesh_spacing().is_finite()) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {}", self.mesh_spacing())));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::InvalidParameter("checkpoint_interval must be at least 1".into()));
        }
        if !(self.residual_tolerance >= 0.0 && self.iteration_seconds >= 0.0) {
            return Err(Error::InvalidParameter("tolerance and iteration time must be non-negative".into()));
        }
        Ok(())
    }

    pub fn ranks(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn topology(&self) -> Result<ProcessTopology> {
        ProcessTopology::grid(self.grid_rows, self.grid_cols)
    }

    /// Global interior extents `(rows, cols)` in cells.
    pub fn global_extents(&self) -> (usize, usize) {
        (self.grid_rows * self.local_n, self.grid_cols * self.local_n)
    }

    pub fn mesh_spacing(&self) -> f64 {
        self.h.unwrap_or_else(|| {
            let (r, c) = self.global_extents();
            1.0 / (r.max(c) + 1) as f64
        })
    }

    /// Iterations that end with a checkpoint. It is written at the start of
    /// the following iteration, after the ghost exchange.
    pub fn is_checkpoint_iteration(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.checkpoint_interval)
    }

    fn source_at(&self, gr: usize, gc: usize) -> f64 {
        match self.source {
            Source::Constant(v) => v,
            Source::Sinusoid { amplitude } => {
                let h = self.mesh_spacing();
                let pi = std::f64::consts::PI;
                amplitude * (pi * (gr + 1) as f64 * h).sin() * (pi * (gc + 1) as f64 * h).sin()
            }
        }
    }
}

/// Deterministic, spatially irregular starting field.
fn initial_value(gr: usize, gc: usize) -> f64 {
    ((gr * 7 + gc * 13) % 17) as f64 / 16.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub victim: usize,
    /// The rank dies at the start of this iteration.
    pub fail_at_iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JacobiStrategy {
    GlobalRollback,
    /// Rectangular data-flow rollback: every rank closer than `d` helps.
    Dfr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiOptions {
    pub frequency_scaling: bool,
    pub power: PowerModel,
    /// Record the owned cells of `rank` at the start of `iteration`.
    pub observe: Option<(usize, usize)>,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        JacobiOptions { frequency_scaling: true, power: PowerModel::default(), observe: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatedRank {
    pub rank: usize,
    pub coords: (usize, usize),
    pub buddy: usize,
    om: Grid,
    nm: Grid,
    f: Vec<f64>,
    /// Duplicate buffers used only while recovering.
    dup: Option<(Grid, Grid)>,
    pub swaps: u64,
    /// Cell updates applied to `om`/`nm`.
    pub updates: u64,
    /// Cell updates spent on recovery, in either buffer pair.
    pub recovery_updates: u64,
    pub state_seconds: [f64; 4],
}

impl EmulatedRank {
    pub fn om(&self) -> &Grid {
        &self.om
    }

    pub fn nm(&self) -> &Grid {
        &self.nm
    }

    fn charge(&mut self, state: HostState, seconds: f64) {
        self.state_seconds[state.index()] += seconds;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredCheckpoint {
    pub iteration: usize,
    pub holder: usize,
    data: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub strategy: JacobiStrategy,
    pub victim: usize,
    pub failed_iter: usize,
    /// `None` when no checkpoint existed and recovery starts from the initial field.
    pub checkpoint: Option<usize>,
    pub d: usize,
    pub participants: Vec<usize>,
    pub recomputed_rank_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiReport {
    /// Sum of squares over the global grid after each iteration.
    pub history: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Global interior, row-major.
    pub final_grid: Vec<f64>,
    pub recovery: Option<RecoveryRecord>,
    /// Redone iterations whose summed squares differed from the first pass.
    pub overwrite_mismatches: usize,
    pub updates: Vec<u64>,
    pub recovery_updates: Vec<u64>,
    pub swaps: Vec<u64>,
    pub state_seconds: Vec<[f64; 4]>,
    pub energy: Vec<f64>,
    pub observed: Option<Vec<f64>>,
}

/// Fixed-order sum of squares over owned blocks given rank-major.
pub fn summed_squares<'a>(blocks: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    blocks.into_iter().flat_map(|b| b.iter()).fold(0.0, |acc, v| acc + v * v)
}

/// Emulated ranks plus the checkpoint copies their buddies hold.
#[derive(Debug, Clone)]
pub struct JacobiWorld {
    pub config: JacobiConfig,
    topology: ProcessTopology,
    pub ranks: Vec<EmulatedRank>,
    pub comm: Communicator,
    /// Indexed by owner; survives the death of the holder.
    pub checkpoints: Vec<Option<StoredCheckpoint>>,
    h: f64,
    scaling: bool,
}

impl JacobiWorld {
    pub fn new(config: JacobiConfig) -> Result<Self> {
        config.validate()?;
        let topology = config.topology()?;
        let n = config.ranks();
        let mut world = JacobiWorld {
            config,
            topology,
            ranks: Vec::with_capacity(n),
            comm: Communicator::new(n),
            checkpoints: vec![None; n],
            h: config.mesh_spacing(),
            scaling: true,
        };
        for r in 0..n {
            let rank = world.fresh_rank(r)?;
            world.ranks.push(rank);
        }
        Ok(world)
    }

    pub fn topology(&self) -> &ProcessTopology {
        &self.topology
    }

    fn neighbour(&self, rank: usize, side: Side) -> Option<usize> {
        let (row, col) = self.topology.coords(rank).ok()?;
        let (r, c) = match side {
            Side::North => (row.checked_sub(1)?, col),
            Side::South => (row + 1, col),
            Side::West => (row, col.checked_sub(1)?),
            Side::East => (row, col + 1),
        };
        self.topology.rank_at(r, c)
    }

    /// The starting field of `rank`, ghosts included.
    pub fn initial_grid(&self, rank: usize) -> Result<Grid> {
        let l = self.config.local_n;
        let (row, col) = self.topology.coords(rank)?;
        let (gr_max, gc_max) = self.config.global_extents();
        let b = self.config.boundary_value;
        Ok(Grid::from_fn(l, |i, j| {
            // Global coordinates shifted by one so the physical boundary is at 0 and max + 1.
            let gi = row * l + i;
            let gj = col * l + j;
            let corner = (i == 0 || i == l + 1) && (j == 0 || j == l + 1);
            if corner {
                0.0
            } else if gi == 0 || gj == 0 || gi == gr_max + 1 || gj == gc_max + 1 {
                b
            } else {
                initial_value(gi - 1, gj - 1)
            }
        }))
    }

    fn fresh_rank(&self, rank: usize) -> Result<EmulatedRank> {
        let l = self.config.local_n;
        let coords = self.topology.coords(rank)?;
        let f = (0..l * l).map(|k| self.config.source_at(coords.0 * l + k / l, coords.1 * l + k % l)).collect();
        let om = self.initial_grid(rank)?;
        Ok(EmulatedRank {
            rank,
            coords,
            buddy: buddy_of(rank, self.config.ranks()),
            nm: om.clone(),
            om,
            f,
            dup: None,
            swaps: 0,
            updates: 0,
            recovery_updates: 0,
            state_seconds: [0.0; 4],
        })
    }

    /// Ghost exchange on `om` between live ranks. Fails for everyone once any
    /// rank tries to talk to a dead one.
    fn exchange(&mut self) -> std::result::Result<(), Poisoned> {
        let n = self.ranks.len();
        for p in 0..n {
            if !self.comm.is_alive(p) {
                continue;
            }
            for side in Side::ALL {
                if let Some(q) = self.neighbour(p, side) {
                    let edge = self.ranks[p].om.edge(side);
                    self.comm.send(p, q, edge)?;
                }
            }
        }
        for p in 0..n {
            for side in Side::ALL {
                if let Some(q) = self.neighbour(p, side) {
                    let values = self.comm.recv(q, p)?;
                    self.ranks[p].om.set_ghost(side, &values).map_err(|_| Poisoned)?;
                }
            }
        }
        Ok(())
    }

    /// One full iteration on every rank. Returns `(summed squares, residual)`.
    pub fn iterate(&mut self, k: usize, recovering: bool) -> Result<std::result::Result<(f64, f64), Poisoned>> {
        if let Err(p) = self.exchange() {
            return Ok(Err(p));
        }
        if k >= 1 && self.config.is_checkpoint_iteration(k - 1) {
            for p in 0..self.ranks.len() {
                let rank = &self.ranks[p];
                self.checkpoints[p] =
                    Some(StoredCheckpoint { iteration: k - 1, holder: rank.buddy, data: rank.om.clone() });
            }
        }
        let cells = (self.config.local_n * self.config.local_n) as u64;
        let mut locals = Vec::with_capacity(self.ranks.len());
        for rank in &mut self.ranks {
            let r = jacobi_step(&rank.om, &rank.f, self.h, &mut rank.nm)?;
            rank.updates += cells;
            if recovering {
                rank.recovery_updates += cells;
            }
            rank.charge(HostState::Computing, self.config.iteration_seconds);
            locals.push(r);
        }
        let residual = match self.comm.allreduce_sum(&locals) {
            Ok(r) => r,
            Err(p) => return Ok(Err(p)),
        };
        for rank in &mut self.ranks {
            std::mem::swap(&mut rank.om, &mut rank.nm);
            rank.swaps += 1;
        }
        Ok(Ok((self.summed_squares(), residual)))
    }

    pub fn summed_squares(&self) -> f64 {
        let blocks: Vec<Vec<f64>> = self.ranks.iter().map(|r| r.om.interior()).collect();
        summed_squares(blocks.iter().map(Vec::as_slice))
    }

    /// The global interior, row-major.
    pub fn gather(&self) -> Vec<f64> {
        let l = self.config.local_n;
        let (gr, gc) = self.config.global_extents();
        let mut out = vec![0.0; gr * gc];
        for rank in &self.ranks {
            let (row, col) = rank.coords;
            for i in 0..l {
                for j in 0..l {
                    out[(row * l + i) * gc + col * l + j] = rank.om.at(i + 1, j + 1);
                }
            }
        }
        out
    }

    /// Kills `rank`; it stops sending and receiving.
    pub fn kill(&mut self, rank: usize) -> Result<()> {
        if rank >= self.ranks.len() {
            return Err(Error::ProcessOutOfRange { index: rank, n: self.ranks.len() });
        }
        self.comm.kill(rank);
        Ok(())
    }

    /// Spawns replacements for dead ranks and rebuilds the communicator.
    fn replace_dead(&mut self) -> Result<()> {
        for p in 0..self.ranks.len() {
            if !self.comm.is_alive(p) {
                let mut fresh = self.fresh_rank(p)?;
                let old = &self.ranks[p];
                fresh.swaps = old.swaps;
                fresh.updates = old.updates;
                fresh.recovery_updates = old.recovery_updates;
                fresh.state_seconds = old.state_seconds;
                self.ranks[p] = fresh;
            }
        }
        self.comm.repair();
        Ok(())
    }

    fn checkpoint_or_initial(&self, rank: usize, iteration: Option<usize>) -> Result<Grid> {
        match iteration {
            None => self.initial_grid(rank),
            Some(c) => match &self.checkpoints[rank] {
                Some(ck) if ck.iteration == c => Ok(ck.data.clone()),
                _ => Err(Error::InvalidPlan(format!("rank {rank} has no checkpoint of iteration {c}"))),
            },
        }
    }

    /// Every rank reloads its checkpoint. Returns the iteration to resume at.
    pub fn global_recover(&mut self, last_ckpt: Option<usize>) -> Result<usize> {
        self.replace_dead()?;
        for p in 0..self.ranks.len() {
            let data = self.checkpoint_or_initial(p, last_ckpt)?;
            let rank = &mut self.ranks[p];
            rank.om.copy_from(&data)?;
            rank.nm.copy_from(&data)?;
        }
        Ok(last_ckpt.map_or(0, |c| c + 1))
    }

    /// Ranks closer than `d` to `failed_rank` rebuild its state at the start
    /// of `failed_iter` from their checkpoints of `last_ckpt`. Survivors keep
    /// their own buffers untouched. Returns the participants.
    pub fn dfr_recover(&mut self, failed_rank: usize, failed_iter: usize, last_ckpt: Option<usize>) -> Result<Vec<usize>> {
        let d = match last_ckpt {
            Some(c) if c < failed_iter => failed_iter - c,
            Some(c) => {
                return Err(Error::InvalidPlan(format!("checkpoint {c} is not before failed iteration {failed_iter}")))
            }
            None => failed_iter + 1,
        };
        let participants = self.topology.within(failed_rank, d)?;
        self.replace_dead()?;
        let mut member = vec![false; self.ranks.len()];
        for &p in &participants {
            member[p] = true;
        }
        for p in 0..self.ranks.len() {
            if p != failed_rank {
                self.ranks[p].om.set_guard(true);
                self.ranks[p].nm.set_guard(true);
            }
        }
        for &p in &participants {
            let data = self.checkpoint_or_initial(p, last_ckpt)?;
            self.ranks[p].dup = Some((data.clone(), data));
        }
        let rounds = d - 1;
        let cells = (self.config.local_n * self.config.local_n) as u64;
        let seconds = rounds as f64 * self.config.iteration_seconds;
        let idle = if self.scaling { HostState::IdleScaled } else { HostState::IdleUnscaled };
        for (rank, &m) in self.ranks.iter_mut().zip(&member) {
            rank.charge(if m { HostState::Computing } else { idle }, seconds);
        }
        for _ in 0..rounds {
            // Ghosts facing ranks outside the group keep their checkpoint values.
            for &p in &participants {
                for side in Side::ALL {
                    if let Some(q) = self.neighbour(p, side).filter(|&q| member[q]) {
                        let edge = self.ranks[p].dup.as_ref().map(|(om, _)| om.edge(side)).unwrap_or_default();
                        self.comm.send(p, q, edge).map_err(|_| recovery_failure())?;
                    }
                }
            }
            for &p in &participants {
                for side in Side::ALL {
                    if let Some(q) = self.neighbour(p, side).filter(|&q| member[q]) {
                        let values = self.comm.recv(q, p).map_err(|_| recovery_failure())?;
                        if let Some((om, _)) = self.ranks[p].dup.as_mut() {
                            om.set_ghost(side, &values)?;
                        }
                    }
                }
            }
            for &p in &participants {
                let rank = &mut self.ranks[p];
                if let Some((om, nm)) = rank.dup.as_mut() {
                    jacobi_step(om, &rank.f, self.h, nm)?;
                    std::mem::swap(om, nm);
                }
                rank.recovery_updates += cells;
            }
        }
        for &p in &participants {
            let dup = self.ranks[p].dup.take();
            if p == failed_rank {
                if let Some((om, _)) = dup {
                    self.ranks[p].om.copy_from(&om)?;
                }
            }
        }
        for rank in &mut self.ranks {
            rank.om.set_guard(false);
            rank.nm.set_guard(false);
        }
        Ok(participants)
    }

    fn energy(&self, power: &PowerModel) -> Vec<f64> {
        self.ranks
            .iter()
            .map(|r| HostState::ALL.iter().map(|s| r.state_seconds[s.index()] * power.draw(*s)).sum())
            .collect()
    }
}

fn recovery_failure() -> Error {
    Error::Unsupported("failure during recovery".into())
}

/// Runs the solver for `max_iters` logical iterations, optionally killing a
/// rank and recovering with `strategy`.
pub fn run_jacobi(
    config: &JacobiConfig,
    fault: Option<FaultSpec>,
    strategy: JacobiStrategy,
    options: &JacobiOptions,
) -> Result<JacobiReport> {
    let mut world = JacobiWorld::new(*config)?;
    world.scaling = options.frequency_scaling;
    if let Some(f) = fault {
        if f.victim >= config.ranks() {
            return Err(Error::ProcessOutOfRange { index: f.victim, n: config.ranks() });
        }
        if f.fail_at_iteration > config.max_iters {
            return Err(Error::InvalidParameter(format!(
                "fail_at_iteration {} exceeds max_iters {}",
                f.fail_at_iteration, config.max_iters
            )));
        }
    }
    let mut pending = fault;
    let mut history: Vec<Option<f64>> = vec![None; config.max_iters];
    let mut residuals: Vec<Option<f64>> = vec![None; config.max_iters];
    let mut mismatches = 0;
    let mut recovery: Option<RecoveryRecord> = None;
    let mut redo_until = 0;
    let mut observed = None;
    let mut end = config.max_iters;
    let mut k = 0;
    loop {
        if let Some(f) = pending.filter(|f| f.fail_at_iteration == k) {
            pending = None;
            world.kill(f.victim)?;
            let detected = if k < end {
                world.iterate(k, false)?.is_err()
            } else {
                world.comm.allreduce_sum(&vec![0.0; config.ranks()]).is_err()
            };
            if !detected {
                return Err(Error::Unsupported("failure went unnoticed".into()));
            }
            let checkpoint = world.checkpoints[f.victim].as_ref().map(|c| c.iteration);
            let d = checkpoint.map_or(k + 1, |c| k - c);
            let before: u64 = world.ranks.iter().map(|r| r.recovery_updates).sum();
            let (participants, resume) = match strategy {
                JacobiStrategy::GlobalRollback => {
                    let global = world.checkpoints.iter().map(|c| c.as_ref().map(|c| c.iteration)).min().flatten();
                    redo_until = k;
                    ((0..config.ranks()).collect(), world.global_recover(global)?)
                }
                JacobiStrategy::Dfr => (world.dfr_recover(f.victim, k, checkpoint)?, k),
            };
            let rank_iterations = match strategy {
                JacobiStrategy::GlobalRollback => (k - resume) as u64 * config.ranks() as u64,
                JacobiStrategy::Dfr => {
                    let after: u64 = world.ranks.iter().map(|r| r.recovery_updates).sum();
                    (after - before) / (config.local_n * config.local_n) as u64
                }
            };
            recovery = Some(RecoveryRecord {
                strategy,
                victim: f.victim,
                failed_iter: k,
                checkpoint,
                d,
                participants,
                recomputed_rank_iterations: rank_iterations,
            });
            k = resume;
            continue;
        }
        if options.observe.is_some_and(|(r, it)| it == k && r < world.ranks.len()) {
            let (r, _) = options.observe.unwrap_or_default();
            observed = Some(world.ranks[r].om.interior());
        }
        if k >= end {
            break;
        }
        let (ss, res) = match world.iterate(k, k < redo_until)? {
            Ok(v) => v,
            Err(_) => return Err(Error::Unsupported("communicator poisoned without a failure".into())),
        };
        if let Some(prev) = history[k] {
            if prev.to_bits() != ss.to_bits() || residuals[k].map(f64::to_bits) != Some(res.to_bits()) {
                mismatches += 1;
            }
        }
        history[k] = Some(ss);
        residuals[k] = Some(res);
        if config.residual_tolerance > 0.0 && res < config.residual_tolerance && pending.is_none() {
            end = k + 1;
        }
        k += 1;
    }
    let history: Vec<f64> = history.into_iter().take(end).flatten().collect();
    let residuals: Vec<f64> = residuals.into_iter().take(end).flatten().collect();
    Ok(JacobiReport {
        history,
        residuals,
        final_grid: world.gather(),
        recovery,
        overwrite_mismatches: mismatches,
        updates: world.ranks.iter().map(|r| r.updates).collect(),
        recovery_updates: world.ranks.iter().map(|r| r.recovery_updates).collect(),
        swaps: world.ranks.iter().map(|r| r.swaps).collect(),
        state_seconds: world.ranks.iter().map(|r| r.state_seconds).collect(),
        energy: world.energy(&options.power),
        observed,
    })
}

/// Outcome of comparing a faulty run with the fault-free reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub strategy: JacobiStrategy,
    pub history_matches: bool,
    pub final_grid_matches: bool,
    pub overwrite_mismatches: usize,
    pub report: JacobiReport,
}

impl Consistency {
    pub fn passed(&self) -> bool {
        self.history_matches && self.final_grid_matches && self.overwrite_mismatches == 0
    }
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Runs the reference and one faulty run per strategy and compares them bit for bit.
pub fn verify_consistency(
    config: &JacobiConfig,
    fault: FaultSpec,
    strategies: &[JacobiStrategy],
    options: &JacobiOptions,
) -> Result<(JacobiReport, Vec<Consistency>)> {
    let reference = run_jacobi(config, None, JacobiStrategy::GlobalRollback, options)?;
    let mut out = Vec::new();
    for &strategy in strategies {
        let report = run_jacobi(config, Some(fault), strategy, options)?;
        out.push(Consistency {
            strategy,
            history_matches: bits_equal(&reference.history, &report.history)
                && bits_equal(&reference.residuals, &report.residuals),
            final_grid_matches: bits_equal(&reference.final_grid, &report.final_grid),
            overwrite_mismatches: report.overwrite_mismatches,
            report,
        });
    }
    Ok((reference, out))
}
