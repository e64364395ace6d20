//! Value-replay oracle for recovery plans.
//!
//! Every task of a small reference computation gets a concrete value derived
//! from its inputs. A plan is replayed in iteration order using only what a
//! real recovery would have: reloaded checkpoints of participants, message
//! logs for log-based replay, and the plan's own recomputed values. Anything
//! else is stale garbage. The plan is sufficient when the values it keeps
//! match the reference.

use std::collections::HashMap;

use dfrsim_core::graph::TaskId;
use dfrsim_core::strategy::{RecoveryPlan, Strategy};

const GARBAGE: u64 = 0xdead_beef_dead_beef;

fn mix(inputs: &[(i64, u64)]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &(offset, v) in inputs {
        h ^= v.wrapping_add((offset + 2) as u64).wrapping_mul(0xff51_afd7_ed55_8ccd);
        h = h.rotate_left(29).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    }
    h
}

fn initial(p: usize) -> u64 {
    mix(&[(0, p as u64 * 7919 + 13)])
}

/// Reference values of every task up to iteration `iters - 1`.
pub fn reference(n: usize, iters: usize) -> Vec<Vec<u64>> {
    let mut v = vec![(0..n).map(initial).collect::<Vec<_>>()];
    for i in 1..iters {
        let prev = &v[i - 1];
        let row = (0..n)
            .map(|p| {
                let lo = p.saturating_sub(1);
                let hi = (p + 1).min(n - 1);
                let inputs: Vec<_> = (lo..=hi).map(|q| (q as i64 - p as i64, prev[q])).collect();
                mix(&inputs)
            })
            .collect();
        v.push(row);
    }
    v
}

/// Replays `plan` and returns an error describing the first wrong kept value.
pub fn check_plan(plan: &RecoveryPlan, n: usize, reference: &[Vec<u64>]) -> Result<(), String> {
    let participants: std::collections::HashSet<usize> = plan.participants.iter().copied().collect();
    let mut tasks = plan.recompute.clone();
    tasks.sort_by_key(|t| (t.iteration, t.process));
    let mut replayed: HashMap<TaskId, u64> = HashMap::new();
    for t in &tasks {
        let (p, i) = (t.process, t.iteration);
        let value = if i == 0 {
            initial(p)
        } else {
            let lo = p.saturating_sub(1);
            let hi = (p + 1).min(n - 1);
            let inputs: Vec<_> = (lo..=hi)
                .map(|q| {
                    let src = TaskId::new(q, i - 1);
                    let v = if let Some(&v) = replayed.get(&src) {
                        v
                    } else if plan.base == Some(i - 1) && participants.contains(&q) {
                        reference[i - 1][q]
                    } else if plan.strategy == Strategy::LogBased && q != p {
                        reference[i - 1][q]
                    } else {
                        GARBAGE
                    };
                    (q as i64 - p as i64, v)
                })
                .collect();
            mix(&inputs)
        };
        replayed.insert(*t, value);
    }
    let first = plan.base.map_or(0, |c| c + 1);
    let must_keep: Vec<usize> = if plan.strategy == Strategy::Global { (0..n).collect() } else { vec![plan.failed] };
    for &p in &must_keep {
        for i in first..plan.rejoin_iteration {
            let t = TaskId::new(p, i);
            match replayed.get(&t) {
                None => return Err(format!("{t} is lost and never recomputed")),
                Some(&v) if v != reference[i][p] => return Err(format!("{t} recomputed from stale inputs")),
                Some(_) if !plan.keeps(t) => return Err(format!("{t} recomputed but not kept")),
                _ => {}
            }
        }
    }
    Ok(())
}
