//! In-order mailboxes between emulated ranks and a revocable communicator.
//!
//! Any operation that touches a dead rank poisons the communicator; every
//! later call on any rank then fails until the communicator is repaired.

use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Poisoned;

#[derive(Debug, Clone, Default)]
pub struct Communicator {
    alive: Vec<bool>,
    poisoned: bool,
    mailboxes: HashMap<(usize, usize), VecDeque<Vec<f64>>>,
    pub messages: u64,
}

impl Communicator {
    pub fn new(ranks: usize) -> Self {
        Communicator { alive: vec![true; ranks], ..Communicator::default() }
    }

    pub fn is_alive(&self, rank: usize) -> bool {
        self.alive[rank]
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Kills `rank`; its mailboxes are lost with it.
    pub fn kill(&mut self, rank: usize) {
        self.alive[rank] = false;
        self.mailboxes.retain(|&(from, to), _| from != rank && to != rank);
    }

    /// Replaces dead ranks with fresh ones and clears the revocation.
    pub fn repair(&mut self) {
        self.alive.iter_mut().for_each(|a| *a = true);
        self.poisoned = false;
        self.mailboxes.clear();
    }

    fn check(&mut self, a: usize, b: usize) -> Result<(), Poisoned> {
        if self.poisoned || !self.alive[a] || !self.alive[b] {
            self.poisoned = true;
            return Err(Poisoned);
        }
        Ok(())
    }

    pub fn send(&mut self, from: usize, to: usize, payload: Vec<f64>) -> Result<(), Poisoned> {
        self.check(from, to)?;
        self.messages += 1;
        self.mailboxes.entry((from, to)).or_default().push_back(payload);
        Ok(())
    }

    pub fn recv(&mut self, from: usize, to: usize) -> Result<Vec<f64>, Poisoned> {
        self.check(from, to)?;
        self.mailboxes.get_mut(&(from, to)).and_then(VecDeque::pop_front).ok_or(Poisoned)
    }

    /// Sum of `values` in rank order; needs every rank alive.
    pub fn allreduce_sum(&mut self, values: &[f64]) -> Result<f64, Poisoned> {
        if self.poisoned || self.alive.iter().any(|a| !a) {
            self.poisoned = true;
            return Err(Poisoned);
        }
        Ok(values.iter().fold(0.0, |acc, v| acc + v))
    }
}
