//! Subdomain buffers with a one-cell ghost border and the Jacobi sweep.

use crate::error::{Error, Result};

/// `(n + 2) x (n + 2)` row-major values; row and column 0 and `n + 1` are ghosts.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    data: Vec<f64>,
    guarded: bool,
}

impl Grid {
    pub fn new(n: usize, value: f64) -> Self {
        Grid { n, data: vec![value; (n + 2) * (n + 2)], guarded: false }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = Grid::new(n, 0.0);
        for i in 0..n + 2 {
            for j in 0..n + 2 {
                g.data[i * (n + 2) + j] = f(i, j);
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn stride(&self) -> usize {
        self.n + 2
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride() + j]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to every cell, ghosts included; fails while guarded.
    pub fn raw_mut(&mut self) -> Result<&mut [f64]> {
        if self.guarded {
            return Err(Error::Unsupported("write to a guarded buffer".into()));
        }
        Ok(&mut self.data)
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let s = self.stride();
        self.raw_mut()?[i * s + j] = value;
        Ok(())
    }

    pub fn set_guard(&mut self, guarded: bool) {
        self.guarded = guarded;
    }

    pub fn is_guarded(&self) -> bool {
        self.guarded
    }

    /// Owned cells in row-major order.
    pub fn interior(&self) -> Vec<f64> {
        (1..=self.n).flat_map(|i| (1..=self.n).map(move |j| (i, j))).map(|(i, j)| self.at(i, j)).collect()
    }

    /// Owned cells along one side, in increasing index order.
    pub fn edge(&self, side: Side) -> Vec<f64> {
        let n = self.n;
        (1..=n)
            .map(|k| match side {
                Side::North => self.at(1, k),
                Side::South => self.at(n, k),
                Side::West => self.at(k, 1),
                Side::East => self.at(k, n),
            })
            .collect()
    }

    /// Overwrites the ghost cells along one side.
    pub fn set_ghost(&mut self, side: Side, values: &[f64]) -> Result<()> {
        let n = self.n;
        debug_assert_eq!(values.len(), n);
        let s = self.stride();
        let data = self.raw_mut()?;
        for (k, &v) in values.iter().enumerate() {
            let (i, j) = match side {
                Side::North => (0, k + 1),
                Side::South => (n + 1, k + 1),
                Side::West => (k + 1, 0),
                Side::East => (k + 1, n + 1),
            };
            data[i * s + j] = v;
        }
        Ok(())
    }

    /// Copies every cell of `other`, ghosts included.
    pub fn copy_from(&mut self, other: &Grid) -> Result<()> {
        debug_assert_eq!(self.n, other.n);
        self.raw_mut()?.copy_from_slice(&other.data);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    North,
    South,
    West,
    East,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::South, Side::West, Side::East];

    pub fn opposite(self) -> Side {
        match self {
            Side::North => Side::South,
            Side::South => Side::North,
            Side::West => Side::East,
            Side::East => Side::West,
        }
    }
}

/// One sweep `nm = (N + W + S + E - h^2 f) / 4` over the owned cells of `om`,
/// where `f` holds the owned source values row-major. Ghost cells of `nm` are
/// copied from `om`. Returns the sum of squared changes.
pub fn jacobi_step(om: &Grid, f: &[f64], h: f64, nm: &mut Grid) -> Result<f64> {
    let n = om.n;
    let s = n + 2;
    let h2 = h * h;
    let src = &om.data;
    let dst = nm.raw_mut()?;
    dst.copy_from_slice(src);
    let mut residual = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            let c = i * s + j;
            let v = 0.25 * (src[c - s] + src[c - 1] + src[c + s] + src[c + 1] - h2 * f[(i - 1) * n + (j - 1)]);
            let delta = v - src[c];
            residual += delta * delta;
            dst[c] = v;
        }
    }
    Ok(residual)
}
