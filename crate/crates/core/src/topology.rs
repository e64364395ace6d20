//! Virtual process topologies and distance queries.
//!
//! Ranks of a 2D Cartesian grid are laid out column-major: rank `r` sits at
//! `(row = r % rows, col = r / rows)`, so checkpoint buddies `(2k, 2k + 1)` share
//! a column when `rows` is even. Distances are Manhattan distances, which is
//! exactly how far data of a radius-1 stencil travels per iteration.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcessTopology {
    /// Non-periodic line of `n` processes.
    Line1D { n: usize },
    /// `rows x cols` Cartesian grid, column-major ranks.
    Cartesian2D { rows: usize, cols: usize },
}

impl fmt::Display for ProcessTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessTopology::Line1D { n } => write!(f, "line1d({n})"),
            ProcessTopology::Cartesian2D { rows, cols } => write!(f, "cartesian2d({rows}x{cols})"),
        }
    }
}

impl ProcessTopology {
    pub fn line(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("a line needs at least one process".into()));
        }
        Ok(ProcessTopology::Line1D { n })
    }

    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidTopology(format!("grid extents must be positive, got {rows}x{cols}")));
        }
        Ok(ProcessTopology::Cartesian2D { rows, cols })
    }

    /// Total number of processes.
    pub fn len(&self) -> usize {
        match *self {
            ProcessTopology::Line1D { n } => n,
            ProcessTopology::Cartesian2D { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        match self {
            ProcessTopology::Line1D { .. } => 1,
            ProcessTopology::Cartesian2D { .. } => 2,
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            Err(Error::ProcessOutOfRange { index, n: self.len() })
        } else {
            Ok(())
        }
    }

    /// Grid coordinates `(row, col)` of a rank. A line is a single row.
    pub fn coords(&self, rank: usize) -> Result<(usize, usize)> {
        self.check(rank)?;
        Ok(match *self {
            ProcessTopology::Line1D { .. } => (0, rank),
            ProcessTopology::Cartesian2D { rows, .. } => (rank % rows, rank / rows),
        })
    }

    /// Inverse of [`coords`](Self::coords); `None` when outside the grid.
    pub fn rank_at(&self, row: usize, col: usize) -> Option<usize> {
        match *self {
            ProcessTopology::Line1D { n } => (row == 0 && col < n).then_some(col),
            ProcessTopology::Cartesian2D { rows, cols } => (row < rows && col < cols).then_some(col * rows + row),
        }
    }

    pub fn partition_distance(&self, a: usize, b: usize) -> Result<usize> {
        let (ra, ca) = self.coords(a)?;
        let (rb, cb) = self.coords(b)?;
        Ok(ra.abs_diff(rb) + ca.abs_diff(cb))
    }

    /// Stencil neighbours in ascending rank order.
    pub fn neighbours(&self, rank: usize) -> Result<SmallVec<[usize; 4]>> {
        let (row, col) = self.coords(rank)?;
        let mut out: SmallVec<[usize; 4]> = SmallVec::new();
        let candidates = [
            (row.checked_sub(1), Some(col)),
            (Some(row + 1), Some(col)),
            (Some(row), col.checked_sub(1)),
            (Some(row), Some(col + 1)),
        ];
        for (r, c) in candidates {
            if let (Some(r), Some(c)) = (r, c) {
                if let Some(nb) = self.rank_at(r, c) {
                    out.push(nb);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// All ranks strictly closer than `radius` to `centre`, ascending.
    pub fn within(&self, centre: usize, radius: usize) -> Result<Vec<usize>> {
        self.check(centre)?;
        let mut out = Vec::new();
        for r in 0..self.len() {
            if self.partition_distance(centre, r)? < radius {
                out.push(r);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`ProcessTopology::partition_distance`].
pub fn partition_distance(topology: &ProcessTopology, a: usize, b: usize) -> Result<usize> {
    topology.partition_distance(a, b)
}

/// Free-function form of [`ProcessTopology::neighbours`].
pub fn neighbours(topology: &ProcessTopology, rank: usize) -> Result<SmallVec<[usize; 4]>> {
    topology.neighbours(rank)
}
