//! Uniform box covering of `T^d`.

use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::MAX_DIM;
use crate::torus::{centered, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(FsError::InvalidInput(format!("grid dimension {dim}")));
        }
        if n < 2 {
            return Err(FsError::InvalidInput(format!("grid resolution {n} < 2")));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn num_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / self.n as f64
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        (0..self.dim)
            .map(|_| {
                let i = rem % self.n;
                rem /= self.n;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &i| acc * self.n + i)
    }

    #[inline]
    pub(crate) fn center_raw(&self, idx: usize) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        let mut rem = idx;
        let h = 1.0 / self.n as f64;
        for x in c.iter_mut().take(self.dim) {
            *x = ((rem % self.n) as f64 + 0.5) * h;
            rem /= self.n;
        }
        c
    }

    pub fn cell_center(&self, idx: usize) -> TorusPoint {
        TorusPoint::wrap_unchecked(&self.center_raw(idx)[..self.dim])
    }

    #[inline]
    pub(crate) fn cell_of_raw(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for &c in x[..self.dim].iter().rev() {
            let i = ((c * self.n as f64).floor() as i64).rem_euclid(self.n as i64) as usize;
            idx = idx * self.n + i;
        }
        idx
    }

    pub fn cell_of(&self, x: &TorusPoint) -> usize {
        self.cell_of_raw(x.coords())
    }

    /// Cells whose centers lie within a per-axis box of half-widths `reach`
    /// around `x` (no duplicates; wraps around).
    pub(crate) fn cells_in_box(&self, x: &[f64], reach: &[f64]) -> Vec<usize> {
        let n = self.n as i64;
        let mut axes: Vec<Vec<usize>> = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let lo = ((x[a] - reach[a]) * self.n as f64 - 0.5).floor() as i64;
            let hi = ((x[a] + reach[a]) * self.n as f64 - 0.5).ceil() as i64;
            if hi - lo + 1 >= n {
                axes.push((0..self.n).collect());
            } else {
                axes.push((lo..=hi).map(|i| i.rem_euclid(n) as usize).collect());
            }
        }
        let mut out = Vec::new();
        let mut pos = vec![0usize; self.dim];
        loop {
            let multi: Vec<usize> = (0..self.dim).map(|a| axes[a][pos[a]]).collect();
            out.push(self.flat_index(&multi));
            let mut a = 0;
            loop {
                if a == self.dim {
                    return out;
                }
                pos[a] += 1;
                if pos[a] < axes[a].len() {
                    break;
                }
                pos[a] = 0;
                a += 1;
            }
        }
    }

    /// Cells whose centers lie within torus distance `r` of `x`, sorted.
    pub fn cells_within(&self, x: &TorusPoint, r: f64) -> Vec<usize> {
        let reach = vec![r; self.dim];
        let mut cells: Vec<usize> = self
            .cells_in_box(x.coords(), &reach)
            .into_iter()
            .filter(|&c| {
                let cc = self.center_raw(c);
                let d2: f64 = (0..self.dim)
                    .map(|a| {
                        let t = centered(cc[a] - x.coords()[a]);
                        t * t
                    })
                    .sum();
                d2 <= r * r
            })
            .collect();
        cells.sort_unstable();
        cells
    }
}
