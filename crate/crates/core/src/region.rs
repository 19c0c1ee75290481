//! Axis-aligned boxes and rectilinear grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `∏ [low_j, high_j]`. Whether it is read as open or
/// closed depends on the caller; `contains_open` and `contains` cover both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxRegion {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::invalid("box bounds must be nonempty and of equal length"));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid(format!("box bounds out of order: {low:?} {high:?}")));
        }
        Ok(Self { low, high })
    }

    pub fn cube(dim: usize, low: f64, high: f64) -> Self {
        Self {
            low: vec![low; dim],
            high: vec![high; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.low.iter().zip(&self.high).any(|(l, h)| l >= h)
    }

    pub fn width(&self, j: usize) -> f64 {
        self.high[j] - self.low[j]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *l < *v && *v < *h)
    }

    /// Box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        Self {
            low: (0..self.dim())
                .map(|j| c[j] - 0.5 * factor * self.width(j))
                .collect(),
            high: (0..self.dim())
                .map(|j| c[j] + 0.5 * factor * self.width(j))
                .collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            low: self.low.iter().zip(&other.low).map(|(a, b)| a.min(*b)).collect(),
            high: self.high.iter().zip(&other.high).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Regular lattice with `res` points per axis including the faces.
    pub fn closed_lattice(&self, res: usize) -> Vec<Vec<f64>> {
        lattice(self, res, |j, i| {
            if res == 1 {
                self.center()[j]
            } else {
                self.low[j] + self.width(j) * i as f64 / (res - 1) as f64
            }
        })
    }

    /// Regular lattice with `res` points per axis strictly inside the box.
    pub fn interior_lattice(&self, res: usize) -> Vec<Vec<f64>> {
        lattice(self, res, |j, i| {
            self.low[j] + self.width(j) * (i + 1) as f64 / (res + 1) as f64
        })
    }
}

fn lattice(b: &BoxRegion, res: usize, coord: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let d = b.dim();
    let total = res.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        out.push((0..d).map(|j| coord(j, idx[j])).collect());
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < res {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}

/// One axis of a rectilinear grid: `n` equally spaced nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn step(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }
}

/// Rectilinear grid of nodes; node `k` has row-major multi-index with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub axes: Vec<Axis>,
}

impl RectGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.n < 2 || !(a.lo < a.hi)) {
            return Err(Error::invalid("grid axes need n >= 2 and lo < hi"));
        }
        Ok(Self { axes })
    }

    pub fn over(b: &BoxRegion, res: usize) -> Result<Self> {
        Self::new(
            (0..b.dim())
                .map(|j| Axis {
                    lo: b.low[j],
                    hi: b.high[j],
                    n: res,
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = k % self.axes[j].n;
            k /= self.axes[j].n;
        }
        idx
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.node(i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut k = 0;
        for (j, a) in self.axes.iter().enumerate() {
            let t = ((x[j] - a.lo) / a.step()).round();
            let i = t.clamp(0.0, (a.n - 1) as f64) as usize;
            k = k * a.n + i;
        }
        k
    }

    pub fn bounds(&self) -> BoxRegion {
        BoxRegion {
            low: self.axes.iter().map(|a| a.lo).collect(),
            high: self.axes.iter().map(|a| a.hi).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts_and_membership() {
        let b = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pts = b.interior_lattice(4);
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| b.contains_open(p)));
        let pts = b.closed_lattice(3);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
    }

    #[test]
    fn grid_index_round_trip() {
        let g = RectGrid::over(&BoxRegion::cube(2, -1.0, 1.0), 5).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.nearest(&g.point(k)), k);
        }
        assert!((g.cell_volume() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_inverted_box() {
        assert!(BoxRegion::new(vec![1.0], vec![0.0]).is_err());
    }
}
