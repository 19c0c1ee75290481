use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::WEIGHT_SUM_TOL;
use crate::region::RectGrid;

/// Riemann-sum tolerance for gridded densities.
pub const GRID_MASS_TOL: f64 = 1e-3;

/// Where a kernel slice came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelSource {
    /// Conditioning parameter `s2`.
    pub param: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_res: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Riemann sum of a gridded density before normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_mass: Option<f64>,
    /// Gridded densities: nodes where Newton inversion found no preimage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside_image: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelRepr {
    Empirical { points: Vec<Vec<f64>>, weights: Vec<f64> },
    GriddedDensity { grid: RectGrid, values: Vec<f64> },
}

/// One slice `κ(·|s2)` of a stochastic kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub dim: usize,
    pub repr: KernelRepr,
    pub source: KernelSource,
}

impl KernelEstimate {
    /// Equal-weight empirical measure.
    pub fn empirical(dim: usize, points: Vec<Vec<f64>>, source: KernelSource) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("empirical kernel needs at least one point"));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("empirical kernel points have inconsistent dimension"));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(Self {
            dim,
            repr: KernelRepr::Empirical { points, weights },
            source,
        })
    }

    pub fn weighted(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>, source: KernelSource) -> Result<Self> {
        let k = Self {
            dim,
            repr: KernelRepr::Empirical { points, weights },
            source,
        };
        k.validate()?;
        Ok(k)
    }

    /// Density values on grid nodes, normalized so that the Riemann sum is
    /// one. The raw sum is kept in `source.raw_mass`.
    pub fn gridded(grid: RectGrid, mut values: Vec<f64>, mut source: KernelSource) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("density values must be finite and nonnegative"));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if mass <= 0.0 {
            return Err(Error::invalid("gridded density has zero mass on its grid"));
        }
        for v in &mut values {
            *v /= mass;
        }
        source.raw_mass = Some(mass);
        Ok(Self {
            dim: grid.dim(),
            repr: KernelRepr::GriddedDensity { grid, values },
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.repr {
            KernelRepr::Empirical { points, weights } => {
                if points.len() != weights.len() || points.is_empty() {
                    return Err(Error::invalid("empirical kernel needs matching nonempty points/weights"));
                }
                if points.iter().any(|p| p.len() != self.dim) {
                    return Err(Error::invalid("empirical kernel point dimension"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::invalid("empirical weights must be nonnegative"));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > WEIGHT_SUM_TOL * weights.len().max(1) as f64 {
                    return Err(Error::invalid(format!("empirical weights sum to {s}")));
                }
            }
            KernelRepr::GriddedDensity { grid, values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch);
                }
                let m = self.riemann_mass();
                if (m - 1.0).abs() > GRID_MASS_TOL {
                    return Err(Error::invalid(format!("gridded density mass {m}")));
                }
            }
        }
        Ok(())
    }

    pub fn riemann_mass(&self) -> f64 {
        match &self.repr {
            KernelRepr::Empirical { weights, .. } => weights.iter().sum(),
            KernelRepr::GriddedDensity { grid, values } => values.iter().sum::<f64>() * grid.cell_volume(),
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.repr, KernelRepr::Empirical { .. })
    }

    pub fn points(&self) -> Option<&[Vec<f64>]> {
        match &self.repr {
            KernelRepr::Empirical { points, .. } => Some(points),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            KernelRepr::Empirical { points, .. } => points.len(),
            KernelRepr::GriddedDensity { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(point, mass)` pairs: sample points with weights, or grid nodes
    /// with `value · cell_volume`.
    pub fn atoms(&self) -> Vec<(Vec<f64>, f64)> {
        match &self.repr {
            KernelRepr::Empirical { points, weights } => {
                points.iter().cloned().zip(weights.iter().cloned()).collect()
            }
            KernelRepr::GriddedDensity { grid, values } => {
                let v = grid.cell_volume();
                values.iter().enumerate().map(|(k, f)| (grid.point(k), f * v)).collect()
            }
        }
    }

    /// `∫ f dκ`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        match &self.repr {
            KernelRepr::Empirical { points, weights } => {
                points.iter().zip(weights).map(|(p, w)| w * f(p)).sum()
            }
            KernelRepr::GriddedDensity { grid, values } => {
                let v = grid.cell_volume();
                values
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| **f > 0.0)
                    .map(|(k, d)| d * v * f(&grid.point(k)))
                    .sum()
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim).map(|j| self.integrate(|x| x[j])).collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let d = self.dim;
        let mut c = DMatrix::zeros(d, d);
        for (p, w) in self.atoms() {
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += w * (p[i] - m[i]) * (p[j] - m[j]);
                }
            }
        }
        c
    }

    /// Empirical mass per node of `grid` (nearest-node binning), divided by
    /// the cell volume so that it is comparable with a gridded density.
    pub fn histogram_density(&self, grid: &RectGrid) -> Result<Vec<f64>> {
        let KernelRepr::Empirical { points, weights } = &self.repr else {
            return Err(Error::invalid("histogram needs an empirical kernel"));
        };
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch);
        }
        let b = grid.bounds();
        let half: Vec<f64> = grid.axes.iter().map(|a| 0.5 * a.step()).collect();
        let mut h = vec![0.0; grid.len()];
        for (p, w) in points.iter().zip(weights) {
            let inside = (0..self.dim).all(|j| p[j] >= b.low[j] - half[j] && p[j] <= b.high[j] + half[j]);
            if inside {
                h[grid.nearest(p)] += w;
            }
        }
        let v = grid.cell_volume();
        Ok(h.into_iter().map(|m| m / v).collect())
    }

    /// CSV with header `dim0,...,dim{n-1},weight`. Gridded densities are
    /// written as nodes with their cell masses.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim)
            .map(|j| format!("dim{j}"))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (p, m) in self.atoms() {
            let row: Vec<String> = p.iter().chain(std::iter::once(&m)).map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
