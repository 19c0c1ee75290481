//! Densities of pushforward kernels by change of variables:
//! `k(s1|s2) = f(φ⁻¹(s2, s1)) / |det D_ω φ(s2, φ⁻¹(s2, s1))|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::{KernelEstimate, KernelSource};
use crate::error::{check_dim, Error, Result, Witness};
use crate::linalg;
use crate::model::diffeo::{self, newton_starts, Inversion, NEWTON_STARTS};
use crate::model::noise::TRUNCATION_QUANTILE;
use crate::model::{NoiseDistribution, ParamMap};
use crate::region::{BoxRegion, RectGrid};

pub const DEFAULT_GRID_RES: usize = 201;
const SINGULARITY_TOL: f64 = 1e-8;

/// Density value together with the inversion metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEval {
    pub value: f64,
    pub inversion: Inversion,
}

/// Domain used for Newton inversion: the support box for bounded laws,
/// otherwise the quantile-truncated box.
pub fn inversion_domain(p: &NoiseDistribution) -> BoxRegion {
    p.support_hint()
        .unwrap_or_else(|| p.truncated_box(TRUNCATION_QUANTILE))
}

fn require_density(p: &NoiseDistribution) -> Result<()> {
    if p.has_density() {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "change of variables needs a noise law with a Lebesgue density".into(),
        ))
    }
}

pub fn density_via_change_of_variables(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    s1: &[f64],
) -> Result<f64> {
    Ok(density_detail(phi, p, s2, s1, None)?.value)
}

/// As [`density_via_change_of_variables`], trying `warm` first as a Newton
/// start and returning the inversion record.
pub fn density_detail(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    s1: &[f64],
    warm: Option<&[f64]>,
) -> Result<DensityEval> {
    ChangeOfVariables::new(phi, p)?.eval(s2, s1, warm)
}

/// Change-of-variables density evaluator with the inversion domain and
/// Newton starts computed once.
pub struct ChangeOfVariables<'a> {
    phi: &'a ParamMap,
    p: &'a NoiseDistribution,
    domain: BoxRegion,
    starts: Vec<Vec<f64>>,
}

impl<'a> ChangeOfVariables<'a> {
    pub fn new(phi: &'a ParamMap, p: &'a NoiseDistribution) -> Result<Self> {
        require_density(p)?;
        if phi.out_dim() != phi.noise_dim() {
            return Err(Error::invalid("change of variables needs dim φ = dim ω"));
        }
        check_dim("noise law", phi.noise_dim(), p.dim())?;
        let domain = inversion_domain(p);
        let starts = newton_starts(&domain, NEWTON_STARTS);
        Ok(Self {
            phi,
            p,
            domain,
            starts,
        })
    }

    pub fn eval(&self, s2: &[f64], s1: &[f64], warm: Option<&[f64]>) -> Result<DensityEval> {
        check_dim("map parameter", self.phi.param_dim(), s2.len())?;
        check_dim("target point", self.phi.out_dim(), s1.len())?;
        let inversion = match warm {
            Some(w) => {
                let first = diffeo::invert(self.phi, s2, s1, &self.domain, Some(std::slice::from_ref(&w.to_vec())));
                if first.omega.is_some() {
                    first
                } else {
                    let mut rest = diffeo::invert(self.phi, s2, s1, &self.domain, Some(&self.starts));
                    rest.iterations += first.iterations;
                    rest.starts_tried += 1;
                    rest
                }
            }
            None => diffeo::invert(self.phi, s2, s1, &self.domain, Some(&self.starts)),
        };
        let Some(w) = &inversion.omega else {
            return Ok(DensityEval { value: 0.0, inversion });
        };
        let det = linalg::det(&self.phi.jacobian(s2, w)?).abs();
        if det <= SINGULARITY_TOL {
            return Err(Error::SingularJacobian(Witness {
                param: s2.to_vec(),
                point: w.clone(),
                detail: format!("|det D_ω φ| = {det:e} at the preimage of {s1:?}"),
            }));
        }
        let f = self.p.density(w).unwrap_or(0.0);
        Ok(DensityEval {
            value: f / det,
            inversion,
        })
    }
}

/// Bounding box of `φ(s2, ·)` over the truncated noise support, padded by
/// 2% per side.
pub fn image_box(phi: &ParamMap, p: &NoiseDistribution, s2: &[f64]) -> Result<BoxRegion> {
    let dom = p.truncated_box(TRUNCATION_QUANTILE);
    let res = match p.dim() {
        1 => 401,
        2 => 41,
        _ => 11,
    };
    let ext = diffeo::image_extent(phi, s2, &dom, res)?;
    let low: Vec<f64> = (0..ext.dim()).map(|j| ext.low[j] - 0.02 * ext.width(j).max(1e-9)).collect();
    let high: Vec<f64> = (0..ext.dim()).map(|j| ext.high[j] + 0.02 * ext.width(j).max(1e-9)).collect();
    BoxRegion::new(low, high)
}

/// Density of `κ(·|s2)` evaluated at every node of `grid` and returned as a
/// normalized [`KernelEstimate`]. Rows along the last axis reuse the
/// previous preimage as a warm start.
pub fn gridded_density(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    grid: &RectGrid,
) -> Result<KernelEstimate> {
    let cov = ChangeOfVariables::new(phi, p)?;
    check_dim("grid", phi.out_dim(), grid.dim())?;
    let row = grid.axes.last().map(|a| a.n).unwrap_or(1);
    let rows = grid.len() / row;
    let chunks: Result<Vec<(Vec<f64>, usize)>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut vals = Vec::with_capacity(row);
            let mut outside = 0;
            let mut warm: Option<Vec<f64>> = None;
            for i in 0..row {
                let s1 = grid.point(r * row + i);
                let e = cov.eval(s2, &s1, warm.as_deref())?;
                if e.inversion.omega.is_none() {
                    outside += 1;
                }
                if e.inversion.omega.is_some() {
                    warm = e.inversion.omega.clone();
                }
                vals.push(e.value);
            }
            Ok((vals, outside))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut outside = 0;
    for (v, o) in chunks? {
        values.extend(v);
        outside += o;
    }
    let source = KernelSource {
        param: s2.to_vec(),
        grid_res: grid.axes.first().map(|a| a.n),
        outside_image: Some(outside),
        ..Default::default()
    };
    KernelEstimate::gridded(grid.clone(), values, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn location_shift_gives_shifted_normal() {
        let phi = ParamMap::new("shift", 1, 1, 1, |s, w| vec![s[0] + w[0]]);
        let p = NoiseDistribution::standard_normal(1);
        for x in [-1.0, 0.0, 0.7, 2.5] {
            let d = density_via_change_of_variables(&phi, &p, &[0.4], &[x]).unwrap();
            assert!((d - stats::norm_pdf(x - 0.4)).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_uniform() {
        let phi = ParamMap::new("scale", 1, 1, 1, |s, w| vec![s[0] * w[0]]);
        let p = NoiseDistribution::uniform(vec![0.0], vec![1.0]).unwrap();
        let d = density_via_change_of_variables(&phi, &p, &[2.0], &[1.3]).unwrap();
        assert!((d - 0.5).abs() < 1e-9);
        assert_eq!(density_via_change_of_variables(&phi, &p, &[2.0], &[2.5]).unwrap(), 0.0);
        assert_eq!(density_via_change_of_variables(&phi, &p, &[2.0], &[-0.1]).unwrap(), 0.0);
    }

    #[test]
    fn singular_map_errors_with_witness() {
        let phi = ParamMap::new("cube", 0, 1, 1, |_, w| vec![w[0] * w[0] * w[0]]);
        let p = NoiseDistribution::standard_normal(1);
        let r = density_via_change_of_variables(&phi, &p, &[], &[0.0]);
        assert!(matches!(r, Err(Error::SingularJacobian(_))), "{r:?}");
    }

    #[test]
    fn point_mass_is_unsupported() {
        let phi = ParamMap::new("id", 0, 1, 1, |_, w| w.to_vec());
        let p = NoiseDistribution::point_mass(vec![0.0]).unwrap();
        assert!(density_via_change_of_variables(&phi, &p, &[], &[0.0]).is_err());
    }

    #[test]
    fn gridded_density_of_normal() {
        let phi = ParamMap::new("shift", 1, 1, 1, |s, w| vec![s[0] + w[0]]);
        let p = NoiseDistribution::standard_normal(1);
        let b = image_box(&phi, &p, &[1.0]).unwrap();
        let g = RectGrid::over(&b, 201).unwrap();
        let k = gridded_density(&phi, &p, &[1.0], &g).unwrap();
        assert!((k.source.raw_mass.unwrap() - 1.0).abs() < 1e-3);
        assert!((k.mean()[0] - 1.0).abs() < 1e-6);
    }
}
