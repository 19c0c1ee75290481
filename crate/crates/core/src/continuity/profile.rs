use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bl::{bl_distance, DEFAULT_DICTIONARY_SIZE};
use super::tv::{tv_distance_with, DistanceEstimate, TvMode, ATOM_TOL};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{gridded_density, image_box, pushforward_kernel, KernelEstimate, DEFAULT_GRID_RES};
use crate::linalg;
use crate::model::{NoiseDistribution, ParamMap};
use crate::region::RectGrid;
use crate::rng;

pub const DISCONTINUITY_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityVerdict {
    Continuous,
    Discontinuous,
    Inconclusive,
}

impl ContinuityVerdict {
    /// Rule applied to the estimate at the smallest radius.
    pub fn judge(estimate: f64, band: f64, floor: f64) -> Self {
        if estimate - 3.0 * band > floor {
            ContinuityVerdict::Discontinuous
        } else if estimate + 3.0 * band <= floor {
            ContinuityVerdict::Continuous
        } else {
            ContinuityVerdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    pub discontinuity_floor: f64,
    pub dictionary_size: usize,
    /// Nodes per axis for gridded TV; the band compares against half this
    /// resolution.
    pub grid_res: usize,
    pub atom_tol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            discontinuity_floor: DISCONTINUITY_FLOOR,
            dictionary_size: DEFAULT_DICTIONARY_SIZE,
            grid_res: DEFAULT_GRID_RES,
            atom_tol: ATOM_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub direction: usize,
    pub tv: DistanceEstimate,
    pub bl_estimate: f64,
    pub bl_band: f64,
}

/// Worst case over directions at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusEntry {
    pub radius: f64,
    pub tv_estimate: f64,
    pub tv_band: f64,
    pub bl_estimate: f64,
    pub bl_band: f64,
    pub directions: Vec<DirectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityProfile {
    pub base_param: Vec<f64>,
    pub radii: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub seed: u64,
    pub tv_mode: TvMode,
    pub entries: Vec<RadiusEntry>,
    pub tv_verdict: ContinuityVerdict,
    pub bl_verdict: ContinuityVerdict,
    pub options: ProfileOptions,
}

impl ContinuityProfile {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "radius,tv,tv_band,bl,bl_band")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{}", e.radius, e.tv_estimate, e.tv_band, e.bl_estimate, e.bl_band)?;
        }
        Ok(())
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::invalid("need at least one radius"));
    }
    if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid("radii must be finite and nonnegative"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("radii must be strictly decreasing"));
    }
    Ok(())
}

fn check_directions(dirs: &[Vec<f64>], dim: usize) -> Result<()> {
    if dirs.is_empty() {
        return Err(Error::invalid("need at least one direction"));
    }
    for u in dirs {
        check_dim("direction", dim, u.len())?;
        if (linalg::norm(u) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("direction {u:?} is not a unit vector")));
        }
    }
    Ok(())
}

fn gridded_tv(phi: &ParamMap, p: &NoiseDistribution, s2: &[f64], s2p: &[f64], res: usize) -> Result<DistanceEstimate> {
    let b = image_box(phi, p, s2)?.union(&image_box(phi, p, s2p)?);
    let tv_at = |res: usize| -> Result<f64> {
        let g = RectGrid::over(&b, res)?;
        let k0 = gridded_density(phi, p, s2, &g)?;
        let k1 = gridded_density(phi, p, s2p, &g)?;
        Ok(tv_distance_with(&k0, &k1, 0.0)?.value)
    };
    let fine = tv_at(res)?;
    let coarse = tv_at(res.div_ceil(2).max(2))?;
    Ok(DistanceEstimate {
        value: fine,
        band: (fine - coarse).abs(),
        mode: TvMode::GriddedL1,
        seed: None,
    })
}

/// Compares `κ(·|s2 + r u)` with `κ(·|s2)` for every radius `r` and
/// direction `u`. TV uses gridded change-of-variables densities when the
/// noise has a density and `φ(s2, ·)` is square, otherwise the coupled
/// empirical upper bound; BL always uses coupled samples.
pub fn continuity_profile(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    radii: &[f64],
    directions: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<ContinuityProfile> {
    continuity_profile_with(phi, p, s2, radii, directions, n_samples, seed, &ProfileOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn continuity_profile_with(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    radii: &[f64],
    directions: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
    opts: &ProfileOptions,
) -> Result<ContinuityProfile> {
    check_dim("map parameter", phi.param_dim(), s2.len())?;
    check_radii(radii)?;
    check_directions(directions, s2.len())?;
    if opts.grid_res < 3 {
        return Err(Error::invalid("grid_res must be at least 3"));
    }
    let gridded = p.has_density() && phi.out_dim() == phi.noise_dim() && phi.out_dim() <= 2;
    let tv_mode = if gridded { TvMode::GriddedL1 } else { TvMode::CoupledUpperBound };
    let base = pushforward_kernel(phi, p, s2, n_samples, seed)?;
    let dict_seed = rng::derive(seed, 0xB1);

    let jobs: Vec<(usize, usize)> = (0..radii.len())
        .flat_map(|i| (0..directions.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<DirectionEntry> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let s2p: Vec<f64> = s2.iter().zip(&directions[j]).map(|(s, u)| s + radii[i] * u).collect();
            let moved: KernelEstimate = pushforward_kernel(phi, p, &s2p, n_samples, seed)?;
            let tv = if gridded {
                gridded_tv(phi, p, s2, &s2p, opts.grid_res)?
            } else {
                tv_distance_with(&base, &moved, opts.atom_tol)?
            };
            let bl = bl_distance(&base, &moved, opts.dictionary_size, dict_seed)?;
            Ok(DirectionEntry {
                direction: j,
                tv,
                bl_estimate: bl.value,
                bl_band: bl.band,
            })
        })
        .collect::<Result<_>>()?;

    let nd = directions.len();
    let entries: Vec<RadiusEntry> = radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let ds = results[i * nd..(i + 1) * nd].to_vec();
            let mut t = 0;
            let mut b = 0;
            for k in 1..nd {
                if ds[k].tv.value > ds[t].tv.value {
                    t = k;
                }
                if ds[k].bl_estimate > ds[b].bl_estimate {
                    b = k;
                }
            }
            RadiusEntry {
                radius,
                tv_estimate: ds[t].tv.value,
                tv_band: ds[t].tv.band,
                bl_estimate: ds[b].bl_estimate,
                bl_band: ds[b].bl_band,
                directions: ds,
            }
        })
        .collect();
    let last = entries.last().expect("radii checked nonempty");
    let floor = opts.discontinuity_floor;
    Ok(ContinuityProfile {
        base_param: s2.to_vec(),
        radii: radii.to_vec(),
        directions: directions.to_vec(),
        n_samples,
        seed,
        tv_mode,
        tv_verdict: ContinuityVerdict::judge(last.tv_estimate, last.tv_band, floor),
        bl_verdict: ContinuityVerdict::judge(last.bl_estimate, last.bl_band, floor),
        entries,
        options: opts.clone(),
    })
}
