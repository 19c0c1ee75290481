//! Numerical probe of (K-)inf-compactness: searches for points of the
//! sublevel set `{c ≤ γ}` outside a doubling ladder of boxes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cost::{CostFamily, CostSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::region::BoxRegion;

/// Largest box scale factor tried.
pub const MAX_DOUBLINGS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// `x` stays in `C`; only the action box grows.
    KInf,
    /// Both the state box and the action box grow.
    InfCompact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinfVerdict {
    Bounded,
    UnboundedWitness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelWitness {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub value: f64,
    /// Unit vector along `(x, a)`.
    pub ray: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinfReport {
    pub verdict: KinfVerdict,
    pub mode: ProbeMode,
    pub gamma: f64,
    /// Scale factor of the largest boxes searched.
    pub search_limit: f64,
    pub points_evaluated: usize,
    /// Largest `‖a‖` among sublevel points found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_action_radius: Option<f64>,
    /// Analytic bound on `‖a‖` for the quadratic and estimation families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theoretical_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<SublevelWitness>,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    linalg::from_rows(rows)
}

/// `‖a‖ ≤ √(γ/λ_min(A))` for quadratic costs; `‖a‖ ≤ (γ + ‖X‖ rad C)/σ_min(A)`
/// for estimation costs.
pub fn theoretical_action_bound(cost: &CostSpec, c_box: &BoxRegion, gamma: f64) -> Result<Option<f64>> {
    Ok(match &cost.family {
        CostFamily::Quadratic { a, .. } => {
            let r = linalg::min_eigenvalue(&matrix(a)?);
            (r > 0.0).then(|| (gamma.max(0.0) / r).sqrt())
        }
        CostFamily::Estimation { x, a } => {
            let xm = matrix(x)?;
            let am = matrix(a)?;
            let xn = xm.singular_values().max();
            let smin = am.singular_values().min();
            let rad = (0..c_box.dim())
                .map(|j| c_box.low[j].abs().max(c_box.high[j].abs()).powi(2))
                .sum::<f64>()
                .sqrt();
            (smin > 0.0).then(|| (gamma + xn * rad) / smin)
        }
        _ => None,
    })
}

pub fn kinf_compact_probe(
    cost: &CostSpec,
    c_box: &BoxRegion,
    gamma: f64,
    search_box: &BoxRegion,
    resolution: usize,
    mode: ProbeMode,
) -> Result<KinfReport> {
    if resolution < 2 {
        return Err(Error::invalid("resolution must be at least 2"));
    }
    if !gamma.is_finite() {
        return Err(Error::invalid("gamma must be finite"));
    }
    let c = cost.evaluator()?;
    let mut points = 0;
    let mut observed: Option<f64> = None;
    let mut top_witness: Option<SublevelWitness> = None;
    for k in 0..=MAX_DOUBLINGS {
        let s = f64::from(1u32 << k);
        let abox = search_box.scaled(s);
        let prev_a = (k > 0).then(|| search_box.scaled(s / 2.0));
        let xbox = match mode {
            ProbeMode::KInf => c_box.clone(),
            ProbeMode::InfCompact => c_box.scaled(s),
        };
        let prev_x = (k > 0 && mode == ProbeMode::InfCompact).then(|| c_box.scaled(s / 2.0));
        let xs = xbox.closed_lattice(resolution);
        let as_ = abox.closed_lattice(resolution);
        let mut best: Option<(f64, SublevelWitness)> = None;
        for x in &xs {
            let x_old = prev_x.as_ref().is_none_or(|b| b.contains(x));
            for a in &as_ {
                let a_old = prev_a.as_ref().is_none_or(|b| b.contains(a));
                if k > 0 && x_old && a_old {
                    continue;
                }
                points += 1;
                let v = c(x, a)?;
                if v <= gamma {
                    let na = linalg::norm(a);
                    observed = Some(observed.map_or(na, |o| o.max(na)));
                    let joint = linalg::concat(x, a);
                    let nj = linalg::norm(&joint);
                    if best.as_ref().is_none_or(|(b, _)| nj > *b) {
                        let ray = if nj > 0.0 { joint.iter().map(|v| v / nj).collect() } else { joint.clone() };
                        best = Some((
                            nj,
                            SublevelWitness {
                                x: x.clone(),
                                a: a.clone(),
                                value: v,
                                ray,
                            },
                        ));
                    }
                }
            }
        }
        if k == MAX_DOUBLINGS && k > 0 {
            top_witness = best.map(|(_, w)| w);
        }
    }
    let verdict = if top_witness.is_some() {
        KinfVerdict::UnboundedWitness
    } else {
        KinfVerdict::Bounded
    };
    Ok(KinfReport {
        verdict,
        mode,
        gamma,
        search_limit: f64::from(1u32 << MAX_DOUBLINGS),
        points_evaluated: points,
        observed_action_radius: observed,
        theoretical_bound: match mode {
            ProbeMode::KInf => theoretical_action_bound(cost, c_box, gamma)?,
            ProbeMode::InfCompact => None,
        },
        witness: top_witness,
    })
}
