//! One-stage costs `c(x, a)` and their lift `c̄(z, a) = ∫ c(x, a) z(dx)` to
//! beliefs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::filter::{Belief, FiniteModel};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionMode {
    /// Discounted: cost bounded below, `α ∈ [0, 1)`.
    D,
    /// Positive: cost nonnegative, `α ≥ 0`.
    P,
}

/// Discrete demand law for inventory costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandLaw {
    pub values: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFamily {
    /// `xᵀXx + aᵀAa`.
    Quadratic { x: Vec<Vec<f64>>, a: Vec<Vec<f64>> },
    /// `‖Xx − Aa‖`.
    Estimation { x: Vec<Vec<f64>>, a: Vec<Vec<f64>> },
    /// `Σ_j [K_j 1{a_j > 0} + c̄_j a_j] + E h(L(x + a − ξ))` with
    /// `h(u) = Σ_j holding·u_j⁺ + backorder·u_j⁻`.
    Inventory {
        fixed_cost: Vec<f64>,
        unit_cost: Vec<f64>,
        holding: f64,
        backorder: f64,
        #[serde(default)]
        lost_sales: bool,
        demand: DemandLaw,
    },
    /// Table `c[x][a]` over state and action indices; `null` is `+∞`.
    Table { c: Vec<Vec<Option<f64>>> },
    /// The cost table shipped with a finite model.
    Model,
    /// `c ≡ value`.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub family: CostFamily,
    #[serde(default)]
    pub lower_bound: f64,
    pub mode: AssumptionMode,
    pub alpha: f64,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    linalg::from_rows(rows).map_err(|e| Error::param(format!("{what}: {e}")))
}

impl CostSpec {
    pub fn new(family: CostFamily, mode: AssumptionMode, alpha: f64) -> Self {
        Self {
            family,
            lower_bound: 0.0,
            mode,
            alpha,
        }
    }

    /// Checks `α` against the mode and the family's structural hypotheses.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            AssumptionMode::D if !(0.0..1.0).contains(&self.alpha) => {
                return Err(Error::Assumption(format!(
                    "(D) requires alpha in [0, 1), got {}",
                    self.alpha
                )))
            }
            AssumptionMode::P if !(self.alpha >= 0.0) || !self.alpha.is_finite() => {
                return Err(Error::Assumption(format!("(P) requires alpha >= 0, got {}", self.alpha)))
            }
            _ => {}
        }
        if self.mode == AssumptionMode::P && self.lower_bound < 0.0 {
            return Err(Error::Assumption("(P) requires a nonnegative cost".into()));
        }
        if !self.lower_bound.is_finite() {
            return Err(Error::param("lower_bound must be finite"));
        }
        match &self.family {
            CostFamily::Quadratic { x, a } => {
                let (xm, am) = (matrix(x, "X")?, matrix(a, "A")?);
                if !xm.is_square() || !am.is_square() {
                    return Err(Error::param("quadratic cost needs square X and A"));
                }
                linalg::check_psd(&xm, "X")?;
                linalg::check_psd(&am, "A")?;
                if linalg::min_eigenvalue(&am) <= linalg::PSD_TOL {
                    return Err(Error::param("quadratic cost needs A positive definite"));
                }
            }
            CostFamily::Estimation { x, a } => {
                let (xm, am) = (matrix(x, "X")?, matrix(a, "A")?);
                if xm.nrows() != am.nrows() {
                    return Err(Error::param("estimation cost needs X and A with equal row counts"));
                }
                if !am.is_square() || linalg::det(&am).abs() <= 1e-12 {
                    return Err(Error::param("estimation cost needs A nonsingular"));
                }
            }
            CostFamily::Inventory {
                fixed_cost,
                unit_cost,
                holding,
                backorder,
                demand,
                ..
            } => {
                let d = fixed_cost.len();
                if d == 0 || unit_cost.len() != d {
                    return Err(Error::param("inventory costs need equal-length fixed and unit cost vectors"));
                }
                if fixed_cost.iter().chain(unit_cost).chain([holding, backorder]).any(|v| !(*v >= 0.0)) {
                    return Err(Error::param("inventory cost coefficients must be nonnegative"));
                }
                if demand.values.is_empty()
                    || demand.values.len() != demand.probs.len()
                    || demand.values.iter().any(|v| v.len() != d)
                    || demand.probs.iter().any(|p| !(*p >= 0.0))
                    || (demand.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::param("demand law must be a probability vector over d-dimensional values"));
                }
            }
            CostFamily::Table { c } => {
                if c.iter().flatten().flatten().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                    return Err(Error::param("cost table is unbounded below or NaN"));
                }
            }
            CostFamily::Model => {}
            CostFamily::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::param("constant cost must be finite"));
                }
            }
        }
        Ok(())
    }

    /// `c(x, a)` for vector states and actions. Table families read `x[0]`
    /// and `a[0]` as indices.
    pub fn eval(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        match &self.family {
            CostFamily::Quadratic { x: xm, a: am } => {
                let (xm, am) = (matrix(xm, "X")?, matrix(am, "A")?);
                check_dim("state", xm.nrows(), x.len())?;
                check_dim("action", am.nrows(), a.len())?;
                let xv = DVector::from_column_slice(x);
                let av = DVector::from_column_slice(a);
                Ok(xv.dot(&(&xm * &xv)) + av.dot(&(&am * &av)))
            }
            CostFamily::Estimation { x: xm, a: am } => {
                let (xm, am) = (matrix(xm, "X")?, matrix(am, "A")?);
                check_dim("state", xm.ncols(), x.len())?;
                check_dim("action", am.ncols(), a.len())?;
                let r = &xm * DVector::from_column_slice(x) - &am * DVector::from_column_slice(a);
                Ok(r.norm())
            }
            CostFamily::Inventory {
                fixed_cost,
                unit_cost,
                holding,
                backorder,
                lost_sales,
                demand,
            } => {
                let d = fixed_cost.len();
                check_dim("state", d, x.len())?;
                check_dim("action", d, a.len())?;
                let mut c = 0.0;
                for j in 0..d {
                    if a[j] > 0.0 {
                        c += fixed_cost[j];
                    }
                    c += unit_cost[j] * a[j];
                }
                for (xi, p) in demand.values.iter().zip(&demand.probs) {
                    for j in 0..d {
                        let mut u = x[j] + a[j] - xi[j];
                        if *lost_sales {
                            // shortage is penalized, the level is floored at 0
                            c += p * backorder * (-u).max(0.0);
                            u = u.max(0.0);
                            c += p * holding * u;
                        } else {
                            c += p * (holding * u.max(0.0) + backorder * (-u).max(0.0));
                        }
                    }
                }
                Ok(c)
            }
            CostFamily::Table { c } => {
                let (i, j) = (index(x, c.len())?, index(a, c.first().map_or(0, Vec::len))?);
                Ok(c[i][j].unwrap_or(f64::INFINITY))
            }
            CostFamily::Model => Err(Error::invalid("model costs are only defined through a finite model")),
            CostFamily::Constant { value } => Ok(*value),
        }
    }

    /// `c(x, a)` with the family's matrices parsed once.
    pub fn evaluator(&self) -> Result<Box<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync + '_>> {
        match &self.family {
            CostFamily::Quadratic { x, a } => {
                let (xm, am) = (matrix(x, "X")?, matrix(a, "A")?);
                Ok(Box::new(move |x: &[f64], a: &[f64]| {
                    check_dim("state", xm.nrows(), x.len())?;
                    check_dim("action", am.nrows(), a.len())?;
                    let xv = DVector::from_column_slice(x);
                    let av = DVector::from_column_slice(a);
                    Ok(xv.dot(&(&xm * &xv)) + av.dot(&(&am * &av)))
                }))
            }
            CostFamily::Estimation { x, a } => {
                let (xm, am) = (matrix(x, "X")?, matrix(a, "A")?);
                Ok(Box::new(move |x: &[f64], a: &[f64]| {
                    check_dim("state", xm.ncols(), x.len())?;
                    check_dim("action", am.ncols(), a.len())?;
                    Ok((&xm * DVector::from_column_slice(x) - &am * DVector::from_column_slice(a)).norm())
                }))
            }
            _ => Ok(Box::new(move |x: &[f64], a: &[f64]| self.eval(x, a))),
        }
    }

    /// `c[x][a]` over a finite model, reading numeric states and actions
    /// from the model's value labels for the continuous families.
    pub fn table_for(&self, model: &FiniteModel) -> Result<Vec<Vec<f64>>> {
        let (nx, na) = (model.n_states(), model.n_actions());
        let t = match &self.family {
            CostFamily::Model => model
                .cost_table()
                .ok_or_else(|| Error::param("model has no cost table"))?,
            CostFamily::Table { c } => {
                if c.len() != nx || c.iter().any(|r| r.len() != na) {
                    return Err(Error::param(format!("cost table must be {nx}x{na}")));
                }
                c.iter()
                    .map(|r| r.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
                    .collect()
            }
            _ => (0..nx)
                .map(|x| {
                    (0..na)
                        .map(|a| self.eval(&[model.state_value(x)], &[model.action_value(a)]))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?,
        };
        self.check_values(t.iter().flatten().copied())?;
        Ok(t)
    }

    /// Checks probed cost values against the assumption mode.
    pub fn check_values(&self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        for v in values {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::param("cost is unbounded below or NaN"));
            }
            match self.mode {
                AssumptionMode::D if v < self.lower_bound => {
                    return Err(Error::Assumption(format!(
                        "(D) cost value {v} is below the declared lower bound {}",
                        self.lower_bound
                    )))
                }
                AssumptionMode::P if v < 0.0 => {
                    return Err(Error::Assumption(format!("(P) cost value {v} is negative")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn index(v: &[f64], n: usize) -> Result<usize> {
    match v {
        [i] if *i >= 0.0 && i.fract() == 0.0 && (*i as usize) < n => Ok(*i as usize),
        _ => Err(Error::invalid(format!("{v:?} is not an index below {n}"))),
    }
}

/// Lifted cost with a Monte Carlo band for particle beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedCost {
    pub value: f64,
    pub band: Option<f64>,
}

/// `c̄(z, a)`: exact for finite support, closed form for Gaussian beliefs
/// under quadratic costs, weighted sample mean for particles. A `+∞` cost on
/// a point of positive mass makes the lift `+∞`.
pub fn lift_cost(cost: &CostSpec, z: &Belief, a: &[f64]) -> Result<LiftedCost> {
    match z {
        Belief::FiniteSupport { support, weights } => {
            let mut v = 0.0;
            for (x, w) in support.iter().zip(weights) {
                if *w > 0.0 {
                    v += w * cost.eval(x, a)?;
                }
            }
            Ok(LiftedCost { value: v, band: None })
        }
        Belief::Gaussian { mean, cov } => match &cost.family {
            CostFamily::Quadratic { x: xm, .. } => {
                let xm = matrix(xm, "X")?;
                let c = linalg::from_rows(cov)?;
                check_dim("belief", xm.nrows(), mean.len())?;
                let m = DVector::from_column_slice(mean);
                let trace = (&xm * &c).trace();
                let zero = vec![0.0; mean.len()];
                let action_part = cost.eval(&zero, a)?;
                Ok(LiftedCost {
                    value: m.dot(&(&xm * &m)) + trace + action_part,
                    band: None,
                })
            }
            CostFamily::Constant { value } => Ok(LiftedCost { value: *value, band: None }),
            _ => Err(Error::Unsupported(
                "Gaussian beliefs are lifted in closed form for quadratic costs only".into(),
            )),
        },
        Belief::Particle { points, weights, .. } => {
            let vals: Vec<f64> = points.iter().map(|x| cost.eval(x, a)).collect::<Result<_>>()?;
            let mean: f64 = vals.iter().zip(weights).map(|(v, w)| v * w).sum();
            if !mean.is_finite() {
                return Ok(LiftedCost { value: mean, band: None });
            }
            let var: f64 = vals.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum();
            let ess_inv: f64 = weights.iter().map(|w| w * w).sum();
            Ok(LiftedCost {
                value: mean,
                band: Some((var * ess_inv).sqrt()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> CostSpec {
        CostSpec::new(
            CostFamily::Quadratic {
                x: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                a: vec![vec![2.0]],
            },
            AssumptionMode::P,
            0.9,
        )
    }

    #[test]
    fn point_mass_lift_is_the_cost() {
        let c = quad();
        let z = Belief::point_mass(vec![1.0, -2.0]);
        assert_eq!(lift_cost(&c, &z, &[0.5]).unwrap().value, 5.5);
    }

    #[test]
    fn gaussian_quadratic_closed_form() {
        let c = quad();
        let z = Belief::gaussian(vec![1.0, 0.0], vec![vec![2.0, 0.3], vec![0.3, 0.5]]).unwrap();
        assert!((lift_cost(&c, &z, &[1.0]).unwrap().value - (1.0 + 2.5 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn infinite_cost_propagates() {
        let c = CostSpec::new(
            CostFamily::Table {
                c: vec![vec![Some(1.0), None], vec![Some(2.0), Some(3.0)]],
            },
            AssumptionMode::D,
            0.5,
        );
        let z = Belief::on_indices(vec![0.5, 0.5]).unwrap();
        assert_eq!(lift_cost(&c, &z, &[1.0]).unwrap().value, f64::INFINITY);
        assert_eq!(lift_cost(&c, &z, &[0.0]).unwrap().value, 1.5);
        let z = Belief::on_indices(vec![0.0, 1.0]).unwrap();
        assert_eq!(lift_cost(&c, &z, &[1.0]).unwrap().value, 3.0);
    }

    #[test]
    fn mode_checks() {
        let mut c = quad();
        c.mode = AssumptionMode::D;
        c.alpha = 1.0;
        assert!(matches!(c.validate(), Err(Error::Assumption(_))));
        c.alpha = 0.0;
        assert!(c.validate().is_ok());
        let neg = CostSpec::new(CostFamily::Constant { value: -1.0 }, AssumptionMode::P, 1.0);
        assert!(matches!(neg.check_values([-1.0]), Err(Error::Assumption(_))));
        let sing = CostSpec::new(
            CostFamily::Estimation {
                x: vec![vec![1.0]],
                a: vec![vec![0.0]],
            },
            AssumptionMode::P,
            1.0,
        );
        assert!(sing.validate().is_err());
    }

    #[test]
    fn inventory_cost_by_hand() {
        let c = CostSpec::new(
            CostFamily::Inventory {
                fixed_cost: vec![0.5],
                unit_cost: vec![1.0],
                holding: 0.2,
                backorder: 2.0,
                lost_sales: true,
                demand: DemandLaw {
                    values: vec![vec![0.0], vec![2.0]],
                    probs: vec![0.5, 0.5],
                },
            },
            AssumptionMode::P,
            0.9,
        );
        // x + a = 1: demand 0 holds 1, demand 2 is short by 1
        let v = c.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - (0.5 + 1.0 + 0.5 * 0.2 + 0.5 * 2.0)).abs() < 1e-12);
    }
}
