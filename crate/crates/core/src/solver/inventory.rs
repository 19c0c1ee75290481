//! Finite inventory model built from its equations: stock levels
//! `0..=max_stock`, orders `0..=max_stock`, `x' = clamp(x + a − ξ, 0, max)`
//! (lost sales, excess capacity discarded) and a noisy stock reading
//! `y = clamp(x' + η, 0, max)`.

use serde::{Deserialize, Serialize};

use super::cost::{AssumptionMode, CostFamily, CostSpec, DemandLaw};
use crate::error::{Error, Result};
use crate::filter::FiniteModel;
use crate::model::Flavor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventorySpec {
    pub max_stock: usize,
    /// `P(ξ = k)` for `k = 0, 1, …`.
    pub demand_probs: Vec<f64>,
    /// `P(η = k − offset)`; `offset = (len − 1)/2`.
    pub reading_error_probs: Vec<f64>,
    pub fixed_cost: f64,
    pub unit_cost: f64,
    pub holding: f64,
    pub shortage: f64,
}

impl Default for InventorySpec {
    fn default() -> Self {
        Self {
            max_stock: 2,
            demand_probs: vec![0.3, 0.5, 0.2],
            reading_error_probs: vec![0.1, 0.8, 0.1],
            fixed_cost: 0.5,
            unit_cost: 1.0,
            holding: 0.2,
            shortage: 2.0,
        }
    }
}

impl InventorySpec {
    /// Tables and the matching cost specification under (D) with `alpha`.
    pub fn build(&self, alpha: f64) -> Result<(FiniteModel, CostSpec)> {
        let n = self.max_stock + 1;
        let probs_ok = |p: &[f64]| !p.is_empty() && p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        if !probs_ok(&self.demand_probs) || !probs_ok(&self.reading_error_probs) || self.reading_error_probs.len() % 2 == 0 {
            return Err(Error::param("demand and reading-error laws must be probability vectors (odd length for the reading error)"));
        }
        let cap = self.max_stock as i64;
        let clamp = |v: i64| v.clamp(0, cap) as usize;
        let mut transition = vec![vec![vec![0.0; n]; n]; n];
        for a in 0..n {
            for x in 0..n {
                let level = (x + a).min(self.max_stock) as i64;
                for (d, p) in self.demand_probs.iter().enumerate() {
                    transition[a][x][clamp(level - d as i64)] += p;
                }
            }
        }
        let off = (self.reading_error_probs.len() as i64 - 1) / 2;
        let mut reading = vec![vec![0.0; n]; n];
        for (x, row) in reading.iter_mut().enumerate() {
            for (k, p) in self.reading_error_probs.iter().enumerate() {
                row[clamp(x as i64 + k as i64 - off)] += p;
            }
        }
        let labels = |p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let model = FiniteModel {
            name: "inventory".into(),
            flavor: Flavor::Pomdp,
            states: labels("stock"),
            actions: labels("order"),
            observations: labels("read"),
            state_values: Some(values.clone()),
            action_values: Some(values),
            transition,
            observation: vec![reading; n],
            initial_belief: vec![1.0 / n as f64; n],
            cost: None,
        };
        model.validate()?;
        // orders beyond capacity are paid for but discarded
        let table: Vec<Vec<Option<f64>>> = (0..n)
            .map(|x| {
                (0..n)
                    .map(|a| {
                        let level = (x + a).min(self.max_stock) as f64;
                        let mut c = if a > 0 { self.fixed_cost } else { 0.0 } + self.unit_cost * a as f64;
                        for (d, p) in self.demand_probs.iter().enumerate() {
                            let u = level - d as f64;
                            c += p * (self.holding * u.max(0.0) + self.shortage * (-u).max(0.0));
                        }
                        Some(c)
                    })
                    .collect()
            })
            .collect();
        let spec = CostSpec::new(CostFamily::Table { c: table }, AssumptionMode::D, alpha);
        Ok((model, spec))
    }

    /// The same one-stage cost as an [`CostFamily::Inventory`] family over
    /// continuous levels (without the capacity cap).
    pub fn cost_family(&self) -> CostFamily {
        CostFamily::Inventory {
            fixed_cost: vec![self.fixed_cost],
            unit_cost: vec![self.unit_cost],
            holding: self.holding,
            backorder: self.shortage,
            lost_sales: true,
            demand: DemandLaw {
                values: (0..self.demand_probs.len()).map(|d| vec![d as f64]).collect(),
                probs: self.demand_probs.clone(),
            },
        }
    }
}
