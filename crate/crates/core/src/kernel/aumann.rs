//! Triangular inverse-CDF representations `φ(s2, ω)`, `ω ∈ [0,1]^n`, of
//! exactly known kernels: coordinate `j` is the conditional quantile of
//! `x_j` given `(s2, x_1, …, x_{j−1})` evaluated at `ω_j`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::ParamMap;
use crate::stats;

pub type ProbFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type MeanFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type CovFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Kernels for which a constructive map is available.
#[derive(Clone)]
pub enum KernelFamily {
    /// `δ_c` for every parameter.
    Constant(Vec<f64>),
    /// Finitely many outcomes with parameter-dependent probabilities.
    FiniteTable {
        param_dim: usize,
        outcomes: Vec<Vec<f64>>,
        probs: Arc<ProbFn>,
    },
    /// `N(m(s2), Σ(s2))` with `Σ(s2)` positive definite.
    Gaussian {
        param_dim: usize,
        dim: usize,
        mean: Arc<MeanFn>,
        cov: Arc<CovFn>,
    },
    /// Some other kernel; no construction is attempted.
    Other(String),
}

impl KernelFamily {
    /// Standard bivariate normal with correlation `s2 ∈ (−1, 1)`.
    pub fn bivariate_normal_correlation() -> Self {
        KernelFamily::Gaussian {
            param_dim: 1,
            dim: 2,
            mean: Arc::new(|_| vec![0.0, 0.0]),
            cov: Arc::new(|s| DMatrix::from_row_slice(2, 2, &[1.0, s[0], s[0], 1.0])),
        }
    }
}

#[derive(Clone)]
pub struct AumannMap {
    family: KernelFamily,
    param_dim: usize,
    noise_dim: usize,
}

impl fmt::Debug for AumannMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AumannMap")
            .field("param_dim", &self.param_dim)
            .field("noise_dim", &self.noise_dim)
            .finish()
    }
}

pub fn build_aumann_map(kernel: &KernelFamily) -> Result<AumannMap> {
    let (param_dim, noise_dim) = match kernel {
        KernelFamily::Constant(c) => {
            if c.is_empty() {
                return Err(Error::invalid("constant kernel needs a point"));
            }
            (0, c.len())
        }
        KernelFamily::FiniteTable {
            param_dim,
            outcomes,
            ..
        } => {
            let n = outcomes.first().map(Vec::len).unwrap_or(0);
            if n == 0 || outcomes.iter().any(|o| o.len() != n) {
                return Err(Error::invalid("finite table outcomes must share a positive dimension"));
            }
            (*param_dim, n)
        }
        KernelFamily::Gaussian { param_dim, dim, .. } => (*param_dim, *dim),
        KernelFamily::Other(name) => {
            return Err(Error::Unsupported(format!(
                "no constructive representation for kernel family `{name}`"
            )))
        }
    };
    Ok(AumannMap {
        family: kernel.clone(),
        param_dim,
        noise_dim,
    })
}

impl AumannMap {
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Component `j`: the conditional quantile of `x_j` given `s2` and the
    /// already computed `prefix = (x_1, …, x_{j−1})`, at level `u`.
    pub fn component(&self, j: usize, s2: &[f64], prefix: &[f64], u: f64) -> Result<f64> {
        if j >= self.noise_dim || prefix.len() != j {
            return Err(Error::invalid("component index and prefix length disagree"));
        }
        match &self.family {
            KernelFamily::Constant(c) => Ok(c[j]),
            KernelFamily::FiniteTable { outcomes, probs, .. } => {
                let p = probs(s2);
                if p.len() != outcomes.len() {
                    return Err(Error::invalid("probability vector length differs from outcome count"));
                }
                // conditional law of coordinate j among outcomes matching the prefix
                let mut cond: Vec<(f64, f64)> = Vec::new();
                for (o, &w) in outcomes.iter().zip(&p) {
                    if w > 0.0 && o[..j] == *prefix {
                        match cond.iter_mut().find(|(v, _)| *v == o[j]) {
                            Some(e) => e.1 += w,
                            None => cond.push((o[j], w)),
                        }
                    }
                }
                if cond.is_empty() {
                    return Err(Error::invalid("prefix has zero probability"));
                }
                cond.sort_by(|a, b| a.0.total_cmp(&b.0));
                let total: f64 = cond.iter().map(|c| c.1).sum();
                let mut acc = 0.0;
                for (v, w) in &cond {
                    acc += w / total;
                    if u < acc {
                        return Ok(*v);
                    }
                }
                Ok(cond.last().expect("nonempty").0)
            }
            KernelFamily::Gaussian { mean, cov, .. } => {
                let (m, l) = self.gaussian_parts(mean, cov, s2)?;
                // recover the standard normal prefix z from x
                let mut z = Vec::with_capacity(j);
                for k in 0..j {
                    let partial: f64 = (0..k).map(|i| l[(k, i)] * z[i]).sum();
                    z.push((prefix[k] - m[k] - partial) / l[(k, k)]);
                }
                let partial: f64 = (0..j).map(|i| l[(j, i)] * z[i]).sum();
                Ok(m[j] + partial + l[(j, j)] * stats::norm_quantile(u))
            }
            KernelFamily::Other(_) => unreachable!("rejected at construction"),
        }
    }

    fn gaussian_parts(
        &self,
        mean: &Arc<MeanFn>,
        cov: &Arc<CovFn>,
        s2: &[f64],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let m = mean(s2);
        let c = cov(s2);
        let n = self.noise_dim;
        if m.len() != n || c.nrows() != n || c.ncols() != n {
            return Err(Error::invalid("gaussian kernel mean/cov dimension"));
        }
        let l = c
            .cholesky()
            .ok_or_else(|| Error::invalid(format!("covariance not positive definite at {s2:?}")))?
            .l();
        Ok((m, l))
    }

    pub fn eval(&self, s2: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        check_dim("aumann parameter", self.param_dim, s2.len())?;
        check_dim("aumann noise", self.noise_dim, omega.len())?;
        let mut x = Vec::with_capacity(self.noise_dim);
        for (j, &u) in omega.iter().enumerate() {
            let v = self.component(j, s2, &x, u)?;
            x.push(v);
        }
        Ok(x)
    }

    /// The map as a [`ParamMap`] (numeric Jacobians only).
    pub fn to_param_map(&self) -> ParamMap {
        let me = self.clone();
        ParamMap::new("aumann", self.param_dim, self.noise_dim, self.noise_dim, move |s2, w| {
            me.eval(s2, w).unwrap_or_else(|_| vec![f64::NAN; w.len()])
        })
    }

    /// `det D_ω φ = ∏_j L_jj / Φ′(Φ⁻¹(ω_j))` for Gaussian families.
    pub fn closed_form_det(&self, s2: &[f64], omega: &[f64]) -> Result<f64> {
        let KernelFamily::Gaussian { mean, cov, .. } = &self.family else {
            return Err(Error::Unsupported("closed-form determinant needs a Gaussian family".into()));
        };
        let (_, l) = self.gaussian_parts(mean, cov, s2)?;
        Ok((0..self.noise_dim)
            .map(|j| l[(j, j)] / stats::norm_pdf(stats::norm_quantile(omega[j])))
            .product())
    }

    /// Mean of the represented law, for Gaussian families.
    pub fn gaussian_mean(&self, s2: &[f64]) -> Option<DVector<f64>> {
        match &self.family {
            KernelFamily::Gaussian { mean, .. } => Some(DVector::from_vec(mean(s2))),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel() {
        let m = build_aumann_map(&KernelFamily::Constant(vec![1.0, 2.0])).unwrap();
        assert_eq!(m.eval(&[], &[0.1, 0.9]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn two_outcome_threshold() {
        let k = KernelFamily::FiniteTable {
            param_dim: 1,
            outcomes: vec![vec![-1.0], vec![4.0]],
            probs: Arc::new(|s| vec![s[0], 1.0 - s[0]]),
        };
        let m = build_aumann_map(&k).unwrap();
        assert_eq!(m.eval(&[0.3], &[0.29]).unwrap(), vec![-1.0]);
        assert_eq!(m.eval(&[0.3], &[0.31]).unwrap(), vec![4.0]);
    }

    #[test]
    fn bivariate_formula_matches_closed_form() {
        let m = build_aumann_map(&KernelFamily::bivariate_normal_correlation()).unwrap();
        let (s, w1, w2) = (0.5f64, 0.3, 0.8);
        let x = m.eval(&[s], &[w1, w2]).unwrap();
        let z1 = stats::norm_quantile(w1);
        let z2 = stats::norm_quantile(w2);
        assert!((x[0] - z1).abs() < 1e-15);
        assert!((x[1] - (s * z1 + (1.0 - s * s).sqrt() * z2)).abs() < 1e-14);
    }

    #[test]
    fn unsupported_family() {
        assert!(build_aumann_map(&KernelFamily::Other("mixture".into())).is_err());
    }
}
