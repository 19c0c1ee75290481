use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result, Witness};

pub type MapFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync;

/// A parametrized map `φ(s2, ω)` from `R^p × R^n` to `R^k`.
///
/// This is the common currency of the kernel and diagnostics code: the
/// transition function is viewed as `φ((x, a), ξ) = F(x, a, ξ)` and the
/// observation function as `φ((a, x'), η) = G(a, x', η)`.
#[derive(Clone)]
pub struct ParamMap {
    label: String,
    param_dim: usize,
    noise_dim: usize,
    out_dim: usize,
    f: Arc<MapFn>,
    jac: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamMap")
            .field("label", &self.label)
            .field("param_dim", &self.param_dim)
            .field("noise_dim", &self.noise_dim)
            .field("out_dim", &self.out_dim)
            .finish()
    }
}

impl ParamMap {
    pub fn new(
        label: impl Into<String>,
        param_dim: usize,
        noise_dim: usize,
        out_dim: usize,
        f: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            param_dim,
            noise_dim,
            out_dim,
            f: Arc::new(f),
            jac: None,
        }
    }

    pub fn from_arc(
        label: impl Into<String>,
        param_dim: usize,
        noise_dim: usize,
        out_dim: usize,
        f: Arc<MapFn>,
    ) -> Self {
        Self {
            label: label.into(),
            param_dim,
            noise_dim,
            out_dim,
            f,
            jac: None,
        }
    }

    /// Attaches a closed-form `D_ω φ`, used by [`ParamMap::jacobian`] in
    /// place of finite differences.
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn has_closed_form_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Raw evaluation without dimension or finiteness checks.
    #[inline]
    pub fn call(&self, s2: &[f64], omega: &[f64]) -> Vec<f64> {
        (self.f)(s2, omega)
    }

    pub fn eval(&self, s2: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        check_dim("map parameter", self.param_dim, s2.len())?;
        check_dim("map noise", self.noise_dim, omega.len())?;
        let y = (self.f)(s2, omega);
        if y.len() != self.out_dim || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(Witness {
                param: s2.to_vec(),
                point: omega.to_vec(),
                detail: format!("{} returned {:?}", self.label, y),
            }));
        }
        Ok(y)
    }

    /// `D_ω φ(s2, ω)`: the closed form when one is attached, otherwise
    /// [`ParamMap::fd_jacobian`].
    pub fn jacobian(&self, s2: &[f64], omega: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jac {
            Some(j) => {
                self.eval(s2, omega)?;
                Ok(j(s2, omega))
            }
            None => self.fd_jacobian(s2, omega),
        }
    }

    /// Central-difference Jacobian with step `h_j = 1e-5 · (1 + |ω_j|)`.
    pub fn fd_jacobian(&self, s2: &[f64], omega: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.noise_dim;
        let mut jac = DMatrix::zeros(self.out_dim, n);
        let mut w = omega.to_vec();
        for j in 0..n {
            let h = fd_step(omega[j]);
            w[j] = omega[j] + h;
            let plus = self.eval(s2, &w)?;
            w[j] = omega[j] - h;
            let minus = self.eval(s2, &w)?;
            w[j] = omega[j];
            for i in 0..self.out_dim {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

#[inline]
pub fn fd_step(w: f64) -> f64 {
    1e-5 * (1.0 + w.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_linear_map_is_exact_enough() {
        let m = ParamMap::new("lin", 1, 2, 2, |s, w| vec![s[0] * w[0] + w[1], 3.0 * w[1]]);
        let j = m.jacobian(&[2.0], &[0.3, -0.7]).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-9);
        assert!((j[(1, 1)] - 3.0).abs() < 1e-9);
        assert!(j[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn non_finite_output_is_an_evaluation_error() {
        let m = ParamMap::new("log", 0, 1, 1, |_, w| vec![w[0].ln()]);
        assert!(matches!(m.eval(&[], &[-1.0]), Err(Error::Evaluation(_))));
        assert!(matches!(m.eval(&[], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }
}
