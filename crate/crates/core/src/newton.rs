//! Plain Newton-Raphson iteration for square real systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

pub trait NewtonProblem {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Adapter turning a pair of closures into a [`NewtonProblem`].
pub struct FnProblem<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> NewtonProblem for FnProblem<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.residual)(x))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok((self.jacobian)(x))
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub x: DVector<f64>,
    /// Number of correction steps taken.
    pub iterations: usize,
    /// Infinity norm of the residual before each correction and at the end.
    pub residual_norms: Vec<f64>,
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Solves `g(x) = 0` from `x0`. The residual is checked before every correction,
/// so a starting point that already satisfies the tolerance is returned untouched.
pub fn newton_solve<P: NewtonProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    eps: f64,
    max_iter: usize,
) -> Result<NewtonReport> {
    let mut x = x0.clone();
    let mut residual_norms = Vec::new();
    for iter in 0..=max_iter {
        let g = problem.residual(&x)?;
        let norm = inf_norm(&g);
        residual_norms.push(norm);
        if norm <= eps {
            return Ok(NewtonReport { x, iterations: iter, residual_norms });
        }
        if !norm.is_finite() || iter == max_iter {
            break;
        }
        let j = problem.jacobian(&x)?;
        let dx = j.lu().solve(&g).ok_or(Error::SingularJacobian)?;
        if dx.iter().any(|d| !d.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        x -= dx;
    }
    log::debug!("Newton failed after {max_iter} iterations: {residual_norms:?}");
    Err(Error::NonConvergence { iterations: residual_norms.len() - 1, residuals: residual_norms })
}
