//! Predictor-corrector continuation of the power-flow solutions along the
//! uniform load increase `lambda = xi` (loads) / `lambda = 1` (compensators).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::determinant_sign;
use crate::newton::{inf_norm, newton_solve, NewtonProblem, DEFAULT_EPS, DEFAULT_MAX_ITER};
use crate::node_models::{ResourceKind, ResourceModel};
use crate::power_flow::{jacobian_svd, OperatingPoint, PowerFlowSystem, SingularValues};
use crate::vsi::VsiResult;

/// Square system `f(x, xi) = 0` with one free parameter.
pub trait ParametricSystem {
    fn dimension(&self) -> usize;
    fn residual(&self, x: &DVector<f64>, xi: f64) -> Result<DVector<f64>>;
    /// `(D_x f, D_xi f)`.
    fn jacobian(&self, x: &DVector<f64>, xi: f64) -> Result<(DMatrix<f64>, DVector<f64>)>;
}

/// Loads get `lambda = xi`, compensators `lambda = 1`.
pub fn load_trajectory(resources: &[ResourceModel], xi: f64) -> Vec<ResourceModel> {
    resources
        .iter()
        .map(|r| match r.kind {
            ResourceKind::Load => r.with_lambda(xi),
            ResourceKind::Compensator => r.with_lambda(1.0),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CpfConfig {
    /// Arclength step in the normalized `(x, xi)` metric.
    pub sigma: f64,
    pub eps: f64,
    pub max_steps: usize,
    pub max_corrector_iter: usize,
    /// Consecutive step halvings allowed after corrector failures.
    pub max_halvings: usize,
    /// Step halvings spent locating the fold once it has been passed.
    pub fold_refinements: usize,
    pub xi_start: f64,
    pub record_vsi: bool,
    pub record_svd: bool,
}

impl Default for CpfConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            eps: DEFAULT_EPS,
            max_steps: 500,
            max_corrector_iter: DEFAULT_MAX_ITER,
            max_halvings: 6,
            fold_refinements: 10,
            xi_start: 1.0,
            record_vsi: true,
            record_svd: true,
        }
    }
}

impl CpfConfig {
    fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidModel("continuation needs sigma > 0 and eps > 0".into()));
        }
        Ok(())
    }
}

/// Normalized tangent `[dx; 1] / sqrt(|dx|^2 + 1)` with `D_x f dx = -D_xi f`.
pub fn tangent<S: ParametricSystem + ?Sized>(sys: &S, x: &DVector<f64>, xi: f64) -> Result<(DVector<f64>, f64)> {
    let (jx, jxi) = sys.jacobian(x, xi)?;
    let dx = jx.lu().solve(&(-jxi)).ok_or(Error::SingularJacobian)?;
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian);
    }
    let norm = (dx.norm_squared() + 1.0).sqrt();
    Ok((dx / norm, 1.0 / norm))
}

/// Tangent predictor: a step of length `sigma` along [`tangent`].
pub fn tangent_predict<S: ParametricSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    xi: f64,
    sigma: f64,
) -> Result<(DVector<f64>, f64)> {
    let (tx, txi) = tangent(sys, x, xi)?;
    Ok((x + tx * sigma, xi + txi * sigma))
}

/// `[f(x, xi); (|x - x_k|^2 + (xi - xi_k)^2 - sigma^2) / sigma^2]` over `z = [x; xi]`.
struct Arclength<'a, S: ?Sized> {
    sys: &'a S,
    x_k: &'a DVector<f64>,
    xi_k: f64,
    sigma: f64,
}

impl<S: ParametricSystem + ?Sized> NewtonProblem for Arclength<'_, S> {
    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.x_k.len();
        let x = z.rows(0, n).into_owned();
        let xi = z[n];
        let f = self.sys.residual(&x, xi)?;
        let s2 = self.sigma * self.sigma;
        let sphere = ((&x - self.x_k).norm_squared() + (xi - self.xi_k).powi(2) - s2) / s2;
        let mut g = DVector::zeros(n + 1);
        g.rows_mut(0, n).copy_from(&f);
        g[n] = sphere;
        Ok(g)
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.x_k.len();
        let x = z.rows(0, n).into_owned();
        let xi = z[n];
        let (jx, jxi) = self.sys.jacobian(&x, xi)?;
        let s2 = self.sigma * self.sigma;
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&jx);
        j.view_mut((0, n), (n, 1)).copy_from(&jxi);
        let dx = (&x - self.x_k) * (2.0 / s2);
        j.view_mut((n, 0), (1, n)).copy_from(&dx.transpose());
        j[(n, n)] = 2.0 * (xi - self.xi_k) / s2;
        Ok(j)
    }
}

/// Arclength corrector: Newton on the power-flow equations plus the sphere of
/// radius `sigma` around the anchor `(x_k, xi_k)`.
pub fn arclength_correct<S: ParametricSystem + ?Sized>(
    sys: &S,
    predicted: (&DVector<f64>, f64),
    anchor: (&DVector<f64>, f64),
    sigma: f64,
    eps: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, f64)> {
    let n = anchor.0.len();
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(predicted.0);
    z0[n] = predicted.1;
    let problem = Arclength { sys, x_k: anchor.0, xi_k: anchor.1, sigma };
    let report = newton_solve(&problem, &z0, eps, max_iter)?;
    Ok((report.x.rows(0, n).into_owned(), report.x[n]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    FoldDetected,
    StepLimit,
    CorrectorFailure,
}

/// Accepted points of one continuation run, in the solver's normalized state.
#[derive(Clone, Debug)]
pub struct BranchTrace {
    pub points: Vec<(DVector<f64>, f64)>,
    pub termination: Termination,
    /// First corrected point found past the fold, if any.
    pub beyond_fold: Option<(DVector<f64>, f64)>,
    /// Steps whose corrector landed behind the anchor and were retried.
    pub regressions: usize,
    /// Steps retried with a halved step after a corrector failure.
    pub retries: usize,
}

/// Runs the predictor-corrector loop from a solution `(x0, xi0)` until the
/// fold is passed, the step budget is spent, or the corrector keeps failing.
///
/// A step whose corrected `xi` does not exceed the anchor's, or across which
/// the sign of `det D_x f` flips, has passed the fold. Such a step is retried
/// from the same anchor with half the step length up to `fold_refinements`
/// times, so the last accepted point ends up close to the fold tip.
pub fn trace_branch<S: ParametricSystem + ?Sized>(
    sys: &S,
    x0: DVector<f64>,
    xi0: f64,
    cfg: &CpfConfig,
) -> Result<BranchTrace> {
    cfg.check()?;
    let mut sign = determinant_sign(&sys.jacobian(&x0, xi0)?.0);
    let mut trace = BranchTrace {
        points: vec![(x0, xi0)],
        termination: Termination::StepLimit,
        beyond_fold: None,
        regressions: 0,
        retries: 0,
    };
    let mut sigma = cfg.sigma;
    let mut halvings = 0;
    let mut refinements = 0;
    let mut accepted = 0;

    while accepted < cfg.max_steps {
        let (x_k, xi_k) = trace.points.last().cloned().expect("trace starts nonempty");
        let step = tangent(sys, &x_k, xi_k).and_then(|(tx, txi)| {
            let predicted = (&x_k + &tx * sigma, xi_k + txi * sigma);
            let corrected = arclength_correct(
                sys,
                (&predicted.0, predicted.1),
                (&x_k, xi_k),
                sigma,
                cfg.eps,
                cfg.max_corrector_iter,
            )?;
            Ok((tx, txi, corrected))
        });
        let (tx, txi, (x_new, xi_new)) = match step {
            Ok(s) => s,
            Err(e) => {
                if halvings >= cfg.max_halvings {
                    log::warn!("corrector failed at xi = {xi_k:.6} with sigma = {sigma:.3e}: {e}");
                    trace.termination = Termination::CorrectorFailure;
                    break;
                }
                sigma /= 2.0;
                halvings += 1;
                trace.retries += 1;
                continue;
            }
        };

        let progress = (&x_new - &x_k).dot(&tx) + (xi_new - xi_k) * txi;
        if progress <= 0.0 {
            trace.regressions += 1;
            if halvings >= cfg.max_halvings {
                trace.termination = Termination::CorrectorFailure;
                break;
            }
            log::debug!("corrector moved backwards at xi = {xi_k:.6}; halving sigma");
            sigma /= 2.0;
            halvings += 1;
            continue;
        }

        let new_sign = determinant_sign(&sys.jacobian(&x_new, xi_new)?.0);
        if xi_new <= xi_k || new_sign != sign {
            if refinements < cfg.fold_refinements {
                refinements += 1;
                sigma /= 2.0;
                continue;
            }
            trace.beyond_fold = Some((x_new, xi_new));
            trace.termination = Termination::FoldDetected;
            break;
        }

        sign = new_sign;
        trace.points.push((x_new, xi_new));
        accepted += 1;
        halvings = 0;
        if refinements == 0 {
            sigma = (sigma * 2.0).min(cfg.sigma);
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub step: usize,
    pub point: OperatingPoint,
    /// Infinity norm of the normalized power-flow residual.
    pub residual: f64,
    pub vsi: Option<VsiResult>,
    pub singular_values: Option<SingularValues>,
}

impl Sample {
    pub fn xi(&self) -> f64 {
        self.point.xi
    }
}

#[derive(Clone, Debug)]
pub struct CpfTrace {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub beyond_fold: Option<OperatingPoint>,
    pub regressions: usize,
    pub retries: usize,
}

impl CpfTrace {
    /// Largest `xi` among the accepted samples.
    pub fn xi_max(&self) -> f64 {
        self.samples.iter().map(Sample::xi).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sample with the largest `xi`.
    pub fn last_before_fold(&self) -> Option<&Sample> {
        self.samples.iter().max_by(|a, b| a.xi().total_cmp(&b.xi()))
    }
}

/// Solves the base case at `cfg.xi_start` from the flat start and traces the
/// nose curve up to the fold.
pub fn run_cpf(sys: &PowerFlowSystem, cfg: &CpfConfig) -> Result<CpfTrace> {
    cfg.check()?;
    let base = sys
        .solve(cfg.xi_start, None, cfg.eps, cfg.max_corrector_iter)
        .map_err(|e| Error::BaseCaseDiverged { xi: cfg.xi_start, source: Box::new(e) })?;
    let branch = trace_branch(sys, base.state, cfg.xi_start, cfg)?;
    log::info!(
        "continuation finished after {} samples ({:?}), {} regressions, {} retries",
        branch.points.len(),
        branch.termination,
        branch.regressions,
        branch.retries
    );
    let samples = branch
        .points
        .iter()
        .enumerate()
        .map(|(step, (x, xi))| sample(sys, cfg, step, x, *xi))
        .collect();
    let trace = CpfTrace {
        samples,
        termination: branch.termination,
        beyond_fold: branch.beyond_fold.map(|(x, xi)| sys.operating_point(&x, xi)),
        regressions: branch.regressions,
        retries: branch.retries,
    };
    if trace.termination == Termination::StepLimit {
        return Err(Error::StepLimitReached(Box::new(trace)));
    }
    Ok(trace)
}

fn sample(sys: &PowerFlowSystem, cfg: &CpfConfig, step: usize, x: &DVector<f64>, xi: f64) -> Sample {
    let point = sys.operating_point(x, xi);
    let vsi = if cfg.record_vsi {
        sys.vsi(&point)
            .map_err(|e| log::warn!("index not evaluated at xi = {xi:.6}: {e}"))
            .ok()
    } else {
        None
    };
    let singular_values = cfg.record_svd.then(|| jacobian_svd(&sys.jacobian(x, xi).dx));
    Sample { step, residual: inf_norm(&sys.residual(x, xi)), point, vsi, singular_values }
}

#[cfg(test)]
#[allow(clippy::type_complexity)]
mod tests {
    use super::*;

    /// `f(x, xi) = x - c(xi)` for a scalar function `c`.
    struct Scalar<F, D>(F, D);

    impl<F: Fn(f64, f64) -> f64, D: Fn(f64, f64) -> (f64, f64)> ParametricSystem for Scalar<F, D> {
        fn dimension(&self) -> usize {
            1
        }
        fn residual(&self, x: &DVector<f64>, xi: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_element(1, (self.0)(x[0], xi)))
        }
        fn jacobian(&self, x: &DVector<f64>, xi: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
            let (dx, dxi) = (self.1)(x[0], xi);
            Ok((DMatrix::from_element(1, 1, dx), DVector::from_element(1, dxi)))
        }
    }

    fn identity_line() -> Scalar<impl Fn(f64, f64) -> f64, impl Fn(f64, f64) -> (f64, f64)> {
        Scalar(|x, xi| x - xi, |_, _| (1.0, -1.0))
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn predictor_on_identity_line() {
        let (x, xi) = tangent_predict(&identity_line(), &v(0.0), 0.0, 0.1).unwrap();
        let h = 0.1 / 2f64.sqrt();
        assert!((x[0] - h).abs() < 1e-15 && (xi - h).abs() < 1e-15);
    }

    #[test]
    fn predictor_without_parameter_dependence() {
        let sys = Scalar(|x, _| x - 3.0, |_, _| (1.0, 0.0));
        let (x, xi) = tangent_predict(&sys, &v(3.0), 1.0, 0.25).unwrap();
        assert_eq!((x[0], xi), (3.0, 1.25));
    }

    #[test]
    fn corrector_on_identity_line() {
        let sys = identity_line();
        let (x, xi) = arclength_correct(&sys, (&v(1.0), 0.2), (&v(0.0), 0.0), 1.0, 1e-12, 30).unwrap();
        let h = 0.5f64.sqrt();
        assert!((x[0] - h).abs() < 1e-12 && (xi - h).abs() < 1e-12);
        // already on both the curve and the sphere
        let (x2, xi2) = arclength_correct(&sys, (&x, xi), (&v(0.0), 0.0), 1.0, 1e-12, 30).unwrap();
        assert_eq!((x2[0], xi2), (x[0], xi));
    }

    #[test]
    fn scalar_fold_is_located() {
        // x^2 + xi - 1 = 0 folds at xi = 1 (x = 0) coming from x = 1, xi = 0.
        let sys = Scalar(|x, xi| x * x + xi - 1.0, |x, _| (2.0 * x, 1.0));
        let cfg = CpfConfig { sigma: 0.1, ..CpfConfig::default() };
        let trace = trace_branch(&sys, v(1.0), 0.0, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::FoldDetected);
        let xi_max = trace.points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert!((xi_max - 1.0).abs() < 1e-3, "{xi_max}");
        assert!(trace.points.windows(2).all(|w| w[1].1 > w[0].1));
        let (xb, xib) = trace.beyond_fold.unwrap();
        assert!(xb[0] < 0.0 || xib < xi_max);
    }

    #[test]
    fn parameter_free_system_hits_step_limit() {
        let sys = Scalar(|x, _| x - 3.0, |_, _| (1.0, 0.0));
        let cfg = CpfConfig { max_steps: 20, ..CpfConfig::default() };
        let trace = trace_branch(&sys, v(3.0), 1.0, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::StepLimit);
        assert_eq!(trace.points.len(), 21);
        assert!((trace.points.last().unwrap().1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trajectory_sets_loading_factors() {
        use crate::node_models::{ResourcePhase, ZipCoefficients};
        let ph = ResourcePhase { p0: -1.0, q0: 0.0, zip: ZipCoefficients::CONSTANT_POWER, lambda: 0.3 };
        let load = ResourceModel::new(1, ResourceKind::Load, 1.0, vec![ph]).unwrap();
        let comp = ResourceModel::new(2, ResourceKind::Compensator, 1.0, vec![ph]).unwrap();
        for xi in [0.0, 1.0, 1.759] {
            let out = load_trajectory(&[load.clone(), comp.clone()], xi);
            assert_eq!(out[0].phases[0].lambda, xi);
            assert_eq!(out[1].phases[0].lambda, 1.0);
        }
    }
}
