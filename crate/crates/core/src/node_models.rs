//! Thévenin equivalents for slack nodes and ZIP polynomial models for resources.
//!
//! Powers are injections: loads carry negative reference powers, compensators
//! positive ones.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::NodeId;
use crate::linalg::{self, CMatrix, CVector};

/// Voltage source `v_te` behind the compound impedance `z_te`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackModel {
    pub node: NodeId,
    pub v_te: CVector,
    pub z_te: CMatrix,
}

impl SlackModel {
    /// Balanced positive-sequence source of the given line-to-line magnitude
    /// behind a diagonal impedance derived from the short-circuit power.
    pub fn from_short_circuit(node: NodeId, phases: usize, v_ll: f64, s_sc: f64, r_over_x: f64) -> Self {
        let z_abs = v_ll * v_ll / s_sc;
        let x = z_abs / (1.0 + r_over_x * r_over_x).sqrt();
        let z = Complex64::new(r_over_x * x, x);
        Self {
            node,
            v_te: positive_sequence(phases, v_ll / 3f64.sqrt()),
            z_te: CMatrix::from_diagonal_element(phases, phases, z),
        }
    }
}

/// `magnitude * [1∠0, 1∠-2π/P, 1∠-4π/P, ...]`.
pub fn positive_sequence(phases: usize, magnitude: f64) -> CVector {
    CVector::from_fn(phases, |p, _| Complex64::from_polar(magnitude, -2.0 * PI * p as f64 / phases as f64))
}

/// Returns `(Y_TE, V_TE)` with `Y_TE = Z_TE^-1`.
pub fn slack_interface(model: &SlackModel) -> Result<(CMatrix, CVector)> {
    let n = model.z_te.nrows();
    if model.z_te.ncols() != n || model.v_te.len() != n {
        return Err(Error::InvalidModel(format!("slack {} has inconsistent dimensions", model.node)));
    }
    let y = linalg::checked_inverse(&model.z_te).ok_or(Error::SingularThevenin { node: model.node })?;
    Ok((y, model.v_te.clone()))
}

const ZIP_SUM_TOL: f64 = 1e-9;

/// Normalized coefficients of one quadratic polynomial, `alpha + beta + gamma = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipTriple {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl ZipTriple {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let sum = alpha + beta + gamma;
        if !sum.is_finite() || (sum - 1.0).abs() > ZIP_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "ZIP coefficients ({alpha}, {beta}, {gamma}) do not sum to 1"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Rescales a triple whose printed coefficients miss the closure by rounding
    /// (at most `max_deviation`) so that it sums to 1.
    pub fn normalized(alpha: f64, beta: f64, gamma: f64, max_deviation: f64) -> Result<Self> {
        let sum = alpha + beta + gamma;
        if !sum.is_finite() || (sum - 1.0).abs() > max_deviation {
            return Err(Error::InvalidModel(format!(
                "ZIP coefficients ({alpha}, {beta}, {gamma}) sum to {sum}, too far from 1 to normalize"
            )));
        }
        Ok(Self { alpha: alpha / sum, beta: beta / sum, gamma: gamma / sum })
    }

    pub const CONSTANT_POWER: ZipTriple = ZipTriple { alpha: 0.0, beta: 0.0, gamma: 1.0 };
    pub const CONSTANT_CURRENT: ZipTriple = ZipTriple { alpha: 0.0, beta: 1.0, gamma: 0.0 };
    pub const CONSTANT_IMPEDANCE: ZipTriple = ZipTriple { alpha: 1.0, beta: 0.0, gamma: 0.0 };

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn eval(&self, u: f64) -> f64 {
        self.alpha * u * u + self.beta * u + self.gamma
    }

    fn derivative(&self, u: f64) -> f64 {
        2.0 * self.alpha * u + self.beta
    }
}

/// Active and reactive coefficient triples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipCoefficients {
    pub active: ZipTriple,
    pub reactive: ZipTriple,
}

impl ZipCoefficients {
    pub const CONSTANT_POWER: ZipCoefficients =
        ZipCoefficients { active: ZipTriple::CONSTANT_POWER, reactive: ZipTriple::CONSTANT_POWER };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Load,
    Compensator,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResourcePhase {
    /// Reference active power in W (negative = absorption).
    pub p0: f64,
    /// Reference reactive power in var.
    pub q0: f64,
    pub zip: ZipCoefficients,
    /// Loading factor.
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResourceModel {
    pub node: NodeId,
    pub kind: ResourceKind,
    /// Reference phase-to-ground voltage magnitude in volts.
    pub v0: f64,
    pub phases: Vec<ResourcePhase>,
}

impl ResourceModel {
    pub fn new(node: NodeId, kind: ResourceKind, v0: f64, phases: Vec<ResourcePhase>) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::InvalidModel(format!("resource {node}: reference voltage must be positive")));
        }
        for ph in &phases {
            if !(ph.lambda >= 0.0 && ph.lambda.is_finite()) {
                return Err(Error::InvalidModel(format!("resource {node}: loading factor must be finite and >= 0")));
            }
            if !(ph.p0.is_finite() && ph.q0.is_finite()) {
                return Err(Error::InvalidModel(format!("resource {node}: reference powers must be finite")));
            }
        }
        Ok(Self { node, kind, v0, phases })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for ph in &mut out.phases {
            ph.lambda = lambda;
        }
        out
    }

    fn phase(&self, phase: usize) -> &ResourcePhase {
        &self.phases[phase]
    }
}

/// Polynomial power at unit loading factor for magnitude `e` (volts).
pub(crate) fn unit_power(ph: &ResourcePhase, v0: f64, e: f64) -> Complex64 {
    let u = e / v0;
    Complex64::new(ph.p0 * ph.zip.active.eval(u), ph.q0 * ph.zip.reactive.eval(u))
}

/// Derivative of [`unit_power`] with respect to the magnitude `e`.
pub(crate) fn unit_power_slope(ph: &ResourcePhase, v0: f64, e: f64) -> Complex64 {
    let u = e / v0;
    Complex64::new(ph.p0 * ph.zip.active.derivative(u), ph.q0 * ph.zip.reactive.derivative(u)) / v0
}

/// Injected complex power of one phase at voltage `v`.
pub fn pm_power_at(model: &ResourceModel, phase: usize, v: Complex64) -> Complex64 {
    let ph = model.phase(phase);
    unit_power(ph, model.v0, v.norm()) * ph.lambda
}

/// Constant-impedance, constant-current and constant-power terms of a phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipDecomposition {
    pub y_pm: Complex64,
    pub i_pm: Complex64,
    pub s_pm: Complex64,
}

impl ZipDecomposition {
    /// `-conj(y)|v|^2 + v conj(i) + s`.
    pub fn power_at(&self, v: Complex64) -> Complex64 {
        -self.y_pm.conj() * v.norm_sqr() + v * self.i_pm.conj() + self.s_pm
    }

    /// `-y v + i + conj(s)/conj(v)`.
    pub fn current_at(&self, v: Complex64) -> Complex64 {
        -self.y_pm * v + self.i_pm + self.s_pm.conj() / v.conj()
    }
}

/// Splits the polynomial at `v` into its Z, I and P terms. The I term is aligned
/// with `v`, so the decomposition reproduces the polynomial exactly at `v`.
pub fn pm_zip_at(model: &ResourceModel, phase: usize, v: Complex64) -> Result<ZipDecomposition> {
    let e = v.norm();
    if e == 0.0 {
        return Err(Error::ZeroVoltage { node: model.node, phase });
    }
    let ph = model.phase(phase);
    let (a, r) = (&ph.zip.active, &ph.zip.reactive);
    let k_z = Complex64::new(a.alpha * ph.p0, r.alpha * ph.q0) * ph.lambda;
    let k_i = Complex64::new(a.beta * ph.p0, r.beta * ph.q0) * ph.lambda;
    let k_p = Complex64::new(a.gamma * ph.p0, r.gamma * ph.q0) * ph.lambda;
    let v0 = model.v0;
    Ok(ZipDecomposition {
        y_pm: -k_z.conj() / (v0 * v0),
        i_pm: k_i.conj() * (v / e) / v0,
        s_pm: k_p,
    })
}

/// Current injected by one phase at voltage `v`.
pub fn injected_current(model: &ResourceModel, phase: usize, v: Complex64) -> Result<Complex64> {
    Ok(pm_zip_at(model, phase, v)?.current_at(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load_zip() -> ZipCoefficients {
        ZipCoefficients {
            active: ZipTriple::new(-0.067, 0.251, 0.816).unwrap(),
            reactive: ZipTriple::new(1.064, -0.088, 0.024).unwrap(),
        }
    }

    fn model(zip: ZipCoefficients, p0: f64, q0: f64, lambda: f64) -> ResourceModel {
        ResourceModel::new(9, ResourceKind::Load, 14_400.0, vec![ResourcePhase { p0, q0, zip, lambda }]).unwrap()
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn nominal_voltage_gives_reference_power() {
        let m = model(load_zip(), -60e3, -30e3, 1.0);
        let s = pm_power_at(&m, 0, Complex64::new(14_400.0, 0.0));
        assert!(rel(s, Complex64::new(-60e3, -30e3)) < 1e-12);
    }

    #[test]
    fn zero_lambda_gives_zero_power_and_current() {
        let m = model(load_zip(), -60e3, -30e3, 0.0);
        let v = Complex64::from_polar(13_000.0, 0.3);
        assert_eq!(pm_power_at(&m, 0, v), Complex64::new(0.0, 0.0));
        assert_eq!(injected_current(&m, 0, v).unwrap().norm(), 0.0);
    }

    #[test]
    fn load_polynomial_at_ninety_percent() {
        let (p0, q0, lambda) = (-135e3, -80e3, 1.3);
        let m = model(load_zip(), p0, q0, lambda);
        let s = pm_power_at(&m, 0, Complex64::from_polar(0.9 * 14_400.0, -0.4));
        let p = lambda * p0 * (-0.067 * 0.81 + 0.251 * 0.9 + 0.816);
        let q = lambda * q0 * (1.064 * 0.81 - 0.088 * 0.9 + 0.024);
        assert!((s.re - p).abs() < 1e-9 * p.abs());
        assert!((s.im - q).abs() < 1e-9 * q.abs());
    }

    #[test]
    fn pure_constant_power_decomposition() {
        let m = model(ZipCoefficients::CONSTANT_POWER, 0.0, 100e3, 1.0);
        let d = pm_zip_at(&m, 0, Complex64::from_polar(14_000.0, 0.1)).unwrap();
        assert_eq!(d.y_pm, Complex64::new(0.0, 0.0));
        assert_eq!(d.i_pm, Complex64::new(0.0, 0.0));
        assert_eq!(d.s_pm, Complex64::new(0.0, 100e3));
    }

    #[test]
    fn pure_constant_impedance_decomposition() {
        let zip = ZipCoefficients { active: ZipTriple::CONSTANT_IMPEDANCE, reactive: ZipTriple::CONSTANT_IMPEDANCE };
        let (p0, q0, lambda) = (-50e3, -20e3, 1.5);
        let m = model(zip, p0, q0, lambda);
        let v = Complex64::from_polar(12_000.0, 0.2);
        let d = pm_zip_at(&m, 0, v).unwrap();
        assert_eq!(d.s_pm, Complex64::new(0.0, 0.0));
        assert_eq!(d.i_pm, Complex64::new(0.0, 0.0));
        let expected = Complex64::new(p0, q0) * lambda * v.norm_sqr() / (14_400.0f64 * 14_400.0);
        assert!(rel(-d.y_pm.conj() * v.norm_sqr(), expected) < 1e-12);
    }

    #[test]
    fn constant_power_current_definition() {
        let m = model(ZipCoefficients::CONSTANT_POWER, -100.0, -50.0, 1.0);
        let v = Complex64::new(14_400.0, 0.0);
        let i = injected_current(&m, 0, v).unwrap();
        assert!(rel(i, (Complex64::new(-100.0, -50.0) / v).conj()) < 1e-15);
    }

    #[test]
    fn benchmark_node_nine_phase_a() {
        let m = model(load_zip(), -60e3, -30e3, 1.0);
        let v = Complex64::new(14_400.0, 0.0);
        let s = pm_power_at(&m, 0, v);
        assert!(rel(s, Complex64::new(-60e3, -30e3)) < 1e-12);
        let i = injected_current(&m, 0, v).unwrap();
        assert!(rel(i, (s / v).conj()) < 1e-12);
    }

    #[test]
    fn zero_voltage_rejected() {
        let m = model(load_zip(), -1.0, -1.0, 1.0);
        assert!(matches!(pm_zip_at(&m, 0, Complex64::new(0.0, 0.0)), Err(Error::ZeroVoltage { .. })));
        assert!(injected_current(&m, 0, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn closure_enforced() {
        assert!(ZipTriple::new(0.5, 0.5, 0.1).is_err());
        assert!(ZipTriple::new(0.0, 0.0, 0.0).is_err());
        assert!(ZipTriple::new(0.2, 0.3, 0.5 + 5e-10).is_ok());
        assert!(ZipTriple::new(1.064, -0.088, 0.025).is_err());
        let t = ZipTriple::normalized(1.064, -0.088, 0.025, 5e-3).unwrap();
        assert!((t.alpha() + t.beta() + t.gamma() - 1.0).abs() < 1e-15);
        assert!((t.alpha() - 1.064 / 1.001).abs() < 1e-15);
        assert!(ZipTriple::normalized(0.5, 0.5, 0.1, 5e-3).is_err());
    }

    #[test]
    fn resource_validation() {
        let ph = ResourcePhase { p0: 1.0, q0: 1.0, zip: load_zip(), lambda: -1.0 };
        assert!(ResourceModel::new(1, ResourceKind::Load, 1.0, vec![ph]).is_err());
        let ph = ResourcePhase { lambda: 1.0, ..ph };
        assert!(ResourceModel::new(1, ResourceKind::Load, 0.0, vec![ph]).is_err());
    }

    #[test]
    fn slack_interface_examples() {
        let x = 3.0;
        let s = SlackModel {
            node: 1,
            v_te: positive_sequence(3, 1.0),
            z_te: CMatrix::from_diagonal_element(3, 3, Complex64::new(0.0, x)),
        };
        let (y, _) = slack_interface(&s).unwrap();
        for i in 0..3 {
            assert!((y[(i, i)] - Complex64::new(0.0, -1.0 / x)).norm() < 1e-15);
        }

        let bench = SlackModel::from_short_circuit(1, 3, 69_000.0, 100e6, 0.1);
        let z = bench.z_te[(0, 0)];
        assert!((z.norm() - 47.61).abs() < 1e-9);
        assert!((z.re - 4.737).abs() < 1e-3);
        assert!((z.im - 47.37).abs() < 1e-2);
        assert!((z.re / z.im - 0.1).abs() < 1e-14);
        let v = &bench.v_te;
        let mag = 69_000.0 / 3f64.sqrt();
        assert!((v[0] - Complex64::new(mag, 0.0)).norm() < 1e-9);
        assert!((v[1] - Complex64::from_polar(mag, -2.0 * PI / 3.0)).norm() < 1e-9);
        assert!((v[2] - Complex64::from_polar(mag, 2.0 * PI / 3.0)).norm() < 1e-9);

        let singular = SlackModel { z_te: CMatrix::zeros(3, 3), ..bench };
        assert!(matches!(slack_interface(&singular), Err(Error::SingularThevenin { node: 1 })));
    }

    proptest! {
        #[test]
        fn reconstruction_and_duality(
            a in -1.5f64..1.5, b in -1.5f64..1.5,
            a2 in -1.5f64..1.5, b2 in -1.5f64..1.5,
            p0 in -2e5f64..2e5, q0 in -2e5f64..2e5,
            lambda in 0.0f64..3.0,
            u in 0.5f64..1.5, angle in -3.1f64..3.1,
        ) {
            let zip = ZipCoefficients {
                active: ZipTriple::new(a, b, 1.0 - a - b).unwrap(),
                reactive: ZipTriple::new(a2, b2, 1.0 - a2 - b2).unwrap(),
            };
            let m = model(zip, p0, q0, lambda);
            let v = Complex64::from_polar(u * m.v0, angle);
            let s = pm_power_at(&m, 0, v);
            let d = pm_zip_at(&m, 0, v).unwrap();
            let scale = s.norm().max(1e-300);
            prop_assert!((d.power_at(v) - s).norm() <= 1e-12 * scale.max(p0.abs().max(q0.abs()) * lambda));
            let i = injected_current(&m, 0, v).unwrap();
            prop_assert!((v * i.conj() - s).norm() <= 1e-12 * scale.max(p0.abs().max(q0.abs()) * lambda));
        }

        #[test]
        fn linear_in_lambda(lambda in 0.0f64..5.0, u in 0.5f64..1.5) {
            let base = model(load_zip(), -80e3, -40e3, 1.0);
            let scaled = base.with_lambda(lambda);
            let v = Complex64::from_polar(u * base.v0, 0.7);
            let expected = pm_power_at(&base, 0, v) * lambda;
            prop_assert!((pm_power_at(&scaled, 0, v) - expected).norm() <= 1e-12 * expected.norm().max(1.0));
        }
    }
}
