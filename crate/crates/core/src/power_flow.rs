//! Unbalanced polyphase power flow in polar coordinates.
//!
//! Unknowns are the voltage magnitudes and angles of every grid node (slack
//! terminals included); the internal source voltages of the Thévenin
//! equivalents are the fixed boundary. Magnitudes are normalized by each node's
//! nominal phase-to-ground voltage and the mismatch by [`S_BASE`].

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::continuation::{load_trajectory, ParametricSystem};
use crate::error::{Error, Result};
use crate::grid::{GridModel, NodeId, NodeKey, NodeRole, PhaseIndex};
use crate::linalg::{CMatrix, CVector};
use crate::newton::{newton_solve, NewtonProblem, NewtonReport};
use crate::node_models::{unit_power, unit_power_slope, ResourceModel, SlackModel};
use crate::vsi::{build_augmented, StabilityIndex, VsiResult};

/// Power base of the normalized mismatch, in VA.
pub const S_BASE: f64 = 1e6;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Node voltages in polar form (volts, radians) at continuation parameter `xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub magnitude: BTreeMap<PhaseIndex, f64>,
    pub angle: BTreeMap<PhaseIndex, f64>,
    pub xi: f64,
}

impl OperatingPoint {
    pub fn from_phasors(phasors: impl IntoIterator<Item = (PhaseIndex, Complex64)>, xi: f64) -> Self {
        let mut magnitude = BTreeMap::new();
        let mut angle = BTreeMap::new();
        for (idx, v) in phasors {
            magnitude.insert(idx, v.norm());
            angle.insert(idx, wrap_angle(v.arg()));
        }
        Self { magnitude, angle, xi }
    }

    pub fn from_polar(entries: impl IntoIterator<Item = (PhaseIndex, f64, f64)>, xi: f64) -> Self {
        let mut magnitude = BTreeMap::new();
        let mut angle = BTreeMap::new();
        for (idx, e, theta) in entries {
            magnitude.insert(idx, e);
            angle.insert(idx, wrap_angle(theta));
        }
        Self { magnitude, angle, xi }
    }

    pub fn voltage(&self, idx: PhaseIndex) -> Option<Complex64> {
        Some(Complex64::from_polar(*self.magnitude.get(&idx)?, *self.angle.get(&idx)?))
    }

    pub fn entries(&self) -> impl Iterator<Item = (PhaseIndex, f64, f64)> + '_ {
        self.magnitude.iter().map(|(idx, &e)| (*idx, e, self.angle[idx]))
    }
}

/// Power mismatch in W and var per node-phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub dp: BTreeMap<PhaseIndex, f64>,
    pub dq: BTreeMap<PhaseIndex, f64>,
}

impl Mismatch {
    pub fn inf_norm(&self) -> f64 {
        self.dp.values().chain(self.dq.values()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `D_x f` and `D_xi f` of the normalized mismatch.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub dx: DMatrix<f64>,
    pub dxi: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularValues {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn jacobian_svd(j: &DMatrix<f64>) -> SingularValues {
    let sv = j.clone().singular_values();
    if sv.is_empty() {
        return SingularValues { min: 0.0, mean: 0.0, max: 0.0 };
    }
    SingularValues { min: sv.min(), mean: sv.mean(), max: sv.max() }
}

/// Series current of one branch at both terminals (A), oriented into the series element.
#[derive(Clone, Debug)]
pub struct BranchCurrent {
    pub from: NodeId,
    pub to: NodeId,
    pub at_from: CVector,
    pub at_to: CVector,
}

#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    pub point: OperatingPoint,
    pub state: DVector<f64>,
    pub report: NewtonReport,
}

/// Resource polynomial attached to one unknown node-phase.
#[derive(Clone, Copy, Debug)]
struct Slot {
    model: usize,
    phase: usize,
}

#[derive(Clone, Debug)]
pub struct PowerFlowSystem {
    grid: GridModel,
    slacks: Vec<SlackModel>,
    resources: Vec<ResourceModel>,
    /// Unknown nodes in grid order.
    nodes: Vec<NodeId>,
    y_uu: CMatrix,
    y_ui: CMatrix,
    v_source: CVector,
    e_base: Vec<f64>,
    slots: Vec<Option<Slot>>,
    index: StabilityIndex,
}

impl PowerFlowSystem {
    pub fn new(grid: &GridModel, slacks: &[SlackModel], resources: &[ResourceModel]) -> Result<Self> {
        let p = grid.phases();
        let aug = build_augmented(grid, slacks)?;
        let unknown: Vec<NodeKey> = grid.keys();
        let y_uu = aug.y_prime.select(&unknown, &unknown)?.into_matrix();
        let y_ui = aug.y_prime.select(&unknown, &aug.internal)?.into_matrix();
        let mut v_source = CVector::zeros(aug.internal.len() * p);
        for (k, key) in aug.internal.iter().enumerate() {
            let NodeKey::Source(s) = key else { unreachable!("internal nodes are sources") };
            let model = slacks.iter().find(|m| m.node == *s).expect("checked by build_augmented");
            v_source.rows_mut(k * p, p).copy_from(&model.v_te);
        }

        let mut by_node: HashMap<NodeId, usize> = HashMap::new();
        for (i, r) in resources.iter().enumerate() {
            match grid.node(r.node).map(|n| n.role) {
                Some(NodeRole::Resource) => {}
                _ => return Err(Error::InvalidModel(format!("resource model given for non-resource node {}", r.node))),
            }
            if r.phases.len() != p {
                return Err(Error::InvalidModel(format!("resource {} has wrong phase count", r.node)));
            }
            if by_node.insert(r.node, i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate resource model for node {}", r.node)));
            }
        }
        let nodes: Vec<NodeId> = grid.nodes().iter().map(|n| n.id).collect();
        let mut e_base = Vec::with_capacity(nodes.len() * p);
        let mut slots = Vec::with_capacity(nodes.len() * p);
        for node in grid.nodes() {
            let model = by_node.get(&node.id).copied();
            if node.role == NodeRole::Resource && model.is_none() {
                return Err(Error::InvalidModel(format!("resource node {} has no polynomial model", node.id)));
            }
            for phase in 0..p {
                e_base.push(node.v_nominal);
                slots.push(model.map(|model| Slot { model, phase }));
            }
        }
        let index = StabilityIndex::from_augmented(&aug, slacks)?;
        Ok(Self {
            grid: grid.clone(),
            slacks: slacks.to_vec(),
            resources: resources.to_vec(),
            nodes,
            y_uu,
            y_ui,
            v_source,
            e_base,
            slots,
            index,
        })
    }

    pub fn grid(&self) -> &GridModel {
        &self.grid
    }

    pub fn slacks(&self) -> &[SlackModel] {
        &self.slacks
    }

    pub fn resources(&self) -> &[ResourceModel] {
        &self.resources
    }

    /// Resource models with their loading factors set for parameter `xi`.
    pub fn resources_at(&self, xi: f64) -> Vec<ResourceModel> {
        load_trajectory(&self.resources, xi)
    }

    fn entries(&self) -> usize {
        self.e_base.len()
    }

    fn phase_index(&self, i: usize) -> PhaseIndex {
        let p = self.grid.phases();
        PhaseIndex::new(self.nodes[i / p], i % p)
    }

    /// Nominal magnitudes and angles `-2 pi p / P`.
    pub fn flat_start(&self) -> DVector<f64> {
        let n = self.entries();
        let p = self.grid.phases() as f64;
        DVector::from_fn(2 * n, |k, _| if k < n { 1.0 } else { -2.0 * PI * ((k - n) % self.grid.phases()) as f64 / p })
    }

    fn phasors(&self, x: &DVector<f64>) -> CVector {
        let n = self.entries();
        CVector::from_fn(n, |i, _| Complex64::from_polar(x[i] * self.e_base[i], x[n + i]))
    }

    /// Loading factor of slot `s` at parameter `xi` and its derivative in `xi`.
    fn lambda(&self, s: Slot, xi: f64) -> (f64, f64) {
        let model = &self.resources[s.model];
        match model.kind {
            crate::node_models::ResourceKind::Load => (xi, 1.0),
            crate::node_models::ResourceKind::Compensator => (1.0, 0.0),
        }
    }

    fn injected_currents(&self, v: &CVector) -> CVector {
        &self.y_uu * v + &self.y_ui * &self.v_source
    }

    /// Complex mismatch `V conj(Y'V) - S_model(V)` in VA.
    fn complex_mismatch(&self, v: &CVector, xi: f64) -> CVector {
        let i = self.injected_currents(v);
        CVector::from_fn(v.len(), |k, _| {
            let grid = v[k] * i[k].conj();
            let model = match self.slots[k] {
                Some(s) => {
                    let r = &self.resources[s.model];
                    unit_power(&r.phases[s.phase], r.v0, v[k].norm()) * self.lambda(s, xi).0
                }
                None => Complex64::new(0.0, 0.0),
            };
            grid - model
        })
    }

    pub fn dimension(&self) -> usize {
        2 * self.entries()
    }

    /// Normalized residual `[dP; dQ] / S_BASE`.
    pub fn residual(&self, x: &DVector<f64>, xi: f64) -> DVector<f64> {
        let n = self.entries();
        let ds = self.complex_mismatch(&self.phasors(x), xi);
        DVector::from_fn(2 * n, |k, _| if k < n { ds[k].re / S_BASE } else { ds[k - n].im / S_BASE })
    }

    /// Analytic `D_x f` and `D_xi f` of [`Self::residual`].
    pub fn jacobian(&self, x: &DVector<f64>, xi: f64) -> Jacobian {
        let n = self.entries();
        let v = self.phasors(x);
        let i = self.injected_currents(&v);
        let j = Complex64::new(0.0, 1.0);
        let mut dx = DMatrix::zeros(2 * n, 2 * n);
        let mut dxi = DVector::zeros(2 * n);
        for r in 0..n {
            for c in 0..n {
                let y = self.y_uu[(r, c)];
                let unit_c = v[c] / v[c].norm();
                // dS_r / d theta_c and dS_r / d|V_c|
                let mut d_theta = -j * v[r] * (y * v[c]).conj();
                let mut d_mag = v[r] * (y * unit_c).conj();
                if r == c {
                    d_theta += j * v[r] * i[r].conj();
                    d_mag += i[r].conj() * unit_c;
                }
                let d_e = d_mag * self.e_base[c];
                dx[(r, c)] = d_e.re / S_BASE;
                dx[(n + r, c)] = d_e.im / S_BASE;
                dx[(r, n + c)] = d_theta.re / S_BASE;
                dx[(n + r, n + c)] = d_theta.im / S_BASE;
            }
            if let Some(s) = self.slots[r] {
                let res = &self.resources[s.model];
                let ph = &res.phases[s.phase];
                let e = v[r].norm();
                let (lambda, dlambda) = self.lambda(s, xi);
                let slope = unit_power_slope(ph, res.v0, e) * lambda * self.e_base[r];
                dx[(r, r)] -= slope.re / S_BASE;
                dx[(n + r, r)] -= slope.im / S_BASE;
                let ds = unit_power(ph, res.v0, e) * dlambda;
                dxi[r] = -ds.re / S_BASE;
                dxi[n + r] = -ds.im / S_BASE;
            }
        }
        Jacobian { dx, dxi }
    }

    pub fn operating_point(&self, x: &DVector<f64>, xi: f64) -> OperatingPoint {
        let n = self.entries();
        OperatingPoint::from_polar((0..n).map(|k| (self.phase_index(k), x[k] * self.e_base[k], x[n + k])), xi)
    }

    /// Normalized state vector of an operating point covering every grid node-phase.
    pub fn state_from(&self, op: &OperatingPoint) -> Result<DVector<f64>> {
        let n = self.entries();
        let mut x = DVector::zeros(2 * n);
        for k in 0..n {
            let idx = self.phase_index(k);
            let (Some(&e), Some(&theta)) = (op.magnitude.get(&idx), op.angle.get(&idx)) else {
                return Err(Error::InvalidModel(format!("operating point lacks {idx}")));
            };
            x[k] = e / self.e_base[k];
            x[n + k] = theta;
        }
        Ok(x)
    }

    pub fn mismatch(&self, op: &OperatingPoint) -> Result<Mismatch> {
        let x = self.state_from(op)?;
        let ds = self.complex_mismatch(&self.phasors(&x), op.xi);
        let mut dp = BTreeMap::new();
        let mut dq = BTreeMap::new();
        for (k, s) in ds.iter().enumerate() {
            dp.insert(self.phase_index(k), s.re);
            dq.insert(self.phase_index(k), s.im);
        }
        Ok(Mismatch { dp, dq })
    }

    pub fn jacobian_at(&self, op: &OperatingPoint) -> Result<Jacobian> {
        Ok(self.jacobian(&self.state_from(op)?, op.xi))
    }

    /// Newton-Raphson solve at fixed `xi`, from `x0` or the flat start.
    pub fn solve(&self, xi: f64, x0: Option<&DVector<f64>>, eps: f64, max_iter: usize) -> Result<PowerFlowSolution> {
        let start = x0.cloned().unwrap_or_else(|| self.flat_start());
        let report = newton_solve(&FixedParameter { system: self, xi }, &start, eps, max_iter)?;
        Ok(PowerFlowSolution { point: self.operating_point(&report.x, xi), state: report.x.clone(), report })
    }

    /// Solves at `xi` by starting from the flat start at `min(xi, 1)` and raising
    /// the loading in warm-started increments, halved whenever Newton fails.
    pub fn solve_by_loading(&self, xi: f64, eps: f64, max_iter: usize) -> Result<PowerFlowSolution> {
        let mut current = self.solve(xi.min(1.0), None, eps, max_iter)?;
        let mut step = (xi - current.point.xi) / 4.0;
        while current.point.xi < xi {
            let target = (current.point.xi + step).min(xi);
            match self.solve(target, Some(&current.state), eps, max_iter) {
                Ok(next) => current = next,
                Err(e) => {
                    step /= 2.0;
                    if step < 1e-9 * xi.max(1.0) {
                        log::debug!("loading stalled at xi = {}", current.point.xi);
                        return Err(e);
                    }
                }
            }
        }
        Ok(current)
    }

    /// Series currents of every branch, in branch order.
    pub fn branch_currents(&self, op: &OperatingPoint) -> Result<Vec<BranchCurrent>> {
        let p = self.grid.phases();
        let node_voltages = |id: NodeId| -> Result<CVector> {
            let mut v = CVector::zeros(p);
            for q in 0..p {
                v[q] = op
                    .voltage(PhaseIndex::new(id, q))
                    .ok_or_else(|| Error::InvalidModel(format!("operating point lacks node {id}")))?;
            }
            Ok(v)
        };
        self.grid
            .branches()
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let (at_from, at_to) =
                    self.grid.branch_terminal_currents(k, &node_voltages(b.from)?, &node_voltages(b.to)?)?;
                Ok(BranchCurrent { from: b.from, to: b.to, at_from, at_to })
            })
            .collect()
    }

    /// Voltage stability index at `op`, with loading factors taken from `op.xi`.
    pub fn vsi(&self, op: &OperatingPoint) -> Result<VsiResult> {
        self.index.evaluate(&self.resources_at(op.xi), op)
    }

    pub fn stability_index(&self) -> &StabilityIndex {
        &self.index
    }
}

impl ParametricSystem for PowerFlowSystem {
    fn dimension(&self) -> usize {
        PowerFlowSystem::dimension(self)
    }

    fn residual(&self, x: &DVector<f64>, xi: f64) -> Result<DVector<f64>> {
        Ok(PowerFlowSystem::residual(self, x, xi))
    }

    fn jacobian(&self, x: &DVector<f64>, xi: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let j = PowerFlowSystem::jacobian(self, x, xi);
        Ok((j.dx, j.dxi))
    }
}

struct FixedParameter<'a> {
    system: &'a PowerFlowSystem,
    xi: f64,
}

impl NewtonProblem for FixedParameter<'_> {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.system.residual(x, self.xi))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.system.jacobian(x, self.xi).dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Node};
    use crate::node_models::{ResourceKind, ResourcePhase, ZipCoefficients};

    fn scalar(z: Complex64) -> CMatrix {
        CMatrix::from_element(1, 1, z)
    }

    fn two_bus(p0: f64, kind: ResourceKind) -> PowerFlowSystem {
        let grid = GridModel::new(
            1,
            vec![
                Node { id: 1, role: NodeRole::Slack, v_nominal: 1000.0 },
                Node { id: 2, role: NodeRole::Resource, v_nominal: 1000.0 },
            ],
            vec![Branch::line(1, 2, scalar(Complex64::new(0.5, 0.1)))],
            vec![],
        )
        .unwrap();
        let slack = SlackModel {
            node: 1,
            v_te: CVector::from_element(1, Complex64::new(1000.0, 0.0)),
            z_te: scalar(Complex64::new(0.5, 0.2)),
        };
        let res = ResourceModel::new(
            2,
            kind,
            1000.0,
            vec![ResourcePhase { p0, q0: 0.3 * p0, zip: ZipCoefficients::CONSTANT_POWER, lambda: 1.0 }],
        )
        .unwrap();
        PowerFlowSystem::new(&grid, &[slack], &[res]).unwrap()
    }

    fn fd_jacobian(sys: &PowerFlowSystem, x: &DVector<f64>, xi: f64) -> DMatrix<f64> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            j.set_column(c, &((sys.residual(&xp, xi) - sys.residual(&xm, xi)) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = two_bus(-150e3, ResourceKind::Load);
        let x = DVector::from_vec(vec![0.98, 0.93, -0.01, -0.07]);
        let j = sys.jacobian(&x, 1.3);
        let fd = fd_jacobian(&sys, &x, 1.3);
        assert!((&j.dx - &fd).norm() / fd.norm() < 1e-7);
        let h = 1e-6;
        let fxi = (sys.residual(&x, 1.3 + h) - sys.residual(&x, 1.3 - h)) / (2.0 * h);
        assert!((&j.dxi - fxi).norm() < 1e-7);
    }

    #[test]
    fn compensators_do_not_depend_on_xi() {
        let sys = two_bus(-150e3, ResourceKind::Compensator);
        let j = sys.jacobian(&sys.flat_start(), 1.0);
        assert!(j.dxi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn solve_and_certify() {
        let sys = two_bus(-150e3, ResourceKind::Load);
        let sol = sys.solve(1.0, None, 1e-10, 30).unwrap();
        let m = sys.mismatch(&sol.point).unwrap();
        assert!(m.inf_norm() <= 1e-10 * S_BASE);
        // warm start at the solution needs no correction
        let again = sys.solve(1.0, Some(&sol.state), 1e-10, 30).unwrap();
        assert_eq!(again.report.iterations, 0);
    }

    #[test]
    fn angle_gauge() {
        let sys = two_bus(-150e3, ResourceKind::Load);
        let x = DVector::from_vec(vec![0.98, 0.93, -0.01, -0.07]);
        let mut y = x.clone();
        y[3] += 2.0 * PI;
        let (a, b) = (sys.residual(&x, 1.0), sys.residual(&y, 1.0));
        assert!((&a - &b).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn singular_values_of_diagonal() {
        let s = jacobian_svd(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])));
        assert!((s.min - 1.0).abs() < 1e-14 && (s.mean - 2.0).abs() < 1e-14 && (s.max - 3.0).abs() < 1e-14);
        let s = jacobian_svd(&DMatrix::identity(4, 4));
        assert_eq!((s.min, s.mean, s.max), (1.0, 1.0, 1.0));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
