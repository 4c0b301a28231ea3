//! Generalized L-index for polyphase grids with Thévenin slacks and ZIP resources.
//!
//! The slack impedances are merged into the grid (augmented grid), slack and
//! zero-injection nodes are Kron-reduced away, and the hybrid parameters of the
//! reduced grid express every resource voltage through the source voltages and
//! the resource currents. Substituting the ZIP current model for each phase
//! gives one complex quadratic per node-phase,
//! `V = -a V + b + c / conj(V)`, whose solvability is measured by
//! `L = |1 - b / ((1 + a) V)|`.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    assemble_admittance, hybrid_partition, kron_reduce, BlockMatrix, GridModel, HybridPartition, NodeKey,
    NodeRole, PhaseIndex,
};
use crate::linalg::CVector;
use crate::node_models::{pm_zip_at, slack_interface, ResourceModel, SlackModel, ZipDecomposition};
use crate::power_flow::OperatingPoint;

/// Guard on `|1 + a|` below which the local index is not evaluated.
pub const DENOMINATOR_GUARD: f64 = 1e-9;

/// Grid extended by the internal source nodes of the Thévenin equivalents.
///
/// Node order is internal (`I`), slack (`S`), zero-injection (`Z`), resource (`R`).
#[derive(Clone, Debug)]
pub struct AugmentedGrid {
    pub y_prime: BlockMatrix,
    pub internal: Vec<NodeKey>,
    pub slack: Vec<NodeKey>,
    pub zero: Vec<NodeKey>,
    pub resource: Vec<NodeKey>,
}

impl AugmentedGrid {
    pub fn ordering(&self) -> Vec<NodeKey> {
        [&self.internal, &self.slack, &self.zero, &self.resource]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

pub fn build_augmented(grid: &GridModel, slacks: &[SlackModel]) -> Result<AugmentedGrid> {
    let slack_ids = grid.node_ids_with_role(NodeRole::Slack);
    if slack_ids.is_empty() {
        return Err(Error::InvalidModel("grid has no slack node".into()));
    }
    let mut by_node: HashMap<u32, &SlackModel> = HashMap::new();
    for s in slacks {
        if grid.node(s.node).map(|n| n.role) != Some(NodeRole::Slack) {
            return Err(Error::InvalidModel(format!("Thévenin model given for non-slack node {}", s.node)));
        }
        if by_node.insert(s.node, s).is_some() {
            return Err(Error::InvalidModel(format!("duplicate Thévenin model for node {}", s.node)));
        }
        if s.z_te.nrows() != grid.phases() {
            return Err(Error::InvalidModel(format!("slack {} has wrong phase count", s.node)));
        }
    }
    let y = assemble_admittance(grid)?;
    let node_keys = |role| grid.node_ids_with_role(role).into_iter().map(NodeKey::Node).collect::<Vec<_>>();
    let internal: Vec<NodeKey> = slack_ids.iter().map(|&s| NodeKey::Source(s)).collect();
    let slack = node_keys(NodeRole::Slack);
    let zero = node_keys(NodeRole::ZeroInjection);
    let resource = node_keys(NodeRole::Resource);

    let ordering: Vec<NodeKey> = internal.iter().chain(&slack).chain(&zero).chain(&resource).copied().collect();
    let grid_part: Vec<NodeKey> = ordering[internal.len()..].to_vec();
    let n_int = internal.len();
    let mut y_prime = BlockMatrix::zeros(ordering.clone(), ordering, grid.phases());
    let grid_block = y.select(&grid_part, &grid_part)?;
    for i in 0..grid_part.len() {
        for j in 0..grid_part.len() {
            let b = grid_block.block(grid_part[i], grid_part[j]).expect("node in ordering");
            y_prime.set_block_at(n_int + i, n_int + j, &b);
        }
    }
    for (k, &s) in slack_ids.iter().enumerate() {
        let model = by_node
            .get(&s)
            .ok_or_else(|| Error::InvalidModel(format!("slack node {s} has no Thévenin model")))?;
        let (y_te, _) = slack_interface(model)?;
        let neg = -&y_te;
        y_prime.add_block_at(k, k, &y_te);
        y_prime.add_block_at(k, n_int + k, &neg);
        y_prime.add_block_at(n_int + k, k, &neg);
        y_prime.add_block_at(n_int + k, n_int + k, &y_te);
    }
    Ok(AugmentedGrid { y_prime, internal, slack, zero, resource })
}

/// Eliminates `S ∪ Z` and returns the hybrid blocks with `M = R`:
/// `h_mcmc = Ĥ'_II`, `h_mcm = Ĥ'_IR`, `h_mmc = Ĥ'_RI`, `h_mm = Ĥ'_RR`.
pub fn reduce_augmented(aug: &AugmentedGrid) -> Result<HybridPartition> {
    if aug.resource.is_empty() {
        return Err(Error::InvalidModel("grid has no resource node".into()));
    }
    let eliminated: Vec<NodeKey> = aug.slack.iter().chain(&aug.zero).copied().collect();
    let reduced = kron_reduce(&aug.y_prime, &eliminated)?;
    hybrid_partition(&reduced, &aug.resource)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VsiCoefficients {
    pub entries: BTreeMap<PhaseIndex, QuadraticCoefficients>,
}

fn source_voltages(h: &HybridPartition, slacks: &[SlackModel]) -> Result<CVector> {
    let p = h.h_mm.phases();
    let mut v = CVector::zeros(h.mc_set.len() * p);
    for (k, key) in h.mc_set.iter().enumerate() {
        let NodeKey::Source(s) = key else {
            return Err(Error::InvalidModel(format!("unexpected node {key} among the source nodes")));
        };
        let model = slacks
            .iter()
            .find(|m| m.node == *s)
            .ok_or_else(|| Error::InvalidModel(format!("no Thévenin model for slack {s}")))?;
        v.rows_mut(k * p, p).copy_from(&model.v_te);
    }
    Ok(v)
}

fn resource_index(h: &HybridPartition) -> Result<Vec<u32>> {
    h.m_set
        .iter()
        .map(|k| match k {
            NodeKey::Node(id) => Ok(*id),
            other => Err(Error::InvalidModel(format!("unexpected node {other} among the resources"))),
        })
        .collect()
}

/// Coefficients `a`, `b`, `c` of the per-phase quadratic at the operating point `v`.
pub fn vsi_coefficients(
    h: &HybridPartition,
    slacks: &[SlackModel],
    resources: &[ResourceModel],
    v: &OperatingPoint,
) -> Result<VsiCoefficients> {
    let p = h.h_mm.phases();
    let ids = resource_index(h)?;
    let n = ids.len() * p;
    let mut volts = Vec::with_capacity(n);
    let mut terms: Vec<ZipDecomposition> = Vec::with_capacity(n);
    for &id in &ids {
        let model = resources
            .iter()
            .find(|r| r.node == id)
            .ok_or_else(|| Error::InvalidModel(format!("resource node {id} has no polynomial model")))?;
        if model.phases.len() != p {
            return Err(Error::InvalidModel(format!("resource {id} has wrong phase count")));
        }
        for q in 0..p {
            let vq = v
                .voltage(PhaseIndex::new(id, q))
                .ok_or_else(|| Error::InvalidModel(format!("operating point lacks node {id} phase {q}")))?;
            if vq.norm() == 0.0 {
                return Err(Error::ZeroVoltage { node: id, phase: q });
            }
            terms.push(pm_zip_at(model, q, vq)?);
            volts.push(vq);
        }
    }
    let h_rr = h.h_mm.matrix();
    let v_te_tilde = h.h_mmc.matrix() * source_voltages(h, slacks)?;

    let mut entries = BTreeMap::new();
    for row in 0..n {
        let v_r = volts[row];
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = v_te_tilde[row];
        let mut c = Complex64::new(0.0, 0.0);
        for col in 0..n {
            let hij = h_rr[(row, col)];
            let v_j = volts[col];
            a += hij * (v_j / v_r) * terms[col].y_pm;
            b += hij * terms[col].i_pm;
            c += hij * ((v_r / v_j) * terms[col].s_pm).conj();
        }
        entries.insert(PhaseIndex::new(ids[row / p], row % p), QuadraticCoefficients { a, b, c });
    }
    Ok(VsiCoefficients { entries })
}

fn local_checked(idx: PhaseIndex, q: &QuadraticCoefficients, v: &OperatingPoint) -> Result<(Complex64, Complex64)> {
    let vr = v
        .voltage(idx)
        .ok_or_else(|| Error::InvalidModel(format!("operating point lacks {idx}")))?;
    if vr.norm() == 0.0 {
        return Err(Error::ZeroVoltage { node: idx.node, phase: idx.phase });
    }
    let denom = Complex64::new(1.0, 0.0) + q.a;
    if denom.norm() < DENOMINATOR_GUARD {
        return Err(Error::DegenerateDenominator { node: idx.node, phase: idx.phase, magnitude: denom.norm() });
    }
    Ok((vr, denom))
}

/// `L_rp = |1 - b / ((1 + a) V)|` for every resource node-phase.
pub fn vsi_local(coeffs: &VsiCoefficients, v: &OperatingPoint) -> Result<BTreeMap<PhaseIndex, f64>> {
    coeffs
        .entries
        .iter()
        .map(|(&idx, q)| {
            let (vr, denom) = local_checked(idx, q, v)?;
            Ok((idx, (Complex64::new(1.0, 0.0) - q.b / (denom * vr)).norm()))
        })
        .collect()
}

/// `|c / ((1 + a) V^2)|`, which equals [`vsi_local`] at power-flow solutions.
pub fn vsi_local_dual(coeffs: &VsiCoefficients, v: &OperatingPoint) -> Result<BTreeMap<PhaseIndex, f64>> {
    coeffs
        .entries
        .iter()
        .map(|(&idx, q)| {
            let (vr, denom) = local_checked(idx, q, v)?;
            Ok((idx, (q.c / (denom * vr * vr)).norm()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VsiResult {
    pub local: BTreeMap<PhaseIndex, f64>,
    pub global: f64,
    pub critical: PhaseIndex,
}

/// Maximum over the local indices. Ties go to the lowest node id, then the lowest phase.
pub fn vsi_global(local: BTreeMap<PhaseIndex, f64>) -> Option<VsiResult> {
    let (critical, global) = local
        .iter()
        .fold(None, |best: Option<(PhaseIndex, f64)>, (&idx, &l)| match best {
            Some((_, b)) if l <= b => best,
            _ => Some((idx, l)),
        })?;
    Some(VsiResult { local, global, critical })
}

/// Reduced grid kept around for repeated index evaluations.
#[derive(Clone, Debug)]
pub struct StabilityIndex {
    hybrid: HybridPartition,
    slacks: Vec<SlackModel>,
}

impl StabilityIndex {
    pub fn new(grid: &GridModel, slacks: &[SlackModel]) -> Result<Self> {
        let aug = build_augmented(grid, slacks)?;
        Self::from_augmented(&aug, slacks)
    }

    pub fn from_augmented(aug: &AugmentedGrid, slacks: &[SlackModel]) -> Result<Self> {
        Ok(Self { hybrid: reduce_augmented(aug)?, slacks: slacks.to_vec() })
    }

    pub fn hybrid(&self) -> &HybridPartition {
        &self.hybrid
    }

    pub fn coefficients(&self, resources: &[ResourceModel], v: &OperatingPoint) -> Result<VsiCoefficients> {
        vsi_coefficients(&self.hybrid, &self.slacks, resources, v)
    }

    pub fn evaluate(&self, resources: &[ResourceModel], v: &OperatingPoint) -> Result<VsiResult> {
        let coeffs = self.coefficients(resources, v)?;
        let local = vsi_local(&coeffs, v)?;
        vsi_global(local).ok_or_else(|| Error::InvalidModel("no resource phases to evaluate".into()))
    }
}
