use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

use super::{BlockMatrix, NodeKey};

pub type NodeId = u32;

/// A single phase terminal of a polyphase node. `phase` is zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseIndex {
    pub node: NodeId,
    pub phase: usize,
}

impl PhaseIndex {
    pub fn new(node: NodeId, phase: usize) -> Self {
        Self { node, phase }
    }
}

/// Phase label: `A`, `B`, `C`, ... for the zero-based index.
pub fn phase_label(phase: usize) -> String {
    if phase < 26 {
        char::from(b'A' + phase as u8).to_string()
    } else {
        (phase + 1).to_string()
    }
}

/// Inverse of [`phase_label`]; also accepts one-based numbers.
pub fn parse_phase_label(s: &str) -> Option<usize> {
    let s = s.trim();
    if s.len() == 1 {
        let c = s.as_bytes()[0].to_ascii_uppercase();
        if c.is_ascii_uppercase() {
            return Some((c - b'A') as usize);
        }
    }
    s.parse::<usize>().ok().filter(|n| *n >= 1).map(|n| n - 1)
}

impl fmt::Display for PhaseIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.node, phase_label(self.phase))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeRole {
    ZeroInjection,
    Slack,
    Resource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    /// Nominal phase-to-ground voltage magnitude in volts.
    pub v_nominal: f64,
}

/// Polyphase series element.
///
/// A plain line section has `ratio == 1`. Transformers carry an ideal
/// transformer on the `to` side, so that at no load `V_from = ratio * V_to`;
/// `z` is the series impedance referred to the `from` side.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: NodeId,
    pub to: NodeId,
    pub z: CMatrix,
    pub ratio: f64,
}

impl Branch {
    pub fn line(from: NodeId, to: NodeId, z: CMatrix) -> Self {
        Self { from, to, z, ratio: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shunt {
    pub node: NodeId,
    pub y: CMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridModel {
    phases: usize,
    nodes: Vec<Node>,
    branches: Vec<Branch>,
    shunts: Vec<Shunt>,
    index: HashMap<NodeId, usize>,
}

impl GridModel {
    /// Builds a grid and checks its structure: unique ids, consistent matrix
    /// sizes, known endpoints and a weakly connected branch graph.
    /// Electrical parameters are checked separately by [`validate_parameters`].
    pub fn new(phases: usize, mut nodes: Vec<Node>, branches: Vec<Branch>, shunts: Vec<Shunt>) -> Result<Self> {
        if phases == 0 {
            return Err(Error::InvalidModel("phase count must be positive".into()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidModel("grid has no nodes".into()));
        }
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate node id {}", n.id)));
            }
            if !(n.v_nominal > 0.0 && n.v_nominal.is_finite()) {
                return Err(Error::InvalidModel(format!("node {} has invalid nominal voltage", n.id)));
            }
        }
        let square = |m: &CMatrix| m.nrows() == phases && m.ncols() == phases;
        for b in &branches {
            for id in [b.from, b.to] {
                if !index.contains_key(&id) {
                    return Err(Error::InvalidModel(format!("branch {}-{} references unknown node {id}", b.from, b.to)));
                }
            }
            if b.from == b.to {
                return Err(Error::InvalidModel(format!("branch {}-{} is a self-loop", b.from, b.to)));
            }
            if !square(&b.z) {
                return Err(Error::InvalidModel(format!("branch {}-{} impedance is not {phases}x{phases}", b.from, b.to)));
            }
            if !(b.ratio > 0.0 && b.ratio.is_finite()) {
                return Err(Error::InvalidModel(format!("branch {}-{} has invalid ratio {}", b.from, b.to, b.ratio)));
            }
        }
        for s in &shunts {
            if !index.contains_key(&s.node) {
                return Err(Error::InvalidModel(format!("shunt references unknown node {}", s.node)));
            }
            if !square(&s.y) {
                return Err(Error::InvalidModel(format!("shunt at node {} is not {phases}x{phases}", s.node)));
            }
        }
        let grid = Self { phases, nodes, branches, shunts, index };
        if !grid.is_weakly_connected() {
            return Err(Error::InvalidModel("branch graph is not connected".into()));
        }
        Ok(grid)
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    /// Nodes sorted by id.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn shunts(&self) -> &[Shunt] {
        &self.shunts
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node_ids_with_role(&self, role: NodeRole) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    pub fn keys(&self) -> Vec<NodeKey> {
        self.nodes.iter().map(|n| NodeKey::Node(n.id)).collect()
    }

    fn is_weakly_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for b in &self.branches {
            let (i, j) = (self.index[&b.from], self.index[&b.to]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Currents entering the series element of branch `k` at its two terminals,
    /// given the terminal voltage vectors.
    pub fn branch_terminal_currents(&self, k: usize, v_from: &CVector, v_to: &CVector) -> Result<(CVector, CVector)> {
        let b = &self.branches[k];
        let y = linalg::checked_inverse(&b.z).ok_or(Error::SingularBranch {
            from: b.from,
            to: b.to,
            rcond: linalg::rcond(&b.z),
        })?;
        let i_from = &y * (v_from - v_to * num_complex::Complex64::from(b.ratio));
        let i_to = &i_from * num_complex::Complex64::from(-b.ratio);
        Ok((i_from, i_to))
    }
}

/// Branch incidence matrix: `+1` where branch `k` leaves node `n`, `-1` where it enters.
/// Columns follow the grid's node ordering.
pub fn build_incidence(grid: &GridModel) -> DMatrix<i32> {
    let mut a = DMatrix::zeros(grid.branches.len(), grid.nodes.len());
    for (k, b) in grid.branches.iter().enumerate() {
        a[(k, grid.index[&b.from])] = 1;
        a[(k, grid.index[&b.to])] = -1;
    }
    a
}

/// Polyphase incidence matrix `A ⊗ I_P`.
pub fn build_polyphase_incidence(grid: &GridModel) -> DMatrix<f64> {
    let a = build_incidence(grid).map(f64::from);
    a.kronecker(&DMatrix::identity(grid.phases, grid.phases))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Element {
    Branch(usize),
    Shunt(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    Asymmetric { deviation: f64 },
    NotPositiveSemidefinite { min_eigenvalue: f64, max_eigenvalue: f64 },
    Singular { rcond: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub element: Element,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.element {
            Element::Branch(k) => write!(f, "branch #{k}: ")?,
            Element::Shunt(k) => write!(f, "shunt #{k}: ")?,
        }
        match &self.kind {
            ViolationKind::Asymmetric { deviation } => write!(f, "not symmetric (deviation {deviation:.3e})"),
            ViolationKind::NotPositiveSemidefinite { min_eigenvalue, .. } => {
                write!(f, "real part not PSD (min eigenvalue {min_eigenvalue:.3e})")
            }
            ViolationKind::Singular { rcond } => write!(f, "not invertible (rcond {rcond:.3e})"),
        }
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Checks symmetry, PSD real part and invertibility of every branch impedance
/// and every non-zero shunt admittance. `tol` is relative for both the symmetry
/// and the eigenvalue test.
pub fn validate_parameters(grid: &GridModel, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |element: Element, m: &CMatrix| {
        let deviation = linalg::asymmetry(m);
        if deviation > tol {
            out.push(Violation { element, kind: ViolationKind::Asymmetric { deviation } });
        }
        let (min_eigenvalue, max_eigenvalue) = linalg::real_part_eigen_range(m);
        if min_eigenvalue < -tol * max_eigenvalue.max(0.0) {
            out.push(Violation {
                element,
                kind: ViolationKind::NotPositiveSemidefinite { min_eigenvalue, max_eigenvalue },
            });
        }
        let rcond = linalg::rcond(m);
        if rcond < linalg::SINGULAR_RCOND {
            out.push(Violation { element, kind: ViolationKind::Singular { rcond } });
        }
    };
    for (k, b) in grid.branches.iter().enumerate() {
        check(Element::Branch(k), &b.z);
    }
    for (k, s) in grid.shunts.iter().enumerate() {
        if !linalg::is_zero(&s.y) {
            check(Element::Shunt(k), &s.y);
        }
    }
    out
}

/// Compound admittance matrix `Y = A_P^T Y_L A_P + Y_T` over the grid's node ordering.
///
/// Transformer branches stamp `y`, `-ratio*y` and `ratio^2*y`, i.e. the
/// incidence row `[1, -ratio]`.
pub fn assemble_admittance(grid: &GridModel) -> Result<BlockMatrix> {
    let mut y = BlockMatrix::zeros(grid.keys(), grid.keys(), grid.phases);
    for b in &grid.branches {
        let deviation = linalg::asymmetry(&b.z);
        if deviation > DEFAULT_TOLERANCE {
            return Err(Error::AsymmetricParameter { element: format!("branch {}-{}", b.from, b.to), deviation });
        }
        let yb = linalg::checked_inverse(&b.z).ok_or(Error::SingularBranch {
            from: b.from,
            to: b.to,
            rcond: linalg::rcond(&b.z),
        })?;
        // the inverse of a symmetric matrix is symmetric; drop rounding asymmetry
        let yb = (&yb + yb.transpose()) * num_complex::Complex64::from(0.5);
        let (i, j) = (grid.index[&b.from], grid.index[&b.to]);
        let t = num_complex::Complex64::from(b.ratio);
        y.add_block_at(i, i, &yb);
        y.add_block_at(i, j, &(&yb * -t));
        y.add_block_at(j, i, &(&yb * -t));
        y.add_block_at(j, j, &(&yb * (t * t)));
    }
    for s in &grid.shunts {
        if linalg::is_zero(&s.y) {
            continue;
        }
        let deviation = linalg::asymmetry(&s.y);
        if deviation > DEFAULT_TOLERANCE {
            return Err(Error::AsymmetricParameter { element: format!("shunt at node {}", s.node), deviation });
        }
        let i = grid.index[&s.node];
        y.add_block_at(i, i, &s.y);
    }
    Ok(y)
}
