#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polyvsi::grid::{Branch, GridModel, Node, NodeRole, Shunt};
use polyvsi::linalg::{CMatrix, CVector};
use polyvsi::node_models::{
    positive_sequence, ResourceKind, ResourceModel, ResourcePhase, SlackModel, ZipCoefficients, ZipTriple,
};

pub const V_NOM: f64 = 1000.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric positive definite `P x P` matrix with entries of order `scale`.
pub fn spd(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    (&a * a.transpose() * 0.3 + DMatrix::identity(p, p)) * scale
}

pub fn series_impedance(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
    let (r_scale, x_scale) = (rng.random_range(0.05..0.5), rng.random_range(0.1..1.0));
    let r = spd(rng, p, r_scale);
    let x = spd(rng, p, x_scale);
    CMatrix::from_fn(p, p, |i, j| Complex64::new(r[(i, j)], x[(i, j)]))
}

#[derive(Clone, Debug)]
pub struct RandomSystem {
    pub grid: GridModel,
    pub slacks: Vec<SlackModel>,
    pub resources: Vec<ResourceModel>,
}

fn random_triple(rng: &mut ChaCha8Rng) -> ZipTriple {
    let a: f64 = rng.random_range(-0.3..0.6);
    let b: f64 = rng.random_range(-0.3..0.6);
    ZipTriple::new(a, b, 1.0 - a - b).unwrap()
}

/// Connected grid with 2 to 8 nodes and 1 to 3 phases. Node 1 is the slack;
/// at least one node hosts a resource. Some branches carry off-nominal ratios
/// and line-charging shunts.
pub fn random_system(seed: u64) -> RandomSystem {
    let mut rng = rng(seed);
    let p = rng.random_range(1..=3usize);
    let n = rng.random_range(2..=8u32);
    let mut nodes = vec![Node { id: 1, role: NodeRole::Slack, v_nominal: V_NOM }];
    for id in 2..=n {
        let role = if id == n || rng.random_bool(0.6) { NodeRole::Resource } else { NodeRole::ZeroInjection };
        nodes.push(Node { id, role, v_nominal: V_NOM });
    }
    let mut branches = Vec::new();
    let mut shunts = Vec::new();
    for id in 2..=n {
        let parent = rng.random_range(1..id);
        let mut b = Branch::line(parent, id, series_impedance(&mut rng, p));
        if rng.random_bool(0.2) {
            b.ratio = rng.random_range(0.92..1.08);
        } else if rng.random_bool(0.5) {
            let y = spd(&mut rng, p, 1e-5).map(|v| Complex64::new(0.0, v));
            shunts.push(Shunt { node: parent, y: y.clone() });
            shunts.push(Shunt { node: id, y });
        }
        branches.push(b);
    }
    if n >= 4 && rng.random_bool(0.5) {
        branches.push(Branch::line(2, n, series_impedance(&mut rng, p)));
    }
    let grid = GridModel::new(p, nodes, branches, shunts).unwrap();
    let z_te = CMatrix::from_diagonal_element(p, p, Complex64::new(0.05, rng.random_range(0.2..0.6)));
    let slacks = vec![SlackModel { node: 1, v_te: positive_sequence(p, V_NOM), z_te }];
    let resources = grid
        .node_ids_with_role(NodeRole::Resource)
        .into_iter()
        .map(|id| {
            let kind = if rng.random_bool(0.8) { ResourceKind::Load } else { ResourceKind::Compensator };
            let phases = (0..p)
                .map(|_| {
                    let zip = ZipCoefficients { active: random_triple(&mut rng), reactive: random_triple(&mut rng) };
                    let (p0, q0) = match kind {
                        ResourceKind::Load => (rng.random_range(-8e3..-1e3), rng.random_range(-4e3..0.0)),
                        ResourceKind::Compensator => (0.0, rng.random_range(0.0..3e3)),
                    };
                    ResourcePhase { p0, q0, zip, lambda: 1.0 }
                })
                .collect();
            ResourceModel::new(id, kind, V_NOM, phases).unwrap()
        })
        .collect();
    RandomSystem { grid, slacks, resources }
}

/// Random complex vector with entries of magnitude up to `scale`.
pub fn random_cvector(rng: &mut impl Rng, n: usize, scale: f64) -> CVector {
    CVector::from_fn(n, |_, _| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}
