//! Kron reduction and hybrid-parameter partitioning of compound admittance matrices.

use std::collections::HashSet;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

use super::{BlockMatrix, NodeKey};

fn check_square(y: &BlockMatrix) -> Result<()> {
    if !y.is_square_ordered() {
        return Err(Error::InvalidModel("admittance matrix must share row and column ordering".into()));
    }
    Ok(())
}

/// Splits the ordering of `y` into (members of `set`, the rest), both in `y`'s order.
fn split(y: &BlockMatrix, set: &[NodeKey]) -> Result<(Vec<NodeKey>, Vec<NodeKey>)> {
    let wanted: HashSet<NodeKey> = set.iter().copied().collect();
    if wanted.len() != set.len() {
        return Err(Error::InvalidModel("node set contains duplicates".into()));
    }
    for k in set {
        if y.row_position(*k).is_none() {
            return Err(Error::InvalidModel(format!("node {k} is not part of the matrix")));
        }
    }
    Ok(y.rows().iter().copied().partition(|k| wanted.contains(k)))
}

fn factor_interior(block: &BlockMatrix) -> Result<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
    let rcond = linalg::rcond(block.matrix());
    if rcond < linalg::SINGULAR_RCOND {
        return Err(Error::SingularInteriorBlock { nodes: block.rows().to_vec(), rcond });
    }
    Ok(block.matrix().clone().lu())
}

/// Schur complement `Y / Y_ZZ`: eliminates the zero-injection nodes `zero_set`.
/// The result keeps the remaining nodes in their original order.
pub fn kron_reduce(y: &BlockMatrix, zero_set: &[NodeKey]) -> Result<BlockMatrix> {
    check_square(y)?;
    if zero_set.is_empty() {
        return Ok(y.clone());
    }
    let (zero, keep) = split(y, zero_set)?;
    if keep.is_empty() {
        return Err(Error::InvalidModel("cannot eliminate every node".into()));
    }
    let y_zz = y.select(&zero, &zero)?;
    let lu = factor_interior(&y_zz)?;
    let y_kk = y.select(&keep, &keep)?;
    let y_kz = y.select(&keep, &zero)?;
    let y_zk = y.select(&zero, &keep)?;
    let x = lu.solve(y_zk.matrix()).ok_or(Error::SingularInteriorBlock { nodes: zero.clone(), rcond: 0.0 })?;
    let reduced = y_kk.matrix() - y_kz.matrix() * x;
    BlockMatrix::new(keep.clone(), keep, y.phases(), reduced)
}

/// Hybrid blocks relating `[V_Mc; I_M]` to `[I_Mc; V_M]`.
#[derive(Clone, Debug)]
pub struct HybridPartition {
    pub m_set: Vec<NodeKey>,
    pub mc_set: Vec<NodeKey>,
    /// `Y_MM^-1`
    pub h_mm: BlockMatrix,
    /// `-Y_MM^-1 Y_MMc`
    pub h_mmc: BlockMatrix,
    /// `Y_McM Y_MM^-1`
    pub h_mcm: BlockMatrix,
    /// `Y / Y_MM`
    pub h_mcmc: BlockMatrix,
}

impl HybridPartition {
    /// Evaluates the hybrid relation: returns `(I_Mc, V_M)`.
    pub fn apply(&self, v_mc: &CVector, i_m: &CVector) -> (CVector, CVector) {
        let i_mc = self.h_mcmc.matrix() * v_mc + self.h_mcm.matrix() * i_m;
        let v_m = self.h_mmc.matrix() * v_mc + self.h_mm.matrix() * i_m;
        (i_mc, v_m)
    }
}

/// Compound hybrid matrix of `y` with respect to the node subset `m_set`.
pub fn hybrid_partition(y: &BlockMatrix, m_set: &[NodeKey]) -> Result<HybridPartition> {
    check_square(y)?;
    if m_set.is_empty() {
        return Err(Error::InvalidModel("hybrid partition needs a nonempty node set".into()));
    }
    let (m, mc) = split(y, m_set)?;
    if mc.is_empty() {
        return Err(Error::InvalidModel("hybrid partition needs a nonempty complement".into()));
    }
    let p = y.phases();
    let y_mm = y.select(&m, &m)?;
    let lu = factor_interior(&y_mm)?;
    let inv = lu
        .try_inverse()
        .ok_or(Error::SingularInteriorBlock { nodes: m.clone(), rcond: 0.0 })?;
    let y_mmc = y.select(&m, &mc)?;
    let y_mcm = y.select(&mc, &m)?;
    let y_mcmc = y.select(&mc, &mc)?;

    let h_mmc: CMatrix = -(&inv * y_mmc.matrix());
    let h_mcm: CMatrix = y_mcm.matrix() * &inv;
    let h_mcmc: CMatrix = y_mcmc.matrix() + y_mcm.matrix() * &h_mmc;
    Ok(HybridPartition {
        h_mm: BlockMatrix::new(m.clone(), m.clone(), p, inv)?,
        h_mmc: BlockMatrix::new(m.clone(), mc.clone(), p, h_mmc)?,
        h_mcm: BlockMatrix::new(mc.clone(), m.clone(), p, h_mcm)?,
        h_mcmc: BlockMatrix::new(mc.clone(), mc.clone(), p, h_mcmc)?,
        m_set: m,
        mc_set: mc,
    })
}
