//! Static condensation of the element unknowns out of the Newton system.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::sparse::FacePattern;
use super::{Discretization, FrozenProblem, HybridVector, LinearSolver};
use crate::error::{Error, Result};
use crate::par::{map_collect, try_map_collect};

/// What is needed to recover the element increment from the face increment.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    chol: Cholesky<f64, Dyn>,
    a_tf: DMatrix<f64>,
    r_t: DVector<f64>,
}

impl CondensedElement {
    /// `delta_T = -A_TT^{-1} (r_T + A_TF delta_F)`.
    pub fn recover(&self, delta_f: &DVector<f64>) -> DVector<f64> {
        -self.chol.solve(&(&self.r_t + &self.a_tf * delta_f))
    }
}

/// Eliminates the first `nk` unknowns of the local system `jac * d = -res`.
/// Returns the Schur complement, the condensed right-hand side and the
/// recovery data.
pub fn condense_element(
    t: usize,
    jac: &DMatrix<f64>,
    res: &DVector<f64>,
    nk: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, CondensedElement)> {
    let m = jac.nrows() - nk;
    let a_tt = jac.view((0, 0), (nk, nk)).into_owned();
    let a_tf = jac.view((0, nk), (nk, m)).into_owned();
    let a_ft = jac.view((nk, 0), (m, nk));
    let chol = a_tt.cholesky().ok_or(Error::SingularElementBlock { element: t })?;
    let r_t = res.rows(0, nk).into_owned();
    let x = chol.solve(&a_tf);
    let y = chol.solve(&r_t);
    let schur = jac.view((nk, nk), (m, m)) - a_ft * x;
    let rhs = -res.rows(nk, m) + a_ft * y;
    Ok((schur, rhs, CondensedElement { chol, a_tf, r_t }))
}

fn local_face_increment(disc: &Discretization, t: usize, delta: &HybridVector) -> DVector<f64> {
    let fd = disc.face_dim();
    let faces = &disc.mesh().element(t).faces;
    let mut out = DVector::zeros(faces.len() * fd);
    for (fi, ef) in faces.iter().enumerate() {
        out.rows_mut(fi * fd, fd).copy_from(&delta.face_block(ef.face));
    }
    out
}

/// One Newton increment at `u`, computed through the condensed face system.
/// Constrained face blocks of the increment are zero.
pub fn newton_step(
    disc: &Discretization,
    frozen: &FrozenProblem,
    pattern: &FacePattern,
    u: &HybridVector,
    solver: LinearSolver,
) -> Result<HybridVector> {
    let nk = disc.element_dim();
    let fd = disc.face_dim();
    let exec = disc.execution();
    let mesh = disc.mesh();
    let systems = try_map_collect(exec, mesh.num_elements(), |t| {
        let (jac, mut res) = disc.element_system(frozen, t, &disc.gather(t, u));
        let mut rt = res.rows_mut(0, nk);
        rt -= frozen.load.cell_block(t);
        condense_element(t, &jac, &res, nk)
    })?;

    let mut values = vec![0.0; pattern.nnz()];
    let mut rhs = vec![0.0; pattern.dim()];
    for (t, (schur, g, _)) in systems.iter().enumerate() {
        pattern.add_local(t, schur, &mut values);
        for (fi, ef) in mesh.element(t).faces.iter().enumerate() {
            if let Some(o) = pattern.face_offset(ef.face) {
                for j in 0..fd {
                    rhs[o + j] += g[fi * fd + j];
                }
            }
        }
    }
    let sol = match solver {
        LinearSolver::Cholesky => pattern.solve_cholesky(&values, &rhs)?,
        LinearSolver::ConjugateGradient => {
            pattern.solve_cg(&values, &rhs, 1e-13, 20 * pattern.dim().max(100))?
        }
    };

    let mut delta = disc.zeros();
    delta.constrained = u.constrained.clone();
    for f in 0..mesh.num_faces() {
        if let Some(o) = pattern.face_offset(f) {
            delta.face_block_mut(f).copy_from_slice(&sol[o..o + fd]);
        }
    }
    let cells = map_collect(exec, mesh.num_elements(), |t| {
        systems[t].2.recover(&local_face_increment(disc, t, &delta))
    });
    for (t, c) in cells.iter().enumerate() {
        delta.cell_block_mut(t).copy_from(c);
    }
    Ok(delta)
}

/// The same increment computed from the full (uncondensed) dense system.
/// Meant for small meshes only.
pub fn newton_step_uncondensed(
    disc: &Discretization,
    frozen: &FrozenProblem,
    pattern: &FacePattern,
    u: &HybridVector,
) -> Result<HybridVector> {
    let mesh = disc.mesh();
    let nk = disc.element_dim();
    let fd = disc.face_dim();
    let nc = mesh.num_elements() * nk;
    let n = nc + pattern.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut res = DVector::zeros(n);
    for t in 0..mesh.num_elements() {
        let (jl, rl) = disc.element_system(frozen, t, &disc.gather(t, u));
        let mut index: Vec<Option<usize>> = (0..nk).map(|i| Some(t * nk + i)).collect();
        for ef in &mesh.element(t).faces {
            for j in 0..fd {
                index.push(pattern.face_offset(ef.face).map(|o| nc + o + j));
            }
        }
        for (a, ia) in index.iter().enumerate() {
            let Some(ia) = *ia else { continue };
            res[ia] += rl[a];
            for (b, ib) in index.iter().enumerate() {
                if let Some(ib) = *ib {
                    jac[(ia, ib)] += jl[(a, b)];
                }
            }
        }
    }
    res.rows_mut(0, nc).axpy(-1.0, &frozen.load.cells, 1.0);
    let sol = jac
        .lu()
        .solve(&(-res))
        .ok_or_else(|| Error::SingularMatrix("uncondensed Newton system".into()))?;
    let mut delta = disc.zeros();
    delta.constrained = u.constrained.clone();
    delta.cells.copy_from(&sol.rows(0, nc));
    for f in 0..mesh.num_faces() {
        if let Some(o) = pattern.face_offset(f) {
            delta.face_block_mut(f).copy_from(&sol.rows(nc + o, fd));
        }
    }
    Ok(delta)
}
