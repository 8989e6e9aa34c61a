//! Sparsity pattern of the condensed face system and its solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use super::Discretization;
use crate::error::{Error, Result};

const UNUSED: usize = usize::MAX;

/// Column-compressed pattern over the unconstrained face unknowns, with the
/// position of every local Schur-complement entry precomputed.
#[derive(Debug)]
pub struct FacePattern {
    n: usize,
    /// First global row of each face block, `None` for constrained faces.
    face_offset: Vec<Option<usize>>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Per element: value position of local entry `(i, j)` at `i * m + j`,
    /// `m` being the number of local face unknowns.
    positions: Vec<Vec<usize>>,
    symbolic: Option<SymbolicLlt<usize>>,
}

impl FacePattern {
    pub fn new(disc: &Discretization, constrained: &[bool]) -> Result<Self> {
        let mesh = disc.mesh();
        let fd = disc.face_dim();
        let mut face_offset = vec![None; mesh.num_faces()];
        let mut n = 0;
        for (f, slot) in face_offset.iter_mut().enumerate() {
            if !constrained[f] {
                *slot = Some(n);
                n += fd;
            }
        }
        let local_rows = |t: usize| -> Vec<usize> {
            let mut rows = Vec::new();
            for ef in &mesh.element(t).faces {
                match face_offset[ef.face] {
                    Some(o) => rows.extend(o..o + fd),
                    None => rows.extend(std::iter::repeat_n(UNUSED, fd)),
                }
            }
            rows
        };
        let mut columns: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in 0..mesh.num_elements() {
            let rows = local_rows(t);
            for &c in rows.iter().filter(|&&c| c != UNUSED) {
                columns[c].extend(rows.iter().copied().filter(|&r| r != UNUSED));
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        drop(columns);
        let positions = (0..mesh.num_elements())
            .map(|t| {
                let rows = local_rows(t);
                let mut pos = Vec::with_capacity(rows.len() * rows.len());
                for &r in &rows {
                    for &c in &rows {
                        if r == UNUSED || c == UNUSED {
                            pos.push(UNUSED);
                        } else {
                            let start = col_ptr[c];
                            let k = row_idx[start..col_ptr[c + 1]]
                                .binary_search(&r)
                                .expect("pattern contains every local coupling");
                            pos.push(start + k);
                        }
                    }
                }
                pos
            })
            .collect();
        let mut out = Self {
            n,
            face_offset,
            col_ptr,
            row_idx,
            positions,
            symbolic: None,
        };
        if n > 0 {
            let symbolic = SymbolicLlt::try_new(out.symbolic_ref(), Side::Lower)
                .map_err(|e| Error::LinearSolve(format!("symbolic factorization: {e:?}")))?;
            out.symbolic = Some(symbolic);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn face_offset(&self, f: usize) -> Option<usize> {
        self.face_offset[f]
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }

    /// Adds a dense local matrix into the value array.
    pub(crate) fn add_local(&self, t: usize, local: &nalgebra::DMatrix<f64>, values: &mut [f64]) {
        let m = local.nrows();
        for (idx, &pos) in self.positions[t].iter().enumerate() {
            if pos != UNUSED {
                values[pos] += local[(idx / m, idx % m)];
            }
        }
    }

    /// `y = A x` with `A` stored in full symmetric form.
    pub fn matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (c, &xc) in x.iter().enumerate().take(self.n) {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += values[k] * xc;
            }
        }
    }

    fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|c| {
                let range = self.col_ptr[c]..self.col_ptr[c + 1];
                let k = self.row_idx[range.clone()].binary_search(&c).expect("diagonal present");
                values[range.start + k]
            })
            .collect()
    }

    /// Sparse Cholesky solve reusing the symbolic factorization.
    pub fn solve_cholesky(&self, values: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let Some(symbolic) = &self.symbolic else {
            return Ok(Vec::new());
        };
        let mat = SparseColMatRef::new(self.symbolic_ref(), values);
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::LinearSolve(format!("condensed face system is not positive definite: {e:?}")))?;
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        llt.solve_in_place(x.as_mut());
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution of the face system".into()));
        }
        Ok(out)
    }

    /// Jacobi-preconditioned conjugate gradients.
    pub fn solve_cg(&self, values: &[f64], rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let inv_diag: Vec<f64> = self.diagonal(values).iter().map(|d| 1.0 / d).collect();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..max_iter {
            self.matvec(values, &p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::LinearSolve("CG breakdown: matrix not positive definite".into()));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= rel_tol * b_norm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::LinearSolve(format!("CG did not converge in {max_iter} iterations")))
    }
}
