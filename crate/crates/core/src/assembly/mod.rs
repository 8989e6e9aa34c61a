//! Global unknowns, the discrete diffusion residual `a_h(u, .) - l_h` and its
//! Newton linearization.

mod condense;
mod newton;
mod sparse;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};

use crate::error::Result;
use crate::flux::{Coefficient, Field, FluxModel, PointFlux, StabModel, DEFAULT_REGULARIZATION};
use crate::local_ops::{project_element, project_face, projection_degree, LocalOperators};
use crate::mesh::{Mesh, Vec2};
use crate::par::{map_collect, try_map_collect, Execution};
use crate::polyquad::{dim_2d, element_quadrature, eval_basis, face_quadrature};

pub use condense::{condense_element, newton_step, newton_step_uncondensed, CondensedElement};
pub use newton::{newton_solve, InitialGuess, LinearSolver, NewtonOptions, NewtonReport};
pub use sparse::FacePattern;

/// Data of one Dirichlet problem `-div sigma(x, grad u) = f`, `u = g` on the
/// boundary.
#[derive(Clone)]
pub struct Problem {
    pub flux: FluxModel,
    pub stab: StabModel,
    pub source: Field,
    pub boundary: Field,
}

impl Problem {
    pub fn new(
        flux: FluxModel,
        stab: StabModel,
        source: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
        boundary: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            flux,
            stab,
            source: Arc::new(source),
            boundary: Arc::new(boundary),
        }
    }

    pub fn p(&self) -> f64 {
        self.flux.p
    }

    pub fn is_linear(&self) -> bool {
        self.flux.p == 2.0 && self.stab.p == 2.0
    }

    /// Same data with the exponent replaced by `p`; the stabilization
    /// parameter is reset to the continuity constant of the new flux.
    pub fn with_exponent(&self, p: f64) -> Self {
        let mut flux = self.flux.clone();
        flux.p = p;
        let stab = StabModel::for_flux(&flux, self.stab.zeta.clone());
        Self {
            flux,
            stab,
            source: self.source.clone(),
            boundary: self.boundary.clone(),
        }
    }

    /// The `p = 2`, `delta = 0` problem with the same data.
    pub fn linear_surrogate(&self) -> Self {
        let mut out = self.with_exponent(2.0);
        out.flux.delta = Coefficient::Constant(0.0);
        out
    }
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("flux", &self.flux)
            .field("stab", &self.stab)
            .finish_non_exhaustive()
    }
}

/// Element blocks followed by face blocks, with one block per geometric face.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridVector {
    pub cells: DVector<f64>,
    pub faces: DVector<f64>,
    pub element_dim: usize,
    pub face_dim: usize,
    /// Faces whose block is fixed by boundary data.
    pub constrained: Vec<bool>,
}

impl HybridVector {
    pub fn zeros(num_elements: usize, num_faces: usize, k: usize) -> Self {
        Self {
            cells: DVector::zeros(num_elements * dim_2d(k)),
            faces: DVector::zeros(num_faces * (k + 1)),
            element_dim: dim_2d(k),
            face_dim: k + 1,
            constrained: vec![false; num_faces],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len() + self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_block(&self, t: usize) -> DVectorView<'_, f64> {
        self.cells.rows(t * self.element_dim, self.element_dim)
    }

    pub fn cell_block_mut(&mut self, t: usize) -> DVectorViewMut<'_, f64> {
        self.cells.rows_mut(t * self.element_dim, self.element_dim)
    }

    pub fn face_block(&self, f: usize) -> DVectorView<'_, f64> {
        self.faces.rows(f * self.face_dim, self.face_dim)
    }

    pub fn face_block_mut(&mut self, f: usize) -> DVectorViewMut<'_, f64> {
        self.faces.rows_mut(f * self.face_dim, self.face_dim)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.cells.dot(&other.cells) + self.faces.dot(&other.faces)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + alpha * other`; constraint flags are taken from `self`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.cells.axpy(alpha, &other.cells, 1.0);
        out.faces.axpy(alpha, &other.faces, 1.0);
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.cells *= alpha;
        out.faces *= alpha;
        out
    }

    fn free_entries(&self) -> impl Iterator<Item = f64> + '_ {
        let fd = self.face_dim;
        self.cells.iter().copied().chain(
            self.faces
                .iter()
                .enumerate()
                .filter(move |(i, _)| !self.constrained[i / fd])
                .map(|(_, v)| *v),
        )
    }

    /// Euclidean norm over element blocks and unconstrained face blocks.
    pub fn free_norm(&self) -> f64 {
        self.free_entries().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `l^q` norm over element blocks and unconstrained face blocks.
    pub fn free_lq_norm(&self, q: f64) -> f64 {
        self.free_entries().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }

    /// Zeroes the constrained face blocks.
    pub fn clear_constrained(&mut self) {
        for f in 0..self.constrained.len() {
            if self.constrained[f] {
                self.face_block_mut(f).fill(0.0);
            }
        }
    }
}

/// Quadrature tables of one element: reconstructed gradients at the element
/// points and boundary residuals at the face points, as linear maps of the
/// local unknowns.
#[derive(Debug, Clone)]
struct ElementKernel {
    points: Vec<Vec2>,
    weights: Vec<f64>,
    grad_x: DMatrix<f64>,
    grad_y: DMatrix<f64>,
    face_points: Vec<Vec<Vec2>>,
    face_weights: Vec<Vec<f64>>,
    residual: Vec<DMatrix<f64>>,
    /// Values of the degree-`k` element basis at `points`.
    cell_values: DMatrix<f64>,
    h: f64,
}

impl ElementKernel {
    fn new(mesh: &Mesh, ops: &LocalOperators, quad_degree: usize) -> Result<Self> {
        let t = ops.dofs.element;
        let nk = ops.dofs.element_dim;
        let rule = element_quadrature(mesh, t, quad_degree)?;
        let phi = eval_basis(&ops.cell_basis, &rule.points).columns(0, nk).into_owned();
        let grad_x = &phi * ops.gradient.rows(0, nk);
        let grad_y = &phi * ops.gradient.rows(nk, nk);
        let element = mesh.element(t);
        let mut face_points = Vec::with_capacity(element.faces.len());
        let mut face_weights = Vec::with_capacity(element.faces.len());
        let mut residual = Vec::with_capacity(element.faces.len());
        for (fi, ef) in element.faces.iter().enumerate() {
            let frule = face_quadrature(mesh, ef.face, quad_degree)?;
            let fb = &ops.face_bases[fi];
            let mut chi = DMatrix::zeros(frule.len(), fb.dim());
            let mut row = vec![0.0; fb.dim()];
            for (q, &x) in frule.points.iter().enumerate() {
                fb.values_into(x, &mut row);
                for (j, v) in row.iter().enumerate() {
                    chi[(q, j)] = *v;
                }
            }
            residual.push(&chi * &ops.boundary_residual[fi]);
            face_points.push(frule.points);
            face_weights.push(frule.weights);
        }
        Ok(Self {
            points: rule.points,
            weights: rule.weights,
            grad_x,
            grad_y,
            face_points,
            face_weights,
            residual,
            cell_values: phi,
            h: element.diameter,
        })
    }
}

/// Problem coefficients sampled at the quadrature points of one element.
#[derive(Debug, Clone)]
struct ElementCoefficients {
    flux: Vec<PointFlux>,
    zeta: Vec<Vec<f64>>,
}

/// A [`Problem`] evaluated on a [`Discretization`]: coefficients at the
/// quadrature nodes, the load vector and the boundary data.
#[derive(Debug, Clone)]
pub struct FrozenProblem {
    pub p: f64,
    pub stab: StabModel,
    pub regularization: f64,
    pub load: HybridVector,
    pub dirichlet: HybridVector,
    coefficients: Vec<ElementCoefficients>,
}

/// Mesh, local operators and quadrature tables for polynomial degree `k`.
#[derive(Debug)]
pub struct Discretization {
    mesh: Mesh,
    k: usize,
    quad_degree: usize,
    execution: Execution,
    operators: Vec<LocalOperators>,
    kernels: Vec<ElementKernel>,
}

/// Quadrature degree used for the nonlinear forms and the load.
pub fn default_quad_degree(k: usize) -> usize {
    2 * (k + 1) + 2
}

impl Discretization {
    pub fn new(mesh: Mesh, k: usize) -> Result<Self> {
        Self::with_options(mesh, k, default_quad_degree(k), Execution::default())
    }

    pub fn with_options(mesh: Mesh, k: usize, quad_degree: usize, execution: Execution) -> Result<Self> {
        let operators = try_map_collect(execution, mesh.num_elements(), |t| LocalOperators::new(&mesh, t, k))?;
        let kernels = try_map_collect(execution, mesh.num_elements(), |t| {
            ElementKernel::new(&mesh, &operators[t], quad_degree)
        })?;
        Ok(Self {
            mesh,
            k,
            quad_degree,
            execution,
            operators,
            kernels,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn quad_degree(&self) -> usize {
        self.quad_degree
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    pub fn operators(&self, t: usize) -> &LocalOperators {
        &self.operators[t]
    }

    pub fn element_dim(&self) -> usize {
        dim_2d(self.k)
    }

    pub fn face_dim(&self) -> usize {
        self.k + 1
    }

    /// Total number of element and face unknowns.
    pub fn ndof(&self) -> usize {
        self.mesh.num_elements() * self.element_dim() + self.mesh.num_faces() * self.face_dim()
    }

    pub fn zeros(&self) -> HybridVector {
        HybridVector::zeros(self.mesh.num_elements(), self.mesh.num_faces(), self.k)
    }

    /// Local vector of element `t`.
    pub fn gather(&self, t: usize, u: &HybridVector) -> DVector<f64> {
        let dofs = &self.operators[t].dofs;
        let mut out = DVector::zeros(dofs.total());
        out.rows_mut(0, dofs.element_dim).copy_from(&u.cell_block(t));
        for (fi, ef) in self.mesh.element(t).faces.iter().enumerate() {
            let r = dofs.face_range(fi);
            out.rows_mut(r.start, r.len()).copy_from(&u.face_block(ef.face));
        }
        out
    }

    /// Adds local vectors into a global one, in element order.
    fn scatter_add(&self, locals: &[DVector<f64>], out: &mut HybridVector) {
        for (t, local) in locals.iter().enumerate() {
            let dofs = &self.operators[t].dofs;
            let nk = dofs.element_dim;
            let mut cell = out.cell_block_mut(t);
            cell += local.rows(0, nk);
            for (fi, ef) in self.mesh.element(t).faces.iter().enumerate() {
                let r = dofs.face_range(fi);
                let mut fb = out.face_block_mut(ef.face);
                fb += local.rows(r.start, r.len());
            }
        }
    }

    /// Global interpolate `I_h u`.
    pub fn interpolate(&self, u: &(dyn Fn(Vec2) -> f64 + Sync)) -> Result<HybridVector> {
        let qd = projection_degree(self.k);
        let mut out = self.zeros();
        let cells = try_map_collect(self.execution, self.mesh.num_elements(), |t| {
            project_element(&self.mesh, t, self.k, u, qd)
        })?;
        let faces = try_map_collect(self.execution, self.mesh.num_faces(), |f| {
            project_face(&self.mesh, f, self.k, u, qd)
        })?;
        for (t, c) in cells.iter().enumerate() {
            out.cell_block_mut(t).copy_from(c);
        }
        for (f, c) in faces.iter().enumerate() {
            out.face_block_mut(f).copy_from(c);
        }
        Ok(out)
    }

    /// Load vector: `int_T f phi` on element blocks, zero on face blocks.
    pub fn assemble_rhs(&self, f: &(dyn Fn(Vec2) -> f64 + Sync)) -> HybridVector {
        let mut out = self.zeros();
        let blocks = map_collect(self.execution, self.mesh.num_elements(), |t| {
            let kern = &self.kernels[t];
            let fw = DVector::from_iterator(
                kern.weights.len(),
                kern.points.iter().zip(&kern.weights).map(|(&x, &w)| w * f(x)),
            );
            kern.cell_values.tr_mul(&fw)
        });
        for (t, b) in blocks.iter().enumerate() {
            out.cell_block_mut(t).copy_from(b);
        }
        out
    }

    /// Boundary face blocks set to the projection of `g` and flagged as
    /// constrained; everything else zero.
    pub fn apply_dirichlet(&self, g: &(dyn Fn(Vec2) -> f64 + Sync)) -> Result<HybridVector> {
        let qd = projection_degree(self.k);
        let mut out = self.zeros();
        let boundary: Vec<usize> = (0..self.mesh.num_faces()).filter(|&f| self.mesh.face(f).boundary).collect();
        let blocks = try_map_collect(self.execution, boundary.len(), |i| {
            project_face(&self.mesh, boundary[i], self.k, g, qd)
        })?;
        for (&f, b) in boundary.iter().zip(&blocks) {
            out.face_block_mut(f).copy_from(b);
            out.constrained[f] = true;
        }
        Ok(out)
    }

    pub fn freeze(&self, problem: &Problem) -> Result<FrozenProblem> {
        self.freeze_with(problem, DEFAULT_REGULARIZATION)
    }

    pub fn freeze_with(&self, problem: &Problem, regularization: f64) -> Result<FrozenProblem> {
        let coefficients = map_collect(self.execution, self.mesh.num_elements(), |t| {
            let kern = &self.kernels[t];
            ElementCoefficients {
                flux: kern.points.iter().map(|&x| problem.flux.at(x)).collect(),
                zeta: kern
                    .face_points
                    .iter()
                    .map(|pts| pts.iter().map(|&x| problem.stab.zeta.at(x)).collect())
                    .collect(),
            }
        });
        let source = problem.source.clone();
        let boundary = problem.boundary.clone();
        let mut load = self.assemble_rhs(&move |x| source(x));
        let dirichlet = self.apply_dirichlet(&move |x| boundary(x))?;
        load.constrained = dirichlet.constrained.clone();
        Ok(FrozenProblem {
            p: problem.p(),
            stab: problem.stab.clone(),
            regularization,
            load,
            dirichlet,
            coefficients,
        })
    }

    /// Local contribution `a_T(u_T, .)` for the local unknowns `u`.
    pub fn element_residual(&self, frozen: &FrozenProblem, t: usize, u: &DVector<f64>) -> DVector<f64> {
        let kern = &self.kernels[t];
        let coef = &frozen.coefficients[t];
        let gx = &kern.grad_x * u;
        let gy = &kern.grad_y * u;
        let nq = kern.weights.len();
        let mut sx = DVector::zeros(nq);
        let mut sy = DVector::zeros(nq);
        for q in 0..nq {
            let s = coef.flux[q].sigma(Vec2::new(gx[q], gy[q])) * kern.weights[q];
            sx[q] = s.x;
            sy[q] = s.y;
        }
        let mut r = kern.grad_x.tr_mul(&sx) + kern.grad_y.tr_mul(&sy);
        for (fi, d) in kern.residual.iter().enumerate() {
            let du = d * u;
            let s = DVector::from_iterator(
                du.len(),
                du.iter()
                    .enumerate()
                    .map(|(q, &w)| kern.face_weights[fi][q] * frozen.stab.value_with(coef.zeta[fi][q], w)),
            );
            r.gemv_tr(kern.h, d, &s, 1.0);
        }
        r
    }

    /// Local residual and its (regularized) derivative.
    pub fn element_system(
        &self,
        frozen: &FrozenProblem,
        t: usize,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let kern = &self.kernels[t];
        let coef = &frozen.coefficients[t];
        let eps = frozen.regularization;
        let gx = &kern.grad_x * u;
        let gy = &kern.grad_y * u;
        let nq = kern.weights.len();
        let mut sx = DVector::zeros(nq);
        let mut sy = DVector::zeros(nq);
        let mut tx = kern.grad_x.clone();
        let mut ty = kern.grad_y.clone();
        for q in 0..nq {
            let w = kern.weights[q];
            let xi = Vec2::new(gx[q], gy[q]);
            let pf = &coef.flux[q];
            let s = pf.sigma(xi) * w;
            sx[q] = s.x;
            sy[q] = s.y;
            let j = pf.jacobian(xi, eps) * w;
            for c in 0..tx.ncols() {
                let a = kern.grad_x[(q, c)];
                let b = kern.grad_y[(q, c)];
                tx[(q, c)] = j[(0, 0)] * a + j[(0, 1)] * b;
                ty[(q, c)] = j[(1, 0)] * a + j[(1, 1)] * b;
            }
        }
        let mut r = kern.grad_x.tr_mul(&sx) + kern.grad_y.tr_mul(&sy);
        let mut jac = kern.grad_x.tr_mul(&tx) + kern.grad_y.tr_mul(&ty);
        for (fi, d) in kern.residual.iter().enumerate() {
            let du = d * u;
            let mut s = DVector::zeros(du.len());
            let mut wd = d.clone();
            for q in 0..du.len() {
                let w = kern.face_weights[fi][q];
                let zeta = coef.zeta[fi][q];
                s[q] = w * frozen.stab.value_with(zeta, du[q]);
                wd.row_mut(q).scale_mut(w * frozen.stab.derivative_with(zeta, du[q], eps));
            }
            r.gemv_tr(kern.h, d, &s, 1.0);
            jac.gemm_tr(kern.h, d, &wd, 1.0);
        }
        // symmetric up to round-off; make it exact
        let jac = (&jac + jac.transpose()) * 0.5;
        (jac, r)
    }

    pub fn element_jacobian(&self, frozen: &FrozenProblem, t: usize, u: &DVector<f64>) -> DMatrix<f64> {
        self.element_system(frozen, t, u).0
    }

    /// `a_h(u, .)` as a vector over all unknowns (no load, no constraints).
    pub fn apply_operator(&self, frozen: &FrozenProblem, u: &HybridVector) -> HybridVector {
        let locals = map_collect(self.execution, self.mesh.num_elements(), |t| {
            self.element_residual(frozen, t, &self.gather(t, u))
        });
        let mut out = self.zeros();
        out.constrained = u.constrained.clone();
        self.scatter_add(&locals, &mut out);
        out
    }

    /// `a_h(u, v) = apply_operator(u) . v`.
    pub fn form(&self, frozen: &FrozenProblem, u: &HybridVector, v: &HybridVector) -> f64 {
        self.apply_operator(frozen, u).dot(v)
    }

    /// `a_h(u, .) - l_h(.)` with constrained face entries removed.
    pub fn residual(&self, frozen: &FrozenProblem, u: &HybridVector) -> HybridVector {
        let mut r = self.apply_operator(frozen, u);
        r.cells -= &frozen.load.cells;
        r.constrained = frozen.dirichlet.constrained.clone();
        r.clear_constrained();
        r
    }

    /// Discrete `W^{1,p}`-like seminorm `||v||_{1,p,h}` and per-element
    /// contributions `||v_T||_{1,p,T}`.
    pub fn seminorm(&self, v: &HybridVector, p: f64) -> Result<(f64, Vec<f64>)> {
        let qd = default_quad_degree(self.k);
        let parts = try_map_collect(self.execution, self.mesh.num_elements(), |t| {
            self.operators[t].seminorm_pow(&self.mesh, &self.gather(t, v), p, qd)
        })?;
        let total: f64 = parts.iter().sum();
        Ok((total.powf(1.0 / p), parts.iter().map(|s| s.powf(1.0 / p)).collect()))
    }
}
