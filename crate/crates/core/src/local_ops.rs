//! Element-local HHO operators.
//!
//! Local unknowns of an element `T` are laid out as the element block
//! (coefficients in `P^k(T)`) followed by one block per face of `T` in the
//! order of `Element::faces` (coefficients in `P^k(F)`). Every operator below
//! is a dense matrix acting on that vector.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec2};
use crate::polyquad::{
    dim_2d, element_quadrature, eval_basis, eval_basis_grad, face_quadrature, gram, ElementBasis,
    FaceBasis, QuadRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalDofMap {
    pub element: usize,
    pub element_dim: usize,
    pub face_dim: usize,
    pub num_faces: usize,
}

impl LocalDofMap {
    pub fn new(element: usize, k: usize, num_faces: usize) -> Self {
        Self {
            element,
            element_dim: dim_2d(k),
            face_dim: k + 1,
            num_faces,
        }
    }

    pub fn total(&self) -> usize {
        self.element_dim + self.num_faces * self.face_dim
    }

    pub fn element_range(&self) -> Range<usize> {
        0..self.element_dim
    }

    pub fn face_range(&self, local_face: usize) -> Range<usize> {
        let start = self.element_dim + local_face * self.face_dim;
        start..start + self.face_dim
    }
}

/// Default quadrature degree for projecting a non-polynomial function onto
/// `P^l`.
pub fn projection_degree(l: usize) -> usize {
    2 * l + 4
}

fn solve_spd(m: &DMatrix<f64>, rhs: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix(what.to_string()))?;
    Ok(chol.solve(&rhs))
}

/// L2-orthogonal projection of `f` onto `P^l(T)` in the scaled monomial basis.
pub fn project_element(
    mesh: &Mesh,
    t: usize,
    l: usize,
    f: impl Fn(Vec2) -> f64,
    quad_degree: usize,
) -> Result<DVector<f64>> {
    let basis = ElementBasis::for_element(mesh, t, l);
    let rule = element_quadrature(mesh, t, quad_degree.max(2 * l))?;
    let values = eval_basis(&basis, &rule.points);
    let mass = gram(&values, &rule);
    let mut rhs = DMatrix::zeros(basis.dim(), 1);
    for (q, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let fx = w * f(x);
        for i in 0..basis.dim() {
            rhs[(i, 0)] += fx * values[(q, i)];
        }
    }
    let sol = solve_spd(&mass, rhs, &format!("element mass of element {t}"))?;
    Ok(sol.column(0).into_owned())
}

/// L2-orthogonal projection of `f` onto `P^l(F)`.
pub fn project_face(
    mesh: &Mesh,
    f_id: usize,
    l: usize,
    f: impl Fn(Vec2) -> f64,
    quad_degree: usize,
) -> Result<DVector<f64>> {
    let basis = FaceBasis::for_face(mesh, f_id, l);
    let rule = face_quadrature(mesh, f_id, quad_degree.max(2 * l))?;
    let mut mass = DMatrix::zeros(basis.dim(), basis.dim());
    let mut rhs = DMatrix::zeros(basis.dim(), 1);
    let mut row = vec![0.0; basis.dim()];
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        basis.values_into(x, &mut row);
        let fx = f(x);
        for i in 0..basis.dim() {
            rhs[(i, 0)] += w * fx * row[i];
            for j in 0..basis.dim() {
                mass[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let sol = solve_spd(&mass, rhs, &format!("face mass of face {f_id}"))?;
    Ok(sol.column(0).into_owned())
}

/// Gradient reconstruction, potential reconstruction and boundary residual
/// of one element, together with the bases they are expressed in.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub dofs: LocalDofMap,
    pub degree: usize,
    /// Degree `k + 1` basis; its first `dim_2d(k)` members span `P^k(T)`.
    pub cell_basis: ElementBasis,
    pub face_bases: Vec<FaceBasis>,
    /// `int_T psi_i psi_j` for the degree `k + 1` basis.
    pub cell_mass: DMatrix<f64>,
    pub face_masses: Vec<DMatrix<f64>>,
    /// `G_T`: rows `c * dim_2d(k) + i` hold component `c` of the coefficient
    /// on basis function `i`.
    pub gradient: DMatrix<f64>,
    /// `r_T` in the degree `k + 1` basis.
    pub potential: DMatrix<f64>,
    /// `Delta_dT` restricted to each face, in the face basis.
    pub boundary_residual: Vec<DMatrix<f64>>,
}

impl LocalOperators {
    pub fn new(mesh: &Mesh, t: usize, k: usize) -> Result<Self> {
        let element = mesh.element(t);
        let nf = element.faces.len();
        let dofs = LocalDofMap::new(t, k, nf);
        let n = dofs.total();
        let nk = dofs.element_dim;
        let nk1 = dim_2d(k + 1);
        let h_t = element.diameter;

        let cell_basis = ElementBasis::for_element(mesh, t, k + 1);
        let face_bases: Vec<FaceBasis> = element
            .faces
            .iter()
            .map(|ef| FaceBasis::for_face(mesh, ef.face, k))
            .collect();

        // products of two degree k+1 functions
        let cell_rule = element_quadrature(mesh, t, 2 * k + 2)?;
        let values = eval_basis(&cell_basis, &cell_rule.points);
        let (dx, dy) = eval_basis_grad(&cell_basis, &cell_rule.points);
        let cell_mass = gram(&values, &cell_rule);
        let mass_k = cell_mass.view((0, 0), (nk, nk)).into_owned();

        // weighted copies for the mixed integrals
        let mut wvalues = values.clone();
        for (q, &w) in cell_rule.weights.iter().enumerate() {
            wvalues.row_mut(q).scale_mut(w);
        }
        // stiffness and int_T d_c psi_i phi_j
        let stiffness = dx.tr_mul(&scale_rows(&dx, &cell_rule)) + dy.tr_mul(&scale_rows(&dy, &cell_rule));
        let dpsi_phi = [
            dx.tr_mul(&wvalues.columns(0, nk)),
            dy.tr_mul(&wvalues.columns(0, nk)),
        ];

        // face integrals
        let mut face_masses = Vec::with_capacity(nf);
        // int_F chi_i psi_j, degree k+1 element basis restricted to F
        let mut face_trace = Vec::with_capacity(nf);
        let mut face_rules: Vec<QuadRule> = Vec::with_capacity(nf);
        for (fi, ef) in element.faces.iter().enumerate() {
            let rule = face_quadrature(mesh, ef.face, 2 * k + 2)?;
            let fb = &face_bases[fi];
            let mut chi = DMatrix::zeros(rule.len(), fb.dim());
            let mut row = vec![0.0; fb.dim()];
            for (q, &x) in rule.points.iter().enumerate() {
                fb.values_into(x, &mut row);
                for j in 0..fb.dim() {
                    chi[(q, j)] = row[j];
                }
            }
            let psi = eval_basis(&cell_basis, &rule.points);
            face_masses.push(gram(&chi, &rule));
            face_trace.push(chi.tr_mul(&scale_rows(&psi, &rule)));
            face_rules.push(rule);
        }

        // gradient reconstruction: mass * G = B
        let mut b_grad = DMatrix::zeros(2 * nk, n);
        for c in 0..2 {
            for i in 0..nk {
                for j in 0..nk {
                    b_grad[(c * nk + i, j)] = dpsi_phi[c][(j, i)];
                }
            }
        }
        for (fi, ef) in element.faces.iter().enumerate() {
            let normal = [ef.normal.x, ef.normal.y];
            let rule = &face_rules[fi];
            let psi = eval_basis(&cell_basis, &rule.points);
            // int_F psi_j phi_i for j, i < nk
            let cell_cell = psi.columns(0, nk).tr_mul(&scale_rows(&psi.columns(0, nk).into_owned(), rule));
            let range = dofs.face_range(fi);
            for c in 0..2 {
                for i in 0..nk {
                    for j in 0..nk {
                        b_grad[(c * nk + i, j)] -= normal[c] * cell_cell[(j, i)];
                    }
                    for (jj, col) in range.clone().enumerate() {
                        // face_trace[fi] is (chi_jj, psi_i)
                        b_grad[(c * nk + i, col)] += normal[c] * face_trace[fi][(jj, i)];
                    }
                }
            }
        }
        let mut gradient = DMatrix::zeros(2 * nk, n);
        for c in 0..2 {
            let rhs = b_grad.rows(c * nk, nk).into_owned();
            let sol = solve_spd(&mass_k, rhs, &format!("gradient mass of element {t}"))?;
            gradient.rows_mut(c * nk, nk).copy_from(&sol);
        }

        // potential reconstruction on the non-constant modes, then fix the mean
        let rhs_r = &dpsi_phi[0] * gradient.rows(0, nk) + &dpsi_phi[1] * gradient.rows(nk, nk);
        let s_sub = stiffness.view((1, 1), (nk1 - 1, nk1 - 1)).into_owned();
        let x = solve_spd(
            &s_sub,
            rhs_r.rows(1, nk1 - 1).into_owned(),
            &format!("potential stiffness of element {t}"),
        )?;
        let mut potential = DMatrix::zeros(nk1, n);
        potential.rows_mut(1, nk1 - 1).copy_from(&x);
        let moments = cell_mass.row(0); // int_T psi_j, since psi_0 = 1
        for col in 0..n {
            let mut mean = 0.0;
            if col < nk {
                mean += moments[col];
            }
            for i in 1..nk1 {
                mean -= moments[i] * potential[(i, col)];
            }
            potential[(0, col)] = mean / element.area;
        }

        // boundary residual
        let mass_k_k1 = cell_mass.rows(0, nk).into_owned();
        let mut proj_cell = solve_spd(
            &mass_k,
            &mass_k_k1 * &potential,
            &format!("element mass of element {t}"),
        )?;
        for i in 0..nk {
            proj_cell[(i, i)] -= 1.0;
        }
        let mut boundary_residual = Vec::with_capacity(nf);
        for fi in 0..nf {
            let trace = &face_trace[fi];
            let rhs = trace * &potential - trace.columns(0, nk) * &proj_cell;
            let mut d = solve_spd(
                &face_masses[fi],
                rhs,
                &format!("face mass of face {}", element.faces[fi].face),
            )?;
            for (jj, col) in dofs.face_range(fi).enumerate() {
                d[(jj, col)] -= 1.0;
            }
            d /= h_t;
            boundary_residual.push(d);
        }

        Ok(Self {
            dofs,
            degree: k,
            cell_basis,
            face_bases,
            cell_mass,
            face_masses,
            gradient,
            potential,
            boundary_residual,
        })
    }

    pub fn element_dim(&self) -> usize {
        self.dofs.element_dim
    }

    /// Local interpolate `I_T u`.
    pub fn interpolate(
        &self,
        mesh: &Mesh,
        u: impl Fn(Vec2) -> f64,
        quad_degree: usize,
    ) -> Result<DVector<f64>> {
        let t = self.dofs.element;
        let mut out = DVector::zeros(self.dofs.total());
        let cell = project_element(mesh, t, self.degree, &u, quad_degree)?;
        out.rows_mut(0, self.dofs.element_dim).copy_from(&cell);
        for (fi, ef) in mesh.element(t).faces.iter().enumerate() {
            let face = project_face(mesh, ef.face, self.degree, &u, quad_degree)?;
            let r = self.dofs.face_range(fi);
            out.rows_mut(r.start, r.len()).copy_from(&face);
        }
        Ok(out)
    }

    /// `G_T v` evaluated at `x`.
    pub fn reconstructed_gradient_at(&self, coeffs: &DVector<f64>, x: Vec2) -> Vec2 {
        let nk = self.dofs.element_dim;
        let phi = self.cell_basis.values(x);
        let mut g = Vec2::zeros();
        for i in 0..nk {
            g.x += coeffs[i] * phi[i];
            g.y += coeffs[nk + i] * phi[i];
        }
        g
    }

    /// `v_T(x)` for a local vector.
    pub fn cell_value(&self, local: &DVector<f64>, x: Vec2) -> f64 {
        let nk = self.dofs.element_dim;
        self.cell_basis.evaluate(&local.as_slice()[..nk], x)
    }

    pub fn cell_gradient(&self, local: &DVector<f64>, x: Vec2) -> Vec2 {
        let nk = self.dofs.element_dim;
        self.cell_basis.evaluate_gradient(&local.as_slice()[..nk], x)
    }

    pub fn face_value(&self, local: &DVector<f64>, local_face: usize, x: Vec2) -> f64 {
        let r = self.dofs.face_range(local_face);
        self.face_bases[local_face].evaluate(&local.as_slice()[r], x)
    }

    /// `||v_T||_{1,q,T}^q`.
    pub fn seminorm_pow(
        &self,
        mesh: &Mesh,
        local: &DVector<f64>,
        q: f64,
        quad_degree: usize,
    ) -> Result<f64> {
        let t = self.dofs.element;
        let rule = element_quadrature(mesh, t, quad_degree)?;
        let mut total = rule.integrate(|x| self.cell_gradient(local, x).norm().powf(q));
        for (fi, ef) in mesh.element(t).faces.iter().enumerate() {
            let h_f = mesh.face(ef.face).diameter();
            let frule = face_quadrature(mesh, ef.face, quad_degree)?;
            let jump = frule.integrate(|x| {
                (self.face_value(local, fi, x) - self.cell_value(local, x))
                    .abs()
                    .powf(q)
            });
            total += h_f.powf(1.0 - q) * jump;
        }
        Ok(total)
    }

    /// `||v_T||_{1,q,T}`.
    pub fn seminorm(&self, mesh: &Mesh, local: &DVector<f64>, q: f64, quad_degree: usize) -> Result<f64> {
        Ok(self.seminorm_pow(mesh, local, q, quad_degree)?.powf(1.0 / q))
    }
}

fn scale_rows(m: &DMatrix<f64>, rule: &QuadRule) -> DMatrix<f64> {
    let mut out = m.clone();
    for (q, &w) in rule.weights.iter().enumerate() {
        out.row_mut(q).scale_mut(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(coeffs: &[f64], degree: usize) -> impl Fn(Vec2) -> f64 + '_ {
        let basis = ElementBasis::new(Vec2::new(0.37, 0.61), 1.0, degree);
        move |x| basis.evaluate(coeffs, x)
    }

    fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dof_map_blocks_cover_local_vector() {
        let map = LocalDofMap::new(0, 2, 3);
        assert_eq!(map.total(), 6 + 9);
        assert_eq!(map.element_range(), 0..6);
        assert_eq!(map.face_range(0), 6..9);
        assert_eq!(map.face_range(2), 12..15);
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mesh::structured_triangular(3).unwrap();
        for l in 0..=3 {
            let c = random_coeffs(&mut rng, dim_2d(l));
            // express in the element's own basis and compare pointwise
            let f = poly(&c, l);
            let p = project_element(&m, 5, l, &f, 2 * l).unwrap();
            let basis = ElementBasis::for_element(&m, 5, l);
            let x = m.element(5).centroid + Vec2::new(0.01, -0.02);
            assert!((basis.evaluate(p.as_slice(), x) - f(x)).abs() < 1e-12);
            let pf = project_face(&m, 3, l, &f, 2 * l).unwrap();
            let fb = FaceBasis::for_face(&m, 3, l);
            let xf = m.face(3).centroid;
            assert!((fb.evaluate(pf.as_slice(), xf) - f(xf)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let m = Mesh::structured_triangular(2).unwrap();
        let f = |x: Vec2| (3.0 * x.x).sin() * (x.y * x.y).exp();
        for l in 0..=3 {
            let q = 16;
            let p = project_element(&m, 1, l, f, q).unwrap();
            let basis = ElementBasis::for_element(&m, 1, l);
            let rule = element_quadrature(&m, 1, q).unwrap();
            let scale = rule.integrate(|x| f(x).abs());
            for i in 0..basis.dim() {
                let r = rule.integrate(|x| (basis.evaluate(p.as_slice(), x) - f(x)) * basis.values(x)[i]);
                assert!(r.abs() <= 1e-11 * scale, "l={l} i={i} r={r}");
            }
        }
    }

    #[test]
    fn function_orthogonal_to_polynomials_projects_to_zero() {
        // orthogonalize a degree-l+1 monomial against P^l with the exact mass matrix
        let m = Mesh::structured_triangular(2).unwrap();
        for l in 0..=3 {
            let big = ElementBasis::for_element(&m, 2, l + 1);
            let rule = element_quadrature(&m, 2, 2 * l + 2).unwrap();
            let mass = crate::polyquad::element_mass(&big, &rule);
            let nl = dim_2d(l);
            let target = big.dim() - 1;
            let mll = mass.view((0, 0), (nl, nl)).into_owned();
            let rhs = mass.view((0, target), (nl, 1)).into_owned();
            let c = mll.cholesky().unwrap().solve(&rhs);
            let mut coeffs = vec![0.0; big.dim()];
            coeffs[target] = 1.0;
            for i in 0..nl {
                coeffs[i] = -c[(i, 0)];
            }
            let p = project_element(&m, 2, l, |x| big.evaluate(&coeffs, x), 2 * l + 2).unwrap();
            assert!(p.amax() <= 1e-11, "l={l}: {}", p.amax());
        }
    }

    #[test]
    fn projection_error_decays_at_rate_l_plus_one() {
        let f = |x: Vec2| (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin();
        for l in 0..=2 {
            let mut errs = Vec::new();
            let mut hs = Vec::new();
            for n in [4, 8, 16] {
                let m = Mesh::structured_triangular(n).unwrap();
                let mut e2 = 0.0;
                for t in 0..m.num_elements() {
                    let p = project_element(&m, t, l, f, 12).unwrap();
                    let b = ElementBasis::for_element(&m, t, l);
                    let rule = element_quadrature(&m, t, 12).unwrap();
                    e2 += rule.integrate(|x| (b.evaluate(p.as_slice(), x) - f(x)).powi(2));
                }
                errs.push(e2.sqrt());
                hs.push(m.h());
            }
            let rate = (errs[1] / errs[2]).ln() / (hs[1] / hs[2]).ln();
            assert!((rate - (l as f64 + 1.0)).abs() < 0.15, "l={l} rate={rate}");
        }
    }

    #[test]
    fn face_projection_error_decays() {
        let f = |x: Vec2| (2.0 * x.x + x.y).exp();
        for l in 0..=2 {
            let mut errs = Vec::new();
            for n in [4, 8, 16] {
                let m = Mesh::structured_triangular(n).unwrap();
                // face 0 of the mesh shrinks with n
                let p = project_face(&m, 0, l, f, 14).unwrap();
                let fb = FaceBasis::for_face(&m, 0, l);
                let rule = face_quadrature(&m, 0, 14).unwrap();
                errs.push(rule.integrate(|x| (fb.evaluate(p.as_slice(), x) - f(x)).powi(2)).sqrt());
            }
            // L2(F) error ~ h^{l+1} |F|^{1/2}
            let rate = (errs[1] / errs[2]).ln() / 2f64.ln();
            assert!((rate - (l as f64 + 1.5)).abs() < 0.15, "l={l} rate={rate}");
        }
    }

    #[test]
    fn constant_vector_has_zero_gradient_and_residual() {
        let m = Mesh::structured_triangular(2).unwrap();
        for k in 0..=3 {
            let ops = LocalOperators::new(&m, 3, k).unwrap();
            let mut v = DVector::zeros(ops.dofs.total());
            v[0] = 2.5;
            for fi in 0..3 {
                v[ops.dofs.face_range(fi).start] = 2.5;
            }
            let g = (&ops.gradient * &v).amax();
            assert!(g < 1e-14 * ops.gradient.amax(), "k={k}: {g} vs {}", ops.gradient.amax());
            let r = &ops.potential * &v;
            let (e0, e1) = ((r[0] - 2.5).abs(), r.rows(1, r.len() - 1).amax());
            // degree-4 monomials are ill-conditioned enough to lose ~5 digits
            assert!(e0 < 1e-12 && e1 < 1e-10, "k={k}: {e0} {e1}");
            for d in &ops.boundary_residual {
                let e = (d * &v).amax();
                assert!(e < 1e-12 * d.amax(), "k={k}: {e} vs {}", d.amax());
            }
        }
    }

    #[test]
    fn potential_reproduces_degree_k_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mesh::structured_triangular(3).unwrap();
        for k in 0..=3 {
            for t in [0, 7] {
                let ops = LocalOperators::new(&m, t, k).unwrap();
                let c = random_coeffs(&mut rng, dim_2d(k + 1));
                let w = poly(&c, k + 1);
                let iv = ops.interpolate(&m, &w, 2 * k + 4).unwrap();
                let r = &ops.potential * &iv;
                for x in [m.element(t).centroid, m.element_points(t)[1]] {
                    let val = ops.cell_basis.evaluate(r.as_slice(), x);
                    assert!((val - w(x)).abs() < 1e-10, "k={k}: {val} vs {}", w(x));
                }
            }
        }
    }

    #[test]
    fn interpolate_one() {
        let m = Mesh::structured_triangular(2).unwrap();
        let ops = LocalOperators::new(&m, 0, 2).unwrap();
        let iv = ops.interpolate(&m, |_| 1.0, 4).unwrap();
        for i in 0..iv.len() {
            let expect = if i == 0 || (i >= 6 && (i - 6) % 3 == 0) { 1.0 } else { 0.0 };
            assert!((iv[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_satisfies_defining_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mesh::structured_triangular(2).unwrap();
        for k in 0..=3 {
            let t = 6;
            let ops = LocalOperators::new(&m, t, k).unwrap();
            let nk = ops.element_dim();
            let v = DVector::from_vec(random_coeffs(&mut rng, ops.dofs.total()));
            let gv = &ops.gradient * &v;
            let qd = 2 * k + 2;
            let rule = element_quadrature(&m, t, qd).unwrap();
            for _ in 0..10 {
                let tau_c = [random_coeffs(&mut rng, nk), random_coeffs(&mut rng, nk)];
                let tau = |x: Vec2| {
                    Vec2::new(
                        ops.cell_basis.evaluate(&tau_c[0], x),
                        ops.cell_basis.evaluate(&tau_c[1], x),
                    )
                };
                let lhs = rule.integrate(|x| ops.reconstructed_gradient_at(&gv, x).dot(&tau(x)));
                let mut rhs = rule.integrate(|x| ops.cell_gradient(&v, x).dot(&tau(x)));
                for (fi, ef) in m.element(t).faces.iter().enumerate() {
                    let fr = face_quadrature(&m, ef.face, qd).unwrap();
                    rhs += fr.integrate(|x| {
                        (ops.face_value(&v, fi, x) - ops.cell_value(&v, x)) * tau(x).dot(&ef.normal)
                    });
                }
                assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "k={k}");
            }
        }
    }

    #[test]
    fn potential_satisfies_defining_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Mesh::structured_triangular(2).unwrap();
        for k in 0..=3 {
            let t = 1;
            let ops = LocalOperators::new(&m, t, k).unwrap();
            let v = DVector::from_vec(random_coeffs(&mut rng, ops.dofs.total()));
            let gv = &ops.gradient * &v;
            let rv = &ops.potential * &v;
            let rule = element_quadrature(&m, t, 2 * k + 2).unwrap();
            let scale = rule.integrate(|x| ops.reconstructed_gradient_at(&gv, x).norm_squared()).sqrt();
            for i in 0..ops.cell_basis.dim() {
                let r = rule.integrate(|x| {
                    (ops.cell_basis.evaluate_gradient(rv.as_slice(), x)
                        - ops.reconstructed_gradient_at(&gv, x))
                    .dot(&ops.cell_basis.gradients(x)[i])
                });
                assert!(r.abs() < 1e-10 * scale.max(1.0));
            }
            let mean_r = rule.integrate(|x| ops.cell_basis.evaluate(rv.as_slice(), x));
            let mean_v = rule.integrate(|x| ops.cell_value(&v, x));
            assert!((mean_r - mean_v).abs() < 1e-12);
        }
    }

    #[test]
    fn commutation_with_transcendental_function() {
        let m = Mesh::structured_triangular(4).unwrap();
        let pi = std::f64::consts::PI;
        let u = |x: Vec2| (pi * x.x).sin() * (pi * x.y).sin();
        let gu = |x: Vec2| {
            Vec2::new(
                pi * (pi * x.x).cos() * (pi * x.y).sin(),
                pi * (pi * x.x).sin() * (pi * x.y).cos(),
            )
        };
        for k in 1..=3 {
            let t = 9;
            let ops = LocalOperators::new(&m, t, k).unwrap();
            let iv = ops.interpolate(&m, u, 24).unwrap();
            let g = &ops.gradient * &iv;
            let px = project_element(&m, t, k, |x| gu(x).x, 24).unwrap();
            let py = project_element(&m, t, k, |x| gu(x).y, 24).unwrap();
            let nk = ops.element_dim();
            let diff = (g.rows(0, nk) - px).amax().max((g.rows(nk, nk) - py).amax());
            assert!(diff < 1e-11, "k={k}: {diff}");
        }
    }

    #[test]
    fn seminorm_properties() {
        let m = Mesh::structured_triangular(2).unwrap();
        let ops = LocalOperators::new(&m, 2, 2).unwrap();
        let iv = ops.interpolate(&m, |x| x.x, 6).unwrap();
        let q = 1.7;
        let s = ops.seminorm(&m, &iv, q, 8).unwrap();
        // face blocks equal the element trace, so only |grad x| = 1 remains
        assert!((s - m.element(2).area.powf(1.0 / q)).abs() < 1e-12);
        let one = ops.interpolate(&m, |_| 1.0, 4).unwrap();
        assert!(ops.seminorm(&m, &one, q, 8).unwrap() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = DVector::from_vec(random_coeffs(&mut rng, ops.dofs.total()));
        let s1 = ops.seminorm(&m, &v, q, 8).unwrap();
        let s2 = ops.seminorm(&m, &(&v * 3.0), q, 8).unwrap();
        assert!((s2 - 3.0 * s1).abs() < 1e-12 * s2);
    }

    #[test]
    fn rebuild_is_reproducible() {
        let m = Mesh::structured_triangular(3).unwrap();
        let a = LocalOperators::new(&m, 4, 3).unwrap();
        let b = LocalOperators::new(&m, 4, 3).unwrap();
        assert!((&a.gradient - &b.gradient).amax() <= 1e-13 * a.gradient.amax());
        assert!((&a.potential - &b.potential).amax() <= 1e-13 * a.potential.amax());
    }
}
