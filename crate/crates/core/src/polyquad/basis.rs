use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec2};

use super::QuadRule;

/// `dim P^l` in two space variables.
pub const fn dim_2d(l: usize) -> usize {
    (l + 1) * (l + 2) / 2
}

/// Scaled monomials `((x - x_T) / h_T)^a ((y - y_T) / h_T)^b`, `a + b <= l`,
/// ordered by total degree so that the first `dim_2d(m)` functions span
/// `P^m` for every `m <= l`.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub center: Vec2,
    pub scale: f64,
    pub degree: usize,
    exponents: Vec<(u32, u32)>,
}

impl ElementBasis {
    pub fn new(center: Vec2, scale: f64, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(dim_2d(degree));
        for d in 0..=degree as u32 {
            for b in 0..=d {
                exponents.push((d - b, b));
            }
        }
        Self {
            center,
            scale,
            degree,
            exponents,
        }
    }

    pub fn for_element(mesh: &Mesh, t: usize, degree: usize) -> Self {
        let e = mesh.element(t);
        Self::new(e.centroid, e.diameter, degree)
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.exponents
    }

    fn powers(&self, x: Vec2) -> (Vec<f64>, Vec<f64>) {
        let s = (x - self.center) / self.scale;
        let n = self.degree + 1;
        let mut px = vec![1.0; n];
        let mut py = vec![1.0; n];
        for i in 1..n {
            px[i] = px[i - 1] * s.x;
            py[i] = py[i - 1] * s.y;
        }
        (px, py)
    }

    pub fn values_into(&self, x: Vec2, out: &mut [f64]) {
        let (px, py) = self.powers(x);
        for (o, &(a, b)) in out.iter_mut().zip(&self.exponents) {
            *o = px[a as usize] * py[b as usize];
        }
    }

    pub fn values(&self, x: Vec2) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.values_into(x, &mut out);
        out
    }

    pub fn gradients_into(&self, x: Vec2, out: &mut [Vec2]) {
        let (px, py) = self.powers(x);
        let inv = 1.0 / self.scale;
        for (o, &(a, b)) in out.iter_mut().zip(&self.exponents) {
            let (a, b) = (a as usize, b as usize);
            let dx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let dy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            *o = Vec2::new(dx * inv, dy * inv);
        }
    }

    pub fn gradients(&self, x: Vec2) -> Vec<Vec2> {
        let mut out = vec![Vec2::zeros(); self.dim()];
        self.gradients_into(x, &mut out);
        out
    }

    /// Evaluates `sum_i coeffs[i] phi_i(x)`; `coeffs` may be shorter than
    /// the basis (lower-degree truncation).
    pub fn evaluate(&self, coeffs: &[f64], x: Vec2) -> f64 {
        let v = self.values(x);
        coeffs.iter().zip(&v).map(|(c, v)| c * v).sum()
    }

    pub fn evaluate_gradient(&self, coeffs: &[f64], x: Vec2) -> Vec2 {
        let g = self.gradients(x);
        coeffs
            .iter()
            .zip(&g)
            .fold(Vec2::zeros(), |acc, (c, g)| acc + g * *c)
    }
}

/// Scaled monomials `((x - x_F) . t_F / h_F)^j`, `j <= l`, in the face
/// tangential coordinate.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub center: Vec2,
    pub tangent: Vec2,
    pub scale: f64,
    pub degree: usize,
}

impl FaceBasis {
    pub fn for_face(mesh: &Mesh, f: usize, degree: usize) -> Self {
        let face = mesh.face(f);
        Self {
            center: face.centroid,
            tangent: face.tangent,
            scale: face.length,
            degree,
        }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn values_into(&self, x: Vec2, out: &mut [f64]) {
        let s = (x - self.center).dot(&self.tangent) / self.scale;
        let mut v = 1.0;
        for o in out.iter_mut().take(self.dim()) {
            *o = v;
            v *= s;
        }
    }

    pub fn values(&self, x: Vec2) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.values_into(x, &mut out);
        out
    }

    pub fn evaluate(&self, coeffs: &[f64], x: Vec2) -> f64 {
        let v = self.values(x);
        coeffs.iter().zip(&v).map(|(c, v)| c * v).sum()
    }
}

/// Values of `basis` at `points`, one row per point.
pub fn eval_basis(basis: &ElementBasis, points: &[Vec2]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(points.len(), basis.dim());
    let mut row = vec![0.0; basis.dim()];
    for (i, &x) in points.iter().enumerate() {
        basis.values_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Partial derivatives of `basis` at `points`: `(d/dx, d/dy)`, one row per point.
pub fn eval_basis_grad(basis: &ElementBasis, points: &[Vec2]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut dx = DMatrix::zeros(points.len(), basis.dim());
    let mut dy = DMatrix::zeros(points.len(), basis.dim());
    let mut row = vec![Vec2::zeros(); basis.dim()];
    for (i, &x) in points.iter().enumerate() {
        basis.gradients_into(x, &mut row);
        for (j, g) in row.iter().enumerate() {
            dx[(i, j)] = g.x;
            dy[(i, j)] = g.y;
        }
    }
    (dx, dy)
}

/// Gram matrix `int phi_i phi_j` of `values` (rows = quadrature points).
pub fn gram(values: &DMatrix<f64>, rule: &QuadRule) -> DMatrix<f64> {
    let mut weighted = values.clone();
    for (i, &w) in rule.weights.iter().enumerate() {
        weighted.row_mut(i).scale_mut(w);
    }
    values.tr_mul(&weighted)
}

pub fn element_mass(basis: &ElementBasis, rule: &QuadRule) -> DMatrix<f64> {
    gram(&eval_basis(basis, &rule.points), rule)
}

pub fn face_mass(basis: &FaceBasis, rule: &QuadRule) -> DMatrix<f64> {
    let mut values = DMatrix::zeros(rule.len(), basis.dim());
    let mut row = vec![0.0; basis.dim()];
    for (i, &x) in rule.points.iter().enumerate() {
        basis.values_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    gram(&values, rule)
}

/// Spectral condition number of a symmetric positive definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// Gram-Schmidt orthonormalization expressed as a change of basis: row `i`
/// of the result holds the coefficients of the `i`-th orthonormal function in
/// the monomial basis. Used only for conditioning experiments.
pub fn orthonormalization(mass: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("basis orthonormalization".into()))?;
    let l = chol.l();
    l.solve_lower_triangular(&DMatrix::identity(mass.nrows(), mass.ncols()))
        .ok_or_else(|| Error::SingularMatrix("basis orthonormalization".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyquad::{element_quadrature, face_quadrature};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimensions() {
        for l in 0..6 {
            let b = ElementBasis::new(Vec2::zeros(), 1.0, l);
            assert_eq!(b.dim(), (l + 1) * (l + 2) / 2);
            assert_eq!(b.dim(), dim_2d(l));
        }
        let m = Mesh::structured_triangular(1).unwrap();
        assert_eq!(FaceBasis::for_face(&m, 0, 3).dim(), 4);
    }

    #[test]
    fn constant_and_linear_members() {
        let b = ElementBasis::new(Vec2::new(0.3, 0.2), 0.5, 2);
        let x = Vec2::new(0.9, -0.4);
        let g = b.gradients(x);
        assert_eq!(b.values(x)[0], 1.0);
        assert_eq!(g[0], Vec2::zeros());
        assert!((g[1] - Vec2::new(2.0, 0.0)).norm() < 1e-15);
        assert!((g[2] - Vec2::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = ElementBasis::new(Vec2::new(0.4, 0.6), 0.25, 4);
        let step = 1e-6 * b.scale;
        for _ in 0..50 {
            let x = b.center + Vec2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            let g = b.gradients(x);
            for (dir, e) in [Vec2::new(step, 0.0), Vec2::new(0.0, step)].iter().enumerate() {
                let fp = b.values(x + e);
                let fm = b.values(x - e);
                for i in 0..b.dim() {
                    let fd = (fp[i] - fm[i]) / (2.0 * step);
                    let exact = if dir == 0 { g[i].x } else { g[i].y };
                    let scale = g[i].norm().max(1.0 / b.scale);
                    assert!((fd - exact).abs() <= 1e-7 * scale, "i={i} fd={fd} exact={exact}");
                }
            }
        }
    }

    #[test]
    fn mass_matrices_are_spd() {
        let m = Mesh::structured_triangular(2).unwrap();
        for t in 0..m.num_elements() {
            let b = ElementBasis::for_element(&m, t, 4);
            let rule = element_quadrature(&m, t, 8).unwrap();
            let mass = element_mass(&b, &rule);
            assert!((mass.clone() - mass.transpose()).amax() < 1e-15);
            assert!(mass.clone().cholesky().is_some());
        }
        for f in 0..m.num_faces() {
            let b = FaceBasis::for_face(&m, f, 3);
            let rule = face_quadrature(&m, f, 6).unwrap();
            assert!(face_mass(&b, &rule).cholesky().is_some());
        }
    }

    #[test]
    fn conditioning_is_refinement_invariant() {
        for l in 1..=4 {
            let cond = |n: usize| {
                let m = Mesh::structured_triangular(n).unwrap();
                let b = ElementBasis::for_element(&m, 0, l);
                condition_number(&element_mass(&b, &element_quadrature(&m, 0, 2 * l).unwrap()))
            };
            let (c1, c2) = (cond(4), cond(32));
            assert!(c1.is_finite());
            assert!((c1 / c2 - 1.0).abs() < 0.1, "l={l}: {c1} vs {c2}");
        }
    }

    #[test]
    fn orthonormalized_basis_has_identity_mass() {
        let m = Mesh::structured_triangular(3).unwrap();
        let b = ElementBasis::for_element(&m, 4, 3);
        let rule = element_quadrature(&m, 4, 6).unwrap();
        let mass = element_mass(&b, &rule);
        let c = orthonormalization(&mass).unwrap();
        let id = &c * &mass * c.transpose();
        assert!((id - DMatrix::<f64>::identity(b.dim(), b.dim())).amax() < 1e-10);
    }
}
