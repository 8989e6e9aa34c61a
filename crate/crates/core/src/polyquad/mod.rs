//! Scaled monomial bases and quadrature rules on elements and faces.

mod basis;
mod quadrature;

pub use basis::{
    condition_number, dim_2d, element_mass, eval_basis, eval_basis_grad, face_mass, gram,
    orthonormalization, ElementBasis, FaceBasis,
};
pub use quadrature::{
    element_quadrature, exact_monomial_integral, face_quadrature, gauss_legendre, segment_rule, triangle_rule, QuadRule,
    MAX_QUADRATURE_DEGREE,
};
