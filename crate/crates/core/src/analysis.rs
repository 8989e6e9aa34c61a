//! Energy errors, empirical orders of convergence and regime diagnostics.

use std::fmt;

use crate::assembly::{Discretization, HybridVector};
use crate::error::Result;
use crate::mesh::{Mesh, Vec2};
use crate::par::{map_collect, Execution};

/// Barycentric sampling resolution per element for `ess inf`.
pub const ELEMENT_SAMPLES: usize = 21;
/// Sampling points per face for `ess inf`.
pub const FACE_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub n: usize,
    pub h: f64,
    pub num_elements: usize,
    pub ndof: usize,
    pub error: f64,
    /// `||u_h - I_h u||_{1,p,T}` per element.
    pub per_element: Vec<f64>,
    pub newton_iterations: usize,
    pub wall_ms: f64,
}

/// `||u_h - I_h u||_{1,p,h}` and its per-element contributions.
pub fn energy_error(
    disc: &Discretization,
    uh: &HybridVector,
    u: &(dyn Fn(Vec2) -> f64 + Sync),
    p: f64,
) -> Result<(f64, Vec<f64>)> {
    let iu = disc.interpolate(u)?;
    disc.seminorm(&uh.add_scaled(-1.0, &iu), p)
}

/// `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)` for consecutive levels; `None` when
/// an error is not positive or the mesh sizes coincide.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] > 0.0 && e[1] > 0.0 && h[0] > 0.0 && h[1] > 0.0 && h[0] != h[1] {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Degenerate,
    Intermediate,
    NonDegenerate,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Degenerate => "degenerate",
            Self::Intermediate => "intermediate",
            Self::NonDegenerate => "non-degenerate",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    /// Local flux degeneracy `D_T` per element.
    pub per_element: Vec<f64>,
    pub eta_tilde: f64,
    pub regime: Regime,
    /// Bounds of the predicted convergence rate.
    pub predicted_rate: (f64, f64),
}

/// Regime number `eta = C h^{k+1} / min_T D_T` with `C/0 = inf`, `0/0 = 0`.
///
/// `degeneracy` is `delta + |grad u|` and `zeta` the stabilization field;
/// `D_T = min(inf_T degeneracy, inf_{dT} zeta)` is estimated by sampling.
/// Without a tabulated constant `C = 1` is used.
pub fn degeneracy_numbers(
    mesh: &Mesh,
    k: usize,
    p: f64,
    degeneracy: &(dyn Fn(Vec2) -> f64 + Sync),
    zeta: &(dyn Fn(Vec2) -> f64 + Sync),
    seminorm_constant: Option<f64>,
    execution: Execution,
) -> RegimeReport {
    degeneracy_numbers_sampled(
        mesh,
        k,
        p,
        degeneracy,
        zeta,
        seminorm_constant,
        (ELEMENT_SAMPLES, FACE_SAMPLES),
        execution,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn degeneracy_numbers_sampled(
    mesh: &Mesh,
    k: usize,
    p: f64,
    degeneracy: &(dyn Fn(Vec2) -> f64 + Sync),
    zeta: &(dyn Fn(Vec2) -> f64 + Sync),
    seminorm_constant: Option<f64>,
    (element_samples, face_samples): (usize, usize),
    execution: Execution,
) -> RegimeReport {
    let per_element = map_collect(execution, mesh.num_elements(), |t| {
        let el = mesh.element(t);
        let pts = mesh.element_points(t);
        let mut inner = f64::INFINITY;
        // fan of sub-triangles from the centroid; a single triangle is
        // sampled directly
        let tris: Vec<[Vec2; 3]> = if pts.len() == 3 {
            vec![[pts[0], pts[1], pts[2]]]
        } else {
            (0..pts.len()).map(|i| [el.centroid, pts[i], pts[(i + 1) % pts.len()]]).collect()
        };
        let m = (element_samples - 1).max(1);
        for tri in tris {
            for i in 0..=m {
                for j in 0..=m - i {
                    let (l1, l2) = (i as f64 / m as f64, j as f64 / m as f64);
                    let x = tri[0] * (1.0 - l1 - l2) + tri[1] * l1 + tri[2] * l2;
                    inner = inner.min(degeneracy(x));
                }
            }
        }
        let mut boundary = f64::INFINITY;
        let s = (face_samples - 1).max(1);
        for ef in &el.faces {
            let [a, b] = mesh.face_points(ef.face);
            for i in 0..=s {
                let x = a + (b - a) * (i as f64 / s as f64);
                boundary = boundary.min(zeta(x));
            }
        }
        inner.min(boundary).max(0.0)
    });
    let h = mesh.h();
    let hk = h.powi(k as i32 + 1);
    let c = seminorm_constant.unwrap_or(1.0);
    let min_d = per_element.iter().copied().fold(f64::INFINITY, f64::min);
    let num = c * hk;
    let eta_tilde = if min_d > 0.0 {
        num / min_d
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let regime = if eta_tilde >= 1.0 {
        Regime::Degenerate
    } else if eta_tilde <= num * (1.0 + 1e-12) {
        Regime::NonDegenerate
    } else {
        Regime::Intermediate
    };
    let lo = (k as f64 + 1.0) * (p - 1.0);
    let hi = k as f64 + 1.0;
    let predicted_rate = match regime {
        Regime::Degenerate => (lo, lo),
        Regime::NonDegenerate => (hi, hi),
        Regime::Intermediate => (lo, hi),
    };
    RegimeReport {
        per_element,
        eta_tilde,
        regime,
        predicted_rate,
    }
}
