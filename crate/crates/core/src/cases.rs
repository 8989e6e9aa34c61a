//! Manufactured test cases on the unit square, all with `mu = a = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;

use crate::analysis::{degeneracy_numbers, RegimeReport};
use crate::assembly::Problem;
use crate::error::{Error, Result};
use crate::flux::{Coefficient, FluxModel, StabModel};
use crate::mesh::{Mesh, Vec2};
use crate::par::Execution;

/// Below this gradient norm the direction `grad u / |grad u|` is treated as
/// undefined in the source term.
const GRAD_ZERO: f64 = 1e-13;

const BUMP_CENTERS: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)];
const BUMP_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    /// `u = sin(pi x) sin(pi y)` with a constant degeneracy parameter.
    NondegFlux,
    /// `delta = 0`, `u = sin(pi x) sin(pi y) + (pi + 1)(x + y)`.
    NondegPotential,
    /// `u = sin(pi x) sin(pi y)`, `delta` a sum of five bumps.
    NondegCouple,
    /// `delta = 0`, `u = exp(-10(|x - 1/2|^b + |y - 1/2|^b)) / 10`,
    /// `b = p + (k + 2)/4`.
    Degenerate,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::NondegFlux,
        CaseKind::NondegPotential,
        CaseKind::NondegCouple,
        CaseKind::Degenerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NondegFlux => "nondeg-flux",
            Self::NondegPotential => "nondeg-potential",
            Self::NondegCouple => "nondeg-couple",
            Self::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCase(s.to_string()))
    }
}

/// One instance of a case for given `p` and `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseSpec {
    pub kind: CaseKind,
    pub p: f64,
    pub k: usize,
    /// Constant degeneracy parameter (first case only, zero otherwise).
    pub delta: f64,
    /// `zeta = Z0 = sup (delta + |grad u|)`.
    pub zeta: f64,
    /// Constant standing for `|u|_{W^{k+2,inf}}` in the regime number;
    /// `None` when no value is tabulated.
    pub seminorm_constant: Option<f64>,
}

impl CaseSpec {
    /// `delta` is only meaningful for the first case and defaults to 1 there.
    pub fn new(kind: CaseKind, p: f64, k: usize, delta: Option<f64>) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::InvalidInput(format!("p = {p} is outside (1, 2]")));
        }
        if k > 3 {
            return Err(Error::InvalidInput(format!("k = {k} is outside 0..=3")));
        }
        let delta = match (kind, delta) {
            (CaseKind::NondegFlux, d) => {
                let d = d.unwrap_or(1.0);
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::InvalidInput(format!("delta = {d} must be a non-negative number")));
                }
                d
            }
            (_, None) => 0.0,
            (_, Some(_)) => {
                return Err(Error::InvalidInput(format!(
                    "--delta only applies to nondeg-flux, not {kind}"
                )))
            }
        };
        let seminorm_constant = match kind {
            CaseKind::Degenerate => None,
            _ => Some(2f64.powf((k as f64 - 1.0) / 2.0) * PI.powi(k as i32)),
        };
        let mut spec = Self {
            kind,
            p,
            k,
            delta,
            zeta: 0.0,
            seminorm_constant,
        };
        spec.zeta = match kind {
            CaseKind::NondegFlux => delta + PI,
            _ => spec.sampled_sup(400),
        };
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Exponent of the last case.
    pub fn beta(&self) -> f64 {
        self.p + (self.k as f64 + 2.0) / 4.0
    }

    /// `max (delta + |grad u|)` over a uniform `(m+1) x (m+1)` grid.
    pub fn sampled_sup(&self, m: usize) -> f64 {
        let mut best = 0f64;
        for i in 0..=m {
            for j in 0..=m {
                let x = Vec2::new(i as f64 / m as f64, j as f64 / m as f64);
                best = best.max(self.delta_at(x) + self.grad(x).norm());
            }
        }
        best
    }

    pub fn u(&self, x: Vec2) -> f64 {
        match self.kind {
            CaseKind::NondegFlux | CaseKind::NondegCouple => sinsin(x),
            CaseKind::NondegPotential => sinsin(x) + (PI + 1.0) * (x.x + x.y),
            CaseKind::Degenerate => {
                let b = self.beta();
                0.1 * (-10.0 * (pow_abs(x.x - 0.5, b) + pow_abs(x.y - 0.5, b))).exp()
            }
        }
    }

    pub fn grad(&self, x: Vec2) -> Vec2 {
        match self.kind {
            CaseKind::NondegFlux | CaseKind::NondegCouple => sinsin_grad(x),
            CaseKind::NondegPotential => sinsin_grad(x) + Vec2::new(PI + 1.0, PI + 1.0),
            CaseKind::Degenerate => {
                let b = self.beta();
                let u = self.u(x);
                Vec2::new(-10.0 * u * dpow(x.x - 0.5, b), -10.0 * u * dpow(x.y - 0.5, b))
            }
        }
    }

    pub fn hessian(&self, x: Vec2) -> Matrix2<f64> {
        match self.kind {
            CaseKind::NondegFlux | CaseKind::NondegCouple | CaseKind::NondegPotential => {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                let d = -PI * PI * sx * sy;
                let o = PI * PI * cx * cy;
                Matrix2::new(d, o, o, d)
            }
            CaseKind::Degenerate => {
                let b = self.beta();
                let u = self.u(x);
                let (gx, gy) = (dpow(x.x - 0.5, b), dpow(x.y - 0.5, b));
                let uxx = -10.0 * u * d2pow(x.x - 0.5, b) + 100.0 * u * gx * gx;
                let uyy = -10.0 * u * d2pow(x.y - 0.5, b) + 100.0 * u * gy * gy;
                let uxy = 100.0 * u * gx * gy;
                Matrix2::new(uxx, uxy, uxy, uyy)
            }
        }
    }

    pub fn delta_at(&self, x: Vec2) -> f64 {
        match self.kind {
            CaseKind::NondegFlux => self.delta,
            CaseKind::NondegCouple => bump_sum(x).0,
            _ => 0.0,
        }
    }

    pub fn grad_delta(&self, x: Vec2) -> Vec2 {
        match self.kind {
            CaseKind::NondegCouple => bump_sum(x).1,
            _ => Vec2::zeros(),
        }
    }

    /// `f = -div(mu (delta + |grad u|)^(p-2) grad u)` by the chain rule.
    /// Returns 0 where the closed form is singular (`delta + |grad u| = 0`
    /// or an infinite second derivative on the kink lines of the last case),
    /// a set of measure zero.
    pub fn source(&self, x: Vec2) -> f64 {
        let p = self.p;
        let g = self.grad(x);
        let n = g.norm();
        let a = self.delta_at(x) + n;
        if a == 0.0 {
            return 0.0;
        }
        let h = self.hessian(x);
        let mut dir = self.grad_delta(x);
        if n > GRAD_ZERO {
            dir += h * g / n;
        }
        let lap = h.trace();
        let f = if p == 2.0 {
            -lap
        } else {
            -((p - 2.0) * a.powf(p - 3.0) * dir.dot(&g) + a.powf(p - 2.0) * lap)
        };
        if f.is_finite() {
            f
        } else {
            0.0
        }
    }

    /// `-div sigma(x, grad u)` by nested central differences: the gradient of
    /// `u` with step `inner`, the divergence with step `outer`.
    pub fn source_finite_difference(&self, x: Vec2, outer: f64, inner: f64) -> f64 {
        let flux = self.flux_model();
        let grad_fd = |y: Vec2| {
            let ex = Vec2::new(inner, 0.0);
            let ey = Vec2::new(0.0, inner);
            Vec2::new(
                (self.u(y + ex) - self.u(y - ex)) / (2.0 * inner),
                (self.u(y + ey) - self.u(y - ey)) / (2.0 * inner),
            )
        };
        let mut div = 0.0;
        for c in 0..2 {
            let mut e = Vec2::zeros();
            e[c] = outer;
            let plus = flux.sigma(x + e, grad_fd(x + e))[c];
            let minus = flux.sigma(x - e, grad_fd(x - e))[c];
            div += (plus - minus) / (2.0 * outer);
        }
        -div
    }

    pub fn flux_model(&self) -> FluxModel {
        let delta = match self.kind {
            CaseKind::NondegCouple => Coefficient::variable(|x| bump_sum(x).0, 0.0, 1.0),
            _ => Coefficient::Constant(self.delta),
        };
        FluxModel::carreau_yasuda(self.p, 1.0, 1.0, delta)
    }

    pub fn stab_model(&self) -> StabModel {
        StabModel::for_flux(&self.flux_model(), Coefficient::Constant(self.zeta))
    }

    pub fn problem(&self) -> Problem {
        let (s, b) = (*self, *self);
        Problem::new(self.flux_model(), self.stab_model(), move |x| s.source(x), move |x| b.u(x))
    }

    /// Whether the boundary data vanish identically.
    pub fn homogeneous_boundary(&self) -> bool {
        matches!(self.kind, CaseKind::NondegFlux | CaseKind::NondegCouple)
    }

    pub fn regime(&self, mesh: &Mesh, execution: Execution) -> RegimeReport {
        let spec = *self;
        degeneracy_numbers(
            mesh,
            self.k,
            self.p,
            &move |x| spec.delta_at(x) + spec.grad(x).norm(),
            &move |_| spec.zeta,
            self.seminorm_constant,
            execution,
        )
    }
}

/// All four cases for the given exponent and degree (`delta = 1` for the
/// first one).
pub fn case_catalog(p: f64, k: usize) -> Result<Vec<CaseSpec>> {
    CaseKind::ALL.into_iter().map(|c| CaseSpec::new(c, p, k, None)).collect()
}

fn sinsin(x: Vec2) -> f64 {
    (PI * x.x).sin() * (PI * x.y).sin()
}

fn sinsin_grad(x: Vec2) -> Vec2 {
    let (sx, cx) = (PI * x.x).sin_cos();
    let (sy, cy) = (PI * x.y).sin_cos();
    Vec2::new(PI * cx * sy, PI * sx * cy)
}

/// `|t|^b`, with the limit 0 at `t = 0`.
fn pow_abs(t: f64, b: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(b)
    }
}

/// `d/dt |t|^b = b sign(t) |t|^(b-1)`.
fn dpow(t: f64, b: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        b * t.signum() * t.abs().powf(b - 1.0)
    }
}

/// `d2/dt2 |t|^b = b (b-1) |t|^(b-2)`; infinite at 0 when `b < 2`.
fn d2pow(t: f64, b: f64) -> f64 {
    if t == 0.0 {
        if b > 2.0 {
            0.0
        } else if b == 2.0 {
            2.0
        } else {
            f64::INFINITY
        }
    } else {
        b * (b - 1.0) * t.abs().powf(b - 2.0)
    }
}

/// Sum of `exp(1 - 1/(1 - 25 r^2))` over the bump centers, and its gradient.
fn bump_sum(x: Vec2) -> (f64, Vec2) {
    let inv_r2 = 1.0 / (BUMP_RADIUS * BUMP_RADIUS);
    let mut value = 0.0;
    let mut grad = Vec2::zeros();
    for (cx, cy) in BUMP_CENTERS {
        let d = x - Vec2::new(cx, cy);
        let s = inv_r2 * d.norm_squared();
        if s < 1.0 {
            let v = (1.0 - 1.0 / (1.0 - s)).exp();
            value += v;
            grad += d * (-v * 2.0 * inv_r2 / ((1.0 - s) * (1.0 - s)));
        }
    }
    (value, grad)
}
