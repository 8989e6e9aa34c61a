//! Carreau-Yasuda flux `sigma(x, xi) = mu (delta^a + |xi|^a)^((p-2)/a) xi` and
//! the face stabilization function `S_T(x, w) = gamma (zeta^p + |w|^p)^((p-2)/p) w`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;

use crate::mesh::Vec2;

/// Floor applied to `delta^a + |xi|^a` (resp. `zeta^p + |w|^p`) inside
/// linearizations only.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

pub type Field = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// A scalar coefficient field together with its essential bounds.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Variable { field: Field, min: f64, max: f64 },
}

impl Coefficient {
    pub fn variable(field: impl Fn(Vec2) -> f64 + Send + Sync + 'static, min: f64, max: f64) -> Self {
        Self::Variable {
            field: Arc::new(field),
            min,
            max,
        }
    }

    #[inline]
    pub fn at(&self, x: Vec2) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Variable { field, .. } => field(x),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Constant(c) => (*c, *c),
            Self::Variable { min, max, .. } => (*min, *max),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Variable { min, max, .. } => write!(f, "Variable[{min}, {max}]"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FluxModel {
    pub p: f64,
    pub mu: Coefficient,
    pub a: Coefficient,
    pub delta: Coefficient,
}

/// The flux frozen at one point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFlux {
    pub p: f64,
    pub mu: f64,
    pub a: f64,
    pub delta: f64,
}

impl PointFlux {
    pub fn sigma(&self, xi: Vec2) -> Vec2 {
        let norm = xi.norm();
        if norm == 0.0 {
            return Vec2::zeros();
        }
        let base = self.delta.powf(self.a) + norm.powf(self.a);
        xi * (self.mu * base.powf((self.p - 2.0) / self.a))
    }

    /// Flux with `delta^a + |xi|^a` floored at `eps^a`.
    pub fn sigma_regularized(&self, xi: Vec2, eps: f64) -> Vec2 {
        let norm = xi.norm();
        if norm == 0.0 {
            return Vec2::zeros();
        }
        let base = (self.delta.powf(self.a) + norm.powf(self.a)).max(eps.powf(self.a));
        xi * (self.mu * base.powf((self.p - 2.0) / self.a))
    }

    /// Derivative of [`PointFlux::sigma_regularized`] with respect to `xi`.
    /// It coincides with the exact Jacobian wherever the floor is inactive.
    pub fn jacobian(&self, xi: Vec2, eps: f64) -> Matrix2<f64> {
        let norm = xi.norm();
        let base = self.delta.powf(self.a) + norm.powf(self.a);
        let floor = eps.powf(self.a);
        let m = (self.p - 2.0) / self.a;
        if base < floor {
            return Matrix2::identity() * (self.mu * floor.powf(m));
        }
        let scalar = self.mu * base.powf(m);
        let mut jac = Matrix2::identity() * scalar;
        if norm > 0.0 {
            // m a A^(m-1) |xi|^(a-2) xi xi^T
            let c = scalar * m * self.a * norm.powf(self.a) / (base * norm * norm);
            jac += xi * xi.transpose() * c;
        }
        jac
    }
}

impl FluxModel {
    /// Constant-coefficient Carreau-Yasuda flux.
    pub fn carreau_yasuda(p: f64, mu: f64, a: f64, delta: Coefficient) -> Self {
        Self {
            p,
            mu: Coefficient::Constant(mu),
            a: Coefficient::Constant(a),
            delta,
        }
    }

    /// `|xi|^(p-2) xi`, scaled by `mu`.
    pub fn p_laplacian(p: f64, mu: f64) -> Self {
        Self::carreau_yasuda(p, mu, 1.0, Coefficient::Constant(0.0))
    }

    #[inline]
    pub fn at(&self, x: Vec2) -> PointFlux {
        PointFlux {
            p: self.p,
            mu: self.mu.at(x),
            a: self.a.at(x),
            delta: self.delta.at(x),
        }
    }

    pub fn sigma(&self, x: Vec2, xi: Vec2) -> Vec2 {
        self.at(x).sigma(xi)
    }

    pub fn sigma_jacobian(&self, x: Vec2, xi: Vec2) -> Matrix2<f64> {
        self.at(x).jacobian(xi, DEFAULT_REGULARIZATION)
    }

    /// Hölder-continuity and strong-monotonicity constants `(sigma_hc, sigma_sm)`.
    pub fn framing_constants(&self) -> (f64, f64) {
        let (mu_min, mu_max) = self.mu.bounds();
        let (a_min, a_max) = self.a.bounds();
        framing_constants(self.p, (mu_min, mu_max), (a_min, a_max))
    }

    pub fn is_linear(&self) -> bool {
        self.p == 2.0
    }
}

fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

fn negative_part(x: f64) -> f64 {
    -x.min(0.0)
}

/// `(sigma_hc, sigma_sm)` for the Carreau-Yasuda family with
/// `mu in [mu_-, mu_+]` and `a in [a_-, a_+]`.
pub fn framing_constants(p: f64, mu: (f64, f64), a: (f64, f64)) -> (f64, f64) {
    let (mu_minus, mu_plus) = mu;
    let (a_minus, a_plus) = a;
    let hc_exp = (-negative_part(1.0 / a_plus - 1.0 / p) - 1.0) * (p - 2.0) + 1.0 / p;
    let hc = mu_plus / (p - 1.0) * 2f64.powf(hc_exp);
    let sm = mu_minus * (p - 1.0) * 2f64.powf(positive_part(1.0 / a_minus - 1.0 / p) * (p - 2.0));
    (hc, sm)
}

#[derive(Debug, Clone)]
pub struct StabModel {
    pub p: f64,
    pub gamma: f64,
    pub zeta: Coefficient,
}

impl StabModel {
    /// `gamma = sigma_hc` of the flux, the upper end of the admissible range.
    pub fn for_flux(flux: &FluxModel, zeta: Coefficient) -> Self {
        Self {
            p: flux.p,
            gamma: flux.framing_constants().0,
            zeta,
        }
    }

    #[inline]
    pub fn value_with(&self, zeta: f64, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let base = zeta.powf(self.p) + w.abs().powf(self.p);
        self.gamma * base.powf((self.p - 2.0) / self.p) * w
    }

    /// Derivative in `w`, with `zeta^p + |w|^p` floored at `eps^p`.
    #[inline]
    pub fn derivative_with(&self, zeta: f64, w: f64, eps: f64) -> f64 {
        let p = self.p;
        let wp = w.abs().powf(p);
        let base = zeta.powf(p) + wp;
        let floor = eps.powf(p);
        if base < floor {
            return self.gamma * floor.powf((p - 2.0) / p);
        }
        self.gamma * base.powf(-2.0 / p) * (zeta.powf(p) + (p - 1.0) * wp)
    }

    pub fn value(&self, x: Vec2, w: f64) -> f64 {
        self.value_with(self.zeta.at(x), w)
    }

    pub fn derivative(&self, x: Vec2, w: f64) -> f64 {
        self.derivative_with(self.zeta.at(x), w, DEFAULT_REGULARIZATION)
    }
}

/// Whether `(alpha + |x| + |y|)^(p-2) |x - y| <= |x - y|^(p-1)` holds, with
/// both sides read as 0 when `x = y` and a relative slack of `1e-12` for
/// round-off in the equality case.
pub fn check_prolongement(p: f64, alpha: f64, x: Vec2, y: Vec2) -> bool {
    let d = (x - y).norm();
    if d == 0.0 {
        return true;
    }
    let lhs = (alpha + x.norm() + y.norm()).powf(p - 2.0) * d;
    let rhs = d.powf(p - 1.0);
    lhs <= rhs * (1.0 + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec2 {
        Vec2::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    }

    fn model(p: f64, delta: f64) -> FluxModel {
        FluxModel::carreau_yasuda(p, 1.0, 1.0, Coefficient::Constant(delta))
    }

    #[test]
    fn flux_at_rest_is_zero() {
        for p in [1.25, 1.5, 2.0] {
            for delta in [0.0, 0.5] {
                assert_eq!(model(p, delta).sigma(Vec2::zeros(), Vec2::zeros()), Vec2::zeros());
            }
        }
        let s = StabModel {
            p: 1.5,
            gamma: 2.0,
            zeta: Coefficient::Constant(0.0),
        };
        assert_eq!(s.value(Vec2::zeros(), 0.0), 0.0);
    }

    #[test]
    fn quadratic_case_is_linear() {
        let m = FluxModel::carreau_yasuda(2.0, 1.3, 1.0, Coefficient::Constant(0.7));
        let xi = Vec2::new(0.3, -2.0);
        assert!((m.sigma(Vec2::zeros(), xi) - xi * 1.3).norm() < 1e-15);
        assert!((m.sigma_jacobian(Vec2::zeros(), xi) - Matrix2::identity() * 1.3).amax() < 1e-15);
        let s = StabModel {
            p: 2.0,
            gamma: 1.7,
            zeta: Coefficient::Constant(3.0),
        };
        assert!((s.value(Vec2::zeros(), 0.4) - 1.7 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn direct_evaluation() {
        let s = model(1.5, 1.0).sigma(Vec2::zeros(), Vec2::new(1.0, 0.0));
        assert!((s.x - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.y, 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        for _ in 0..200 {
            let p = rng.gen_range(1.05..2.0);
            let a = rng.gen_range(0.5..3.0);
            let delta = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) };
            let m = FluxModel::carreau_yasuda(p, rng.gen_range(0.5..2.0), a, Coefficient::Constant(delta));
            let mut xi = random_vec(&mut rng, 3.0);
            while xi.norm() <= 0.1 {
                xi = random_vec(&mut rng, 3.0);
            }
            let x = Vec2::zeros();
            let jac = m.sigma_jacobian(x, xi);
            let mut fd = Matrix2::zeros();
            for c in 0..2 {
                let mut e = Vec2::zeros();
                e[c] = h;
                let col = (m.sigma(x, xi + e) - m.sigma(x, xi - e)) / (2.0 * h);
                fd.set_column(c, &col);
            }
            assert!((jac - fd).amax() <= 1e-6 * jac.amax(), "{jac} vs {fd}");
            assert!((jac - jac.transpose()).amax() <= 1e-12 * jac.amax());
            let eig = jac.symmetric_eigen().eigenvalues;
            assert!(eig.min() >= 0.0);
        }
    }

    #[test]
    fn stabilization_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = 1e-6;
        for _ in 0..200 {
            let s = StabModel {
                p: rng.gen_range(1.05..2.0),
                gamma: rng.gen_range(0.1..3.0),
                zeta: Coefficient::Constant(if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) }),
            };
            let mut w: f64 = rng.gen_range(-3.0..3.0);
            while w.abs() <= 0.1 {
                w = rng.gen_range(-3.0..3.0);
            }
            let x = Vec2::zeros();
            let d = s.derivative(x, w);
            let fd = (s.value(x, w + h) - s.value(x, w - h)) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-6 * d.abs(), "{d} vs {fd}");
            assert!(d > 0.0);
        }
    }

    #[test]
    fn framing_constants_closed_forms() {
        let (hc, sm) = framing_constants(2.0, (1.0, 1.0), (1.0, 1.0));
        assert!((hc - 2f64.sqrt()).abs() < 1e-15);
        assert!((sm - 1.0).abs() < 1e-15);
        let (_, sm) = framing_constants(1.5, (1.0, 1.0), (1.0, 1.0));
        assert!((sm - 0.5 * 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!((sm - 0.4454).abs() < 5e-5);
        for i in 0..50 {
            let p = 1.0 + (i as f64 + 1.0) / 50.0;
            let (hc, sm) = framing_constants(p, (1.0, 1.0), (1.0, 1.0));
            assert!(sm <= hc, "p={p}");
        }
    }

    #[test]
    fn sampled_continuity_and_strong_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let p = rng.gen_range(1.05..=2.0);
            let delta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) };
            let m = model(p, delta);
            let (hc, sm) = m.framing_constants();
            let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
            let tau = random_vec(&mut rng, scale);
            let eta = random_vec(&mut rng, scale);
            let x = Vec2::zeros();
            let frame = (delta.powf(p) + tau.norm().powf(p) + eta.norm().powf(p)).powf((p - 2.0) / p);
            let ds = m.sigma(x, tau) - m.sigma(x, eta);
            let d = tau - eta;
            assert!(ds.norm() <= hc * frame * d.norm() * (1.0 + 1e-12));
            assert!(ds.dot(&d) >= sm * frame * d.norm_squared() * (1.0 - 1e-12));
            assert!(ds.dot(&d) >= 0.0);
        }
    }

    #[test]
    fn sampled_stabilization_framing() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..10_000 {
            let p = rng.gen_range(1.05..=2.0);
            let (hc, sm) = framing_constants(p, (1.0, 1.0), (1.0, 1.0));
            let zeta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) };
            let s = StabModel {
                p,
                gamma: hc,
                zeta: Coefficient::Constant(zeta),
            };
            let w: f64 = rng.gen_range(-5.0..5.0);
            let v: f64 = rng.gen_range(-5.0..5.0);
            let frame = (zeta.powf(p) + w.abs().powf(p) + v.abs().powf(p)).powf((p - 2.0) / p);
            let ds = s.value(Vec2::zeros(), w) - s.value(Vec2::zeros(), v);
            // gamma in [sm, hc]; the hidden constants are at most 2
            assert!(ds.abs() <= 2.0 * hc * frame * (w - v).abs() * (1.0 + 1e-12));
            assert!(ds * (w - v) >= 0.5 * sm * frame * (w - v).powi(2) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn regularization_is_inactive_above_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..1000 {
            let pf = model(rng.gen_range(1.1..2.0), rng.gen_range(0.0..1.0)).at(Vec2::zeros());
            let xi = random_vec(&mut rng, 2.0);
            let eps: f64 = rng.gen_range(1e-8..1e-2);
            if pf.delta.powf(pf.a) + xi.norm().powf(pf.a) >= eps.powf(pf.a) {
                assert_eq!(pf.sigma(xi), pf.sigma_regularized(xi, eps));
            }
        }
        // degenerate point: finite, isotropic linearization
        let pf = model(1.5, 0.0).at(Vec2::zeros());
        let j = pf.jacobian(Vec2::zeros(), 1e-8);
        assert!(j.iter().all(|v| v.is_finite()));
        assert!((j[(0, 0)] - 1e-8f64.powf(-0.5)).abs() < 1e-6);
    }

    #[test]
    fn prolongement_inequality() {
        assert!(check_prolongement(1.5, 0.3, Vec2::new(1.0, 2.0), Vec2::new(1.0, 2.0)));
        let x = Vec2::new(0.7, -0.2);
        for p in [1.25, 1.5, 1.75] {
            let lhs = x.norm().powf(p - 2.0) * x.norm();
            assert!((lhs - x.norm().powf(p - 1.0)).abs() < 1e-15);
            assert!(check_prolongement(p, 0.0, x, Vec2::zeros()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for p in [1.25, 1.5, 1.75] {
            for _ in 0..100_000 {
                let alpha = rng.gen_range(0.0..5.0);
                let scale = 10f64.powf(rng.gen_range(-4.0..3.0));
                let x = random_vec(&mut rng, scale);
                let y = random_vec(&mut rng, scale);
                assert!(check_prolongement(p, alpha, x, y));
            }
        }
    }
}
