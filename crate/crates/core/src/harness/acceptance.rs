//! The acceptance suite: exact identities, oracles, rate reproduction,
//! regime labels and properties. Each criterion yields one pass/fail line.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{run_single, to_csv, RunConfig, StudyResult};
use crate::analysis::Regime;
use crate::assembly::{newton_step, newton_step_uncondensed, Discretization, FacePattern, HybridVector, LinearSolver};
use crate::cases::{CaseKind, CaseSpec};
use crate::error::Result;
use crate::flux::{Coefficient, FluxModel, StabModel};
use crate::local_ops::{project_element, project_face, LocalOperators};
use crate::mesh::{Mesh, Vec2};
use crate::par::Execution;
use crate::polyquad::{element_quadrature, exact_monomial_integral, triangle_rule, ElementBasis, FaceBasis};

pub const CRITERIA: [(usize, &str); 9] = [
    (1, "exact identities"),
    (2, "oracles"),
    (3, "linear regression"),
    (4, "non-degenerate potential rates"),
    (5, "constant-delta regime switch"),
    (6, "bump-delta rates"),
    (7, "degenerate trend"),
    (8, "regime labels"),
    (9, "properties"),
];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail
        )
    }
}

/// Accumulates named checks of one criterion.
struct Checks {
    passed: bool,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            passed: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        self.passed &= ok;
        self.notes.push(if ok { note } else { format!("{note} [failed]") });
    }

    fn result(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.check(false, format!("error: {e}"));
        }
    }
}

fn rates(s: &StudyResult) -> String {
    let r: Vec<String> = s.rates().iter().map(|r| format!("{r:.2}")).collect();
    format!("[{}]", r.join(", "))
}

fn study(kind: CaseKind, p: f64, k: usize, delta: Option<f64>, ns: &[usize]) -> Result<StudyResult> {
    let mut cfg = RunConfig::new(kind, vec![p], vec![k], ns.to_vec());
    cfg.delta = delta;
    cfg.record_timing = false;
    let (s, err) = run_single(&cfg, p, k);
    match err {
        Some(e) => Err(e),
        None => Ok(s),
    }
}

fn levels(smoke: bool, ns: &[usize]) -> Vec<usize> {
    if smoke {
        ns.iter().copied().filter(|&n| n <= 16).collect()
    } else {
        ns.to_vec()
    }
}

/// Smoke replacement of a rate check: the solves converged and the error
/// decreased.
fn smoke_check(c: &mut Checks, label: &str, s: &StudyResult) {
    let e = s.errors();
    c.check(
        e.windows(2).all(|w| w[1] < w[0]),
        format!("{label}: errors decrease, rates {} (thresholds not evaluated in smoke mode)", rates(s)),
    );
}

pub fn run_criterion(id: usize, smoke: bool) -> Outcome {
    let mut c = Checks::new();
    match id {
        1 => exact_identities(&mut c),
        2 => oracles(&mut c),
        3 => linear_regression(&mut c, smoke),
        4 => potential_rates(&mut c, smoke),
        5 => regime_switch(&mut c, smoke),
        6 => bump_rates(&mut c, smoke),
        7 => degenerate_trend(&mut c, smoke),
        8 => regime_labels(&mut c),
        9 => properties(&mut c),
        _ => c.check(false, format!("unknown criterion {id}")),
    }
    let title = CRITERIA.iter().find(|(i, _)| *i == id).map(|(_, t)| *t).unwrap_or("unknown");
    Outcome {
        id,
        title,
        passed: c.passed,
        detail: c.notes.join("; "),
    }
}

pub fn run_all(smoke: bool) -> Vec<Outcome> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, smoke)).collect()
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> (ElementBasis, Vec<f64>) {
    let basis = ElementBasis::new(Vec2::new(0.37, 0.61), 1.0, degree);
    let coeffs = (0..basis.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (basis, coeffs)
}

fn exact_identities(c: &mut Checks) {
    let r = (|| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mesh = Mesh::structured_triangular(4)?;
        let ne = mesh.num_elements();
        let mut worst_g = 0f64;
        let mut worst_d = 0f64;
        for k in 1..=3 {
            let ops: Vec<LocalOperators> = (0..ne).map(|t| LocalOperators::new(&mesh, t, k)).collect::<Result<_>>()?;
            for trial in 0..50 {
                let t = (trial * 7) % ne;
                let o = &ops[t];
                let (basis, coeffs) = random_poly(&mut rng, k + 1);
                let v = |x: Vec2| basis.evaluate(&coeffs, x);
                let iv = o.interpolate(&mesh, v, 2 * k + 4)?;
                let g = &o.gradient * &iv;
                let nk = o.element_dim();
                // compared in L2(T): monomial coefficients of degree k + 1
                // carry conditioning noise that says nothing about the identity
                let rule = element_quadrature(&mesh, t, 2 * k + 2)?;
                for comp in 0..2 {
                    let pg = project_element(&mesh, t, k, |x| basis.evaluate_gradient(&coeffs, x)[comp], 2 * k + 2)?;
                    let diff = (g.rows(comp * nk, nk) - &pg).into_owned();
                    let err = rule.integrate(|x| o.cell_basis.evaluate(diff.as_slice(), x).powi(2)).sqrt();
                    let norm = rule.integrate(|x| o.cell_basis.evaluate(pg.as_slice(), x).powi(2)).sqrt();
                    worst_g = worst_g.max(err / norm.max(mesh.element(t).area.sqrt()));
                }
                for d in &o.boundary_residual {
                    worst_d = worst_d.max((d * &iv).amax() / iv.amax().max(1.0));
                }
            }
        }
        c.check(worst_g <= 1e-11, format!("G(Iv) - Pi grad v in L2: {worst_g:.1e}"));
        c.check(worst_d <= 1e-10, format!("Delta(Iw): {worst_d:.1e}"));

        let mut worst_p = 0f64;
        for l in 0..=3 {
            for t in [0, 9, 21] {
                let (a, b) = (rng.gen_range(1.0..4.0), rng.gen_range(-1.0..1.0));
                let f = move |x: Vec2| (a * x.x).sin() * (b * x.y).exp() + x.x * x.y;
                let qd = 16;
                let pf = project_element(&mesh, t, l, f, qd)?;
                let basis = ElementBasis::for_element(&mesh, t, l);
                let ppf = project_element(&mesh, t, l, |x| basis.evaluate(pf.as_slice(), x), qd)?;
                worst_p = worst_p.max((&ppf - &pf).amax() / pf.amax().max(1.0));
                let rule = element_quadrature(&mesh, t, qd)?;
                let scale = rule.integrate(|x| f(x).abs());
                for i in 0..basis.dim() {
                    let r = rule.integrate(|x| (basis.evaluate(pf.as_slice(), x) - f(x)) * basis.values(x)[i]);
                    worst_p = worst_p.max(r.abs() / scale);
                }
                let face = mesh.element(t).faces[0].face;
                let qf = project_face(&mesh, face, l, f, qd)?;
                let fb = FaceBasis::for_face(&mesh, face, l);
                let qqf = project_face(&mesh, face, l, |x| fb.evaluate(qf.as_slice(), x), qd)?;
                worst_p = worst_p.max((&qqf - &qf).amax() / qf.amax().max(1.0));
            }
        }
        c.check(worst_p <= 1e-11, format!("projector idempotence/orthogonality: {worst_p:.1e}"));

        let mut zero = true;
        for p in [1.25, 1.5, 1.75, 2.0] {
            for delta in [0.0, 0.5] {
                let flux = FluxModel::carreau_yasuda(p, 1.0, 1.0, Coefficient::Constant(delta));
                let stab = StabModel::for_flux(&flux, Coefficient::Constant(delta));
                zero &= flux.sigma(Vec2::zeros(), Vec2::zeros()) == Vec2::zeros();
                zero &= stab.value(Vec2::zeros(), 0.0) == 0.0;
            }
        }
        c.check(zero, "sigma(0) = S(0) = 0 exactly");
        Ok(())
    })();
    c.result(r);
}

fn oracles(c: &mut Checks) {
    let r = (|| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut worst = 0f64;
        for _ in 0..200 {
            let mut v = [Vec2::zeros(); 3];
            for p in v.iter_mut() {
                *p = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let q = rng.gen_range(0..=12usize);
            let a = rng.gen_range(0..=q);
            let b = q - a;
            let exact = exact_monomial_integral(v, a, b);
            let rule = triangle_rule(v, q)?;
            let mono = |x: Vec2| x.x.powi(a as i32) * x.y.powi(b as i32);
            let num = rule.integrate(mono);
            let scale = rule.integrate(|x| mono(x).abs()).max(exact.abs());
            worst = worst.max((num - exact).abs() / scale);
        }
        c.check(worst <= 1e-12, format!("quadrature vs exact monomials: {worst:.1e}"));

        let mut worst_j = 0f64;
        let mut worst_s = 0f64;
        let h = 1e-6;
        for _ in 0..200 {
            let p = rng.gen_range(1.1..2.0);
            let delta = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) };
            let flux = FluxModel::carreau_yasuda(p, 1.0, 1.0, Coefficient::Constant(delta));
            let xi = Vec2::new(rng.gen_range(0.2..2.0), rng.gen_range(-2.0..2.0));
            let jac = flux.sigma_jacobian(Vec2::zeros(), xi);
            for col in 0..2 {
                let mut e = Vec2::zeros();
                e[col] = h;
                let fd = (flux.sigma(Vec2::zeros(), xi + e) - flux.sigma(Vec2::zeros(), xi - e)) / (2.0 * h);
                worst_j = worst_j.max((fd - jac.column(col)).amax() / jac.amax());
            }
            let stab = StabModel::for_flux(&flux, Coefficient::Constant(delta));
            let w = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let d = stab.derivative(Vec2::zeros(), w);
            let fd = (stab.value(Vec2::zeros(), w + h) - stab.value(Vec2::zeros(), w - h)) / (2.0 * h);
            worst_s = worst_s.max((d - fd).abs() / d.abs());
        }
        c.check(worst_j <= 1e-6, format!("sigma Jacobian vs FD: {worst_j:.1e}"));
        c.check(worst_s <= 1e-6, format!("S derivative vs FD: {worst_s:.1e}"));

        let mut worst_c = 0f64;
        for (kind, p, k) in [
            (CaseKind::NondegFlux, 1.5, 1),
            (CaseKind::Degenerate, 1.25, 1),
            (CaseKind::NondegCouple, 1.75, 2),
        ] {
            let case = CaseSpec::new(kind, p, k, None)?;
            let disc = Discretization::new(Mesh::structured_triangular(2)?, k)?;
            let frozen = disc.freeze(&case.problem())?;
            let pattern = FacePattern::new(&disc, &frozen.dirichlet.constrained)?;
            let mut u = frozen.dirichlet.clone();
            u.cells.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            for f in 0..disc.mesh().num_faces() {
                if !u.constrained[f] {
                    u.face_block_mut(f).iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                }
            }
            let a = newton_step(&disc, &frozen, &pattern, &u, LinearSolver::Cholesky)?;
            let b = newton_step_uncondensed(&disc, &frozen, &pattern, &u)?;
            worst_c = worst_c.max(a.add_scaled(-1.0, &b).norm() / b.norm().max(1.0));
        }
        c.check(worst_c <= 1e-10, format!("condensed vs full Newton step: {worst_c:.1e}"));

        let mut worst_f = 0f64;
        for kind in CaseKind::ALL {
            let case = CaseSpec::new(kind, 1.5, 1, None)?;
            let mut n = 0;
            while n < 100 {
                let x = Vec2::new(rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
                if (x.x - 0.5).abs() < 0.01 || (x.y - 0.5).abs() < 0.01 || case.grad(x).norm() < 1e-3 {
                    continue;
                }
                let f = case.source(x);
                let fd = case.source_finite_difference(x, 1e-5, 1e-4);
                worst_f = worst_f.max((f - fd).abs() / f.abs().max(1.0));
                n += 1;
            }
        }
        c.check(worst_f <= 1e-5, format!("source vs nested FD divergence: {worst_f:.1e}"));
        Ok(())
    })();
    c.result(r);
}

fn linear_regression(c: &mut Checks, smoke: bool) {
    let ns = levels(smoke, &[8, 16, 32]);
    for k in [1, 2] {
        let r = (|| -> Result<()> {
            let s = study(CaseKind::NondegFlux, 2.0, k, Some(0.0), &ns)?;
            let target = k as f64 + 1.0;
            let ok = s.rates().iter().all(|r| (r - target).abs() <= 0.1);
            c.check(ok, format!("k={k} rates {}", rates(&s)));
            let its = s.newton_iterations();
            c.check(its.iter().all(|&i| i == 1), format!("k={k} Newton iterations {its:?}"));
            Ok(())
        })();
        c.result(r);
    }
}

fn potential_rates(c: &mut Checks, smoke: bool) {
    for (k, ns) in [(1, vec![8, 16, 32, 64]), (2, vec![8, 16, 32])] {
        for p in [1.25, 1.5, 1.75] {
            let r = (|| -> Result<()> {
                let s = study(CaseKind::NondegPotential, p, k, None, &levels(smoke, &ns))?;
                let label = format!("k={k} p={p}");
                if smoke {
                    smoke_check(c, &label, &s);
                    return Ok(());
                }
                let rs = s.rates();
                let ok = if k == 1 {
                    rs[rs.len() - 2..].iter().all(|r| (r - 2.0).abs() <= 0.15)
                } else {
                    (rs[rs.len() - 1] - 3.0).abs() <= 0.25
                };
                c.check(ok, format!("{label} rates {}", rates(&s)));
                Ok(())
            })();
            c.result(r);
        }
    }
}

fn regime_switch(c: &mut Checks, smoke: bool) {
    let ns = levels(smoke, &[8, 16, 32, 64]);
    let r = (|| -> Result<()> {
        let s = study(CaseKind::NondegFlux, 1.75, 1, Some(1.0), &ns)?;
        if smoke {
            smoke_check(c, "delta=1 p=1.75", &s);
        } else {
            let last = s.last_rate().unwrap_or(f64::NAN);
            c.check((last - 2.0).abs() <= 0.15, format!("delta=1 p=1.75 rates {}", rates(&s)));
        }
        let s = study(CaseKind::NondegFlux, 1.25, 1, Some(1e-2), &ns)?;
        if smoke {
            smoke_check(c, "delta=1e-2 p=1.25", &s);
        } else {
            let slow = s.rates().iter().any(|&r| r <= 1.8);
            c.check(slow, format!("delta=1e-2 p=1.25 rates {} (some <= 1.8)", rates(&s)));
        }
        Ok(())
    })();
    c.result(r);
}

fn bump_rates(c: &mut Checks, smoke: bool) {
    let ns = levels(smoke, &[8, 16, 32, 64]);
    for p in [1.25, 1.75] {
        let r = (|| -> Result<()> {
            let s = study(CaseKind::NondegCouple, p, 1, None, &ns)?;
            let label = format!("p={p}");
            if smoke {
                smoke_check(c, &label, &s);
            } else {
                let last = s.last_rate().unwrap_or(f64::NAN);
                c.check((last - 2.0).abs() <= 0.2, format!("{label} rates {}", rates(&s)));
            }
            Ok(())
        })();
        c.result(r);
    }
}

fn degenerate_trend(c: &mut Checks, smoke: bool) {
    let ns = levels(smoke, &[8, 16, 32, 64, 128]);
    let r = (|| -> Result<()> {
        let s = study(CaseKind::Degenerate, 1.5, 1, None, &ns)?;
        if smoke {
            smoke_check(c, "p=1.5", &s);
            return Ok(());
        }
        let rs = s.rates();
        let monotone = rs.windows(2).skip(1).all(|w| w[1] <= w[0]);
        c.check(monotone, format!("p=1.5 rates {} non-increasing after the first pair", rates(&s)));
        let last = *rs.last().unwrap_or(&f64::NAN);
        c.check(last <= 1.75, format!("final rate {last:.2} <= 1.75"));
        Ok(())
    })();
    c.result(r);
}

fn regime_labels(c: &mut Checks) {
    let r = (|| -> Result<()> {
        let mut ok_flux = true;
        let mut worst = 0f64;
        let mut ok_deg = true;
        for n in [8, 16, 32, 64, 128] {
            let mesh = Mesh::structured_triangular(n)?;
            let h = mesh.h();
            for k in 1..=3 {
                let case = CaseSpec::new(CaseKind::NondegFlux, 1.5, k, Some(1.0))?;
                let r = case.regime(&mesh, Execution::default());
                let formula = 2f64.powf((k as f64 - 1.0) / 2.0) * PI.powi(k as i32) * h.powi(k as i32 + 1) / 1.0;
                worst = worst.max((r.eta_tilde - formula).abs() / formula);
                ok_flux &= r.regime == Regime::NonDegenerate;
            }
            for p in [1.25, 1.5, 1.75] {
                let case = CaseSpec::new(CaseKind::Degenerate, p, 1, None)?;
                let r = case.regime(&mesh, Execution::default());
                ok_deg &= r.regime == Regime::Degenerate && r.eta_tilde == f64::INFINITY;
            }
        }
        c.check(ok_flux, "delta=1: non-degenerate at n = 8..128, k = 1..3");
        c.check(worst <= 1e-12, format!("eta vs closed form: {worst:.1e}"));
        c.check(ok_deg, "degenerate case: eta = inf, label degenerate");
        Ok(())
    })();
    c.result(r);
}

fn random_free(disc: &Discretization, template: &HybridVector, rng: &mut ChaCha8Rng, scale: f64) -> HybridVector {
    let mut u = template.clone();
    u.cells = DVector::from_fn(u.cells.len(), |_, _| scale * rng.gen_range(-1.0..1.0));
    u.faces = DVector::from_fn(u.faces.len(), |_, _| scale * rng.gen_range(-1.0..1.0));
    u.clear_constrained();
    debug_assert_eq!(u.len(), disc.ndof());
    u
}

fn properties(c: &mut Checks) {
    let r = (|| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        let disc = Discretization::new(Mesh::structured_triangular(4)?, 1)?;
        let mut worst = 0f64;
        for (i, p) in [1.25, 1.5, 1.75].into_iter().enumerate() {
            let case = CaseSpec::new(CaseKind::Degenerate, p, 1, None)?;
            let frozen = disc.freeze(&case.problem())?;
            let n_pairs = if i == 0 { 68 } else { 66 };
            for _ in 0..n_pairs {
                let s1 = 10f64.powf(rng.gen_range(-3.0..1.0));
                let s2 = 10f64.powf(rng.gen_range(-3.0..1.0));
                let u = random_free(&disc, &frozen.dirichlet, &mut rng, s1);
                let v = random_free(&disc, &frozen.dirichlet, &mut rng, s2);
                let e = u.add_scaled(-1.0, &v);
                let (au, av) = (disc.form(&frozen, &u, &e), disc.form(&frozen, &v, &e));
                let scale = au.abs() + av.abs();
                worst = worst.max(-(au - av) / scale);
            }
        }
        c.check(worst <= 1e-12, format!("a(u,u-v) - a(v,u-v) >= 0 on 200 pairs (worst {:.1e})", worst.max(0.0)));

        let template = disc.zeros();
        let mut worst_h = 0f64;
        let mut worst_a = 0f64;
        for p in [1.25, 1.5, 1.75] {
            let v = random_free(&disc, &template, &mut rng, 1.0);
            let (n1, parts) = disc.seminorm(&v, p)?;
            let (n3, _) = disc.seminorm(&v.scaled(-3.0), p)?;
            worst_h = worst_h.max((n3 - 3.0 * n1).abs() / n3);
            let sum: f64 = parts.iter().map(|x| x.powf(p)).sum();
            worst_a = worst_a.max((sum - n1.powf(p)).abs() / sum);
        }
        c.check(worst_h <= 1e-12, format!("energy norm 1-homogeneity: {worst_h:.1e}"));
        c.check(worst_a <= 1e-12, format!("energy norm additivity: {worst_a:.1e}"));

        let mut cfg = RunConfig::new(CaseKind::NondegCouple, vec![1.5], vec![1], vec![4, 8]);
        cfg.record_timing = false;
        let a = to_csv(&super::run_study(&cfg)?)?;
        let b = to_csv(&super::run_study(&cfg)?)?;
        c.check(a == b, "CSV output identical across runs");
        Ok(())
    })();
    c.result(r);
}
