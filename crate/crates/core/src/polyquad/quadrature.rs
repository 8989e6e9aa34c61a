use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec2};

/// Largest polynomial degree the rules below are generated for.
pub const MAX_QUADRATURE_DEGREE: usize = 40;

#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Vec2) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn check_degree(q: usize) -> Result<()> {
    if q > MAX_QUADRATURE_DEGREE {
        return Err(Error::UnsupportedQuadratureDegree {
            requested: q,
            max: MAX_QUADRATURE_DEGREE,
        });
    }
    Ok(())
}

/// Reference rule on `{(s, t): s, t >= 0, s + t <= 1}` (weights sum to 1/2).
///
/// Low degrees use the classical symmetric rules (centroid, 3-point edge
/// interior, 7-point Radon); higher degrees use the collapsed Gauss-Legendre
/// product rule.
fn reference_triangle_rule(q: usize) -> Vec<([f64; 2], f64)> {
    match q {
        0 | 1 => vec![([1.0 / 3.0, 1.0 / 3.0], 0.5)],
        2 => {
            let w = 1.0 / 6.0;
            vec![
                ([1.0 / 6.0, 1.0 / 6.0], w),
                ([2.0 / 3.0, 1.0 / 6.0], w),
                ([1.0 / 6.0, 2.0 / 3.0], w),
            ]
        }
        3..=5 => {
            let s15 = 15f64.sqrt();
            let a = (6.0 - s15) / 21.0;
            let b = (6.0 + s15) / 21.0;
            let wa = (155.0 - s15) / 2400.0;
            let wb = (155.0 + s15) / 2400.0;
            vec![
                ([1.0 / 3.0, 1.0 / 3.0], 9.0 / 80.0),
                ([a, a], wa),
                ([1.0 - 2.0 * a, a], wa),
                ([a, 1.0 - 2.0 * a], wa),
                ([b, b], wb),
                ([1.0 - 2.0 * b, b], wb),
                ([b, 1.0 - 2.0 * b], wb),
            ]
        }
        _ => {
            // the collapse adds a factor (1 - u), hence degree q + 1 in u
            let m = (q + 3) / 2;
            let (x, w) = gauss_legendre(m);
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                let u = 0.5 * (x[i] + 1.0);
                for j in 0..m {
                    let v = 0.5 * (x[j] + 1.0);
                    out.push(([u, (1.0 - u) * v], 0.25 * w[i] * w[j] * (1.0 - u)));
                }
            }
            out
        }
    }
}

/// Rule of degree `q` on the triangle with the given vertices.
pub fn triangle_rule(v: [Vec2; 3], q: usize) -> Result<QuadRule> {
    check_degree(q)?;
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let jac = (e1.x * e2.y - e1.y * e2.x).abs();
    let reference = reference_triangle_rule(q);
    let mut points = Vec::with_capacity(reference.len());
    let mut weights = Vec::with_capacity(reference.len());
    for ([s, t], w) in reference {
        points.push(v[0] + e1 * s + e2 * t);
        weights.push(w * jac);
    }
    Ok(QuadRule {
        points,
        weights,
        degree: q,
    })
}

/// Rule of degree `q` on the segment `[a, b]`.
pub fn segment_rule(a: Vec2, b: Vec2, q: usize) -> Result<QuadRule> {
    check_degree(q)?;
    let m = q / 2 + 1;
    let (x, w) = gauss_legendre(m);
    let half = 0.5 * (b - a).norm();
    let points = x.iter().map(|&s| a + (b - a) * (0.5 * (s + 1.0))).collect();
    let weights = w.iter().map(|&wi| wi * half).collect();
    Ok(QuadRule {
        points,
        weights,
        degree: q,
    })
}

/// Rule of degree `q` on element `t`. Polygons with more than three vertices
/// are split into triangles around their centroid.
pub fn element_quadrature(mesh: &Mesh, t: usize, q: usize) -> Result<QuadRule> {
    let pts = mesh.element_points(t);
    if pts.len() == 3 {
        return triangle_rule([pts[0], pts[1], pts[2]], q);
    }
    let c = mesh.element(t).centroid;
    let mut rule = QuadRule {
        points: Vec::new(),
        weights: Vec::new(),
        degree: q,
    };
    for i in 0..pts.len() {
        let sub = triangle_rule([c, pts[i], pts[(i + 1) % pts.len()]], q)?;
        rule.points.extend(sub.points);
        rule.weights.extend(sub.weights);
    }
    Ok(rule)
}

pub fn face_quadrature(mesh: &Mesh, f: usize, q: usize) -> Result<QuadRule> {
    let [a, b] = mesh.face_points(f);
    segment_rule(a, b, q)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Exact integral of `x^a y^b` over a triangle, via the affine map to
/// the reference triangle and the Dirichlet formula
/// `int s^i t^j (1-s-t)^l = i! j! l! / (i+j+l+2)!`.
pub fn exact_monomial_integral(v: [Vec2; 3], a: usize, b: usize) -> f64 {
    // barycentric expansion: x = sum_k lambda_k x_k
    let jac = ((v[1] - v[0]).x * (v[2] - v[0]).y - (v[1] - v[0]).y * (v[2] - v[0]).x).abs();
    let mut total = 0.0;
    // multinomial expansion of (l0 x0 + l1 x1 + l2 x2)^a (l0 y0 + l1 y1 + l2 y2)^b
    for i0 in 0..=a {
        for i1 in 0..=a - i0 {
            let i2 = a - i0 - i1;
            let cx = factorial(a) / (factorial(i0) * factorial(i1) * factorial(i2))
                * v[0].x.powi(i0 as i32)
                * v[1].x.powi(i1 as i32)
                * v[2].x.powi(i2 as i32);
            for j0 in 0..=b {
                for j1 in 0..=b - j0 {
                    let j2 = b - j0 - j1;
                    let cy = factorial(b) / (factorial(j0) * factorial(j1) * factorial(j2))
                        * v[0].y.powi(j0 as i32)
                        * v[1].y.powi(j1 as i32)
                        * v[2].y.powi(j2 as i32);
                    let (e0, e1, e2) = (i0 + j0, i1 + j1, i2 + j2);
                    let dirichlet = factorial(e0) * factorial(e1) * factorial(e2)
                        / factorial(e0 + e1 + e2 + 2);
                    total += cx * cy * dirichlet;
                }
            }
        }
    }
    total * jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_integrates_up_to_2n_minus_1() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for d in 0..2 * n {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn constants_and_reference_moments() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        for q in 0..=12 {
            let r = triangle_rule(tri, q).unwrap();
            assert!((r.measure() - 0.5).abs() < 1e-15);
            assert!((r.integrate(|p| p.x) - 1.0 / 6.0).abs() < 1e-15);
            assert!(r.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn random_monomials_on_random_triangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut v = [Vec2::zeros(); 3];
            for p in v.iter_mut() {
                *p = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let q = rng.gen_range(0..=12usize);
            let a = rng.gen_range(0..=q);
            let b = q - a;
            let exact = exact_monomial_integral(v, a, b);
            let rule = triangle_rule(v, q).unwrap();
            let num = rule.integrate(|p| p.x.powi(a as i32) * p.y.powi(b as i32));
            let scale = rule.integrate(|p| (p.x.powi(a as i32) * p.y.powi(b as i32)).abs());
            assert!(
                (num - exact).abs() <= 1e-12 * scale.max(exact.abs()),
                "q={q} a={a} b={b}: {num} vs {exact}"
            );
        }
    }

    #[test]
    fn segment_rules() {
        let (a, b) = (Vec2::new(0.2, 0.1), Vec2::new(0.7, 0.9));
        let len = (b - a).norm();
        let mid = (a + b) * 0.5;
        let t = (b - a) / len;
        for q in 0..=14 {
            let r = segment_rule(a, b, q).unwrap();
            assert!((r.measure() - len).abs() < 1e-15);
            // odd powers of the centered tangential coordinate vanish
            let odd = r.integrate(|p| (p - mid).dot(&t).powi(2 * (q as i32 / 2) + 1));
            assert!(odd.abs() < 1e-15);
            let even = r.integrate(|p| (p - mid).dot(&t).powi(q as i32));
            let exact = if q % 2 == 1 {
                0.0
            } else {
                2.0 * (len / 2.0).powi(q as i32 + 1) / (q as f64 + 1.0)
            };
            assert!((even - exact).abs() <= 1e-13 * exact.abs().max(1e-300) + 1e-17);
        }
    }

    #[test]
    fn unsupported_degree_names_cap() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        match triangle_rule(tri, MAX_QUADRATURE_DEGREE + 1) {
            Err(Error::UnsupportedQuadratureDegree { requested, max }) => {
                assert_eq!(requested, MAX_QUADRATURE_DEGREE + 1);
                assert_eq!(max, MAX_QUADRATURE_DEGREE);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn element_rule_sums_to_area() {
        let m = Mesh::structured_triangular(3).unwrap();
        for t in 0..m.num_elements() {
            let r = element_quadrature(&m, t, 6).unwrap();
            assert!((r.measure() - m.element(t).area).abs() < 1e-13 * m.element(t).area);
        }
    }

    #[test]
    fn polygon_rule_via_centroid_fan() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let m = Mesh::from_polygons(v, vec![vec![0, 1, 2, 3]]).unwrap();
        let r = element_quadrature(&m, 0, 4).unwrap();
        assert!((r.measure() - 1.0).abs() < 1e-15);
        assert!((r.integrate(|p| p.x * p.x * p.y * p.y) - 1.0 / 9.0).abs() < 1e-15);
    }
}
