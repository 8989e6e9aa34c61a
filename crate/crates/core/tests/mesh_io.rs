use hho_core::analysis::energy_error;
use hho_core::assembly::{newton_solve, Discretization, NewtonOptions};
use hho_core::cases::{CaseKind, CaseSpec};
use hho_core::Mesh;

#[test]
fn structured_mesh_round_trips_through_a_file() {
    let mesh = Mesh::structured_triangular(6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    std::fs::write(&path, mesh.to_text().unwrap()).unwrap();
    let back = Mesh::load(&path).unwrap();
    assert_eq!(back.num_elements(), mesh.num_elements());
    assert_eq!(back.num_faces(), mesh.num_faces());
    assert_eq!(back.num_boundary_faces(), mesh.num_boundary_faces());
    assert_eq!(back.stats(), mesh.stats());
    assert!((back.total_area() - 1.0).abs() < 1e-14);
}

#[test]
fn solve_on_a_loaded_mesh_refines() {
    // same square, two resolutions, anti-diagonal split written by hand
    let text = |n: usize| {
        let mut s = format!("# {n}x{n}\n{} {}\n", (n + 1) * (n + 1), 2 * n * n);
        for j in 0..=n {
            for i in 0..=n {
                s += &format!("{} {}\n", i as f64 / n as f64, j as f64 / n as f64);
            }
        }
        for j in 0..n {
            for i in 0..n {
                let v = |a: usize, b: usize| (j + b) * (n + 1) + i + a;
                s += &format!("{} {} {}\n", v(0, 0), v(1, 0), v(0, 1));
                s += &format!("{} {} {}\n", v(1, 0), v(1, 1), v(0, 1));
            }
        }
        s
    };
    let case = CaseSpec::new(CaseKind::NondegPotential, 1.5, 1, None).unwrap();
    let mut errors = Vec::new();
    for n in [4, 8] {
        let mesh = Mesh::parse(&text(n), std::path::Path::new("inline")).unwrap();
        let disc = Discretization::new(mesh, 1).unwrap();
        let (uh, report) = newton_solve(&disc, &case.problem(), &NewtonOptions::default()).unwrap();
        assert!(report.converged);
        let (e, _) = energy_error(&disc, &uh, &move |x| case.u(x), 1.5).unwrap();
        errors.push(e);
    }
    let rate = (errors[0] / errors[1]).log2();
    assert!(rate > 1.7, "rate {rate}");
}
