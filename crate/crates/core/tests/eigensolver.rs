use hamspec::eigen::{
    dense_generalized, predict_perturbed, solve_generalized, solve_lowrank_updated, SolveOptions, WoodburySolver,
};
use hamspec::fem::{assemble_mass, assemble_stiffness, mesh_pencil, MassScheme, Pencil, PotentialField};
use hamspec::mesh::shapes;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agree(a: &[f64], b: &[f64], tol: f64) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol * (1.0 + x.abs()), "{x} vs {y}");
    }
}

#[test]
fn lanczos_on_closed_meshes_without_potential() {
    for mesh in [shapes::icosphere(2).unwrap(), shapes::cube(6).unwrap()] {
        let p = mesh_pencil(&mesh, &PotentialField::zeros(mesh.n_vertices())).unwrap();
        for k in [1, 2, 6, 10] {
            let d = solve_generalized(&p, k, &SolveOptions::dense()).unwrap();
            let l = solve_generalized(&p, k, &SolveOptions::lanczos()).unwrap();
            agree(d.values(), l.values(), 1e-8);
            assert!(l.orthonormality_error() < 1e-10);
            assert!(l.relative_residuals(&p.h).iter().all(|&r| r < 1e-9));
        }
    }
}

#[test]
fn sphere_multiplicities() {
    let m = shapes::icosphere(3).unwrap();
    let p = mesh_pencil(&m, &PotentialField::zeros(m.n_vertices())).unwrap();
    let s = solve_generalized(&p, 9, &SolveOptions::lanczos()).unwrap();
    // Unit sphere: l(l+1) with multiplicity 2l+1.
    assert!(s.values()[0].abs() < 1e-8);
    for i in 1..4 {
        assert!((s.values()[i] - 2.0).abs() < 0.02, "{}", s.values()[i]);
    }
    for i in 4..9 {
        assert!((s.values()[i] - 6.0).abs() < 0.1, "{}", s.values()[i]);
    }
}

#[test]
fn lowrank_update_matches_dense() {
    let m = shapes::finger_plate(12, 10).unwrap();
    let n = m.n_vertices();
    let p = mesh_pencil(&m, &PotentialField::zeros(n)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    let oracle = dense_generalized(&(p.h.to_dense() + &u * u.transpose()), &p.mass.values, 8).unwrap();
    let l = solve_lowrank_updated(&p, &u, 8, &SolveOptions::lanczos()).unwrap();
    agree(oracle.values(), l.values(), 1e-8);
    for i in 0..8 {
        let d: f64 = (0..n).map(|r| oracle.vector(i)[r] * l.vector(i)[r] * p.mass.values[r]).sum();
        assert!((d.abs() - 1.0).abs() < 1e-6, "mode {i}: overlap {d}");
    }
}

#[test]
fn woodbury_solve_matches_dense_inverse() {
    let m = shapes::finger_plate(10, 6).unwrap();
    let n = m.n_vertices();
    assert_eq!(n, 60);
    let p = mesh_pencil(&m, &PotentialField::zeros(n)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
    let sigma = 0.5;
    let solver = WoodburySolver::with_shift(&p.h, &p.mass.values, u.clone(), sigma).unwrap();
    let mut k = p.h.to_dense() + &u * u.transpose();
    for i in 0..n {
        k[(i, i)] += sigma * p.mass.values[i];
    }
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = solver.solve(&b);
    let oracle = k.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
    let err = x.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(err < 1e-8 * scale, "{err}");
}

#[test]
fn perturbation_prediction_is_first_order() {
    let base = shapes::finger_plate(8, 6).unwrap();
    let n = base.n_vertices();
    let w0 = assemble_stiffness(&base).unwrap();
    let a0 = assemble_mass(&base, MassScheme::MixedVoronoi);
    let v: Vec<f64> = base.vertices().iter().map(|p| 5.0 * p[0] * p[0] + 1.0).collect();
    let pot = PotentialField::new(v).unwrap();
    let pencil = |w: &hamspec::SparseSymOperator, a: &hamspec::DiagOperator| hamspec::fem::assemble_hamiltonian(w, a, &pot).unwrap();
    let p0 = pencil(&w0, &a0);
    let k = 6;
    let s0 = solve_generalized(&p0, n, &SolveOptions::dense()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir: Vec<[f64; 3]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0]).collect();
    let mut errs = Vec::new();
    for t in [1e-3, 5e-4] {
        let moved: Vec<_> = base.vertices().iter().zip(&dir).map(|(p, d)| [p[0] + t * d[0], p[1] + t * d[1], p[2]]).collect();
        let m1 = base.with_vertices(moved).unwrap();
        let p1: Pencil = pencil(&assemble_stiffness(&m1).unwrap(), &assemble_mass(&m1, MassScheme::MixedVoronoi));
        let dh = p1.h.combine(1.0, &p0.h, -1.0).unwrap();
        let da = hamspec::DiagOperator::new(p1.mass.values.iter().zip(&p0.mass.values).map(|(a, b)| a - b).collect());
        let pred = predict_perturbed(&s0, &dh, &da).unwrap();
        let s1 = solve_generalized(&p1, k, &SolveOptions::dense()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..k {
            let exact = s1.vector(i);
            let col = pred.vectors.column(i);
            let sign = if col.iter().zip(exact).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let e: f64 = (0..n).map(|r| p1.mass.values[r] * (sign * col[r] - exact[r]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(e);
        }
        errs.push(worst);
    }
    // Halving the displacement should roughly quarter the error.
    let ratio = errs[0] / errs[1];
    assert!(ratio > 3.0, "errors {errs:?}");
}
