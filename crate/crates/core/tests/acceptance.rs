//! Acceptance criteria, one line per criterion. Exits non-zero on any failure.

use std::error::Error;
use std::time::Instant;

use hamspec::cmm::{cmm_basis, irls_potential, timing_report, CmmOptions};
use hamspec::compression::{
    decode, encode, from_bytes, geometry_error, rd_curve, to_bytes, BasisKind, CompressionMode, Operators, PotentialSource, RdConfig,
};
use hamspec::eigen::{
    check_bounds, dense_generalized, max_principal_angle, predict_perturbed, solve_generalized, solve_lowrank_updated, SolveOptions,
};
use hamspec::fem::{assemble_interval, assemble_mass, assemble_stiffness, mesh_pencil, MassScheme, Pencil, PotentialField};
use hamspec::matching::{
    area_distortion_potential, compare_bases, match_descriptors, stretched_bump_pair, ComparisonOptions, Correspondence,
};
use hamspec::mesh::{io, shapes, Interval, TriMesh};
use hamspec::optim::{loss_gradient, optimize_potential, optimize_potential_operators, reconstruction_loss, OptimizationProblem};
use hamspec::spectral::robustness::{noise_robustness, predictor_sweep};
use hamspec::spectral::{diffuse, heat_kernel_dense, nodal_domains, residual_bound_check, wks, wks_default_schedule};
use hamspec::{DiagOperator, Spectrum};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type R = Result<String, Box<dyn Error>>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+).into());
        }
    };
}

fn bundled(name: &str) -> TriMesh {
    io::bundled(name).expect("bundled mesh")
}

fn pencil(mesh: &TriMesh, v: Vec<f64>) -> Pencil {
    mesh_pencil(mesh, &PotentialField::new(v).unwrap()).unwrap()
}

fn lbo(mesh: &TriMesh, k: usize) -> Result<Spectrum, Box<dyn Error>> {
    Ok(solve_generalized(&pencil(mesh, vec![0.0; mesh.n_vertices()]), k, &SolveOptions::default())?)
}

fn random_potential(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = rng.random_range(0.0..200.0);
    (0..n).map(|_| scale * rng.random::<f64>()).collect()
}

fn coords(mesh: &TriMesh) -> DMatrix<f64> {
    let c = mesh.coordinate_columns();
    DMatrix::from_fn(mesh.n_vertices(), 3, |r, k| c[k][r])
}

fn mass_in(s: &Spectrum, i: usize, region: &[bool]) -> f64 {
    (0..s.n()).filter(|&x| region[x]).map(|x| s.mass()[x] * s.vector(i)[x].powi(2)).sum()
}

fn ac1() -> R {
    let t = Instant::now();
    let eig = |m: usize| -> Result<Vec<f64>, Box<dyn Error>> { Ok(lbo(&shapes::grid(m)?, 7)?.values()[1..7].to_vec()) };
    let (coarse, fine) = (eig(21)?, eig(41)?);
    let pi2 = std::f64::consts::PI.powi(2);
    let mut worst: f64 = 0.0;
    for (i, m) in [1.0, 1.0, 2.0, 4.0, 4.0, 5.0].iter().enumerate() {
        let rich = (4.0 * fine[i] - coarse[i]) / 3.0;
        worst = worst.max((rich - pi2 * m).abs() / (pi2 * m));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(worst < 0.02, "worst relative error {worst:.3e}");
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("worst relative error {worst:.2e} after extrapolation"))
}

fn ac2() -> R {
    let c = 2.75;
    let mut worst: f64 = 0.0;
    for name in ["square", "hand_plate", "cube"] {
        let m = bundled(name);
        let n = m.n_vertices();
        let l = lbo(&m, 30)?;
        let e = solve_generalized(&pencil(&m, vec![c; n]), 30, &SolveOptions::default())?;
        for (a, b) in l.values().iter().zip(e.values()) {
            worst = worst.max((b - a - c).abs());
        }
    }
    ensure!(worst < 1e-9, "worst |E − λ − c| = {worst:.3e}");
    Ok(format!("worst |E − λ − c| = {worst:.1e} on 3 meshes"))
}

fn ac3() -> R {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut violations, mut worst) = (0usize, f64::NEG_INFINITY);
    for name in ["square", "hand_plate", "cube"] {
        let m = bundled(name);
        let l = lbo(&m, 30)?;
        for _ in 0..100 {
            let v = PotentialField::new(random_potential(&mut rng, m.n_vertices()))?;
            let e = solve_generalized(&mesh_pencil(&m, &v)?, 30, &SolveOptions::default())?;
            let r = check_bounds(&l, &e, &v, 1e-8)?;
            violations += r.lower_ok.iter().chain(&r.upper_ok).filter(|b| !**b).count();
            worst = worst.max(r.worst_violation);
        }
    }
    ensure!(violations == 0, "{violations} violations, worst {worst:.3e}");
    Ok(format!("300 potentials, 0 violations (largest signed slack use {worst:.1e})"))
}

/// Returns (largest confined leak, largest escaped fraction) for step `v0`.
fn step_fractions(s: &Spectrum, v0: f64, region: &[bool]) -> (f64, f64) {
    let (mut leak, mut escape) = (0.0f64, 0.0f64);
    for i in 0..s.k() {
        let f = mass_in(s, i, region);
        if s.values()[i] < v0 {
            leak = leak.max(f);
        } else {
            escape = escape.max(f);
        }
    }
    (leak, escape)
}

fn ac4() -> R {
    let t = Instant::now();
    let iv = Interval::new(200)?;
    let v0 = 2.89e4;
    let region: Vec<bool> = iv.points().iter().map(|&x| x > 0.5).collect();
    let v: Vec<f64> = region.iter().map(|&h| if h { v0 } else { 0.0 }).collect();
    let s = solve_generalized(&assemble_interval(&iv, &PotentialField::new(v)?)?, 40, &SolveOptions::dense())?;
    let (leak1, esc1) = step_fractions(&s, v0, &region);

    let m = bundled("square");
    let mv0 = 1450.0;
    let mregion: Vec<bool> = m.vertices().iter().map(|p| p[0] > 0.5).collect();
    let mv: Vec<f64> = mregion.iter().map(|&h| if h { mv0 } else { 0.0 }).collect();
    let ms = solve_generalized(&pencil(&m, mv), 150, &SolveOptions::default())?;
    let (leak2, esc2) = step_fractions(&ms, mv0, &mregion);
    let secs = t.elapsed().as_secs_f64();
    ensure!(leak1 < 0.05 && leak2 < 0.05, "confined leak {leak1:.3} / {leak2:.3}");
    ensure!(esc1 > 0.2 && esc2 > 0.2, "escaped fraction {esc1:.3} / {esc2:.3}");
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("interval leak {leak1:.1e} escape {esc1:.2}; square leak {leak2:.1e} escape {esc2:.2}"))
}

fn ac5() -> R {
    let mesh = shapes::finger_plate(10, 6)?;
    let n = mesh.n_vertices();
    ensure!(n == 60, "n = {n}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
    let x = coords(&mesh);
    let k = 5;
    let spectrum_at = |v: &[f64], m: usize| solve_generalized(&pencil(&mesh, v.to_vec()), m, &SolveOptions::dense());
    let s = spectrum_at(&base, n)?;
    let gap = s.values().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    ensure!(gap > 1e-6, "degenerate base point, gap {gap:.2e}");
    let g = loss_gradient(&s, &x, k, 1e-8)?;
    let loss = |v: &[f64]| -> Result<f64, Box<dyn Error>> { Ok(reconstruction_loss(&spectrum_at(v, k)?, &x, k)?) };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut best = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let p: Vec<f64> = base.iter().zip(&dir).map(|(v, d)| v + h * d).collect();
            let q: Vec<f64> = base.iter().zip(&dir).map(|(v, d)| v - h * d).collect();
            let fd = (loss(&p)? - loss(&q)?) / (2.0 * h);
            best = best.min((fd - analytic).abs() / analytic.abs().max(1e-300));
        }
        worst = worst.max(best);
    }
    ensure!(worst < 1e-4, "worst relative error {worst:.3e}");
    Ok(format!("50 directions, worst relative error {worst:.1e}, min gap {gap:.1e}"))
}

fn ac6() -> R {
    let t = Instant::now();
    let iv = Interval::new(200)?;
    let p = assemble_interval(&iv, &PotentialField::zeros(200))?;
    let problem = OptimizationProblem::new(DMatrix::from_column_slice(200, 1, iv.points()), 15);
    let (_, ramp) = optimize_potential_operators(&p.h, &p.mass, &problem)?;
    let t1 = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mesh = bundled("hand_plate");
    let (_, geo) = optimize_potential(&mesh, &OptimizationProblem::new(coords(&mesh), 50))?;
    let t2 = t.elapsed().as_secs_f64();
    let gain = |tr: &hamspec::optim::OptimizationTrace| 1.0 - tr.final_loss() / tr.initial_loss();
    let (g1, g2) = (gain(&ramp), gain(&geo));
    ensure!(g1 >= 0.2 && g2 >= 0.2, "improvements {g1:.3} / {g2:.3}");
    ensure!(t1 < 300.0 && t2 < 300.0, "took {t1:.0} s / {t2:.0} s");
    Ok(format!(
        "ramp {:.2e} → {:.2e} ({:.0}%), coordinates {:.2e} → {:.2e} ({:.0}%)",
        ramp.initial_loss(),
        ramp.final_loss(),
        100.0 * g1,
        geo.initial_loss(),
        geo.final_loss(),
        100.0 * g2
    ))
}

fn ac7() -> R {
    let m = bundled("hand_plate");
    let n = m.n_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut worst_ratio) = (0, 0.0f64);
    let mut equality = Vec::new();
    for _ in 0..5 {
        let p = pencil(&m, random_potential(&mut rng, n));
        let s = solve_generalized(&p, 41, &SolveOptions::default())?;
        for _ in 0..20 {
            let waves: Vec<([f64; 3], f64, f64)> = (0..3)
                .map(|_| ([0, 1, 2].map(|_| rng.random_range(-4.0..4.0)), rng.random_range(0.0..6.3), rng.random_range(-1.0..1.0)))
                .collect();
            let f: Vec<f64> = m
                .vertices()
                .iter()
                .map(|x| waves.iter().map(|(w, ph, c)| c * (w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + ph).sin()).sum())
                .collect();
            let nt = rng.random_range(5..40);
            let r = residual_bound_check(&s, &p, &f, nt)?;
            ensure!(r.holds, "bound violated: residual {:.3e} > bound {:?}", r.residual2, r.bound);
            if let Some(b) = r.bound {
                worst_ratio = worst_ratio.max(r.residual2 / b);
            }
            checked += 1;
        }
        for nt in [3, 10, 25] {
            let r = residual_bound_check(&s, &p, s.vector(nt), nt)?;
            equality.push(r.residual2 / r.bound.ok_or("no bound")?);
        }
    }
    ensure!(equality.iter().all(|q| (0.99..=1.01).contains(q)), "equality ratios {equality:?}");
    Ok(format!("{checked} signals within bound (largest ratio {worst_ratio:.2}); equality ratios within 1 ± {:.0e}", equality.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max).max(1e-16)))
}

fn ac8() -> R {
    let m = bundled("hand_plate");
    let n = m.n_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = solve_generalized(&pencil(&m, random_potential(&mut rng, n)), 60, &SolveOptions::default())?;
    let (t1, t2) = (0.003, 0.007);
    let k1 = heat_kernel_dense(&s, t1)?;
    let k2 = heat_kernel_dense(&s, t2)?;
    let k12 = heat_kernel_dense(&s, t1 + t2)?;
    let scale = k12.amax();
    let sym = (&k1 - k1.transpose()).amax() / k1.amax();
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(s.mass()));
    let semi = (&k1 * a * &k2 - &k12).amax() / scale;
    let l = lbo(&m, 30)?;
    let u0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mean = u0.iter().zip(l.mass()).map(|(u, a)| u * a).sum::<f64>() / l.mass().iter().sum::<f64>();
    // Long enough that exp(−λ₁t) is far below the tolerance.
    let far = diffuse(&l, &u0, 40.0 / l.values()[1])?;
    let lim = far.iter().map(|u| (u - mean).abs()).fold(0.0, f64::max);
    ensure!(sym < 1e-12, "asymmetry {sym:.3e}");
    ensure!(semi < 1e-10, "semigroup defect {semi:.3e}");
    ensure!(lim < 1e-8, "long-time deviation {lim:.3e}");
    Ok(format!("asymmetry {sym:.1e}, semigroup defect {semi:.1e}, long-time deviation {lim:.1e}"))
}

fn ac9() -> R {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0i64;
    let mut checked = 0;
    for name in ["hand_plate", "cube", "sphere"] {
        let m = bundled(name);
        for _ in 0..10 {
            let s = solve_generalized(&pencil(&m, random_potential(&mut rng, m.n_vertices())), 20, &SolveOptions::default())?;
            for i in 0..20 {
                let c = nodal_domains(&m, s.vector(i))?.count as i64;
                worst = worst.max(c - (i as i64 + 1));
                checked += 1;
            }
        }
    }
    ensure!(worst <= 0, "a domain count exceeds its index by {worst}");
    Ok(format!("{checked} eigenfunctions, 0 violations"))
}

fn ac10() -> R {
    let ico = shapes::icosphere(2)?;
    let mut last = f64::INFINITY;
    let mut support = Vec::new();
    let mut worst_off: f64 = 0.0;
    for mu in [0.0, 1.0, 5.0, 20.0, 50.0] {
        let c = cmm_basis(&ico, 6, &CmmOptions { mu, ..Default::default() })?;
        worst_off = worst_off.max(c.max_off_diagonal());
        let s = c.support_fraction(0.01);
        ensure!(s <= last + 1e-12, "support grew from {last:.3} to {s:.3} at μ = {mu}");
        last = s;
        support.push(s);
    }
    ensure!(worst_off < 1e-6, "off-diagonal {worst_off:.3e}");

    let plate = shapes::finger_plate(12, 9)?;
    let c0 = cmm_basis(&plate, 8, &CmmOptions { mu: 0.0, ..Default::default() })?;
    let l = solve_generalized(&pencil(&plate, vec![0.0; plate.n_vertices()]), 8, &SolveOptions::dense())?;
    let angle = max_principal_angle(&c0.modes, l.vectors(), &c0.mass)?;
    ensure!(angle < 1e-6, "μ = 0 principal angle {angle:.3e}");

    let m60 = shapes::finger_plate(10, 6)?;
    let w = assemble_stiffness(&m60)?;
    let a = assemble_mass(&m60, MassScheme::MixedVoronoi);
    let base = solve_generalized(&Pencil { h: w.clone(), mass: a.clone() }, 4, &SolveOptions::dense())?;
    let v = irls_potential(base.vector(3), 1e-6)?;
    let d: Vec<f64> = v.values.iter().zip(&a.values).map(|(v, m)| 2.0 * v * m).collect();
    let p = Pencil { h: w.add_diagonal(&d)?, mass: a.clone() };
    let mut u = base.vectors().columns(0, 3).into_owned() * (1e3 * base.values()[3]).sqrt();
    for (r, mv) in a.values.iter().enumerate() {
        u.row_mut(r).scale_mut(*mv);
    }
    let fast = solve_lowrank_updated(&p, &u, 3, &SolveOptions::lanczos())?;
    let oracle = dense_generalized(&(p.h.to_dense() + &u * u.transpose()), &a.values, 3)?;
    let dev = fast.values().iter().zip(oracle.values()).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max);
    ensure!(dev < 1e-8, "Woodbury eigenvalue deviation {dev:.3e}");

    let row = timing_report(&shapes::finger_plate(12, 10)?, 4, &CmmOptions { mu: 5.0, max_iter: 20, ..Default::default() })?;
    Ok(format!(
        "off-diag {worst_off:.1e}, angle {angle:.1e}, support {support:.2?}, Woodbury {dev:.1e}; timing n={} k={}: iterative {:.3} s, dense {:.3} s",
        row.n, row.k, row.iterative_seconds, row.dense_seconds
    ))
}

fn ac11() -> R {
    let cube = bundled("cube");
    let n = cube.n_vertices();
    let c = encode(&cube, &CompressionMode::Mhb, n, 0.0)?;
    let back = from_bytes(&to_bytes(&c))?;
    let full = geometry_error(&cube, &decode(&back, cube.triangles(), None)?.vertices)?;
    ensure!(full < 1e-9, "k = n round trip error {full:.3e}");
    let ks = [5, 10, 20, 40, 80];
    let mhb = rd_curve(&cube, &RdConfig::mhb(), &ks, 0.0)?;
    let hopt = rd_curve(
        &cube,
        &RdConfig { kind: BasisKind::HOpt, operators: Operators::Graph, potential: PotentialSource::Optimized { max_iter: 30 } },
        &ks,
        0.0,
    )?;
    for rows in [&mhb, &hopt] {
        ensure!(rows.windows(2).all(|w| w[1].error <= w[0].error), "non-monotone curve {rows:?}");
    }
    for (a, b) in mhb.iter().zip(&hopt) {
        ensure!(b.error <= a.error, "k = {}: H_opt {:.3e} > MHB {:.3e}", a.k, b.error, a.error);
        ensure!(b.bits_excluding_potential == a.bits, "bit accounting differs at k = {}", a.k);
    }
    let ratios: Vec<String> = mhb.iter().zip(&hopt).map(|(a, b)| format!("{:.2}", b.error / a.error)).collect();
    Ok(format!("round trip {full:.1e}; H_opt/MHB error ratio at k = {ks:?}: [{}]", ratios.join(", ")))
}

fn ac12() -> R {
    let t = Instant::now();
    let plate = shapes::finger_plate(12, 10)?;
    let s = lbo(&plate, 30)?;
    let (e, sigma) = wks_default_schedule(&s, 50)?;
    let d = wks(&s, &e, sigma)?;
    ensure!(match_descriptors(&d, &d)?.map == (0..d.n_vertices()).collect::<Vec<_>>(), "identity not recovered");
    let mut perm: Vec<usize> = (0..d.n_vertices()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(12));
    let mut moved = d.clone();
    for (v, &p) in perm.iter().enumerate() {
        moved.values[p] = d.values[v].clone();
    }
    ensure!(match_descriptors(&d, &moved)?.map == perm, "permutation not recovered");

    let (m, n) = stretched_bump_pair(41, 21)?;
    let gt = Correspondence::identity(m.n_vertices());
    let v = area_distortion_potential(&m, &n, &gt)?;
    let c = compare_bases(&m, &n, &gt, &v, &ComparisonOptions::default())?;
    let secs = t.elapsed().as_secs_f64();
    let (dl, dh) = (c.lbo.diagonality, c.hamiltonian.diagonality);
    let (al, ah) = (c.lbo.curve.at(0.05), c.hamiltonian.curve.at(0.05));
    ensure!(dh >= dl, "diagonality {dh:.3} < {dl:.3}");
    ensure!(ah >= al, "accuracy at 0.05: {ah:.3} < {al:.3}");
    ensure!(secs < 120.0, "took {secs:.0} s");
    Ok(format!("exact recovery; μ = {:.0}: diagonality {dl:.2} → {dh:.2}, accuracy at r = 0.05 {al:.2} → {ah:.2}", c.hamiltonian.mu))
}

fn ac13() -> R {
    let mesh = bundled("hand_plate");
    let ramp = |m: &TriMesh| PotentialField::new(m.vertices().iter().map(|p| 30.0 * p[1]).collect()).unwrap();
    let mut worst = f64::INFINITY;
    for seed in 0..3 {
        let r = noise_robustness(&mesh, &ramp(&mesh), 5, 0.2, 0.2, seed, &SolveOptions::default())?;
        worst = worst.min(r.correlations.iter().copied().fold(f64::INFINITY, f64::min));
    }
    ensure!(worst > 0.9, "lowest correlation {worst:.3}");
    let small = shapes::finger_plate(10, 8)?;
    let sw = predictor_sweep(&small, &ramp(&small), &[1, 2, 3, 4], &[1e-1, 1e-2, 1e-3, 1e-4], 13)?;
    ensure!((1.8..=2.2).contains(&sw.slope), "slope {:.3}, errors {:?}", sw.slope, sw.errors);
    // The predictor itself must agree with a direct first-order call.
    let p0 = pencil(&small, ramp(&small).values);
    let s0 = solve_generalized(&p0, small.n_vertices(), &SolveOptions::dense())?;
    let zero = predict_perturbed(&s0, &p0.h.combine(0.0, &p0.h, 0.0)?, &DiagOperator::new(vec![0.0; small.n_vertices()]))?;
    ensure!((zero.vectors.clone() - s0.vectors()).amax() < 1e-14, "zero perturbation moved the eigenvectors");
    Ok(format!("lowest first-5 correlation {worst:.3} over 3 seeds; predictor slope {:.3}", sw.slope))
}

fn main() {
    let criteria: [(&str, fn() -> R); 13] = [
        ("analytic square spectrum", ac1),
        ("constant-shift exactness", ac2),
        ("eigenvalue bounds", ac3),
        ("step-potential confinement", ac4),
        ("gradient vs finite differences", ac5),
        ("potential optimization gain", ac6),
        ("residual bound and equality case", ac7),
        ("heat kernel properties", ac8),
        ("nodal domain counts", ac9),
        ("compressed manifold modes", ac10),
        ("spectral compression", ac11),
        ("matching harness", ac12),
        ("robustness and predictor order", ac13),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.trim_start_matches("AC").parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("AC{id:<2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(e) => {
                failed += 1;
                println!("AC{id:<2} FAIL  {name}: {e} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
