//! `repro`: desk-scale versions of the figure experiments, each written to
//! its own subdirectory of `--out`.

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use hamspec::cmm::{cmm_basis, timing_report, CmmOptions};
use hamspec::compression::{rd_curve, BasisKind, Operators, PotentialSource, RdConfig};
use hamspec::eigen::{solve_generalized, SolveOptions};
use hamspec::fem::{assemble_interval, mesh_pencil, PotentialField};
use hamspec::matching::{area_distortion_potential, compare_bases, stretched_bump_pair, ComparisonOptions, Correspondence};
use hamspec::mesh::{io, shapes, Interval};
use hamspec::optim::{optimize_potential_operators, OptimizationProblem};
use hamspec::spectral::robustness::{noise_robustness, predictor_sweep};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::output::{columns_csv, report, Output};
use crate::GlobalArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Unit-square Neumann spectrum with Richardson extrapolation.
    Spectra,
    /// Confinement by a step potential on the interval.
    Step,
    /// Eigenfunction stability under noise and predictor convergence.
    Robustness,
    /// Optimized potential for a 1-D ramp.
    Ramp,
    /// Optimized potential for mesh coordinates.
    Coords,
    /// Rate–distortion of MHB against the optimized Hamiltonian basis.
    Rd,
    /// Compressed manifold modes: localization sweep and timing.
    Cmm,
    /// LBO against Hamiltonian matching on a near-isometric pair.
    Matching,
}

const ALL: [Experiment; 8] = [
    Experiment::Spectra,
    Experiment::Step,
    Experiment::Robustness,
    Experiment::Ramp,
    Experiment::Coords,
    Experiment::Rd,
    Experiment::Cmm,
    Experiment::Matching,
];

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproArgs {
    /// Experiments to run (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub only: Vec<Experiment>,
}

pub fn run(a: &ReproArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let list: Vec<Experiment> = if a.only.is_empty() { ALL.to_vec() } else { a.only.clone() };
    let mut summary = serde_json::Map::new();
    for e in list {
        let name = serde_json::to_value(e)?.as_str().unwrap_or("experiment").to_string();
        let dir = out.child(&name, json!({ "experiment": name }))?;
        let r = match e {
            Experiment::Spectra => spectra(&dir)?,
            Experiment::Step => step(&dir)?,
            Experiment::Robustness => robustness(&dir, g.seed)?,
            Experiment::Ramp => ramp(&dir)?,
            Experiment::Coords => coords(&dir)?,
            Experiment::Rd => rd(&dir)?,
            Experiment::Cmm => cmm(&dir)?,
            Experiment::Matching => matching(&dir, g.seed)?,
        };
        dir.json("summary.json", &r)?;
        summary.insert(name, r);
    }
    out.json("repro.json", &summary)?;
    report(&summary)
}

/// First six nonzero Neumann eigenvalues on the unit square, `π²{1,1,2,4,4,5}`.
pub const SQUARE_EXACT: [f64; 6] = [1.0, 1.0, 2.0, 4.0, 4.0, 5.0];

fn spectra(out: &Output) -> Result<serde_json::Value> {
    let solve = |m: usize| -> Result<Vec<f64>> {
        let mesh = shapes::grid(m)?;
        let s = solve_generalized(&mesh_pencil(&mesh, &PotentialField::zeros(mesh.n_vertices()))?, 7, &SolveOptions::default())?;
        Ok(s.values()[1..7].to_vec())
    };
    let (coarse, fine) = (solve(21)?, solve(41)?);
    let pi2 = std::f64::consts::PI.powi(2);
    let mut body = String::from("index,coarse,fine,richardson,exact,relative_error\n");
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        // Second-order convergence, spacing halved.
        let r = (4.0 * fine[i] - coarse[i]) / 3.0;
        let exact = pi2 * SQUARE_EXACT[i];
        let rel = (r - exact).abs() / exact;
        worst = worst.max(rel);
        body.push_str(&format!("{},{:?},{:?},{:?},{:?},{:?}\n", i + 1, coarse[i], fine[i], r, exact, rel));
    }
    out.csv("spectra.csv", body.as_bytes())?;
    Ok(json!({ "worst_relative_error": worst }))
}

fn step(out: &Output) -> Result<serde_json::Value> {
    let n = 200;
    let iv = Interval::new(n)?;
    let v0 = 2.89e4;
    let v: Vec<f64> = iv.points().iter().map(|&x| if x > 0.5 { v0 } else { 0.0 }).collect();
    let s = solve_generalized(&assemble_interval(&iv, &PotentialField::new(v.clone())?)?, 40, &SolveOptions::dense())?;
    let mut body = String::from("index,energy,high_region_mass\n");
    let mut fractions = Vec::new();
    for i in 0..s.k() {
        let f: f64 = (0..n).filter(|&x| v[x] > 0.0).map(|x| s.mass()[x] * s.vector(i)[x].powi(2)).sum();
        fractions.push(f);
        body.push_str(&format!("{i},{:?},{f:?}\n", s.values()[i]));
    }
    out.csv("step_energies.csv", body.as_bytes())?;
    let mut names = vec!["x".to_string(), "potential".to_string()];
    let mut cols = vec![iv.points().to_vec(), v];
    for i in 0..s.k() {
        names.push(format!("psi_{i}"));
        cols.push(s.vector(i).to_vec());
    }
    out.csv("step_eigenfunctions.csv", &columns_csv(&names, &cols))?;
    Ok(json!({ "v0": v0, "energies": s.values(), "high_region_mass": fractions }))
}

fn robustness(out: &Output, seed: u64) -> Result<serde_json::Value> {
    let mesh = io::bundled("hand_plate")?;
    let pot = PotentialField::new(mesh.vertices().iter().map(|p| 30.0 * p[1]).collect())?;
    let r = noise_robustness(&mesh, &pot, 6, 0.2, 0.2, seed, &SolveOptions::default())?;
    let mut body = String::from("mode,clean,noisy,correlation\n");
    for i in 0..r.correlations.len() {
        body.push_str(&format!("{i},{:?},{:?},{:?}\n", r.clean_values[i], r.noisy_values[i], r.correlations[i]));
    }
    out.csv("noise.csv", body.as_bytes())?;
    let small = shapes::finger_plate(10, 8)?;
    let sp = PotentialField::new(small.vertices().iter().map(|p| 30.0 * p[1]).collect())?;
    let sw = predictor_sweep(&small, &sp, &[1, 2, 3, 4], &[1e-1, 1e-2, 1e-3, 1e-4], seed)?;
    let mut body = String::from("eps,error,baseline\n");
    for i in 0..sw.eps.len() {
        body.push_str(&format!("{:?},{:?},{:?}\n", sw.eps[i], sw.errors[i], sw.baseline[i]));
    }
    out.csv("predictor.csv", body.as_bytes())?;
    Ok(json!({ "correlations": r.correlations, "slope": sw.slope }))
}

fn ramp(out: &Output) -> Result<serde_json::Value> {
    let iv = Interval::new(200)?;
    let p = assemble_interval(&iv, &PotentialField::zeros(200))?;
    let problem = OptimizationProblem::new(DMatrix::from_column_slice(200, 1, iv.points()), 15);
    let (v, trace) = optimize_potential_operators(&p.h, &p.mass, &problem)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    out.csv("trace.csv", &buf)?;
    out.csv("potential.csv", &columns_csv(&["x".into(), "potential".into()], &[iv.points().to_vec(), v.scaled()]))?;
    Ok(json!({ "lbo_loss": trace.initial_loss(), "final_loss": trace.final_loss() }))
}

fn coords(out: &Output) -> Result<serde_json::Value> {
    let mesh = io::bundled("hand_plate")?;
    let n = mesh.n_vertices();
    let c = mesh.coordinate_columns();
    let problem = OptimizationProblem::new(DMatrix::from_fn(n, 3, |r, k| c[k][r]), 50);
    let (v, trace) = hamspec::optim::optimize_potential(&mesh, &problem)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    out.csv("trace.csv", &buf)?;
    out.ply("potential.ply", &mesh.clone().with_channel("potential", v.scaled())?)?;
    Ok(json!({ "lbo_loss": trace.initial_loss(), "final_loss": trace.final_loss() }))
}

fn rd(out: &Output) -> Result<serde_json::Value> {
    let mesh = io::bundled("cube")?;
    let ks = [5, 10, 20, 40, 80];
    let mhb = rd_curve(&mesh, &RdConfig::mhb(), &ks, 0.0)?;
    let hopt = rd_curve(
        &mesh,
        &RdConfig { kind: BasisKind::HOpt, operators: Operators::Graph, potential: PotentialSource::Optimized { max_iter: 30 } },
        &ks,
        0.0,
    )?;
    let mut body = String::from("basis,k,bits,bits_excluding_potential,error\n");
    for (name, rows) in [("mhb", &mhb), ("hopt", &hopt)] {
        for r in rows.iter() {
            body.push_str(&format!("{name},{},{},{},{:?}\n", r.k, r.bits, r.bits_excluding_potential, r.error));
        }
    }
    out.csv("rd.csv", body.as_bytes())?;
    Ok(json!({ "mhb": mhb, "hopt": hopt }))
}

fn cmm(out: &Output) -> Result<serde_json::Value> {
    let mesh = shapes::icosphere(2)?;
    let mut body = String::from("mu,support_fraction,max_off_diagonal,total_objective\n");
    let mut support = Vec::new();
    for mu in [0.0, 1.0, 5.0, 20.0, 50.0] {
        let c = cmm_basis(&mesh, 6, &CmmOptions { mu, ..Default::default() })?;
        let s = c.support_fraction(0.01);
        support.push(s);
        body.push_str(&format!("{mu:?},{s:?},{:?},{:?}\n", c.max_off_diagonal(), c.total_objective()));
    }
    out.csv("sweep.csv", body.as_bytes())?;
    let mut body = String::from("n,k,iterative_seconds,dense_seconds\n");
    let mut rows = Vec::new();
    for m in [shapes::finger_plate(12, 10)?, shapes::icosphere(2)?, shapes::icosphere(3)?] {
        let r = timing_report(&m, 4, &CmmOptions { mu: 5.0, max_iter: 20, ..Default::default() })?;
        body.push_str(&format!("{},{},{:?},{:?}\n", r.n, r.k, r.iterative_seconds, r.dense_seconds));
        rows.push(r);
    }
    out.csv("timing.csv", body.as_bytes())?;
    Ok(json!({ "support_fraction": support, "timing": rows }))
}

fn matching(out: &Output, seed: u64) -> Result<serde_json::Value> {
    let (m, n) = stretched_bump_pair(41, 21)?;
    let gt = Correspondence::identity(m.n_vertices());
    let v = area_distortion_potential(&m, &n, &gt)?;
    let c = compare_bases(&m, &n, &gt, &v, &ComparisonOptions { diameter_seed: seed, ..Default::default() })?;
    for (tag, r) in [("lbo", &c.lbo), ("ham", &c.hamiltonian)] {
        let mut buf = Vec::new();
        r.curve.write_csv(&mut buf)?;
        out.csv(&format!("curve_{tag}.csv"), &buf)?;
        let mut buf = Vec::new();
        r.fmap.write_csv(&mut buf)?;
        out.csv(&format!("fmap_{tag}.csv"), &buf)?;
    }
    if c.lbo.curve.thresholds.is_empty() {
        bail!("empty error curve");
    }
    Ok(json!({
        "mu": c.hamiltonian.mu,
        "diagonality": { "lbo": c.lbo.diagonality, "hamiltonian": c.hamiltonian.diagonality },
        "accuracy_at_0.05": { "lbo": c.lbo.curve.at(0.05), "hamiltonian": c.hamiltonian.curve.at(0.05) },
    }))
}
