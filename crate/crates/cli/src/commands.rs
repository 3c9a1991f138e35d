//! Subcommand arguments and their implementations.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use hamspec::cmm::{cmm_basis, timing_report, CmmOptions, CmmSolver};
use hamspec::compression::{
    decode, encode, geometry_error, optimized_compression_potential, rd_curve, to_bytes, transmitted_connectivity, BasisKind,
    CompressionMode, Operators, PotentialSource, RdConfig,
};
use hamspec::eigen::{check_bounds, solve_generalized, MethodChoice, SolveOptions, DEFAULT_SEED};
use hamspec::matching::{
    area_distortion_potential, compare_bases, estimate_diameter, geodesic_error_curve, intrinsic_potential, landmark_potential,
    read_map, stretched_bump_pair, BasisRun, ComparisonOptions, Correspondence, DIAMETER_SAMPLES,
};
use hamspec::optim::{optimize_potential_operators, OptimizationProblem, Parameterization};
use hamspec::spectral::robustness::{noise_robustness, predictor_sweep};
use hamspec::spectral::{diffuse, hks, nodal_domains, residual_bound_check, wks, wks_default_schedule};
use hamspec::{PotentialField, Spectrum, TriMesh};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::input::{self, load_mesh, Domain, DomainArgs};
use crate::output::{columns_csv, report, say, Output, RunConfig};
use crate::{Cli, Command, GlobalArgs};

#[derive(Debug, Clone, Args, Serialize)]
pub struct PotArgs {
    /// zero | const:C | random[:MAX] | step:V0[:T] | coord:AXIS | file:PATH | channel:NAME
    #[arg(long, default_value = "zero")]
    pub potential: String,
    /// Potential scale μ in H = -Δ + μV.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
    /// Relative residual tolerance of the iterative solver.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

impl SolveArgs {
    pub fn options(&self, seed: u64) -> SolveOptions {
        let method = match self.method {
            MethodArg::Auto => MethodChoice::Auto,
            MethodArg::Dense => MethodChoice::Dense,
            MethodArg::Lanczos => MethodChoice::Lanczos,
        };
        SolveOptions { tol: self.tol, method, seed: DEFAULT_SEED.wrapping_add(seed), ..SolveOptions::default() }
    }
}

fn spectrum(domain: &Domain, pot: &PotentialField, k: usize, opts: &SolveOptions) -> Result<Spectrum> {
    if k == 0 || k > domain.n() {
        bail!("--k must be in 1..={}, got {k}", domain.n());
    }
    Ok(solve_generalized(&domain.pencil(pot)?, k, opts)?)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Also write the mesh with one channel per eigenfunction.
    #[arg(long)]
    pub ply: bool,
}

fn eig(a: &EigArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let pencil = domain.pencil(&pot)?;
    let s = spectrum(&domain, &pot, a.k, &a.solve.options(g.seed))?;
    let result = json!({
        "n": s.n(),
        "k": s.k(),
        "method": s.method,
        "eigenvalues": s.values(),
        "relative_residuals": s.relative_residuals(&pencil.h),
        "orthonormality_error": s.orthonormality_error(),
    });
    out.json("eig.json", &result)?;
    out.spectrum("eig.hspec", &s)?;
    if a.ply {
        let Some(mesh) = domain.mesh() else { bail!("--ply needs a mesh") };
        let mut m = mesh.clone();
        for i in 0..s.k() {
            m.set_channel(format!("psi_{i}"), s.vector(i).to_vec())?;
        }
        out.ply("eig.ply", &m)?;
    }
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiffuseArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Vertex carrying the initial unit heat.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    pub times: Vec<f64>,
}

fn diffuse_cmd(a: &DiffuseArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let s = spectrum(&domain, &pot, a.k.min(domain.n()), &a.solve.options(g.seed))?;
    if a.source >= domain.n() {
        bail!("--source {} out of range (n = {})", a.source, domain.n());
    }
    let mut u0 = vec![0.0; domain.n()];
    u0[a.source] = 1.0 / s.mass()[a.source];
    let mut cols = Vec::new();
    let mut heat = Vec::new();
    for &t in &a.times {
        let u = diffuse(&s, &u0, t)?;
        heat.push(u.iter().zip(s.mass()).map(|(x, m)| x * m).sum::<f64>());
        cols.push(u);
    }
    let names: Vec<String> = a.times.iter().map(|t| format!("t={t}")).collect();
    out.csv("diffuse.csv", &columns_csv(&names, &cols))?;
    let result = json!({ "times": a.times, "total_heat": heat, "k": s.k() });
    out.json("diffuse.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HksArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Explicit diffusion times; otherwise `count` log-spaced times over
    /// `[4 ln 10 / E_k, 4 ln 10 / E_min]`.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
}

fn hks_cmd(a: &HksArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let s = spectrum(&domain, &pot, a.k.min(domain.n()), &a.solve.options(g.seed))?;
    let times = match &a.times {
        Some(t) => t.clone(),
        None => {
            let pos: Vec<f64> = s.values().iter().copied().filter(|&e| e > 1e-12).collect();
            if pos.len() < 2 || a.count < 2 {
                bail!("default HKS times need two positive eigenvalues and --count ≥ 2");
            }
            let (lo, hi) = ((4.0 * 10f64.ln() / pos[pos.len() - 1]).ln(), (4.0 * 10f64.ln() / pos[0]).ln());
            (0..a.count).map(|i| (lo + (hi - lo) * i as f64 / (a.count - 1) as f64).exp()).collect()
        }
    };
    let d = hks(&s, &times)?;
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    out.csv("hks.csv", &buf)?;
    let result = json!({ "times": times, "n": d.n_vertices() });
    out.json("hks.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WksArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Number of log-energies.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Gaussian width in log-energy; defaults to 7 spacings.
    #[arg(long)]
    pub sigma: Option<f64>,
}

fn wks_cmd(a: &WksArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let s = spectrum(&domain, &pot, a.k.min(domain.n()), &a.solve.options(g.seed))?;
    let (energies, sigma) = wks_default_schedule(&s, a.count)?;
    let sigma = a.sigma.unwrap_or(sigma);
    let d = wks(&s, &energies, sigma)?;
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    out.csv("wks.csv", &buf)?;
    let result = json!({ "log_energies": energies, "sigma": sigma, "n": d.n_vertices() });
    out.json("wks.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NodalArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
}

fn nodal(a: &NodalArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let mesh = domain.mesh().context("nodal domains need a mesh")?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let s = spectrum(&domain, &pot, a.k, &a.solve.options(g.seed))?;
    let mut body = String::from("index,eigenvalue,domains,within_bound\n");
    let mut violations = 0;
    let mut counts = Vec::new();
    for i in 0..s.k() {
        let c = nodal_domains(mesh, s.vector(i))?.count;
        let ok = c <= i + 1;
        violations += usize::from(!ok);
        counts.push(c);
        body.push_str(&format!("{},{:?},{c},{ok}\n", i + 1, s.values()[i]));
    }
    out.csv("nodal.csv", body.as_bytes())?;
    let result = json!({ "domains": counts, "violations": violations });
    out.json("nodal.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Relative slack (violations are measured relative to 1 + |Eᵢ|).
    #[arg(long, default_value_t = 1e-8)]
    pub slack: f64,
    /// Independent potentials; trial t uses seed + t.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
}

fn bounds(a: &BoundsArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let opts = a.solve.options(g.seed);
    let lbo = spectrum(&domain, &PotentialField::zeros(domain.n()), a.k, &opts)?;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut body = String::from("trial,index,lambda,energy,lower_ok,upper_ok\n");
    for t in 0..a.trials {
        let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed.wrapping_add(t as u64))?;
        let ham = spectrum(&domain, &pot, a.k, &opts)?;
        let r = check_bounds(&lbo, &ham, &pot, a.slack)?;
        worst = worst.max(r.worst_violation);
        for i in 0..a.k {
            violations += usize::from(!r.lower_ok[i]) + usize::from(!r.upper_ok[i]);
            body.push_str(&format!("{t},{i},{:?},{:?},{},{}\n", lbo.values()[i], ham.values()[i], r.lower_ok[i], r.upper_ok[i]));
        }
    }
    out.csv("bounds.csv", body.as_bytes())?;
    let message = if violations == 0 { "all bounds hold".to_string() } else { format!("{violations} bounds violated") };
    let result = json!({ "trials": a.trials, "k": a.k, "violations": violations, "worst_violation": worst, "message": message });
    out.json("bounds.json", &result)?;
    say(&message)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub pot: PotArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Number of retained basis functions.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Test signal: coord:AXIS | random[:MAX] | file:PATH | channel:NAME | eigen:I
    #[arg(long, default_value = "coord:x")]
    pub f: String,
}

fn residual(a: &ResidualArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let pot = input::potential(&a.pot.potential, &domain, a.pot.mu, g.seed)?;
    let pencil = domain.pencil(&pot)?;
    let s = spectrum(&domain, &pot, (a.k + 1).min(domain.n()), &a.solve.options(g.seed))?;
    let f = match a.f.strip_prefix("eigen:") {
        Some(i) => {
            let i: usize = i.parse().map_err(|_| input::usage(format!("bad eigen index in {:?}", a.f)))?;
            if i >= s.k() {
                bail!("eigen:{i} exceeds the {} computed pairs", s.k());
            }
            s.vector(i).to_vec()
        }
        None => input::vertex_function(&a.f, &domain, g.seed)?,
    };
    let r = residual_bound_check(&s, &pencil, &f, a.k)?;
    let ratio = r.bound.map(|b| r.residual2 / b);
    let result = json!({ "report": r, "ratio": ratio });
    out.json("residual.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamArg {
    Free,
    Squared,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptpotArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    /// ramp (x coordinate) | coords (vertex positions) | file:PATH | channel:NAME
    #[arg(long, default_value = "coords")]
    pub target: String,
    /// Eigenpairs used for the gradient (default min(n, 150)).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "free")]
    pub param: ParamArg,
    /// Identity mass and Euclidean loss instead of the lumped mass.
    #[arg(long)]
    pub plain: bool,
    /// Gap stabilizer of the inverse eigenvalue differences.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

fn optpot(a: &OptpotArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let domain = a.domain.resolve()?;
    let n = domain.n();
    let data = match a.target.as_str() {
        "ramp" => DMatrix::from_column_slice(n, 1, &domain.positions().iter().map(|p| p[0]).collect::<Vec<_>>()),
        "coords" => {
            let p = domain.positions();
            DMatrix::from_fn(n, 3, |r, c| p[r][c])
        }
        spec => DMatrix::from_column_slice(n, 1, &input::vertex_function(spec, &domain, g.seed)?),
    };
    let (w, mass) = domain.operators(a.plain)?;
    let mut problem = OptimizationProblem::new(data, a.k);
    problem.m = a.m;
    problem.mu = a.mu;
    problem.epsilon = a.epsilon;
    problem.geometric = !a.plain;
    problem.parameterization = match a.param {
        ParamArg::Free => Parameterization::Free,
        ParamArg::Squared => Parameterization::Squared,
    };
    problem.lbfgs.max_iter = a.max_iter;
    problem.solve = a.solve.options(g.seed);
    let (v, trace) = optimize_potential_operators(&w, &mass, &problem)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    out.csv("optpot_trace.csv", &buf)?;
    let pos = domain.positions();
    let cols = vec![pos.iter().map(|p| p[0]).collect(), pos.iter().map(|p| p[1]).collect(), pos.iter().map(|p| p[2]).collect(), v.scaled()];
    out.csv("optpot_potential.csv", &columns_csv(&["x".into(), "y".into(), "z".into(), "potential".into()], &cols))?;
    let (lbo, fin) = (trace.initial_loss(), trace.final_loss());
    let result = json!({
        "lbo_loss": lbo,
        "final_loss": fin,
        "relative_improvement": if lbo > 0.0 { 1.0 - fin / lbo } else { 0.0 },
        "trace": trace,
    });
    out.json("optpot.json", &result)?;
    report(&json!({ "lbo_loss": lbo, "final_loss": fin, "iterations": trace.iterations, "stop": trace.stop }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisArg {
    Mhb,
    Hopt,
    Hreordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorsArg {
    Graph,
    Cotangent,
}

impl From<OperatorsArg> for Operators {
    fn from(o: OperatorsArg) -> Self {
        match o {
            OperatorsArg::Graph => Operators::Graph,
            OperatorsArg::Cotangent => Operators::Cotangent,
        }
    }
}

fn compression_potential(spec: &str, mesh: &TriMesh, operators: Operators, k: usize, max_iter: usize, seed: u64) -> Result<Vec<f64>> {
    if spec == "optimized" {
        return Ok(optimized_compression_potential(mesh, operators, k, max_iter)?);
    }
    Ok(input::potential(spec, &Domain::Mesh(mesh.clone()), 1.0, seed)?.scaled())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompressArgs {
    #[arg(long)]
    pub mesh: String,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Uniform quantization step, 0 keeps raw doubles.
    #[arg(long, default_value_t = 0.0)]
    pub qstep: f64,
    #[arg(long, value_enum, default_value = "mhb")]
    pub basis: BasisArg,
    #[arg(long, value_enum, default_value = "graph")]
    pub operators: OperatorsArg,
    /// `optimized` or a potential spec (ignored by mhb).
    #[arg(long, default_value = "optimized")]
    pub potential: String,
    /// Optimizer iterations for `optimized`.
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

fn compress(a: &CompressArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let ops: Operators = a.operators.into();
    let mode = match a.basis {
        BasisArg::Mhb => CompressionMode::Mhb,
        BasisArg::Hopt => CompressionMode::HOpt { potential: compression_potential(&a.potential, &mesh, ops, a.k, a.max_iter, g.seed)?, operators: ops },
        BasisArg::Hreordered => CompressionMode::HReordered {
            potential: compression_potential(&a.potential, &mesh, Operators::Graph, a.k, a.max_iter, g.seed)?,
        },
    };
    let c = encode(&mesh, &mode, a.k, a.qstep)?;
    let bytes = to_bytes(&c);
    out.hspc("mesh.hspc", &bytes)?;
    let tris = transmitted_connectivity(&mesh, &c)?;
    let d = decode(&c, &tris, Some(&mesh))?;
    let error = geometry_error(&mesh, &d.in_original_order(c.order.as_deref()))?;
    let b = c.bitrate();
    let result = json!({
        "kind": c.kind, "operators": c.operators, "n": c.n, "k": c.k, "qstep": c.qstep,
        "bitrate": b, "bits": b.total(), "bits_excluding_potential": b.excluding_potential(),
        "stream_bytes": bytes.len(), "error": error,
    });
    out.json("compress.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RdArgs {
    #[arg(long)]
    pub mesh: String,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub qstep: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mhb,hopt")]
    pub bases: Vec<BasisArg>,
    #[arg(long, value_enum, default_value = "graph")]
    pub operators: OperatorsArg,
    /// `optimized` (per k) or a fixed potential spec.
    #[arg(long, default_value = "optimized")]
    pub potential: String,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

fn rd(a: &RdArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let source = if a.potential == "optimized" {
        PotentialSource::Optimized { max_iter: a.max_iter }
    } else {
        PotentialSource::Fixed(input::potential(&a.potential, &Domain::Mesh(mesh.clone()), 1.0, g.seed)?.scaled())
    };
    let mut body = String::from("basis,k,bits,bits_excluding_potential,error\n");
    let mut curves = serde_json::Map::new();
    for &b in &a.bases {
        let (kind, name) = match b {
            BasisArg::Mhb => (BasisKind::Mhb, "mhb"),
            BasisArg::Hopt => (BasisKind::HOpt, "hopt"),
            BasisArg::Hreordered => (BasisKind::HReordered, "hreordered"),
        };
        let config = RdConfig { kind, operators: a.operators.into(), potential: source.clone() };
        let rows = rd_curve(&mesh, &config, &a.ks, a.qstep)?;
        for r in &rows {
            body.push_str(&format!("{name},{},{},{},{:?}\n", r.k, r.bits, r.bits_excluding_potential, r.error));
        }
        curves.insert(name.into(), serde_json::to_value(&rows)?);
    }
    out.csv("rd.csv", body.as_bytes())?;
    out.json("rd.json", &curves)?;
    report(&curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CmmSolverArg {
    Iterative,
    Dense,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CmmArgs {
    #[arg(long)]
    pub mesh: String,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// L1 weight.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Orthogonality penalty (default 10³ × largest eigenvalue seen).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "iterative")]
    pub solver: CmmSolverArg,
    /// Also time the iterative path against the dense reference.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub ply: bool,
}

fn cmm(a: &CmmArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let solver = match a.solver {
        CmmSolverArg::Iterative => CmmSolver::Iterative,
        CmmSolverArg::Dense => CmmSolver::DenseReference,
    };
    let opts = CmmOptions {
        mu: a.mu,
        beta: a.beta,
        max_iter: a.max_iter,
        solver,
        solve: SolveOptions { seed: DEFAULT_SEED.wrapping_add(g.seed), ..SolveOptions::lanczos() },
        ..CmmOptions::default()
    };
    let c = cmm_basis(&mesh, a.k, &opts)?;
    out.spectrum("cmm.hspec", &c.to_spectrum()?)?;
    if a.ply {
        let mut m = mesh.clone();
        for i in 0..c.k() {
            m.set_channel(format!("mode_{i}"), c.modes.column(i).iter().copied().collect())?;
        }
        out.ply("cmm.ply", &m)?;
    }
    let mut result = json!({
        "mu": c.mu, "beta": c.beta, "objectives": c.objectives,
        "support_fraction": c.support_fraction(0.01),
        "orthonormality_error": c.orthonormality_error(),
        "max_off_diagonal": c.max_off_diagonal(),
        "traces": c.traces,
    });
    if a.timing {
        let row = timing_report(&mesh, a.k, &opts)?;
        let body = format!("n,k,iterative_seconds,dense_seconds\n{},{},{:?},{:?}\n", row.n, row.k, row.iterative_seconds, row.dense_seconds);
        out.csv("cmm_timing.csv", body.as_bytes())?;
        result["timing"] = serde_json::to_value(row)?;
    }
    out.json("cmm.json", &result)?;
    report(&json!({ "objectives": c.objectives, "support_fraction": result["support_fraction"], "max_off_diagonal": c.max_off_diagonal() }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Area,
    Intrinsic,
    Landmark,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PotentialArgs {
    #[arg(long, value_enum)]
    pub kind: PotentialKind,
    #[arg(long)]
    pub source: String,
    /// Target mesh (area distortion).
    #[arg(long)]
    pub target: Option<String>,
    /// Ground-truth map source → target (area distortion; identity if omitted).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub landmarks: Vec<usize>,
    /// Divide landmark distances by their maximum.
    #[arg(long)]
    pub normalize: bool,
}

fn read_gt(path: Option<&PathBuf>, n: usize, target_len: usize) -> Result<Correspondence> {
    match path {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let c = read_map(std::io::BufReader::new(f), target_len)?;
            if c.len() != n {
                bail!("{}: map has {} entries, source has {n} vertices", p.display(), c.len());
            }
            Ok(c)
        }
        None if n == target_len => Ok(Correspondence::identity(n)),
        None => bail!("missing input: --gt (meshes differ in size)"),
    }
}

fn lbo_spectrum(mesh: &TriMesh, k: usize, seed: u64) -> Result<Spectrum> {
    let opts = SolveOptions { seed: DEFAULT_SEED.wrapping_add(seed), ..SolveOptions::default() };
    spectrum(&Domain::Mesh(mesh.clone()), &PotentialField::zeros(mesh.n_vertices()), k.min(mesh.n_vertices()), &opts)
}

fn potential_cmd(a: &PotentialArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let src = load_mesh(&a.source)?;
    let v = match a.kind {
        PotentialKind::Area => {
            let dst = load_mesh(a.target.as_deref().context("missing input: --target")?)?;
            let gt = read_gt(a.gt.as_ref(), src.n_vertices(), dst.n_vertices())?;
            area_distortion_potential(&src, &dst, &gt)?
        }
        PotentialKind::Intrinsic => intrinsic_potential(&lbo_spectrum(&src, 5, g.seed)?)?,
        PotentialKind::Landmark => {
            if a.landmarks.is_empty() {
                bail!("missing input: --landmarks");
            }
            landmark_potential(&src, &a.landmarks, a.normalize)?
        }
    };
    out.csv("potential.csv", &columns_csv(&["potential".into()], &[v.values.clone()]))?;
    let result = json!({ "n": v.len(), "min": v.min(), "max": v.max() });
    out.json("potential.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatchArgs {
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    /// Generated pair with identity ground truth: `stretched:NX,NY`.
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Source potential for the Hamiltonian basis: area | intrinsic | file:PATH
    #[arg(long, default_value = "area")]
    pub potential: String,
    /// μ of the Hamiltonian basis (default λ_{k_map−1} / (max V − min V)).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub k_map: usize,
    #[arg(long, default_value_t = 100)]
    pub energies: usize,
}

fn match_inputs(a: &MatchArgs) -> Result<(TriMesh, TriMesh, Correspondence)> {
    if let Some(p) = &a.pair {
        let dims = p.strip_prefix("stretched:").context("--pair must be stretched:NX,NY")?;
        let (nx, ny) = dims.split_once(',').context("--pair must be stretched:NX,NY")?;
        let (m, n) = stretched_bump_pair(nx.trim().parse()?, ny.trim().parse()?)?;
        let gt = Correspondence::identity(m.n_vertices());
        return Ok((m, n, gt));
    }
    let src = load_mesh(a.source.as_deref().context("missing input: --source or --pair")?)?;
    let dst = load_mesh(a.target.as_deref().context("missing input: --target")?)?;
    let gt = read_gt(a.gt.as_ref(), src.n_vertices(), dst.n_vertices())?;
    Ok((src, dst, gt))
}

fn write_run(out: &Output, tag: &str, run: &BasisRun) -> Result<()> {
    out.map(&format!("map_{tag}.txt"), &run.map)?;
    let mut buf = Vec::new();
    run.curve.write_csv(&mut buf)?;
    out.csv(&format!("curve_{tag}.csv"), &buf)?;
    let mut buf = Vec::new();
    run.fmap.write_csv(&mut buf)?;
    out.csv(&format!("fmap_{tag}.csv"), &buf)?;
    Ok(())
}

fn match_cmd(a: &MatchArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let (src, dst, gt) = match_inputs(a)?;
    let v = match a.potential.as_str() {
        "area" => area_distortion_potential(&src, &dst, &gt)?,
        "intrinsic" => intrinsic_potential(&lbo_spectrum(&src, 5, g.seed)?)?,
        spec => input::potential(spec, &Domain::Mesh(src.clone()), 1.0, g.seed)?,
    };
    let opts = ComparisonOptions {
        k: a.k,
        k_map: a.k_map,
        wks_energies: a.energies,
        mu: a.mu,
        diameter_seed: g.seed,
        solve: SolveOptions { seed: DEFAULT_SEED.wrapping_add(g.seed), ..SolveOptions::default() },
    };
    let c = compare_bases(&src, &dst, &gt, &v, &opts)?;
    write_run(out, "lbo", &c.lbo)?;
    write_run(out, "ham", &c.hamiltonian)?;
    let summary = |r: &BasisRun| json!({ "mu": r.mu, "diagonality": r.fmap.diagonality(), "accuracy_at_0.05": r.curve.at(0.05), "accuracy_at_0.25": r.curve.at(0.25) });
    let result = json!({ "lbo": summary(&c.lbo), "hamiltonian": summary(&c.hamiltonian), "diameter": c.lbo.curve.diameter });
    out.json("match.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurveArgs {
    /// Correspondence to evaluate (one or two columns).
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub target: String,
}

fn curve(a: &CurveArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let target = load_mesh(&a.target)?;
    let n = target.n_vertices();
    let open = |p: &PathBuf| -> Result<Correspondence> {
        let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(read_map(std::io::BufReader::new(f), n)?)
    };
    let (map, gt) = (open(&a.map)?, open(&a.gt)?);
    let diameter = estimate_diameter(&target, DIAMETER_SAMPLES, g.seed)?;
    let c = geodesic_error_curve(&map, &gt, &target, diameter)?;
    let mut buf = Vec::new();
    c.write_csv(&mut buf)?;
    out.csv("curve.csv", &buf)?;
    let result = json!({ "diameter": diameter, "accuracy_at_0.05": c.at(0.05), "accuracy_at_0.25": c.at(0.25), "exact": c.fraction_within(0.0) });
    out.json("curve.json", &result)?;
    report(&result)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub mesh: String,
    #[arg(long, default_value = "coord:y")]
    pub potential: String,
    #[arg(long, default_value_t = 30.0)]
    pub mu: f64,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Vertex noise standard deviation, in mean edge lengths.
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    /// Potential noise variance as a fraction of Var(V).
    #[arg(long, default_value_t = 0.2)]
    pub potential_noise: f64,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    /// ε values of the predictor sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
    pub eps: Vec<f64>,
    /// Skip the predictor sweep (it needs the full dense spectrum).
    #[arg(long)]
    pub no_sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub modes: Vec<usize>,
}

fn perturb(a: &PerturbArgs, g: &GlobalArgs, out: &Output) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let pot = input::potential(&a.potential, &Domain::Mesh(mesh.clone()), a.mu, g.seed)?;
    let opts = a.solve.options(g.seed);
    let mut body = String::from("trial,mode,clean,noisy,correlation\n");
    let mut reports = Vec::new();
    let mut min_corr = f64::INFINITY;
    for t in 0..a.trials {
        let r = noise_robustness(&mesh, &pot, a.k, a.sigma, a.potential_noise, g.seed.wrapping_add(t as u64), &opts)?;
        for i in 0..a.k {
            body.push_str(&format!("{t},{i},{:?},{:?},{:?}\n", r.clean_values[i], r.noisy_values[i], r.correlations[i]));
            min_corr = min_corr.min(r.correlations[i]);
        }
        reports.push(r);
    }
    out.csv("perturb_noise.csv", body.as_bytes())?;
    let mut result = json!({ "min_correlation": min_corr, "reports": reports });
    if !a.no_sweep {
        let s = predictor_sweep(&mesh, &pot, &a.modes, &a.eps, g.seed)?;
        let mut body = String::from("eps,error,baseline\n");
        for i in 0..s.eps.len() {
            body.push_str(&format!("{:?},{:?},{:?}\n", s.eps[i], s.errors[i], s.baseline[i]));
        }
        out.csv("perturb_sweep.csv", body.as_bytes())?;
        result["sweep"] = serde_json::to_value(&s)?;
    }
    out.json("perturb.json", &result)?;
    report(&json!({ "min_correlation": min_corr, "slope": result.get("sweep").map(|s| s["slope"].clone()) }))
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::from_cli(cli)?;
    let out = Output::new(&cli.global.out, &config)?;
    let g = &cli.global;
    match &cli.command {
        Command::Eig(a) => eig(a, g, &out),
        Command::Diffuse(a) => diffuse_cmd(a, g, &out),
        Command::Hks(a) => hks_cmd(a, g, &out),
        Command::Wks(a) => wks_cmd(a, g, &out),
        Command::Nodal(a) => nodal(a, g, &out),
        Command::Bounds(a) => bounds(a, g, &out),
        Command::Residual(a) => residual(a, g, &out),
        Command::Optpot(a) => optpot(a, g, &out),
        Command::Compress(a) => compress(a, g, &out),
        Command::Rd(a) => rd(a, g, &out),
        Command::Cmm(a) => cmm(a, g, &out),
        Command::Potential(a) => potential_cmd(a, g, &out),
        Command::Match(a) => match_cmd(a, g, &out),
        Command::Curve(a) => curve(a, g, &out),
        Command::Perturb(a) => perturb(a, g, &out),
        Command::Repro(a) => crate::repro::run(a, g, &out),
    }
}
