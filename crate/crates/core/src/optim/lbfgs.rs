use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when `‖g‖∞ ≤ gtol · ‖g₀‖∞`.
    pub gtol: f64,
    /// Stop when the relative loss decrease of an accepted step is below this.
    pub ftol: f64,
    /// Largest absolute coordinate change of the first (and any reset) step.
    pub initial_step: f64,
    /// Stop once the loss is at or below this value.
    pub target: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            memory: 10,
            gtol: 1e-8,
            ftol: 1e-10,
            initial_step: 1.0,
            target: f64::NEG_INFINITY,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    LossTolerance,
    Target,
    MaxIterations,
    LineSearchFailed,
    EvaluationFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    /// Best (last accepted) point.
    pub x: Vec<f64>,
    pub f: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    /// Loss at each accepted point, starting with `x₀`.
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub evaluations: usize,
    pub stop: StopReason,
    pub failure: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Limited-memory BFGS with backtracking Armijo line search. The objective
/// returns `(f, ∇f)`. An error at `x₀` is returned; later errors end the run
/// with [`StopReason::EvaluationFailed`] and the best point so far.
pub fn lbfgs<F>(mut objective: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if opts.memory == 0 || !(opts.initial_step > 0.0) {
        return invalid("L-BFGS needs memory ≥ 1 and a positive initial step");
    }
    let (mut f, mut g) = objective(&x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return invalid("objective is not finite at the starting point");
    }
    let mut x = x0;
    let g0 = inf_norm(&g);
    let mut report = LbfgsReport {
        x: Vec::new(),
        f,
        iterations: 0,
        losses: vec![f],
        grad_norms: vec![g0],
        evaluations: 1,
        stop: StopReason::MaxIterations,
        failure: None,
    };
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let converged = |f: f64, gn: f64| -> Option<StopReason> {
        if f <= opts.target {
            Some(StopReason::Target)
        } else if gn == 0.0 || gn <= opts.gtol * g0 {
            Some(StopReason::GradientTolerance)
        } else {
            None
        }
    };
    if let Some(s) = converged(f, g0) {
        report.stop = s;
        report.x = x;
        return Ok(report);
    }

    'outer: for _ in 0..opts.max_iter {
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        match mem.back() {
            Some((s, y, _)) => {
                let gamma = dot(s, y) / dot(y, y);
                d.iter_mut().for_each(|v| *v *= gamma);
            }
            None => {
                let scale = opts.initial_step / inf_norm(&d);
                d.iter_mut().for_each(|v| *v *= scale);
            }
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            mem.clear();
            let scale = opts.initial_step / inf_norm(&g);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            report.evaluations += 1;
            match objective(&trial) {
                Ok((ft, gt)) => {
                    if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + opts.armijo * step * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                Err(e) => {
                    report.stop = StopReason::EvaluationFailed;
                    report.failure = Some(e.to_string());
                    break 'outer;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            report.stop = StopReason::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let decrease = (f - fn_) / f.abs().max(f64::MIN_POSITIVE);
        x = xn;
        f = fn_;
        g = gn;
        report.iterations += 1;
        report.losses.push(f);
        let gnorm = inf_norm(&g);
        report.grad_norms.push(gnorm);
        if let Some(s) = converged(f, gnorm) {
            report.stop = s;
            break;
        }
        if decrease < opts.ftol {
            report.stop = StopReason::LossTolerance;
            break;
        }
    }
    report.x = x;
    report.f = f;
    Ok(report)
}
