//! Residuals of the relaxed approximate KKT conditions and the external
//! penalty sequence used to check them at desk scale.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::bfgs::inf_norm;
use super::complementarity;
use crate::cone_approx::PolyhedralConeApprox;
use crate::error::{check_dim, Error, Result};
use crate::problem::ProblemInstance;
use crate::symcore::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RagpResiduals {
    /// `||∇f(x) + Dg*[μ]||_∞`.
    pub stationarity: f64,
    /// `<μ, Π_K(g(x))>`.
    pub complementarity: f64,
}

pub fn ragp_residuals(
    x: &[f64],
    mu: &SymMatrix,
    cone: &PolyhedralConeApprox,
    instance: &ProblemInstance,
) -> Result<RagpResiduals> {
    let grad_f = instance.objective.gradient(x)?;
    let adj = instance.map.adjoint_apply(mu)?;
    let lag: Vec<f64> = grad_f.iter().zip(&adj).map(|(a, b)| a + b).collect();
    Ok(RagpResiduals {
        stationarity: inf_norm(&lag),
        complementarity: complementarity(mu, &instance.g(x)?, cone)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRecord {
    pub rho: f64,
    pub x: Vec<f64>,
    /// Projected-gradient norm of the penalized subproblem divided by
    /// `1 + ||ρ Dg*[Π°(g(x))]||_∞`.
    pub stationarity: f64,
    /// `||Π_{K°}(g(x))||_F`.
    pub infeasibility: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Stopping tolerance of each penalized subproblem.
pub const PENALTY_TOL: f64 = 1e-9;
pub const PENALTY_MAX_ITER: usize = 100_000;

struct Penalized<'a> {
    instance: &'a ProblemInstance,
    cone: &'a PolyhedralConeApprox,
    anchor: &'a [f64],
    rho: f64,
}

struct PenaltyEval {
    value: f64,
    grad: Vec<f64>,
    penalty_grad: Vec<f64>,
    infeasibility: f64,
}

impl Penalized<'_> {
    fn eval(&self, x: &[f64]) -> Result<PenaltyEval> {
        let (f, gf) = self.instance.objective.value_and_gradient(x)?;
        let polar = self.cone.project_polar(&self.instance.g(x)?, None)?.polar;
        let pn = polar.norm_fro();
        let adj = self.instance.map.adjoint_apply(&polar)?;
        let penalty_grad: Vec<f64> = adj.iter().map(|a| self.rho * a).collect();
        let prox: f64 = x.iter().zip(self.anchor).map(|(a, b)| (a - b) * (a - b)).sum();
        let grad = (0..x.len())
            .map(|i| gf[i] + penalty_grad[i] + (x[i] - self.anchor[i]))
            .collect();
        Ok(PenaltyEval {
            value: f + 0.5 * self.rho * pn * pn + 0.5 * prox,
            grad,
            penalty_grad,
            infeasibility: pn,
        })
    }
}

fn project_ball(x: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if d <= radius {
        return x.to_vec();
    }
    let t = radius / d;
    x.iter().zip(center).map(|(a, c)| c + t * (a - c)).collect()
}

/// Minimizes `f(x) + ρ/2 ||Π_{K°}(g(x))||² + ½||x - a||²` over the ball
/// `||x - a|| <= δ` for each `ρ` of the schedule, warm-starting each solve
/// from the previous solution. Subproblems use nonmonotone spectral projected
/// gradient, which handles the ball exactly.
pub fn penalty_method_diagnostic(
    instance: &ProblemInstance,
    cone: &PolyhedralConeApprox,
    anchor: &[f64],
    delta: f64,
    rho_schedule: &[f64],
) -> Result<Vec<PenaltyRecord>> {
    check_dim(instance.n, anchor.len())?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    if rho_schedule.windows(2).any(|w| !(w[1] > w[0])) || rho_schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument(
            "penalty schedule must be positive and increasing".into(),
        ));
    }
    let mut x = anchor.to_vec();
    let mut out = Vec::with_capacity(rho_schedule.len());
    for &rho in rho_schedule {
        let problem = Penalized {
            instance,
            cone,
            anchor,
            rho,
        };
        let rec = spectral_projected_gradient(&problem, &x, delta)?;
        x = rec.x.clone();
        out.push(rec);
    }
    Ok(out)
}

fn spectral_projected_gradient(problem: &Penalized<'_>, x0: &[f64], delta: f64) -> Result<PenaltyRecord> {
    const MEMORY: usize = 10;
    const GAMMA: f64 = 1e-4;
    let anchor = problem.anchor;
    let mut x = project_ball(x0, anchor, delta);
    let mut e = problem.eval(&x)?;
    let pg_norm = |x: &[f64], e: &PenaltyEval| {
        let trial: Vec<f64> = x.iter().zip(&e.grad).map(|(a, g)| a - g).collect();
        let p = project_ball(&trial, anchor, delta);
        let pg: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
        inf_norm(&pg) / (1.0 + inf_norm(&e.penalty_grad))
    };
    let mut alpha = 1.0 / inf_norm(&e.grad).max(1e-12);
    let mut history: VecDeque<f64> = VecDeque::from([e.value]);
    let mut stationarity = pg_norm(&x, &e);
    let mut iterations = 0;
    while stationarity > PENALTY_TOL && iterations < PENALTY_MAX_ITER {
        iterations += 1;
        let trial: Vec<f64> = x.iter().zip(&e.grad).map(|(a, g)| a - alpha * g).collect();
        let d: Vec<f64> = project_ball(&trial, anchor, delta)
            .iter()
            .zip(&x)
            .map(|(a, b)| a - b)
            .collect();
        let slope: f64 = d.iter().zip(&e.grad).map(|(a, b)| a * b).sum();
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let (x_new, e_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + lambda * b).collect();
            let ce = problem.eval(&cand)?;
            if ce.value <= reference + GAMMA * lambda * slope || lambda < 1e-20 {
                break (cand, ce);
            }
            lambda *= 0.5;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = e_new.grad.iter().zip(&e.grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-30, 1e30)
        } else {
            1e30_f64.min(1.0 / inf_norm(&e_new.grad).max(1e-30))
        };
        if ss == 0.0 {
            break;
        }
        x = x_new;
        e = e_new;
        history.push_back(e.value);
        if history.len() > MEMORY {
            history.pop_front();
        }
        stationarity = pg_norm(&x, &e);
    }
    Ok(PenaltyRecord {
        rho: problem.rho,
        converged: stationarity <= PENALTY_TOL,
        infeasibility: e.infeasibility,
        stationarity,
        iterations,
        x,
    })
}
