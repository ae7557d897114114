//! Safeguarded augmented Lagrangian outer loop with a growing polyhedral
//! approximation of the cone.
//!
//! At outer iteration `k` the cone is `K^k = {Y : dᵢᵀ Y dᵢ >= 0, dᵢ ∈ J^k}`
//! and the subproblem minimizes
//!
//! ```text
//! L(x) = f(x) + ρ/2 ||Π_{(K^k)°}(g(x) + μ̂/ρ)||² - ||μ̂||² / (2ρ)
//! ```
//!
//! divided by a scaling factor. In the proposed mode `J^0` is the first
//! shell of the simplex grid and `ζ` directions are appended per iteration;
//! the standard mode uses the full grid throughout.

pub mod bfgs;
mod diagnostics;

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone_approx::{PolarProjection, PolyhedralConeApprox};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::simplex_grid::SimplexGrid;
use crate::symcore::{distance_to_spn, frobenius_inner, SymMatrix};

pub use bfgs::{bfgs, InnerResult, InnerStatus};
pub use diagnostics::{penalty_method_diagnostic, ragp_residuals, PenaltyRecord, RagpResiduals};

use bfgs::inf_norm;

/// Outer iterations contributing to the scaling factor.
pub const SCALING_ITERATIONS: usize = 5;
/// Tolerance of the final distance to `S_+ + N`.
pub const SPN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Proposed,
    Standard,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "standard" => Ok(Mode::Standard),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::Standard => "standard",
        })
    }
}

/// Initial safeguarded multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mu0Policy {
    /// `μ̂^0 = R I`. Copositive rather than in the polar cone, so the first
    /// subproblem is effectively unconstrained.
    #[serde(rename = "paper_literal_RI")]
    PaperLiteralRI,
    /// Projection of `R I` onto `B ∩ (K^0)°`.
    #[serde(rename = "polar_projected")]
    PolarProjected,
}

impl std::str::FromStr for Mu0Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal_RI" | "paper-literal-ri" => Ok(Mu0Policy::PaperLiteralRI),
            "polar_projected" | "polar-projected" => Ok(Mu0Policy::PolarProjected),
            _ => Err(Error::InvalidArgument(format!("unknown mu0 policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    pub rho0: f64,
    pub sigma: f64,
    pub tau: f64,
    pub radius: f64,
    pub eps0: f64,
    pub eps_l: f64,
    pub eps_v: f64,
    pub zeta: usize,
    pub r_max: usize,
    pub mode: Mode,
    pub max_outer: usize,
    pub fail_fraction: f64,
    pub fail_min_iters: usize,
    pub inner_max_iter: usize,
    pub seed: u64,
    pub mu0_policy: Mu0Policy,
}

impl AlmConfig {
    /// Defaults for matrix order `m`. Orders other than 3 and 5 borrow the
    /// nearer of the two settings.
    pub fn for_order(m: usize) -> Self {
        let small = m <= 4;
        Self {
            rho0: if small { 0.1 } else { 1.0 },
            sigma: 0.9,
            tau: 2.0,
            radius: 1e12,
            eps0: if small { 1.0 } else { 0.1 },
            eps_l: 1e-5,
            eps_v: 1e-5,
            zeta: if small { 45 } else { 70 },
            r_max: if small { 15 } else { 7 },
            mode: Mode::Proposed,
            max_outer: 200,
            fail_fraction: 0.2,
            fail_min_iters: 14,
            inner_max_iter: bfgs::DEFAULT_MAX_ITER,
            seed: 0,
            mu0_policy: Mu0Policy::PaperLiteralRI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("sigma must lie in (0, 1)");
        }
        if !(self.tau > 1.0) {
            return bad("tau must exceed 1");
        }
        if !(self.radius > 0.0 && self.eps0 > 0.0 && self.eps_l > 0.0 && self.eps_v > 0.0) {
            return bad("radius and tolerances must be positive");
        }
        if self.zeta == 0 || self.max_outer == 0 || self.inner_max_iter == 0 {
            return bad("zeta, max_outer and inner_max_iter must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.fail_fraction) {
            return bad("fail_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Everything the outer loop carries between iterations.
#[derive(Debug, Clone)]
pub struct AlmState {
    pub k: usize,
    pub x: Vec<f64>,
    pub mu: SymMatrix,
    pub mu_hat: SymMatrix,
    pub rho: f64,
    pub v: SymMatrix,
    pub eps_k: f64,
    pub active_count: usize,
    pub scale: f64,
    pub fail_count: usize,
    pub scale_samples: Vec<f64>,
}

/// One evaluation of the scaled augmented Lagrangian.
#[derive(Debug, Clone)]
pub struct AlEvaluation {
    /// Full formula, including `-||μ̂||² / (2ρ)`, divided by the scale.
    pub value: f64,
    /// Value without the constant term; this is what the inner solver sees
    /// (the constant is huge when `μ̂ = R I`).
    pub shifted_value: f64,
    pub grad: Vec<f64>,
    pub f: f64,
    pub grad_f: Vec<f64>,
    pub projection: PolarProjection,
}

/// Scaled augmented Lagrangian for fixed `(K^k, μ̂, ρ)`. NNQP solutions are
/// reused as warm starts between evaluations.
pub struct AugmentedLagrangian<'a> {
    instance: &'a ProblemInstance,
    cone: &'a PolyhedralConeApprox,
    mu_hat: &'a SymMatrix,
    rho: f64,
    scale: f64,
    warm: RefCell<Vec<f64>>,
}

impl<'a> AugmentedLagrangian<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        cone: &'a PolyhedralConeApprox,
        mu_hat: &'a SymMatrix,
        rho: f64,
        scale: f64,
    ) -> Result<Self> {
        if !(rho > 0.0 && scale > 0.0) {
            return Err(Error::InvalidArgument("rho and scale must be positive".into()));
        }
        Ok(Self {
            instance,
            cone,
            mu_hat,
            rho,
            scale,
            warm: RefCell::new(Vec::new()),
        })
    }

    pub fn with_warm_start(self, lambda: Vec<f64>) -> Self {
        *self.warm.borrow_mut() = lambda;
        self
    }

    pub fn warm_start(&self) -> Vec<f64> {
        self.warm.borrow().clone()
    }

    /// `Π_{(K^k)°}(g(x) + μ̂/ρ)`.
    pub fn polar_part(&self, x: &[f64]) -> Result<PolarProjection> {
        let mut y = self.instance.g(x)?;
        y.axpy(1.0 / self.rho, self.mu_hat);
        let warm = self.warm.borrow().clone();
        let warm = (!warm.is_empty() && warm.len() <= self.cone.active_count()).then_some(warm);
        let p = self.cone.project_polar(&y, warm.as_deref())?;
        *self.warm.borrow_mut() = p.lambda.clone();
        Ok(p)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<AlEvaluation> {
        let (f, grad_f) = self.instance.objective.value_and_gradient(x)?;
        let projection = self.polar_part(x)?;
        let pn = projection.polar.norm_fro();
        let shifted = f + 0.5 * self.rho * pn * pn;
        let mu_hat_n = self.mu_hat.norm_fro();
        let value = shifted - mu_hat_n * mu_hat_n / (2.0 * self.rho);
        let adj = self.instance.map.adjoint_apply(&projection.polar)?;
        let grad = grad_f
            .iter()
            .zip(&adj)
            .map(|(gf, a)| (gf + self.rho * a) / self.scale)
            .collect();
        Ok(AlEvaluation {
            value: value / self.scale,
            shifted_value: shifted / self.scale,
            grad,
            f,
            grad_f,
            projection,
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.value)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.grad)
    }

    /// Callback for the inner solver: the shifted value and its gradient,
    /// `None` where evaluation fails or is not finite.
    pub fn inner_objective(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let e = self.evaluate(x).ok()?;
        (e.shifted_value.is_finite() && e.grad.iter().all(|g| g.is_finite())).then_some((e.shifted_value, e.grad))
    }
}

/// `μ = ρ P` and its projection `min(||μ||, R)/||μ|| μ` onto the ball.
pub fn multiplier_update(polar: &SymMatrix, rho: f64, radius: f64) -> (SymMatrix, SymMatrix) {
    let mu = polar.scaled(rho);
    let safe = safeguard(&mu, radius);
    (mu, safe)
}

/// Projection onto the Frobenius ball of radius `radius`; `0` maps to `0`.
pub fn safeguard(mu: &SymMatrix, radius: f64) -> SymMatrix {
    let n = mu.norm_fro();
    if n <= radius {
        mu.clone()
    } else {
        mu.scaled(radius / n)
    }
}

/// `v = μ̂/ρ - P`.
pub fn feasibility_measure(mu_hat: &SymMatrix, rho: f64, polar: &SymMatrix) -> SymMatrix {
    &mu_hat.scaled(1.0 / rho) - polar
}

/// Keeps `ρ` when `||v^k||_max <= σ ||v^{k-1}||_max`, otherwise multiplies
/// it by `τ`.
pub fn penalty_update(rho: f64, v_max: f64, v_prev_max: f64, sigma: f64, tau: f64) -> f64 {
    if v_max <= sigma * v_prev_max {
        rho
    } else {
        rho * tau
    }
}

/// `||μ̂ - ρ v - μ||_F / (1 + ||μ̂||_F + ρ ||v||_F)`.
pub fn multiplier_identity_residual(mu_hat: &SymMatrix, rho: f64, v: &SymMatrix, mu: &SymMatrix) -> f64 {
    let lhs = &(mu_hat - &v.scaled(rho)) - mu;
    lhs.norm_fro() / (1.0 + mu_hat.norm_fro() + rho * v.norm_fro())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `||∇L(x^k)||_∞` of the scaled Lagrangian.
    pub grad_norm: f64,
    pub v_max: f64,
    pub rho: f64,
    pub active_count: usize,
    /// Largest complete grid shell inside the active set.
    pub shell: Option<usize>,
    pub eps_k: f64,
    pub scale: f64,
    pub inner_iterations: usize,
    pub inner_failed: bool,
    pub objective: f64,
    /// `||∇f + Dg*[μ]||_∞`.
    pub stationarity: f64,
    /// `<μ^k, Π_{K^k}(g(x^k))>`.
    pub complementarity: f64,
    pub mu_norm: f64,
    pub mu_hat_norm: f64,
    pub identity_residual: f64,
    pub nnqp_unconverged: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    FailPolicy,
    MaxOuter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub objective: String,
    pub m: usize,
    pub n: usize,
    pub instance_seed: u64,
    pub config: AlmConfig,
    pub grid_size: usize,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    pub x_final: Vec<f64>,
    pub mu_final: SymMatrix,
    pub f_final: f64,
    pub distance_to_spn: Option<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub inner_failures: usize,
    pub max_identity_residual: f64,
    pub wall_time: f64,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.termination == Termination::Success
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a run has at least one iteration")
    }
}

/// Runs the outer loop until success, the failure policy, or the iteration
/// cap. Inner failures never abort; they count towards the policy.
pub fn run_alm(instance: &ProblemInstance, config: &AlmConfig) -> Result<RunReport> {
    config.validate()?;
    instance.validate()?;
    let grid = SimplexGrid::build(instance.m, config.r_max)?;
    run_alm_on_grid(instance, config, &grid)
}

/// As [`run_alm`] with a prebuilt grid (must match `m` and `r_max`).
pub fn run_alm_on_grid(instance: &ProblemInstance, config: &AlmConfig, grid: &SimplexGrid) -> Result<RunReport> {
    config.validate()?;
    if grid.m() != instance.m || grid.r_max() != config.r_max {
        return Err(Error::InvalidArgument(format!(
            "grid (m = {}, r_max = {}) does not match run (m = {}, r_max = {})",
            grid.m(),
            grid.r_max(),
            instance.m,
            config.r_max
        )));
    }
    let started = Instant::now();
    let m = instance.m;
    let full = grid.len();
    let initial = match config.mode {
        Mode::Proposed => grid.prefix_len(0),
        Mode::Standard => full,
    };
    let mut cone = PolyhedralConeApprox::new(grid, initial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let x_init: Vec<f64> = (0..instance.n).map(|_| rng.gen_range(-100.0..100.0)).collect();

    let literal = SymMatrix::identity(m).scaled(config.radius);
    let mu_hat0 = match config.mu0_policy {
        Mu0Policy::PaperLiteralRI => literal,
        Mu0Policy::PolarProjected => safeguard(&cone.project_polar(&literal, None)?.polar, config.radius),
    };

    // v^{-1} from x^{-1}, μ̂^0, ρ_0 on K^0
    let v_init = {
        let al = AugmentedLagrangian::new(instance, &cone, &mu_hat0, config.rho0, 1.0)?;
        feasibility_measure(&mu_hat0, config.rho0, &al.polar_part(&x_init)?.polar)
    };

    let mut state = AlmState {
        k: 0,
        x: x_init,
        mu: SymMatrix::zeros(m),
        mu_hat: mu_hat0,
        rho: config.rho0,
        v: v_init,
        eps_k: config.eps0,
        active_count: initial,
        scale: 1.0,
        fail_count: 0,
        scale_samples: Vec::new(),
    };
    let mut warm: Vec<f64> = Vec::new();
    let mut records = Vec::new();
    let mut termination = Termination::MaxOuter;
    let mut total_inner = 0;
    let mut max_identity: f64 = 0.0;

    for k in 0..config.max_outer {
        let iter_start = Instant::now();
        state.k = k;
        if k > 0 && config.mode == Mode::Proposed {
            let next = grid.next_active_set(cone.active_count(), config.zeta);
            cone.grow_to(next)?;
        }
        state.active_count = cone.active_count();

        let al = AugmentedLagrangian::new(instance, &cone, &state.mu_hat, state.rho, state.scale)?
            .with_warm_start(warm.clone());
        if k < SCALING_ITERATIONS {
            // sample at x^{k-1} with the current (ρ_k, μ̂^k, K^k), unscaled
            let e = al.evaluate(&state.x)?;
            let gl = inf_norm(&e.grad) * state.scale;
            let gf = inf_norm(&e.grad_f);
            let sample = 1f64.max(gl).max(gf);
            state.scale_samples.push(if sample.is_finite() { sample } else { 1.0 });
        }
        state.eps_k = config.eps_l.max(config.eps0.min(state.v.norm_max()));

        let inner = bfgs(|x| al.inner_objective(x), &state.x, state.eps_k, config.inner_max_iter);
        total_inner += inner.iterations;
        let inner_failed = !inner.success();
        if inner_failed {
            state.fail_count += 1;
        }
        state.x = inner.x;
        let eval = al.evaluate(&state.x)?;
        warm = eval.projection.lambda.clone();
        let polar = &eval.projection.polar;

        let (mu, mu_hat_next) = multiplier_update(polar, state.rho, config.radius);
        let v = feasibility_measure(&state.mu_hat, state.rho, polar);
        let identity = multiplier_identity_residual(&state.mu_hat, state.rho, &v, &mu);
        max_identity = max_identity.max(identity);
        let ragp = ragp_residuals(&state.x, &mu, &cone, instance)?;
        let grad_norm = inf_norm(&eval.grad);
        let v_max = v.norm_max();

        records.push(IterationRecord {
            k,
            grad_norm,
            v_max,
            rho: state.rho,
            active_count: cone.active_count(),
            shell: grid.complete_shell(cone.active_count()),
            eps_k: state.eps_k,
            scale: state.scale,
            inner_iterations: inner.iterations,
            inner_failed,
            objective: eval.f,
            stationarity: ragp.stationarity,
            complementarity: ragp.complementarity,
            mu_norm: mu.norm_fro(),
            mu_hat_norm: state.mu_hat.norm_fro(),
            identity_residual: identity,
            nnqp_unconverged: usize::from(!eval.projection.converged),
            wall_time: iter_start.elapsed().as_secs_f64(),
        });

        let v_prev_max = state.v.norm_max();
        state.mu = mu;
        state.v = v;
        if grad_norm <= config.eps_l && v_max <= config.eps_v && cone.is_full() {
            termination = Termination::Success;
            break;
        }
        let iterations = k + 1;
        if iterations >= config.fail_min_iters && state.fail_count as f64 > config.fail_fraction * iterations as f64 {
            termination = Termination::FailPolicy;
            break;
        }
        state.rho = penalty_update(state.rho, v_max, v_prev_max, config.sigma, config.tau);
        state.mu_hat = mu_hat_next;
        if k + 1 == SCALING_ITERATIONS {
            state.scale = state.scale_samples.iter().sum::<f64>() / state.scale_samples.len() as f64;
        }
    }

    let g_final = instance.g(&state.x)?;
    let distance = distance_to_spn(&g_final, SPN_TOL).ok().map(|d| d.distance);
    let f_final = instance.objective.evaluate(&state.x)?;
    Ok(RunReport {
        objective: instance.objective.id().to_string(),
        m,
        n: instance.n,
        instance_seed: instance.seed,
        config: config.clone(),
        grid_size: full,
        termination,
        outer_iterations: records.len(),
        records,
        x_final: state.x,
        mu_final: state.mu,
        f_final,
        distance_to_spn: distance,
        inner_iterations: total_inner,
        inner_failures: state.fail_count,
        max_identity_residual: max_identity,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// `<μ, Π_K(g)>` for a cone part computed through Moreau.
pub(crate) fn complementarity(mu: &SymMatrix, g: &SymMatrix, cone: &PolyhedralConeApprox) -> Result<f64> {
    let cone_part = cone.project_cone(g)?;
    frobenius_inner(mu, &cone_part)
}
