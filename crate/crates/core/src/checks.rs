//! Self-check suites run by `polyalm check`: grid counts, projection
//! identities, the NNQP against face enumeration, gradient fidelity, cone
//! refinement monotonicity and short end-to-end solves.
//!
//! Each outcome names the invariant it tested. A [`Fault`] corrupts one
//! quantity on purpose so the harness itself can be tested.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::alm::{run_alm_on_grid, AlmConfig, AugmentedLagrangian, Mode};
use crate::cone_approx::PolyhedralConeApprox;
use crate::error::{Error, Result};
use crate::nnqp::{self, solve_nnqp, NnqpOptions, QpMatrix};
use crate::objectives::{finite_difference_check, Objective};
use crate::problem::generate_instance;
use crate::simplex_grid::SimplexGrid;
use crate::symcore::{frobenius_inner, symmetric_eigen, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLevel {
    /// Everything except the m = 5 end-to-end solves.
    Quick,
    Full,
}

impl FromStr for CheckLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Self::Quick),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidArgument(format!("unknown check level `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    GridCount,
    Moreau,
    Nnqp,
    Gradient,
    Refinement,
}

impl Fault {
    pub const ALL: [Fault; 5] = [
        Fault::GridCount,
        Fault::Moreau,
        Fault::Nnqp,
        Fault::Gradient,
        Fault::Refinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::GridCount => "grid-count",
            Fault::Moreau => "moreau",
            Fault::Nnqp => "nnqp",
            Fault::Gradient => "gradient",
            Fault::Refinement => "refinement",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fault::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fault `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub invariant: String,
    pub passed: bool,
    pub detail: String,
}

struct Suite {
    name: &'static str,
    fault: Option<Fault>,
    out: Vec<CheckOutcome>,
}

impl Suite {
    fn new(name: &'static str, fault: Option<Fault>) -> Self {
        Self {
            name,
            fault,
            out: Vec::new(),
        }
    }

    fn injected(&self, f: Fault) -> bool {
        self.fault == Some(f)
    }

    fn record(&mut self, invariant: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(CheckOutcome {
            suite: self.name,
            invariant: invariant.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Records an error from the library as a failed invariant.
    fn guard(&mut self, invariant: &str, r: Result<()>) {
        if let Err(e) = r {
            self.record(invariant, false, format!("error: {e}"));
        }
    }
}

pub fn run_checks(level: CheckLevel, fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for suite in [grid_suite, moreau_suite, nnqp_suite, gradient_suite, refinement_suite] {
        out.extend(suite(fault));
    }
    out.extend(end_to_end_suite(level));
    out
}

fn grid_suite(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut s = Suite::new("grid", fault);
    for (m, r, expected) in [(3, 15, 901), (5, 7, 1816)] {
        let name = format!("|δ^{m}_{r}| = {expected}");
        let res = SimplexGrid::build(m, r).map(|g| {
            let count = g.len() + usize::from(s.injected(Fault::GridCount));
            s.record(&name, count == expected, format!("counted {count}"));
            s.record(
                format!("shell sizes of δ^{m}_{r} match the closed form"),
                g.check_count_bound(),
                "",
            );
        });
        s.guard(&name, res);
    }
    s.out
}

fn random_sym(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> SymMatrix {
    let data: Vec<f64> = (0..m * m)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    SymMatrix::symmetrized(m, &data)
}

fn moreau_suite(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut s = Suite::new("projection", fault);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0_f64; 4];
    let res = (|| -> Result<()> {
        for (m, r, sizes) in [(3, 6, [6, 51, 200]), (5, 3, [15, 51, 200])] {
            let grid = SimplexGrid::build(m, r)?;
            for active in sizes {
                let cone = PolyhedralConeApprox::new(&grid, active.min(grid.len()))?;
                for _ in 0..10 {
                    let y = random_sym(&mut rng, m, 3.0);
                    let mut p = cone.project_polar(&y, None)?.polar;
                    if s.injected(Fault::Moreau) {
                        p = p.scaled(0.9);
                    }
                    let c = &y - &p;
                    let ny = y.norm_fro();
                    worst[0] = worst[0].max(frobenius_inner(&p, &c)?.abs() / (1.0 + ny * ny));
                    worst[1] = worst[1].max(-cone.min_quadratic_form(&c)? / (1.0 + ny));
                    let pyth = (ny * ny - p.norm_fro().powi(2) - c.norm_fro().powi(2)).abs();
                    worst[2] = worst[2].max(pyth / (1.0 + ny * ny));
                    let again = cone.project_polar(&p, None)?.polar;
                    worst[3] = worst[3].max((&again - &p).norm_fro() / (1.0 + ny));
                }
            }
        }
        Ok(())
    })();
    s.guard("polar projection", res);
    s.record(
        "Moreau orthogonality <P, Y - P> = 0",
        worst[0] <= 1e-7,
        format!("worst {:.2e}", worst[0]),
    );
    s.record(
        "Y - P lies in the cone",
        worst[1] <= 1e-7,
        format!("worst {:.2e}", worst[1]),
    );
    s.record(
        "Pythagoras ||Y||² = ||P||² + ||Y - P||²",
        worst[2] <= 1e-6,
        format!("worst {:.2e}", worst[2]),
    );
    s.record(
        "projection is idempotent",
        worst[3] <= 1e-6,
        format!("worst {:.2e}", worst[3]),
    );
    s.out
}

/// Minimizer of `λᵀRλ + 2sᵀλ` over `λ ≥ 0` by enumerating faces; `R` must be
/// positive definite.
fn enumerate_faces(r: &QpMatrix, s: &[f64]) -> Result<Vec<f64>> {
    let n = s.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let face: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut lambda = vec![0.0; n];
        if !face.is_empty() {
            let block: Vec<f64> = face
                .iter()
                .flat_map(|&i| face.iter().map(move |&j| r.get(i, j)))
                .collect();
            let eig = symmetric_eigen(&SymMatrix::from_row_major(face.len(), block)?)?;
            let inv = eig.reconstruct_with(|v| 1.0 / v);
            for (a, &i) in face.iter().enumerate() {
                lambda[i] = -(0..face.len()).map(|b| inv.get(a, b) * s[face[b]]).sum::<f64>();
            }
        }
        if lambda.iter().any(|&v| v < 0.0) {
            continue;
        }
        let obj = nnqp::objective(r, s, &lambda);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, lambda));
        }
    }
    Ok(best.expect("the empty face is feasible").1)
}

fn nnqp_suite(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut s = Suite::new("nnqp", fault);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    let mut kkt = 0.0_f64;
    let res = (|| -> Result<()> {
        for trial in 0..40 {
            let n = 1 + trial % 6;
            let rows = n + 2;
            let b: Vec<f64> = (0..rows * n).map(|_| rng.sample(StandardNormal)).collect();
            let r = QpMatrix::from_rows(
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| (0..rows).map(|k| b[k * n + i] * b[k * n + j]).sum())
                            .collect()
                    })
                    .collect(),
            )?;
            let sv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut got = solve_nnqp(&r, &sv, &vec![0.0; n], &NnqpOptions::default())?;
            if s.injected(Fault::Nnqp) {
                got.lambda[0] += 1e-3;
            }
            let exact = enumerate_faces(&r, &sv)?;
            let scale = 1.0 + exact.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let gap = got
                .lambda
                .iter()
                .zip(&exact)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            worst = worst.max(gap / scale);
            kkt = kkt.max(got.kkt_residual);
        }
        Ok(())
    })();
    s.guard("nnqp solve", res);
    s.record(
        "NNQP agrees with face enumeration (dim ≤ 6)",
        worst <= 1e-8,
        format!("worst {worst:.2e}"),
    );
    s.record(
        "NNQP stops at its KKT tolerance",
        kkt <= NnqpOptions::default().tol,
        format!("worst {kkt:.2e}"),
    );
    s.out
}

fn gradient_suite(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut s = Suite::new("gradients", fault);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let bump = if s.injected(Fault::Gradient) { 1e-3 } else { 0.0 };
    let res = (|| -> Result<()> {
        for o in Objective::ALL {
            let n = o.default_dim();
            let mut worst = 0.0_f64;
            let mut checked = 0;
            while checked < 5 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                if !o.is_smooth_sample(&x) {
                    continue;
                }
                worst = worst.max(finite_difference_check(o, &x, 1e-6)? + bump);
                checked += 1;
            }
            s.record(
                format!("{o} gradient matches central differences"),
                worst <= 1e-5,
                format!("worst {worst:.2e}"),
            );
            let mut station = true;
            for km in o.known_minimizers(n)? {
                let g = o.gradient(&km.point)?.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                station &= km.advisory || g <= km.stationarity_tol;
            }
            s.record(format!("{o} listed minimizers are stationary"), station, "");
        }

        let inst = generate_instance(Objective::ConvexQuadratic, 3, 2, 1)?;
        let grid = SimplexGrid::build(3, 5)?;
        let cone = PolyhedralConeApprox::new(&grid, grid.len())?;
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let mu_hat = cone.project_polar(&random_sym(&mut rng, 3, 2.0), None)?.polar;
            let al = AugmentedLagrangian::new(&inst, &cone, &mu_hat, 3.0, 1.7)?;
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let grad = al.gradient(&x)?;
            for i in 0..x.len() {
                let h = 1e-6 * x[i].abs().max(1.0);
                let mut up = x.clone();
                up[i] += h;
                let mut down = x.clone();
                down[i] -= h;
                let fd = (al.evaluate(&up)?.shifted_value - al.evaluate(&down)?.shifted_value) / (2.0 * h);
                worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0) + bump);
            }
        }
        s.record(
            "augmented Lagrangian gradient matches central differences",
            worst <= 1e-5,
            format!("worst {worst:.2e}"),
        );
        Ok(())
    })();
    s.guard("gradient evaluation", res);
    s.out
}

fn refinement_suite(fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut s = Suite::new("refinement", fault);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let res = (|| -> Result<()> {
        let grid = SimplexGrid::build(3, 15)?;
        let mut prefixes: Vec<usize> = (0..=15).map(|r| grid.prefix_len(r)).collect();
        if s.injected(Fault::Refinement) {
            prefixes.reverse();
        }
        let mut monotone = true;
        let mut fixed = 0.0_f64;
        for _ in 0..5 {
            let y = random_sym(&mut rng, 3, 2.0);
            let mut prev = 0.0;
            // a PSD plus a nonnegative part is copositive, so every outer
            // approximation leaves it in place
            let mut member = SymMatrix::zeros(3);
            for _ in 0..3 {
                let d: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
                member.add_outer(1.0, &d);
            }
            let nonneg: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let member = &member + &SymMatrix::symmetrized(3, &nonneg);
            for &active in &prefixes {
                let cone = PolyhedralConeApprox::new(&grid, active)?;
                let dist = cone.project_polar(&y, None)?.polar.norm_fro();
                monotone &= dist >= prev - 1e-9 * (1.0 + prev);
                prev = dist;
                fixed = fixed.max(cone.project_polar(&member, None)?.polar.norm_fro() / (1.0 + member.norm_fro()));
            }
        }
        s.record("distance to nested approximations is nondecreasing", monotone, "");
        s.record(
            "copositive points are fixed by every approximation",
            fixed <= 1e-8,
            format!("worst {fixed:.2e}"),
        );
        Ok(())
    })();
    s.guard("refinement", res);
    s.out
}

fn end_to_end_suite(level: CheckLevel) -> Vec<CheckOutcome> {
    let mut s = Suite::new("end-to-end", None);
    let orders: &[usize] = match level {
        CheckLevel::Quick => &[3],
        CheckLevel::Full => &[3, 5],
    };
    for &m in orders {
        for mode in [Mode::Proposed, Mode::Standard] {
            let name = format!("cq (m = {m}, {mode}) meets the success criterion");
            let res = (|| -> Result<()> {
                let config = AlmConfig {
                    mode,
                    ..AlmConfig::for_order(m)
                };
                let grid = SimplexGrid::build(m, config.r_max)?;
                let inst = generate_instance(Objective::ConvexQuadratic, m, 2, 1)?;
                let report = run_alm_on_grid(&inst, &config, &grid)?;
                s.record(
                    &name,
                    report.success(),
                    format!("{:?} after {} iterations", report.termination, report.outer_iterations),
                );
                s.record(
                    format!("cq (m = {m}, {mode}) keeps μ = μ̂ - ρv"),
                    report.max_identity_residual <= 1e-9,
                    format!("worst {:.2e}", report.max_identity_residual),
                );
                let counts: Vec<usize> = report.records.iter().map(|r| r.active_count).collect();
                let expected: Vec<usize> = match mode {
                    Mode::Standard => vec![grid.len(); counts.len()],
                    Mode::Proposed => (0..counts.len())
                        .map(|k| (grid.prefix_len(0) + k * config.zeta).min(grid.len()))
                        .collect(),
                };
                s.record(
                    format!("cq (m = {m}, {mode}) active-set schedule"),
                    counts == expected,
                    "",
                );
                Ok(())
            })();
            s.guard(&name, res);
        }
    }
    s.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_enumeration_matches_hand_solution() {
        // R = I: λ = max(-s, 0)
        let r = QpMatrix::identity(3);
        assert_eq!(enumerate_faces(&r, &[-1.0, 2.0, -0.5]).unwrap(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn fault_names_round_trip() {
        for f in Fault::ALL {
            assert_eq!(f.name().parse::<Fault>().unwrap(), f);
        }
        assert!("nothing".parse::<Fault>().is_err());
        assert_eq!("quick".parse::<CheckLevel>().unwrap(), CheckLevel::Quick);
    }

    #[test]
    fn clean_suites_pass() {
        for f in [grid_suite, moreau_suite, nnqp_suite, gradient_suite, refinement_suite] {
            for o in f(None) {
                assert!(o.passed, "{} / {}: {}", o.suite, o.invariant, o.detail);
            }
        }
    }

    #[test]
    fn each_fault_trips_its_invariant() {
        type Suite = fn(Option<Fault>) -> Vec<CheckOutcome>;
        let cases: [(Fault, Suite, &str); 5] = [
            (Fault::GridCount, grid_suite, "|δ^3_15| = 901"),
            (Fault::Moreau, moreau_suite, "Moreau orthogonality"),
            (Fault::Nnqp, nnqp_suite, "face enumeration"),
            (Fault::Gradient, gradient_suite, "central differences"),
            (Fault::Refinement, refinement_suite, "nondecreasing"),
        ];
        for (fault, suite, needle) in cases {
            let failed: Vec<CheckOutcome> = suite(Some(fault)).into_iter().filter(|o| !o.passed).collect();
            assert!(!failed.is_empty(), "{fault} went unnoticed");
            assert!(
                failed.iter().any(|o| o.invariant.contains(needle)),
                "{fault}: {failed:?}"
            );
        }
    }
}
