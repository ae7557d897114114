//! Affine matrix maps `g(x) = Q_0 + Σ x_i Q_i` and random instances with
//! a known infeasible anchor and a known strictly feasible point.
//!
//! Generation fixes a known local minimizer `x*` of the objective and a
//! random `x̄ ∈ [10, 100]^n`, then interpolates along `Δ = x̄ - x*` so that
//! `g(x*) = -P1` (negative semidefinite, hence outside the copositive cone
//! whenever `P1 ≠ 0`) and `g(x̄) = P2` (positive semidefinite). Perturbations
//! of `Q_1..Q_n` orthogonal to `Δ`, compensated in `Q_0`, keep both
//! identities while making `Dg` generic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::Objective;
use crate::symcore::{frobenius_inner, symmetric_eigen, SymMatrix};

/// Magnitude of the enrichment relative to `||P1 + P2||_F / ||Δ||²`.
pub const ENRICHMENT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SymMatrix>", into = "Vec<SymMatrix>")]
pub struct LinearMatrixMap {
    /// `Q_0, Q_1, ..., Q_n`.
    q: Vec<SymMatrix>,
}

impl TryFrom<Vec<SymMatrix>> for LinearMatrixMap {
    type Error = Error;

    fn try_from(q: Vec<SymMatrix>) -> Result<Self> {
        Self::new(q)
    }
}

impl From<LinearMatrixMap> for Vec<SymMatrix> {
    fn from(map: LinearMatrixMap) -> Self {
        map.q
    }
}

impl LinearMatrixMap {
    pub fn new(q: Vec<SymMatrix>) -> Result<Self> {
        let m = q.first().ok_or(Error::EmptyMatrix)?.order();
        for qi in &q {
            check_dim(m, qi.order())?;
        }
        Ok(Self { q })
    }

    pub fn n(&self) -> usize {
        self.q.len() - 1
    }

    pub fn m(&self) -> usize {
        self.q[0].order()
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.q
    }

    pub fn eval(&self, x: &[f64]) -> Result<SymMatrix> {
        check_dim(self.n(), x.len())?;
        let mut g = self.q[0].clone();
        for (xi, qi) in x.iter().zip(&self.q[1..]) {
            g.axpy(*xi, qi);
        }
        Ok(g)
    }

    /// `Dg*[M] = (<Q_i, M>)_{i=1..n}`.
    pub fn adjoint_apply(&self, mat: &SymMatrix) -> Result<Vec<f64>> {
        check_dim(self.m(), mat.order())?;
        self.q[1..].iter().map(|qi| frobenius_inner(qi, mat)).collect()
    }
}

/// Extreme eigenvalues certifying the two anchor identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// `λ_max(g(x*) + P1)`, should be `<= 0`.
    pub max_eig_at_star: f64,
    /// `λ_min(g(x̄) - P2)`, should be `>= 0`.
    pub min_eig_at_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub objective: Objective,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub x_star: Vec<f64>,
    pub x_bar: Vec<f64>,
    #[serde(rename = "Q")]
    pub map: LinearMatrixMap,
    pub p1: SymMatrix,
    pub p2: SymMatrix,
    pub certificates: Certificates,
}

/// Tolerance on the stored certificates.
pub const CERTIFICATE_TOL: f64 = 1e-8;

impl ProblemInstance {
    pub fn g(&self, x: &[f64]) -> Result<SymMatrix> {
        self.map.eval(x)
    }

    pub fn compute_certificates(&self) -> Result<Certificates> {
        let at_star = &self.map.eval(&self.x_star)? + &self.p1;
        let at_bar = &self.map.eval(&self.x_bar)? - &self.p2;
        Ok(Certificates {
            max_eig_at_star: symmetric_eigen(&at_star)?.max_eigenvalue(),
            min_eig_at_bar: symmetric_eigen(&at_bar)?.min_eigenvalue(),
        })
    }

    /// Shape checks plus recomputed certificates within [`CERTIFICATE_TOL`].
    pub fn validate(&self) -> Result<()> {
        self.objective.check_dim(self.n)?;
        check_dim(self.n, self.map.n())?;
        check_dim(self.m, self.map.m())?;
        check_dim(self.n, self.x_star.len())?;
        check_dim(self.n, self.x_bar.len())?;
        check_dim(self.m, self.p1.order())?;
        check_dim(self.m, self.p2.order())?;
        let c = self.compute_certificates()?;
        if c.max_eig_at_star > CERTIFICATE_TOL || c.min_eig_at_bar < -CERTIFICATE_TOL {
            return Err(Error::InvalidArgument(format!(
                "instance certificates fail: max eig at x* {:.3e}, min eig at x̄ {:.3e}",
                c.max_eig_at_star, c.min_eig_at_bar
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// `Q diag(u) Qᵀ` with `u ~ U[0, 1]^m` and `Q` orthonormalized Gaussian.
fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
    let u: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let frame = random_orthogonal(rng, m);
    let mut p = SymMatrix::zeros(m);
    for (ui, col) in u.iter().zip(&frame) {
        p.add_outer(*ui, col);
    }
    p
}

/// Columns of a random orthogonal matrix, by modified Gram-Schmidt.
fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    while cols.len() < m {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= d * ci;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // a nearly dependent draw is discarded and redrawn
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    cols
}

fn random_unit_sym(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
    let mut e = SymMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            e.set_sym(i, j, rng.sample(StandardNormal));
        }
    }
    let norm = e.norm_fro();
    e.scaled(1.0 / norm)
}

pub fn generate_instance(objective: Objective, m: usize, n: usize, seed: u64) -> Result<ProblemInstance> {
    if m == 0 {
        return Err(Error::InvalidArgument("matrix order must be >= 1".into()));
    }
    let x_star = objective.anchor(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x_bar, delta, dd) = loop {
        let x_bar: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..100.0)).collect();
        let delta: Vec<f64> = x_bar.iter().zip(&x_star).map(|(b, s)| b - s).collect();
        let dd: f64 = delta.iter().map(|d| d * d).sum();
        if dd > 0.0 {
            break (x_bar, delta, dd);
        }
    };
    let p1 = random_psd(&mut rng, m);
    let p2 = random_psd(&mut rng, m);
    let sum = &p1 + &p2;

    let mut q: Vec<SymMatrix> = delta.iter().map(|d| sum.scaled(d / dd)).collect();
    let c = ENRICHMENT_SCALE * sum.norm_fro() / dd;
    let perturb: Vec<SymMatrix> = (0..n).map(|_| random_unit_sym(&mut rng, m)).collect();
    for (i, qi) in q.iter_mut().enumerate() {
        for (j, e) in perturb.iter().enumerate() {
            let proj = f64::from(u8::from(i == j)) - delta[i] * delta[j] / dd;
            qi.axpy(c * proj, e);
        }
    }

    let mut q0 = -&p1;
    for (xi, qi) in x_star.iter().zip(&q) {
        q0.axpy(-xi, qi);
    }
    q.insert(0, q0);

    let mut inst = ProblemInstance {
        objective,
        n,
        m,
        seed,
        x_star,
        x_bar,
        map: LinearMatrixMap::new(q)?,
        p1,
        p2,
        certificates: Certificates {
            max_eig_at_star: 0.0,
            min_eig_at_bar: 0.0,
        },
    };
    inst.certificates = inst.compute_certificates()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone_approx::PolyhedralConeApprox;
    use crate::simplex_grid::SimplexGrid;

    fn small_map() -> LinearMatrixMap {
        LinearMatrixMap::new(vec![
            SymMatrix::from_diag(&[1.0, 2.0, 3.0]),
            SymMatrix::identity(3),
            SymMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let map = small_map();
        assert_eq!(map.eval(&[0.0, 0.0]).unwrap(), map.matrices()[0]);
        let (x, y) = ([0.5, -2.0], [1.25, 3.0]);
        let lhs = &(&map.eval(&x).unwrap() + &map.eval(&y).unwrap()) - &map.matrices()[0];
        assert_eq!(lhs, map.eval(&[1.75, 1.0]).unwrap());
        assert!(map.eval(&[1.0]).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let map = small_map();
        assert_eq!(map.adjoint_apply(&SymMatrix::zeros(3)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(map.adjoint_apply(&SymMatrix::identity(3)).unwrap()[0], 3.0);
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![2.0, -1.0, 0.0], vec![0.5, 0.0, 4.0]]).unwrap();
        let x = [0.3, -0.7];
        let lhs = frobenius_inner(&(&map.eval(&x).unwrap() - &map.matrices()[0]), &m).unwrap();
        let adj = map.adjoint_apply(&m).unwrap();
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
        assert!(map.adjoint_apply(&SymMatrix::zeros(2)).is_err());
    }

    #[test]
    fn generated_certificates_hold() {
        for o in Objective::ALL {
            for m in [3, 5] {
                let inst = generate_instance(o, m, o.default_dim(), 42).unwrap();
                assert!(inst.certificates.max_eig_at_star <= 1e-10, "{o}");
                assert!(inst.certificates.min_eig_at_bar >= -1e-10, "{o}");
                inst.validate().unwrap();
                let at_bar = symmetric_eigen(&inst.g(&inst.x_bar).unwrap()).unwrap();
                let p2_min = symmetric_eigen(&inst.p2).unwrap().min_eigenvalue();
                assert!(at_bar.min_eigenvalue() >= p2_min - 1e-8);
            }
        }
    }

    #[test]
    fn enrichment_is_present_and_orthogonal_to_delta() {
        let inst = generate_instance(Objective::Wood, 3, 4, 3).unwrap();
        let delta: Vec<f64> = inst.x_bar.iter().zip(&inst.x_star).map(|(b, s)| b - s).collect();
        let dd: f64 = delta.iter().map(|d| d * d).sum();
        let sum = &inst.p1 + &inst.p2;
        let q = &inst.map.matrices()[1..];
        let mut along = SymMatrix::zeros(3);
        let mut off_rank_one = 0.0_f64;
        for (d, qi) in delta.iter().zip(q) {
            along.axpy(*d, qi);
            off_rank_one = off_rank_one.max((qi - &sum.scaled(d / dd)).norm_fro());
        }
        assert!((&along - &sum).norm_fro() < 1e-12);
        assert!(off_rank_one > 1e-3 * sum.norm_fro() / dd);
    }

    #[test]
    fn anchor_is_outside_and_feasible_point_inside() {
        let grid = SimplexGrid::build(3, 15).unwrap();
        let cone = PolyhedralConeApprox::new(&grid, grid.len()).unwrap();
        for seed in 0..5 {
            let inst = generate_instance(Objective::ConvexQuadratic, 3, 2, seed).unwrap();
            let at_star = inst.g(&inst.x_star).unwrap();
            let p1_max = symmetric_eigen(&inst.p1).unwrap().max_eigenvalue();
            assert!(symmetric_eigen(&at_star).unwrap().min_eigenvalue() <= -p1_max + 1e-10);
            assert!(cone.min_quadratic_form(&at_star).unwrap() < 0.0);
            assert!(cone.min_quadratic_form(&inst.g(&inst.x_bar).unwrap()).unwrap() >= -1e-8);
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let a = generate_instance(Objective::ExtendedRosenbrock, 5, 5, 7).unwrap();
        let b = generate_instance(Objective::ExtendedRosenbrock, 5, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.map.matrices().len(), 6);
        let text = a.to_json().unwrap();
        assert_eq!(text, b.to_json().unwrap());
        let back = ProblemInstance::from_json(&text).unwrap();
        for (p, q) in back.map.matrices().iter().zip(a.map.matrices()) {
            let same = p
                .as_slice()
                .iter()
                .zip(q.as_slice())
                .all(|(u, v)| u.to_bits() == v.to_bits());
            assert!(same);
        }
        assert_eq!(back, a);
        let c = generate_instance(Objective::ExtendedRosenbrock, 5, 5, 8).unwrap();
        assert_ne!(a.x_bar, c.x_bar);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(generate_instance(Objective::Wood, 3, 2, 0).is_err());
        assert!(generate_instance(Objective::ConvexQuadratic, 0, 2, 0).is_err());
        let mut inst = generate_instance(Objective::ConvexQuadratic, 3, 2, 0).unwrap();
        inst.x_star[0] += 1.0;
        assert!(inst.validate().is_err());
    }
}
