//! Polyhedral outer approximations `K = {Y : dᵢᵀ Y dᵢ ≥ 0, dᵢ ∈ J}` of the
//! copositive cone, where `J` is a prefix of a [`SimplexGrid`].
//!
//! Projections onto the polar cone go through the dual NNQP with
//! `R_ij = (dᵢᵀ dⱼ)²` and `s_i = dᵢᵀ Y dᵢ`; the projection is
//! `-Σ λᵢ dᵢ dᵢᵀ`. Projections onto `K` itself follow from Moreau.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::nnqp::{solve_nnqp, NnqpOptions, QpMatrix};
use crate::simplex_grid::SimplexGrid;
use crate::symcore::SymMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct PolyhedralConeApprox {
    m: usize,
    pool: Arc<[Vec<f64>]>,
    active: usize,
    gram_hadamard: QpMatrix,
    options: NnqpOptions,
}

/// Projection onto the polar cone with its dual certificate.
#[derive(Debug, Clone)]
pub struct PolarProjection {
    pub polar: SymMatrix,
    pub lambda: Vec<f64>,
    /// False when the NNQP stopped before reaching its tolerance; `polar` is
    /// then built from the best iterate.
    pub converged: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl PolarProjection {
    /// Moreau complement `Y - Π_{K°}(Y) = Π_K(Y)`.
    pub fn cone_part(&self, y: &SymMatrix) -> SymMatrix {
        y - &self.polar
    }
}

impl PolyhedralConeApprox {
    /// Approximation defined by the first `active` grid points.
    pub fn new(grid: &SimplexGrid, active: usize) -> Result<Self> {
        Self::from_pool(grid.m(), grid.direction_pool(), active)
    }

    /// Approximation over an explicit ordered direction set.
    pub fn from_directions(m: usize, directions: Vec<Vec<f64>>, active: usize) -> Result<Self> {
        for d in &directions {
            check_dim(m, d.len())?;
        }
        Self::from_pool(m, directions.into(), active)
    }

    fn from_pool(m: usize, pool: Arc<[Vec<f64>]>, active: usize) -> Result<Self> {
        if active == 0 || active > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "active count {active} outside 1..={}",
                pool.len()
            )));
        }
        let mut cone = Self {
            m,
            pool,
            active: 0,
            gram_hadamard: QpMatrix::default(),
            options: NnqpOptions::default(),
        };
        cone.grow_to(active)?;
        Ok(cone)
    }

    pub fn with_options(mut self, options: NnqpOptions) -> Self {
        self.options = options;
        self
    }

    /// Extends the active prefix; `R` gains the new rows and columns only.
    pub fn grow_to(&mut self, active: usize) -> Result<()> {
        if active < self.active || active > self.pool.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot move active count from {} to {active} (pool has {})",
                self.active,
                self.pool.len()
            )));
        }
        let dirs = &self.pool;
        self.gram_hadamard.grow(active - self.active, |i, j| {
            let g = dot(&dirs[i], &dirs[j]);
            g * g
        });
        self.active = active;
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn is_full(&self) -> bool {
        self.active == self.pool.len()
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// Size of the full direction pool the prefix is drawn from.
    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.pool[..self.active]
    }

    pub fn gram_hadamard(&self) -> &QpMatrix {
        &self.gram_hadamard
    }

    /// `s_i = dᵢᵀ Y dᵢ` over the active prefix.
    pub fn linear_forms(&self, y: &SymMatrix) -> Result<Vec<f64>> {
        check_dim(self.order(), y.order())?;
        Ok(self.directions().iter().map(|d| y.quad_form(d)).collect())
    }

    /// `min_i dᵢᵀ Y dᵢ`; nonnegative iff `Y ∈ K`.
    pub fn min_quadratic_form(&self, y: &SymMatrix) -> Result<f64> {
        Ok(self.linear_forms(y)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `Π_{K°}(Y)`. `warm` may be shorter than the active count (a multiplier
    /// from a coarser approximation); it is zero-padded.
    pub fn project_polar(&self, y: &SymMatrix, warm: Option<&[f64]>) -> Result<PolarProjection> {
        let s = self.linear_forms(y)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection input"));
        }
        let mut start = vec![0.0; self.active];
        if let Some(w) = warm {
            if w.len() > self.active {
                return Err(Error::DimensionMismatch {
                    expected: self.active,
                    actual: w.len(),
                });
            }
            start[..w.len()].copy_from_slice(w);
        }
        // all linear forms nonnegative: Y ∈ K and λ = 0 is optimal
        if s.iter().all(|&v| v >= 0.0) {
            return Ok(PolarProjection {
                polar: SymMatrix::zeros(self.order()),
                lambda: vec![0.0; self.active],
                converged: true,
                kkt_residual: 0.0,
                iterations: 0,
            });
        }
        let res = solve_nnqp(&self.gram_hadamard, &s, &start, &self.options)?;
        let mut polar = SymMatrix::zeros(self.order());
        for (l, d) in res.lambda.iter().zip(self.directions()) {
            if *l != 0.0 {
                polar.add_outer(-l, d);
            }
        }
        Ok(PolarProjection {
            polar,
            lambda: res.lambda,
            converged: res.converged,
            kkt_residual: res.kkt_residual,
            iterations: res.iterations,
        })
    }

    /// `Π_K(Y) = Y - Π_{K°}(Y)`.
    pub fn project_cone(&self, y: &SymMatrix) -> Result<SymMatrix> {
        Ok(self.project_polar(y, None)?.cone_part(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{frobenius_inner, project_psd, symmetric_eigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cone(m: usize, r: usize, active: Option<usize>) -> PolyhedralConeApprox {
        let grid = SimplexGrid::build(m, r).unwrap();
        let n = active.unwrap_or(grid.len());
        PolyhedralConeApprox::new(&grid, n).unwrap()
    }

    #[test]
    fn linear_form_examples() {
        let c = cone(3, 2, None);
        let s = c.linear_forms(&SymMatrix::identity(3)).unwrap();
        for (si, d) in s.iter().zip(c.directions()) {
            assert!((si - dot(d, d)).abs() < 1e-15 && *si > 0.0);
        }
        assert!(c.linear_forms(&SymMatrix::zeros(3)).unwrap().iter().all(|v| *v == 0.0));
        assert!(c.linear_forms(&SymMatrix::zeros(2)).is_err());
    }

    #[test]
    fn single_direction_example() {
        let c = PolyhedralConeApprox::from_directions(2, vec![vec![1.0, 0.0]], 1).unwrap();
        let y = SymMatrix::from_diag(&[-3.0, 5.0]);
        assert_eq!(c.linear_forms(&y).unwrap(), vec![-3.0]);
        let p = c.project_polar(&y, None).unwrap();
        assert_eq!(p.lambda, vec![3.0]);
        assert_eq!(p.polar, SymMatrix::from_diag(&[-3.0, 0.0]));
        assert_eq!(c.project_cone(&y).unwrap(), SymMatrix::from_diag(&[0.0, 5.0]));
    }

    #[test]
    fn identity_has_zero_polar_part() {
        let c = cone(3, 0, None);
        let p = c.project_polar(&SymMatrix::identity(3), None).unwrap();
        assert_eq!(p.polar.norm_fro(), 0.0);
        assert!(c.project_cone(&SymMatrix::zeros(3)).unwrap().norm_fro() == 0.0);
    }

    #[test]
    fn min_quadratic_form_examples() {
        let c = cone(2, 4, None);
        let y = SymMatrix::from_diag(&[-1.0, 1.0]);
        assert_eq!(c.min_quadratic_form(&y).unwrap(), -1.0);
        let i = c.min_quadratic_form(&SymMatrix::identity(2)).unwrap();
        assert!(i > 0.0);
    }

    #[test]
    fn growth_is_incremental_and_monotone() {
        let grid = SimplexGrid::build(3, 4).unwrap();
        let mut c = PolyhedralConeApprox::new(&grid, 6).unwrap();
        c.grow_to(20).unwrap();
        let fresh = PolyhedralConeApprox::new(&grid, 20).unwrap();
        assert_eq!(c.gram_hadamard(), fresh.gram_hadamard());
        assert!(c.grow_to(10).is_err());
        assert!(c.grow_to(grid.len() + 1).is_err());
        assert!(PolyhedralConeApprox::new(&grid, 0).is_err());
    }

    #[test]
    fn warm_start_is_zero_padded() {
        let grid = SimplexGrid::build(3, 3).unwrap();
        let c = PolyhedralConeApprox::new(&grid, grid.len()).unwrap();
        let y = SymMatrix::from_diag(&[-1.0, 2.0, -0.5]);
        let coarse = PolyhedralConeApprox::new(&grid, 6).unwrap();
        let p0 = coarse.project_polar(&y, None).unwrap();
        let warm = c.project_polar(&y, Some(&p0.lambda)).unwrap();
        let cold = c.project_polar(&y, None).unwrap();
        assert!((&warm.polar - &cold.polar).norm_fro() < 1e-10);
        assert!(c.project_polar(&y, Some(&vec![0.0; c.active_count() + 1])).is_err());
    }

    fn random_sym(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> SymMatrix {
        let mut a = SymMatrix::zeros(m);
        for i in 0..m {
            for j in i..m {
                a.set_sym(i, j, rng.gen_range(-scale..scale));
            }
        }
        a
    }

    fn spn_sample(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
        let psd = project_psd(&random_sym(rng, m, 1.0)).unwrap();
        &psd + &random_sym(rng, m, 1.0).clip_nonnegative()
    }

    #[test]
    fn cone_fixes_psd_plus_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = SimplexGrid::build(3, 6).unwrap();
        for k in [6, 30, grid.len()] {
            let c = PolyhedralConeApprox::new(&grid, k).unwrap();
            for _ in 0..10 {
                let z = spn_sample(&mut rng, 3);
                assert!(c.min_quadratic_form(&z).unwrap() >= -1e-12);
                assert!((&c.project_cone(&z).unwrap() - &z).norm_fro() < 1e-7);
            }
        }
        assert!(c0().project_cone(&SymMatrix::zeros(3)).unwrap().norm_fro() == 0.0);
    }

    fn c0() -> PolyhedralConeApprox {
        cone(3, 0, None)
    }

    #[test]
    fn gram_hadamard_blocks_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = cone(3, 8, None);
        let n = c.active_count();
        for _ in 0..10 {
            let size = rng.gen_range(2..25);
            let idx: Vec<usize> = (0..size).map(|_| rng.gen_range(0..n)).collect();
            let rows: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| c.gram_hadamard().get(i, j)).collect())
                .collect();
            let block = SymMatrix::from_rows(&rows).unwrap();
            assert!(symmetric_eigen(&block).unwrap().min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn nested_prefixes_never_shrink_the_polar_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = SimplexGrid::build(4, 4).unwrap();
        for _ in 0..5 {
            let y = random_sym(&mut rng, 4, 2.0);
            let mut last = 0.0;
            let mut c = PolyhedralConeApprox::new(&grid, 10).unwrap();
            for k in (10..grid.len()).step_by(25).chain([grid.len()]) {
                c.grow_to(k).unwrap();
                let d = c.project_polar(&y, None).unwrap().polar.norm_fro();
                assert!(d >= last - 1e-8, "{d} < {last} at {k}");
                last = d;
            }
        }
    }

    proptest! {
        #[test]
        fn projection_properties(seed in 0u64..500, m in 2usize..5, prefix in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = SimplexGrid::build(m, 3).unwrap();
            let k = ((prefix * grid.len() as f64) as usize).max(1);
            let c = PolyhedralConeApprox::new(&grid, k).unwrap();
            let y = random_sym(&mut rng, m, 3.0);
            let ny = y.norm_fro();
            let p = c.project_polar(&y, None).unwrap();
            prop_assert!(p.converged);
            let cone_part = p.cone_part(&y);
            // feasibility of both parts
            prop_assert!(c.min_quadratic_form(&cone_part).unwrap() >= -1e-7 * (1.0 + ny));
            prop_assert!(p.lambda.iter().all(|&l| l >= 0.0));
            // Moreau orthogonality and Pythagoras
            let inner = frobenius_inner(&p.polar, &cone_part).unwrap();
            prop_assert!(inner.abs() <= 1e-7 * (1.0 + ny * ny));
            let lhs = ny * ny;
            let rhs = p.polar.norm_fro().powi(2) + cone_part.norm_fro().powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.max(1e-12));
            // idempotence
            let again = c.project_polar(&p.polar, None).unwrap();
            prop_assert!((&again.polar - &p.polar).norm_fro() <= 1e-6);
        }

        #[test]
        fn cone_projection_is_nonexpansive(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = cone(3, 3, None);
            let a = random_sym(&mut rng, 3, 3.0);
            let b = random_sym(&mut rng, 3, 3.0);
            let pa = c.project_cone(&a).unwrap();
            let pb = c.project_cone(&b).unwrap();
            prop_assert!((&pa - &pb).norm_fro() <= (&a - &b).norm_fro() + 1e-7);
        }
    }
}
