//! Nonnegatively constrained convex QP
//!
//! ```text
//! minimize  λᵀ R λ + 2 sᵀ λ   subject to λ ≥ 0
//! ```
//!
//! with `R` symmetric positive semidefinite. Every polar-cone projection in
//! [`crate::cone_approx`] reduces to one of these.
//!
//! The primary method is a Lawson–Hanson style active-set iteration working on
//! `R` directly: the optimal `λ` of a cone projection has few nonzeros, so each
//! step only touches `|passive| ≤ dim S^m` columns of `R`. Whenever the
//! active-set phase stalls (rank loss in the passive block, cycling) the
//! iterate is handed to a projected-gradient method with Barzilai–Borwein
//! steps and a nonmonotone Armijo safeguard.

use crate::error::{check_dim, Error, Result};

/// Growable dense symmetric matrix stored as full rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QpMatrix {
    rows: Vec<Vec<f64>>,
}

impl QpMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            check_dim(n, row.len())?;
            for j in 0..i {
                let gap = (row[j] - rows[j][i]).abs();
                if gap > 1e-12 * (1.0 + row[j].abs()) {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Appends `extra` rows and columns with entries `entry(i, j)` for the new
    /// index pairs; existing entries are kept.
    pub fn grow(&mut self, extra: usize, entry: impl Fn(usize, usize) -> f64) {
        let old = self.rows.len();
        let new = old + extra;
        for (i, row) in self.rows.iter_mut().enumerate() {
            row.extend((old..new).map(|j| entry(i, j)));
        }
        for i in old..new {
            let mut row = Vec::with_capacity(new);
            for j in 0..new {
                row.push(if j < old { self.rows[j][i] } else { entry(i, j) });
            }
            self.rows.push(row);
        }
    }

    /// Leading principal block of order `n`.
    pub fn leading_block(&self, n: usize) -> QpMatrix {
        QpMatrix {
            rows: self.rows[..n].iter().map(|r| r[..n].to_vec()).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnqpOptions {
    pub tol: f64,
    /// Iteration cap for the projected-gradient phase; `None` means `50 * dim`.
    pub max_iter: Option<usize>,
}

impl Default for NnqpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnqpResult {
    pub lambda: Vec<f64>,
    /// `||min(λ, 2(Rλ + s))||_∞ / (1 + ||s||_∞)`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// `λᵀ R λ + 2 sᵀ λ`.
pub fn objective(r: &QpMatrix, s: &[f64], lambda: &[f64]) -> f64 {
    let rl = r.mul_vec(lambda);
    lambda
        .iter()
        .zip(rl.iter().zip(s))
        .map(|(l, (a, b))| l * (a + 2.0 * b))
        .sum()
}

/// Scale-free complementarity residual used as the stopping test.
pub fn kkt_residual(r: &QpMatrix, s: &[f64], lambda: &[f64]) -> f64 {
    let rl = r.mul_vec(lambda);
    residual_from_half_grad(s, lambda, &half_gradient_from(&rl, s))
}

fn half_gradient_from(rl: &[f64], s: &[f64]) -> Vec<f64> {
    rl.iter().zip(s).map(|(a, b)| a + b).collect()
}

fn residual_from_half_grad(s: &[f64], lambda: &[f64], h: &[f64]) -> f64 {
    let scale = 1.0 + s.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    lambda
        .iter()
        .zip(h)
        .map(|(&l, &hi)| l.min(2.0 * hi).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Solves the NNQP from the feasible start `lambda0`.
///
/// On return `lambda >= 0`, the objective is no larger than at `lambda0`, and
/// `converged` reports whether `kkt_residual <= tol`. A non-converged result
/// carries the best iterate found.
pub fn solve_nnqp(r: &QpMatrix, s: &[f64], lambda0: &[f64], opts: &NnqpOptions) -> Result<NnqpResult> {
    let n = r.dim();
    check_dim(n, s.len())?;
    check_dim(n, lambda0.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if s.iter().chain(lambda0).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nnqp data"));
    }
    if lambda0.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("lambda0 must be nonnegative".into()));
    }
    if n == 0 {
        return Ok(NnqpResult {
            lambda: vec![],
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            objective: 0.0,
        });
    }

    let start_obj = objective(r, s, lambda0);
    let (mut lambda, mut iterations) = active_set(r, s, lambda0, opts.tol);
    let mut residual = kkt_residual(r, s, &lambda);
    if residual > opts.tol || !lambda.iter().all(|v| v.is_finite()) {
        if !lambda.iter().all(|v| v.is_finite()) || objective(r, s, &lambda) > start_obj {
            lambda = lambda0.to_vec();
        }
        let max_iter = opts.max_iter.unwrap_or(50 * n);
        let (pg, it) = projected_gradient_bb(r, s, &lambda, opts.tol, max_iter);
        iterations += it;
        lambda = pg;
        residual = kkt_residual(r, s, &lambda);
    }
    let obj = objective(r, s, &lambda);
    Ok(NnqpResult {
        converged: residual <= opts.tol,
        kkt_residual: residual,
        iterations,
        objective: obj,
        lambda,
    })
}

/// Cholesky solve of `R_PP z = rhs`; `None` on a numerically singular block.
/// The pivot floor is close to rounding level: `R_PP` is a Gram matrix, so a
/// looser floor rejects merely ill-conditioned blocks that still solve fine.
fn solve_passive(r: &QpMatrix, passive: &[usize], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = passive.len();
    let mut l = vec![0.0; k * k];
    let max_diag = passive.iter().map(|&i| r.get(i, i)).fold(0.0_f64, f64::max);
    for a in 0..k {
        for b in 0..=a {
            let mut sum = r.get(passive[a], passive[b]);
            for c in 0..b {
                sum -= l[a * k + c] * l[b * k + c];
            }
            if a == b {
                if sum <= 1e-14 * max_diag {
                    return None;
                }
                l[a * k + a] = sum.sqrt();
            } else {
                l[a * k + b] = sum / l[b * k + b];
            }
        }
    }
    let mut y = vec![0.0; k];
    for a in 0..k {
        let mut sum = rhs[a];
        for c in 0..a {
            sum -= l[a * k + c] * y[c];
        }
        y[a] = sum / l[a * k + a];
    }
    for a in (0..k).rev() {
        let mut sum = y[a];
        for c in (a + 1)..k {
            sum -= l[c * k + a] * y[c];
        }
        y[a] = sum / l[a * k + a];
    }
    Some(y)
}

/// Lawson–Hanson active-set phase. Returns the final iterate, which is always
/// feasible and never worse than `lambda0`.
fn active_set(r: &QpMatrix, s: &[f64], lambda0: &[f64], tol: f64) -> (Vec<f64>, usize) {
    let n = r.dim();
    let scale = 1.0 + s.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let threshold = 0.5 * tol * scale;
    let max_outer = 3 * n + 30;

    let mut lambda = lambda0.to_vec();
    let mut passive: Vec<usize> = (0..n).filter(|&i| lambda[i] > 0.0).collect();
    let mut in_passive = vec![false; n];
    for &i in &passive {
        in_passive[i] = true;
    }
    let mut iterations = 0;

    // Restores optimality on the current passive set, moving along the segment
    // towards the unconstrained block minimizer while keeping λ ≥ 0.
    let restore =
        |lambda: &mut Vec<f64>, passive: &mut Vec<usize>, in_passive: &mut Vec<bool>, iterations: &mut usize| -> bool {
            loop {
                *iterations += 1;
                if *iterations > max_outer * 4 {
                    return false;
                }
                if passive.is_empty() {
                    return true;
                }
                let rhs: Vec<f64> = passive.iter().map(|&i| -s[i]).collect();
                let Some(z) = solve_passive(r, passive, &rhs) else {
                    return false;
                };
                if z.iter().all(|&v| v > 0.0) {
                    for (&i, &v) in passive.iter().zip(&z) {
                        lambda[i] = v;
                    }
                    return true;
                }
                let mut alpha = f64::INFINITY;
                for (&i, &zi) in passive.iter().zip(&z) {
                    if zi <= 0.0 {
                        let denom = lambda[i] - zi;
                        if denom > 0.0 {
                            alpha = alpha.min(lambda[i] / denom);
                        } else {
                            alpha = 0.0;
                        }
                    }
                }
                let alpha = alpha.clamp(0.0, 1.0);
                for (&i, &zi) in passive.iter().zip(&z) {
                    lambda[i] += alpha * (zi - lambda[i]);
                }
                let before = passive.len();
                passive.retain(|&i| {
                    let keep = lambda[i] > 1e-300;
                    if !keep {
                        lambda[i] = 0.0;
                        in_passive[i] = false;
                    }
                    keep
                });
                if passive.len() == before {
                    // the blocking index did not leave: drop the smallest entry
                    let (pos, _) = passive
                        .iter()
                        .enumerate()
                        .min_by(|a, b| lambda[*a.1].total_cmp(&lambda[*b.1]))
                        .expect("nonempty");
                    let i = passive.remove(pos);
                    lambda[i] = 0.0;
                    in_passive[i] = false;
                }
            }
        };

    if !passive.is_empty() && !restore(&mut lambda, &mut passive, &mut in_passive, &mut iterations) {
        // dependent warm-start support: cold start
        lambda.iter_mut().for_each(|v| *v = 0.0);
        passive.clear();
        in_passive.iter_mut().for_each(|v| *v = false);
    }

    for _ in 0..max_outer {
        // h = Rλ + s, touching only passive columns
        let mut h = s.to_vec();
        for &j in &passive {
            let lj = lambda[j];
            for (hi, rij) in h.iter_mut().zip(r.row(j)) {
                *hi += lj * rij;
            }
        }
        let mut best = None;
        let mut best_val = -threshold;
        for i in 0..n {
            if !in_passive[i] && h[i] < best_val {
                best_val = h[i];
                best = Some(i);
            }
        }
        let Some(t) = best else {
            return (lambda, iterations);
        };
        let snapshot = lambda.clone();
        passive.push(t);
        in_passive[t] = true;
        if !restore(&mut lambda, &mut passive, &mut in_passive, &mut iterations) || !in_passive[t] {
            // t could not enter: numerical rank loss; keep the last optimal
            // passive solution and let the caller polish it
            return (snapshot, iterations);
        }
    }
    (lambda, iterations)
}

/// Largest eigenvalue estimate of `R` by power iteration.
fn spectral_bound(r: &QpMatrix) -> f64 {
    let n = r.dim();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut est = 0.0;
    for _ in 0..50 {
        let w = r.mul_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    // Gershgorin cap keeps the fixed step safe if power iteration undershoots
    let gersh = (0..n)
        .map(|i| r.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (1.1 * est).min(gersh).max(est)
}

/// Projected gradient with Barzilai–Borwein steps and a nonmonotone Armijo
/// safeguard (memory 10); falls back to the fixed step `1 / (2L)`.
pub fn projected_gradient_bb(r: &QpMatrix, s: &[f64], lambda0: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    const MEMORY: usize = 10;
    let lip = 2.0 * spectral_bound(r);
    if lip == 0.0 {
        // linear objective: λ_i = 0 where s_i ≥ 0, unbounded otherwise
        let lambda = lambda0
            .iter()
            .zip(s)
            .map(|(&l, &si)| if si >= 0.0 { 0.0 } else { l })
            .collect();
        return (lambda, 0);
    }
    let fixed = 1.0 / lip;
    let mut x: Vec<f64> = lambda0.iter().map(|v| v.max(0.0)).collect();
    let rx = r.mul_vec(&x);
    let mut grad: Vec<f64> = rx.iter().zip(s).map(|(a, b)| 2.0 * (a + b)).collect();
    let mut fval: f64 = x
        .iter()
        .zip(rx.iter().zip(s))
        .map(|(l, (a, b))| l * (a + 2.0 * b))
        .sum();
    let mut history = vec![fval];
    let mut step = fixed;
    let mut best = (fval, x.clone());

    for it in 0..max_iter {
        if residual_from_half_grad(s, &x, &grad.iter().map(|g| 0.5 * g).collect::<Vec<_>>()) <= tol {
            return (x, it);
        }
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = step;
        let (x_new, rx_new, f_new) = loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| (xi - alpha * gi).max(0.0)).collect();
            let r_trial = r.mul_vec(&trial);
            let f_trial: f64 = trial
                .iter()
                .zip(r_trial.iter().zip(s))
                .map(|(l, (a, b))| l * (a + 2.0 * b))
                .sum();
            let decrease: f64 = grad
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(g, (t, xi))| g * (t - xi))
                .sum();
            if f_trial <= reference + 1e-4 * decrease || alpha <= fixed {
                break (trial, r_trial, f_trial);
            }
            alpha = (0.5 * alpha).max(fixed);
        };
        let grad_new: Vec<f64> = rx_new.iter().zip(s).map(|(a, b)| 2.0 * (a + b)).collect();
        let sy: f64 = x_new
            .iter()
            .zip(&x)
            .zip(grad_new.iter().zip(&grad))
            .map(|((a, b), (c, d))| (a - b) * (c - d))
            .sum();
        let ss: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
        step = if sy > 0.0 {
            (ss / sy).clamp(fixed, 1e12 * fixed)
        } else {
            fixed
        };
        x = x_new;
        grad = grad_new;
        fval = f_new;
        if fval < best.0 {
            best = (fval, x.clone());
        }
        history.push(fval);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    (best.1, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{symmetric_eigen, SymMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(r: Vec<Vec<f64>>, s: &[f64]) -> NnqpResult {
        let r = QpMatrix::from_rows(r).unwrap();
        solve_nnqp(&r, s, &vec![0.0; s.len()], &NnqpOptions::default()).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let res = solve(vec![vec![1.0]], &[-2.0]);
        assert!(res.converged);
        assert!((res.lambda[0] - 2.0).abs() < 1e-12);
        let res = solve(vec![vec![1.0]], &[3.0]);
        assert_eq!(res.lambda, vec![0.0]);
    }

    #[test]
    fn separable_example() {
        let res = solve(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, -1.0]);
        assert_eq!(res.lambda, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let r = QpMatrix::identity(2);
        let opts = NnqpOptions::default();
        assert!(matches!(
            solve_nnqp(&r, &[1.0], &[0.0, 0.0], &opts),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(solve_nnqp(&r, &[1.0, 1.0], &[-1.0, 0.0], &opts).is_err());
        assert!(QpMatrix::from_rows(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn grow_keeps_existing_block() {
        let entry = |i: usize, j: usize| (i * 10 + j + j * 10 + i) as f64;
        let mut m = QpMatrix::default();
        m.grow(2, entry);
        m.grow(3, entry);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.get(i, j), entry(i, j));
            }
        }
        assert_eq!(m.leading_block(2).dim(), 2);
    }

    #[test]
    fn projected_gradient_alone_solves_small_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let r: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                    .collect()
            })
            .collect();
        let r = QpMatrix::from_rows(r).unwrap();
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (pg, _) = projected_gradient_bb(&r, &s, &vec![0.0; n], 1e-10, 100_000);
        let exact = solve_nnqp(&r, &s, &vec![0.0; n], &NnqpOptions::default()).unwrap();
        assert!((objective(&r, &s, &pg) - exact.objective).abs() < 1e-9);
    }

    /// Minimum over all faces `λ_P > 0, λ_rest = 0` of the stationary points
    /// `R_PP λ_P = -s_P`, solved by eigen pseudo-inverse.
    fn exhaustive(r: &QpMatrix, s: &[f64]) -> f64 {
        let n = s.len();
        let mut best = 0.0_f64;
        for mask in 1u32..(1 << n) {
            let p: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let rows: Vec<Vec<f64>> = p.iter().map(|&i| p.iter().map(|&j| r.get(i, j)).collect()).collect();
            let block = SymMatrix::from_rows(&rows).unwrap();
            let eig = symmetric_eigen(&block).unwrap();
            let cut = 1e-10 * eig.max_eigenvalue().abs().max(1.0);
            let mut lp = vec![0.0; p.len()];
            for (k, &ev) in eig.eigenvalues.iter().enumerate() {
                if ev > cut {
                    let v = eig.eigenvector(k);
                    let c: f64 = v.iter().zip(&p).map(|(vi, &i)| -vi * s[i]).sum::<f64>() / ev;
                    for (l, vi) in lp.iter_mut().zip(&v) {
                        *l += c * vi;
                    }
                }
            }
            if lp.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut lambda = vec![0.0; n];
            for (&i, &v) in p.iter().zip(&lp) {
                lambda[i] = v.max(0.0);
            }
            let rl = r.mul_vec(&lambda);
            let consistent = p.iter().all(|&i| (rl[i] + s[i]).abs() < 1e-8 * (1.0 + s[i].abs()));
            if consistent {
                best = best.min(objective(r, s, &lambda));
            }
        }
        best
    }

    /// `(dᵢᵀ dⱼ)²` for random points of the simplex; rank-deficient once the
    /// count exceeds `m (m + 1) / 2`.
    fn hadamard_gram(rng: &mut ChaCha8Rng, m: usize, count: usize) -> QpMatrix {
        let dirs: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let t: f64 = v.iter().sum();
                v.into_iter().map(|x| x / t).collect()
            })
            .collect();
        let mut q = QpMatrix::default();
        q.grow(count, |i, j| {
            let g: f64 = dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum();
            g * g
        });
        q
    }

    #[test]
    fn matches_exhaustive_face_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let n = 1 + trial % 6;
            // m = 2 gives rank <= 3, so n > 3 is rank-deficient
            let m = if trial % 2 == 0 { 2 } else { 3 };
            let r = hadamard_gram(&mut rng, m, n);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let res = solve_nnqp(&r, &s, &vec![0.0; n], &NnqpOptions::default()).unwrap();
            let oracle = exhaustive(&r, &s);
            assert!(res.converged);
            assert!(
                (res.objective - oracle).abs() < 1e-8,
                "trial {trial}: {} vs {oracle}",
                res.objective
            );
        }
    }

    #[test]
    fn kkt_certificate_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let opts = NnqpOptions::default();
        for _ in 0..20 {
            let r = hadamard_gram(&mut rng, 3, 40);
            let s: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let res = solve_nnqp(&r, &s, &vec![0.0; 40], &opts).unwrap();
            assert!(res.converged);
            let rl = r.mul_vec(&res.lambda);
            let s_max = s.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for i in 0..40 {
                let g = 2.0 * (rl[i] + s[i]);
                let bound = opts.tol * (1.0 + s[i].abs());
                assert!(res.lambda[i] >= 0.0);
                assert!(g >= -2.0 * opts.tol * (1.0 + s_max), "{g}");
                assert!((res.lambda[i] * g).abs() <= bound, "{}", res.lambda[i] * g);
            }
        }
    }

    #[test]
    fn warm_start_dominates_on_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let full = hadamard_gram(&mut rng, 3, 60);
        let s: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let opts = NnqpOptions::default();
        let mut prev: Vec<f64> = Vec::new();
        for n in (10..=60).step_by(10) {
            let r = full.leading_block(n);
            let mut warm = prev.clone();
            warm.resize(n, 0.0);
            let w = solve_nnqp(&r, &s[..n], &warm, &opts).unwrap();
            let c = solve_nnqp(&r, &s[..n], &vec![0.0; n], &opts).unwrap();
            assert!(w.objective <= c.objective + 1e-12);
            assert!(w.objective <= objective(&r, &s[..n], &warm) + 1e-15);
            prev = w.lambda;
        }
    }

    #[test]
    fn dense_grid_projections_stay_in_the_active_set() {
        // many nearly parallel columns: the regime where a plain active-set
        // solve stalls short of tolerance and the gradient fallback crawls
        let grid = crate::simplex_grid::SimplexGrid::build(3, 15).unwrap();
        let dirs = grid.directions();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let r = QpMatrix::from_rows(
            dirs.iter()
                .map(|a| dirs.iter().map(|b| dot(a, b).powi(2)).collect())
                .collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let opts = NnqpOptions::default();
        let mut warm = vec![0.0; dirs.len()];
        let mut y = SymMatrix::zeros(3);
        for _ in 0..60 {
            let data: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.3..0.3)).collect();
            y += &SymMatrix::symmetrized(3, &data);
            let s: Vec<f64> = dirs.iter().map(|d| y.quad_form(d)).collect();
            let res = solve_nnqp(&r, &s, &warm, &opts).unwrap();
            assert!(res.converged, "residual {}", res.kkt_residual);
            assert!(res.iterations < 500, "{} iterations", res.iterations);
            warm = res.lambda;
        }
    }

    #[test]
    fn recorded_stall_is_resolved_without_fallback() {
        // a projection taken from a cq solve where the passive block was too
        // ill-conditioned for the plain active-set phase
        let (s, lambda0): (Vec<f64>, Vec<f64>) =
            serde_json::from_str(include_str!("../testdata/nnqp_stall.json")).unwrap();
        let grid = crate::simplex_grid::SimplexGrid::build(3, 15).unwrap();
        let dirs = grid.directions();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let r = QpMatrix::from_rows(
            dirs.iter()
                .map(|a| dirs.iter().map(|b| dot(a, b).powi(2)).collect())
                .collect(),
        )
        .unwrap();
        let res = solve_nnqp(&r, &s, &lambda0, &NnqpOptions::default()).unwrap();
        assert!(res.converged, "residual {}", res.kkt_residual);
        assert!(res.iterations < 500, "{} iterations", res.iterations);
    }

    proptest! {
        #[test]
        fn solution_is_feasible_and_improves_on_start(
            seed in 0u64..1000,
            n in 1usize..25,
            scale in 0.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = hadamard_gram(&mut rng, 3, n);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..scale)).collect();
            let opts = NnqpOptions::default();
            let a = solve_nnqp(&r, &s, &l0, &opts).unwrap();
            let b = solve_nnqp(&r, &s, &l0, &opts).unwrap();
            prop_assert!(a.lambda.iter().all(|&v| v >= 0.0));
            prop_assert!(a.objective <= objective(&r, &s, &l0) + 1e-12);
            prop_assert_eq!(a.lambda, b.lambda);
            if a.converged {
                prop_assert!(a.kkt_residual <= opts.tol);
            }
        }
    }
}
