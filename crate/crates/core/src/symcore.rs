//! Dense symmetric matrices, a cyclic Jacobi eigensolver and the cone
//! projections built on it (semidefinite cones, the nonnegative orthant of
//! matrices, and the distance to `S_+ + N`).

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Sweep cap for the Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Iteration cap for the `S_+ + N` distance and Dykstra routines.
pub const DYKSTRA_MAX_ITERS: usize = 10_000;

/// Dense real symmetric `m x m` matrix, stored full and row-major.
///
/// Symmetry is enforced at construction; every arithmetic operation keeps it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "matrix order must be at least 1");
        Self {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut out = Self::zeros(order);
        for i in 0..order {
            out.data[i * order + i] = 1.0;
        }
        out
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            out.data[i * diag.len() + i] = d;
        }
        out
    }

    /// Rank-one matrix `d d^T`.
    pub fn outer(d: &[f64]) -> Self {
        let m = d.len();
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.data[i * m + j] = d[i] * d[j];
            }
        }
        out
    }

    /// Builds from a full row-major buffer. Off-diagonal pairs must agree to
    /// within `1e-12 * (1 + max|a_ij|)`; they are then averaged so the stored
    /// matrix is exactly symmetric.
    pub fn from_row_major(order: usize, data: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::EmptyMatrix);
        }
        check_dim(order * order, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        let scale = 1.0 + data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut out = Self { order, data };
        for i in 0..order {
            for j in (i + 1)..order {
                let a = out.data[i * order + j];
                let b = out.data[j * order + i];
                let gap = (a - b).abs();
                if gap > 1e-12 * scale {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
                let avg = 0.5 * (a + b);
                out.data[i * order + j] = avg;
                out.data[j * order + i] = avg;
            }
        }
        Ok(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        let mut data = Vec::with_capacity(order * order);
        for row in rows {
            check_dim(order, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_row_major(order, data)
    }

    /// Symmetrizes an arbitrary square buffer as `(A + A^T) / 2`.
    pub fn symmetrized(order: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), order * order);
        let mut out = Self::zeros(order);
        for i in 0..order {
            for j in 0..order {
                out.data[i * order + j] = 0.5 * (data[i * order + j] + data[j * order + i]);
            }
        }
        out
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.order + j] = value;
        self.data[j * self.order + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.order).map(<[f64]>::to_vec).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max_ij |a_ij|`.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `d^T A d`.
    pub fn quad_form(&self, d: &[f64]) -> f64 {
        debug_assert_eq!(d.len(), self.order);
        let m = self.order;
        let mut total = 0.0;
        for i in 0..m {
            let row = &self.data[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                acc += row[j] * d[j];
            }
            total += d[i] * acc;
        }
        total
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            order: self.order,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.order, other.order, "matrix order mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha * d d^T`.
    pub fn add_outer(&mut self, alpha: f64, d: &[f64]) {
        let m = self.order;
        for i in 0..m {
            let ai = alpha * d[i];
            for (j, dj) in d.iter().enumerate().take(m).skip(i) {
                let v = self.data[i * m + j] + ai * dj;
                self.data[i * m + j] = v;
                self.data[j * m + i] = v;
            }
        }
    }

    /// Entrywise `min(a_ij, 0)`: projection onto `-N^m`.
    pub fn clip_nonpositive(&self) -> Self {
        Self {
            order: self.order,
            data: self.data.iter().map(|v| v.min(0.0)).collect(),
        }
    }

    /// Entrywise `max(a_ij, 0)`: projection onto `N^m`.
    pub fn clip_nonnegative(&self) -> Self {
        Self {
            order: self.order,
            data: self.data.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SymMatrix> for SymMatrix {
    fn add_assign(&mut self, rhs: &SymMatrix) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SymMatrix> for SymMatrix {
    fn sub_assign(&mut self, rhs: &SymMatrix) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scaled(rhs)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scaled(-1.0)
    }
}

/// `<A, B> = sum_ij A_ij B_ij`.
pub fn frobenius_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dim(a.order, b.order)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `j` (entries `vectors[i * m + j]`) pairs with `eigenvalues[j]`.
    vectors: Vec<f64>,
    order: usize,
}

impl EigenDecomposition {
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        (0..self.order).map(|i| self.vectors[i * self.order + j]).collect()
    }

    pub fn vectors_row_major(&self) -> &[f64] {
        &self.vectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("order >= 1")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let m = self.order;
        let mut out = SymMatrix::zeros(m);
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.eigenvector(j);
            out.add_outer(w, &v);
        }
        // exact symmetry after accumulated rounding
        SymMatrix::symmetrized(m, &out.data)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigensolver with a threshold on the first sweeps.
pub fn symmetric_eigen(a: &SymMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::NonFinite("eigen input"));
    }
    let n = a.order;
    let mut w = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total = a.norm_fro();

    let off_norm = |w: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += w[p * n + q] * w[p * n + q];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n == 1 || total == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep >= JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                method: "jacobi eigensolver",
                iterations: sweep,
                residual: off_norm(&w),
            });
        }
        let off = off_norm(&w);
        if off <= 1e-15 * total || off == 0.0 {
            converged = true;
            continue;
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                let g = 100.0 * apq.abs();
                let app = w[p * n + p];
                let aqq = w[q * n + q];
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[p * n + q] = 0.0;
                    w[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh || apq == 0.0 {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    w[k * n + p] = c * akp - s * akq;
                    w[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = w[p * n + k];
                    let aqk = w[q * n + k];
                    w[p * n + k] = c * apk - s * aqk;
                    w[q * n + k] = s * apk + c * aqk;
                }
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweep += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j * n + j].total_cmp(&w[i * n + i]));
    let eigenvalues = order.iter().map(|&i| w[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + src];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        vectors,
        order: n,
    })
}

/// Projection onto the positive semidefinite cone by eigenvalue clipping.
pub fn project_psd(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(symmetric_eigen(a)?.reconstruct_with(|l| l.max(0.0)))
}

/// Projection onto the negative semidefinite cone, `-project_psd(-A)`.
pub fn project_nsd(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(symmetric_eigen(a)?.reconstruct_with(|l| l.min(0.0)))
}

/// Result of [`distance_to_spn`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpnDistance {
    /// `min_{Y in S_+ + N} ||A - Y||_F`.
    pub distance: f64,
    /// Projection of `A` onto the polar cone `S_- ∩ (-N)`.
    pub polar_point: SymMatrix,
    /// PSD part of the witness `A - polar_point = psd_part + nonneg_part`.
    pub psd_part: SymMatrix,
    /// Entrywise nonnegative part of the witness.
    pub nonneg_part: SymMatrix,
    pub iterations: usize,
}

/// Distance from `A` to `S^m_+ + N^m`.
///
/// Minimizes `½ ||Π_{S_-}(A - N)||²` over `N ≥ 0` with accelerated projected
/// gradient (gradient `-Π_{S_-}(A - N)`, Lipschitz constant 1) and adaptive
/// restart. At the optimum `Π_{S_-}(A - N)` is the projection of `A` onto the
/// polar cone `S_- ∩ (-N)` and `A - polar_point = Π_{S_+}(A - N) + N` is an
/// exact decomposition witness.
///
/// Stops on a certified duality gap: the returned distance is within `tol`
/// of the true one. Since `A - Z ∈ S_+ + N` exactly, the returned polar point
/// is within `sqrt(2 tol distance)` of the exact projection.
pub fn distance_to_spn(a: &SymMatrix, tol: f64) -> Result<SpnDistance> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let m = a.order;
    let finish = |n: SymMatrix, iterations: usize| -> Result<SpnDistance> {
        let e = symmetric_eigen(&(a - &n))?;
        let polar_point = e.reconstruct_with(|l| l.min(0.0));
        Ok(SpnDistance {
            distance: polar_point.norm_fro(),
            psd_part: e.reconstruct_with(|l| l.max(0.0)),
            nonneg_part: n,
            polar_point,
            iterations,
        })
    };

    let mut n = SymMatrix::zeros(m);
    let mut y = n.clone();
    let mut t = 1.0_f64;
    let mut residual = f64::INFINITY;
    for it in 1..=DYKSTRA_MAX_ITERS {
        // ∇ = -Π_{S_-}(A - Y), unit step
        let z = project_nsd(&(a - &y))?;
        let n_next = (&y + &z).clip_nonnegative();
        let z_next = project_nsd(&(a - &n_next))?;
        residual = distance_gap(a, &z_next)?;
        if residual <= tol {
            return finish(n_next, it);
        }
        let restart = frobenius_inner(&(&y - &n_next), &(&n_next - &n))? > 0.0;
        if restart {
            t = 1.0;
            y = n_next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &n_next + &(&n_next - &n).scaled((t - 1.0) / t_next);
            t = t_next;
        }
        n = n_next;
    }
    Err(Error::NoConvergence {
        method: "distance to S_+ + N",
        iterations: DYKSTRA_MAX_ITERS,
        residual,
    })
}

/// Gap between the upper bound `||Z||` (valid because `A - Z ∈ S_+ + N`
/// exactly) and the lower bound `<A, W> / ||W||` for `W ∈ S_- ∩ (-N)` built
/// from `Z` by clipping positive entries and shifting the spectrum.
fn distance_gap(a: &SymMatrix, z: &SymMatrix) -> Result<f64> {
    let upper = z.norm_fro();
    let clipped = z.clip_nonpositive();
    let shift = symmetric_eigen(&clipped)?.max_eigenvalue().max(0.0);
    let mut w = clipped;
    for i in 0..w.order {
        w.data[i * w.order + i] -= shift;
    }
    let wn = w.norm_fro();
    let lower = if wn > 0.0 {
        (frobenius_inner(a, &w)? / wn).max(0.0)
    } else {
        0.0
    };
    Ok(upper - lower)
}

/// Projection onto `S_- ∩ (-N)` by Dykstra's alternating projections.
///
/// Converges slowly when the two cones meet tangentially; kept as an
/// independent route to [`distance_to_spn`]'s polar point.
pub fn polar_spn_dykstra(a: &SymMatrix, tol: f64) -> Result<(SymMatrix, usize)> {
    let m = a.order;
    let mut x = a.clone();
    let mut p = SymMatrix::zeros(m);
    let mut q = SymMatrix::zeros(m);
    for it in 1..=DYKSTRA_MAX_ITERS {
        let xp = &x + &p;
        let y = project_nsd(&xp)?;
        p = &xp - &y;
        let yq = &y + &q;
        let x_next = yq.clip_nonpositive();
        q = &yq - &x_next;
        let step = (&x_next - &x).norm_fro();
        let gap = (&x_next - &y).norm_fro();
        x = x_next;
        if step <= tol && gap <= tol {
            return Ok((x, it));
        }
    }
    Err(Error::NoConvergence {
        method: "dykstra",
        iterations: DYKSTRA_MAX_ITERS,
        residual: x.norm_fro(),
    })
}
