//! Rational simplex grids `δ^m_r` and their shell ordering.
//!
//! Shell `k` holds the points `z` of the unit simplex with `(k + 2) z`
//! integral. A point reachable from several shells is kept only at the first
//! one, so the grid prefix ending at shell `r` is exactly `δ^m_r`.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refuse to enumerate shells or grids larger than this.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// A rational point on the unit simplex, kept in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    numerators: Vec<u32>,
    denominator: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl GridPoint {
    /// Canonicalizes `numerators / denominator`. The numerators must sum to
    /// the denominator.
    pub fn new(numerators: Vec<u32>, denominator: u32) -> Result<Self> {
        if denominator == 0 || numerators.is_empty() {
            return Err(Error::InvalidArgument("empty grid point".into()));
        }
        let sum: u64 = numerators.iter().map(|&v| u64::from(v)).sum();
        if sum != u64::from(denominator) {
            return Err(Error::InvalidArgument(format!(
                "numerators sum to {sum}, denominator is {denominator}"
            )));
        }
        let g = numerators.iter().fold(denominator, |acc, &v| gcd(acc, v));
        Ok(Self {
            numerators: numerators.into_iter().map(|v| v / g).collect(),
            denominator: denominator / g,
        })
    }

    pub fn numerators(&self) -> &[u32] {
        &self.numerators
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn float_view(&self) -> Vec<f64> {
        let den = f64::from(self.denominator);
        self.numerators.iter().map(|&v| f64::from(v) / den).collect()
    }
}

/// `C(n, k)` in u128, saturating.
fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of weak compositions of `k + 2` into `m` parts.
pub fn shell_size(m: usize, k: usize) -> u128 {
    binomial((k + m + 1) as u128, (m - 1) as u128)
}

/// All weak compositions of `k + 2` into `m` parts, scaled by `1 / (k + 2)`,
/// in ascending lexicographic order of the numerator vectors.
pub fn enumerate_shell(m: usize, k: usize) -> Result<Vec<GridPoint>> {
    if m == 0 {
        return Err(Error::InvalidArgument("simplex dimension must be >= 1".into()));
    }
    let count = shell_size(m, k);
    if count > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge {
            m,
            k,
            count,
            limit: MAX_GRID_POINTS,
        });
    }
    let total = (k + 2) as u32;
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; m];
    compositions(&mut current, 0, total, &mut |c| {
        out.push(GridPoint::new(c.to_vec(), total).expect("valid composition"));
    });
    Ok(out)
}

fn compositions(current: &mut [u32], pos: usize, remaining: u32, emit: &mut impl FnMut(&[u32])) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        emit(current);
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        compositions(current, pos + 1, remaining - v, emit);
    }
}

/// Ordered union of shells `0..=r_max`, deduplicated on exact rationals.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    m: usize,
    r_max: usize,
    points: Vec<GridPoint>,
    directions: Arc<[Vec<f64>]>,
    /// `shell_ends[r]` is the length of the prefix equal to `δ^m_r`.
    shell_ends: Vec<usize>,
}

impl SimplexGrid {
    pub fn build(m: usize, r_max: usize) -> Result<Self> {
        let mut seen: HashSet<GridPoint> = HashSet::new();
        let mut points = Vec::new();
        let mut shell_ends = Vec::with_capacity(r_max + 1);
        let mut total: u128 = 0;
        for k in 0..=r_max {
            total += shell_size(m.max(1), k);
            if total > MAX_GRID_POINTS {
                return Err(Error::GridTooLarge {
                    m,
                    k,
                    count: total,
                    limit: MAX_GRID_POINTS,
                });
            }
            for p in enumerate_shell(m, k)? {
                if seen.insert(p.clone()) {
                    points.push(p);
                }
            }
            shell_ends.push(points.len());
        }
        let directions = points.iter().map(GridPoint::float_view).collect();
        Ok(Self {
            m,
            r_max,
            points,
            directions,
            shell_ends,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    /// Float views of all points, in grid order.
    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    /// Shared handle to the float views, for cone approximations.
    pub fn direction_pool(&self) -> Arc<[Vec<f64>]> {
        Arc::clone(&self.directions)
    }

    /// `|δ^m_r|` for `r <= r_max`.
    pub fn prefix_len(&self, r: usize) -> usize {
        self.shell_ends[r]
    }

    pub fn shell_ends(&self) -> &[usize] {
        &self.shell_ends
    }

    /// Range of indices first appearing at shell `r`.
    pub fn shell_range(&self, r: usize) -> std::ops::Range<usize> {
        let start = if r == 0 { 0 } else { self.shell_ends[r - 1] };
        start..self.shell_ends[r]
    }

    /// Largest `r` with `δ^m_r` contained in the first `active` points, or
    /// `None` if even shell 0 is incomplete.
    pub fn complete_shell(&self, active: usize) -> Option<usize> {
        self.shell_ends.iter().rposition(|&end| end <= active)
    }

    /// `|δ^m_r| <= m^2 (m^{r+1} - 1) / (m - 1)` for every `r <= r_max`.
    /// Requires `m >= 2`; returns `false` otherwise.
    pub fn check_count_bound(&self) -> bool {
        if self.m < 2 {
            return false;
        }
        let m = self.m as f64;
        self.shell_ends.iter().enumerate().all(|(r, &len)| {
            let bound = m * m * (m.powi(r as i32 + 1) - 1.0) / (m - 1.0);
            (len as f64) <= bound
        })
    }

    /// Active-set size after one refinement step.
    pub fn next_active_set(&self, previous_size: usize, zeta: usize) -> usize {
        (previous_size + zeta).min(self.points.len())
    }

    pub fn to_dump(&self) -> GridDump {
        GridDump {
            m: self.m,
            r_max: self.r_max,
            points: self
                .points
                .iter()
                .map(|p| (p.numerators.clone(), p.denominator))
                .collect(),
        }
    }
}

/// JSON form `{m, r_max, points: [[[numerators...], denominator], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDump {
    pub m: usize,
    pub r_max: usize,
    pub points: Vec<(Vec<u32>, u32)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_examples() {
        assert_eq!(enumerate_shell(3, 0).unwrap().len(), 6);
        assert_eq!(enumerate_shell(3, 1).unwrap().len(), 10);
        let two: Vec<Vec<f64>> = enumerate_shell(2, 0)
            .unwrap()
            .iter()
            .map(GridPoint::float_view)
            .collect();
        assert_eq!(two, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert!(enumerate_shell(0, 1).is_err());
    }

    #[test]
    fn shell_size_guard() {
        let err = enumerate_shell(30, 40).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }

    #[test]
    fn shell_counts_match_binomials() {
        for m in 1..6 {
            for k in 0..6 {
                assert_eq!(enumerate_shell(m, k).unwrap().len() as u128, shell_size(m, k));
            }
        }
    }

    #[test]
    fn points_are_canonical() {
        let p = GridPoint::new(vec![2, 0, 2], 4).unwrap();
        assert_eq!(p.numerators(), &[1, 0, 1]);
        assert_eq!(p.denominator(), 2);
        let e = GridPoint::new(vec![0, 3, 0], 3).unwrap();
        assert_eq!((e.numerators(), e.denominator()), (&[0, 1, 0][..], 1));
        assert!(GridPoint::new(vec![1, 1], 3).is_err());
    }

    #[test]
    fn small_grids() {
        let g = SimplexGrid::build(3, 0).unwrap();
        assert_eq!(g.len(), 6);
        let g = SimplexGrid::build(5, 0).unwrap();
        assert_eq!(g.len(), 15);
        let g = SimplexGrid::build(2, 0).unwrap();
        assert!(g.check_count_bound());
        assert!(!SimplexGrid::build(1, 3).unwrap().check_count_bound());
    }

    #[test]
    fn shell_zero_size_is_triangular() {
        for m in 1..8 {
            assert_eq!(SimplexGrid::build(m, 0).unwrap().len(), m * (m + 1) / 2);
        }
    }

    #[test]
    fn active_set_schedule() {
        let g = SimplexGrid::build(3, 15).unwrap();
        assert_eq!(g.next_active_set(6, 45), 51);
        assert_eq!(g.next_active_set(891, 45), 901);
        let g5 = SimplexGrid::build(5, 7).unwrap();
        assert_eq!(g5.next_active_set(15, 70), 85);
    }

    #[test]
    fn complete_shell_lookup() {
        let g = SimplexGrid::build(3, 15).unwrap();
        assert_eq!(g.complete_shell(5), None);
        assert_eq!(g.complete_shell(6), Some(0));
        assert_eq!(g.complete_shell(g.len()), Some(15));
        assert_eq!(g.complete_shell(g.prefix_len(7) + 1), Some(7));
    }

    #[test]
    fn float_dedup_agrees_with_rational_dedup() {
        for r in 0..=4 {
            let grid = SimplexGrid::build(3, r).unwrap();
            let mut floats: Vec<Vec<f64>> = Vec::new();
            for k in 0..=r {
                for p in enumerate_shell(3, k).unwrap() {
                    let v = p.float_view();
                    if !floats
                        .iter()
                        .any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12))
                    {
                        floats.push(v);
                    }
                }
            }
            assert_eq!(floats.len(), grid.len(), "r = {r}");
        }
    }
}
