//! BFGS with a strong Wolfe line search.
//!
//! The objective callback returns `None` (or a non-finite value) for points
//! where it cannot be evaluated; the line search treats those like a failed
//! sufficient-decrease test and shortens the step.

use serde::{Deserialize, Serialize};

pub const WOLFE_C1: f64 = 1e-4;
pub const WOLFE_C2: f64 = 0.9;
pub const DEFAULT_MAX_ITER: usize = 2000;

const MAX_BRACKET_STEPS: usize = 40;
const MAX_ZOOM_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    InvalidStart,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: InnerStatus,
}

impl InnerResult {
    pub fn success(&self) -> bool {
        self.status == InnerStatus::Converged
    }

    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, F> {
    fg: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    value0: f64,
    slope0: f64,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Option<Point> {
        self.evaluations += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(a, d)| a + alpha * d).collect();
        let (value, grad) = (self.fg)(&x)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let slope = dot(&grad, self.dir);
        Some(Point {
            alpha,
            value,
            slope,
            x,
            grad,
        })
    }

    fn armijo_fails(&self, p: &Point) -> bool {
        p.value > self.value0 + WOLFE_C1 * p.alpha * self.slope0
    }

    fn curvature_ok(&self, p: &Point) -> bool {
        p.slope.abs() <= -WOLFE_C2 * self.slope0
    }

    /// Strong Wolfe step, bracketing then zooming.
    fn run(&mut self, alpha1: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            value: self.value0,
            slope: self.slope0,
            x: self.x.to_vec(),
            grad: Vec::new(),
        };
        let mut alpha = alpha1;
        for i in 0..MAX_BRACKET_STEPS {
            let Some(p) = self.eval(alpha) else {
                return self.zoom(prev, None, alpha);
            };
            if self.armijo_fails(&p) || (i > 0 && p.value >= prev.value) {
                let hi = p.alpha;
                return self.zoom(prev, Some(p), hi);
            }
            if self.curvature_ok(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                let hi = prev.alpha;
                return self.zoom(p, Some(prev), hi);
            }
            alpha = 2.0 * p.alpha;
            prev = p;
        }
        None
    }

    /// `hi` may be unevaluable (`None`), in which case bisection is used.
    fn zoom(&mut self, mut lo: Point, mut hi: Option<Point>, mut hi_alpha: f64) -> Option<Point> {
        for _ in 0..MAX_ZOOM_STEPS {
            let (a, b) = (lo.alpha, hi_alpha);
            let width = (b - a).abs();
            if width <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
            // minimizer of the quadratic through (lo, slope lo, hi)
            let mut trial = match &hi {
                Some(h) => {
                    let d = b - a;
                    let denom = 2.0 * (h.value - lo.value - lo.slope * d);
                    if denom > 0.0 {
                        a - lo.slope * d * d / denom
                    } else {
                        0.5 * (a + b)
                    }
                }
                None => 0.5 * (a + b),
            };
            let (left, right) = (a.min(b), a.max(b));
            let margin = 0.1 * width;
            if !(trial > left + margin && trial < right - margin) {
                trial = 0.5 * (a + b);
            }
            let Some(p) = self.eval(trial) else {
                hi_alpha = trial;
                hi = None;
                continue;
            };
            if self.armijo_fails(&p) || p.value >= lo.value {
                hi_alpha = p.alpha;
                hi = Some(p);
            } else {
                if self.curvature_ok(&p) {
                    return Some(p);
                }
                if p.slope * (hi_alpha - lo.alpha) >= 0.0 {
                    hi_alpha = lo.alpha;
                    hi = Some(lo);
                }
                lo = p;
            }
        }
        // accept a point with sufficient decrease even without curvature
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimizes until `||∇φ||_∞ <= gtol`. On failure the best iterate is
/// returned with the reason.
pub fn bfgs(
    mut fg: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    x0: &[f64],
    gtol: f64,
    max_iter: usize,
) -> InnerResult {
    let n = x0.len();
    let start = fg(x0).filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()));
    let Some((mut value, mut grad)) = start else {
        return InnerResult {
            x: x0.to_vec(),
            value: f64::NAN,
            grad: vec![f64::NAN; n],
            iterations: 0,
            evaluations: 1,
            status: InnerStatus::InvalidStart,
        };
    };
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut h_is_identity = true;
    let mut scaled = false;
    let mut previous_value = value + 0.5 * grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut status = InnerStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < max_iter {
        if inf_norm(&grad) <= gtol {
            status = InnerStatus::Converged;
            break;
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &grad)).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            h_is_identity = true;
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }
        let alpha1 = (1.01 * 2.0 * (value - previous_value) / slope).min(1.0);
        let alpha1 = if alpha1 > 0.0 && alpha1.is_finite() {
            alpha1
        } else {
            1.0
        };
        let mut search = LineSearch {
            fg: &mut fg,
            x: &x,
            dir: &dir,
            value0: value,
            slope0: slope,
            evaluations: 0,
        };
        let step = search.run(alpha1);
        evaluations += search.evaluations;
        let Some(p) = step else {
            if h_is_identity {
                status = InnerStatus::LineSearchFailed;
                break;
            }
            // retry along steepest descent before giving up
            h = identity(n);
            h_is_identity = true;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        previous_value = value;
        x = p.x;
        value = p.value;
        grad = p.grad;
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() && sy > 0.0 {
            if !scaled {
                let gamma = sy / yy;
                h.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            update_inverse_hessian(&mut h, &s, &y, sy);
            h_is_identity = false;
        }
    }
    if status == InnerStatus::MaxIterations && inf_norm(&grad) <= gtol {
        status = InnerStatus::Converged;
    }
    InnerResult {
        x,
        value,
        grad,
        iterations,
        evaluations,
        status,
    }
}

/// `H <- (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = r * r * yhy + r;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
    // keep exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Objective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective_fg(o: Objective) -> impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)> {
        move |x: &[f64]| o.value_and_gradient(x).ok()
    }

    #[test]
    fn quadratic_from_three_four() {
        let res = bfgs(objective_fg(Objective::ConvexQuadratic), &[3.0, 4.0], 1e-8, 2000);
        assert!(res.success());
        assert!(res.iterations <= 20);
        assert!(res.x.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rosenbrock_from_random_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x0: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let res = bfgs(objective_fg(Objective::ExtendedRosenbrock), &x0, 1e-6, 2000);
            assert!(res.success(), "{:?}", res.status);
            assert!(res.grad_norm() <= 1e-6);
            // eR with n = 5 has a second local minimizer near x1 = -1
            let near_ones = res.x.iter().all(|v| (v - 1.0).abs() < 1e-4);
            assert!(near_ones || res.x[0] < 0.0, "{:?}", res.x);
        }
        let res = bfgs(objective_fg(Objective::ExtendedRosenbrock), &[0.5; 5], 1e-6, 2000);
        assert!(res.x.iter().all(|v| (v - 1.0).abs() < 1e-4));
    }

    #[test]
    fn loose_tolerance_returns_start() {
        let res = bfgs(objective_fg(Objective::ConvexQuadratic), &[3.0, 4.0], 10.0, 2000);
        assert!(res.success());
        assert_eq!(res.x, vec![3.0, 4.0]);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn iteration_cap_and_bad_start_are_failures() {
        let res = bfgs(objective_fg(Objective::Wood), &[-3.0, -1.0, -3.0, -1.0], 1e-12, 3);
        assert_eq!(res.status, InnerStatus::MaxIterations);
        assert_eq!(res.iterations, 3);
        let res = bfgs(|_: &[f64]| None, &[0.0], 1e-6, 10);
        assert_eq!(res.status, InnerStatus::InvalidStart);
    }

    #[test]
    fn steps_back_off_from_undefined_region() {
        // f = x^2 defined only for x > -1; minimum at 0 from the right
        let fg = |x: &[f64]| (x[0] > -1.0).then(|| (x[0] * x[0] + 0.5 * x[0], vec![2.0 * x[0] + 0.5]));
        let res = bfgs(fg, &[5.0], 1e-10, 100);
        assert!(res.success());
        assert!((res.x[0] + 0.25).abs() < 1e-9);
    }

    #[test]
    fn solves_all_catalog_objectives_near_their_minimizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for o in Objective::ALL {
            if o == Objective::Ex8_1_6 {
                continue;
            }
            let n = o.default_dim();
            let x_star = o.anchor(n).unwrap();
            let x0: Vec<f64> = x_star.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
            let res = bfgs(objective_fg(o), &x0, 1e-7, 2000);
            assert!(res.success(), "{o}: {:?}", res.status);
        }
    }
}
