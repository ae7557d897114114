//! Test objectives with analytic gradients and known local minimizers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "cq")]
    ConvexQuadratic,
    #[serde(rename = "fc")]
    FractionalConvex,
    #[serde(rename = "eR")]
    ExtendedRosenbrock,
    #[serde(rename = "FR")]
    FreudensteinRoth,
    #[serde(rename = "Pbs")]
    PowellBadlyScaled,
    #[serde(rename = "B")]
    Beale,
    #[serde(rename = "Ps")]
    PowellSingular,
    #[serde(rename = "W")]
    Wood,
    #[serde(rename = "qp")]
    QuarticPolynomial,
    #[serde(rename = "LY")]
    LuenbergerYe,
    #[serde(rename = "ex4_1_5")]
    Ex4_1_5,
    #[serde(rename = "ex8_1_4")]
    Ex8_1_4,
    #[serde(rename = "ex8_1_5")]
    Ex8_1_5,
    #[serde(rename = "ex8_1_6")]
    Ex8_1_6,
}

use Objective::*;

/// Default dimension of the variable-size objectives.
pub const DEFAULT_VARIABLE_DIM: usize = 5;

/// A local minimizer from the literature.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMinimizer {
    /// Full-precision coordinates.
    pub point: Vec<f64>,
    /// Coordinates as usually printed (rounded or truncated).
    pub published: Vec<f64>,
    /// Bound on `||∇f(point)||_∞`.
    pub stationarity_tol: f64,
    /// Listed in the literature but not stationary for the formula as
    /// implemented; checks on it are reported, not enforced.
    pub advisory: bool,
}

impl KnownMinimizer {
    fn exact(point: &[f64]) -> Self {
        Self {
            point: point.to_vec(),
            published: point.to_vec(),
            stationarity_tol: 1e-6,
            advisory: false,
        }
    }

    fn refined(point: &[f64], published: &[f64]) -> Self {
        Self {
            published: published.to_vec(),
            ..Self::exact(point)
        }
    }
}

impl Objective {
    pub const ALL: [Objective; 14] = [
        ConvexQuadratic,
        FractionalConvex,
        ExtendedRosenbrock,
        FreudensteinRoth,
        PowellBadlyScaled,
        Beale,
        PowellSingular,
        Wood,
        QuarticPolynomial,
        LuenbergerYe,
        Ex4_1_5,
        Ex8_1_4,
        Ex8_1_5,
        Ex8_1_6,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ConvexQuadratic => "cq",
            FractionalConvex => "fc",
            ExtendedRosenbrock => "eR",
            FreudensteinRoth => "FR",
            PowellBadlyScaled => "Pbs",
            Beale => "B",
            PowellSingular => "Ps",
            Wood => "W",
            QuarticPolynomial => "qp",
            LuenbergerYe => "LY",
            Ex4_1_5 => "ex4_1_5",
            Ex8_1_4 => "ex8_1_4",
            Ex8_1_5 => "ex8_1_5",
            Ex8_1_6 => "ex8_1_6",
        }
    }

    /// `None` for objectives defined for any `n` (eR needs `n >= 2`).
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            ExtendedRosenbrock | QuarticPolynomial => None,
            PowellSingular | Wood => Some(4),
            _ => Some(2),
        }
    }

    pub fn default_dim(self) -> usize {
        self.fixed_dim().unwrap_or(DEFAULT_VARIABLE_DIM)
    }

    pub fn check_dim(self, n: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(d) if d != n => Err(Error::DimensionMismatch { expected: d, actual: n }),
            None if n < 2 && self == ExtendedRosenbrock => {
                Err(Error::InvalidArgument("eR needs at least 2 variables".into()))
            }
            None if n == 0 => Err(Error::InvalidArgument("empty variable vector".into())),
            _ => Ok(()),
        }
    }

    /// Known local minimizers in dimension `n`. The first one anchors
    /// generated instances.
    pub fn known_minimizers(self, n: usize) -> Result<Vec<KnownMinimizer>> {
        self.check_dim(n)?;
        let km = KnownMinimizer::exact;
        Ok(match self {
            ConvexQuadratic | FractionalConvex | Ex8_1_4 => vec![km(&[0.0, 0.0])],
            ExtendedRosenbrock | QuarticPolynomial => vec![km(&vec![1.0; n])],
            FreudensteinRoth => vec![
                km(&[5.0, 4.0]),
                KnownMinimizer::refined(&[11.412_778_986_902, -0.896_805_253_274_477], &[11.41, -0.8968]),
            ],
            PowellBadlyScaled => vec![KnownMinimizer::refined(
                &[1.098_159_329_699_8e-5, 9.106_146_739_866_5],
                &[1.098e-5, 9.106],
            )],
            Beale => vec![km(&[3.0, 0.5])],
            PowellSingular => vec![km(&[0.0; 4])],
            Wood => vec![km(&[1.0; 4])],
            LuenbergerYe => vec![km(&[20.0, 3.0])],
            // the usual printed second coordinate 0.97378 is a typo for 0.87378
            Ex4_1_5 => vec![
                km(&[0.0, 0.0]),
                KnownMinimizer::refined(&[1.747_552_345_830_289, 0.873_776_172_915_144], &[1.74755, 0.97378]),
                KnownMinimizer::refined(&[-1.747_552_345_830_289, -0.873_776_172_915_144], &[-1.74755, -0.97378]),
            ],
            Ex8_1_5 => vec![
                km(&[0.0, 0.0]),
                KnownMinimizer::refined(&[0.089_842_013_100_318_1, -0.712_656_403_020_740], &[0.08984, -0.71266]),
            ],
            Ex8_1_6 => [[1.0004, 1.0004], [3.99995, 3.99995]]
                .iter()
                .map(|p| KnownMinimizer {
                    stationarity_tol: 1e-3,
                    advisory: true,
                    ..km(p)
                })
                .collect(),
        })
    }

    pub fn anchor(self, n: usize) -> Result<Vec<f64>> {
        Ok(self.known_minimizers(n)?.swap_remove(0).point)
    }

    pub fn evaluate(self, x: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    pub fn gradient(self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    /// Value and gradient. Non-finite results (the pole of ex8_1_6, overflow
    /// far from the origin) are returned as such for the caller to reject.
    pub fn value_and_gradient(self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x.len())?;
        let mut g = vec![0.0; x.len()];
        let f = match self {
            ConvexQuadratic => {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
                x[0] * x[0] + x[1] * x[1]
            }
            FractionalConvex => {
                let mut f = 0.0;
                for i in 0..2 {
                    let a = x[i].abs();
                    f += x[i] * x[i] / (1.0 + a);
                    g[i] = x[i] * (2.0 + a) / ((1.0 + a) * (1.0 + a));
                }
                f
            }
            ExtendedRosenbrock => {
                let mut f = 0.0;
                for i in 0..x.len() - 1 {
                    let a = 1.0 - x[i];
                    let b = x[i + 1] - x[i] * x[i];
                    f += a * a + 100.0 * b * b;
                    g[i] += -2.0 * a - 400.0 * b * x[i];
                    g[i + 1] += 200.0 * b;
                }
                f
            }
            FreudensteinRoth => {
                let (x1, x2) = (x[0], x[1]);
                let r1 = -13.0 + x1 + ((5.0 - x2) * x2 - 2.0) * x2;
                let r2 = -29.0 + x1 + ((x2 + 1.0) * x2 - 14.0) * x2;
                let d1 = 10.0 * x2 - 3.0 * x2 * x2 - 2.0;
                let d2 = 3.0 * x2 * x2 + 2.0 * x2 - 14.0;
                g[0] = 2.0 * (r1 + r2);
                g[1] = 2.0 * (r1 * d1 + r2 * d2);
                r1 * r1 + r2 * r2
            }
            PowellBadlyScaled => {
                let (x1, x2) = (x[0], x[1]);
                let r1 = 1e4 * x1 * x2 - 1.0;
                let (e1, e2) = ((-x1).exp(), (-x2).exp());
                let r2 = e1 + e2 - 1.0001;
                g[0] = 2.0 * r1 * 1e4 * x2 - 2.0 * r2 * e1;
                g[1] = 2.0 * r1 * 1e4 * x1 - 2.0 * r2 * e2;
                r1 * r1 + r2 * r2
            }
            Beale => {
                let (x1, x2) = (x[0], x[1]);
                let mut f = 0.0;
                for (k, c) in [1.5, 2.25, 2.625].into_iter().enumerate() {
                    let p = (k + 1) as i32;
                    let t = c - x1 * (1.0 - x2.powi(p));
                    f += t * t;
                    g[0] -= 2.0 * t * (1.0 - x2.powi(p));
                    g[1] += 2.0 * t * x1 * f64::from(p) * x2.powi(p - 1);
                }
                f
            }
            PowellSingular => {
                let s5 = 5f64.sqrt();
                let a = x[0] + 10.0 * x[1];
                let b = x[2] - x[3];
                let c = x[1] - 2.0 * x[2];
                let d = x[0] - x[3];
                g[0] = 2.0 * a + 40.0 * d.powi(3);
                g[1] = 20.0 * a + 4.0 * c.powi(3);
                g[2] = 2.0 * s5 * b - 8.0 * c.powi(3);
                g[3] = -2.0 * s5 * b - 40.0 * d.powi(3);
                a * a + s5 * b * b + c.powi(4) + 10.0 * d.powi(4)
            }
            Wood => {
                let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
                let a = x2 - x1 * x1;
                let b = x4 - x3 * x3;
                let c = x2 + x4 - 2.0;
                let d = x2 - x4;
                g[0] = -400.0 * x1 * a - 2.0 * (1.0 - x1);
                g[1] = 200.0 * a + 20.0 * c + d / 5.0;
                g[2] = -360.0 * x3 * b - 2.0 * (1.0 - x3);
                g[3] = 180.0 * b + 20.0 * c - d / 5.0;
                100.0 * a * a + (1.0 - x1).powi(2) + 90.0 * b * b + (1.0 - x3).powi(2) + 10.0 * c * c + d * d / 10.0
            }
            QuarticPolynomial => {
                let s: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 1.0)).sum();
                let w = 2.0 * s + 4.0 * s.powi(3);
                let mut f = s * s + s.powi(4);
                for (i, v) in x.iter().enumerate() {
                    f += (v - 1.0) * (v - 1.0);
                    g[i] = 2.0 * (v - 1.0) + w * (i + 1) as f64;
                }
                f
            }
            LuenbergerYe => {
                let (x1, x2) = (x[0], x[1]);
                g[0] = 2.0 * x1 - 5.0 * x2 - 25.0;
                g[1] = -5.0 * x1 + 4.0 * x2.powi(3) - 8.0;
                x1 * x1 - 5.0 * x1 * x2 + x2.powi(4) - 25.0 * x1 - 8.0 * x2
            }
            Ex4_1_5 => {
                let (x1, x2) = (x[0], x[1]);
                g[0] = 4.0 * x1 - 4.2 * x1.powi(3) + x1.powi(5) - x2;
                g[1] = -x1 + 2.0 * x2;
                2.0 * x1 * x1 - 1.05 * x1.powi(4) + x1.powi(6) * (5.0 / 30.0) - x1 * x2 + x2 * x2
            }
            Ex8_1_4 => {
                let (x1, x2) = (x[0], x[1]);
                g[0] = 24.0 * x1 - 25.2 * x1.powi(3) + 6.0 * x1.powi(5) - 6.0 * x2;
                g[1] = -6.0 * x1 + 12.0 * x2;
                12.0 * x1 * x1 - 6.3 * x1.powi(4) + x1.powi(6) - 6.0 * x1 * x2 + 6.0 * x2 * x2
            }
            Ex8_1_5 => {
                let (x1, x2) = (x[0], x[1]);
                g[0] = 8.0 * x1 - 8.4 * x1.powi(3) + 2.0 * x1.powi(5) + x2;
                g[1] = x1 - 8.0 * x2 + 16.0 * x2.powi(3);
                4.0 * x1 * x1 - 2.1 * x1.powi(4) + x1.powi(6) / 3.0 + x1 * x2 - 4.0 * x2 * x2 + 4.0 * x2.powi(4)
            }
            Ex8_1_6 => {
                let (x1, x2) = (x[0], x[1]);
                // first bracket keeps the unsquared (x1 - 4) term as usually printed
                let a = 0.1 + (x1 - 4.0) + (x2 - 4.0).powi(2);
                let b = 0.2 + (x1 - 1.0).powi(2) + (x2 - 1.0).powi(2);
                let c = 0.2 + (x1 - 8.0).powi(2) + (x2 - 8.0).powi(2);
                let (a2, b2, c2) = (a * a, b * b, c * c);
                g[0] = -1.0 / a2 + 2.0 * (x1 - 1.0) / b2 + 2.0 * (x1 - 8.0) / c2;
                g[1] = -2.0 * (x2 - 4.0) / a2 + 2.0 * (x2 - 1.0) / b2 + 2.0 * (x2 - 8.0) / c2;
                1.0 / a - 1.0 / b - 1.0 / c
            }
        };
        Ok((f, g))
    }

    /// False near points where central differences are meaningless: the
    /// kink axes of fc and the pole of ex8_1_6.
    pub fn is_smooth_sample(self, x: &[f64]) -> bool {
        match self {
            FractionalConvex => x.iter().all(|v| v.abs() > 1e-4),
            Ex8_1_6 => (0.1 + (x[0] - 4.0) + (x[1] - 4.0).powi(2)).abs() > 0.1,
            _ => true,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.id() == s)
            .ok_or_else(|| Error::UnknownObjective(s.to_string()))
    }
}

/// Largest relative error `|a - b| / max(1, |a|)` between the analytic
/// gradient `a` and central differences `b` with step `h max(1, |x_i|)`.
pub fn finite_difference_check(objective: Objective, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let grad = objective.gradient(x)?;
    let mut worst = 0.0_f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let up = objective.evaluate(&probe)?;
        probe[i] = x[i] - step;
        let down = objective.evaluate(&probe)?;
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    #[test]
    fn value_examples() {
        assert_eq!(ExtendedRosenbrock.evaluate(&[1.0; 5]).unwrap(), 0.0);
        assert_eq!(FreudensteinRoth.evaluate(&[5.0, 4.0]).unwrap(), 0.0);
        assert_eq!(ConvexQuadratic.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(FractionalConvex.evaluate(&[1.0, -3.0]).unwrap(), 0.5 + 9.0 / 4.0);
        assert!(Wood.evaluate(&[1.0; 3]).is_err());
        assert!(ExtendedRosenbrock.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(ConvexQuadratic.gradient(&[3.0, 4.0]).unwrap(), vec![6.0, 8.0]);
        assert_eq!(Beale.gradient(&[3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(QuarticPolynomial.gradient(&[1.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(LuenbergerYe.gradient(&[20.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ids_round_trip() {
        for o in Objective::ALL {
            assert_eq!(o.id().parse::<Objective>().unwrap(), o);
            let json = serde_json::to_string(&o).unwrap();
            assert_eq!(json, format!("\"{}\"", o.id()));
        }
        assert!(matches!("rosen".parse::<Objective>(), Err(Error::UnknownObjective(_))));
    }

    #[test]
    fn known_minimizers_are_stationary() {
        for o in Objective::ALL {
            for km in o.known_minimizers(o.default_dim()).unwrap() {
                let g = inf_norm(&o.gradient(&km.point).unwrap());
                if km.advisory {
                    eprintln!("advisory {o} at {:?}: ||grad|| = {g:.3e}", km.point);
                } else {
                    assert!(g <= km.stationarity_tol, "{o} at {:?}: {g}", km.point);
                }
            }
        }
    }

    #[test]
    fn refined_minimizers_match_published_digits() {
        for o in Objective::ALL {
            for km in o.known_minimizers(o.default_dim()).unwrap() {
                for (p, q) in km.point.iter().zip(&km.published) {
                    let close = (p - q).abs() <= 1e-3 * (1.0 + q.abs());
                    // ex4_1_5: the published second coordinate carries a digit typo
                    let typo = o == Ex4_1_5 && (q.abs() - 0.97378).abs() < 1e-12;
                    assert!(close || typo, "{o}: {p} vs published {q}");
                }
            }
        }
        // the printed ex4_1_5 point itself is not stationary
        let printed = Ex4_1_5.gradient(&[1.74755, 0.97378]).unwrap();
        assert!(inf_norm(&printed) > 0.1);
    }

    #[test]
    fn variable_dimension_minimizers() {
        for n in [2, 3, 7] {
            for o in [ExtendedRosenbrock, QuarticPolynomial] {
                let x = o.anchor(n).unwrap();
                assert_eq!(x, vec![1.0; n]);
                assert_eq!(inf_norm(&o.gradient(&x).unwrap()), 0.0);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for o in Objective::ALL {
            let n = o.default_dim();
            let mut checked = 0;
            while checked < 20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                if !o.is_smooth_sample(&x) {
                    continue;
                }
                let err = finite_difference_check(o, &x, 1e-6).unwrap();
                assert!(err <= 1e-5, "{o} at {x:?}: {err}");
                checked += 1;
            }
        }
    }

    #[test]
    fn quadratic_differences_are_exact() {
        // truncation error is zero; steps are large enough that rounding,
        // about eps |f| / h, stays below the bound
        for x in [[0.3, -1.7], [100.0, 2.0], [0.0, 0.0]] {
            for h in [1e-2, 0.25, 0.5, 3.0] {
                assert!(finite_difference_check(ConvexQuadratic, &x, h).unwrap() <= 1e-12);
            }
        }
        assert!(finite_difference_check(ConvexQuadratic, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn fractional_convex_is_c1_at_origin() {
        for h in [1e-4, 1e-6, 1e-8] {
            let right = FractionalConvex.evaluate(&[h, 0.0]).unwrap() / h;
            let left = -FractionalConvex.evaluate(&[-h, 0.0]).unwrap() / h;
            assert!((right - left).abs() <= 2.0 * h);
            let g = FractionalConvex.gradient(&[h, -h]).unwrap();
            assert!(g[0] > 0.0 && g[1] < 0.0 && g[0].abs() < 3.0 * h);
        }
        assert_eq!(FractionalConvex.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn pole_gives_non_finite_value() {
        // 0.1 + (x1 - 4) + (x2 - 4)^2 = 0
        let v = Ex8_1_6.evaluate(&[3.9, 4.0]).unwrap();
        assert!(!v.is_finite() || v.abs() > 1e12);
    }
}
