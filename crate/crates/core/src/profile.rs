//! Dolan–Moré performance profiles over wall-clock time.
//!
//! For problem `p` and solver `s` the ratio is `t_ps / min_s t_ps`, with
//! unsolved runs at `+∞`; the profile `ρ_s(τ)` is the fraction of problems
//! with ratio at most `τ`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alm::RunReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub problem: String,
    pub solver: String,
    /// `None` for an unsolved run.
    pub time: Option<f64>,
}

impl ProfileEntry {
    /// Problem key is the instance plus the run seed; the solver key is the
    /// mode, with the refinement size for the proposed method.
    pub fn from_report(report: &RunReport) -> Self {
        let problem = format!(
            "{}-m{}-n{}-i{}-s{}",
            report.objective, report.m, report.n, report.instance_seed, report.config.seed
        );
        let solver = match report.config.mode {
            crate::alm::Mode::Proposed => format!("proposed-z{}", report.config.zeta),
            crate::alm::Mode::Standard => "standard".to_string(),
        };
        Self {
            problem,
            solver,
            time: report.success().then_some(report.wall_time),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub solver: String,
    pub tau: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceProfile {
    pub problems: Vec<String>,
    /// Ratios per solver, in the order of `problems`.
    pub ratios: BTreeMap<String, Vec<f64>>,
}

impl PerformanceProfile {
    pub fn build(entries: &[ProfileEntry]) -> Result<Self> {
        let mut table: BTreeMap<&str, BTreeMap<&str, Option<f64>>> = BTreeMap::new();
        for e in entries {
            if let Some(t) = e.time {
                if !(t.is_finite() && t > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "time of {} on {} must be positive, got {t}",
                        e.solver, e.problem
                    )));
                }
            }
            let row = table.entry(&e.solver).or_default();
            if row.insert(&e.problem, e.time).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate run of {} on {}",
                    e.solver, e.problem
                )));
            }
        }
        let Some(first) = table.values().next() else {
            return Err(Error::InvalidArgument("no runs to profile".into()));
        };
        let problems: BTreeSet<&str> = first.keys().copied().collect();
        for (solver, row) in &table {
            let own: BTreeSet<&str> = row.keys().copied().collect();
            if own != problems {
                return Err(Error::InvalidArgument(format!(
                    "solver {solver} ran a different problem set"
                )));
            }
        }
        let best: Vec<f64> = problems
            .iter()
            .map(|p| table.values().filter_map(|row| row[p]).fold(f64::INFINITY, f64::min))
            .collect();
        let ratios = table
            .iter()
            .map(|(solver, row)| {
                let r = problems
                    .iter()
                    .zip(&best)
                    .map(|(p, b)| row[p].map_or(f64::INFINITY, |t| t / b))
                    .collect();
                (solver.to_string(), r)
            })
            .collect();
        Ok(Self {
            problems: problems.into_iter().map(String::from).collect(),
            ratios,
        })
    }

    pub fn from_reports(reports: &[RunReport]) -> Result<Self> {
        let entries: Vec<ProfileEntry> = reports.iter().map(ProfileEntry::from_report).collect();
        Self::build(&entries)
    }

    pub fn solvers(&self) -> impl Iterator<Item = &str> {
        self.ratios.keys().map(String::as_str)
    }

    /// `ρ_s(τ)`; `None` for an unknown solver.
    pub fn rho(&self, solver: &str, tau: f64) -> Option<f64> {
        let r = self.ratios.get(solver)?;
        let hits = r.iter().filter(|&&x| x <= tau).count();
        Some(hits as f64 / r.len() as f64)
    }

    /// Step points of every profile: `τ = 1` and each distinct finite ratio.
    pub fn points(&self) -> Vec<ProfilePoint> {
        let mut out = Vec::new();
        for (solver, r) in &self.ratios {
            let mut taus: Vec<f64> = r.iter().copied().filter(|x| x.is_finite()).collect();
            taus.push(1.0);
            taus.sort_by(f64::total_cmp);
            taus.dedup();
            for tau in taus {
                out.push(ProfilePoint {
                    solver: solver.clone(),
                    tau,
                    rho: self.rho(solver, tau).expect("known solver"),
                });
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in self.points() {
            w.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(problem: &str, solver: &str, time: Option<f64>) -> ProfileEntry {
        ProfileEntry {
            problem: problem.into(),
            solver: solver.into(),
            time,
        }
    }

    #[test]
    fn twice_slower_solver_steps_at_two() {
        let mut e = Vec::new();
        for (p, t) in [("a", 1.0), ("b", 3.0), ("c", 0.5)] {
            e.push(entry(p, "fast", Some(t)));
            e.push(entry(p, "slow", Some(2.0 * t)));
        }
        let prof = PerformanceProfile::build(&e).unwrap();
        assert_eq!(prof.rho("fast", 1.0), Some(1.0));
        assert_eq!(prof.rho("slow", 1.0), Some(0.0));
        assert_eq!(prof.rho("slow", 1.999), Some(0.0));
        assert_eq!(prof.rho("slow", 2.0), Some(1.0));
        let slow: Vec<(f64, f64)> = prof
            .points()
            .into_iter()
            .filter(|p| p.solver == "slow")
            .map(|p| (p.tau, p.rho))
            .collect();
        assert_eq!(slow, vec![(1.0, 0.0), (2.0, 1.0)]);
    }

    #[test]
    fn failures_cap_the_profile() {
        let e = vec![
            entry("a", "s1", Some(1.0)),
            entry("a", "s2", None),
            entry("b", "s1", Some(2.0)),
            entry("b", "s2", Some(1.0)),
        ];
        let prof = PerformanceProfile::build(&e).unwrap();
        assert_eq!(prof.ratios["s2"][0], f64::INFINITY);
        assert_eq!(prof.rho("s2", 1e300), Some(0.5));
        assert_eq!(prof.rho("s1", 2.0), Some(1.0));
    }

    #[test]
    fn single_solver_starts_at_solved_fraction() {
        let e = vec![
            entry("a", "s", Some(1.0)),
            entry("b", "s", None),
            entry("c", "s", Some(4.0)),
            entry("d", "s", Some(0.1)),
        ];
        let prof = PerformanceProfile::build(&e).unwrap();
        assert_eq!(prof.rho("s", 1.0), Some(0.75));
        assert!(prof.points().iter().all(|p| p.rho == 0.75));
    }

    #[test]
    fn problem_unsolved_by_everyone_is_infinite_for_all() {
        let e = vec![entry("a", "s1", None), entry("a", "s2", None)];
        let prof = PerformanceProfile::build(&e).unwrap();
        assert!(prof.ratios.values().all(|r| r[0].is_infinite()));
    }

    #[test]
    fn mismatched_problem_sets_are_rejected() {
        let e = vec![entry("a", "s1", Some(1.0)), entry("b", "s2", Some(1.0))];
        assert!(PerformanceProfile::build(&e).is_err());
        let dup = vec![entry("a", "s1", Some(1.0)), entry("a", "s1", Some(2.0))];
        assert!(PerformanceProfile::build(&dup).is_err());
        assert!(PerformanceProfile::build(&[]).is_err());
        assert!(PerformanceProfile::build(&[entry("a", "s", Some(0.0))]).is_err());
    }

    #[test]
    fn csv_lists_step_points() {
        let e = vec![entry("a", "x", Some(1.0)), entry("a", "y", Some(3.0))];
        let mut buf = Vec::new();
        PerformanceProfile::build(&e).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "solver,tau,rho\nx,1.0,1.0\ny,1.0,0.0\ny,3.0,1.0\n");
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn profiles_are_nondecreasing_and_end_at_solved_fraction(
            times in prop::collection::vec((prop::option::weighted(0.8, 0.01f64..100.0), prop::option::weighted(0.8, 0.01f64..100.0)), 1..12)
        ) {
            let mut e = Vec::new();
            for (i, (a, b)) in times.iter().enumerate() {
                e.push(entry(&format!("p{i}"), "a", *a));
                e.push(entry(&format!("p{i}"), "b", *b));
            }
            let prof = PerformanceProfile::build(&e).unwrap();
            for solver in ["a", "b"] {
                let pts: Vec<ProfilePoint> = prof.points().into_iter().filter(|p| p.solver == solver).collect();
                prop_assert!(pts.windows(2).all(|w| w[0].tau < w[1].tau && w[0].rho <= w[1].rho));
                let solved = times.iter().filter(|t| if solver == "a" { t.0.is_some() } else { t.1.is_some() }).count();
                let frac = solved as f64 / times.len() as f64;
                prop_assert!((pts.last().unwrap().rho - frac).abs() < 1e-15);
                prop_assert!((prof.rho(solver, f64::MAX).unwrap() - frac).abs() < 1e-15);
            }
        }
    }
}
