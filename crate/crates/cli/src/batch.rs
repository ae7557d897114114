use std::collections::hash_map::Entry;
use std::collections::{btree_map, BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use polyalm::alm::run_alm_on_grid;
use polyalm::{generate_instance, io, Mode, Objective, ProblemInstance, RunReport, SimplexGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flags::ConfigFlags;

/// The experiment matrix: every objective at every order, seed, mode and
/// refinement size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objectives: Vec<Objective>,
    pub orders: Vec<usize>,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    /// Refinement sizes for proposed mode; empty means the order's default.
    #[serde(default)]
    pub zetas: Vec<usize>,
    #[serde(default)]
    pub overrides: ConfigFlags,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub objective: Objective,
    pub m: usize,
    pub seed: u64,
    pub flags: ConfigFlags,
}

impl Job {
    pub fn label(&self) -> String {
        let c = self.flags.config(self.m, self.seed);
        let solver = match c.mode {
            Mode::Proposed => format!("proposed-z{}", c.zeta),
            Mode::Standard => "standard".into(),
        };
        format!("{}-m{}-s{}-{solver}", self.objective, self.m, self.seed)
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    objective: String,
    m: usize,
    n: usize,
    seed: u64,
    mode: Mode,
    zeta: usize,
    termination: polyalm::Termination,
    outer_iterations: usize,
    inner_failures: usize,
    grad_norm: f64,
    v_max: f64,
    active_count: usize,
    distance_to_spn: Option<f64>,
    wall_time: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() || self.orders.is_empty() || self.seeds.is_empty() || self.modes.is_empty() {
            bail!("objectives, orders, seeds and modes must be nonempty");
        }
        if self.zetas.contains(&0) || self.overrides.zeta == Some(0) {
            bail!("zeta must be at least 1");
        }
        Ok(())
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &objective in &self.objectives {
            for &m in &self.orders {
                for &seed in &self.seeds {
                    for &mode in &self.modes {
                        let zetas: Vec<Option<usize>> = match mode {
                            Mode::Proposed if !self.zetas.is_empty() => self.zetas.iter().map(|z| Some(*z)).collect(),
                            _ => vec![self.overrides.zeta],
                        };
                        for zeta in zetas {
                            let flags = ConfigFlags {
                                mode: Some(mode),
                                zeta,
                                ..self.overrides.clone()
                            };
                            jobs.push(Job {
                                objective,
                                m,
                                seed,
                                flags,
                            });
                        }
                    }
                }
            }
        }
        jobs
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs every job on a pool of `jobs` workers; instances are generated once
/// per (objective, order, seed) and grids once per (order, r_max).
pub fn run_batch(exp: &ExperimentConfig, workers: usize) -> Result<Vec<RunReport>> {
    exp.validate()?;
    let jobs = exp.jobs();
    let runs_dir = exp.out.join("runs");
    let inst_dir = exp.out.join("instances");
    fs::create_dir_all(&runs_dir)?;
    fs::create_dir_all(&inst_dir)?;

    let mut instances: HashMap<(Objective, usize, u64), Arc<ProblemInstance>> = HashMap::new();
    let mut grids: BTreeMap<(usize, usize), Arc<SimplexGrid>> = BTreeMap::new();
    for job in &jobs {
        let key = (job.objective, job.m, job.seed);
        if let Entry::Vacant(slot) = instances.entry(key) {
            let inst = generate_instance(job.objective, job.m, job.objective.default_dim(), job.seed)?;
            write(
                &inst_dir.join(format!("{}-m{}-s{}.json", job.objective, job.m, job.seed)),
                &(inst.to_json()? + "\n"),
            )?;
            slot.insert(Arc::new(inst));
        }
        let r_max = job.flags.config(job.m, job.seed).r_max;
        if let btree_map::Entry::Vacant(slot) = grids.entry((job.m, r_max)) {
            slot.insert(Arc::new(SimplexGrid::build(job.m, r_max)?));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let reports: Vec<Result<RunReport>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let config = job.flags.config(job.m, job.seed);
                let inst = &instances[&(job.objective, job.m, job.seed)];
                let grid = &grids[&(job.m, config.r_max)];
                let report = run_alm_on_grid(inst, &config, grid)?;
                let label = job.label();
                write(&runs_dir.join(format!("{label}.json")), &(report.to_json()? + "\n"))?;
                write(
                    &runs_dir.join(format!("{label}.csv")),
                    &io::iterations_csv(&report.records)?,
                )?;
                Ok(report)
            })
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

    let mut w = csv::Writer::from_path(exp.out.join("summary.csv"))?;
    for r in &reports {
        let last = r.last();
        w.serialize(SummaryRow {
            objective: r.objective.clone(),
            m: r.m,
            n: r.n,
            seed: r.instance_seed,
            mode: r.config.mode,
            zeta: r.config.zeta,
            termination: r.termination,
            outer_iterations: r.outer_iterations,
            inner_failures: r.inner_failures,
            grad_norm: last.grad_norm,
            v_max: last.v_max,
            active_count: last.active_count,
            distance_to_spn: r.distance_to_spn,
            wall_time: r.wall_time,
        })?;
    }
    w.flush()?;
    Ok(reports)
}

/// Every run report below `dir`; other JSON files (instances, configs) are
/// skipped.
pub fn collect_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&d)
            .with_context(|| format!("reading {}", d.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&p)?;
                if let Ok(r) = RunReport::from_json(&text) {
                    out.push(r);
                }
            }
        }
    }
    Ok(out)
}
