mod batch;
mod flags;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use polyalm::alm::{penalty_method_diagnostic, AugmentedLagrangian};
use polyalm::checks::{run_checks, CheckLevel, Fault};
use polyalm::{
    finite_difference_check, generate_instance, io, run_alm, Mode, Objective, PerformanceProfile, PolyhedralConeApprox,
    ProblemInstance, SimplexGrid, SymMatrix, Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use batch::{collect_reports, run_batch, ExperimentConfig};
use flags::{parse_list, ConfigFlags};

#[derive(Parser)]
#[command(
    name = "polyalm",
    version,
    about = "Augmented Lagrangian solver for copositive-constrained problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test instance with a known solution
    Gen {
        #[arg(long)]
        objective: Objective,
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Number of variables (fixed for most objectives)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance; exit status 0 success, 2 fail policy, 3 iteration cap
    Run {
        instance: PathBuf,
        #[command(flatten)]
        config: ConfigFlags,
        /// Seed of the random starting point (defaults to the instance seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report.json and iterations.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve an experiment matrix in parallel
    Batch {
        /// Experiment file; the list flags below are ignored when given
        #[arg(long)]
        config: Option<PathBuf>,
        /// Objective ids separated by commas, or `all`
        #[arg(long, default_value = "all")]
        objective: String,
        #[arg(long, default_value = "3")]
        m: String,
        #[arg(long, default_value = "1-3")]
        seeds: String,
        #[arg(long, default_value = "proposed,standard")]
        modes: String,
        /// Refinement sizes for proposed mode, one run each
        #[arg(long)]
        zetas: Option<String>,
        #[command(flatten)]
        overrides: ConfigFlags,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Performance profile over wall-clock time from a directory of reports
    Profile {
        reports: PathBuf,
        /// Output CSV; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites
    Check {
        #[arg(long, default_value = "full")]
        level: CheckLevel,
        /// Corrupt one quantity to test the harness
        #[arg(long, hide = true)]
        inject: Option<Fault>,
    },
    /// Compare analytic gradients with central differences
    Fdcheck {
        /// Objective id or `all`
        #[arg(long, default_value = "all")]
        objective: String,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also check the augmented Lagrangian of this instance
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Print the size of a simplex grid, optionally dumping its points
    Grid {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        rmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// External penalty sequence around an anchor point
    Penalty {
        instance: PathBuf,
        /// Radius of the ball around the anchor
        #[arg(long, default_value_t = 1e3)]
        delta: f64,
        /// Penalty parameters, 1, 10, ..., up to this value
        #[arg(long, default_value_t = 1e8)]
        rho_max: f64,
        /// Anchor (comma separated); the instance's solution when absent
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long)]
        rmax: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn read_instance(path: &PathBuf) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = ProblemInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    inst.validate()?;
    Ok(inst)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn objectives(list: &str) -> Result<Vec<Objective>> {
    if list == "all" {
        return Ok(Objective::ALL.to_vec());
    }
    list.split(',').map(|s| Ok(s.trim().parse()?)).collect()
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            objective,
            m,
            n,
            seed,
            out,
        } => {
            let n = n.unwrap_or(objective.default_dim());
            let inst = generate_instance(objective, m, n, seed)?;
            emit(out.as_ref(), &(inst.to_json()? + "\n"))?;
        }
        Command::Run {
            instance,
            config,
            seed,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let config = config.config(inst.m, seed.unwrap_or(inst.seed));
            let report = run_alm(&inst, &config)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), report.to_json()? + "\n")?;
            fs::write(out.join("iterations.csv"), io::iterations_csv(&report.records)?)?;
            let last = report.last();
            println!(
                "{:?} after {} iterations: grad {:.2e}, v_max {:.2e}, |J| = {}, distance to S+ + N {}, {:.2}s",
                report.termination,
                report.outer_iterations,
                last.grad_norm,
                last.v_max,
                last.active_count,
                report.distance_to_spn.map_or("n/a".into(), |d| format!("{d:.2e}")),
                report.wall_time
            );
            return Ok(ExitCode::from(match report.termination {
                Termination::Success => 0,
                Termination::FailPolicy => 2,
                Termination::MaxOuter => 3,
            }));
        }
        Command::Batch {
            config,
            objective,
            m,
            seeds,
            modes,
            zetas,
            overrides,
            jobs,
            out,
        } => {
            let exp = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ExperimentConfig>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => ExperimentConfig {
                    objectives: objectives(&objective)?,
                    orders: parse_list(&m).map_err(anyhow::Error::msg)?,
                    seeds: parse_list(&seeds).map_err(anyhow::Error::msg)?,
                    modes: modes
                        .split(',')
                        .map(|s| Ok(s.trim().parse::<Mode>()?))
                        .collect::<Result<_>>()?,
                    zetas: zetas
                        .map(|z| parse_list(&z))
                        .transpose()
                        .map_err(anyhow::Error::msg)?
                        .unwrap_or_default(),
                    overrides,
                    out,
                },
            };
            if jobs == 0 {
                bail!("--jobs must be at least 1");
            }
            let reports = run_batch(&exp, jobs)?;
            let solved = reports.iter().filter(|r| r.success()).count();
            println!(
                "{solved}/{} runs solved; results in {}",
                reports.len(),
                exp.out.display()
            );
        }
        Command::Profile { reports, out } => {
            let runs = collect_reports(&reports)?;
            if runs.is_empty() {
                bail!("no run reports under {}", reports.display());
            }
            let profile = PerformanceProfile::from_reports(&runs)?;
            let mut buf = Vec::new();
            profile.write_csv(&mut buf)?;
            emit(out.as_ref(), &String::from_utf8(buf)?)?;
        }
        Command::Check { level, inject } => {
            let outcomes = run_checks(level, inject);
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                if o.detail.is_empty() {
                    println!("{tag} [{}] {}", o.suite, o.invariant);
                } else {
                    println!("{tag} [{}] {} ({})", o.suite, o.invariant, o.detail);
                }
            }
            println!("{} checks, {failed} failed", outcomes.len());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Fdcheck {
            objective,
            points,
            h,
            seed,
            instance,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ok = true;
            for o in objectives(&objective)? {
                let n = o.default_dim();
                let mut worst = 0.0_f64;
                let mut done = 0;
                while done < points {
                    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    if o.is_smooth_sample(&x) {
                        worst = worst.max(finite_difference_check(o, &x, h)?);
                        done += 1;
                    }
                }
                ok &= worst <= 1e-5;
                println!("{o:8} {worst:.3e}");
            }
            if let Some(path) = instance {
                let worst = augmented_lagrangian_fd(&read_instance(&path)?, points, h, &mut rng)?;
                ok &= worst <= 1e-5;
                println!("{:8} {worst:.3e}", "AL");
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Grid { m, rmax, out } => {
            let grid = SimplexGrid::build(m, rmax)?;
            let sizes: Vec<String> = (0..=rmax).map(|r| grid.shell_range(r).len().to_string()).collect();
            println!("|δ^{m}_{rmax}| = {} (shells {})", grid.len(), sizes.join(" "));
            if let Some(p) = out {
                fs::write(&p, serde_json::to_string(&grid.to_dump())? + "\n")?;
            }
        }
        Command::Penalty {
            instance,
            delta,
            rho_max,
            anchor,
            rmax,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let anchor: Vec<f64> = match anchor {
                Some(a) => a
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()?,
                None => inst.x_star.clone(),
            };
            let grid = SimplexGrid::build(inst.m, rmax.unwrap_or(polyalm::AlmConfig::for_order(inst.m).r_max))?;
            let cone = PolyhedralConeApprox::new(&grid, grid.len())?;
            let schedule: Vec<f64> = (0..)
                .map(|k| 10f64.powi(k))
                .take_while(|r| *r <= rho_max * (1.0 + 1e-12))
                .collect();
            let records = penalty_method_diagnostic(&inst, &cone, &anchor, delta, &schedule)?;
            let mut text = String::from("rho,infeasibility,stationarity,iterations,converged\n");
            for r in &records {
                text += &format!(
                    "{},{},{},{},{}\n",
                    r.rho, r.infeasibility, r.stationarity, r.iterations, r.converged
                );
            }
            emit(out.as_ref(), &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Largest relative central-difference error of the augmented Lagrangian at
/// random points, with a random polar multiplier and the full grid.
fn augmented_lagrangian_fd(inst: &ProblemInstance, points: usize, h: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let grid = SimplexGrid::build(inst.m, polyalm::AlmConfig::for_order(inst.m).r_max)?;
    let cone = PolyhedralConeApprox::new(&grid, grid.len())?;
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let data: Vec<f64> = (0..inst.m * inst.m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu_hat = cone.project_polar(&SymMatrix::symmetrized(inst.m, &data), None)?.polar;
        let al = AugmentedLagrangian::new(inst, &cone, &mu_hat, rng.gen_range(0.5..5.0), 1.0)?;
        let x: Vec<f64> = inst.x_star.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        let grad = al.gradient(&x)?;
        for i in 0..x.len() {
            let step = h * x[i].abs().max(1.0);
            let mut up = x.clone();
            up[i] += step;
            let mut down = x.clone();
            down[i] -= step;
            let fd = (al.evaluate(&up)?.shifted_value - al.evaluate(&down)?.shifted_value) / (2.0 * step);
            worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
        }
    }
    Ok(worst)
}
