//! `sisctl` — solve, evaluate, and reproduce experiments from the command
//! line.
//!
//! Every command reads one JSON config (all fields optional, defaults are
//! the reference parameters) plus any number of `--set key=value` overrides,
//! where `key` may be any unambiguous suffix of a config path. Commands that
//! write artifacts place them under the configured `out_dir`, echo the
//! effective config next to them, and list every written file with its hash
//! in a manifest.
//!
//! Exit status: 0 when the run succeeded and all its checks passed, 2 when
//! the solver failed to converge or a check failed, 1 on hard errors
//! (bad config, I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sis_control::bvp::{assemble_raw, solve_tridiagonal, BoundaryValues, Grid};
use sis_control::config::{parse_config, RunConfig};
use sis_control::experiments::{
    self, all_pass, run_benchmark, run_perturbation, run_solve, run_suboptimal, run_sweep, Check,
    SweepParameter,
};
use sis_control::mc::{estimate_cost, ConstantPolicy, StreamPurpose};
use sis_control::model::{diffusion, drift, ControlPair};
use sis_control::pia::{self, Hold};
use sis_control::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sisctl",
    version,
    about = "Optimal activity and mitigation control of a stochastic infection model"
)]
struct Cli {
    /// Config file (JSON). Omitted fields fall back to the reference
    /// parameters.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config field, e.g. `--set delta=0.1` or
    /// `--set mc.seed=7`. Keys may be unambiguous path suffixes; repeatable,
    /// last one wins.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write solution artifacts.
    Solve,
    /// Estimate the discounted cost of holding one constant control pair.
    Evaluate {
        /// Initial infected fraction.
        #[arg(long, default_value_t = 0.5)]
        x0: f64,
        /// Constant activity level in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Constant mitigation rate.
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
    },
    /// Reference two-control run with level and shape checks.
    Benchmark,
    /// Single-control runs. Without flags, runs both canonical variants:
    /// mitigation pinned to 0, then activity pinned to 1.
    Suboptimal {
        /// Pin the activity level to this value and improve mitigation only.
        #[arg(long, value_name = "ETA", conflicts_with = "fix_rho")]
        fix_eta: Option<f64>,
        /// Pin the mitigation rate to this value and improve activity only.
        #[arg(long, value_name = "RHO")]
        fix_rho: Option<f64>,
    },
    /// Solve, then price uniformly shifted copies of the converged policy.
    Perturb,
    /// Independent runs across one parameter grid.
    Sweep {
        /// Parameter to vary; falls back to `experiment.sweep_parameter`.
        #[arg(long, value_name = "NAME")]
        parameter: Option<String>,
    },
    /// Run the solver's oracle suite on the configured problem and print a
    /// pass/fail table.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = parse_config(cli.config.as_deref(), &cli.set)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    dispatch(&cli.command, &cfg)
}

fn print_checks(checks: &[Check]) {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        let tag = if c.pass { "pass" } else { "FAIL" };
        println!("  [{tag}] {:<width$}  {}", c.name, c.detail);
    }
}

fn verdict(checks: &[Check]) -> ExitCode {
    if all_pass(checks) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<ExitCode> {
    let out_root = PathBuf::from(&cfg.out_dir);
    match cmd {
        Command::Solve => {
            let art = run_solve(cfg, &out_root)?;
            println!("wrote {}", art.dir.display());
            print_checks(&art.summary.checks);
            summary_line(&art.summary);
            Ok(verdict(&art.summary.checks))
        }
        Command::Evaluate { x0, eta, rho } => {
            if !(0.0..=1.0).contains(eta) {
                return Err(Error::invalid("eta", "must lie in [0, 1]"));
            }
            if !(0.0..=cfg.rho_max).contains(rho) {
                return Err(Error::invalid("rho", "must lie in [0, rho_max]"));
            }
            if !(*x0 > 0.0 && *x0 < 1.0) {
                return Err(Error::invalid("x0", "must lie in (0, 1)"));
            }
            let policy = ConstantPolicy(ControlPair::new(*eta, *rho));
            let est = estimate_cost(
                *x0,
                &policy,
                &cfg.problem(),
                &cfg.pia.mc,
                StreamPurpose::Probe(0),
            );
            println!(
                "J({x0}) under constant (eta = {eta}, rho = {rho}):\n\
                 \x20 mean       {}\n\
                 \x20 std err    {}\n\
                 \x20 tail bound {}\n\
                 \x20 horizon    {} ({} paths, {} clamps)",
                est.mean, est.std_err, est.tail_bound, est.horizon, est.n_paths, est.clamp_count
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Benchmark => {
            let art = run_benchmark(cfg, &out_root)?;
            println!("wrote {}", art.dir.display());
            print_checks(&art.summary.checks);
            summary_line(&art.summary);
            Ok(verdict(&art.summary.checks))
        }
        Command::Suboptimal { fix_eta, fix_rho } => {
            let holds: Vec<Hold> = match (fix_eta, fix_rho) {
                (Some(e), None) => vec![Hold::FixEta(*e)],
                (None, Some(r)) => vec![Hold::FixRho(*r)],
                (None, None) => vec![Hold::FixRho(0.0), Hold::FixEta(1.0)],
                (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
            };
            let mut checks = Vec::new();
            for hold in holds {
                let art = run_suboptimal(cfg, &out_root, hold)?;
                println!("wrote {}", art.dir.display());
                print_checks(&art.summary.checks);
                summary_line(&art.summary);
                checks.extend(art.summary.checks);
            }
            Ok(verdict(&checks))
        }
        Command::Perturb => {
            let grid = cfg.grid.build()?;
            let problem = cfg.problem();
            let base = pia::run(grid, &problem, &cfg.pia, Hold::Free)?;
            if !base.converged {
                eprintln!(
                    "base solve missed the stopping rule after {} iterations",
                    base.iterations
                );
                return Ok(ExitCode::from(2));
            }
            let report = run_perturbation(cfg, &out_root, &base)?;
            for dir in &report.dirs {
                println!("wrote {}", dir.display());
            }
            print_checks(&report.checks);
            Ok(verdict(&report.checks))
        }
        Command::Sweep { parameter } => {
            let name = parameter
                .clone()
                .or_else(|| cfg.experiment.sweep_parameter.clone())
                .ok_or_else(|| {
                    Error::invalid(
                        "experiment.sweep_parameter",
                        "sweep needs a parameter (flag --parameter or config key)",
                    )
                })?;
            let parameter = SweepParameter::parse(&name)?;
            let values = cfg
                .experiment
                .sweep_values
                .clone()
                .unwrap_or_else(|| parameter.default_values(cfg));
            let report = run_sweep(cfg, &out_root, parameter, &values)?;
            println!("wrote {}", report.dir.display());
            println!(
                "  {} of {} runs converged; largest interior control shift {:.4}",
                report.runs.len(),
                values.len(),
                report.max_control_shift
            );
            print_checks(&report.checks);
            Ok(verdict(&report.checks))
        }
        Command::Validate => validate(cfg),
    }
}

fn summary_line(summary: &experiments::RunSummary) {
    println!(
        "  {}: {} in {} iterations; value range [{:.4}, {:.4}]",
        summary.label,
        if summary.converged {
            "converged"
        } else {
            "stopping rule unmet"
        },
        summary.iterations,
        summary.v_min,
        summary.v_max,
    );
}

/// The oracle suite: cases with independently known answers, run against the
/// configured numerics so a misconfiguration (too-coarse grid, too-short
/// horizon) is caught before a long experiment.
fn validate(cfg: &RunConfig) -> Result<ExitCode> {
    let mut checks = Vec::new();

    // A state-independent cost rate decouples the value from the dynamics:
    // the solution is a0/delta everywhere, so solver, boundary estimation,
    // and simulation must all land on it.
    let mut flat = cfg.clone();
    flat.cost.a_i = 0.0;
    flat.cost.a_m_i = 0.0;
    flat.cost.a_m_s = 0.0;
    flat.cost.a_r = 0.0;
    let target = flat.cost.a0 / flat.model.delta;
    let grid = flat.grid.build()?;
    let problem = flat.problem();
    match pia::run(grid, &problem, &flat.pia, Hold::Free) {
        Ok(res) => {
            let err = res
                .value
                .values
                .iter()
                .fold(0.0f64, |m, v| m.max((v - target).abs()));
            // The only error sources are the boundary estimate's noise, its
            // truncated tail, and the quadrature bias of one step.
            let tol = 3.0 * res.boundary.dirichlet_std_err
                + res.boundary.tail_bound
                + flat.cost.a0 * flat.pia.mc.dt;
            checks.push(Check {
                name: format!("flat-cost solve lands on a0/delta = {target}"),
                pass: res.converged && err <= tol,
                detail: format!("max error {err:.3e} (tolerance {tol:.3e})"),
            });
            let probes = pia::mc_cross_validate(
                &res.value,
                &res.policy,
                &problem,
                &flat.pia.mc,
                &flat.experiment.probes,
            );
            for p in probes {
                checks.push(Check {
                    name: format!("flat-cost simulation cross-check at x = {:.2}", p.x),
                    pass: p.pass,
                    detail: format!(
                        "table {:.4} vs simulated {:.4} (tolerance {:.4})",
                        p.value, p.estimate, p.tolerance
                    ),
                });
            }
        }
        Err(e) => checks.push(Check {
            name: "flat-cost solve lands on a0/delta".into(),
            pass: false,
            detail: format!("solve failed: {e}"),
        }),
    }

    checks.push(refinement_check(cfg));

    // Simulation against the linear solve on the configured problem, under
    // the cheapest admissible policy: no optimality involved, so any gap is
    // a numerics problem.
    let grid = cfg.grid.build()?;
    let problem = cfg.problem();
    let policy = sis_control::bvp::PolicyField::constant(grid, ControlPair::NO_ACTION);
    match pia::evaluate_policy(grid, &policy, &problem, &cfg.pia.mc) {
        Ok((value, _)) => {
            for p in pia::mc_cross_validate(
                &value,
                &policy,
                &problem,
                &cfg.pia.mc,
                &cfg.experiment.probes,
            ) {
                checks.push(Check {
                    name: format!("no-action policy cross-check at x = {:.2}", p.x),
                    pass: p.pass,
                    detail: format!(
                        "table {:.4} vs simulated {:.4} (tolerance {:.4})",
                        p.value, p.estimate, p.tolerance
                    ),
                });
            }
        }
        Err(e) => checks.push(Check {
            name: "no-action policy cross-check".into(),
            pass: false,
            detail: format!("evaluation failed: {e}"),
        }),
    }

    print_checks(&checks);
    let pass = all_pass(&checks);
    println!("overall: {}", if pass { "pass" } else { "FAIL" });
    Ok(verdict(&checks))
}

/// Force the solution x^2 by choosing the cost rate accordingly, on the
/// configured dynamics; halving the spacing must shrink the max error by
/// the scheme's first-order factor.
fn refinement_check(cfg: &RunConfig) -> Check {
    let name = "grid refinement shrinks the forced-solution error".to_string();
    let p = cfg.model;
    let u = ControlPair::new(0.5, 0.3);
    let mut errs = Vec::new();
    for n in [500usize, 1000] {
        let grid = match Grid::new(0.01, 0.99, n) {
            Ok(g) => g,
            Err(e) => {
                return Check {
                    name,
                    pass: false,
                    detail: format!("grid failed: {e}"),
                }
            }
        };
        let nodes = grid.nodes();
        let b: Vec<f64> = nodes.iter().map(|&x| drift(x, u, &p)).collect();
        let s2: Vec<f64> = nodes
            .iter()
            .map(|&x| diffusion(x, &p) * diffusion(x, &p))
            .collect();
        let f: Vec<f64> = nodes
            .iter()
            .zip(&b)
            .zip(&s2)
            .map(|((&x, &bi), &s2i)| p.delta * x * x - bi * 2.0 * x - s2i)
            .collect();
        let bc = BoundaryValues {
            dirichlet: grid.lo() * grid.lo(),
            neumann: 2.0 * grid.hi(),
        };
        let solved = assemble_raw(&grid, &b, &s2, &f, p.delta, bc).and_then(|sys| {
            let v = solve_tridiagonal(&sys)?;
            Ok(v.iter()
                .zip(&nodes)
                .map(|(vi, &x)| (vi - x * x).abs())
                .fold(0.0f64, f64::max))
        });
        match solved {
            Ok(e) => errs.push(e),
            Err(e) => {
                return Check {
                    name,
                    pass: false,
                    detail: format!("solve failed: {e}"),
                }
            }
        }
    }
    let ratio = errs[0] / errs[1];
    Check {
        name,
        pass: ratio >= 1.8,
        detail: format!(
            "max error {:.3e} at n=500 vs {:.3e} at n=1000 (ratio {ratio:.2})",
            errs[0], errs[1]
        ),
    }
}
