//! Reproducible experiment drivers.
//!
//! Each driver runs the solver under one scenario and writes a directory of
//! artifacts: per-node CSV tables, SVG figures, the echoed effective
//! config, and a manifest with content hashes. Everything written is a pure
//! function of the config record, so rerunning a directory reproduces it
//! byte for byte — that property is what makes the run directories citable.
//!
//! Layout: `<out>/<experiment>/<variant>/…`, e.g.
//! `runs/sweep/alpha/alpha=0.25.csv` or `runs/perturb/eta/offset=+0.05.csv`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bvp::{Grid, PolicyField, ValueField};
use crate::config::{sha256_hex, RunConfig};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::pia::{
    self, evaluate_policy, fit_rate, hjb_residual, max_interior_residual, mc_cross_validate,
    FitRate, Hold, PiaResult, DISCRETIZATION_ALLOWANCE,
};
use crate::plot::{LinePlot, Series};

/// Fraction of nodes ignored at each edge by interior diagnostics.
pub const EDGE_EXCLUSION: f64 = 0.05;
/// Tolerance band, in control units, for directional comparisons.
pub const DIRECTION_BAND: f64 = 1e-3;

/// One named pass/fail diagnostic attached to a run.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// One per-node record of the solution table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TableRow {
    pub x: f64,
    pub v: f64,
    pub eta: f64,
    pub rho: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundarySummary {
    pub dirichlet: f64,
    pub neumann: f64,
    pub dirichlet_std_err: f64,
    pub neumann_std_err: f64,
    pub tail_bound: f64,
}

/// Condensed outcome of one solver run, embedded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub converged: bool,
    pub iterations: usize,
    pub errors: Vec<f64>,
    pub rate: Option<FitRate>,
    pub boundary: Option<BoundarySummary>,
    pub max_interior_residual: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_at_hi: f64,
    pub checks: Vec<Check>,
}

/// A finished run: its table, its summary, and where it was written.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub label: String,
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub rows: Vec<TableRow>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    variant: &'a str,
    config_hash: String,
    mode: crate::model::UpdateMode,
    seed: u64,
    files: &'a [FileEntry],
    summaries: &'a [RunSummary],
}

/// Serialized artifact writing for one `<experiment>/<variant>` directory.
struct VariantDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl VariantDir {
    fn create(out_root: &Path, experiment: &str, variant: &str) -> Result<Self> {
        let dir = out_root.join(experiment).join(variant);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io("create run directory", &dir, e))?;
        Ok(VariantDir {
            dir,
            files: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io("write artifact", &path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: content.len() as u64,
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    fn finish(
        mut self,
        cfg: &RunConfig,
        experiment: &str,
        variant: &str,
        summaries: &[RunSummary],
    ) -> Result<(PathBuf, Vec<String>)> {
        self.emit("config.json", &cfg.to_json())?;
        let manifest = Manifest {
            experiment,
            variant,
            config_hash: cfg.content_hash(),
            mode: cfg.pia.mode,
            seed: cfg.pia.mc.seed,
            files: &self.files,
            summaries,
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, body).map_err(|e| Error::io("write manifest", &path, e))?;
        let mut names: Vec<String> = self.files.iter().map(|f| f.name.clone()).collect();
        names.push("manifest.json".to_string());
        Ok((self.dir, names))
    }
}

fn csv(rows: &[TableRow]) -> String {
    let mut out = String::from("x,v,eta,rho,residual\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x, r.v, r.eta, r.rho, r.residual
        ));
    }
    out
}

fn table(value: &ValueField, policy: &PolicyField, problem: &Problem) -> Vec<TableRow> {
    let residual = hjb_residual(value, problem);
    (0..value.grid.len())
        .map(|i| TableRow {
            x: value.grid.node(i),
            v: value.values[i],
            eta: policy.eta[i],
            rho: policy.rho[i],
            residual: residual[i],
        })
        .collect()
}

fn series_of(rows: &[TableRow], pick: impl Fn(&TableRow) -> f64, label: &str) -> Series {
    Series::new(label, rows.iter().map(|r| (r.x, pick(r))).collect())
}

fn value_plot(runs: &[(&str, &[TableRow])]) -> String {
    let mut plot = LinePlot::new("Expected discounted cost", "infected fraction x", "value");
    for (label, rows) in runs {
        plot = plot.with(series_of(rows, |r| r.v, label));
    }
    plot.render()
}

fn control_plot(runs: &[(&str, &[TableRow])], pick: fn(&TableRow) -> f64, what: &str) -> String {
    let mut plot = LinePlot::new(
        format!("Optimal {what} by state"),
        "infected fraction x",
        what,
    );
    for (label, rows) in runs {
        plot = plot.with(series_of(rows, pick, label));
    }
    plot.render()
}

fn errors_plot(runs: &[(&str, &[f64])]) -> String {
    let mut plot = LinePlot::new("Successive-value error", "iteration", "scaled l2 error").log_y();
    for (label, errors) in runs {
        let pts = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| ((i + 1) as f64, e))
            .collect();
        plot = plot.with(Series::new(*label, pts));
    }
    plot.render()
}

fn step_nondecreasing(v: &[f64], band: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - band)
}

fn step_nonincreasing(v: &[f64], band: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + band)
}

fn summarize(label: &str, res: &PiaResult, problem: &Problem, checks: Vec<Check>) -> RunSummary {
    let v = &res.value.values;
    RunSummary {
        label: label.to_string(),
        converged: res.converged,
        iterations: res.iterations,
        errors: res.trace.errors.clone(),
        rate: fit_rate(&res.trace.errors),
        boundary: Some(BoundarySummary {
            dirichlet: res.boundary.dirichlet,
            neumann: res.boundary.neumann,
            dirichlet_std_err: res.boundary.dirichlet_std_err,
            neumann_std_err: res.boundary.neumann_std_err,
            tail_bound: res.boundary.tail_bound,
        }),
        max_interior_residual: max_interior_residual(&res.value, problem, EDGE_EXCLUSION),
        v_min: v.iter().cloned().fold(f64::INFINITY, f64::min),
        v_max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        v_at_hi: *v.last().expect("nonempty grid"),
        checks,
    }
}

fn solve(cfg: &RunConfig, hold: Hold) -> Result<(PiaResult, Grid, Problem)> {
    let grid = cfg.grid.build()?;
    let problem = cfg.problem();
    let res = pia::run(grid, &problem, &cfg.pia, hold)?;
    Ok((res, grid, problem))
}

fn write_solution_dir(
    cfg: &RunConfig,
    out_root: &Path,
    experiment: &str,
    variant: &str,
    table_name: &str,
    label: &str,
    res: &PiaResult,
    problem: &Problem,
    checks: Vec<Check>,
) -> Result<RunArtifact> {
    let rows = table(&res.value, &res.policy, problem);
    let summary = summarize(label, res, problem, checks);
    let mut dir = VariantDir::create(out_root, experiment, variant)?;
    dir.emit(table_name, &csv(&rows))?;
    dir.emit("value.svg", &value_plot(&[(label, &rows)]))?;
    dir.emit(
        "controls.svg",
        &{
            let mut plot = LinePlot::new("Optimal controls", "infected fraction x", "control");
            plot = plot.with(series_of(&rows, |r| r.eta, "activity eta"));
            plot = plot.with(series_of(&rows, |r| r.rho, "mitigation rho"));
            plot.render()
        },
    )?;
    dir.emit("errors.svg", &errors_plot(&[(label, &res.trace.errors)]))?;
    let summaries = vec![summary.clone()];
    let (dir, files) = dir.finish(cfg, experiment, variant, &summaries)?;
    Ok(RunArtifact {
        label: label.to_string(),
        dir,
        files,
        rows,
        summary,
    })
}

/// Solve the configured problem and write the solution artifacts, with no
/// scenario-specific level checks attached.
pub fn run_solve(cfg: &RunConfig, out_root: &Path) -> Result<RunArtifact> {
    let (res, _, problem) = solve(cfg, Hold::Free)?;
    let checks = vec![check(
        "converged",
        res.converged,
        format!("{} iterations", res.iterations),
    )];
    write_solution_dir(
        cfg, out_root, "solve", "base", "solution.csv", "solve", &res, &problem, checks,
    )
}

/// Full two-control run on the configured problem, with the level and shape
/// checks the reference results pin down.
pub fn run_benchmark(cfg: &RunConfig, out_root: &Path) -> Result<RunArtifact> {
    let (res, grid, problem) = solve(cfg, Hold::Free)?;
    let v = &res.value.values;
    let v_hi = *v.last().expect("nonempty grid");
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let strength: Vec<f64> = res.policy.eta.iter().map(|e| 1.0 - e).collect();
    let zero_run = res.policy.eta.iter().take_while(|&&e| e == 0.0).count();
    let residual = max_interior_residual(&res.value, &problem, EDGE_EXCLUSION);
    let residual_limit = 1e-2 * problem.model.delta * res.value.max_abs();
    let rate = fit_rate(&res.trace.errors);
    let probes = mc_cross_validate(
        &res.value,
        &res.policy,
        &problem,
        &cfg.pia.mc,
        &cfg.experiment.probes,
    );

    let mut checks = vec![
        check(
            "converged",
            res.converged,
            format!("{} iterations", res.iterations),
        ),
        check(
            "iterations <= 12",
            res.iterations <= 12,
            format!("{}", res.iterations),
        ),
        check(
            "value at upper edge in [23, 33]",
            (23.0..=33.0).contains(&v_hi),
            format!("{v_hi:.4}"),
        ),
        check(
            "values within [15, 35]",
            v_min >= 15.0 && v_max <= 35.0,
            format!("[{v_min:.4}, {v_max:.4}]"),
        ),
        check(
            "value nondecreasing in x",
            step_nondecreasing(v, DIRECTION_BAND),
            String::new(),
        ),
        check(
            "full protection on a left segment",
            zero_run > 0,
            format!("eta = 0 on the first {zero_run} nodes"),
        ),
        // Direction checks run on the interior: the outermost nodes belong
        // to the scheme (one-sided stencils fed by noisy boundary data),
        // not to the policy, and get the same edge exclusion the residual
        // check uses.
        check(
            "management strength declines with x",
            step_nonincreasing(interior(&strength), DIRECTION_BAND),
            format!("outer {:.0}% of nodes per side excluded", EDGE_EXCLUSION * 100.0),
        ),
        check(
            "mitigation declines with x",
            step_nonincreasing(interior(&res.policy.rho), DIRECTION_BAND),
            format!("outer {:.0}% of nodes per side excluded", EDGE_EXCLUSION * 100.0),
        ),
        check(
            "error decay rate below 1",
            rate.map(|r| r.rate < 1.0).unwrap_or(false),
            rate.map(|r| format!("fitted rate {:.3}, r-squared {:.2}", r.rate, r.r_squared))
                .unwrap_or_else(|| "fewer than two positive updates".into()),
        ),
        check(
            "interior optimality residual small",
            residual < residual_limit,
            format!("{residual:.3e} < {residual_limit:.3e}"),
        ),
    ];
    for p in &probes {
        checks.push(check(
            format!("simulation cross-check at x = {:.2}", p.x),
            p.pass,
            format!(
                "table {:.4} vs simulated {:.4} (tolerance {:.4})",
                p.value, p.estimate, p.tolerance
            ),
        ));
    }
    let _ = grid;
    write_solution_dir(
        cfg, out_root, "benchmark", "base", "solution.csv", "benchmark", &res, &problem, checks,
    )
}

/// Single-control run: one dial is pinned for every node and every
/// iteration, the other is improved as usual.
pub fn run_suboptimal(cfg: &RunConfig, out_root: &Path, hold: Hold) -> Result<RunArtifact> {
    let (variant, table_name, label) = match hold {
        Hold::FixEta(e) => ("fix_eta", format!("eta={e}.csv"), format!("eta={e}")),
        Hold::FixRho(r) => ("fix_rho", format!("rho={r}.csv"), format!("rho={r}")),
        Hold::Free => {
            return Err(Error::invalid(
                "hold",
                "a single-control run must pin eta or rho",
            ))
        }
    };
    let (res, _, problem) = solve(cfg, hold)?;
    let v = &res.value.values;
    let v_hi = *v.last().expect("nonempty grid");
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut checks = vec![check(
        "converged",
        res.converged,
        format!("{} iterations", res.iterations),
    )];
    match hold {
        Hold::FixEta(e) => {
            checks.push(check(
                "pinned activity stored verbatim",
                res.policy.eta.iter().all(|&x| x == e),
                String::new(),
            ));
            checks.push(check(
                "values within [68, 87]",
                v_min >= 68.0 && v_max <= 87.0,
                format!("[{v_min:.4}, {v_max:.4}]"),
            ));
        }
        Hold::FixRho(r) => {
            checks.push(check(
                "pinned mitigation stored verbatim",
                res.policy.rho.iter().all(|&x| x == r),
                String::new(),
            ));
            checks.push(check(
                "value at upper edge in [48, 62]",
                (48.0..=62.0).contains(&v_hi),
                format!("{v_hi:.4}"),
            ));
        }
        Hold::Free => unreachable!(),
    }
    write_solution_dir(
        cfg, out_root, "suboptimal", variant, &table_name, &label, &res, &problem, checks,
    )
}

/// Which control a perturbation run shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    Eta,
    Rho,
}

impl PerturbTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbTarget::Eta => "eta",
            PerturbTarget::Rho => "rho",
        }
    }
}

fn offset_label(d: f64) -> String {
    if d == 0.0 {
        "offset=0".to_string()
    } else {
        format!("offset={d:+}")
    }
}

fn shifted(policy: &PolicyField, target: PerturbTarget, d: f64, rho_max: f64) -> PolicyField {
    let mut eta = policy.eta.clone();
    let mut rho = policy.rho.clone();
    match target {
        PerturbTarget::Eta => {
            for e in &mut eta {
                *e = (*e + d).clamp(0.0, 1.0);
            }
        }
        PerturbTarget::Rho => {
            for r in &mut rho {
                *r = (*r + d).clamp(0.0, rho_max);
            }
        }
    }
    PolicyField::new(policy.grid, eta, rho)
}

/// Outcome of pricing one shifted policy against the base policy.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbRun {
    pub target: PerturbTarget,
    pub offset: f64,
    /// Smallest pointwise value gap (shifted minus base); optimality of the
    /// base policy means this should not be meaningfully negative.
    pub min_gap: f64,
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct PerturbationReport {
    pub dirs: Vec<PathBuf>,
    pub runs: Vec<PerturbRun>,
    pub checks: Vec<Check>,
}

/// Price uniformly shifted copies of a converged policy, one fixed-policy
/// evaluation each — improvement never runs here. The zero offset is always
/// included; it must reproduce the base evaluation bit for bit, since it is
/// the same policy priced through the same streams.
pub fn run_perturbation(
    cfg: &RunConfig,
    out_root: &Path,
    base: &PiaResult,
) -> Result<PerturbationReport> {
    let problem = cfg.problem();
    let grid = base.value.grid;
    let h = grid.h();
    let (base_value, base_bd) = evaluate_policy(grid, &base.policy, &problem, &cfg.pia.mc)?;

    let mut offsets = vec![0.0];
    for &m in &cfg.experiment.perturb_offsets {
        offsets.push(m);
        offsets.push(-m);
    }

    let mut report = PerturbationReport {
        dirs: Vec::new(),
        runs: Vec::new(),
        checks: Vec::new(),
    };

    for target in [PerturbTarget::Eta, PerturbTarget::Rho] {
        let mut dir = VariantDir::create(out_root, "perturb", target.as_str())?;
        let mut summaries = Vec::new();
        let mut overlay: Vec<(String, Vec<TableRow>)> = Vec::new();

        for &d in &offsets {
            let policy = shifted(&base.policy, target, d, problem.rho_max);
            let (value, bd) = evaluate_policy(grid, &policy, &problem, &cfg.pia.mc)?;
            let rows = table(&value, &policy, &problem);
            let label = offset_label(d);
            dir.emit(&format!("{label}.csv"), &csv(&rows))?;

            let mut min_gap = f64::INFINITY;
            let mut max_gap = f64::NEG_INFINITY;
            for (a, b) in value.values.iter().zip(&base_value.values) {
                min_gap = min_gap.min(a - b);
                max_gap = max_gap.max(a - b);
            }
            let tolerance = 3.0
                * (base_bd.dirichlet_std_err
                    + bd.dirichlet_std_err
                    + base_bd.tail_bound
                    + bd.tail_bound)
                + DISCRETIZATION_ALLOWANCE * h;
            let pass = if d == 0.0 {
                min_gap == 0.0 && max_gap == 0.0
            } else {
                min_gap >= -tolerance
            };
            report.runs.push(PerturbRun {
                target,
                offset: d,
                min_gap,
                max_gap,
                tolerance,
                pass,
            });
            report.checks.push(check(
                format!("{} {}", target.as_str(), label),
                pass,
                if d == 0.0 {
                    format!("gap range [{min_gap:.3e}, {max_gap:.3e}], expected exactly zero")
                } else {
                    format!("min gap {min_gap:.4} >= -{tolerance:.4}")
                },
            ));
            summaries.push(RunSummary {
                label: format!("{}/{label}", target.as_str()),
                converged: true,
                iterations: 0,
                errors: Vec::new(),
                rate: None,
                boundary: Some(BoundarySummary {
                    dirichlet: bd.dirichlet,
                    neumann: bd.neumann,
                    dirichlet_std_err: bd.dirichlet_std_err,
                    neumann_std_err: bd.neumann_std_err,
                    tail_bound: bd.tail_bound,
                }),
                max_interior_residual: max_interior_residual(&value, &problem, EDGE_EXCLUSION),
                v_min: value.values.iter().cloned().fold(f64::INFINITY, f64::min),
                v_max: value
                    .values
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max),
                v_at_hi: *value.values.last().expect("nonempty grid"),
                checks: Vec::new(),
            });
            overlay.push((label, rows));
        }

        let refs: Vec<(&str, &[TableRow])> = overlay
            .iter()
            .map(|(l, r)| (l.as_str(), r.as_slice()))
            .collect();
        dir.emit("value.svg", &value_plot(&refs))?;
        let (path, _) = dir.finish(cfg, "perturb", target.as_str(), &summaries)?;
        report.dirs.push(path);
    }
    Ok(report)
}

/// The model or cost parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    Beta,
    Sigma,
    AI,
    AMI,
    AMS,
    AR,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha" => SweepParameter::Alpha,
            "beta" => SweepParameter::Beta,
            "sigma" => SweepParameter::Sigma,
            "a_i" => SweepParameter::AI,
            "a_m_i" => SweepParameter::AMI,
            "a_m_s" => SweepParameter::AMS,
            "a_r" => SweepParameter::AR,
            other => {
                return Err(Error::invalid(
                    "experiment.sweep_parameter",
                    format!(
                        "unknown parameter `{other}` (expected one of alpha, beta, sigma, a_i, a_m_i, a_m_s, a_r)"
                    ),
                ))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Beta => "beta",
            SweepParameter::Sigma => "sigma",
            SweepParameter::AI => "a_i",
            SweepParameter::AMI => "a_m_i",
            SweepParameter::AMS => "a_m_s",
            SweepParameter::AR => "a_r",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig, value: f64) {
        match self {
            SweepParameter::Alpha => cfg.model.alpha = value,
            SweepParameter::Beta => cfg.model.beta = value,
            SweepParameter::Sigma => cfg.model.sigma = value,
            SweepParameter::AI => cfg.cost.a_i = value,
            SweepParameter::AMI => cfg.cost.a_m_i = value,
            SweepParameter::AMS => cfg.cost.a_m_s = value,
            SweepParameter::AR => cfg.cost.a_r = value,
        }
    }

    fn base_value(self, cfg: &RunConfig) -> f64 {
        match self {
            SweepParameter::Alpha => cfg.model.alpha,
            SweepParameter::Beta => cfg.model.beta,
            SweepParameter::Sigma => cfg.model.sigma,
            SweepParameter::AI => cfg.cost.a_i,
            SweepParameter::AMI => cfg.cost.a_m_i,
            SweepParameter::AMS => cfg.cost.a_m_s,
            SweepParameter::AR => cfg.cost.a_r,
        }
    }

    /// The sweep grid used when the config does not pin one: the documented
    /// grids for sigma and the mitigation weight, half-to-double of the
    /// base value for the rest.
    pub fn default_values(self, cfg: &RunConfig) -> Vec<f64> {
        match self {
            SweepParameter::Sigma => vec![0.1, 0.5, 1.0, 2.0],
            SweepParameter::AR => vec![1.0, 2.5, 5.0, 7.5],
            _ => {
                let base = self.base_value(cfg);
                vec![0.5 * base, base, 1.5 * base, 2.0 * base]
            }
        }
    }
}

#[derive(Debug)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub dir: PathBuf,
    /// `(value, artifact rows)` for the runs that succeeded.
    pub runs: Vec<(f64, Vec<TableRow>, RunSummary)>,
    pub checks: Vec<Check>,
    /// Largest pointwise control shift between adjacent sweep values,
    /// measured on the interior (edge bands excluded).
    pub max_control_shift: f64,
}

fn interior<T>(rows: &[T]) -> &[T] {
    let n = rows.len();
    let skip = ((n as f64) * EDGE_EXCLUSION).floor() as usize;
    &rows[skip..n - skip]
}

/// Independent full runs across one parameter grid, with a joined
/// comparison table and the directional checks the model implies. A failed
/// run is recorded and the sweep continues.
pub fn run_sweep(
    cfg: &RunConfig,
    out_root: &Path,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<SweepReport> {
    let mut dir = VariantDir::create(out_root, "sweep", parameter.as_str())?;
    let mut summaries = Vec::new();
    let mut runs: Vec<(f64, Vec<TableRow>, RunSummary)> = Vec::new();
    let mut checks = Vec::new();

    for &value in values {
        let mut run_cfg = cfg.clone();
        parameter.apply(&mut run_cfg, value);
        let label = format!("{}={}", parameter.as_str(), value);
        match solve(&run_cfg, Hold::Free) {
            Ok((res, _, problem)) => {
                let rows = table(&res.value, &res.policy, &problem);
                dir.emit(&format!("{label}.csv"), &csv(&rows))?;
                let summary = summarize(
                    &label,
                    &res,
                    &problem,
                    vec![check(
                        "converged",
                        res.converged,
                        format!("{} iterations", res.iterations),
                    )],
                );
                summaries.push(summary.clone());
                runs.push((value, rows, summary));
            }
            Err(e) => {
                checks.push(check(label, false, format!("run failed: {e}")));
            }
        }
    }

    // Joined comparison table keyed by (parameter value, x).
    let mut cmp = String::from(format!("{},x,v,eta,rho,residual\n", parameter.as_str()));
    for (value, rows, _) in &runs {
        for r in rows {
            cmp.push_str(&format!(
                "{},{},{},{},{},{}\n",
                value, r.x, r.v, r.eta, r.rho, r.residual
            ));
        }
    }
    dir.emit("comparison.csv", &cmp)?;

    let labels: Vec<String> = runs
        .iter()
        .map(|(v, _, _)| format!("{}={}", parameter.as_str(), v))
        .collect();
    let refs: Vec<(&str, &[TableRow])> = labels
        .iter()
        .zip(&runs)
        .map(|(l, (_, rows, _))| (l.as_str(), rows.as_slice()))
        .collect();
    dir.emit("value.svg", &value_plot(&refs))?;
    dir.emit("eta.svg", &control_plot(&refs, |r| r.eta, "activity eta"))?;
    dir.emit("rho.svg", &control_plot(&refs, |r| r.rho, "mitigation rho"))?;

    let mut max_shift = 0.0f64;
    for pair in runs.windows(2) {
        let (va, ra, _) = &pair[0];
        let (vb, rb, _) = &pair[1];
        let a = interior(ra);
        let b = interior(rb);
        let label = format!("{}={} -> {}={}", parameter.as_str(), va, parameter.as_str(), vb);
        let mut eta_up = true;
        let mut eta_down = true;
        let mut rho_up = true;
        let mut rho_down = true;
        for (x, y) in a.iter().zip(b) {
            eta_up &= y.eta >= x.eta - DIRECTION_BAND;
            eta_down &= y.eta <= x.eta + DIRECTION_BAND;
            rho_up &= y.rho >= x.rho - DIRECTION_BAND;
            rho_down &= y.rho <= x.rho + DIRECTION_BAND;
            max_shift = max_shift
                .max((y.eta - x.eta).abs())
                .max((y.rho - x.rho).abs());
        }
        match parameter {
            SweepParameter::Alpha => {
                checks.push(check(
                    format!("{label}: activity dial nonincreasing"),
                    eta_down,
                    String::new(),
                ));
                checks.push(check(
                    format!("{label}: mitigation nondecreasing"),
                    rho_up,
                    String::new(),
                ));
            }
            SweepParameter::Beta => {
                checks.push(check(
                    format!("{label}: mitigation nondecreasing"),
                    rho_up,
                    String::new(),
                ));
            }
            SweepParameter::AR => {
                checks.push(check(
                    format!("{label}: mitigation nonincreasing"),
                    rho_down,
                    String::new(),
                ));
            }
            SweepParameter::AMI => {
                checks.push(check(
                    format!("{label}: activity dial nondecreasing"),
                    eta_up,
                    String::new(),
                ));
            }
            SweepParameter::Sigma | SweepParameter::AI | SweepParameter::AMS => {}
        }
    }

    let (dir_path, _) = dir.finish(cfg, "sweep", parameter.as_str(), &summaries)?;
    Ok(SweepReport {
        parameter,
        dir: dir_path,
        runs,
        checks,
        max_control_shift: max_shift,
    })
}
