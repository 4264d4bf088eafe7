//! `stickykin`: solves the kinetic equations, simulates the sticky-particle
//! system and runs the verification experiments.
//!
//! Exit codes: 0 pass, 1 statistical failure, 2 usage or config error.

mod artifacts;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use stickykin::{
    burgers_closure_check, convergence_study, map_paths, sample_initial_path, solve_kinetic, solve_marginal,
    verify_coupling, verify_lstar, verify_propagation, BoundaryProcess, Configuration, CouplingSetup, ExperimentReport,
    KineticOperator, LstarSetup, MeanEstimate, PropagationSetup, RandomStreamPolicy, SchemeKind, StatisticRecord,
    StreamLane,
};

use artifacts::{emit_report, opt, Artifacts};
use config::{ExperimentConfig, Model};

#[derive(Parser)]
#[command(name = "stickykin", version, about = "Kinetic equations and sticky-particle simulation for shock statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; defaults describe the 3-state example.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set montecarlo.paths=1000` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the kinetic equation; writes kinetic_trajectory.csv.
    SolveKinetic,
    /// Solve the marginal equation; writes marginal_trajectory.csv.
    SolveMarginal,
    /// Sample initial paths and evolve them; writes paths.csv.
    Simulate {
        /// Also write the per-path event log (events.csv).
        #[arg(long)]
        event_log: bool,
    },
    VerifyPropagation,
    VerifyCoupling,
    VerifyLemma5,
    ConvergenceStudy,
    BurgersCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveKinetic => "solve-kinetic",
            Command::SolveMarginal => "solve-marginal",
            Command::Simulate { .. } => "simulate",
            Command::VerifyPropagation => "verify-propagation",
            Command::VerifyCoupling => "verify-coupling",
            Command::VerifyLemma5 => "verify-lemma5",
            Command::ConvergenceStudy => "convergence-study",
            Command::BurgersCheck => "burgers-check",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("montecarlo.seed={seed}"));
    }
    if let Some(workers) = cli.workers {
        overrides.push(format!("montecarlo.workers={workers}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output.directory={}", serde_json::to_string(&out.to_string_lossy())?));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn matrix_rows(t: f64, f: &stickykin::RateKernel<f64>) -> Vec<Vec<String>> {
    let n = f.dim();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| vec![t.to_string(), i.to_string(), j.to_string(), f.get(i, j).to_string()])
        .collect()
}

fn states_line(model: &Model) -> String {
    format!("states: {}", serde_json::to_string(model.grid.states()).expect("floats serialize"))
}

fn positive_horizon(cfg: &ExperimentConfig) -> Result<f64> {
    if cfg.domain.horizon <= 0.0 {
        bail!("domain.horizon must be positive for this subcommand");
    }
    Ok(cfg.domain.horizon)
}

fn solve_kinetic_cmd(cfg: &ExperimentConfig, model: &Model, out: &Artifacts) -> Result<ExperimentReport> {
    let horizon = positive_horizon(cfg)?;
    let sol = solve_kinetic(&model.kernel, &model.hamiltonian, &model.grid, horizon, &model.scheme)?;
    let traj = &sol.trajectory;
    let rows = traj.times().iter().zip(traj.kernels()).flat_map(|(&t, f)| matrix_rows(t, f));
    out.csv("kinetic_trajectory.csv", &[states_line(model)], &["t", "i", "j", "f_ij"], rows)?;
    let mut report = ExperimentReport::new("solve_kinetic", json!({}), cfg.montecarlo.seed, 0);
    let drift = sol.max_row_sum_drift;
    let stats = &mut report.statistics;
    if model.scheme.kind == SchemeKind::Rk4 {
        stats.push(StatisticRecord::value("max_row_sum_drift", drift, "<= 1e-6", !sol.drift_flagged));
    } else {
        stats.push(StatisticRecord::value("max_row_sum_drift", drift, "informational (O(dt) by design)", true));
    }
    stats.push(StatisticRecord::value("min_entry", sol.min_entry, "informational", true));
    stats.push(StatisticRecord::value(
        "support_preserved",
        f64::from(u8::from(sol.support_preserved)),
        "== 1",
        sol.support_preserved,
    ));
    Ok(report)
}

fn solve_marginal_cmd(cfg: &ExperimentConfig, model: &Model, out: &Artifacts) -> Result<ExperimentReport> {
    let horizon = positive_horizon(cfg)?;
    let kin = solve_kinetic(&model.kernel, &model.hamiltonian, &model.grid, horizon, &model.scheme)?;
    let marg = solve_marginal(&kin.trajectory, &model.hamiltonian, &model.grid, horizon, &model.scheme)?;
    let rows = marg.times.iter().zip(&marg.marginals).flat_map(|(&t, l)| {
        l.weights.iter().enumerate().map(move |(i, w)| vec![t.to_string(), i.to_string(), w.to_string()])
    });
    out.csv("marginal_trajectory.csv", &[states_line(model)], &["t", "i", "ell_i"], rows)?;
    let mut report = ExperimentReport::new("solve_marginal", json!({}), cfg.montecarlo.seed, 0);
    let rk4 = model.scheme.kind == SchemeKind::Rk4;
    report.statistics.push(StatisticRecord::value(
        "max_mass_drift",
        marg.max_mass_drift,
        if rk4 { "<= 1e-6" } else { "informational" },
        !rk4 || marg.max_mass_drift <= 1e-6,
    ));
    report.statistics.push(StatisticRecord::value("min_entry", marg.min_entry, "informational", true));
    Ok(report)
}

fn path_rows(p: u64, stage: &str, q: &Configuration<f64>) -> Vec<Vec<String>> {
    std::iter::once(0.0)
        .chain(q.positions().iter().copied())
        .zip(q.values())
        .enumerate()
        .map(|(k, (x, v))| vec![p.to_string(), stage.into(), k.to_string(), x.to_string(), v.to_string()])
        .collect()
}

fn simulate_cmd(cfg: &ExperimentConfig, model: &Model, out: &Artifacts, event_log: bool) -> Result<ExperimentReport> {
    let horizon = cfg.domain.horizon;
    let traj = if horizon > 0.0 {
        solve_kinetic(&model.kernel, &model.hamiltonian, &model.grid, horizon, &model.scheme)?.trajectory
    } else {
        stickykin::KernelTrajectory::constant(model.kernel.clone(), 0.0)?
    };
    let op = KineticOperator::new(&model.hamiltonian, &model.grid)?;
    let boundary = BoundaryProcess::new(&op, &traj)?;
    let policy = RandomStreamPolicy::new(cfg.montecarlo.seed);
    let lambda = model.kernel.get(model.grid.top(), model.grid.top());
    let paths = cfg.simulate.paths;
    let results = map_paths(paths, cfg.montecarlo.workers, |p| {
        let q0 = sample_initial_path(
            &model.kernel,
            &model.grid,
            lambda,
            cfg.domain.length,
            &mut policy.stream(StreamLane::InitialData, p),
        )?;
        let mut log = Vec::new();
        let q = boundary.evolve(
            &q0,
            0.0,
            horizon,
            &mut policy.stream(StreamLane::Boundary, p),
            event_log.then_some(&mut log),
        )?;
        Ok((q0, q, log))
    })?;
    let rows = results.iter().enumerate().flat_map(|(p, (q0, q, _))| {
        let p = p as u64;
        path_rows(p, "initial", q0).into_iter().chain(path_rows(p, "evolved", q))
    });
    out.csv("paths.csv", &[states_line(model)], &["path", "stage", "k", "x", "rho"], rows)?;
    if event_log {
        let rows = results.iter().enumerate().flat_map(|(p, (_, _, log))| {
            log.iter().map(move |e| {
                vec![
                    p.to_string(),
                    e.time.to_string(),
                    e.kind.to_string(),
                    e.index.map(|i| i.to_string()).unwrap_or_default(),
                    opt(e.value),
                ]
            })
        });
        out.csv("events.csv", &[], &["path", "time", "kind", "index", "value"], rows)?;
    }
    let mut report = ExperimentReport::new("simulate", json!({}), cfg.montecarlo.seed, paths);
    if paths >= 2 {
        let shocks: Vec<f64> = results.iter().map(|r| r.1.len() as f64).collect();
        let est = MeanEstimate::from_samples(&shocks)?;
        report.statistics.push(StatisticRecord {
            standard_error: Some(est.standard_error),
            ..StatisticRecord::value("mean_evolved_shocks", est.mean, "informational", true)
        });
    }
    Ok(report)
}

fn run(command: Command, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let model = cfg.model()?;
    let dir = PathBuf::from(&cfg.output.directory);
    let out = Artifacts::new(&dir, command.name(), cfg.montecarlo.seed, &cfg.provenance())?;
    let mc = &cfg.montecarlo;
    let mut report = match command {
        Command::SolveKinetic => solve_kinetic_cmd(cfg, &model, &out)?,
        Command::SolveMarginal => solve_marginal_cmd(cfg, &model, &out)?,
        Command::Simulate { event_log } => simulate_cmd(cfg, &model, &out, event_log)?,
        Command::VerifyPropagation => {
            let outcome = verify_propagation(&PropagationSetup {
                hamiltonian: model.hamiltonian.clone(),
                grid: model.grid.clone(),
                kernel: model.kernel.clone(),
                length: cfg.domain.length,
                horizon: cfg.domain.horizon,
                paths: mc.paths,
                seed: mc.seed,
                workers: mc.workers,
                tests: cfg.tests(),
                scheme: model.scheme,
            })?;
            let rows = outcome
                .histogram
                .iter()
                .map(|h| vec![h.state.to_string(), h.expected.to_string(), h.observed.to_string()]);
            out.csv("x0_histogram.csv", &[], &["state", "expected", "observed"], rows)?;
            outcome.report
        }
        Command::VerifyCoupling => verify_coupling(&CouplingSetup {
            hamiltonian: model.hamiltonian.clone(),
            grid: model.grid.clone(),
            kernel: model.kernel.clone(),
            short_length: cfg.coupling.short_length,
            long_length: cfg.coupling.long_length,
            horizon: cfg.domain.horizon,
            paths: mc.paths,
            seed: mc.seed,
            workers: mc.workers,
            scheme: model.scheme,
        })?,
        Command::VerifyLemma5 => verify_lstar(&LstarSetup {
            hamiltonian: model.hamiltonian.clone(),
            grid: model.grid.clone(),
            kernel: model.kernel.clone(),
            probe_times: cfg.lemma5.probe_times.clone(),
            chains: cfg.lemma5.chains.clone(),
            dt: cfg.lemma5.dt,
            refinement: cfg.lemma5.refinement,
        })?,
        Command::ConvergenceStudy => {
            let horizon = positive_horizon(cfg)?;
            let rows =
                convergence_study(&model.kernel, &model.hamiltonian, &model.grid, horizon, &cfg.convergence.steps)?;
            out.csv(
                "convergence.csv",
                &[],
                &["steps_per_unit", "difference", "ratio"],
                rows.iter().map(|r| vec![r.steps_per_unit.to_string(), r.difference.to_string(), opt(r.ratio)]),
            )?;
            let mut report = ExperimentReport::new("convergence_study", json!({}), mc.seed, 0);
            for r in &rows {
                let pass = r.ratio.is_none_or(|q| (1.6..=2.4).contains(&q));
                report.statistics.push(StatisticRecord {
                    reference: r.ratio,
                    ..StatisticRecord::value(
                        format!("difference n={}", r.steps_per_unit),
                        r.difference,
                        "ratio to previous in [1.6, 2.4]",
                        pass,
                    )
                });
            }
            report
        }
        Command::BurgersCheck => {
            let outcome = burgers_closure_check(&cfg.burgers)?;
            out.csv(
                "burgers.csv",
                &[format!("orientation_sign: {}", outcome.sign)],
                &["t", "s", "psi", "psi_t", "psi_psi_s", "residual"],
                outcome
                    .rows
                    .iter()
                    .map(|r| [r.t, r.s, r.psi, r.psi_t, r.psi_psi_s, r.residual].iter().map(f64::to_string).collect()),
            )?;
            outcome.report
        }
    };
    report.verdict = report.verdict && report.statistics.iter().all(|s| s.pass);
    if let Some(params) = report.parameters.as_object_mut() {
        params.insert("resolved_config".into(), cfg.provenance());
    }
    if report.wall_time_seconds == 0.0 {
        report.wall_time_seconds = start.elapsed().as_secs_f64();
    }
    emit_report(&report, &out, &cfg.output.formats)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = resolve(&cli).and_then(|cfg| run(cli.command, &cfg));
    match outcome {
        Ok(report) => {
            println!("{}", report.summary_line());
            if report.verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
