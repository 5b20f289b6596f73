//! `thermowave`: runs one experiment from a TOML config and writes CSV/JSON
//! artifacts under `<output_dir>/<command>-<timestamp>/`.
//!
//! Exit status: 0 on success, 1 when a run fails or a contract check does
//! not hold (see `failures.json`), 2 when the config cannot be loaded.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use thermowave::acceptance::{
    composition_defects, hydrodynamics, identity_defects, lipschitz_profiles, richardson_check, verify,
};
use thermowave::config::ExperimentConfig;
use thermowave::convergence_lab::{delta_sweep, sweep_report};
use thermowave::entropy_pairs::{entropy_production, pair_for_trajectories, FreeEnergyPair, ProductionField};
use thermowave::greens::lipschitz_test;
use thermowave::par::Execution;
use thermowave::thermo::ThermoReport;
use thermowave::viscous_solver::Trajectory;

#[derive(Parser, Debug)]
#[command(name = "thermowave", version, about = "Vanishing-viscosity and chain experiments")]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in experiment.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One viscous run at `sweep.solve_delta` with its thermodynamic report.
    Solve,
    /// The full viscosity sweep and its report.
    Sweep,
    /// Entropy pair construction, Lax residuals and entropy production.
    Entropy,
    /// Green-function identities and Lipschitz diagnostics.
    Greens,
    /// Chain ensembles against the linear viscous system.
    Chain,
    /// The acceptance suite.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Entropy => "entropy",
            Command::Greens => "greens",
            Command::Chain => "chain",
            Command::Verify => "verify",
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<thermowave::Error> for Failure {
    fn from(e: thermowave::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Output directory plus the list of files written into it.
struct Run {
    dir: PathBuf,
    files: Vec<String>,
}

impl Run {
    fn create(root: &Path, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S").to_string();
        let mut k = 0;
        loop {
            let name = if k == 0 {
                format!("{command}-{stamp}")
            } else {
                format!("{command}-{stamp}-{k}")
            };
            let dir = root.join(name);
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(Self { dir, files: Vec::new() }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
                Err(e) => return Err(e),
            }
        }
    }

    fn file(&mut self, name: &str) -> std::io::Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn text(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let mut f = self.file(name)?;
        f.write_all(body.as_bytes())?;
        f.flush()
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), Failure> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        Ok(self.text(name, &body)?)
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> thermowave::Result<()>) -> Result<(), Failure> {
        let mut w = self.file(name)?;
        f(&mut w)?;
        Ok(w.flush()?)
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_toml_str(&text)
        }
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate().map(|_| cfg)
        }
    };
    cfg.map_err(|e| Failure::Config(e.to_string()))
}

fn delta_tag(d: f64) -> String {
    format!("{d}").replace('.', "p")
}

fn solve_run(cfg: &ExperimentConfig) -> thermowave::Result<(Trajectory, ThermoReport)> {
    let exp = cfg.experiment();
    let init = exp.prepare()?;
    let traj = exp.run(&init, cfg.sweep.solve_delta)?;
    let thermo = ThermoReport::from_initial(&traj, &init, &exp.model, &exp.boundary)?;
    Ok((traj, thermo))
}

fn write_production(run: &mut Run, name: &str, field: &ProductionField) -> Result<(), Failure> {
    run.csv(name, |w| {
        writeln!(w, "t0,t1,cell,production,dissipation,identity_residual")?;
        for (k, chunk) in field.production.chunks(field.cells).enumerate() {
            for (j, v) in chunk.iter().enumerate() {
                let i = k * field.cells + j;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    field.times[k],
                    field.times[k + 1],
                    j,
                    v,
                    field.dissipation[i],
                    field.identity_residual[i]
                )?;
            }
        }
        Ok(())
    })
}

fn production_summary(field: &ProductionField) -> Value {
    json!({
        "cells": field.cells,
        "intervals": field.times.len().saturating_sub(1),
        "min_production": field.min_production(),
        "total_production": field.total_production(),
        "max_identity_residual": field.max_identity_residual(),
    })
}

/// Returns the contract failures of the command (empty on success).
fn execute(command: Command, cfg: &ExperimentConfig, exec: Execution, run: &mut Run) -> Result<Vec<Value>, Failure> {
    let mut failures = Vec::new();
    match command {
        Command::Solve => {
            let (traj, thermo) = solve_run(cfg)?;
            run.csv("trajectory.csv", |w| traj.write_csv(w))?;
            run.json("trajectory.json", &serde_json::to_value(traj.metadata())?)?;
            run.csv("thermo.csv", |w| thermo.write_csv(w))?;
            run.json("thermo.json", &thermo.metadata())?;
            println!(
                "solve: delta {} snapshots {} max J {:.6e} max balance residual {:.3e}",
                traj.delta,
                traj.snapshots.len(),
                thermo.max_j(),
                thermo.max_balance_residual()
            );
        }
        Command::Sweep => {
            let sweep = delta_sweep(&cfg.experiment(), &cfg.sweep.deltas, exec)?;
            for (d, t) in sweep.successful() {
                let tag = delta_tag(d);
                run.csv(&format!("trajectory_delta_{tag}.csv"), |w| t.write_csv(w))?;
                run.json(&format!("trajectory_delta_{tag}.json"), &serde_json::to_value(t.metadata())?)?;
            }
            for (d, e) in sweep.failures() {
                failures.push(json!({"delta": d, "error": e}));
            }
            let report = sweep_report(&sweep, cfg.entropy.resolution, exec)?;
            run.json("sweep_report.json", &serde_json::to_value(&report)?)?;
            println!(
                "sweep: {} of {} runs; L1 distances {:?}; L2 spread {:.4}",
                report.runs.len(),
                sweep.deltas.len(),
                report.l1_distances,
                report.l2_spread()
            );
        }
        Command::Entropy => {
            let (traj, _) = solve_run(cfg)?;
            let pair = pair_for_trajectories(&cfg.model, &[&traj], cfg.entropy.resolution)?;
            run.csv("pair.csv", |w| pair.write_csv(w))?;
            run.json("pair.json", &pair.metadata(&cfg.model))?;
            let tabulated = entropy_production(&pair, &traj)?;
            let free = entropy_production(&FreeEnergyPair { model: cfg.model }, &traj)?;
            write_production(run, "production_pair.csv", &tabulated)?;
            write_production(run, "production_free_energy.csv", &free)?;
            run.json(
                "production.json",
                &json!({
                    "delta": traj.delta,
                    "pair": production_summary(&tabulated),
                    "free_energy": production_summary(&free),
                }),
            )?;
            println!(
                "entropy: {}x{} pair, series depth {}; free-energy production min {:.3e}",
                pair.n1,
                pair.n2,
                pair.depth,
                free.min_production()
            );
        }
        Command::Greens => {
            let tol = &cfg.tolerances;
            let ids = identity_defects(cfg)?;
            let comp = composition_defects(cfg)?;
            let rich = richardson_check(cfg, exec)?;
            let (traj, _) = solve_run(cfg)?;
            let lip: Vec<Value> = lipschitz_profiles()
                .into_iter()
                .map(|(name, phi)| {
                    let r = lipschitz_test(&traj, phi);
                    json!({"profile": name, "ratio": r.ratio(), "report": r})
                })
                .collect();
            for &(d, m) in &ids {
                if m > tol.identity {
                    failures.push(json!({"check": "identity", "delta": d, "defect": m, "limit": tol.identity}));
                }
            }
            for &(d, b) in &comp {
                if d > b {
                    failures.push(json!({"check": "composition", "defect": d, "bound": b}));
                }
            }
            for &(m, e, p) in &rich {
                let f = tol.richardson_factor;
                if !(e <= f * p && p <= f * e) {
                    failures.push(json!({"check": "richardson", "cells": m, "error": e, "predicted": p}));
                }
            }
            run.json(
                "greens.json",
                &json!({
                    "identity_defects": ids.iter().map(|v| json!({"delta": v.0, "max": v.1})).collect::<Vec<_>>(),
                    "composition": comp.iter().map(|v| json!({"defect": v.0, "bound": v.1})).collect::<Vec<_>>(),
                    "richardson": rich.iter().map(|v| json!({"cells": v.0, "error": v.1, "predicted": v.2})).collect::<Vec<_>>(),
                    "lipschitz": {"delta": traj.delta, "profiles": lip},
                }),
            )?;
            println!(
                "greens: max identity defect {:.2e}; {} check(s) failed",
                ids.iter().map(|v| v.1).fold(0.0, f64::max),
                failures.len()
            );
        }
        Command::Chain => {
            let (outcome, reports) = hydrodynamics(cfg, exec)?;
            for r in &reports {
                run.csv(&format!("hydro_n{}.csv", r.n), |w| r.write_csv(w))?;
            }
            run.json(
                "chain.json",
                &json!({
                    "sizes": reports.iter().map(|r| json!({
                        "n": r.n,
                        "ensemble": r.ensemble,
                        "delta_eff": r.delta_eff,
                        "rms_deviation": r.rms_deviation(),
                        "max_score": r.max_score(),
                    })).collect::<Vec<_>>(),
                    "consistency": outcome,
                }),
            )?;
            println!("chain: {}", outcome.line());
            if !outcome.passed {
                failures.push(serde_json::to_value(&outcome)?);
            }
        }
        Command::Verify => {
            let report = verify(cfg, exec)?;
            let mut body = report.to_json();
            body.push('\n');
            run.text("acceptance.json", &body)?;
            for c in &report.criteria {
                println!("{}", c.line());
            }
            let passed = report.criteria.iter().filter(|c| c.passed).count();
            println!("acceptance: {passed}/{} criteria passed", report.criteria.len());
            for c in report.failures() {
                failures.push(json!({"id": c.id, "name": c.name, "summary": c.summary}));
            }
        }
    }
    Ok(failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(Failure::Config(msg)) | Err(Failure::Runtime(msg)) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let mut run = match Run::create(&root, cli.command.name()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot create output directory under {}: {e}", root.display());
            return ExitCode::from(1);
        }
    };

    let outcome = (|| -> Result<Vec<Value>, Failure> {
        run.text("config.toml", &cfg.to_toml_string())?;
        execute(cli.command, &cfg, exec, &mut run)
    })();
    let failures = match outcome {
        Ok(f) => f,
        Err(Failure::Config(msg)) | Err(Failure::Runtime(msg)) => vec![json!({"error": msg})],
    };
    if !failures.is_empty() {
        if let Err(Failure::Runtime(msg) | Failure::Config(msg)) = run.json("failures.json", &Value::Array(failures.clone())) {
            eprintln!("cannot write failures.json: {msg}");
        }
    }
    let mut files = run.files.clone();
    files.push("manifest.json".into());
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "execution": exec,
        "files": files,
        "failed": !failures.is_empty(),
        "config": cfg,
    });
    if let Err(Failure::Runtime(msg) | Failure::Config(msg)) = run.json("manifest.json", &manifest) {
        eprintln!("cannot write manifest.json: {msg}");
        return ExitCode::from(1);
    }
    println!("output: {}", run.dir.display());
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &failures {
            eprintln!("failure: {f}");
        }
        ExitCode::from(1)
    }
}
