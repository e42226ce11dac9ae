//! `sgdstop` — run SGD experiments, evaluate stopping criteria, sweep
//! triggering rates, and query the closed-form bound calculators.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 numerical
//! divergence.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::DVector;

use sgdstop_core::bounds::{self, FalseNegativeDesign};
use sgdstop_core::montecarlo::{self, SweepPlan};
use sgdstop_core::problems::Scenario;
use sgdstop_core::report;
use sgdstop_core::schedule;
use sgdstop_core::sgd;
use sgdstop_core::stopping;
use sgdstop_core::Error as CoreError;

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "sgdstop", version, about = "SGD stopping-criterion experiments")]
struct Cli {
    /// Worker threads for replicated experiments (default: all cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SGD and write the checkpoint trajectory as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run SGD under a stopping criterion and write the evaluation records.
    Stop {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Triggering-rate sweep over the criterion grid at every checkpoint.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override replications per cell.
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the false-negative rate of a criterion cell at a fixed point.
    FnRate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit the closed-form lower bounds against empirical trigger rates.
    BoundAudit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a bound formula by name with key=value arguments.
    Bounds {
        formula: String,
        /// Named arguments, e.g. `N=100 Delta=-0.2`.
        args: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a schedule (P1-P4, k*) and print the certificate as JSON.
    ValidateSchedule {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.parallelism {
        if rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_err() {
            eprintln!("error: could not configure the thread pool");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let diverged = err
                .chain()
                .any(|cause| matches!(cause.downcast_ref(), Some(CoreError::Diverged { .. })));
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => write_output(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { config, out, seed } => {
            let cfg = ConfigFile::load(&config)?;
            let problem = cfg.problem.build()?;
            let spec = cfg.schedule.build()?;
            let run_cfg = cfg.run.build(seed);
            let trajectory = sgd::run(problem.as_ref(), &spec, &run_cfg)?;
            write_output(&out, &report::trajectory_csv(&trajectory))?;
            write_output(
                &out.with_extension("params.csv"),
                &report::final_params_csv(&trajectory.final_point),
            )?;
            if let Some(iteration) = trajectory.diverged_at {
                eprintln!("divergence at iteration {iteration}; trajectory truncated");
                return Ok(2);
            }
            Ok(0)
        }
        Command::Stop { config, out, seed } => {
            let cfg = ConfigFile::load(&config)?;
            let problem = cfg.problem.build()?;
            let spec = cfg.schedule.build()?;
            let run_cfg = cfg.run.build(seed);
            let section = cfg
                .criterion
                .as_ref()
                .ok_or_else(|| anyhow!("config has no criterion section"))?;
            let (kind, crit) = section.build()?;
            let report_data =
                stopping::run_with_criterion(problem.as_ref(), &spec, &run_cfg, &crit, kind)?;
            write_output(&out, &report::stop_report_csv(&report_data))?;
            Ok(0)
        }
        Command::Sweep { config, out, reps, seed } => {
            let cfg = ConfigFile::load(&config)?;
            let problem = cfg.problem.build()?;
            let spec = cfg.schedule.build()?;
            let run_cfg = cfg.run.build(seed);
            let section = cfg
                .montecarlo
                .as_ref()
                .ok_or_else(|| anyhow!("config has no montecarlo section"))?;
            let (grid, replications) = section.build(reps)?;
            let plan = SweepPlan {
                problem: problem.as_ref(),
                schedule: &spec,
                run: &run_cfg,
                grid: &grid,
                replications,
                base_seed: run_cfg.seed,
            };
            let cells = montecarlo::trigger_rate_sweep(&plan)?;
            write_output(&out, &report::cells_csv(&cells))?;
            Ok(0)
        }
        Command::FnRate { config, out, reps, seed } => {
            let cfg = ConfigFile::load(&config)?;
            let problem = cfg.problem.build()?;
            let section = cfg
                .fn_rate
                .as_ref()
                .ok_or_else(|| anyhow!("config has no fn_rate section"))?;
            let design = section.design.build();
            let cell = section.cell.build();
            let theta = DVector::from_column_slice(&section.theta);
            let base_seed = seed.unwrap_or(cfg.run.seed);
            let report_data = montecarlo::false_negative_rate(
                problem.as_ref(),
                &theta,
                &cell,
                &design,
                reps.unwrap_or(section.reps),
                base_seed,
            )?;
            let mut json = serde_json::to_string_pretty(&report_data)?;
            json.push('\n');
            write_output(&out, &json)?;
            Ok(0)
        }
        Command::BoundAudit { config, out, reps, seed } => {
            let cfg = ConfigFile::load(&config)?;
            let problem = cfg.problem.build()?;
            let section = cfg
                .bound_audit
                .as_ref()
                .ok_or_else(|| anyhow!("config has no bound_audit section"))?;
            let thetas: Vec<DVector<f64>> =
                section.thetas.iter().map(|t| DVector::from_column_slice(t)).collect();
            let cells: Vec<_> = section.cells.iter().map(|c| c.build()).collect();
            let base_seed = seed.unwrap_or(cfg.run.seed);
            let rows = montecarlo::bound_audit(
                problem.as_ref(),
                &thetas,
                &cells,
                reps.unwrap_or(section.reps),
                base_seed,
            )?;
            write_output(&out, &report::audit_csv(&rows))?;
            Ok(0)
        }
        Command::Bounds { formula, args, out } => {
            let json = evaluate_bounds_formula(&formula, &args)?;
            emit(out.as_deref(), &json)?;
            Ok(0)
        }
        Command::ValidateSchedule { config, out } => {
            let cfg = ConfigFile::load(&config)?;
            let spec = cfg.schedule.build()?;
            let certify = cfg
                .certify
                .as_ref()
                .ok_or_else(|| anyhow!("config has no certify section"))?;
            let cert = schedule::certify(
                &spec,
                certify.lipschitz_c,
                certify.noise_c2,
                certify.horizon,
            )?;
            emit(out.as_deref(), &report::certificate_json(&cert))?;
            Ok(0)
        }
    }
}

struct FormulaArgs {
    values: BTreeMap<String, String>,
}

impl FormulaArgs {
    fn parse(args: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for arg in args {
            let (key, value) = arg
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key=value, got `{arg}`"))?;
            if values.insert(key.to_string(), value.to_string()).is_some() {
                bail!("duplicate argument `{key}`");
            }
        }
        Ok(Self { values })
    }

    fn real(&self, key: &str) -> Result<f64> {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| anyhow!("missing argument `{key}`"))?;
        raw.parse().with_context(|| format!("argument `{key}`"))
    }

    fn integer(&self, key: &str) -> Result<u64> {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| anyhow!("missing argument `{key}`"))?;
        raw.parse().with_context(|| format!("argument `{key}`"))
    }

    fn optional_real(&self, key: &str) -> Result<Option<f64>> {
        self.values
            .get(key)
            .map(|raw| raw.parse().with_context(|| format!("argument `{key}`")))
            .transpose()
    }

    fn scenario(&self, key: &str) -> Result<Scenario> {
        match self.values.get(key).map(String::as_str) {
            Some("A") | Some("a") => Ok(Scenario::A),
            Some("B") | Some("b") => Ok(Scenario::B),
            Some("C") | Some("c") => Ok(Scenario::C),
            Some(other) => bail!("unknown scenario `{other}`"),
            None => bail!("missing argument `{key}`"),
        }
    }
}

fn bound_json(formula: &str, value: f64, vacuous: bool) -> String {
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "formula": formula,
        "value": value,
        "vacuous": vacuous,
    }))
    .expect("json");
    json.push('\n');
    json
}

fn count_json(formula: &str, n: u64) -> String {
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "formula": formula,
        "min_sample_size": n,
    }))
    .expect("json");
    json.push('\n');
    json
}

fn pair_json(formula: &str, c1: f64, c2: f64) -> String {
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "formula": formula,
        "c1": c1,
        "c2": c2,
    }))
    .expect("json");
    json.push('\n');
    json
}

fn evaluate_bounds_formula(formula: &str, raw_args: &[String]) -> Result<String> {
    let args = FormulaArgs::parse(raw_args)?;
    Ok(match formula {
        "sc1_trigger_lower_bound" => {
            let b = bounds::sc1_trigger_lower_bound(
                args.real("c1")?,
                args.real("c2")?,
                args.integer("N")?,
                args.real("grad_norm")?,
                args.real("epsilon")?,
            );
            bound_json(formula, b.value, b.vacuous)
        }
        "pareto_trigger_lower_bound" => {
            let b = bounds::pareto_trigger_lower_bound(
                args.real("pi2")?,
                args.real("pi3")?,
                args.integer("N")?,
                args.real("grad_norm")?,
                args.real("epsilon")?,
            )?;
            bound_json(formula, b.value, b.vacuous)
        }
        "sc2_trigger_lower_bound" => {
            let b = bounds::sc2_trigger_lower_bound(args.integer("N")?, args.real("Delta")?)?;
            bound_json(formula, b.value, b.vacuous)
        }
        "sc1_min_sample_size" => {
            let design = FalseNegativeDesign {
                rho: args.real("rho")?,
                gamma: args.real("gamma")?,
                scenario: Scenario::A,
            };
            let n = bounds::sc1_min_sample_size(
                args.real("c1")?,
                args.real("c2")?,
                args.real("epsilon")?,
                &design,
            )?;
            count_json(formula, n)
        }
        "sc2_rho_cap" => {
            let scenario = args.scenario("scenario")?;
            let value = bounds::sc2_rho_cap(
                scenario,
                args.optional_real("c2")?.unwrap_or(0.0),
                args.real("delta_bar")?,
                args.optional_real("pi2")?,
            )?;
            bound_json(formula, value, false)
        }
        "sc2_min_sample_size" => {
            let scenario = args.scenario("scenario")?;
            let design = FalseNegativeDesign {
                rho: args.real("rho")?,
                gamma: args.real("gamma")?,
                scenario,
            };
            let n = bounds::sc2_min_sample_size(
                scenario,
                args.real("delta_bar")?,
                &design,
                args.optional_real("pi2")?,
            )?;
            count_json(formula, n)
        }
        "derive_bcn_from_sg_lipschitz" => {
            let (c1, c2) =
                bounds::derive_bcn_from_sg_lipschitz(args.real("C")?, args.real("L")?)?;
            pair_json(formula, c1, c2)
        }
        "pl_convert" => {
            let (c1, c2) = bounds::pl_convert(
                args.real("c1")?,
                args.real("c2")?,
                args.real("f_star")?,
                args.real("mu")?,
            )?;
            pair_json(formula, c1, c2)
        }
        other => bail!(
            "unknown formula `{other}`; available: sc1_trigger_lower_bound, \
             pareto_trigger_lower_bound, sc2_trigger_lower_bound, sc1_min_sample_size, \
             sc2_rho_cap, sc2_min_sample_size, derive_bcn_from_sg_lipschitz, pl_convert"
        ),
    })
}
