//! Command-line surface: `validate`, `plan`, `schedule` and `run`
//! subcommands over a scenario config file.

pub mod config;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::stage1::{CostBreakdown, PlannedLot, SitingPlan};
use crate::stage2::{self, SocConvention};
use config::Scenario;
use pipeline::{DayMode, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "lotplan", version, about = "Two-stage parking-lot planning and scheduling for radial microgrids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for reports.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Random seed recorded in the outputs (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative MILP optimality gap (overrides the config).
    #[arg(long)]
    pub gap: Option<f64>,
    /// Scheduling horizon: representative day count K, or "full" for 365.
    #[arg(long)]
    pub days: Option<String>,
    /// Dump optimization instances in text form under <out>/lp/.
    #[arg(long)]
    pub dump_lp: bool,
    /// SOC recursion convention for discharge efficiency.
    #[arg(long, value_enum)]
    pub soc_convention: Option<SocConventionArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SocConventionArg {
    Physical,
    Literal,
}

impl From<SocConventionArg> for SocConvention {
    fn from(v: SocConventionArg) -> Self {
        match v {
            SocConventionArg::Physical => SocConvention::Physical,
            SocConventionArg::Literal => SocConvention::Literal,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario config and all referenced files; print diagnostics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stage 1 only: site and size the lots, write plan.csv.
    Plan(CommonArgs),
    /// Stage 2 only: schedule an existing plan, write schedule.csv and profit.json.
    Schedule {
        #[command(flatten)]
        common: CommonArgs,
        /// plan.csv produced by the `plan` subcommand.
        #[arg(long)]
        plan: PathBuf,
    },
    /// Full pipeline: plan, schedule, evaluate, write all reports.
    Run(CommonArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Stage2(#[from] stage2::Stage2Error),
    #[error(transparent)]
    Io(#[from] report::IoError),
    #[error("--days {got} does not match the {have} representative days in the config (or \"full\")")]
    BadDays { got: String, have: usize },
    #[error("cannot read plan {path}: {message}")]
    BadPlan { path: PathBuf, message: String },
    #[error("config has {0} validation issues")]
    InvalidConfig(usize),
}

fn parse_days(arg: &Option<String>, scenario: &Scenario) -> Result<DayMode, CliError> {
    let have = scenario.prices.len();
    match arg.as_deref() {
        None => Ok(DayMode::Representative),
        Some("full") => Ok(DayMode::Full),
        Some(k) => match k.parse::<usize>() {
            Ok(n) if n == have => Ok(DayMode::Representative),
            _ => Err(CliError::BadDays { got: k.to_string(), have }),
        },
    }
}

fn options(common: &CommonArgs, scenario: &Scenario) -> Result<RunOptions, CliError> {
    Ok(RunOptions {
        gap: common.gap,
        seed: common.seed,
        days: parse_days(&common.days, scenario)?,
        soc_convention: common.soc_convention.map(Into::into),
        dump_lp: common.dump_lp,
    })
}

/// Reads a plan.csv back into a [`SitingPlan`], matching rows to the
/// scenario's candidate list by bus id.
pub fn read_plan(path: &Path, scenario: &Scenario) -> Result<SitingPlan, CliError> {
    let bad = |message: String| CliError::BadPlan { path: path.to_path_buf(), message };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut sizes = vec![0.0; scenario.config.candidates.len()];
    for row in rdr.deserialize::<(usize, f64)>() {
        let (bus, size_kw) = row.map_err(|e| bad(e.to_string()))?;
        let cand = scenario
            .config
            .candidates
            .iter()
            .position(|c| c.bus == bus)
            .ok_or_else(|| bad(format!("bus {bus} is not a candidate site")))?;
        sizes[cand] += size_kw;
    }
    let lots = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(i, &s)| PlannedLot {
            candidate: i,
            bus: scenario.config.candidates[i].bus,
            size_kw: s,
        })
        .collect();
    Ok(SitingPlan {
        lots,
        sizes_kw: sizes,
        cost_breakdown: CostBreakdown::default(),
        objective: 0.0,
    })
}

/// Runs one parsed command; output lines are returned for printing so the
/// function stays testable.
pub fn execute(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Validate { config: path } => {
            let issues = config::validate_config(&path);
            if issues.is_empty() {
                Ok(vec![format!("{}: ok", path.display())])
            } else {
                for issue in &issues {
                    eprintln!("{issue}");
                }
                Err(CliError::InvalidConfig(issues.len()))
            }
        }
        Command::Plan(common) => {
            let scenario = config::load_scenario(&common.config)?;
            let opts = options(&common, &scenario)?;
            let mut dumps = Vec::new();
            let (plan, _, _) = pipeline::plan_stage1(&scenario, &opts, &mut dumps)?;
            let path = common.out.join("plan.csv");
            report_write(&path, &report::plan_csv(&plan))?;
            let mut lines = vec![format!("wrote {}", path.display())];
            for (name, dump) in &dumps {
                let p = common.out.join(format!("lp/{name}.lp.txt"));
                report_write(&p, dump)?;
                lines.push(format!("wrote {}", p.display()));
            }
            lines.push(format!(
                "total size {:.1} kW over {} lots, objective ${:.2}",
                plan.total_size_kw(),
                plan.lots.len(),
                plan.objective
            ));
            Ok(lines)
        }
        Command::Schedule { common, plan } => {
            let scenario = config::load_scenario(&common.config)?;
            let opts = options(&common, &scenario)?;
            let siting = read_plan(&plan, &scenario)?;
            let peak_loads: Vec<(f64, f64)> = scenario
                .network
                .buses
                .iter()
                .map(|b| (b.load_p, b.load_q))
                .collect();
            let op = crate::grid::run_power_flow(&scenario.network, &peak_loads)
                .map_err(pipeline::PipelineError::from)?;
            let linear = crate::grid::linearize(&scenario.network, &op)
                .map_err(pipeline::PipelineError::from)?;
            let (problems, weights) =
                pipeline::build_day_problems(&scenario, &siting, &linear, &opts)?;
            let schedules: Vec<_> = stage2::solve_days(&problems)
                .into_iter()
                .collect::<Result<_, _>>()?;
            let profits: Vec<_> = schedules
                .iter()
                .zip(&problems)
                .map(|(s, p)| stage2::profit(s, &p.input().prices, &p.input().loss_factors))
                .collect::<Result<_, _>>()?;
            let horizon =
                stage2::horizon_aggregate(&profits, &scenario.config.economics, &weights)?;
            let sched_path = common.out.join("schedule.csv");
            report_write(&sched_path, &report::schedule_csv(&schedules))?;
            let profit_path = common.out.join("profit.json");
            let doc = serde_json::json!({
                "seed": opts.seed.unwrap_or(scenario.config.seed),
                "days": profits,
                "day_weights": weights,
                "horizon_value": horizon.horizon_value,
            });
            report_write(&profit_path, &format!("{:#}\n", doc))?;
            Ok(vec![
                format!("wrote {}", sched_path.display()),
                format!("wrote {}", profit_path.display()),
                format!("horizon profit ${:.2}", horizon.horizon_value),
            ])
        }
        Command::Run(common) => {
            let scenario = config::load_scenario(&common.config)?;
            let opts = options(&common, &scenario)?;
            let output = pipeline::run_pipeline(&scenario, &opts)?;
            let manifest = report::emit_reports(&common.out, &output)?;
            let mut lines: Vec<String> = manifest
                .iter()
                .map(|p| format!("wrote {}", p.display()))
                .collect();
            let c = &output.comparison;
            lines.push(format!(
                "peak-hour losses {:.1} -> {:.1} kW, ENS {:.1} -> {:.1} kWh, vdev {:.2}% -> {:.2}%",
                c.without_pl.losses_kw,
                c.with_pl.losses_kw,
                c.without_pl.ens_kwh,
                c.with_pl.ens_kwh,
                c.without_pl.voltage_deviation_pct,
                c.with_pl.voltage_deviation_pct,
            ));
            lines.push(format!("horizon profit ${:.2}", output.horizon.horizon_value));
            Ok(lines)
        }
    }
}

fn report_write(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| report::IoError {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, content).map_err(|e| report::IoError {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}
