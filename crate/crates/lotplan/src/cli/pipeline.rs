//! Pipeline orchestration: stage 1 siting, AC re-verification, per-day
//! stage 2 scheduling, and the with/without-lot evaluation that mirrors the
//! planning study (peak-hour losses, voltage deviation, expected ENS).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cli::config::Scenario;
use crate::fleet::{
    self, aggregate_envelope, availability, FleetError, LotEnvelope, HOURS_PER_DAY,
};
use crate::grid::{self, GridError, LinearFlowModel, Network, PowerFlowSolution};
use crate::resources::{expected_wt_power, ResourceError};
use crate::stage1::{self, SitingPlan, SizingDemand, Stage1Error, Violation};
use crate::stage2::{
    self, DispatchSchedule, HorizonProfit, ProfitReport, SchedulingInput,
    SchedulingProblem, SocConvention, Stage2Error,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DayMode {
    /// One scheduling problem per representative day, weighted.
    #[default]
    Representative,
    /// One problem per calendar day (weights expanded); consistency mode.
    Full,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub gap: Option<f64>,
    pub seed: Option<u64>,
    pub days: DayMode,
    pub soc_convention: Option<SocConvention>,
    pub dump_lp: bool,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stage1(#[from] Stage1Error),
    #[error(transparent)]
    Stage2(#[from] Stage2Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error("plan violates AC limits even after tightening the voltage margin: {0:?}")]
    UnrepairablePlan(Vec<Violation>),
    #[error("full-day mode needs integer day weights, got {0}")]
    FractionalWeights(f64),
}

/// One comparison case: Table-style peak-hour metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub voltage_deviation_pct: f64,
    pub losses_kw: f64,
    pub ens_kwh: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Comparison {
    pub with_pl: CaseMetrics,
    pub without_pl: CaseMetrics,
}

/// Hour-indexed plot data for both cases.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HourlySeries {
    pub losses_without_kw: Vec<f64>,
    pub losses_with_kw: Vec<f64>,
    pub vdev_without_pct: Vec<f64>,
    pub vdev_with_pct: Vec<f64>,
    pub min_v_without_pu: Vec<f64>,
    pub min_v_with_pu: Vec<f64>,
    pub lot_net_export_kw: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub plan: SitingPlan,
    pub violations: Vec<Violation>,
    pub schedules: Vec<DispatchSchedule>,
    pub day_weights: Vec<f64>,
    pub profits: Vec<ProfitReport>,
    pub horizon: HorizonProfit,
    pub comparison: Comparison,
    pub series: HourlySeries,
    pub seed: u64,
    /// Optimization instance dumps (name, text), when requested.
    pub lp_dumps: Vec<(String, String)>,
}

/// Aggregate fleet charging requirement, kW: each class needs its grid-side
/// refill energy delivered inside its plug-in window.
pub fn fleet_demand_kw(fleet: &[fleet::FleetClass]) -> f64 {
    fleet
        .iter()
        .map(|c| {
            let cap = c.battery_capacity_kwh();
            let e_c = fleet::charge_energy(c.arrival_soc(), cap);
            let e_g = fleet::grid_energy(e_c, c.xi).expect("validated class");
            c.count as f64 * e_g / c.window_hours().len() as f64
        })
        .sum()
}

fn hour_loads(net: &Network, factor: f64) -> Vec<(f64, f64)> {
    net.buses
        .iter()
        .map(|b| (b.load_p * factor, b.load_q * factor))
        .collect()
}

fn peak_hour(profile: &[f64]) -> usize {
    profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(h, _)| h)
        .unwrap()
}

/// Stage 1 with AC re-verification. If the linearized plan violates AC
/// limits, the voltage margin is tightened once (by the worst violation
/// margin plus 0.005 pu) and the MILP is re-solved.
pub fn plan_stage1(
    scenario: &Scenario,
    options: &RunOptions,
    dumps: &mut Vec<(String, String)>,
) -> Result<(SitingPlan, LinearFlowModel, PowerFlowSolution), PipelineError> {
    let cfg = &scenario.config;
    let net = &scenario.network;
    let gap = options.gap.unwrap_or(cfg.gap);
    let peak = peak_hour(&cfg.load_profile);
    let peak_loads = hour_loads(net, cfg.load_profile[peak]);
    let op = grid::run_power_flow(net, &peak_loads)?;
    let linear = grid::linearize(net, &op)?;
    let demand = SizingDemand {
        required_power_kw: fleet_demand_kw(&scenario.fleet),
    };

    let mut v_margin = cfg.v_margin;
    for attempt in 0..2 {
        let problem = stage1::build_siting_problem(
            net,
            &cfg.candidates,
            &cfg.economics,
            &demand,
            &linear,
            &peak_loads,
            &cfg.load_profile,
            v_margin,
        )?;
        if options.dump_lp {
            dumps.push((format!("siting_attempt{attempt}"), problem.milp.lp.dump()));
        }
        let plan = stage1::solve_siting(&problem, gap)?;
        let violations = stage1::verify_plan(&plan, net, &peak_loads)?;
        if violations.is_empty() {
            return Ok((plan, linear, op));
        }
        let worst = violations.iter().map(|v| v.margin).fold(0.0, f64::max);
        if attempt == 1 {
            return Err(PipelineError::UnrepairablePlan(violations));
        }
        v_margin += worst + 0.005;
    }
    unreachable!()
}

/// Builds the per-day scheduling problems for an accepted plan.
pub fn build_day_problems(
    scenario: &Scenario,
    plan: &SitingPlan,
    linear: &LinearFlowModel,
    options: &RunOptions,
) -> Result<(Vec<SchedulingProblem>, Vec<f64>), PipelineError> {
    let cfg = &scenario.config;
    let net = &scenario.network;

    let total = plan.total_size_kw();
    let shares: Vec<Vec<f64>> = scenario
        .fleet
        .iter()
        .map(|_| plan.lots.iter().map(|l| l.size_kw / total).collect())
        .collect();
    let profile = availability(&scenario.fleet, &shares, plan.lots.len(), HOURS_PER_DAY)?;
    let envelopes: Vec<LotEnvelope> = plan
        .lots
        .iter()
        .enumerate()
        .map(|(i, lot)| {
            aggregate_envelope(&profile, i, &scenario.fleet, cfg.station_rate_kw, lot.size_kw)
        })
        .collect();
    let loss_factors: Vec<f64> = plan
        .lots
        .iter()
        .map(|l| linear.loss_factor[net.bus_index(l.bus).expect("verified plan")])
        .collect();

    let mut base_loss_kw = Vec::with_capacity(HOURS_PER_DAY);
    let mut load_kw = Vec::with_capacity(HOURS_PER_DAY);
    for h in 0..HOURS_PER_DAY {
        let loads = hour_loads(net, cfg.load_profile[h]);
        let sol = grid::run_power_flow(net, &loads)?;
        base_loss_kw.push(sol.total_losses);
        load_kw.push(loads.iter().map(|l| l.0).sum());
    }

    let chp_min_kw: f64 = cfg.resources.chp.iter().map(|c| c.p_min).sum();
    let chp_max_kw: f64 = cfg.resources.chp.iter().map(|c| c.p_max).sum();
    let wt_expected_kw: f64 = cfg
        .resources
        .wind
        .iter()
        .map(expected_wt_power)
        .sum::<Result<f64, _>>()?;
    let soc_convention = options.soc_convention.unwrap_or(cfg.soc_convention);

    let day_list: Vec<(usize, f64)> = match options.days {
        DayMode::Representative => cfg.day_weights.iter().copied().enumerate().collect(),
        DayMode::Full => {
            let mut list = Vec::new();
            for (i, &w) in cfg.day_weights.iter().enumerate() {
                if (w - w.round()).abs() > 1e-9 {
                    return Err(PipelineError::FractionalWeights(w));
                }
                for _ in 0..w.round() as usize {
                    list.push((i, 1.0));
                }
            }
            list
        }
    };

    let mut problems = Vec::with_capacity(day_list.len());
    let mut weights = Vec::with_capacity(day_list.len());
    for (day_idx, weight) in day_list {
        let input = SchedulingInput {
            prices: scenario.prices[day_idx].clone(),
            envelopes: envelopes.clone(),
            load_kw: load_kw.clone(),
            base_loss_kw: base_loss_kw.clone(),
            loss_factors: loss_factors.clone(),
            chp_min_kw,
            chp_max_kw,
            wt_expected_kw,
            soc_convention,
        };
        problems.push(stage2::build_scheduling_problem(plan, &input)?);
        weights.push(weight);
    }
    Ok((problems, weights))
}

fn case_metrics(
    net: &Network,
    loads: &[(f64, f64)],
    hourly_loads: &[Vec<f64>],
    backup: &[f64],
    c_il: f64,
) -> Result<(CaseMetrics, PowerFlowSolution), PipelineError> {
    let sol = grid::run_power_flow(net, loads)?;
    let (ens_kwh, _) = grid::expected_ens(net, hourly_loads, backup, c_il);
    Ok((
        CaseMetrics {
            voltage_deviation_pct: grid::voltage_deviation(&sol),
            losses_kw: sol.total_losses,
            ens_kwh,
        },
        sol,
    ))
}

/// Evaluates the with/without-lot comparison at the peak hour and the
/// per-hour plot series, using the first scheduled day for lot behavior.
pub fn evaluate(
    scenario: &Scenario,
    plan: &SitingPlan,
    schedules: &[DispatchSchedule],
) -> Result<(Comparison, HourlySeries), PipelineError> {
    let cfg = &scenario.config;
    let net = &scenario.network;
    let c_il = cfg.economics.c_il_per_kwh;
    let schedule = &schedules[0];

    let hourly_loads: Vec<Vec<f64>> = (0..HOURS_PER_DAY)
        .map(|h| net.buses.iter().map(|b| b.load_p * cfg.load_profile[h]).collect())
        .collect();
    let peak = peak_hour(&cfg.load_profile);

    let no_backup = vec![0.0; net.num_buses()];
    let backup = plan.backup_by_bus(net);

    let mut series = HourlySeries::default();
    let mut comparison = None;
    for h in 0..HOURS_PER_DAY {
        let base = hour_loads(net, cfg.load_profile[h]);
        let mut with = base.clone();
        let mut net_export = 0.0;
        for lot in &schedule.lots {
            let b = net.bus_index(lot.bus).expect("verified plan");
            with[b].0 -= lot.net_export(h);
            net_export += lot.net_export(h);
        }
        let (m_without, sol_without) =
            case_metrics(net, &base, &hourly_loads, &no_backup, c_il)?;
        let (m_with, sol_with) = case_metrics(net, &with, &hourly_loads, &backup, c_il)?;
        series.losses_without_kw.push(m_without.losses_kw);
        series.losses_with_kw.push(m_with.losses_kw);
        series.vdev_without_pct.push(m_without.voltage_deviation_pct);
        series.vdev_with_pct.push(m_with.voltage_deviation_pct);
        series
            .min_v_without_pu
            .push(sol_without.v.iter().copied().fold(f64::INFINITY, f64::min));
        series
            .min_v_with_pu
            .push(sol_with.v.iter().copied().fold(f64::INFINITY, f64::min));
        series.lot_net_export_kw.push(net_export);
        if h == peak {
            comparison = Some(Comparison {
                with_pl: m_with,
                without_pl: m_without,
            });
        }
    }
    Ok((comparison.expect("peak hour within 0..24"), series))
}

/// The full pipeline: plan, verify, schedule every day, aggregate profit,
/// and evaluate the with/without-lot comparison.
pub fn run_pipeline(
    scenario: &Scenario,
    options: &RunOptions,
) -> Result<PipelineOutput, PipelineError> {
    let cfg = &scenario.config;
    let mut dumps = Vec::new();
    let (plan, linear, _op) = plan_stage1(scenario, options, &mut dumps)?;
    let (problems, weights) = build_day_problems(scenario, &plan, &linear, options)?;
    if options.dump_lp {
        for (i, p) in problems.iter().enumerate() {
            dumps.push((format!("schedule_day{i}"), p.lp.dump()));
        }
    }
    let schedules: Vec<DispatchSchedule> = stage2::solve_days(&problems)
        .into_iter()
        .collect::<Result<_, _>>()?;
    let profits: Vec<ProfitReport> = schedules
        .iter()
        .zip(&problems)
        .map(|(s, p)| stage2::profit(s, &p.input().prices, &p.input().loss_factors))
        .collect::<Result<_, _>>()?;
    let horizon = stage2::horizon_aggregate(&profits, &cfg.economics, &weights)?;
    let (comparison, series) = evaluate(scenario, &plan, &schedules)?;
    Ok(PipelineOutput {
        plan,
        violations: Vec::new(),
        schedules,
        day_weights: weights,
        profits,
        horizon,
        comparison,
        series,
        seed: options.seed.unwrap_or(cfg.seed),
        lp_dumps: dumps,
    })
}
