//! Stage 2: hourly scheduling of the installed lots per representative day.
//!
//! Maximizes lot-owner profit (energy sold minus energy bought minus a
//! marginal-loss proxy) subject to aggregate SOC dynamics, envelope limits,
//! departure energy floors and system power balance. Daily problems are
//! independent and may be solved concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::fleet::{LotEnvelope, HOURS_PER_DAY};
use crate::optim::{self, LinearProgram, Relation, Sense, Status};
use crate::stage1::{EconomicParams, SitingPlan};

/// SOC recursion convention.
///
/// `Physical` divides discharge by its efficiency (more battery energy is
/// drawn than delivered); `Literal` multiplies it instead, as the recursion
/// is sometimes written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SocConvention {
    #[default]
    Physical,
    Literal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceSeries {
    pub label: String,
    /// Sell price per hour, $/kWh.
    pub sell: Vec<f64>,
    /// Buy price per hour, $/kWh.
    pub buy: Vec<f64>,
}

impl PriceSeries {
    pub fn validate(&self) -> Result<(), Stage2Error> {
        if self.sell.len() != HOURS_PER_DAY || self.buy.len() != HOURS_PER_DAY {
            return Err(Stage2Error::LengthMismatch {
                what: "price series",
                got: self.sell.len().max(self.buy.len()),
                want: HOURS_PER_DAY,
            });
        }
        if self.sell.iter().chain(&self.buy).any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Stage2Error::BadPrices(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Stage2Error {
    #[error("plan has no lots to schedule")]
    EmptyPlan,
    #[error("{what} has length {got}, expected {want}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("negative or non-finite price in series {0}")]
    BadPrices(String),
    #[error("lot {lot}: departure floor {floor_kwh:.1} kWh unreachable at max charge rate (reachable {reachable_kwh:.1} kWh)")]
    InfeasibleTargets {
        lot: usize,
        floor_kwh: f64,
        reachable_kwh: f64,
    },
    #[error("scheduling problem is infeasible")]
    Infeasible,
    #[error("scheduling problem is unbounded; missing price or bound data")]
    Unbounded,
    #[error("solver hit its iteration limit")]
    IterationLimit,
    #[error("representative-day weights sum to {0}, expected 365")]
    BadWeights(f64),
}

/// Everything the daily scheduling LP needs besides the plan itself.
#[derive(Debug, Clone)]
pub struct SchedulingInput {
    pub prices: PriceSeries,
    /// Flexibility envelope per planned lot, in `plan.lots` order.
    pub envelopes: Vec<LotEnvelope>,
    /// System load per hour, kW.
    pub load_kw: Vec<f64>,
    /// Network losses at the no-lot operating point per hour, kW.
    pub base_loss_kw: Vec<f64>,
    /// Marginal loss factor per lot (pu loss per pu injection at its bus).
    pub loss_factors: Vec<f64>,
    pub chp_min_kw: f64,
    pub chp_max_kw: f64,
    pub wt_expected_kw: f64,
    pub soc_convention: SocConvention,
}

/// The assembled LP with its variable maps; build once, solve many.
#[derive(Debug, Clone)]
pub struct SchedulingProblem {
    pub lp: LinearProgram,
    input: SchedulingInput,
    lot_buses: Vec<usize>,
    ch: Vec<Vec<usize>>,
    dch: Vec<Vec<usize>>,
    soc: Vec<Vec<usize>>,
    chp: Vec<usize>,
    wt: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LotSchedule {
    pub bus: usize,
    pub p_ch: Vec<f64>,
    pub p_dch: Vec<f64>,
    pub p_sell: Vec<f64>,
    pub p_buy: Vec<f64>,
    pub soc: Vec<f64>,
}

impl LotSchedule {
    /// Net grid export at the lot bus, kW (positive when discharging).
    pub fn net_export(&self, h: usize) -> f64 {
        self.p_dch[h] - self.p_ch[h]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSchedule {
    pub day: String,
    pub lots: Vec<LotSchedule>,
    pub chp_kw: Vec<f64>,
    pub wt_kw: Vec<f64>,
    pub grid_import_kw: Vec<f64>,
    pub objective: f64,
    /// (lot, hour) pairs where charge and discharge are both above 1e-6 kW.
    pub simultaneous: Vec<(usize, usize)>,
}

/// Builds the daily scheduling LP.
///
/// Per lot-hour variables are charge, discharge and aggregate SOC; market
/// sale equals discharge and purchase equals charge (the lot trades what it
/// moves through its batteries). The balance row per hour is
/// `CHP + WT + import = load + base losses + sum (1 + lf_i)(ch_i - dch_i)`.
pub fn build_scheduling_problem(
    plan: &SitingPlan,
    input: &SchedulingInput,
) -> Result<SchedulingProblem, Stage2Error> {
    if plan.lots.is_empty() {
        return Err(Stage2Error::EmptyPlan);
    }
    input.prices.validate()?;
    let nl = plan.lots.len();
    for (what, len) in [
        ("envelopes", input.envelopes.len()),
        ("loss factors", input.loss_factors.len()),
    ] {
        if len != nl {
            return Err(Stage2Error::LengthMismatch { what, got: len, want: nl });
        }
    }
    for (what, len) in [
        ("load series", input.load_kw.len()),
        ("base loss series", input.base_loss_kw.len()),
    ] {
        if len != HOURS_PER_DAY {
            return Err(Stage2Error::LengthMismatch { what, got: len, want: HOURS_PER_DAY });
        }
    }

    // Departure floors must be reachable at full charge rate.
    for (li, env) in input.envelopes.iter().enumerate() {
        check_floor_reachable(li, env)?;
    }

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut ch = vec![Vec::with_capacity(HOURS_PER_DAY); nl];
    let mut dch = vec![Vec::with_capacity(HOURS_PER_DAY); nl];
    let mut soc = vec![Vec::with_capacity(HOURS_PER_DAY); nl];
    for (i, lot) in plan.lots.iter().enumerate() {
        let env = &input.envelopes[i];
        let lf = input.loss_factors[i];
        for h in 0..HOURS_PER_DAY {
            let sell = input.prices.sell[h];
            let buy = input.prices.buy[h];
            // Loss proxy priced at the purchase price: transport losses of
            // both trade directions are charged to the lot.
            let ch_v = lp.add_var(
                format!("ch_l{i}_h{h}"),
                0.0,
                env.max_charge_kw[h].min(lot.size_kw),
                -buy - buy * lf,
            );
            let dch_v = lp.add_var(
                format!("dch_l{i}_h{h}"),
                0.0,
                env.max_discharge_kw[h].min(lot.size_kw),
                sell - buy * lf,
            );
            let floor = env.departure_floor_kwh[h];
            let soc_v = lp.add_var(
                format!("soc_l{i}_h{h}"),
                env.soc_min_kwh[h].max(floor),
                env.soc_max_kwh[h].max(env.soc_min_kwh[h].max(floor)),
                0.0,
            );
            ch[i].push(ch_v);
            dch[i].push(dch_v);
            soc[i].push(soc_v);
        }
        // Cyclic SOC recursion with arrivals and departures.
        for h in 0..HOURS_PER_DAY {
            let prev = (h + HOURS_PER_DAY - 1) % HOURS_PER_DAY;
            let dch_coeff = match input.soc_convention {
                SocConvention::Physical => 1.0 / env.eta_d[h],
                SocConvention::Literal => env.eta_d[h],
            };
            lp.add_row(
                vec![
                    (soc[i][h], 1.0),
                    (soc[i][prev], -1.0),
                    (ch[i][h], -env.eta_c[h]),
                    (dch[i][h], dch_coeff),
                ],
                Relation::Eq,
                env.arrival_kwh[h] - env.departure_kwh[h],
            );
        }
    }

    let mut chp = Vec::with_capacity(HOURS_PER_DAY);
    let mut wt = Vec::with_capacity(HOURS_PER_DAY);
    let mut imp = Vec::with_capacity(HOURS_PER_DAY);
    for h in 0..HOURS_PER_DAY {
        chp.push(lp.add_var(format!("chp_h{h}"), input.chp_min_kw, input.chp_max_kw, 0.0));
        wt.push(lp.add_var(format!("wt_h{h}"), 0.0, input.wt_expected_kw, 0.0));
        imp.push(lp.add_var(
            format!("imp_h{h}"),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.0,
        ));
        let mut terms = vec![(chp[h], 1.0), (wt[h], 1.0), (imp[h], 1.0)];
        for i in 0..nl {
            let lf = input.loss_factors[i];
            terms.push((ch[i][h], -(1.0 + lf)));
            terms.push((dch[i][h], 1.0 + lf));
        }
        lp.add_row(terms, Relation::Eq, input.load_kw[h] + input.base_loss_kw[h]);
    }

    Ok(SchedulingProblem {
        lp,
        input: input.clone(),
        lot_buses: plan.lots.iter().map(|l| l.bus).collect(),
        ch,
        dch,
        soc,
        chp,
        wt,
    })
}

impl SchedulingProblem {
    pub fn input(&self) -> &SchedulingInput {
        &self.input
    }
}

fn check_floor_reachable(lot: usize, env: &LotEnvelope) -> Result<(), Stage2Error> {
    for h in 0..HOURS_PER_DAY {
        let floor = env.departure_floor_kwh[h];
        if floor <= 0.0 {
            continue;
        }
        // Walk back to the arrival that opened this window, accumulating the
        // best-case charge energy.
        let mut reachable = 0.0;
        let mut hour = h;
        for _ in 0..HOURS_PER_DAY {
            reachable += env.eta_c[hour] * env.max_charge_kw[hour];
            if env.arrival_kwh[hour] > 0.0 || env.capacity_kwh[hour] == 0.0 {
                reachable += env.arrival_kwh[hour];
                break;
            }
            hour = (hour + HOURS_PER_DAY - 1) % HOURS_PER_DAY;
        }
        if reachable + 1e-9 < floor {
            return Err(Stage2Error::InfeasibleTargets {
                lot,
                floor_kwh: floor,
                reachable_kwh: reachable,
            });
        }
    }
    Ok(())
}

/// Solves the daily LP and maps the solution back to named schedule fields.
pub fn solve_schedule(problem: &SchedulingProblem) -> Result<DispatchSchedule, Stage2Error> {
    let sol = optim::solve_lp(&problem.lp);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Stage2Error::Infeasible),
        Status::Unbounded => return Err(Stage2Error::Unbounded),
        Status::IterationLimit => return Err(Stage2Error::IterationLimit),
    }
    let input = &problem.input;
    let nl = problem.lot_buses.len();
    let mut lots = Vec::with_capacity(nl);
    let mut simultaneous = Vec::new();
    for i in 0..nl {
        let p_ch: Vec<f64> = (0..HOURS_PER_DAY).map(|h| sol.x[problem.ch[i][h]].max(0.0)).collect();
        let p_dch: Vec<f64> = (0..HOURS_PER_DAY).map(|h| sol.x[problem.dch[i][h]].max(0.0)).collect();
        let soc: Vec<f64> = (0..HOURS_PER_DAY).map(|h| sol.x[problem.soc[i][h]]).collect();
        for h in 0..HOURS_PER_DAY {
            if p_ch[h] > 1e-6 && p_dch[h] > 1e-6 {
                simultaneous.push((i, h));
            }
        }
        lots.push(LotSchedule {
            bus: problem.lot_buses[i],
            p_sell: p_dch.clone(),
            p_buy: p_ch.clone(),
            p_ch,
            p_dch,
            soc,
        });
    }
    let chp_kw: Vec<f64> = (0..HOURS_PER_DAY).map(|h| sol.x[problem.chp[h]]).collect();
    let wt_kw: Vec<f64> = (0..HOURS_PER_DAY).map(|h| sol.x[problem.wt[h]]).collect();
    // Snap the free import variable onto exact balance; it carries no cost
    // and absorbs the equality residual.
    let mut grid_import_kw = Vec::with_capacity(HOURS_PER_DAY);
    for h in 0..HOURS_PER_DAY {
        let mut lot_net = 0.0;
        for (i, lot) in lots.iter().enumerate() {
            lot_net += (1.0 + input.loss_factors[i]) * (lot.p_ch[h] - lot.p_dch[h]);
        }
        grid_import_kw.push(input.load_kw[h] + input.base_loss_kw[h] + lot_net - chp_kw[h] - wt_kw[h]);
    }
    let schedule = DispatchSchedule {
        day: input.prices.label.clone(),
        lots,
        chp_kw,
        wt_kw,
        grid_import_kw,
        objective: sol.objective,
        simultaneous,
    };
    let issues = validate_schedule(problem, &schedule);
    debug_assert!(issues.is_empty(), "schedule invariants violated: {issues:?}");
    Ok(schedule)
}

/// Independent feasibility check of a solved schedule: recomputes every
/// constraint from the schedule values, without consulting the solver.
pub fn validate_schedule(problem: &SchedulingProblem, s: &DispatchSchedule) -> Vec<String> {
    let input = &problem.input;
    let mut issues = Vec::new();
    for h in 0..HOURS_PER_DAY {
        let mut lot_net = 0.0;
        for (i, lot) in s.lots.iter().enumerate() {
            lot_net += (1.0 + input.loss_factors[i]) * (lot.p_ch[h] - lot.p_dch[h]);
        }
        let residual = s.chp_kw[h] + s.wt_kw[h] + s.grid_import_kw[h]
            - input.load_kw[h]
            - input.base_loss_kw[h]
            - lot_net;
        if residual.abs() > 1e-8 {
            issues.push(format!("hour {h}: balance residual {residual:.3e} kW"));
        }
    }
    for (i, lot) in s.lots.iter().enumerate() {
        let env = &input.envelopes[i];
        for h in 0..HOURS_PER_DAY {
            let prev = (h + HOURS_PER_DAY - 1) % HOURS_PER_DAY;
            let dch_coeff = match input.soc_convention {
                SocConvention::Physical => 1.0 / env.eta_d[h],
                SocConvention::Literal => env.eta_d[h],
            };
            let expected = lot.soc[prev] + env.arrival_kwh[h] - env.departure_kwh[h]
                + env.eta_c[h] * lot.p_ch[h]
                - dch_coeff * lot.p_dch[h];
            if (lot.soc[h] - expected).abs() > 1e-9 {
                issues.push(format!(
                    "lot {i} hour {h}: SOC recursion residual {:.3e} kWh",
                    lot.soc[h] - expected
                ));
            }
            let floor = env.departure_floor_kwh[h];
            if lot.soc[h] < env.soc_min_kwh[h].max(floor) - 1e-6
                || lot.soc[h] > env.soc_max_kwh[h].max(floor) + 1e-6
            {
                issues.push(format!("lot {i} hour {h}: SOC {:.3} outside bounds", lot.soc[h]));
            }
            if lot.p_ch[h] < -1e-9 || lot.p_ch[h] > env.max_charge_kw[h] + 1e-6 {
                issues.push(format!("lot {i} hour {h}: charge power out of range"));
            }
            if lot.p_dch[h] < -1e-9 || lot.p_dch[h] > env.max_discharge_kw[h] + 1e-6 {
                issues.push(format!("lot {i} hour {h}: discharge power out of range"));
            }
        }
    }
    issues
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfitReport {
    pub day: String,
    pub revenue_sell: f64,
    pub cost_buy: f64,
    pub loss_cost_proxy: f64,
    pub profit: f64,
}

/// Recomputes the profit terms from first principles; the result matches
/// the LP objective of the schedule within 1e-6.
pub fn profit(
    schedule: &DispatchSchedule,
    prices: &PriceSeries,
    loss_factors: &[f64],
) -> Result<ProfitReport, Stage2Error> {
    prices.validate()?;
    if loss_factors.len() != schedule.lots.len() {
        return Err(Stage2Error::LengthMismatch {
            what: "loss factors",
            got: loss_factors.len(),
            want: schedule.lots.len(),
        });
    }
    let mut revenue = 0.0;
    let mut cost = 0.0;
    let mut loss = 0.0;
    for (i, lot) in schedule.lots.iter().enumerate() {
        for h in 0..HOURS_PER_DAY {
            revenue += prices.sell[h] * lot.p_sell[h];
            cost += prices.buy[h] * lot.p_buy[h];
            loss += prices.buy[h] * loss_factors[i] * (lot.p_ch[h] + lot.p_dch[h]);
        }
    }
    Ok(ProfitReport {
        day: schedule.day.clone(),
        revenue_sell: revenue,
        cost_buy: cost,
        loss_cost_proxy: loss,
        profit: revenue - cost - loss,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonProfit {
    /// (day label, weight in days/yr, daily profit $).
    pub days: Vec<(String, f64, f64)>,
    /// Present-worth total over the planning horizon, $.
    pub horizon_value: f64,
}

/// Aggregates representative-day profits over the horizon: each year's
/// profit is `sum(weight * day profit)` discounted at the rate of
/// [`EconomicParams`].
pub fn horizon_aggregate(
    daily: &[ProfitReport],
    econ: &EconomicParams,
    day_weights: &[f64],
) -> Result<HorizonProfit, Stage2Error> {
    if daily.len() != day_weights.len() {
        return Err(Stage2Error::LengthMismatch {
            what: "day weights",
            got: day_weights.len(),
            want: daily.len(),
        });
    }
    let total_w: f64 = day_weights.iter().sum();
    if (total_w - 365.0).abs() > 1e-9 {
        return Err(Stage2Error::BadWeights(total_w));
    }
    let annual: f64 = daily
        .iter()
        .zip(day_weights)
        .map(|(r, w)| w * r.profit)
        .sum();
    let d = econ.discount_rate;
    let horizon_value: f64 = (1..=econ.horizon_years)
        .map(|t| annual * (1.0 + d).powi(-(t as i32)))
        .sum();
    Ok(HorizonProfit {
        days: daily
            .iter()
            .zip(day_weights)
            .map(|(r, w)| (r.day.clone(), *w, r.profit))
            .collect(),
        horizon_value,
    })
}

/// Solves a batch of daily problems, in parallel when the `parallel`
/// feature is enabled.
pub fn solve_days(
    problems: &[SchedulingProblem],
) -> Vec<Result<DispatchSchedule, Stage2Error>> {
    #[cfg(feature = "parallel")]
    {
        problems.par_iter().map(solve_schedule).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        solve_days_seq(problems)
    }
}

/// Always-sequential batch solve; the benchmark baseline.
pub fn solve_days_seq(
    problems: &[SchedulingProblem],
) -> Vec<Result<DispatchSchedule, Stage2Error>> {
    problems.iter().map(solve_schedule).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage1::{CostBreakdown, PlannedLot};

    fn one_lot_plan(size: f64) -> SitingPlan {
        SitingPlan {
            lots: vec![PlannedLot { candidate: 0, bus: 2, size_kw: size }],
            sizes_kw: vec![size],
            cost_breakdown: CostBreakdown::default(),
            objective: 0.0,
        }
    }

    /// Envelope with vehicles plugged at hours 0 and 1 only: 10 kWh of
    /// capacity, 10 kW both ways, arriving empty, no departure target.
    fn toy_envelope() -> LotEnvelope {
        let mut env = LotEnvelope {
            max_charge_kw: vec![0.0; 24],
            max_discharge_kw: vec![0.0; 24],
            capacity_kwh: vec![0.0; 24],
            soc_min_kwh: vec![0.0; 24],
            soc_max_kwh: vec![0.0; 24],
            arrival_kwh: vec![0.0; 24],
            departure_kwh: vec![0.0; 24],
            departure_floor_kwh: vec![0.0; 24],
            eta_c: vec![1.0; 24],
            eta_d: vec![1.0; 24],
        };
        for h in 0..2 {
            env.max_charge_kw[h] = 10.0;
            env.max_discharge_kw[h] = 10.0;
            env.capacity_kwh[h] = 10.0;
            env.soc_max_kwh[h] = 10.0;
        }
        env
    }

    fn toy_input(sell: Vec<f64>, buy: Vec<f64>) -> SchedulingInput {
        SchedulingInput {
            prices: PriceSeries { label: "toy".into(), sell, buy },
            envelopes: vec![toy_envelope()],
            load_kw: vec![100.0; 24],
            base_loss_kw: vec![0.0; 24],
            loss_factors: vec![0.0],
            chp_min_kw: 0.0,
            chp_max_kw: 200.0,
            wt_expected_kw: 50.0,
            soc_convention: SocConvention::Physical,
        }
    }

    /// 2-hour lossless arbitrage toy: buy 10 kWh at $0.05, sell at $0.50.
    /// Hand enumeration gives exactly $4.50.
    #[test]
    fn arbitrage_toy_exact_profit() {
        let mut sell = vec![0.0; 24];
        let mut buy = vec![10.0; 24]; // prohibitive except hour 0
        sell[1] = 0.5;
        buy[0] = 0.05;
        let input = toy_input(sell, buy);
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let s = solve_schedule(&p).unwrap();
        assert!((s.objective - 4.5).abs() < 1e-9, "objective {}", s.objective);
        assert!((s.lots[0].p_buy[0] - 10.0).abs() < 1e-9);
        assert!((s.lots[0].p_sell[1] - 10.0).abs() < 1e-9);
        let rep = profit(&s, &input.prices, &input.loss_factors).unwrap();
        assert!((rep.profit - 4.5).abs() < 1e-9);
        assert!((rep.profit - s.objective).abs() < 1e-6);
    }

    #[test]
    fn zero_sell_price_means_no_selling() {
        let sell = vec![0.0; 24];
        let buy = vec![0.1; 24];
        let mut input = toy_input(sell, buy);
        input.loss_factors = vec![0.02];
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let s = solve_schedule(&p).unwrap();
        for h in 0..24 {
            assert!(s.lots[0].p_sell[h] < 1e-9, "sold at hour {h}");
        }
    }

    #[test]
    fn flat_prices_no_arbitrage_profit() {
        let mut input = toy_input(vec![0.1; 24], vec![0.1; 24]);
        for env in &mut input.envelopes {
            env.eta_c = vec![0.9; 24];
            env.eta_d = vec![0.9; 24];
        }
        input.loss_factors = vec![0.01];
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let s = solve_schedule(&p).unwrap();
        assert!(s.objective <= 1e-9, "positive arbitrage at flat prices: {}", s.objective);
    }

    #[test]
    fn departure_floor_is_met() {
        let mut env = toy_envelope();
        env.departure_floor_kwh[1] = 8.0;
        env.departure_kwh[2] = 8.0;
        let mut input = toy_input(vec![0.0; 24], vec![0.5; 24]);
        input.envelopes = vec![env];
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let s = solve_schedule(&p).unwrap();
        assert!(s.lots[0].soc[1] >= 8.0 - 1e-6);
        assert!(validate_schedule(&p, &s).is_empty());
    }

    #[test]
    fn unreachable_floor_rejected() {
        let mut env = toy_envelope();
        env.eta_c = vec![0.5; 24];
        env.departure_floor_kwh[1] = 50.0; // 2 h x 10 kW x 0.5 = 10 kWh max
        let mut input = toy_input(vec![0.0; 24], vec![0.5; 24]);
        input.envelopes = vec![env];
        let err = build_scheduling_problem(&one_lot_plan(10.0), &input);
        assert!(matches!(err, Err(Stage2Error::InfeasibleTargets { .. })));
    }

    #[test]
    fn empty_plan_rejected() {
        let input = toy_input(vec![0.1; 24], vec![0.1; 24]);
        let plan = SitingPlan::empty(0);
        assert!(matches!(
            build_scheduling_problem(&plan, &input),
            Err(Stage2Error::EmptyPlan)
        ));
    }

    #[test]
    fn profit_linearity_in_sell_prices() {
        let mut sell = vec![0.0; 24];
        let mut buy = vec![10.0; 24];
        sell[1] = 0.5;
        buy[0] = 0.05;
        let input = toy_input(sell.clone(), buy.clone());
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let s = solve_schedule(&p).unwrap();
        let base = profit(&s, &input.prices, &input.loss_factors).unwrap();
        let doubled = PriceSeries {
            label: "x2".into(),
            sell: sell.iter().map(|v| 2.0 * v).collect(),
            buy,
        };
        let rep = profit(&s, &doubled, &input.loss_factors).unwrap();
        assert!((rep.revenue_sell - 2.0 * base.revenue_sell).abs() < 1e-9);
    }

    #[test]
    fn zero_schedule_zero_profit() {
        let input = toy_input(vec![0.1; 24], vec![0.2; 24]);
        let s = DispatchSchedule {
            day: "toy".into(),
            lots: vec![LotSchedule {
                bus: 2,
                p_ch: vec![0.0; 24],
                p_dch: vec![0.0; 24],
                p_sell: vec![0.0; 24],
                p_buy: vec![0.0; 24],
                soc: vec![0.0; 24],
            }],
            chp_kw: vec![0.0; 24],
            wt_kw: vec![0.0; 24],
            grid_import_kw: vec![0.0; 24],
            objective: 0.0,
            simultaneous: Vec::new(),
        };
        let rep = profit(&s, &input.prices, &input.loss_factors).unwrap();
        assert_eq!(rep.profit, 0.0);
    }

    fn econ() -> EconomicParams {
        EconomicParams {
            discount_rate: 0.1,
            horizon_years: 4,
            c_inv_per_kw: 300.0,
            c_om_per_kw_yr: 20.0,
            c_il_per_kwh: 2.0,
        }
    }

    #[test]
    fn horizon_aggregation_consistency() {
        let day = |label: &str, p: f64| ProfitReport {
            day: label.into(),
            revenue_sell: p,
            cost_buy: 0.0,
            loss_cost_proxy: 0.0,
            profit: p,
        };
        // Four identical representative days vs a single 365-weighted day.
        let reps: Vec<ProfitReport> = (0..4).map(|i| day(&format!("d{i}"), 12.5)).collect();
        let agg4 = horizon_aggregate(&reps, &econ(), &[91.0, 91.0, 91.0, 92.0]).unwrap();
        let agg1 = horizon_aggregate(&[day("single", 12.5)], &econ(), &[365.0]).unwrap();
        assert!((agg4.horizon_value - agg1.horizon_value).abs() < 1e-9);

        let zero = horizon_aggregate(&[day("z", 0.0)], &econ(), &[365.0]).unwrap();
        assert_eq!(zero.horizon_value, 0.0);

        // T = 1, single day: 365 * (1+d)^-1 * profit.
        let mut e1 = econ();
        e1.horizon_years = 1;
        let agg = horizon_aggregate(&[day("s", 2.0)], &e1, &[365.0]).unwrap();
        assert!((agg.horizon_value - 365.0 * 2.0 / 1.1).abs() < 1e-9);

        assert!(matches!(
            horizon_aggregate(&[day("s", 1.0)], &econ(), &[364.0]),
            Err(Stage2Error::BadWeights(_))
        ));
    }

    #[test]
    fn day_solve_order_is_irrelevant() {
        let mut sell = vec![0.05; 24];
        sell[1] = 0.5;
        let buy = vec![0.06; 24];
        let input = toy_input(sell, buy);
        let p = build_scheduling_problem(&one_lot_plan(10.0), &input).unwrap();
        let problems = vec![p.clone(), p.clone(), p];
        let par = solve_days(&problems);
        let seq = solve_days_seq(&problems);
        for (a, b) in par.iter().zip(&seq) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(a.objective, b.objective);
            assert_eq!(a.lots[0].p_ch, b.lots[0].p_ch);
        }
    }
}
