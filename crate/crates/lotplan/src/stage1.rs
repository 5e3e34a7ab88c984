//! Stage 1: siting and sizing of parking lots.
//!
//! Binary site selection with continuous sizing, minimizing investment,
//! O&M and expected-ENS cost over the planning horizon under linearized
//! network constraints, re-verified afterwards with AC power flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, GridError, LinearFlowModel, Network};
use crate::optim::{self, LinearProgram, MilpProblem, Relation, Sense, Status};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomicParams {
    /// Discount rate, fraction per year.
    pub discount_rate: f64,
    /// Planning horizon, years.
    pub horizon_years: u32,
    /// Investment cost, $/kW installed.
    pub c_inv_per_kw: f64,
    /// O&M cost, $/kW-yr.
    pub c_om_per_kw_yr: f64,
    /// Interruption cost, $/kWh unserved.
    pub c_il_per_kwh: f64,
}

#[derive(Debug, Error)]
pub enum Stage1Error {
    #[error("discount rate must be positive")]
    NonPositiveRate,
    #[error("no candidate sites")]
    NoCandidates,
    #[error("candidate bus id {0} not in network")]
    UnknownBus(usize),
    #[error("total candidate capacity {available:.1} kW cannot cover the fleet charging demand {required:.1} kW")]
    InfeasibleDemand { available: f64, required: f64 },
    #[error("siting problem is infeasible")]
    Infeasible,
    #[error("solver hit its iteration/node limit")]
    IterationLimit,
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), Stage1Error> {
        if self.discount_rate <= 0.0 || self.horizon_years < 1 {
            return Err(Stage1Error::NonPositiveRate);
        }
        Ok(())
    }

    /// Present-worth factor of one $ per year over the horizon.
    pub fn present_worth(&self) -> f64 {
        let d = self.discount_rate;
        (1..=self.horizon_years).map(|t| (1.0 + d).powi(-(t as i32))).sum()
    }
}

/// Capital-recovery factor `d(1+d)^t / ((1+d)^t - 1)`.
pub fn crf(d: f64, t: u32) -> Result<f64, Stage1Error> {
    if d <= 0.0 || t < 1 {
        return Err(Stage1Error::NonPositiveRate);
    }
    let g = (1.0 + d).powi(t as i32);
    Ok(d * g / (g - 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSite {
    /// Bus id hosting the lot.
    pub bus: usize,
    /// Transformer capacity cap, kW.
    pub s_max_kw: f64,
    /// Charging power bounds, kW.
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    /// Site-specific multiplier on the $/kW costs (terrain, land).
    #[serde(default = "one")]
    pub cost_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl CandidateSite {
    /// Largest installable size, kW.
    pub fn size_cap(&self) -> f64 {
        self.s_max_kw.min(self.p_max_kw)
    }
}

/// Aggregate fleet requirement the selected lots must cover, kW.
#[derive(Debug, Clone, Copy)]
pub struct SizingDemand {
    pub required_power_kw: f64,
}

/// A load block for the ENS term: system load factor and hours per year.
#[derive(Debug, Clone, Copy)]
pub struct LoadBlock {
    pub factor: f64,
    pub hours_per_year: f64,
}

/// Collapses a 24-hour load profile into `k` duration blocks (sorted levels,
/// equal hour counts) weighted over 365 days.
pub fn load_blocks(profile: &[f64], k: usize) -> Vec<LoadBlock> {
    assert!(k >= 1 && !profile.is_empty());
    let mut sorted = profile.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let per = sorted.len().div_ceil(k);
    sorted
        .chunks(per)
        .map(|c| LoadBlock {
            factor: c.iter().sum::<f64>() / c.len() as f64,
            hours_per_year: 365.0 * c.len() as f64,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannedLot {
    pub candidate: usize,
    pub bus: usize,
    pub size_kw: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub investment: f64,
    pub om: f64,
    pub ens: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.investment + self.om + self.ens
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SitingPlan {
    /// Chosen lots only (size > 0).
    pub lots: Vec<PlannedLot>,
    /// Size per candidate index, zero where unselected.
    pub sizes_kw: Vec<f64>,
    pub cost_breakdown: CostBreakdown,
    pub objective: f64,
}

impl SitingPlan {
    pub fn empty(num_candidates: usize) -> Self {
        SitingPlan {
            lots: Vec::new(),
            sizes_kw: vec![0.0; num_candidates],
            cost_breakdown: CostBreakdown::default(),
            objective: 0.0,
        }
    }

    pub fn total_size_kw(&self) -> f64 {
        self.sizes_kw.iter().sum()
    }

    /// Per-bus backup capability, kW (lot discharge-rate credit for ENS).
    pub fn backup_by_bus(&self, net: &Network) -> Vec<f64> {
        let mut backup = vec![0.0; net.num_buses()];
        for lot in &self.lots {
            if let Some(b) = net.bus_index(lot.bus) {
                backup[b] += lot.size_kw;
            }
        }
        backup
    }
}

/// The assembled MILP plus the index maps needed to read a solution back.
pub struct SitingProblem {
    pub milp: MilpProblem,
    pub candidates: Vec<CandidateSite>,
    pub econ: EconomicParams,
    x_vars: Vec<usize>,
    s_vars: Vec<usize>,
    /// Per (line, block): downstream load kW at that block.
    ens_terms: Vec<EnsTerm>,
}

struct EnsTerm {
    fo_rate: f64,
    hours_per_year: f64,
    downstream_load_kw: f64,
    /// Candidate indices whose bus lies downstream of the line.
    candidates: Vec<usize>,
}

/// Builds the siting MILP.
///
/// `peak_loads` are per-bus (kW, kvar) at the system peak; `profile` is the
/// 24-hour system load factor shape used for the ENS duration blocks.
/// `linear` must come from [`grid::linearize`] at the peak operating point.
pub fn build_siting_problem(
    net: &Network,
    candidates: &[CandidateSite],
    econ: &EconomicParams,
    demand: &SizingDemand,
    linear: &LinearFlowModel,
    peak_loads: &[(f64, f64)],
    profile: &[f64],
    v_margin: f64,
) -> Result<SitingProblem, Stage1Error> {
    econ.validate()?;
    if candidates.is_empty() {
        return Err(Stage1Error::NoCandidates);
    }
    let available: f64 = candidates.iter().map(|c| c.size_cap()).sum();
    if available < demand.required_power_kw {
        return Err(Stage1Error::InfeasibleDemand {
            available,
            required: demand.required_power_kw,
        });
    }
    let cand_idx: Vec<usize> = candidates
        .iter()
        .map(|c| net.bus_index(c.bus).ok_or(Stage1Error::UnknownBus(c.bus)))
        .collect::<Result<_, _>>()?;

    let pw = econ.present_worth();
    let annual_inv = crf(econ.discount_rate, econ.horizon_years)? * econ.c_inv_per_kw;
    let s_base_kw = net.base_mva * 1000.0;

    let mut lp = LinearProgram::new(Sense::Minimize);
    let x_vars: Vec<usize> = (0..candidates.len())
        .map(|i| lp.add_var(format!("x{i}"), 0.0, 1.0, 0.0))
        .collect();
    let s_vars: Vec<usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let per_kw = pw * (annual_inv + econ.c_om_per_kw_yr) * c.cost_factor;
            lp.add_var(format!("s{i}"), 0.0, c.size_cap(), per_kw)
        })
        .collect();

    // Linking and activation bounds: x=0 forces s=0; x=1 allows [p_min, cap].
    for (i, c) in candidates.iter().enumerate() {
        lp.add_row(vec![(s_vars[i], 1.0), (x_vars[i], -c.size_cap())], Relation::Le, 0.0);
        if c.p_min_kw > 0.0 {
            lp.add_row(vec![(s_vars[i], 1.0), (x_vars[i], -c.p_min_kw)], Relation::Ge, 0.0);
        }
    }
    // Fleet charging demand coverage.
    lp.add_row(
        s_vars.iter().map(|&v| (v, 1.0)).collect(),
        Relation::Ge,
        demand.required_power_kw,
    );

    // Linearized voltage limits: extra withdrawal s_i lowers V along shared paths.
    for n in 0..net.num_buses() {
        if n == net.slack_index() {
            continue;
        }
        let terms: Vec<(usize, f64)> = (0..candidates.len())
            .filter_map(|i| {
                let sens = linear.v_sens_p[n][cand_idx[i]];
                (sens > 0.0).then_some((s_vars[i], sens / s_base_kw))
            })
            .collect();
        if terms.is_empty() {
            continue;
        }
        let headroom = linear.v0[n] - net.buses[n].v_min - v_margin;
        lp.add_row(terms, Relation::Le, headroom.max(0.0));
    }
    // Linearized ampacity: downstream lot charging adds to the line flow.
    for (li, line) in net.lines.iter().enumerate() {
        let down = net.downstream_buses(li);
        let terms: Vec<(usize, f64)> = (0..candidates.len())
            .filter_map(|i| down.binary_search(&cand_idx[i]).ok().map(|_| (s_vars[i], 1.0 / s_base_kw)))
            .collect();
        if terms.is_empty() {
            continue;
        }
        let i_max_pu = line.i_max_a / net.i_base_a();
        lp.add_row(terms, Relation::Le, (i_max_pu - linear.i0[li]).max(0.0));
    }

    // ENS: per line and load block, unserved >= downstream load - lot backup.
    let blocks = load_blocks(profile, 4);
    let mut ens_terms = Vec::new();
    for (li, line) in net.lines.iter().enumerate() {
        if line.fo_rate == 0.0 {
            continue;
        }
        let down = net.downstream_buses(li);
        let peak_down: f64 = down.iter().map(|&b| peak_loads[b].0).sum();
        let cand_down: Vec<usize> = (0..candidates.len())
            .filter(|&i| down.binary_search(&cand_idx[i]).is_ok())
            .collect();
        for block in &blocks {
            let load = peak_down * block.factor;
            let u = lp.add_var(
                format!("u_l{li}_b{}", ens_terms.len()),
                0.0,
                f64::INFINITY,
                pw * line.fo_rate * econ.c_il_per_kwh * block.hours_per_year,
            );
            let mut terms = vec![(u, 1.0)];
            for &i in &cand_down {
                terms.push((s_vars[i], 1.0));
            }
            lp.add_row(terms, Relation::Ge, load);
            ens_terms.push(EnsTerm {
                fo_rate: line.fo_rate,
                hours_per_year: block.hours_per_year,
                downstream_load_kw: load,
                candidates: cand_down.clone(),
            });
        }
    }

    Ok(SitingProblem {
        milp: MilpProblem {
            lp,
            integer_vars: x_vars.clone(),
        },
        candidates: candidates.to_vec(),
        econ: econ.clone(),
        x_vars,
        s_vars,
        ens_terms,
    })
}

impl SitingProblem {
    /// Indices of the binary selection variables, one per candidate.
    pub fn binary_vars(&self) -> &[usize] {
        &self.x_vars
    }

    /// Recomputes the cost breakdown from candidate sizes, independent of
    /// the solver objective.
    pub fn cost_breakdown(&self, sizes_kw: &[f64]) -> CostBreakdown {
        let pw = self.econ.present_worth();
        let annual_inv = crf(self.econ.discount_rate, self.econ.horizon_years)
            .expect("validated economics")
            * self.econ.c_inv_per_kw;
        let mut inv = 0.0;
        let mut om = 0.0;
        for (i, c) in self.candidates.iter().enumerate() {
            inv += pw * annual_inv * c.cost_factor * sizes_kw[i];
            om += pw * self.econ.c_om_per_kw_yr * c.cost_factor * sizes_kw[i];
        }
        let mut ens = 0.0;
        for term in &self.ens_terms {
            let backup: f64 = term.candidates.iter().map(|&i| sizes_kw[i]).sum();
            ens += pw
                * term.fo_rate
                * self.econ.c_il_per_kwh
                * term.hours_per_year
                * (term.downstream_load_kw - backup).max(0.0);
        }
        CostBreakdown { investment: inv, om, ens }
    }

    fn extract(&self, x: &[f64]) -> SitingPlan {
        let sizes: Vec<f64> = self
            .s_vars
            .iter()
            .map(|&v| if x[v] > 1e-6 { x[v] } else { 0.0 })
            .collect();
        let lots = sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0.0)
            .map(|(i, &s)| PlannedLot {
                candidate: i,
                bus: self.candidates[i].bus,
                size_kw: s,
            })
            .collect();
        let breakdown = self.cost_breakdown(&sizes);
        SitingPlan {
            lots,
            sizes_kw: sizes,
            cost_breakdown: breakdown,
            objective: 0.0,
        }
    }
}

/// Solves the siting MILP and extracts the plan; the cost breakdown is
/// recomputed from first principles and must match the solver objective.
pub fn solve_siting(problem: &SitingProblem, gap: f64) -> Result<SitingPlan, Stage1Error> {
    let sol = optim::solve_milp(&problem.milp, gap);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Stage1Error::Infeasible),
        Status::Unbounded | Status::IterationLimit => return Err(Stage1Error::IterationLimit),
    }
    let mut plan = problem.extract(&sol.x);
    plan.objective = sol.objective;
    let drift = (plan.cost_breakdown.total() - plan.objective).abs();
    debug_assert!(
        drift <= 1e-6 * plan.objective.abs().max(1.0),
        "breakdown drifted from objective by {drift}"
    );
    Ok(plan)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub element: String,
    pub value: f64,
    pub limit: f64,
    pub margin: f64,
}

/// AC re-check of a plan at peak load with every lot charging at its
/// installed size. Returns one entry per violated bound; empty = accepted.
pub fn verify_plan(
    plan: &SitingPlan,
    net: &Network,
    peak_loads: &[(f64, f64)],
) -> Result<Vec<Violation>, Stage1Error> {
    let mut inj = peak_loads.to_vec();
    for lot in &plan.lots {
        if let Some(b) = net.bus_index(lot.bus) {
            inj[b].0 += lot.size_kw;
        }
    }
    let sol = grid::run_power_flow(net, &inj)?;
    let mut out = Vec::new();
    for (n, bus) in net.buses.iter().enumerate() {
        if sol.v[n] < bus.v_min {
            out.push(Violation {
                kind: "undervoltage".into(),
                element: format!("bus {}", bus.id),
                value: sol.v[n],
                limit: bus.v_min,
                margin: bus.v_min - sol.v[n],
            });
        } else if sol.v[n] > bus.v_max {
            out.push(Violation {
                kind: "overvoltage".into(),
                element: format!("bus {}", bus.id),
                value: sol.v[n],
                limit: bus.v_max,
                margin: sol.v[n] - bus.v_max,
            });
        }
    }
    for (li, line) in net.lines.iter().enumerate() {
        let i_max_pu = line.i_max_a / net.i_base_a();
        if sol.i[li] > i_max_pu {
            out.push(Violation {
                kind: "overcurrent".into(),
                element: format!("line {}-{}", line.from, line.to),
                value: sol.i[li],
                limit: i_max_pu,
                margin: sol.i[li] - i_max_pu,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Line};

    #[test]
    fn crf_identities() {
        // One-year horizon: the factor is exactly 1 + d.
        assert!((crf(0.07, 1).unwrap() - 1.07).abs() < 1e-12);
        assert!((crf(0.1, 4).unwrap() - 0.315471).abs() < 1e-6);
        assert!(crf(0.0, 4).is_err());
        // crf > d and decreasing in t.
        let mut prev = f64::INFINITY;
        for t in 1..=30 {
            let f = crf(0.08, t).unwrap();
            assert!(f > 0.08);
            assert!(f < prev);
            prev = f;
        }
        // Monotone increasing in d.
        let mut last = 0.0;
        for i in 1..=20 {
            let f = crf(0.02 * i as f64, 4).unwrap();
            assert!(f > last);
            last = f;
        }
    }

    fn feeder() -> (Network, Vec<(f64, f64)>) {
        // slack(1) - 2 - 3, loads at 2 and 3.
        let buses = vec![
            Bus { id: 1, load_p: 0.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, is_slack: true },
            Bus { id: 2, load_p: 200.0, load_q: 60.0, v_min: 0.9, v_max: 1.1, is_slack: false },
            Bus { id: 3, load_p: 150.0, load_q: 40.0, v_min: 0.9, v_max: 1.1, is_slack: false },
        ];
        let lines = vec![
            Line { from: 1, to: 2, r_ohm: 0.05, x_ohm: 0.08, i_max_a: 400.0, fo_rate: 0.02 },
            Line { from: 2, to: 3, r_ohm: 0.05, x_ohm: 0.08, i_max_a: 400.0, fo_rate: 0.03 },
        ];
        let net = Network::new(buses, lines, 1.0, 4.8).unwrap();
        let loads = vec![(0.0, 0.0), (200.0, 60.0), (150.0, 40.0)];
        (net, loads)
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

    fn build(
        net: &Network,
        loads: &[(f64, f64)],
        candidates: &[CandidateSite],
        required: f64,
    ) -> SitingProblem {
        let op = grid::run_power_flow(net, loads).unwrap();
        let lin = grid::linearize(net, &op).unwrap();
        let profile = vec![1.0; 24];
        build_siting_problem(
            net,
            candidates,
            &econ(),
            &SizingDemand { required_power_kw: required },
            &lin,
            loads,
            &profile,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_demand_zero_benefit_selects_nothing() {
        let (mut net, loads) = feeder();
        for l in &mut net.lines {
            l.fo_rate = 0.0; // no ENS benefit either
        }
        let net = Network::new(net.buses.clone(), net.lines.clone(), 1.0, 4.8).unwrap();
        let cand = vec![CandidateSite { bus: 3, s_max_kw: 250.0, p_min_kw: 0.0, p_max_kw: 250.0, cost_factor: 1.0 }];
        let p = build(&net, &loads, &cand, 0.0);
        let plan = solve_siting(&p, 1e-6).unwrap();
        assert!(plan.lots.is_empty());
        assert!(plan.objective.abs() < 1e-9);
    }

    #[test]
    fn dominated_candidate_never_selected() {
        let (net, loads) = feeder();
        // Same bus, one strictly cheaper with no binding cap: the expensive
        // one is never used.
        let cand = vec![
            CandidateSite { bus: 3, s_max_kw: 2000.0, p_min_kw: 0.0, p_max_kw: 2000.0, cost_factor: 1.0 },
            CandidateSite { bus: 3, s_max_kw: 2000.0, p_min_kw: 0.0, p_max_kw: 2000.0, cost_factor: 2.0 },
        ];
        let p = build(&net, &loads, &cand, 150.0);
        let plan = solve_siting(&p, 1e-6).unwrap();
        assert!(plan.sizes_kw[1] == 0.0, "dominated candidate selected: {:?}", plan.sizes_kw);
        assert!(plan.sizes_kw[0] >= 150.0 - 1e-6);
    }

    /// Brute force over all selections with LP sizing per selection.
    fn brute_force(p: &SitingProblem) -> f64 {
        let k = p.x_vars.len();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << k) {
            let mut lp = p.milp.lp.clone();
            for (i, &xv) in p.x_vars.iter().enumerate() {
                let v = if mask & (1 << i) != 0 { 1.0 } else { 0.0 };
                lp.lower[xv] = v;
                lp.upper[xv] = v;
            }
            let sol = optim::solve_lp(&lp);
            if sol.status == Status::Optimal && sol.objective < best {
                best = sol.objective;
            }
        }
        best
    }

    #[test]
    fn milp_matches_exhaustive_enumeration() {
        let (net, loads) = feeder();
        let cand = vec![
            CandidateSite { bus: 2, s_max_kw: 150.0, p_min_kw: 0.0, p_max_kw: 150.0, cost_factor: 1.0 },
            CandidateSite { bus: 3, s_max_kw: 200.0, p_min_kw: 50.0, p_max_kw: 200.0, cost_factor: 1.2 },
            CandidateSite { bus: 3, s_max_kw: 100.0, p_min_kw: 0.0, p_max_kw: 100.0, cost_factor: 0.8 },
        ];
        let p = build(&net, &loads, &cand, 120.0);
        let plan = solve_siting(&p, 1e-6).unwrap();
        let oracle = brute_force(&p);
        let rel = (plan.objective - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel < 1e-6, "milp {} vs brute force {}", plan.objective, oracle);
    }

    #[test]
    fn infeasible_demand_detected() {
        let (net, loads) = feeder();
        let cand = vec![CandidateSite { bus: 3, s_max_kw: 50.0, p_min_kw: 0.0, p_max_kw: 50.0, cost_factor: 1.0 }];
        let op = grid::run_power_flow(&net, &loads).unwrap();
        let lin = grid::linearize(&net, &op).unwrap();
        let err = build_siting_problem(
            &net,
            &cand,
            &econ(),
            &SizingDemand { required_power_kw: 500.0 },
            &lin,
            &loads,
            &vec![1.0; 24],
            0.0,
        );
        assert!(matches!(err, Err(Stage1Error::InfeasibleDemand { .. })));
    }

    #[test]
    fn verify_flags_inflated_plan() {
        let (net, loads) = feeder();
        let empty = SitingPlan::empty(0);
        assert!(verify_plan(&empty, &net, &loads).unwrap().is_empty());

        let bad = SitingPlan {
            lots: vec![PlannedLot { candidate: 0, bus: 3, size_kw: 25_000.0 }],
            sizes_kw: vec![25_000.0],
            cost_breakdown: CostBreakdown::default(),
            objective: 0.0,
        };
        let report = verify_plan(&bad, &net, &loads).unwrap();
        assert!(report.iter().any(|v| v.kind == "undervoltage" && v.margin > 0.0));
    }

    #[test]
    fn selected_sizes_respect_linking() {
        let (net, loads) = feeder();
        let cand = vec![
            CandidateSite { bus: 2, s_max_kw: 100.0, p_min_kw: 0.0, p_max_kw: 100.0, cost_factor: 1.0 },
            CandidateSite { bus: 3, s_max_kw: 100.0, p_min_kw: 0.0, p_max_kw: 100.0, cost_factor: 1.0 },
        ];
        let p = build(&net, &loads, &cand, 150.0);
        let plan = solve_siting(&p, 1e-6).unwrap();
        for (i, &s) in plan.sizes_kw.iter().enumerate() {
            assert!(s <= cand[i].size_cap() + 1e-9);
        }
        assert!(plan.total_size_kw() >= 150.0 - 1e-6);
    }
}
