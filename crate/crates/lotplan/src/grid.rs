//! Radial network model: backward/forward sweep AC power flow, a
//! LinDistFlow-style linearization for constraint building, and evaluators
//! for losses, voltage deviation and expected energy not supplied.

use num_complex::Complex64;
use std::collections::BTreeSet;
use thiserror::Error;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 100;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Peak active load, kW.
    pub load_p: f64,
    /// Peak reactive load, kvar.
    pub load_q: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub i_max_a: f64,
    /// Forced outage rate, probability in [0, 1].
    pub fo_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub base_mva: f64,
    pub base_kv: f64,
    topo: Topology,
}

/// BFS tree rooted at the slack: parent pointers and a root-to-leaf order.
#[derive(Debug, Clone)]
struct Topology {
    slack: usize,
    /// Per bus index: (parent bus index, incoming line index); slack has none.
    parent: Vec<Option<(usize, usize)>>,
    /// Bus indices ordered root first.
    order: Vec<usize>,
    /// Per line: bus indices strictly downstream of the line (incl. `to`).
    downstream: Vec<Vec<usize>>,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("network has {0} slack buses, expected exactly one")]
    SlackCount(usize),
    #[error("network is not radial: {buses} buses but {lines} lines")]
    NonRadialNetwork { buses: usize, lines: usize },
    #[error("network is disconnected: bus {0} unreachable from the slack")]
    DisconnectedNetwork(usize),
    #[error("duplicate line between buses {0} and {1}")]
    DuplicateLine(usize, usize),
    #[error("unknown bus id {0} referenced by a line")]
    UnknownBus(usize),
    #[error("invalid {field} on bus {id}")]
    BadBus { id: usize, field: &'static str },
    #[error("invalid {field} on line {from}-{to}")]
    BadLine {
        from: usize,
        to: usize,
        field: &'static str,
    },
    #[error("power flow did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("operating point has not converged")]
    NotConverged,
    #[error("injection vector length {got} does not match bus count {want}")]
    BadInjections { got: usize, want: usize },
}

impl Network {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        base_mva: f64,
        base_kv: f64,
    ) -> Result<Self, GridError> {
        let nb = buses.len();
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(GridError::SlackCount(slacks.len()));
        }
        for b in &buses {
            if !(b.v_min > 0.0 && b.v_min < b.v_max) {
                return Err(GridError::BadBus { id: b.id, field: "voltage bounds" });
            }
            if b.load_p < 0.0 || b.load_q < 0.0 {
                return Err(GridError::BadBus { id: b.id, field: "load" });
            }
        }
        if lines.len() + 1 != nb {
            return Err(GridError::NonRadialNetwork {
                buses: nb,
                lines: lines.len(),
            });
        }
        let idx_of = |id: usize| -> Result<usize, GridError> {
            buses
                .iter()
                .position(|b| b.id == id)
                .ok_or(GridError::UnknownBus(id))
        };
        let mut seen = BTreeSet::new();
        for l in &lines {
            if l.r_ohm < 0.0 || l.x_ohm < 0.0 {
                return Err(GridError::BadLine { from: l.from, to: l.to, field: "impedance" });
            }
            if l.i_max_a <= 0.0 {
                return Err(GridError::BadLine { from: l.from, to: l.to, field: "ampacity" });
            }
            if !(0.0..=1.0).contains(&l.fo_rate) {
                return Err(GridError::BadLine { from: l.from, to: l.to, field: "fo_rate" });
            }
            let a = idx_of(l.from)?;
            let b = idx_of(l.to)?;
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(GridError::DuplicateLine(l.from, l.to));
            }
        }

        // BFS from the slack; orient every line parent -> child.
        let slack = slacks[0];
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nb];
        for (li, l) in lines.iter().enumerate() {
            let a = idx_of(l.from)?;
            let b = idx_of(l.to)?;
            adj[a].push((b, li));
            adj[b].push((a, li));
        }
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nb];
        let mut order = vec![slack];
        let mut visited = vec![false; nb];
        visited[slack] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, li) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = Some((u, li));
                    order.push(v);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(GridError::DisconnectedNetwork(buses[i].id));
        }

        // Downstream sets: accumulate leaf to root.
        let mut down_bus: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for &u in order.iter().rev() {
            down_bus[u].push(u);
            if let Some((p, _)) = parent[u] {
                let sub = down_bus[u].clone();
                down_bus[p].extend(sub);
            }
        }
        let mut downstream = vec![Vec::new(); lines.len()];
        for u in 0..nb {
            if let Some((_, li)) = parent[u] {
                downstream[li] = down_bus[u].clone();
                downstream[li].sort_unstable();
            }
        }

        Ok(Network {
            buses,
            lines,
            base_mva,
            base_kv,
            topo: Topology {
                slack,
                parent,
                order,
                downstream,
            },
        })
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> usize {
        self.topo.slack
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Impedance base, ohm.
    pub fn z_base(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Current base, ampere (three-phase convention).
    pub fn i_base_a(&self) -> f64 {
        self.base_mva * 1e6 / (3f64.sqrt() * self.base_kv * 1e3)
    }

    fn z_pu(&self, line: &Line) -> Complex64 {
        Complex64::new(line.r_ohm / self.z_base(), line.x_ohm / self.z_base())
    }

    /// Bus indices strictly downstream of `line_idx` (the side away from
    /// the slack after removing the line).
    pub fn downstream_buses(&self, line_idx: usize) -> &[usize] {
        &self.topo.downstream[line_idx]
    }

    /// Line indices on the path from the slack down to bus `bus_idx`.
    pub fn path_lines(&self, bus_idx: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut u = bus_idx;
        while let Some((p, li)) = self.topo.parent[u] {
            path.push(li);
            u = p;
        }
        path.reverse();
        path
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus, per-unit.
    pub v: Vec<f64>,
    /// Current magnitude per line, per-unit.
    pub i: Vec<f64>,
    pub losses_per_line: Vec<f64>,
    pub total_losses: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Slack active injection, kW (loads + losses for converged runs).
    pub slack_injection_kw: f64,
}

/// Backward/forward sweep power flow.
///
/// `injections` are per-bus net withdrawals (kW, kvar), positive for
/// consumption; the entry for the slack bus is ignored. Converges to
/// max |dV| < 1e-8 pu with a 100-iteration cap.
pub fn run_power_flow(
    net: &Network,
    injections: &[(f64, f64)],
) -> Result<PowerFlowSolution, GridError> {
    let nb = net.num_buses();
    if injections.len() != nb {
        return Err(GridError::BadInjections {
            got: injections.len(),
            want: nb,
        });
    }
    let s_pu: Vec<Complex64> = injections
        .iter()
        .map(|&(p, q)| Complex64::new(p, q) / (net.base_mva * 1000.0))
        .collect();

    let mut v = vec![Complex64::new(1.0, 0.0); nb];
    let mut branch = vec![Complex64::new(0.0, 0.0); net.lines.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PF_MAX_ITER {
        iterations += 1;
        // Backward: nodal currents, then branch currents leaf to root.
        let inode: Vec<Complex64> = (0..nb)
            .map(|k| {
                if k == net.topo.slack {
                    Complex64::new(0.0, 0.0)
                } else {
                    (s_pu[k] / v[k]).conj()
                }
            })
            .collect();
        // Branch current = sum of nodal currents in the subtree below it.
        let mut subtree = inode;
        for &u in net.topo.order.iter().rev() {
            if let Some((p, li)) = net.topo.parent[u] {
                branch[li] = subtree[u];
                let s = subtree[u];
                subtree[p] += s;
            }
        }
        // Forward: voltage drops root to leaf.
        let mut max_dv: f64 = 0.0;
        for &u in &net.topo.order {
            if let Some((p, li)) = net.topo.parent[u] {
                let z = net.z_pu(&net.lines[li]);
                let vnew = v[p] - z * branch[li];
                max_dv = max_dv.max((vnew - v[u]).norm());
                v[u] = vnew;
            }
        }
        if max_dv < PF_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GridError::NonConvergence(PF_MAX_ITER));
    }

    let mut losses_per_line = Vec::with_capacity(net.lines.len());
    let mut i_mag = Vec::with_capacity(net.lines.len());
    let mut total = 0.0;
    for (li, line) in net.lines.iter().enumerate() {
        let imag = branch[li].norm();
        let r_pu = line.r_ohm / net.z_base();
        let loss_kw = r_pu * imag * imag * net.base_mva * 1000.0;
        i_mag.push(imag);
        losses_per_line.push(loss_kw);
        total += loss_kw;
    }
    // Slack injection from the root branch flows.
    let mut slack_s = Complex64::new(0.0, 0.0);
    let vs = v[net.topo.slack];
    for u in 0..nb {
        if let Some((p, li)) = net.topo.parent[u] {
            if p == net.topo.slack {
                slack_s += vs * branch[li].conj();
            }
        }
    }
    Ok(PowerFlowSolution {
        v: v.iter().map(|c| c.norm()).collect(),
        i: i_mag,
        losses_per_line,
        total_losses: total,
        converged,
        iterations,
        slack_injection_kw: slack_s.re * net.base_mva * 1000.0,
    })
}

/// Linearized flow model evaluated at an operating point.
///
/// Voltage drops follow the DistFlow path-sum form: the sensitivity of the
/// voltage at bus n to an extra withdrawal at bus m is the summed r (resp. x)
/// over the shared slack path, in pu volt per pu power. Loss factors are the
/// marginal line losses of an extra withdrawal, evaluated at the operating
/// point flows.
#[derive(Debug, Clone)]
pub struct LinearFlowModel {
    /// v_sens_p[n][m]: dV_n per pu active withdrawal at m (positive drop).
    pub v_sens_p: Vec<Vec<f64>>,
    pub v_sens_q: Vec<Vec<f64>>,
    /// Marginal loss factor per bus, pu loss per pu active withdrawal.
    pub loss_factor: Vec<f64>,
    /// Operating-point voltage magnitudes, pu.
    pub v0: Vec<f64>,
    /// Operating-point line current magnitudes, pu.
    pub i0: Vec<f64>,
}

pub fn linearize(net: &Network, op: &PowerFlowSolution) -> Result<LinearFlowModel, GridError> {
    if !op.converged {
        return Err(GridError::NotConverged);
    }
    let nb = net.num_buses();
    let paths: Vec<Vec<usize>> = (0..nb).map(|b| net.path_lines(b)).collect();
    let mut on_path = vec![vec![false; net.lines.len()]; nb];
    for (b, p) in paths.iter().enumerate() {
        for &li in p {
            on_path[b][li] = true;
        }
    }
    let mut v_sens_p = vec![vec![0.0; nb]; nb];
    let mut v_sens_q = vec![vec![0.0; nb]; nb];
    for n in 0..nb {
        for m in 0..nb {
            let mut sr = 0.0;
            let mut sx = 0.0;
            for &li in &paths[n] {
                if on_path[m][li] {
                    sr += net.lines[li].r_ohm / net.z_base();
                    sx += net.lines[li].x_ohm / net.z_base();
                }
            }
            v_sens_p[n][m] = sr;
            v_sens_q[n][m] = sx;
        }
    }
    // d(loss_l)/dP_m ~ 2 r_l I_l ~ 2 r_l P_l at |V| ~ 1 for each line on m's path.
    let mut loss_factor = vec![0.0; nb];
    for m in 0..nb {
        let mut lf = 0.0;
        for &li in &paths[m] {
            let r_pu = net.lines[li].r_ohm / net.z_base();
            lf += 2.0 * r_pu * op.i[li];
        }
        loss_factor[m] = lf;
    }
    Ok(LinearFlowModel {
        v_sens_p,
        v_sens_q,
        loss_factor,
        v0: op.v.clone(),
        i0: op.i.clone(),
    })
}

impl LinearFlowModel {
    /// Predicted voltage magnitudes after extra per-bus withdrawals (pu power).
    pub fn predict_voltages(&self, delta_p: &[f64], delta_q: &[f64]) -> Vec<f64> {
        let nb = self.v0.len();
        (0..nb)
            .map(|n| {
                let mut v = self.v0[n];
                for m in 0..nb {
                    v -= self.v_sens_p[n][m] * delta_p[m] + self.v_sens_q[n][m] * delta_q[m];
                }
                v
            })
            .collect()
    }
}

/// Max over buses of |1 - V_n| in percent.
pub fn voltage_deviation(sol: &PowerFlowSolution) -> f64 {
    sol.v
        .iter()
        .map(|v| (1.0 - v).abs() * 100.0)
        .fold(0.0, f64::max)
}

/// Expected energy not supplied over an hourly horizon.
///
/// For each line and hour the expected unserved load is
/// `fo_rate * max(0, downstream load - downstream backup)`; the cost prices
/// that energy at the interruption cost `c_il` ($/kWh).
pub fn expected_ens(
    net: &Network,
    hourly_loads: &[Vec<f64>],
    local_backup: &[f64],
    c_il: f64,
) -> (f64, f64) {
    let mut ens = 0.0;
    for (li, line) in net.lines.iter().enumerate() {
        if line.fo_rate == 0.0 {
            continue;
        }
        let down = net.downstream_buses(li);
        let backup: f64 = down.iter().map(|&b| local_backup[b]).sum();
        for hour in hourly_loads {
            let load: f64 = down.iter().map(|&b| hour[b]).sum();
            ens += line.fo_rate * (load - backup).max(0.0);
        }
    }
    (ens, ens * c_il)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(r_pu: f64, x_pu: f64) -> Network {
        // base 1 MVA / 1 kV so z_base = 1 ohm and pu == ohm.
        Network::new(
            vec![
                Bus { id: 1, load_p: 0.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, is_slack: true },
                Bus { id: 2, load_p: 100.0, load_q: 50.0, v_min: 0.9, v_max: 1.1, is_slack: false },
            ],
            vec![Line { from: 1, to: 2, r_ohm: r_pu, x_ohm: x_pu, i_max_a: 1000.0, fo_rate: 0.02 }],
            1.0,
            1.0,
        )
        .unwrap()
    }

    /// Independent fixed-point oracle for the 2-bus case: iterate
    /// I = conj(S/V2), V2 = 1 - Z I by hand.
    fn two_bus_oracle(r: f64, x: f64, p: f64, q: f64) -> (f64, f64) {
        let z = Complex64::new(r, x);
        let s = Complex64::new(p, q);
        let mut v2 = Complex64::new(1.0, 0.0);
        for _ in 0..200 {
            let i = (s / v2).conj();
            v2 = Complex64::new(1.0, 0.0) - z * i;
        }
        let i = (s / v2).conj();
        (v2.norm(), r * i.norm_sqr())
    }

    #[test]
    fn no_load_fixed_point() {
        let net = two_bus(0.01, 0.01);
        let sol = run_power_flow(&net, &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        assert!(sol.v.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert_eq!(sol.total_losses, 0.0);
    }

    #[test]
    fn two_bus_matches_hand_iterated_oracle() {
        let net = two_bus(0.01, 0.01);
        // 0.1 + j0.05 pu on a 1 MVA base = 100 kW + 50 kvar.
        let sol = run_power_flow(&net, &[(0.0, 0.0), (100.0, 50.0)]).unwrap();
        let (v2, loss_pu) = two_bus_oracle(0.01, 0.01, 0.1, 0.05);
        assert!((sol.v[1] - v2).abs() < 1e-6, "V2 {} vs oracle {}", sol.v[1], v2);
        assert!((sol.total_losses - loss_pu * 1000.0).abs() < 1e-3);
    }

    #[test]
    fn conservation_slack_covers_loads_plus_losses() {
        let net = two_bus(0.02, 0.04);
        let sol = run_power_flow(&net, &[(0.0, 0.0), (150.0, 60.0)]).unwrap();
        let residual = sol.slack_injection_kw - (150.0 + sol.total_losses);
        assert!(residual.abs() / 1000.0 < 1e-6, "residual {residual} kW");
    }

    #[test]
    fn linearize_two_bus_close_to_ac() {
        let net = two_bus(0.01, 0.01);
        let flat = run_power_flow(&net, &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        let model = linearize(&net, &flat).unwrap();
        let v_lin = model.predict_voltages(&[0.0, 0.1], &[0.0, 0.05]);
        let ac = run_power_flow(&net, &[(0.0, 0.0), (100.0, 50.0)]).unwrap();
        assert!((v_lin[1] - ac.v[1]).abs() < 0.005);
    }

    #[test]
    fn linearize_rejects_unconverged() {
        let net = two_bus(0.01, 0.01);
        let mut sol = run_power_flow(&net, &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        sol.converged = false;
        assert!(matches!(linearize(&net, &sol), Err(GridError::NotConverged)));
    }

    #[test]
    fn zero_impedance_sensitivities_vanish() {
        let net = two_bus(0.0, 0.0);
        let sol = run_power_flow(&net, &[(0.0, 0.0), (100.0, 0.0)]).unwrap();
        let model = linearize(&net, &sol).unwrap();
        assert!(model.v_sens_p[1][1] == 0.0 && model.v_sens_q[1][1] == 0.0);
        assert!(model.loss_factor[1] == 0.0);
    }

    #[test]
    fn voltage_deviation_definition() {
        let sol = PowerFlowSolution {
            v: vec![1.0, 0.95],
            i: vec![],
            losses_per_line: vec![],
            total_losses: 0.0,
            converged: true,
            iterations: 1,
            slack_injection_kw: 0.0,
        };
        assert!((voltage_deviation(&sol) - 5.0).abs() < 1e-12);
        let flat = PowerFlowSolution { v: vec![1.0, 1.0], ..sol };
        assert_eq!(voltage_deviation(&flat), 0.0);
    }

    #[test]
    fn ens_direct_expectation() {
        let net = two_bus(0.01, 0.01);
        let loads = vec![vec![0.0, 100.0]];
        let (ens, cost) = expected_ens(&net, &loads, &[0.0, 0.0], 2.0);
        assert!((ens - 2.0).abs() < 1e-12); // FOR 0.02 x 100 kW x 1 h
        assert!((cost - 4.0).abs() < 1e-12);
        let (full, _) = expected_ens(&net, &loads, &[0.0, 100.0], 2.0);
        assert_eq!(full, 0.0);
        let mut zero_for = net.clone();
        zero_for.lines[0].fo_rate = 0.0;
        assert_eq!(expected_ens(&zero_for, &loads, &[0.0, 0.0], 2.0), (0.0, 0.0));
    }

    #[test]
    fn downstream_of_leaf_and_root() {
        let buses = vec![
            Bus { id: 1, load_p: 0.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, is_slack: true },
            Bus { id: 2, load_p: 10.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, is_slack: false },
            Bus { id: 3, load_p: 10.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, is_slack: false },
        ];
        let lines = vec![
            Line { from: 1, to: 2, r_ohm: 0.01, x_ohm: 0.01, i_max_a: 100.0, fo_rate: 0.0 },
            Line { from: 2, to: 3, r_ohm: 0.01, x_ohm: 0.01, i_max_a: 100.0, fo_rate: 0.0 },
        ];
        let net = Network::new(buses, lines, 1.0, 1.0).unwrap();
        assert_eq!(net.downstream_buses(0), &[1, 2]); // all but the slack
        assert_eq!(net.downstream_buses(1), &[2]); // leaf only
    }

    #[test]
    fn rejects_non_radial_and_disconnected() {
        let mk_bus = |id, slack| Bus {
            id,
            load_p: 0.0,
            load_q: 0.0,
            v_min: 0.9,
            v_max: 1.1,
            is_slack: slack,
        };
        let err = Network::new(
            vec![mk_bus(1, true), mk_bus(2, false), mk_bus(3, false)],
            vec![Line { from: 1, to: 2, r_ohm: 0.1, x_ohm: 0.1, i_max_a: 1.0, fo_rate: 0.0 }],
            1.0,
            1.0,
        );
        assert!(matches!(err, Err(GridError::NonRadialNetwork { .. })));

        let err = Network::new(
            vec![mk_bus(1, true), mk_bus(2, false), mk_bus(3, false), mk_bus(4, false)],
            vec![
                Line { from: 1, to: 2, r_ohm: 0.1, x_ohm: 0.1, i_max_a: 1.0, fo_rate: 0.0 },
                Line { from: 3, to: 4, r_ohm: 0.1, x_ohm: 0.1, i_max_a: 1.0, fo_rate: 0.0 },
                Line { from: 4, to: 3, r_ohm: 0.1, x_ohm: 0.1, i_max_a: 1.0, fo_rate: 0.0 },
            ],
            1.0,
            1.0,
        );
        assert!(err.is_err());
    }
}
