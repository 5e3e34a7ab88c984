//! Best-bound branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp, MilpProblem, Solution, Status};

const INT_TOL: f64 = 1e-6;
pub(crate) const DEFAULT_NODE_CAP: usize = 100_000;

struct Node {
    /// LP-relaxation objective of the parent (sign-adjusted so smaller = better).
    bound: f64,
    /// (variable, fixed value) pairs along the branching path.
    fixes: Vec<(usize, f64)>,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the best (smallest) bound pops
        // first, with insertion order as a deterministic tie-break.
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Solves a binary MILP by best-bound branch and bound.
///
/// Branches on the most fractional variable (ties to the lowest index) and
/// returns the incumbent once the relative gap to the best open bound drops
/// to `gap` (spec default 1e-6). Node cap 100 000.
pub fn solve_milp(p: &MilpProblem, gap: f64) -> Solution {
    p.check().expect("solve_milp on malformed problem");
    let sign = match p.lp.sense {
        super::Sense::Minimize => 1.0,
        super::Sense::Maximize => -1.0,
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        fixes: Vec::new(),
        seq: 0,
    });
    let mut seq = 1usize;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut incumbent: Option<Solution> = None;
    let mut incumbent_val = f64::INFINITY; // sign-adjusted

    while let Some(node) = heap.pop() {
        if nodes >= DEFAULT_NODE_CAP {
            return Solution {
                status: Status::IterationLimit,
                x: incumbent.map(|s| s.x).unwrap_or_default(),
                objective: f64::NAN,
                iterations,
                nodes,
            };
        }
        // Gap-based termination against the best open bound.
        if let Some(inc) = &incumbent {
            let denom = incumbent_val.abs().max(1.0);
            if node.bound >= incumbent_val - gap * denom {
                let mut out = inc.clone();
                out.iterations = iterations;
                out.nodes = nodes.max(1);
                return out;
            }
        }
        nodes += 1;

        let mut lp = p.lp.clone();
        for &(j, v) in &node.fixes {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        let rel = solve_lp(&lp);
        iterations += rel.iterations;
        match rel.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                return Solution {
                    status: Status::Unbounded,
                    x: Vec::new(),
                    objective: f64::NAN,
                    iterations,
                    nodes,
                };
            }
            Status::IterationLimit => {
                return Solution {
                    status: Status::IterationLimit,
                    x: Vec::new(),
                    objective: f64::NAN,
                    iterations,
                    nodes,
                };
            }
            Status::Optimal => {}
        }
        let val = sign * rel.objective;
        if val >= incumbent_val - 1e-12 {
            continue; // dominated
        }

        // Most fractional binary; ties by lowest index.
        let mut branch: Option<(usize, f64)> = None;
        for &j in &p.integer_vars {
            let frac = (rel.x[j] - rel.x[j].round()).abs();
            if frac > INT_TOL {
                match branch {
                    Some((_, best)) if best >= frac => {}
                    _ => branch = Some((j, frac)),
                }
            }
        }
        match branch {
            None => {
                // Integral: round off solver fuzz and accept as incumbent.
                let mut sol = rel;
                for &j in &p.integer_vars {
                    sol.x[j] = sol.x[j].round();
                }
                incumbent_val = val;
                incumbent = Some(sol);
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        bound: val,
                        fixes,
                        seq,
                    });
                    seq += 1;
                }
            }
        }
    }

    match incumbent {
        Some(mut sol) => {
            sol.iterations = iterations;
            sol.nodes = nodes.max(1);
            sol
        }
        None => Solution {
            status: Status::Infeasible,
            x: Vec::new(),
            objective: f64::NAN,
            iterations,
            nodes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{LinearProgram, Relation, Sense};

    #[test]
    fn integral_relaxation_is_one_node() {
        // max x, x binary, x <= 1: relaxation already integral.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_row(vec![(x, 1.0)], Relation::Le, 1.0);
        let p = MilpProblem {
            lp,
            integer_vars: vec![x],
        };
        let sol = solve_milp(&p, 1e-6);
        assert_eq!(sol.status, Status::Optimal);
        assert_eq!(sol.nodes, 1);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_knapsack() {
        // max 10a + 6b + 4c  s.t.  a + b + c <= 2, binaries -> 16 at (1,1,0).
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_var("a", 0.0, 1.0, 10.0);
        let b = lp.add_var("b", 0.0, 1.0, 6.0);
        let c = lp.add_var("c", 0.0, 1.0, 4.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0), (c, 1.0)], Relation::Le, 2.0);
        let p = MilpProblem {
            lp,
            integer_vars: vec![a, b, c],
        };
        let sol = solve_milp(&p, 1e-6);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 16.0).abs() < 1e-9);
        assert_eq!((sol.x[0], sol.x[1], sol.x[2]), (1.0, 1.0, 0.0));
    }

    #[test]
    fn infeasible_binaries() {
        // a + b >= 3 over two binaries.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let a = lp.add_var("a", 0.0, 1.0, 1.0);
        let b = lp.add_var("b", 0.0, 1.0, 1.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Relation::Ge, 3.0);
        let p = MilpProblem {
            lp,
            integer_vars: vec![a, b],
        };
        assert_eq!(solve_milp(&p, 1e-6).status, Status::Infeasible);
    }
}
