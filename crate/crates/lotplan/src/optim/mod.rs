//! Embedded optimization: bounded-variable primal simplex and a
//! best-bound branch-and-bound layer for binary MILPs.

mod milp;
mod simplex;

pub use milp::solve_milp;
pub use simplex::solve_lp;

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// A linear program with per-variable bounds and sparse constraint rows.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    /// Objective coefficient per variable.
    pub objective: Vec<f64>,
    /// Sparse rows: (variable index, coefficient) pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    /// Upper bounds; `f64::INFINITY` for unbounded variables.
    pub upper: Vec<f64>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective: Vec::new(),
            rows: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> usize {
        debug_assert!(lower <= upper, "variable bounds crossed");
        self.objective.push(obj);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(terms);
        self.relations.push(relation);
        self.rhs.push(rhs);
    }

    /// Checks structural consistency (dimensions, bound ordering, indices).
    pub fn check(&self) -> Result<(), OptimError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.names.len() != n {
            return Err(OptimError::Malformed("variable arrays differ in length".into()));
        }
        let m = self.rows.len();
        if self.relations.len() != m || self.rhs.len() != m {
            return Err(OptimError::Malformed("row arrays differ in length".into()));
        }
        for (i, (&lb, &ub)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lb > ub {
                return Err(OptimError::Malformed(format!("bounds crossed on var {i}")));
            }
        }
        for row in &self.rows {
            for &(j, v) in row {
                if j >= n {
                    return Err(OptimError::Malformed(format!("column index {j} out of range")));
                }
                if !v.is_finite() {
                    return Err(OptimError::Malformed("non-finite coefficient".into()));
                }
            }
        }
        Ok(())
    }

    /// Textual dump for external cross-checking (`--dump-lp`).
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        let _ = writeln!(s, "{sense} {} vars {} rows", self.num_vars(), self.num_rows());
        let _ = write!(s, "obj:");
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(s, " {c:+}*{}", self.names[j]);
            }
        }
        let _ = writeln!(s);
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "r{i}:");
            for &(j, v) in row {
                let _ = write!(s, " {v:+}*{}", self.names[j]);
            }
            let rel = match self.relations[i] {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(s, " {rel} {}", self.rhs[i]);
        }
        for j in 0..self.num_vars() {
            let _ = writeln!(s, "bnd: {} <= {} <= {}", self.lower[j], self.names[j], self.upper[j]);
        }
        s
    }
}

/// A mixed-integer program; all integer variables are binary here.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    /// Indices of binary variables (bounds must lie within [0, 1]).
    pub integer_vars: Vec<usize>,
}

impl MilpProblem {
    pub fn check(&self) -> Result<(), OptimError> {
        self.lp.check()?;
        for &j in &self.integer_vars {
            if j >= self.lp.num_vars() {
                return Err(OptimError::Malformed(format!("integer index {j} out of range")));
            }
            if self.lp.lower[j] < -1e-12 || self.lp.upper[j] > 1.0 + 1e-12 {
                return Err(OptimError::Malformed(format!(
                    "integer var {j} bounds outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Branch-and-bound nodes explored (1 for a plain LP relaxation hit).
    pub nodes: usize,
}

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}
