//! Bounded-variable primal simplex with two-phase initialization.
//!
//! Nonbasic variables rest at a finite bound (or at zero when free); the
//! basis inverse is kept explicitly and updated per pivot. Entering choice
//! is Dantzig pricing with a permanent switch to Bland's rule after 1000
//! degenerate pivots, which guarantees termination.

use super::{LinearProgram, Relation, Sense, Solution, Status};

const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGEN_TOL: f64 = 1e-10;
const BLAND_TRIGGER: usize = 1000;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic variable resting at zero.
    FreeZero,
}

struct Tableau {
    /// Columns of the full constraint matrix (structural + slack + artificial).
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Dense row-major basis inverse, m x m.
    binv: Vec<f64>,
    rhs: Vec<f64>,
    m: usize,
    iterations: usize,
    degenerate: usize,
    bland: bool,
}

enum StepOutcome {
    Optimal,
    Unbounded,
    Continue,
}

impl Tableau {
    fn nvars(&self) -> usize {
        self.cols.len()
    }

    fn binv_row(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    /// One simplex iteration minimizing `cost`.
    fn step(&mut self, cost: &[f64]) -> StepOutcome {
        let m = self.m;
        // Simplex multipliers y = c_B' Binv.
        let mut y = vec![0.0; m];
        for k in 0..m {
            let cb = cost[self.basis[k]];
            if cb != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    y[i] += cb * row[i];
                }
            }
        }

        // Pricing.
        let mut entering: Option<(usize, f64, f64)> = None; // (var, dir, |d|)
        for j in 0..self.nvars() {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) {
                continue;
            }
            if self.upper[j] - self.lower[j] <= 1e-12 && st != VarState::FreeZero {
                continue; // fixed variable
            }
            let mut d = cost[j];
            for &(r, v) in &self.cols[j] {
                d -= y[r] * v;
            }
            let dir = match st {
                VarState::AtLower if d < -DUAL_TOL => 1.0,
                VarState::AtUpper if d > DUAL_TOL => -1.0,
                VarState::FreeZero if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if self.bland {
                entering = Some((j, dir, d.abs()));
                break;
            }
            match entering {
                Some((_, _, best)) if best >= d.abs() => {}
                _ => entering = Some((j, dir, d.abs())),
            }
        }
        let Some((j, dir, _)) = entering else {
            return StepOutcome::Optimal;
        };

        // w = Binv * a_j.
        let mut w = vec![0.0; m];
        for &(r, v) in &self.cols[j] {
            for i in 0..m {
                w[i] += self.binv[i * m + r] * v;
            }
        }

        // Ratio test: x_B[i] changes by -t * dir * w[i].
        let mut t_min = f64::INFINITY;
        let mut leave: Option<(usize, VarState)> = None;
        for i in 0..m {
            let g = dir * w[i];
            if g.abs() <= PIVOT_TOL {
                continue;
            }
            let bvar = self.basis[i];
            let xv = self.value[bvar];
            let (ratio, to) = if g > 0.0 {
                if self.lower[bvar].is_finite() {
                    ((xv - self.lower[bvar]).max(0.0) / g, VarState::AtLower)
                } else {
                    continue;
                }
            } else if self.upper[bvar].is_finite() {
                ((self.upper[bvar] - xv).max(0.0) / (-g), VarState::AtUpper)
            } else {
                continue;
            };
            if ratio < t_min - 1e-12 {
                t_min = ratio;
                leave = Some((i, to));
            } else if ratio <= t_min + 1e-12 {
                if let Some((cur, _)) = leave {
                    // Ties: lowest basic index under Bland (termination),
                    // otherwise the larger pivot element for stability.
                    let take = if self.bland {
                        self.basis[i] < self.basis[cur]
                    } else {
                        w[i].abs() > w[cur].abs()
                    };
                    if take {
                        leave = Some((i, to));
                    }
                }
            }
        }
        let span = self.upper[j] - self.lower[j]; // infinite for free vars
        let t_flip = if self.state[j] == VarState::FreeZero { f64::INFINITY } else { span };

        if t_min.is_infinite() && t_flip.is_infinite() {
            return StepOutcome::Unbounded;
        }

        self.iterations += 1;
        if t_flip <= t_min {
            // Bound flip: the entering variable runs to its other bound.
            let t = t_flip;
            for i in 0..m {
                let bvar = self.basis[i];
                self.value[bvar] -= t * dir * w[i];
            }
            self.value[j] += dir * t;
            self.state[j] = match self.state[j] {
                VarState::AtLower => VarState::AtUpper,
                VarState::AtUpper => VarState::AtLower,
                other => other,
            };
            if t < DEGEN_TOL {
                self.degenerate += 1;
            }
        } else {
            let (r, to) = leave.expect("finite ratio implies a leaving row");
            let t = t_min;
            for i in 0..m {
                let bvar = self.basis[i];
                self.value[bvar] -= t * dir * w[i];
            }
            self.value[j] += dir * t;
            let lvar = self.basis[r];
            // Snap the leaving variable exactly onto its bound.
            self.value[lvar] = match to {
                VarState::AtLower => self.lower[lvar],
                VarState::AtUpper => self.upper[lvar],
                _ => unreachable!(),
            };
            self.state[lvar] = to;
            self.basis[r] = j;
            self.state[j] = VarState::Basic(r);
            self.update_binv(r, &w);
            if t < DEGEN_TOL {
                self.degenerate += 1;
            }
        }
        if self.degenerate > BLAND_TRIGGER {
            self.bland = true;
        }
        StepOutcome::Continue
    }

    fn update_binv(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let piv = w[r];
        for c in 0..m {
            self.binv[r * m + c] /= piv;
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = w[i];
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                self.binv[i * m + c] -= f * self.binv[r * m + c];
            }
        }
    }

    /// Rebuilds the basis inverse from scratch by Gauss-Jordan elimination
    /// with partial pivoting, discarding accumulated pivot-update error.
    fn refactor_binv(&mut self) {
        let m = self.m;
        if m == 0 {
            return;
        }
        // aug = [B | I], row-major with 2m columns.
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (r, &bv) in self.basis.iter().enumerate() {
            for &(row, val) in &self.cols[bv] {
                aug[row * w + r] += val;
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[r * w + col].abs() > aug[piv * w + col].abs() {
                    piv = r;
                }
            }
            let pval = aug[piv * w + col];
            if pval.abs() < 1e-14 {
                return; // singular to working precision; keep the updated inverse
            }
            if piv != col {
                for c in 0..w {
                    aug.swap(col * w + c, piv * w + c);
                }
            }
            let inv = 1.0 / aug[col * w + col];
            for c in 0..w {
                aug[col * w + c] *= inv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = aug[r * w + col];
                if f != 0.0 {
                    for c in 0..w {
                        aug[r * w + c] -= f * aug[col * w + c];
                    }
                }
            }
        }
        for r in 0..m {
            for c in 0..m {
                self.binv[r * m + c] = aug[r * w + m + c];
            }
        }
    }

    /// Recomputes basic variable values from the nonbasic ones, suppressing
    /// drift accumulated through pivot updates.
    fn refresh_basic_values(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for j in 0..self.nvars() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xv = self.value[j];
            if xv != 0.0 {
                for &(r, v) in &self.cols[j] {
                    resid[r] -= v * xv;
                }
            }
        }
        for i in 0..m {
            let row = self.binv_row(i);
            let mut s = 0.0;
            for r in 0..m {
                s += row[r] * resid[r];
            }
            self.value[self.basis[i]] = s;
        }
    }

    fn run(&mut self, cost: &[f64], limit: usize) -> Status {
        let mut since_refresh = 0usize;
        loop {
            if self.iterations >= limit {
                return Status::IterationLimit;
            }
            match self.step(cost) {
                StepOutcome::Optimal => {
                    self.refactor_binv();
                    self.refresh_basic_values();
                    return Status::Optimal;
                }
                StepOutcome::Unbounded => return Status::Unbounded,
                StepOutcome::Continue => {
                    since_refresh += 1;
                    if since_refresh >= 100 {
                        self.refresh_basic_values();
                        since_refresh = 0;
                    }
                }
            }
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        cost.iter().zip(&self.value).map(|(c, x)| c * x).sum()
    }
}

/// Solves a bounded-variable LP with the two-phase primal simplex.
pub fn solve_lp(lp: &LinearProgram) -> Solution {
    if let Err(e) = lp.check() {
        panic!("solve_lp on malformed program: {e}");
    }
    let n0 = lp.num_vars();
    let m = lp.num_rows();
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Structural columns, then one slack per inequality, then artificials.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n0];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, v) in row {
            cols[j].push((i, v));
        }
    }
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    for (i, rel) in lp.relations.iter().enumerate() {
        let coeff = match rel {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => continue,
        };
        cols.push(vec![(i, coeff)]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
    }
    let n_real = cols.len();

    // Nonbasic starting point.
    let mut state = Vec::with_capacity(n_real + m);
    let mut value = Vec::with_capacity(n_real + m);
    for j in 0..n_real {
        if lower[j].is_finite() {
            state.push(VarState::AtLower);
            value.push(lower[j]);
        } else if upper[j].is_finite() {
            state.push(VarState::AtUpper);
            value.push(upper[j]);
        } else {
            state.push(VarState::FreeZero);
            value.push(0.0);
        }
    }

    // Residuals decide the artificial signs so every artificial starts >= 0.
    let mut resid = lp.rhs.clone();
    for j in 0..n_real {
        if value[j] != 0.0 {
            for &(r, v) in &cols[j] {
                resid[r] -= v * value[j];
            }
        }
    }
    let mut basis = Vec::with_capacity(m);
    for (i, &r) in resid.iter().enumerate() {
        let sgn = if r >= 0.0 { 1.0 } else { -1.0 };
        cols.push(vec![(i, sgn)]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
        state.push(VarState::Basic(i));
        value.push(r.abs());
        basis.push(n_real + i);
    }
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
    }

    let mut tab = Tableau {
        cols,
        lower,
        upper,
        value,
        state,
        basis,
        binv,
        rhs: lp.rhs.clone(),
        m,
        iterations: 0,
        degenerate: 0,
        bland: false,
    };
    let n_all = tab.nvars();
    let limit = 20_000.max(200 * (m + n_all));

    // Phase 1: minimize the artificial sum.
    let mut cost1 = vec![0.0; n_all];
    for j in n_real..n_all {
        cost1[j] = 1.0;
    }
    let any_artificial_positive = tab.objective(&cost1) > FEAS_TOL;
    if any_artificial_positive {
        match tab.run(&cost1, limit) {
            Status::Optimal => {}
            Status::IterationLimit => {
                return Solution {
                    status: Status::IterationLimit,
                    x: tab.value[..n0].to_vec(),
                    objective: f64::NAN,
                    iterations: tab.iterations,
                    nodes: 0,
                };
            }
            // Phase 1 is bounded below by zero; unbounded cannot occur.
            Status::Unbounded | Status::Infeasible => unreachable!(),
        }
        if tab.objective(&cost1) > FEAS_TOL {
            return Solution {
                status: Status::Infeasible,
                x: tab.value[..n0].to_vec(),
                objective: f64::NAN,
                iterations: tab.iterations,
                nodes: 0,
            };
        }
    }

    // Pin artificials at zero; drive basic ones out where a pivot exists.
    for j in n_real..n_all {
        tab.upper[j] = 0.0;
    }
    tab.degenerate = 0;
    tab.bland = false;
    for r in 0..m {
        if tab.basis[r] < n_real {
            continue;
        }
        let mut pivot_col: Option<(usize, f64)> = None;
        for j in 0..n_real {
            if matches!(tab.state[j], VarState::Basic(_)) {
                continue;
            }
            let mut alpha = 0.0;
            for &(rr, v) in &tab.cols[j] {
                alpha += tab.binv[r * m + rr] * v;
            }
            if alpha.abs() > 1e-7 {
                pivot_col = Some((j, alpha));
                break;
            }
        }
        if let Some((j, _)) = pivot_col {
            let mut w = vec![0.0; m];
            for &(rr, v) in &tab.cols[j] {
                for i in 0..m {
                    w[i] += tab.binv[i * m + rr] * v;
                }
            }
            let avar = tab.basis[r];
            tab.state[avar] = VarState::AtLower;
            tab.value[avar] = 0.0;
            tab.basis[r] = j;
            tab.state[j] = VarState::Basic(r);
            tab.update_binv(r, &w);
            tab.refresh_basic_values();
        }
        // Otherwise the row is redundant; the artificial stays basic at zero
        // with a [0, 0] bound box and can never move again.
    }

    // Phase 2: the real objective.
    let mut cost2 = vec![0.0; n_all];
    for j in 0..n0 {
        cost2[j] = sign * lp.objective[j];
    }
    let status = tab.run(&cost2, limit);
    let x = tab.value[..n0].to_vec();
    let objective = match status {
        Status::Optimal => sign * tab.objective(&cost2),
        _ => f64::NAN,
    };
    Solution {
        status,
        x,
        objective,
        iterations: tab.iterations,
        nodes: 0,
    }
}
