//! Dense two-phase simplex with primal and dual value extraction.
//!
//! Every stage game and bound evaluation in this crate reduces to one of
//! these programs, so the solver favours determinism over speed: fixed
//! Dantzig pricing with lowest-index tie-breaks, falling back to Bland's
//! rule when the objective stalls. Identical instances produce identical
//! solutions across runs and thread counts.

use thiserror::Error;

/// Feasibility tolerance (absolute, on standardized rows).
pub const FEAS_TOL: f64 = 1e-9;
/// Relative duality-gap tolerance checked on every optimal solve in debug builds.
pub const GAP_TOL: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("numerical failure in LP solve: {0}")]
    NumericalFailure(String),
    #[error("malformed LP: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
}

/// A linear program over variables that are nonnegative by default.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub sense: Sense,
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal/dual solution. `dual[i]` is the shadow price of row `i`: at an
/// optimum, `objective == sum_i dual[i] * rhs[i]` and the sign follows the
/// usual convention (for a maximisation, `<=` rows have nonnegative duals).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

impl LpInstance {
    pub fn new(sense: Sense) -> Self {
        LpInstance {
            sense,
            objective: Vec::new(),
            free: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds a variable with the given objective coefficient; returns its id.
    pub fn add_var(&mut self, obj: f64, free: bool) -> usize {
        self.objective.push(obj);
        self.free.push(free);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, rel: Rel, rhs: f64) -> usize {
        self.rows.push(Row {
            coeffs: Vec::new(),
            rel,
            rhs,
        });
        self.rows.len() - 1
    }

    /// Appends a coefficient to a row. Repeated (row, var) entries accumulate.
    pub fn set_coef(&mut self, row: usize, var: usize, c: f64) {
        if c != 0.0 {
            self.rows[row].coeffs.push((var, c));
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective_coeffs(&self) -> &[f64] {
        &self.objective
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.objective.is_empty() {
            return Err(LpError::Malformed("LP has no variables".into()));
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::Malformed(format!("objective[{j}] not finite")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("rhs[{i}] not finite")));
            }
            for &(v, c) in &row.coeffs {
                if v >= self.objective.len() {
                    return Err(LpError::Malformed(format!("row {i} references var {v}")));
                }
                if !c.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has non-finite coeff")));
                }
            }
        }
        Ok(())
    }

    /// Renders the instance in CPLEX LP text format for offline debugging.
    pub fn dump_lp_format(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let kw = match self.sense {
            Sense::Max => "Maximize",
            Sense::Min => "Minimize",
        };
        let _ = writeln!(s, "{kw}");
        let mut obj = String::from(" obj:");
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(obj, " {c:+} x{j}");
            }
        }
        let _ = writeln!(s, "{obj}");
        let _ = writeln!(s, "Subject To");
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = format!(" r{i}:");
            let mut dense = vec![0.0; self.n_vars()];
            for &(v, c) in &row.coeffs {
                dense[v] += c;
            }
            for (j, c) in dense.iter().enumerate() {
                if *c != 0.0 {
                    let _ = write!(line, " {c:+} x{j}");
                }
            }
            let rel = match row.rel {
                Rel::Le => "<=",
                Rel::Eq => "=",
                Rel::Ge => ">=",
            };
            let _ = writeln!(s, "{line} {rel} {}", row.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for (j, f) in self.free.iter().enumerate() {
            if *f {
                let _ = writeln!(s, " x{j} free");
            }
        }
        let _ = writeln!(s, "End");
        s
    }
}

/// Column role in the standardized tableau, used to recover primal and dual
/// values afterwards.
#[derive(Clone, Copy)]
enum ColKind {
    /// Structural column for original var: (var, sign). Free vars get a +1
    /// and a -1 column.
    Var(usize, f64),
    Slack(usize),
    Surplus(usize),
    Artificial(usize),
}

struct Tableau {
    m: usize,
    n: usize,
    /// (m + 1) x (n + 1) row-major; last row is the reduced-cost row, last
    /// column the rhs. Cost-row rhs holds minus the current objective.
    t: Vec<f64>,
    basis: Vec<usize>,
    banned: Vec<bool>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.n + 1) + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.t[i * (self.n + 1) + j]
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.n + 1;
        let piv = self.t[p * w + q];
        let inv = 1.0 / piv;
        for j in 0..w {
            self.t[p * w + j] *= inv;
        }
        // pivot row is now normalized; clear the column elsewhere
        for i in 0..=self.m {
            if i == p {
                continue;
            }
            let f = self.t[i * w + q];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[p * w + j];
                }
                self.t[i * w + q] = 0.0;
            }
        }
        self.t[p * w + q] = 1.0;
        self.basis[p] = q;
    }

    /// Installs a cost vector in the bottom row and prices out basic columns.
    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.n + 1;
        for j in 0..self.n {
            self.t[self.m * w + j] = costs[j];
        }
        self.t[self.m * w + self.n] = 0.0;
        for i in 0..self.m {
            let b = self.basis[i];
            let cb = costs[b];
            if cb != 0.0 {
                for j in 0..w {
                    self.t[self.m * w + j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Runs the simplex loop on whatever costs are installed. Returns false
    /// if unbounded. Pricing is Dantzig with a stability-biased ratio test;
    /// when the objective stalls the loop switches permanently to Bland's
    /// rule, which cannot cycle.
    fn optimize(&mut self) -> Result<bool, LpError> {
        let max_iters = 20_000 + 200 * (self.m + self.n);
        let mut bland = false;
        let mut stall = 0usize;
        // the cost-row rhs holds minus the objective of the minimized form,
        // so it increases on every improving pivot
        let mut last_obj = f64::NEG_INFINITY;
        for _ in 0..max_iters {
            // entering column
            let mut q = usize::MAX;
            if bland {
                for j in 0..self.n {
                    if !self.banned[j] && self.at(self.m, j) < -COST_TOL {
                        q = j;
                        break;
                    }
                }
            } else {
                let mut best = -COST_TOL;
                for j in 0..self.n {
                    let r = self.at(self.m, j);
                    if !self.banned[j] && r < best {
                        best = r;
                        q = j;
                    }
                }
            }
            if q == usize::MAX {
                return Ok(true); // optimal
            }
            // pass 1: the minimum ratio
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a > PIVOT_TOL {
                    let ratio = (self.at(i, self.n) / a).max(0.0);
                    if ratio < best_ratio {
                        best_ratio = ratio;
                    }
                }
            }
            if !best_ratio.is_finite() {
                return Ok(false); // unbounded
            }
            // pass 2 over the near-ties: largest pivot for stability, or the
            // lowest basis index under Bland's rule
            let window = best_ratio + 1e-9 * (1.0 + best_ratio.abs());
            let mut p = usize::MAX;
            let mut best_pivot = 0.0;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a > PIVOT_TOL {
                    let ratio = (self.at(i, self.n) / a).max(0.0);
                    if ratio <= window {
                        let better = if bland {
                            p == usize::MAX || self.basis[i] < self.basis[p]
                        } else {
                            a > best_pivot
                        };
                        if better {
                            best_pivot = a;
                            p = i;
                        }
                    }
                }
            }
            self.pivot(p, q);
            let obj = self.at(self.m, self.n);
            if obj <= last_obj + 1e-12 {
                stall += 1;
                if stall > 50 {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            last_obj = obj;
        }
        Err(LpError::NumericalFailure(format!(
            "simplex iteration limit hit ({} rows, {} cols)",
            self.m, self.n
        )))
    }
}

static DUMP_DIR: std::sync::OnceLock<std::path::PathBuf> = std::sync::OnceLock::new();
static DUMP_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

/// Enables offline LP dumping: every subsequently solved instance is written
/// to `dir` in LP text format. Can only be set once per process.
pub fn enable_dump(dir: std::path::PathBuf) {
    let _ = std::fs::create_dir_all(&dir);
    let _ = DUMP_DIR.set(dir);
}

/// Solves an LP instance. `Infeasible`/`Unbounded` are reported via the
/// solution status; `Err` is reserved for genuine numerical breakdown.
pub fn solve(lp: &LpInstance) -> Result<LpSolution, LpError> {
    lp.validate()?;
    if let Some(dir) = DUMP_DIR.get() {
        let n = DUMP_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let _ = std::fs::write(dir.join(format!("lp_{n:08}.lp")), lp.dump_lp_format());
    }
    let m = lp.rows.len();

    // Standardize: min c'x, Ax = b, x >= 0, b >= 0.
    let mut kinds: Vec<ColKind> = Vec::new();
    let mut col_of_var: Vec<usize> = Vec::with_capacity(lp.n_vars());
    for (j, &f) in lp.free.iter().enumerate() {
        col_of_var.push(kinds.len());
        kinds.push(ColKind::Var(j, 1.0));
        if f {
            kinds.push(ColKind::Var(j, -1.0));
        }
    }
    let sign: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 })
        .collect();
    // unit_col[i]: column whose reduced cost yields the dual of row i
    let mut unit_col = vec![usize::MAX; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let rel = if sign[i] < 0.0 {
            match row.rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            }
        } else {
            row.rel
        };
        match rel {
            Rel::Le => {
                unit_col[i] = kinds.len();
                kinds.push(ColKind::Slack(i));
            }
            Rel::Ge => {
                kinds.push(ColKind::Surplus(i));
                unit_col[i] = kinds.len();
                kinds.push(ColKind::Artificial(i));
            }
            Rel::Eq => {
                unit_col[i] = kinds.len();
                kinds.push(ColKind::Artificial(i));
            }
        }
    }
    let n = kinds.len();

    let mut tab = Tableau {
        m,
        n,
        t: vec![0.0; (m + 1) * (n + 1)],
        basis: vec![usize::MAX; m],
        banned: vec![false; n],
    };

    // Fill constraint matrix.
    let mut dense = vec![0.0; lp.n_vars()];
    for (i, row) in lp.rows.iter().enumerate() {
        for d in dense.iter_mut() {
            *d = 0.0;
        }
        for &(v, c) in &row.coeffs {
            dense[v] += c;
        }
        for (j, &d) in dense.iter().enumerate() {
            if d != 0.0 {
                let base = col_of_var[j];
                *tab.at_mut(i, base) = sign[i] * d;
                if lp.free[j] {
                    *tab.at_mut(i, base + 1) = -sign[i] * d;
                }
            }
        }
        *tab.at_mut(i, n) = sign[i] * row.rhs;
    }
    for (j, kind) in kinds.iter().enumerate() {
        match *kind {
            ColKind::Slack(i) => *tab.at_mut(i, j) = 1.0,
            ColKind::Surplus(i) => *tab.at_mut(i, j) = -1.0,
            ColKind::Artificial(i) => *tab.at_mut(i, j) = 1.0,
            ColKind::Var(..) => {}
        }
    }
    // Initial basis: slack where available, artificial otherwise.
    for (j, kind) in kinds.iter().enumerate() {
        match *kind {
            ColKind::Slack(i) | ColKind::Artificial(i) => tab.basis[i] = j,
            _ => {}
        }
    }
    // Slack-and-artificial rows (Ge): the artificial wins the basis slot by
    // the loop order above; that is what phase 1 needs.

    // Phase 1.
    let needs_phase1 = kinds
        .iter()
        .any(|k| matches!(k, ColKind::Artificial(_)));
    if needs_phase1 {
        let costs: Vec<f64> = kinds
            .iter()
            .map(|k| if matches!(k, ColKind::Artificial(_)) { 1.0 } else { 0.0 })
            .collect();
        tab.set_costs(&costs);
        if !tab.optimize()? {
            return Err(LpError::NumericalFailure(
                "phase-1 problem reported unbounded".into(),
            ));
        }
        let infeas = -tab.at(m, n);
        let scale = lp.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
        if infeas > FEAS_TOL * scale.max(1.0) * 10.0 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                primal: vec![0.0; lp.n_vars()],
                dual: vec![0.0; m],
            });
        }
        // Drive artificials out of the basis where possible.
        for i in 0..m {
            if matches!(kinds[tab.basis[i]], ColKind::Artificial(_)) {
                let mut q = usize::MAX;
                for j in 0..n {
                    if !matches!(kinds[j], ColKind::Artificial(_)) && tab.at(i, j).abs() > 1e-7 {
                        q = j;
                        break;
                    }
                }
                if q != usize::MAX {
                    tab.pivot(i, q);
                }
            }
        }
        for (j, kind) in kinds.iter().enumerate() {
            if matches!(kind, ColKind::Artificial(_)) && !tab.basis.contains(&j) {
                tab.banned[j] = true;
            }
        }
    }

    // Phase 2.
    let flip = match lp.sense {
        Sense::Max => -1.0,
        Sense::Min => 1.0,
    };
    let costs: Vec<f64> = kinds
        .iter()
        .map(|k| match *k {
            ColKind::Var(v, s) => flip * s * lp.objective[v],
            _ => 0.0,
        })
        .collect();
    tab.set_costs(&costs);
    if !tab.optimize()? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: match lp.sense {
                Sense::Max => f64::INFINITY,
                Sense::Min => f64::NEG_INFINITY,
            },
            primal: vec![0.0; lp.n_vars()],
            dual: vec![0.0; m],
        });
    }

    // Recover primal values.
    let mut primal = vec![0.0; lp.n_vars()];
    for i in 0..m {
        if let ColKind::Var(v, s) = kinds[tab.basis[i]] {
            primal[v] += s * tab.at(i, n);
        }
    }
    // Recover duals from the reduced costs of the unit columns.
    let mut dual = vec![0.0; m];
    for i in 0..m {
        let r = tab.at(m, unit_col[i]);
        let y_hat = -r;
        dual[i] = flip * sign[i] * y_hat;
    }
    let objective: f64 = lp
        .objective
        .iter()
        .zip(primal.iter())
        .map(|(c, x)| c * x)
        .sum();

    // Residual check: the tableau can silently degrade on ill-conditioned
    // input, so verify the recovered point before reporting it optimal.
    let mut worst = 0.0f64;
    for row in &lp.rows {
        let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * primal[v]).sum();
        let r = match row.rel {
            Rel::Le => (lhs - row.rhs).max(0.0),
            Rel::Ge => (row.rhs - lhs).max(0.0),
            Rel::Eq => (lhs - row.rhs).abs(),
        };
        worst = worst.max(r / row.rhs.abs().max(1.0));
    }
    if worst > 1e-6 {
        return Err(LpError::NumericalFailure(format!(
            "primal residual {worst:.3e} after optimal pivot sequence"
        )));
    }

    let sol = LpSolution {
        status: LpStatus::Optimal,
        objective,
        primal,
        dual,
    };
    #[cfg(debug_assertions)]
    {
        let dual_obj: f64 = sol
            .dual
            .iter()
            .zip(lp.rows.iter())
            .map(|(y, r)| y * r.rhs)
            .sum();
        debug_assert!(
            (dual_obj - sol.objective).abs() <= GAP_TOL * (1.0 + sol.objective.abs()),
            "duality gap: primal {} vs dual {}",
            sol.objective,
            dual_obj
        );
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp2(sense: Sense) -> LpInstance {
        LpInstance::new(sense)
    }

    #[test]
    fn box_corner() {
        // max x+y, x<=1, y<=1 -> 2 at (1,1)
        let mut lp = lp2(Sense::Max);
        let x = lp.add_var(1.0, false);
        let y = lp.add_var(1.0, false);
        let r0 = lp.add_row(Rel::Le, 1.0);
        lp.set_coef(r0, x, 1.0);
        let r1 = lp.add_row(Rel::Le, 1.0);
        lp.set_coef(r1, y, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
        assert!((s.primal[x] - 1.0).abs() < 1e-9);
        assert!((s.primal[y] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dual_by_inspection() {
        // max x, x <= 3 -> objective 3, dual of the constraint = 1
        let mut lp = lp2(Sense::Max);
        let x = lp.add_var(1.0, false);
        let r = lp.add_row(Rel::Le, 3.0);
        lp.set_coef(r, x, 1.0);
        let s = solve(&lp).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.dual[r] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_pair() {
        // x >= 1, x <= 0
        let mut lp = lp2(Sense::Max);
        let x = lp.add_var(1.0, false);
        let r0 = lp.add_row(Rel::Ge, 1.0);
        lp.set_coef(r0, x, 1.0);
        let r1 = lp.add_row(Rel::Le, 0.0);
        lp.set_coef(r1, x, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = lp2(Sense::Max);
        let x = lp.add_var(1.0, false);
        let r = lp.add_row(Rel::Ge, 0.0);
        lp.set_coef(r, x, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_equality() {
        // min x subject to x = -2 with x free
        let mut lp = lp2(Sense::Min);
        let x = lp.add_var(1.0, true);
        let r = lp.add_row(Rel::Eq, -2.0);
        lp.set_coef(r, x, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!((s.primal[x] + 2.0).abs() < 1e-9);
        // shadow price of the equality: d(obj)/d(rhs) = 1
        assert!((s.dual[r] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn min_with_ge_duals() {
        // min 2x + 3y, x + y >= 4, x >= 1 -> x=4? no: x=4,y=0 costs 8; x=1,y=3 costs 11
        let mut lp = lp2(Sense::Min);
        let x = lp.add_var(2.0, false);
        let y = lp.add_var(3.0, false);
        let r0 = lp.add_row(Rel::Ge, 4.0);
        lp.set_coef(r0, x, 1.0);
        lp.set_coef(r0, y, 1.0);
        let r1 = lp.add_row(Rel::Ge, 1.0);
        lp.set_coef(r1, x, 1.0);
        let s = solve(&lp).unwrap();
        assert!((s.objective - 8.0).abs() < 1e-9);
        // binding: r0 with price 2, r1 slack (x=4>1) price 0
        assert!((s.dual[r0] - 2.0).abs() < 1e-9);
        assert!(s.dual[r1].abs() < 1e-9);
    }

    #[test]
    fn matching_pennies_value() {
        // max v s.t. v <= sum_i p_i M[i][j] for each column j, sum p = 1
        let m = [[1.0, -1.0], [-1.0, 1.0]];
        let mut lp = lp2(Sense::Max);
        let v = lp.add_var(1.0, true);
        let p0 = lp.add_var(0.0, false);
        let p1 = lp.add_var(0.0, false);
        for j in 0..2 {
            let r = lp.add_row(Rel::Le, 0.0);
            lp.set_coef(r, v, 1.0);
            lp.set_coef(r, p0, -m[0][j]);
            lp.set_coef(r, p1, -m[1][j]);
        }
        let r = lp.add_row(Rel::Eq, 1.0);
        lp.set_coef(r, p0, 1.0);
        lp.set_coef(r, p1, 1.0);
        let s = solve(&lp).unwrap();
        assert!(s.objective.abs() < 1e-9);
        assert!((s.primal[p0] - 0.5).abs() < 1e-9);
        assert!((s.primal[p1] - 0.5).abs() < 1e-9);
        // duals of the column rows are the opponent's mixed strategy
        assert!((s.dual[0] - 0.5).abs() < 1e-9);
        assert!((s.dual[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_row_scaling() {
        // max -x s.t. -x >= -5  (i.e. x <= 5), and x >= 2
        let mut lp = lp2(Sense::Max);
        let x = lp.add_var(-1.0, false);
        let r0 = lp.add_row(Rel::Ge, -5.0);
        lp.set_coef(r0, x, -1.0);
        let r1 = lp.add_row(Rel::Ge, 2.0);
        lp.set_coef(r1, x, 1.0);
        let s = solve(&lp).unwrap();
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!((s.primal[x] - 2.0).abs() < 1e-9);
        let dual_obj = s.dual[r0] * -5.0 + s.dual[r1] * 2.0;
        assert!((dual_obj - s.objective).abs() < 1e-9);
    }

    #[test]
    fn determinism_repeated_solves() {
        let mut lp = lp2(Sense::Max);
        let vars: Vec<usize> = (0..6).map(|j| lp.add_var((j as f64) - 2.5, false)).collect();
        for i in 0..4 {
            let r = lp.add_row(Rel::Le, 3.0 + i as f64);
            for (k, &v) in vars.iter().enumerate() {
                lp.set_coef(r, v, ((i * 7 + k * 3) % 5) as f64 - 2.0);
            }
        }
        let a = solve(&lp).unwrap();
        let b = solve(&lp).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.dual, b.dual);
        assert!(a.objective.to_bits() == b.objective.to_bits());
    }

    #[test]
    fn degenerate_cycling_guard() {
        // Beale's classic cycling example (degenerate under Dantzig pricing).
        let mut lp = lp2(Sense::Min);
        let x1 = lp.add_var(-0.75, false);
        let x2 = lp.add_var(150.0, false);
        let x3 = lp.add_var(-0.02, false);
        let x4 = lp.add_var(6.0, false);
        let r0 = lp.add_row(Rel::Le, 0.0);
        lp.set_coef(r0, x1, 0.25);
        lp.set_coef(r0, x2, -60.0);
        lp.set_coef(r0, x3, -0.04);
        lp.set_coef(r0, x4, 9.0);
        let r1 = lp.add_row(Rel::Le, 0.0);
        lp.set_coef(r1, x1, 0.5);
        lp.set_coef(r1, x2, -90.0);
        lp.set_coef(r1, x3, -0.02);
        lp.set_coef(r1, x4, 3.0);
        let r2 = lp.add_row(Rel::Le, 1.0);
        lp.set_coef(r2, x3, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn duality_gap_randomized() {
        // feasible bounded random LPs: primal objective equals dual objective
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let nv = 2 + (next() * 4.0) as usize;
            let mut lp = lp2(if next() < 0.5 { Sense::Max } else { Sense::Min });
            let vars: Vec<usize> = (0..nv).map(|_| lp.add_var(next() * 4.0 - 2.0, false)).collect();
            // box to keep it bounded
            for &v in &vars {
                let r = lp.add_row(Rel::Le, 1.0 + next());
                lp.set_coef(r, v, 1.0);
            }
            for _ in 0..3 {
                let rel = match (next() * 3.0) as usize {
                    0 => Rel::Le,
                    1 => Rel::Ge,
                    _ => Rel::Eq,
                };
                let rhs = next();
                let r = lp.add_row(rel, rhs);
                for &v in &vars {
                    lp.set_coef(r, v, next() * 2.0 - 1.0);
                }
            }
            let s = solve(&lp).unwrap();
            if s.status != LpStatus::Optimal {
                continue;
            }
            let dual_obj: f64 = s
                .dual
                .iter()
                .zip(lp.rows().iter())
                .map(|(y, r)| y * r.rhs)
                .sum();
            assert!(
                (dual_obj - s.objective).abs() <= 1e-6 * (1.0 + s.objective.abs()),
                "gap {} vs {}",
                s.objective,
                dual_obj
            );
        }
    }
}
