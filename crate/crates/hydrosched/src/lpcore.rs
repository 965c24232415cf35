//! Linear-program assembly and solution with primal and dual extraction.
//! Every optimization model in the crate is built on this layer, which wraps
//! the Clarabel interior-point solver behind a status/tolerance contract.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use thiserror::Error;

/// Primal feasibility tolerance, relative to each row's scale.
pub const FEAS_TOL: f64 = 1e-7;
/// Relative duality-gap tolerance certified on every optimal solve.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConId(usize);

impl ConId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    name: String,
    terms: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// LP in natural form: named variables with bounds, linear rows with a
/// sense and rhs, and a maximized linear objective. `f64::INFINITY` /
/// `NEG_INFINITY` mark unbounded variable sides.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    var_names: Vec<String>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    obj: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Certified solve result. When `status` is `Optimal` the primal point
/// satisfies every row within `FEAS_TOL` (row-relative) and the duality gap
/// is below `GAP_TOL` relative; `dual` holds one valid dual vector
/// (d objective / d rhs, uniqueness not promised).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.var_names.push(name.into());
        self.lb.push(lb);
        self.ub.push(ub);
        self.obj.push(0.0);
        VarId(self.var_names.len() - 1)
    }

    pub fn set_var_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.lb[v.0] = lb;
        self.ub[v.0] = ub;
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.lb[v.0], self.ub[v.0])
    }

    pub fn set_objective_coeff(&mut self, v: VarId, c: f64) {
        self.obj[v.0] = c;
    }

    pub fn add_objective_coeff(&mut self, v: VarId, c: f64) {
        self.obj[v.0] += c;
    }

    pub fn objective_coeff(&self, v: VarId) -> f64 {
        self.obj[v.0]
    }

    /// Current objective as (var, coeff) terms, skipping zeros.
    pub fn objective_terms(&self) -> Vec<(VarId, f64)> {
        self.obj
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (VarId(i), c))
            .collect()
    }

    pub fn clear_objective(&mut self) {
        self.obj.iter_mut().for_each(|c| *c = 0.0);
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) -> ConId {
        self.rows.push(Row {
            name: name.into(),
            terms: terms.iter().map(|&(v, c)| (v.0, c)).collect(),
            sense,
            rhs,
        });
        ConId(self.rows.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn constraint_rhs(&self, c: ConId) -> f64 {
        self.rows[c.0].rhs
    }

    pub fn set_constraint_rhs(&mut self, c: ConId, rhs: f64) {
        self.rows[c.0].rhs = rhs;
    }

    /// Copy of the program keeping only the first `num_rows` constraints
    /// (variables, bounds and objective are preserved).
    pub fn truncated(&self, num_rows: usize) -> LinearProgram {
        let mut lp = self.clone();
        lp.rows.truncate(num_rows);
        lp
    }

    fn check_well_formed(&self) -> Result<(), LpError> {
        for (i, (&lo, &hi)) in self.lb.iter().zip(&self.ub).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(LpError::Malformed(format!(
                    "NaN bound on variable '{}'",
                    self.var_names[i]
                )));
            }
        }
        if self.obj.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for row in &self.rows {
            if row.terms.is_empty() {
                return Err(LpError::Malformed(format!("row '{}' has no terms", row.name)));
            }
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row '{}' has non-finite rhs", row.name)));
            }
            for &(v, c) in &row.terms {
                if v >= self.num_vars() {
                    return Err(LpError::Malformed(format!(
                        "row '{}' references undeclared variable {v}",
                        row.name
                    )));
                }
                if !c.is_finite() {
                    return Err(LpError::Malformed(format!(
                        "row '{}' has non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Solves the LP. Optimal solutions are re-verified against the public
    /// tolerances before being returned; a solver answer that cannot be
    /// certified surfaces as `LpError::Numerical`, never as a silent result.
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        // The certificate below is checked on the unscaled problem, so a
        // solver answer that only satisfies its own scaled tolerances can
        // fail it; such answers get one retry at a tighter target.
        match self.solve_with_tol(1e-9) {
            Err(LpError::Numerical(_)) => self.solve_with_tol(1e-11),
            other => other,
        }
    }

    fn solve_with_tol(&self, tol: f64) -> Result<LpSolution, LpError> {
        self.check_well_formed()?;
        let n = self.num_vars();

        // Variables pinned by their bounds are substituted out up front:
        // their terms become right-hand-side shifts and their objective
        // contribution a constant. This keeps zero-capacity flows and
        // switched-off bids from inflating the cone problem.
        let fixed: Vec<bool> = (0..n).map(|v| self.lb[v] == self.ub[v] && self.lb[v].is_finite()).collect();
        let obj_const: f64 = (0..n).filter(|&v| fixed[v]).map(|v| self.obj[v] * self.lb[v]).sum();

        if self.lb.iter().zip(&self.ub).any(|(&lo, &hi)| lo > hi) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: Vec::new(),
                dual: Vec::new(),
                objective: f64::NAN,
            });
        }

        // sensed rows in clarabel geometry: a.x + s = b with s in cone
        struct SolverRow {
            terms: Vec<(usize, f64)>,
            rhs: f64,
            source: Option<(usize, bool)>, // (constraint idx, flipped)
        }
        let mut eq_rows: Vec<SolverRow> = Vec::new();
        let mut ineq_rows: Vec<SolverRow> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let mut terms = row.terms.clone();
            terms.sort_by_key(|&(v, _)| v);
            terms.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            let mut rhs = row.rhs;
            terms.retain(|&(v, c)| {
                if fixed[v] {
                    rhs -= c * self.lb[v];
                    false
                } else {
                    true
                }
            });
            // A row left with no live terms is a pure constant; it is still
            // verified against the certificate below, so an inconsistent one
            // cannot slip through, but the solver never sees it.
            if terms.is_empty() {
                let ok = match row.sense {
                    Sense::Eq => rhs.abs() <= FEAS_TOL * (1.0 + row.rhs.abs()),
                    Sense::Le => rhs >= -FEAS_TOL * (1.0 + row.rhs.abs()),
                    Sense::Ge => rhs <= FEAS_TOL * (1.0 + row.rhs.abs()),
                };
                if !ok {
                    return Ok(LpSolution {
                        status: LpStatus::Infeasible,
                        primal: Vec::new(),
                        dual: Vec::new(),
                        objective: f64::NAN,
                    });
                }
                continue;
            }
            match row.sense {
                Sense::Eq => eq_rows.push(SolverRow { terms, rhs, source: Some((i, false)) }),
                Sense::Le => ineq_rows.push(SolverRow { terms, rhs, source: Some((i, false)) }),
                Sense::Ge => ineq_rows.push(SolverRow {
                    terms: terms.iter().map(|&(v, c)| (v, -c)).collect(),
                    rhs: -rhs,
                    source: Some((i, true)),
                }),
            }
        }
        for v in 0..n {
            if fixed[v] {
                continue;
            }
            let (lo, hi) = (self.lb[v], self.ub[v]);
            if hi.is_finite() {
                ineq_rows.push(SolverRow { terms: vec![(v, 1.0)], rhs: hi, source: None });
            }
            if lo.is_finite() {
                ineq_rows.push(SolverRow { terms: vec![(v, -1.0)], rhs: -lo, source: None });
            }
        }

        let m = eq_rows.len() + ineq_rows.len();
        if m == 0 {
            // nothing left for the solver: every live variable is free
            if (0..n).any(|v| !fixed[v] && self.obj[v] != 0.0) {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    primal: Vec::new(),
                    dual: Vec::new(),
                    objective: f64::NAN,
                });
            }
            return Ok(LpSolution {
                status: LpStatus::Optimal,
                primal: (0..n).map(|v| if fixed[v] { self.lb[v] } else { 0.0 }).collect(),
                dual: vec![0.0; self.rows.len()],
                objective: obj_const,
            });
        }

        let all_rows: Vec<&SolverRow> = eq_rows.iter().chain(ineq_rows.iter()).collect();
        let mut colcnt = vec![0usize; n];
        for row in &all_rows {
            for &(v, _) in &row.terms {
                colcnt[v] += 1;
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for v in 0..n {
            colptr[v + 1] = colptr[v] + colcnt[v];
        }
        let nnz = colptr[n];
        let mut rowval = vec![0usize; nnz];
        let mut nzval = vec![0.0f64; nnz];
        let mut cursor = colptr.clone();
        let mut b = vec![0.0f64; m];
        for (ri, row) in all_rows.iter().enumerate() {
            b[ri] = row.rhs;
            for &(v, c) in &row.terms {
                rowval[cursor[v]] = ri;
                nzval[cursor[v]] = c;
                cursor[v] += 1;
            }
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));
        // Substituted variables keep their column (empty) but lose their
        // objective weight, which lands in the constant instead.
        let q: Vec<f64> = (0..n).map(|v| if fixed[v] { 0.0 } else { -self.obj[v] }).collect();

        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if !eq_rows.is_empty() {
            cones.push(ZeroConeT(eq_rows.len()));
        }
        if !ineq_rows.is_empty() {
            cones.push(NonnegativeConeT(ineq_rows.len()));
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .max_iter(200)
            .build()
            .map_err(|e| LpError::Malformed(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| LpError::Malformed(format!("solver rejected model: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    primal: Vec::new(),
                    dual: Vec::new(),
                    objective: f64::NAN,
                });
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    primal: Vec::new(),
                    dual: Vec::new(),
                    objective: f64::NAN,
                });
            }
            other => return Err(LpError::Numerical(format!("solver stopped: {other:?}"))),
        }

        let mut x = sol.x.clone();
        for v in 0..n {
            if fixed[v] {
                x[v] = self.lb[v];
            }
        }
        let objective = -sol.obj_val + obj_const;
        let dual_objective = -sol.obj_val_dual + obj_const;

        // certify the answer against the public contract
        let gap = (objective - dual_objective).abs();
        if gap > GAP_TOL * (1.0 + objective.abs()) {
            return Err(LpError::Numerical(format!(
                "duality gap {gap:.3e} exceeds tolerance"
            )));
        }
        // Residuals are measured in the normwise backward-error sense:
        // relative to ||a_i||_inf * ||x||_inf + |b_i|, the standard measure
        // for how far a computed point is from exactly satisfying a row.
        let x_norm = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for row in &self.rows {
            let ax: f64 = row.terms.iter().map(|&(v, c)| c * x[v]).sum();
            let row_norm = row.terms.iter().map(|&(_, c)| c.abs()).fold(0.0, f64::max);
            let scale = 1.0 + row.rhs.abs() + row_norm * x_norm;
            let viol = match row.sense {
                Sense::Eq => (ax - row.rhs).abs(),
                Sense::Le => (ax - row.rhs).max(0.0),
                Sense::Ge => (row.rhs - ax).max(0.0),
            };
            if viol > FEAS_TOL * scale {
                return Err(LpError::Numerical(format!(
                    "row '{}' violated by {viol:.3e}",
                    row.name
                )));
            }
        }
        for v in 0..n {
            let (lo, hi) = (self.lb[v], self.ub[v]);
            let bviol = (lo - x[v]).max(0.0).max(x[v] - hi);
            let scale = 1.0 + lo.abs().min(hi.abs()) + x_norm;
            if bviol > FEAS_TOL * scale {
                return Err(LpError::Numerical(format!(
                    "bound on '{}' violated by {bviol:.3e}",
                    self.var_names[v]
                )));
            }
        }

        // map conic duals back to the sensed rows; for a maximized objective
        // the equality/<= dual is the conic multiplier itself, >= flips sign
        let mut dual = vec![0.0; self.rows.len()];
        for (pos, row) in eq_rows.iter().chain(ineq_rows.iter()).enumerate() {
            if let Some((idx, flipped)) = row.source {
                dual[idx] = if flipped { -sol.z[pos] } else { sol.z[pos] };
            }
        }

        Ok(LpSolution {
            status: LpStatus::Optimal,
            primal: x,
            dual,
            objective,
        })
    }

    /// Renders the model in CPLEX LP interchange format for external
    /// cross-checking. Variable and row names are sanitized to the
    /// `[A-Za-z0-9_]` alphabet.
    pub fn to_lp_text(&self) -> String {
        fn clean(s: &str) -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
                .collect()
        }
        let mut out = String::from("Maximize\n obj:");
        let mut first = true;
        for (i, &c) in self.obj.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let sign = if c < 0.0 { " -" } else if first { "" } else { " +" };
            out.push_str(&format!("{} {} {}", sign, c.abs(), clean(&self.var_names[i])));
            first = false;
        }
        if first {
            out.push_str(" 0 ");
            out.push_str(&clean(self.var_names.first().map(String::as_str).unwrap_or("x0")));
        }
        out.push_str("\nSubject To\n");
        for (ri, row) in self.rows.iter().enumerate() {
            out.push_str(&format!(" {}:", clean(if row.name.is_empty() { "r" } else { &row.name })));
            if row.name.is_empty() {
                out.push_str(&ri.to_string());
            }
            let mut f = true;
            for &(v, c) in &row.terms {
                let sign = if c < 0.0 { " -" } else if f { "" } else { " +" };
                out.push_str(&format!("{} {} {}", sign, c.abs(), clean(&self.var_names[v])));
                f = false;
            }
            let rel = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            out.push_str(&format!(" {} {}\n", rel, row.rhs));
        }
        out.push_str("Bounds\n");
        for v in 0..self.num_vars() {
            let (lo, hi) = (self.lb[v], self.ub[v]);
            let name = clean(&self.var_names[v]);
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                out.push_str(&format!(" {name} free\n"));
            } else if lo == hi {
                out.push_str(&format!(" {name} = {lo}\n"));
            } else {
                let lo_s = if lo == f64::NEG_INFINITY { "-inf".to_string() } else { lo.to_string() };
                let hi_s = if hi == f64::INFINITY { "+inf".to_string() } else { hi.to_string() };
                out.push_str(&format!(" {lo_s} <= {name} <= {hi_s}\n"));
            }
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_cap() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        lp.set_objective_coeff(x, 1.0);
        let c = lp.add_constraint("cap", &[(x, 1.0)], Sense::Le, 3.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.primal[x.index()] - 3.0).abs() < 1e-6);
        assert!((s.dual[c.index()] - 1.0).abs() < 1e-6);
        assert!((s.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_cap() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        lp.set_objective_coeff(x, 1.0);
        lp.add_constraint("cap", &[(x, 1.0)], Sense::Le, -1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn scaled_objective_dual() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective_coeff(x, 2.0);
        let c = lp.add_constraint("cap", &[(x, 1.0)], Sense::Le, 5.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 10.0).abs() < 1e-6);
        assert!((s.dual[c.index()] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        lp.set_objective_coeff(x, 1.0);
        lp.add_constraint("floor", &[(x, 1.0)], Sense::Ge, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn ge_dual_sign() {
        // max x, x >= 1, x <= 4: the >= row is slack at optimum, dual 0;
        // force it binding with objective -x instead
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective_coeff(x, -1.0);
        let floor = lp.add_constraint("floor", &[(x, 1.0)], Sense::Ge, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 1.0).abs() < 1e-6);
        // raising the rhs lowers (worsens) max -x by 1
        assert!((s.dual[floor.index()] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn equality_dual() {
        // max -2x - 3y s.t. x + y = 4, x <= 3, y <= 3, x,y >= 0
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 3.0);
        let y = lp.add_var("y", 0.0, 3.0);
        lp.set_objective_coeff(x, -2.0);
        lp.set_objective_coeff(y, -3.0);
        let c = lp.add_constraint("sum", &[(x, 1.0), (y, 1.0)], Sense::Eq, 4.0);
        let s = lp.solve().unwrap();
        // x = 3 (capped), y = 1
        assert!((s.objective + 9.0).abs() < 1e-6);
        // one more unit of rhs must be met by y since x is at its cap
        assert!((s.dual[c.index()] + 3.0).abs() < 1e-5);
    }

    #[test]
    fn duality_gap_certified() {
        let mut lp = LinearProgram::new();
        let vars: Vec<_> = (0..5).map(|i| lp.add_var(format!("x{i}"), 0.0, 10.0)).collect();
        for (i, &v) in vars.iter().enumerate() {
            lp.set_objective_coeff(v, 1.0 + i as f64);
        }
        let terms: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint("budget", &terms, Sense::Le, 12.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // optimum: fill from the most valuable down: 10 of x4 + 2 of x3
        assert!((s.objective - (50.0 + 8.0)).abs() < 1e-5);
    }

    #[test]
    fn deterministic_resolve() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 7.0);
        let y = lp.add_var("y", 0.0, 7.0);
        lp.set_objective_coeff(x, 1.0);
        lp.set_objective_coeff(y, 1.3);
        lp.add_constraint("mix", &[(x, 2.0), (y, 1.0)], Sense::Le, 9.0);
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.primal, b.primal);
    }

    #[test]
    fn malformed_rows_rejected() {
        let mut lp = LinearProgram::new();
        let _x = lp.add_var("x", 0.0, 1.0);
        lp.add_constraint("empty", &[], Sense::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::Malformed(_))));
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 2.0, 1.0);
        lp.set_objective_coeff(x, 1.0);
        lp.add_constraint("c", &[(x, 1.0)], Sense::Le, 10.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn fixed_variable_equality() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 4.0, 4.0);
        let y = lp.add_var("y", 0.0, 10.0);
        lp.set_objective_coeff(y, 1.0);
        lp.add_constraint("tie", &[(x, 1.0), (y, -1.0)], Sense::Ge, 0.0);
        let s = lp.solve().unwrap();
        assert!((s.primal[x.index()] - 4.0).abs() < 1e-7);
        assert!((s.primal[y.index()] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn lp_text_export() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x[0]", 0.0, 3.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective_coeff(x, 2.0);
        lp.set_objective_coeff(y, -1.0);
        lp.add_constraint("bal", &[(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        let text = lp.to_lp_text();
        assert!(text.contains("Maximize"));
        assert!(text.contains("bal: 1 x_0_ + 1 y = 1"));
        assert!(text.contains("y free"));
        assert!(text.contains("0 <= x_0_ <= 3"));
    }
}
