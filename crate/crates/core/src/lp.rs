//! Dense two-phase primal simplex for small linear programs.
//!
//! Used where exact vertex solutions matter: the optimal-transport oracle,
//! the least-absolute-deviations radius fit, the fixed-decision worst-case
//! CVaR program, and as an LP-only backend for programs without cones.
//!
//! Entering variables follow Dantzig's rule and fall back to Bland's rule
//! after a run of degenerate pivots, which rules out cycling.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const REDUCED_COST_TOL: f64 = 1e-11;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 30;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex pivot limit ({0}) reached")]
    PivotLimit(usize),
    #[error("invalid linear program: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// `min cᵀx` subject to a list of linear rows, with each variable either
/// nonnegative or free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    bounds: Vec<Bound>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    /// Program with `num_vars` nonnegative variables and a zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            bounds: vec![Bound::NonNegative; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, cost: f64, bound: Bound) -> usize {
        self.objective.push(cost);
        self.bounds.push(bound);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_bound(&mut self, var: usize, bound: Bound) {
        self.bounds[var] = bound;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let nv = self.objective.len();
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::Invalid("non-finite right-hand side".into()));
            }
            for &(j, v) in &row.coeffs {
                if j >= nv {
                    return Err(LpError::Invalid(format!("variable index {j} out of range")));
                }
                if !v.is_finite() {
                    return Err(LpError::Invalid("non-finite coefficient".into()));
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Invalid("non-finite objective".into()));
        }

        // Column map: each user variable gets one column (plus a mirrored
        // one when free), then one slack per inequality, then artificials.
        let mut plus_col = Vec::with_capacity(nv);
        let mut minus_col = Vec::with_capacity(nv);
        let mut ncols = 0usize;
        for b in &self.bounds {
            plus_col.push(ncols);
            ncols += 1;
            match b {
                Bound::NonNegative => minus_col.push(None),
                Bound::Free => {
                    minus_col.push(Some(ncols));
                    ncols += 1;
                }
            }
        }
        let structural = ncols;
        let m = self.rows.len();
        let mut slack_col = vec![None; m];
        for (i, row) in self.rows.iter().enumerate() {
            if row.relation != Relation::Eq {
                slack_col[i] = Some(ncols);
                ncols += 1;
            }
        }

        let mut dense: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut basis: Vec<Option<usize>> = vec![None; m];
        for (i, row) in self.rows.iter().enumerate() {
            let mut r = vec![0.0; ncols];
            for &(j, v) in &row.coeffs {
                r[plus_col[j]] += v;
                if let Some(mc) = minus_col[j] {
                    r[mc] -= v;
                }
            }
            match row.relation {
                Relation::Le => r[slack_col[i].unwrap()] = 1.0,
                Relation::Ge => r[slack_col[i].unwrap()] = -1.0,
                Relation::Eq => {}
            }
            let mut b = row.rhs;
            if b < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
                b = -b;
            }
            if let Some(sc) = slack_col[i] {
                if r[sc] > 0.0 {
                    basis[i] = Some(sc);
                }
            }
            dense.push(r);
            rhs.push(b);
        }
        let first_artificial = ncols;
        for slot in basis.iter_mut().filter(|b| b.is_none()) {
            *slot = Some(ncols);
            ncols += 1;
        }
        let mut tab = Tableau::new(dense, rhs, basis.into_iter().map(|b| b.unwrap()).collect(), ncols);

        // Phase one.
        let mut phase_one_cost = vec![0.0; ncols];
        for c in phase_one_cost.iter_mut().skip(first_artificial) {
            *c = 1.0;
        }
        let mut pivots = 0;
        if ncols > first_artificial {
            let allowed = vec![true; ncols];
            pivots += tab.optimize(&phase_one_cost, &allowed)?;
            let residual: f64 = tab
                .basis
                .iter()
                .zip(&tab.rhs)
                .filter(|(b, _)| **b >= first_artificial)
                .map(|(_, v)| *v)
                .sum();
            let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if residual > 1e-9 * scale {
                return Err(LpError::Infeasible(residual));
            }
            tab.drive_out_artificials(first_artificial);
        }

        // Phase two.
        let mut cost = vec![0.0; ncols];
        for j in 0..nv {
            cost[plus_col[j]] = self.objective[j];
            if let Some(mc) = minus_col[j] {
                cost[mc] = -self.objective[j];
            }
        }
        let allowed: Vec<bool> = (0..ncols).map(|j| j < first_artificial).collect();
        pivots += tab.optimize(&cost, &allowed)?;

        let mut col_value = vec![0.0; ncols];
        for (i, &b) in tab.basis.iter().enumerate() {
            col_value[b] = tab.rhs[i];
        }
        let x: Vec<f64> = (0..nv)
            .map(|j| col_value[plus_col[j]] - minus_col[j].map_or(0.0, |mc| col_value[mc]))
            .collect();
        let objective = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        let _ = structural;
        Ok(LpSolution {
            x,
            objective,
            pivots,
        })
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn new(mut rows: Vec<Vec<f64>>, rhs: Vec<f64>, basis: Vec<usize>, ncols: usize) -> Self {
        for (i, r) in rows.iter_mut().enumerate() {
            r.resize(ncols, 0.0);
            r[basis[i]] = 1.0;
        }
        Self {
            rows,
            rhs,
            basis,
            ncols,
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, v) in d.iter_mut().zip(row) {
                    *dj -= cb * v;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, c: usize, d: &mut [f64]) {
        let p = self.rows[r][c];
        {
            let row = &mut self.rows[r];
            row.iter_mut().for_each(|v| *v /= p);
            row[c] = 1.0;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rows[i][c] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = d[c];
        if f != 0.0 {
            for (v, pv) in d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            d[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<usize, LpError> {
        let mut d = self.reduced_costs(cost);
        let mut pivots = 0;
        let mut degenerate_run = 0;
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            let mut entering = None;
            let mut best = -REDUCED_COST_TOL;
            for j in 0..self.ncols {
                if !allowed[j] || d[j] >= -REDUCED_COST_TOL {
                    continue;
                }
                if bland {
                    entering = Some(j);
                    break;
                }
                if d[j] < best {
                    best = d[j];
                    entering = Some(j);
                }
            }
            let Some(c) = entering else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c, &mut d);
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit(MAX_PIVOTS));
            }
        }
    }

    /// Pivots remaining zero-level artificials out of the basis; rows with
    /// no usable pivot are linearly dependent and get dropped.
    fn drive_out_artificials(&mut self, first_artificial: usize) {
        let mut i = 0;
        let mut scratch = vec![0.0; self.ncols];
        while i < self.rows.len() {
            if self.basis[i] < first_artificial {
                i += 1;
                continue;
            }
            let col = (0..first_artificial)
                .filter(|&j| self.rows[i][j].abs() > 1e-9)
                .max_by(|&a, &b| self.rows[i][a].abs().total_cmp(&self.rows[i][b].abs()));
            match col {
                Some(c) => {
                    self.pivot(i, c, &mut scratch);
                    i += 1;
                }
                None => {
                    self.rows.remove(i);
                    self.rhs.remove(i);
                    self.basis.remove(i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_x_with_lower_bound() {
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 3.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_max_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -3.0);
        lp.set_cost(1, -5.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn free_variables_and_negative_rhs() {
        // min |x + 2| written as t >= x + 2, t >= -x - 2, t >= 0 via free x.
        let mut lp = LinearProgram::new(2);
        lp.set_bound(0, Bound::Free);
        lp.set_cost(1, 1.0);
        lp.add_row(vec![(1, 1.0), (0, -1.0)], Relation::Ge, 2.0);
        lp.add_row(vec![(1, 1.0), (0, 1.0)], Relation::Ge, -2.0);
        let sol = lp.solve().unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol.x[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(0, 1.0)], Relation::Le, -1.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));

        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 0.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        // Transportation with a redundant balance row.
        let mut lp = LinearProgram::new(4);
        let cost = [0.0, 2.0, 1.0, 1.0];
        for (j, c) in cost.iter().enumerate() {
            lp.set_cost(j, *c);
        }
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 0.5);
        lp.add_row(vec![(2, 1.0), (3, 1.0)], Relation::Eq, 0.5);
        lp.add_row(vec![(0, 1.0), (2, 1.0)], Relation::Eq, 0.5);
        lp.add_row(vec![(1, 1.0), (3, 1.0)], Relation::Eq, 0.5);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.objective, 0.5);
    }
}
