//! Solver contract over conic backends.
//!
//! `Clarabel` (interior point, linear + second-order cones) is the default.
//! Interior-point solutions are finished by moving each epigraph variable onto
//! its exact lower bound (see `ConicProgram::tighten_epigraphs`).
//! `Simplex` runs the in-crate dense simplex and accepts only programs
//! without cone blocks; it is mainly a cross-check for cone-free SAA programs.

use std::str::FromStr;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::program::ConicProgram;
use crate::error::{DrmpcError, Result};
use crate::lp::{Bound, LinearProgram, LpError, Relation};

/// Reduced-accuracy backend results are accepted only below this scaled violation.
const ALMOST_SOLVED_MAX_VIOLATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Clarabel,
    Simplex,
}

impl FromStr for Backend {
    type Err = DrmpcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clarabel" => Ok(Backend::Clarabel),
            "simplex" => Ok(Backend::Simplex),
            other => Err(DrmpcError::InvalidArgument(format!(
                "unknown solver backend {other:?} (expected clarabel or simplex)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub backend: Backend,
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Clarabel,
            tol_feas: 1e-8,
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub backend: String,
    pub iterations: u32,
    pub solve_time: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Scaled constraint violation measured on the returned point.
    pub max_violation: f64,
    /// Raw backend status or error text.
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Full primal vector in program order.
    pub x: Vec<f64>,
    pub z_star: DVector<f64>,
    pub objective: f64,
    pub s: Vec<f64>,
    pub t: Option<f64>,
    pub q: Vec<f64>,
    pub sigma: Option<f64>,
    pub r: Vec<f64>,
    pub stats: SolverStats,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn from_x(prog: &ConicProgram, status: SolveStatus, x: Vec<f64>, stats: SolverStats) -> Self {
        let lay = &prog.layout;
        let slice = |r: &std::ops::Range<usize>| x[r.clone()].to_vec();
        let objective = if status == SolveStatus::Optimal {
            prog.objective_value(&x)
        } else {
            f64::NAN
        };
        Self {
            status,
            z_star: DVector::from_vec(slice(&lay.z)),
            objective,
            s: slice(&lay.s),
            t: lay.t.map(|i| x[i]),
            q: lay.q.as_ref().map(slice).unwrap_or_default(),
            sigma: lay.sigma.map(|i| x[i]),
            r: lay.r.as_ref().map(slice).unwrap_or_default(),
            x,
            stats,
        }
    }
}

pub fn solve(prog: &ConicProgram) -> Result<SolveResult> {
    solve_with(prog, &SolverSettings::default())
}

pub fn solve_with(prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult> {
    prog.validate()?;
    match settings.backend {
        Backend::Clarabel => solve_clarabel(prog, settings),
        Backend::Simplex => solve_simplex(prog),
    }
}

fn solve_clarabel(prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult> {
    let n = prog.num_vars;
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut push_row = |terms: &[(usize, f64)], sign: f64, rhs: f64, b: &mut Vec<f64>| {
        let row = b.len();
        for (j, v) in terms {
            if *v != 0.0 {
                rows.push(row);
                cols.push(*j);
                vals.push(sign * v);
            }
        }
        b.push(rhs);
    };
    for c in &prog.equalities {
        push_row(&c.terms, 1.0, c.rhs, &mut b);
    }
    if !prog.equalities.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(prog.equalities.len()));
    }
    for c in &prog.inequalities {
        push_row(&c.terms, 1.0, c.rhs, &mut b);
    }
    if !prog.inequalities.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(prog.inequalities.len()));
    }
    // Clarabel form: A x + s = b with s in K; for a cone block the slack is
    // (x_bound, M x + d), so the rows carry -e_bound and -M with b = (0, d).
    for cone in &prog.cones {
        push_row(&[(cone.bound, 1.0)], -1.0, 0.0, &mut b);
        for e in &cone.exprs {
            push_row(&e.terms, -1.0, e.constant, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + cone.exprs.len()));
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let p = CscMatrix::new(n, n, vec![0; n + 1], Vec::new(), Vec::new());

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(settings.tol_feas)
        .tol_gap_abs(settings.tol_gap_abs)
        .tol_gap_rel(settings.tol_gap_rel)
        .max_iter(settings.max_iter)
        .build()
        .map_err(|e| DrmpcError::Solver(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &prog.objective, &a, &b, &cones, clarabel_settings)
        .map_err(|e| DrmpcError::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let mut x = sol.x.clone();
    let finite = x.iter().all(|v| v.is_finite());
    if finite && matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        prog.tighten_epigraphs(&mut x);
    }
    let violation = if finite { prog.max_violation(&x) } else { f64::INFINITY };
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if violation <= ALMOST_SOLVED_MAX_VIOLATION => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let stats = SolverStats {
        backend: "clarabel".into(),
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        max_violation: violation,
        message: format!("{:?}", sol.status),
    };
    Ok(SolveResult::from_x(prog, status, x, stats))
}

fn solve_simplex(prog: &ConicProgram) -> Result<SolveResult> {
    if !prog.cones.is_empty() {
        return Err(DrmpcError::Solver(
            "simplex backend supports only programs without cone blocks".into(),
        ));
    }
    let mut lp = LinearProgram::new(prog.num_vars);
    for (j, c) in prog.objective.iter().enumerate() {
        lp.set_cost(j, *c);
        lp.set_bound(j, Bound::Free);
    }
    for c in &prog.equalities {
        lp.add_row(c.terms.clone(), Relation::Eq, c.rhs);
    }
    for c in &prog.inequalities {
        lp.add_row(c.terms.clone(), Relation::Le, c.rhs);
    }
    let mut stats = SolverStats {
        backend: "simplex".into(),
        ..SolverStats::default()
    };
    let (status, x) = match lp.solve() {
        Ok(sol) => {
            stats.iterations = sol.pivots as u32;
            stats.max_violation = prog.max_violation(&sol.x);
            stats.message = "optimal".into();
            (SolveStatus::Optimal, sol.x)
        }
        Err(e) => {
            stats.message = e.to_string();
            let status = match e {
                LpError::Infeasible(_) => SolveStatus::Infeasible,
                LpError::Unbounded => SolveStatus::Unbounded,
                _ => SolveStatus::NumericalFailure,
            };
            (status, vec![f64::NAN; prog.num_vars])
        }
    };
    Ok(SolveResult::from_x(prog, status, x, stats))
}

#[cfg(test)]
mod tests {
    use super::super::program::AffineExpr;
    use super::*;

    fn layout_all(p: &mut ConicProgram) {
        p.layout.z = 0..p.num_vars;
        p.layout.s = 0..0;
    }

    #[test]
    fn scalar_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 1.0);
        p.add_le(vec![(x, -1.0)], -3.0);
        layout_all(&mut p);
        for backend in [Backend::Clarabel, Backend::Simplex] {
            let settings = SolverSettings {
                backend,
                ..SolverSettings::default()
            };
            let res = solve_with(&p, &settings).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal);
            assert!((res.objective - 3.0).abs() < 1e-7, "{backend:?}: {}", res.objective);
        }
    }

    #[test]
    fn cone_epigraph_distance() {
        let mut p = ConicProgram::new();
        let r = p.add_var("r", 1.0);
        let x = p.add_var("x", 0.0);
        let y = p.add_var("y", 0.0);
        p.add_eq(vec![(x, 1.0)], 0.0);
        p.add_eq(vec![(y, 1.0)], 0.0);
        p.add_cone(
            r,
            vec![
                AffineExpr { terms: vec![(x, 1.0)], constant: -1.0 },
                AffineExpr { terms: vec![(y, 1.0)], constant: -1.0 },
            ],
        );
        layout_all(&mut p);
        let res = solve(&p).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective - 2f64.sqrt()).abs() < 1e-7);
        assert!(solve_with(
            &p,
            &SolverSettings {
                backend: Backend::Simplex,
                ..SolverSettings::default()
            }
        )
        .is_err());
    }

    #[test]
    fn infeasible_and_unbounded_statuses() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 1.0);
        p.add_le(vec![(x, 1.0)], -1.0);
        p.add_le(vec![(x, -1.0)], -1.0);
        layout_all(&mut p);
        assert_eq!(solve(&p).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProgram::new();
        let x = p.add_var("x", 1.0);
        p.add_le(vec![(x, 1.0)], 1.0);
        layout_all(&mut p);
        assert_eq!(solve(&p).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("Clarabel".parse::<Backend>().unwrap(), Backend::Clarabel);
        assert_eq!("simplex".parse::<Backend>().unwrap(), Backend::Simplex);
        assert!("mosek".parse::<Backend>().is_err());
    }
}
