//! Solver-agnostic intermediate representation for linear / second-order
//! cone programs.
//!
//! ```text
//! minimize    cᵀx + offset
//! subject to  a_k·x  = b_k            (equalities)
//!             a_k·x <= b_k            (inequalities)
//!             x[bound_j] >= ‖M_j x + d_j‖₂   (cone blocks)
//! ```
//!
//! The JSON dump (`to_json`) serializes exactly these fields with sparse
//! `(index, coefficient)` term lists, so the program can be replayed in an
//! external solver.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{DrmpcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(j, v)| v * x[*j]).sum()
    }
}

/// Affine scalar `terms·x + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(j, v)| v * x[*j]).sum::<f64>()
    }
}

/// `x[bound] >= ‖(expr_1(x), …, expr_k(x))‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub bound: usize,
    pub exprs: Vec<AffineExpr>,
}

impl SocBlock {
    pub fn norm_at(&self, x: &[f64]) -> f64 {
        self.exprs.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt()
    }
}

/// Where each family of decision variables lives in the flat vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub z: Range<usize>,
    pub s: Range<usize>,
    pub t: Option<usize>,
    pub q: Option<Range<usize>>,
    pub sigma: Option<usize>,
    pub r: Option<Range<usize>>,
    /// Absolute-value epigraph variables of a separable l1 cost, sample-major.
    pub abs_epigraph: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
    pub cones: Vec<SocBlock>,
    pub names: Vec<String>,
    pub layout: VariableLayout,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: Vec::new(),
            objective_offset: 0.0,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
            names: Vec::new(),
            layout: VariableLayout::default(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.objective.push(cost);
        self.names.push(name.into());
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize, cost: f64, name: impl Fn(usize) -> String) -> Range<usize> {
        let start = self.num_vars;
        for k in 0..count {
            self.add_var(name(k), cost);
        }
        start..self.num_vars
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint::new(terms, rhs));
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearConstraint::new(terms, rhs));
    }

    pub fn add_cone(&mut self, bound: usize, exprs: Vec<AffineExpr>) {
        self.cones.push(SocBlock { bound, exprs });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n || self.names.len() != n {
            return Err(DrmpcError::InvalidArgument(
                "objective / names length differs from variable count".into(),
            ));
        }
        let check_terms = |terms: &[(usize, f64)]| -> Result<()> {
            for (j, v) in terms {
                if *j >= n {
                    return Err(DrmpcError::InvalidArgument(format!(
                        "variable index {j} out of range ({n} variables)"
                    )));
                }
                if !v.is_finite() {
                    return Err(DrmpcError::InvalidArgument("non-finite coefficient".into()));
                }
            }
            Ok(())
        };
        for c in self.equalities.iter().chain(&self.inequalities) {
            check_terms(&c.terms)?;
            if !c.rhs.is_finite() {
                return Err(DrmpcError::InvalidArgument("non-finite right-hand side".into()));
            }
        }
        for cone in &self.cones {
            if cone.bound >= n {
                return Err(DrmpcError::InvalidArgument("cone bound index out of range".into()));
            }
            if cone.exprs.is_empty() {
                return Err(DrmpcError::InvalidArgument("cone block with no entries".into()));
            }
            for e in &cone.exprs {
                check_terms(&e.terms)?;
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) || !self.objective_offset.is_finite() {
            return Err(DrmpcError::InvalidArgument("non-finite objective".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest constraint violation at `x`, each scaled by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .equalities
            .iter()
            .map(|c| (c.eval(x) - c.rhs).abs() / (1.0 + c.rhs.abs()));
        let ineq = self
            .inequalities
            .iter()
            .map(|c| (c.eval(x) - c.rhs).max(0.0) / (1.0 + c.rhs.abs()));
        let cone = self
            .cones
            .iter()
            .map(|c| (c.norm_at(x) - x[c.bound]).max(0.0) / (1.0 + x[c.bound].abs()));
        eq.chain(ineq).chain(cone).fold(0.0, f64::max)
    }

    /// Epigraph variables listed in the layout (`s`, `e`, `q`, `σ`, `r`).
    pub fn epigraph_vars(&self) -> Vec<usize> {
        let lay = &self.layout;
        let mut vars: Vec<usize> = lay.r.clone().unwrap_or_default().collect();
        vars.extend(lay.abs_epigraph.clone().unwrap_or_default());
        vars.extend(lay.q.clone().unwrap_or_default());
        vars.extend(lay.s.clone());
        vars.extend(lay.sigma);
        vars
    }

    /// Moves every epigraph variable onto its exact lower bound given the
    /// remaining entries of `x`, so the point is feasible to rounding and
    /// each epigraph binds. Variables with a negative cost or appearing in an
    /// equality are left alone.
    pub fn tighten_epigraphs(&self, x: &mut [f64]) {
        let mut in_eq = vec![false; self.num_vars];
        for c in &self.equalities {
            for (j, _) in &c.terms {
                in_eq[*j] = true;
            }
        }
        let vars: Vec<usize> = self
            .epigraph_vars()
            .into_iter()
            .filter(|&j| j < self.num_vars && !in_eq[j] && self.objective[j] >= 0.0)
            .collect();
        let mut lower_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_vars];
        for (k, c) in self.inequalities.iter().enumerate() {
            for (j, a) in &c.terms {
                if *a < 0.0 {
                    lower_rows[*j].push((k, *a));
                }
            }
        }
        for _ in 0..16 {
            let mut changed = false;
            for &j in &vars {
                let mut lb = f64::NEG_INFINITY;
                for &(k, a) in &lower_rows[j] {
                    let c = &self.inequalities[k];
                    let rest = c.eval(x) - a * x[j];
                    lb = lb.max((rest - c.rhs) / -a);
                }
                for cone in self.cones.iter().filter(|c| c.bound == j) {
                    lb = lb.max(cone.norm_at(x));
                }
                if lb.is_finite() && x[j] != lb {
                    x[j] = lb;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let prog: Self = serde_json::from_str(text)?;
        prog.validate()?;
        Ok(prog)
    }
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_out_of_range() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 1.0);
        p.add_le(vec![(x, 1.0)], 2.0);
        assert!(p.validate().is_ok());
        p.add_eq(vec![(5, 1.0)], 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn violation_measure() {
        let mut p = ConicProgram::new();
        let r = p.add_var("r", 1.0);
        let x = p.add_var("x", 0.0);
        p.add_cone(r, vec![AffineExpr { terms: vec![(x, 1.0)], constant: -1.0 }]);
        p.add_eq(vec![(x, 1.0)], 0.0);
        assert_eq!(p.max_violation(&[1.0, 0.0]), 0.0);
        assert!((p.max_violation(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
        let back = ConicProgram::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn tighten_moves_epigraphs_onto_bounds() {
        // s >= e0 + e1, e_k >= |x_k - 1|, x pinned by equality.
        let mut p = ConicProgram::new();
        let x = p.add_vars(2, 0.0, |k| format!("x{k}"));
        let e = p.add_vars(2, 0.0, |k| format!("e{k}"));
        let s = p.add_var("s", 1.0);
        p.layout.z = x.clone();
        p.layout.abs_epigraph = Some(e.clone());
        p.layout.s = s..s + 1;
        for k in 0..2 {
            p.add_eq(vec![(x.start + k, 1.0)], 3.0 * k as f64);
            p.add_le(vec![(x.start + k, 1.0), (e.start + k, -1.0)], 1.0);
            p.add_le(vec![(x.start + k, -1.0), (e.start + k, -1.0)], -1.0);
        }
        p.add_le(vec![(e.start, 1.0), (e.start + 1, 1.0), (s, -1.0)], 0.0);
        let mut v = vec![0.0, 3.0, 0.9, 2.2, 2.9];
        p.tighten_epigraphs(&mut v);
        assert_eq!(v, vec![0.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.max_violation(&v), 0.0);
    }
}
