//! Finite conic reformulation of the distributionally robust finite-horizon
//! problem, and its sample-average special case.
//!
//! With predictions `ŷⁱ(z) = L̂z + ξ̂ⁱ` and radius `ε(z) = ε₁·(1/N)Σ rᵢ + ε₂`,
//! `rᵢ >= ‖z − zⁱ‖`, the program is
//!
//! ```text
//! min  λ·ε(z) + (1/N) Σ sᵢ + w_σ σ
//! s.t. x₀-part of z = measured state, optional input bounds
//!      a_j·ŷⁱ(z) + b_j·z + c_j <= sᵢ                      ∀ i, j
//!      θ·ε(z) + (1/N) Σ qᵢ <= β t + σ
//!      d_k·ŷⁱ(z) + e_k·z + f_k + t <= qᵢ,  qᵢ >= 0,  σ >= 0   ∀ i, k
//! ```
//!
//! where `λ = max_j ‖a_j‖` and `θ = max_k ‖d_k‖` are constants.

mod program;
mod solver;

pub use program::{AffineExpr, ConicProgram, LinearConstraint, SocBlock, VariableLayout};
pub use solver::{solve, solve_with, Backend, SolveResult, SolveStatus, SolverSettings, SolverStats};

use nalgebra::DVector;

use crate::error::{check_dim, DrmpcError, Result};
use crate::identification::{predict_ensemble, DiscreteDistribution, MultiStepPredictor};
use crate::lp::{Bound, LinearProgram, Relation};
use crate::radius::AmbiguityRadius;
use crate::transport::{AffinePiece, PwaFunction};

/// `Σ_k |y[selector_k] − reference_k|`, kept separable so the program needs
/// one absolute-value epigraph per term instead of `2^K` pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableL1Cost {
    pub selector: Vec<usize>,
    pub reference: Vec<f64>,
}

impl SeparableL1Cost {
    pub fn new(selector: Vec<usize>, reference: Vec<f64>) -> Result<Self> {
        check_dim("l1 reference", selector.len(), reference.len())?;
        if selector.is_empty() {
            return Err(DrmpcError::InvalidArgument("l1 cost needs a tracked entry".into()));
        }
        Ok(Self { selector, reference })
    }

    /// Largest gradient norm over all sign patterns.
    pub fn lipschitz(&self) -> f64 {
        (self.selector.len() as f64).sqrt()
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        self.selector
            .iter()
            .zip(&self.reference)
            .map(|(&i, r)| (y[i] - r).abs())
            .sum()
    }

    pub fn to_enumerated(&self, y_dim: usize, z_dim: usize) -> Result<PwaFunction> {
        PwaFunction::l1_enumerated(y_dim, z_dim, &self.selector, &self.reference)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction {
    Pwa(PwaFunction),
    SeparableL1(SeparableL1Cost),
}

impl CostFunction {
    pub fn lipschitz(&self) -> f64 {
        match self {
            CostFunction::Pwa(f) => f.lipschitz(),
            CostFunction::SeparableL1(c) => c.lipschitz(),
        }
    }

    pub fn value(&self, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        match self {
            CostFunction::Pwa(f) => f.value(y, z),
            CostFunction::SeparableL1(c) => c.value(y),
        }
    }
}

/// Extra constraints on the decision beyond pinning the initial state.
/// Vectors cover the stacked inputs `(u₀, …, u_{T−1})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZConstraints {
    pub input_lower: Option<DVector<f64>>,
    pub input_upper: Option<DVector<f64>>,
    pub fixed_inputs: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FhocSpec {
    pub predictor: MultiStepPredictor,
    pub cost: CostFunction,
    pub constraint: Option<PwaFunction>,
    pub beta: f64,
    pub radius: AmbiguityRadius,
    /// Weight of the CVaR slack; zero removes the slack variable.
    pub slack_weight: f64,
    pub z_constraints: ZConstraints,
}

impl FhocSpec {
    pub fn validate(&self) -> Result<()> {
        let pred = &self.predictor;
        let (yd, zd) = (pred.y_dim(), pred.z_dim());
        if pred.residuals.is_empty() {
            return Err(DrmpcError::InvalidArgument("predictor has no residuals".into()));
        }
        check_dim("predictor anchors", pred.residuals.len(), pred.anchors.len())?;
        check_dim("predictor rows", yd, pred.l_hat.nrows())?;
        check_dim("predictor columns", zd, pred.l_hat.ncols())?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(DrmpcError::InvalidArgument(format!(
                "beta {} outside (0, 1)",
                self.beta
            )));
        }
        if !(self.slack_weight.is_finite() && self.slack_weight >= 0.0) {
            return Err(DrmpcError::InvalidArgument("slack weight must be >= 0".into()));
        }
        AmbiguityRadius::new(self.radius.eps1, self.radius.eps2)?;
        match &self.cost {
            CostFunction::Pwa(f) => f.check_dims(yd, zd)?,
            CostFunction::SeparableL1(c) => {
                if c.selector.iter().any(|&i| i >= yd) {
                    return Err(DrmpcError::InvalidArgument("l1 selector out of range".into()));
                }
            }
        }
        if let Some(g) = &self.constraint {
            g.check_dims(yd, zd)?;
        }
        let ud = zd - pred.n;
        let zc = &self.z_constraints;
        for v in [&zc.input_lower, &zc.input_upper, &zc.fixed_inputs].into_iter().flatten() {
            check_dim("input constraint", ud, v.len())?;
        }
        Ok(())
    }

    pub fn with_radius(&self, radius: AmbiguityRadius) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }
}

/// Cost `Σ_k |x₍₁₎,k − 1|` over the horizon: tracks the first state at a
/// constant reference of one.
pub fn tracking_cost_first_state(n: usize, horizon: usize) -> SeparableL1Cost {
    SeparableL1Cost {
        selector: (0..horizon).map(|k| k * n).collect(),
        reference: vec![1.0; horizon],
    }
}

/// Pieces `x₍₁₎,k − 1` and `−x₍₂₎,k` for every predicted step, i.e. the joint
/// requirement `x₍₁₎ <= 1` and `x₍₂₎ >= 0`.
pub fn box_constraint_first_two_states(n: usize, m: usize, horizon: usize) -> Result<PwaFunction> {
    if n < 2 {
        return Err(DrmpcError::InvalidArgument("constraint needs two states".into()));
    }
    let (yd, zd) = (n * horizon, n + m * horizon);
    let mut pieces = Vec::with_capacity(2 * horizon);
    for k in 0..horizon {
        let mut a = DVector::zeros(yd);
        a[k * n] = 1.0;
        pieces.push(AffinePiece::new(a, DVector::zeros(zd), -1.0));
        let mut a = DVector::zeros(yd);
        a[k * n + 1] = -1.0;
        pieces.push(AffinePiece::new(a, DVector::zeros(zd), 0.0));
    }
    PwaFunction::new(pieces)
}

/// The tracking controller of the numerical example: l1 tracking cost, CVaR
/// box constraint at `beta = 0.2`, slack weight `1e6`.
pub fn example_controller(predictor: MultiStepPredictor, radius: AmbiguityRadius) -> Result<FhocSpec> {
    let (n, m, horizon) = (predictor.n, predictor.m, predictor.horizon);
    let spec = FhocSpec {
        cost: CostFunction::SeparableL1(tracking_cost_first_state(n, horizon)),
        constraint: Some(box_constraint_first_two_states(n, m, horizon)?),
        beta: 0.2,
        radius,
        slack_weight: 1e6,
        z_constraints: ZConstraints::default(),
        predictor,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_drmpc(spec: &FhocSpec, x0: &DVector<f64>) -> Result<ConicProgram> {
    build(spec, x0, spec.radius, true)
}

pub fn build_saa(spec: &FhocSpec, x0: &DVector<f64>) -> Result<ConicProgram> {
    build(spec, x0, AmbiguityRadius::zero(), false)
}

/// Terms of `w·(L̂z) + g·z` as a sparse row over the `z` block, for a
/// y-gradient `w` and z-gradient `g`.
fn lifted_row(pred: &MultiStepPredictor, w: &DVector<f64>, g: &DVector<f64>, z_offset: usize) -> Vec<(usize, f64)> {
    let coef = pred.l_hat.tr_mul(w) + g;
    coef.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(c, v)| (z_offset + c, *v))
        .collect()
}

fn build(spec: &FhocSpec, x0: &DVector<f64>, radius: AmbiguityRadius, with_cones: bool) -> Result<ConicProgram> {
    spec.validate()?;
    let pred = &spec.predictor;
    check_dim("initial state", pred.n, x0.len())?;
    let count = pred.sample_count();
    let inv_n = 1.0 / count as f64;
    let zd = pred.z_dim();
    let lambda = spec.cost.lipschitz();

    let mut prog = ConicProgram::new();
    let z = prog.add_vars(zd, 0.0, |c| format!("z[{c}]"));
    let s = prog.add_vars(count, inv_n, |i| format!("s[{i}]"));
    prog.layout.z = z.clone();
    prog.layout.s = s.clone();

    let r = if with_cones {
        let r = prog.add_vars(count, lambda * radius.eps1 * inv_n, |i| format!("r[{i}]"));
        prog.layout.r = Some(r.clone());
        Some(r)
    } else {
        None
    };
    prog.objective_offset = lambda * radius.eps2;

    // Decision set: pinned initial state, optional inputs.
    for c in 0..pred.n {
        prog.add_eq(vec![(z.start + c, 1.0)], x0[c]);
    }
    let zc = &spec.z_constraints;
    let input = |k: usize| z.start + pred.n + k;
    if let Some(fixed) = &zc.fixed_inputs {
        for (k, v) in fixed.iter().enumerate() {
            prog.add_eq(vec![(input(k), 1.0)], *v);
        }
    }
    if let Some(upper) = &zc.input_upper {
        for (k, v) in upper.iter().enumerate() {
            if v.is_finite() {
                prog.add_le(vec![(input(k), 1.0)], *v);
            }
        }
    }
    if let Some(lower) = &zc.input_lower {
        for (k, v) in lower.iter().enumerate() {
            if v.is_finite() {
                prog.add_le(vec![(input(k), -1.0)], -*v);
            }
        }
    }

    // Cost epigraphs.
    match &spec.cost {
        CostFunction::Pwa(h) => {
            for piece in h.pieces() {
                let row = lifted_row(pred, &piece.a, &piece.b, z.start);
                for (i, xi) in pred.residuals.iter().enumerate() {
                    let mut terms = row.clone();
                    terms.push((s.start + i, -1.0));
                    prog.add_le(terms, -(piece.a.dot(xi) + piece.c));
                }
            }
        }
        CostFunction::SeparableL1(l1) => {
            let k = l1.selector.len();
            let e = prog.add_vars(count * k, 0.0, |idx| format!("e[{},{}]", idx / k, idx % k));
            prog.layout.abs_epigraph = Some(e.clone());
            for (i, xi) in pred.residuals.iter().enumerate() {
                let mut sum_terms = Vec::with_capacity(k + 1);
                for (kk, (&j, &reference)) in l1.selector.iter().zip(&l1.reference).enumerate() {
                    let ev = e.start + i * k + kk;
                    let lrow: Vec<(usize, f64)> = pred
                        .l_hat
                        .row(j)
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(c, v)| (z.start + c, *v))
                        .collect();
                    // e >= ŷ_j − ref  and  e >= ref − ŷ_j
                    let mut plus = lrow.clone();
                    plus.push((ev, -1.0));
                    prog.add_le(plus, reference - xi[j]);
                    let mut minus: Vec<(usize, f64)> = lrow.iter().map(|(c, v)| (*c, -v)).collect();
                    minus.push((ev, -1.0));
                    prog.add_le(minus, xi[j] - reference);
                    sum_terms.push((ev, 1.0));
                }
                sum_terms.push((s.start + i, -1.0));
                prog.add_le(sum_terms, 0.0);
            }
        }
    }

    // Worst-case CVaR constraint.
    if let Some(g) = &spec.constraint {
        let theta = g.lipschitz();
        let t = prog.add_var("t", 0.0);
        let q = prog.add_vars(count, 0.0, |i| format!("q[{i}]"));
        prog.layout.t = Some(t);
        prog.layout.q = Some(q.clone());
        let sigma = if spec.slack_weight > 0.0 {
            let sv = prog.add_var("sigma", spec.slack_weight);
            prog.layout.sigma = Some(sv);
            prog.add_le(vec![(sv, -1.0)], 0.0);
            Some(sv)
        } else {
            None
        };
        let mut agg: Vec<(usize, f64)> = q.clone().map(|qi| (qi, inv_n)).collect();
        if let Some(r) = &r {
            if radius.eps1 != 0.0 && theta != 0.0 {
                agg.extend(r.clone().map(|ri| (ri, theta * radius.eps1 * inv_n)));
            }
        }
        agg.push((t, -spec.beta));
        if let Some(sv) = sigma {
            agg.push((sv, -1.0));
        }
        prog.add_le(agg, -theta * radius.eps2);
        for piece in g.pieces() {
            let row = lifted_row(pred, &piece.a, &piece.b, z.start);
            for (i, xi) in pred.residuals.iter().enumerate() {
                let mut terms = row.clone();
                terms.push((t, 1.0));
                terms.push((q.start + i, -1.0));
                prog.add_le(terms, -(piece.a.dot(xi) + piece.c));
            }
        }
        for qi in q {
            prog.add_le(vec![(qi, -1.0)], 0.0);
        }
    }

    // rᵢ >= ‖z − zⁱ‖
    if let Some(r) = &r {
        for (i, anchor) in pred.anchors.iter().enumerate() {
            let exprs = (0..zd)
                .map(|c| AffineExpr {
                    terms: vec![(z.start + c, 1.0)],
                    constant: -anchor[c],
                })
                .collect();
            prog.add_cone(r.start + i, exprs);
        }
    }
    prog.validate()?;
    Ok(prog)
}

/// Worst-case CVaR of `g` over the Wasserstein ball of radius `eps` around
/// `p`, at a fixed decision `z`.
///
/// Solves `min ρ` over `(t, qᵢ, ρ)` subject to
/// `θ·eps + Σ wᵢ qᵢ <= β t + ρ`, `qᵢ >= g_k(yⁱ, z) + t`, `qᵢ >= 0`, and
/// returns `ρ*/β`. The decision satisfies the robust constraint iff the
/// result is `<= 0`.
pub fn evaluate_worst_case_cvar(
    g: &PwaFunction,
    p: &DiscreteDistribution,
    z: &DVector<f64>,
    eps: f64,
    beta: f64,
) -> Result<f64> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(DrmpcError::InvalidArgument(format!("radius {eps} must be >= 0")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DrmpcError::InvalidArgument(format!("beta {beta} outside (0, 1)")));
    }
    g.check_dims(p.dim(), z.len())?;
    let count = p.len();
    let mut lp = LinearProgram::new(count + 2);
    let (t, rho) = (count, count + 1);
    lp.set_bound(t, Bound::Free);
    lp.set_bound(rho, Bound::Free);
    lp.set_cost(rho, 1.0);
    let mut agg: Vec<(usize, f64)> = p.weights().iter().enumerate().map(|(i, w)| (i, *w)).collect();
    agg.push((t, -beta));
    agg.push((rho, -1.0));
    lp.add_row(agg, Relation::Le, -g.lipschitz() * eps);
    for (i, y) in p.atoms().iter().enumerate() {
        let worst = g.value(y, z);
        lp.add_row(vec![(i, 1.0), (t, -1.0)], Relation::Ge, worst);
    }
    let sol = lp.solve()?;
    Ok(sol.x[rho] / beta)
}

/// Prediction ensemble of `spec` at `z`.
pub fn ensemble(spec: &FhocSpec, z: &DVector<f64>) -> Result<DiscreteDistribution> {
    predict_ensemble(&spec.predictor, z)
}
