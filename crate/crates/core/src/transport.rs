//! Exact discrete 1-Wasserstein distance, empirical CVaR and the closed-form
//! worst-case expectation of a convex piecewise-affine function over a
//! Wasserstein ball with unbounded support.

use nalgebra::DVector;

use crate::error::{check_dim, DrmpcError, Result};
use crate::identification::DiscreteDistribution;
use crate::lp::{LinearProgram, Relation};

/// Atoms closer than this are treated as one point before transport.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// One affine piece `a·y + b·z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl AffinePiece {
    pub fn new(a: DVector<f64>, b: DVector<f64>, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn value(&self, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.a.dot(y) + self.b.dot(z) + self.c
    }
}

/// `f(y, z) = max_j (a_j·y + b_j·z + c_j)`; `lipschitz = max_j ‖a_j‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaFunction {
    pieces: Vec<AffinePiece>,
    lipschitz: f64,
}

impl PwaFunction {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| DrmpcError::InvalidArgument("PWA function needs a piece".into()))?;
        let (ydim, zdim) = (first.a.len(), first.b.len());
        for p in &pieces {
            check_dim("PWA piece y-gradient", ydim, p.a.len())?;
            check_dim("PWA piece z-gradient", zdim, p.b.len())?;
            if !p.c.is_finite() || p.a.iter().chain(p.b.iter()).any(|v| !v.is_finite()) {
                return Err(DrmpcError::InvalidArgument("non-finite PWA coefficient".into()));
            }
        }
        let lipschitz = pieces.iter().map(|p| p.a.norm()).fold(0.0, f64::max);
        Ok(Self { pieces, lipschitz })
    }

    /// `Σ_k |y[selector_k] − reference_k|` enumerated as its `2^K` sign patterns.
    pub fn l1_enumerated(
        y_dim: usize,
        z_dim: usize,
        selector: &[usize],
        reference: &[f64],
    ) -> Result<Self> {
        check_dim("l1 reference", selector.len(), reference.len())?;
        if selector.iter().any(|&i| i >= y_dim) {
            return Err(DrmpcError::InvalidArgument("selector index out of range".into()));
        }
        if selector.len() > 20 {
            return Err(DrmpcError::InvalidArgument(
                "enumerated l1 form limited to 20 terms".into(),
            ));
        }
        let k = selector.len();
        let pieces = (0..1u32 << k)
            .map(|mask| {
                let mut a = DVector::zeros(y_dim);
                let mut c = 0.0;
                for (bit, (&idx, &r)) in selector.iter().zip(reference).enumerate() {
                    let sign = if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
                    a[idx] += sign;
                    c -= sign * r;
                }
                AffinePiece::new(a, DVector::zeros(z_dim), c)
            })
            .collect();
        Self::new(pieces)
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn y_dim(&self) -> usize {
        self.pieces[0].a.len()
    }

    pub fn z_dim(&self) -> usize {
        self.pieces[0].b.len()
    }

    pub fn value(&self, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.value(y, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_dims(&self, y_dim: usize, z_dim: usize) -> Result<()> {
        check_dim("PWA y dimension", y_dim, self.y_dim())?;
        check_dim("PWA z dimension", z_dim, self.z_dim())
    }
}

/// Exact 1-Wasserstein distance with Euclidean ground cost, from the
/// transportation LP over the coupling polytope.
pub fn wasserstein_discrete(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_dim("wasserstein atoms", p.dim(), q.dim())?;
    for d in [p, q] {
        let total: f64 = d.weights().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DrmpcError::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
    }
    let p = p.merged(ATOM_MERGE_TOL);
    let q = q.merged(ATOM_MERGE_TOL);
    let (np, nq) = (p.len(), q.len());
    if np == 1 || nq == 1 {
        // Single coupling.
        let total = p
            .atoms()
            .iter()
            .zip(p.weights())
            .flat_map(|(a, wa)| {
                q.atoms()
                    .iter()
                    .zip(q.weights())
                    .map(move |(b, wb)| wa * wb * (a - b).norm())
            })
            .sum();
        return Ok(total);
    }
    let mut lp = LinearProgram::new(np * nq);
    for (i, a) in p.atoms().iter().enumerate() {
        for (j, b) in q.atoms().iter().enumerate() {
            lp.set_cost(i * nq + j, (a - b).norm());
        }
    }
    for (i, w) in p.weights().iter().enumerate() {
        lp.add_row((0..nq).map(|j| (i * nq + j, 1.0)).collect(), Relation::Eq, *w);
    }
    for (j, w) in q.weights().iter().enumerate() {
        lp.add_row((0..np).map(|i| (i * nq + j, 1.0)).collect(), Relation::Eq, *w);
    }
    let sol = lp.solve()?;
    Ok(sol.objective.max(0.0))
}

fn validate_weighted(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(DrmpcError::InvalidArgument("no values".into()));
    }
    check_dim("cvar weights", values.len(), weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(DrmpcError::InvalidArgument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(DrmpcError::InvalidArgument(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// `inf_t [β⁻¹ E(φ + t)₊ − t]` for a discrete distribution of `φ`.
///
/// The objective is convex and piecewise linear in `t` with breakpoints at
/// `t = −valueₖ`, so the infimum is the smallest objective over those points.
pub fn cvar_empirical(values: &[f64], weights: &[f64], beta: f64) -> Result<f64> {
    validate_weighted(values, weights)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(DrmpcError::InvalidArgument(format!("beta {beta} outside (0, 1]")));
    }
    let objective = |t: f64| -> f64 {
        let tail: f64 = values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (v + t).max(0.0))
            .sum();
        tail / beta - t
    };
    Ok(values
        .iter()
        .map(|v| objective(-v))
        .fold(f64::INFINITY, f64::min))
}

/// `sup { E_Q[h(y, z)] : d_W(Q, P) ≤ eps }` over all of `R^{dim}`, which for
/// convex PWA `h` equals `lipschitz·eps + E_P[h]`.
pub fn worst_case_expectation_pwa(
    h: &PwaFunction,
    p: &DiscreteDistribution,
    z: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(DrmpcError::InvalidArgument(format!("radius {eps} must be >= 0")));
    }
    h.check_dims(p.dim(), z.len())?;
    let mean: f64 = p
        .atoms()
        .iter()
        .zip(p.weights())
        .map(|(y, w)| w * h.value(y, z))
        .sum();
    Ok(h.lipschitz() * eps + mean)
}
