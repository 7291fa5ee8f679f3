//! Ambiguity radius `ε(z) = ε₁·(1/N)Σ‖z − zⁱ‖ + ε₂`: the concentration-based
//! formula and the leave-one-out data-driven estimate.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DrmpcError, Result};
use crate::identification::{compute_residuals, fit_lifted_matrix, MultiStepPredictor};
use crate::lifting::{TrajectoryDataset, TrajectoryRecord};
use crate::lp::{LinearProgram, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRadius {
    pub eps1: f64,
    pub eps2: f64,
}

impl AmbiguityRadius {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1.is_finite() && eps1 >= 0.0 && eps2.is_finite() && eps2 >= 0.0) {
            return Err(DrmpcError::InvalidArgument(format!(
                "radius coefficients must be finite and nonnegative, got ({eps1}, {eps2})"
            )));
        }
        Ok(Self { eps1, eps2 })
    }

    pub const fn zero() -> Self {
        Self { eps1: 0.0, eps2: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.eps1 == 0.0 && self.eps2 == 0.0
    }

    /// Radius at decision `z` for the anchors stored in `pred`.
    pub fn at(&self, pred: &MultiStepPredictor, z: &DVector<f64>) -> f64 {
        self.eps1 * pred.mean_anchor_distance(z) + self.eps2
    }
}

/// Constants of the finite-sample radius. `gamma` bounds the model error
/// `‖L̂ − L̄‖` with confidence `1 − alpha`; `c1`, `c2` are the concentration
/// constants of the light-tailed multi-step noise with tail exponent `a`
/// and rate `b`.
#[derive(Clone)]
pub struct GuaranteeConstants {
    pub alpha: f64,
    pub gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub c1: f64,
    pub c2: f64,
    pub a: f64,
    pub b: f64,
    /// Dimension `nT` of the stacked state sequence.
    pub y_dim: usize,
    pub samples: usize,
}

impl fmt::Debug for GuaranteeConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GuaranteeConstants")
            .field("alpha", &self.alpha)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("y_dim", &self.y_dim)
            .field("samples", &self.samples)
            .finish_non_exhaustive()
    }
}

impl GuaranteeConstants {
    /// Constants with a model-error bound that does not depend on the confidence level.
    #[allow(clippy::too_many_arguments)]
    pub fn with_constant_gamma(gamma: f64, alpha: f64, c1: f64, c2: f64, a: f64, b: f64, y_dim: usize, samples: usize) -> Self {
        Self {
            alpha,
            gamma: Arc::new(move |_| gamma),
            c1,
            c2,
            a,
            b,
            y_dim,
            samples,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DrmpcError::InvalidArgument(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.b > 0.0) {
            return Err(DrmpcError::InvalidArgument("c1, c2 and b must be positive".into()));
        }
        if self.a.is_nan() || self.a <= 1.0 {
            return Err(DrmpcError::InvalidArgument("tail exponent a must exceed 1".into()));
        }
        if self.y_dim <= 2 {
            return Err(DrmpcError::InvalidArgument(
                "concentration bound needs nT > 2".into(),
            ));
        }
        if self.samples == 0 {
            return Err(DrmpcError::InvalidArgument("N must be positive".into()));
        }
        Ok(())
    }
}

/// `ε₁ = γ(α/2)`, `ε₂ = (log(2c₁/α) / (c₂N))^{1/p}` with `p = nT` when
/// `N ≥ log(2c₁/α)/c₂` (the ratio is at most one) and `p = a` otherwise.
///
/// When `2c₁/α ≤ 1` the tail bound is below `α/2` for every radius and
/// `ε₂ = 0`.
pub fn theoretical_radius(k: &GuaranteeConstants) -> Result<AmbiguityRadius> {
    k.validate()?;
    let eps1 = (k.gamma)(k.alpha / 2.0);
    if !(eps1.is_finite() && eps1 >= 0.0) {
        return Err(DrmpcError::InvalidArgument(format!(
            "gamma(alpha/2) = {eps1} is not a nonnegative number"
        )));
    }
    let log_term = (k.c1 * 2.0 / k.alpha).ln();
    if log_term <= 0.0 {
        return AmbiguityRadius::new(eps1, 0.0);
    }
    let n = k.samples as f64;
    let ratio = log_term / (k.c2 * n);
    let exponent = if n >= log_term / k.c2 {
        1.0 / k.y_dim as f64
    } else {
        1.0 / k.a
    };
    AmbiguityRadius::new(eps1, ratio.powf(exponent))
}

/// Leave-one-out statistics for one held-out record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooDiagnostic {
    /// `(1/(N−1)) Σ_{i≠ℓ} ‖z^ℓ − zⁱ‖`
    pub v: f64,
    /// `(1/(N²−N)) Σ_{i≠ℓ} ‖y^ℓ − ỹⁱ(z^ℓ)‖`
    pub e: f64,
}

#[derive(Debug, Clone)]
pub struct LooRadius {
    pub l_hat_avg: DMatrix<f64>,
    pub radius: AmbiguityRadius,
    pub diagnostics: Vec<LooDiagnostic>,
}

impl LooRadius {
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        write_diagnostics_csv(&self.diagnostics, out)
    }
}

pub fn write_diagnostics_csv<W: Write>(diagnostics: &[LooDiagnostic], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["l", "v", "e"])?;
    for (l, d) in diagnostics.iter().enumerate() {
        w.write_record([l.to_string(), d.v.to_string(), d.e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Data-driven radius estimate by leave-one-out refits of the causal
/// least-squares predictor, followed by a nonnegative LAD fit of
/// `E_ℓ ≈ ε₁ V_ℓ + ε₂`.
pub fn loo_radius(data: &TrajectoryDataset) -> Result<LooRadius> {
    let count = data.len();
    if count < 3 {
        return Err(DrmpcError::InvalidArgument(format!(
            "leave-one-out radius needs N >= 3, got {count}"
        )));
    }
    let fits = (0..count)
        .into_par_iter()
        .map(|l| loo_single(data, l))
        .collect::<Result<Vec<_>>>()?;

    let mut l_hat_avg = DMatrix::zeros(data.y_dim(), data.z_dim());
    for (l_tilde, _) in &fits {
        l_hat_avg += l_tilde;
    }
    l_hat_avg /= count as f64;
    let diagnostics: Vec<LooDiagnostic> = fits.into_iter().map(|(_, d)| d).collect();
    let v: Vec<f64> = diagnostics.iter().map(|d| d.v).collect();
    let e: Vec<f64> = diagnostics.iter().map(|d| d.e).collect();
    let (eps1, eps2) = lad_fit_nonneg(&v, &e)?;
    Ok(LooRadius {
        l_hat_avg,
        radius: AmbiguityRadius::new(eps1, eps2)?,
        diagnostics,
    })
}

fn loo_single(data: &TrajectoryDataset, l: usize) -> Result<(DMatrix<f64>, LooDiagnostic)> {
    let count = data.len();
    let kept: Vec<&TrajectoryRecord> = data
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != l)
        .map(|(_, r)| r)
        .collect();
    let l_tilde = fit_lifted_matrix(&kept, data.n, data.m, data.horizon, true).map_err(|e| match e {
        DrmpcError::SingularFit {
            block_row,
            rank,
            columns,
            ..
        } => DrmpcError::SingularFit {
            block_row,
            rank,
            columns,
            left_out: Some(l),
        },
        other => other,
    })?;
    let residuals = compute_residuals(&l_tilde, data)?;
    let held = &data.records[l];
    let nominal = &l_tilde * &held.z;
    let mut v = 0.0;
    let mut e = 0.0;
    for (i, rec) in data.records.iter().enumerate() {
        if i == l {
            continue;
        }
        v += (&held.z - &rec.z).norm();
        e += (&held.y - (&nominal + &residuals[i])).norm();
    }
    let n = count as f64;
    Ok((
        l_tilde,
        LooDiagnostic {
            v: v / (n - 1.0),
            e: e / (n * n - n),
        },
    ))
}

/// `min Σ_ℓ |ε₁ V_ℓ + ε₂ − E_ℓ|` over `ε₁, ε₂ ≥ 0`, as an LP with split
/// residuals.
pub fn lad_fit_nonneg(v: &[f64], e: &[f64]) -> Result<(f64, f64)> {
    if v.is_empty() {
        return Err(DrmpcError::InvalidArgument("LAD fit needs data".into()));
    }
    check_dim("LAD fit targets", v.len(), e.len())?;
    if v.iter().chain(e).any(|x| !x.is_finite()) {
        return Err(DrmpcError::InvalidArgument("non-finite LAD data".into()));
    }
    let k = v.len();
    // Variables: eps1, eps2, then (pos_ℓ, neg_ℓ) pairs.
    let mut lp = LinearProgram::new(2 + 2 * k);
    for l in 0..k {
        lp.set_cost(2 + 2 * l, 1.0);
        lp.set_cost(3 + 2 * l, 1.0);
        lp.add_row(
            vec![(0, v[l]), (1, 1.0), (2 + 2 * l, -1.0), (3 + 2 * l, 1.0)],
            Relation::Eq,
            e[l],
        );
    }
    let sol = lp.solve()?;
    Ok((sol.x[0].max(0.0), sol.x[1].max(0.0)))
}

pub fn lad_objective(v: &[f64], e: &[f64], eps1: f64, eps2: f64) -> f64 {
    v.iter().zip(e).map(|(vl, el)| (eps1 * vl + eps2 - el).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gamma_sets_eps1() {
        let k = GuaranteeConstants::with_constant_gamma(0.2, 0.1, 1.0, 1.0, 2.0, 1.0, 10, 100);
        assert_eq!(theoretical_radius(&k).unwrap().eps1, 0.2);
    }

    #[test]
    fn gamma_evaluated_at_half_alpha() {
        let mut k = GuaranteeConstants::with_constant_gamma(0.0, 0.3, 1.0, 1.0, 2.0, 1.0, 10, 100);
        k.gamma = Arc::new(|x| 10.0 * x);
        assert!((theoretical_radius(&k).unwrap().eps1 - 1.5).abs() < 1e-15);
    }

    #[test]
    fn branch_continuity_point() {
        // log(2 c1 / alpha) = c2 N gives ratio 1 on both branches.
        let alpha: f64 = 0.1;
        let (c2, n) = (0.5, 40usize);
        let c1 = alpha / 2.0 * (c2 * n as f64).exp();
        let k = GuaranteeConstants::with_constant_gamma(0.0, alpha, c1, c2, 3.0, 1.0, 10, n);
        assert!((theoretical_radius(&k).unwrap().eps2 - 1.0).abs() < 1e-12);
        let k = GuaranteeConstants { samples: n - 1, ..k };
        assert!(theoretical_radius(&k).unwrap().eps2 > 1.0);
    }

    #[test]
    fn scalar_evaluation_example() {
        let k = GuaranteeConstants::with_constant_gamma(0.0, 0.1, 1.0, 1.0, 2.0, 1.0, 10, 100);
        let eps2 = theoretical_radius(&k).unwrap().eps2;
        // (ln 20 / 100)^(1/10) evaluated at 30 digits: 0.704125868330967134...
        assert!((eps2 - 0.704_125_868_330_967_1).abs() < 1e-12, "{eps2}");
    }

    #[test]
    fn eps2_decreases_with_samples() {
        let mut last = f64::INFINITY;
        for n in [10usize, 20, 50, 100, 1000] {
            let k = GuaranteeConstants::with_constant_gamma(0.0, 0.05, 2.0, 1.0, 2.0, 1.0, 10, n);
            let e = theoretical_radius(&k).unwrap().eps2;
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn constant_validation() {
        let base = GuaranteeConstants::with_constant_gamma(0.1, 0.1, 1.0, 1.0, 2.0, 1.0, 10, 10);
        for bad in [
            GuaranteeConstants { alpha: 1.0, ..base.clone() },
            GuaranteeConstants { c1: 0.0, ..base.clone() },
            GuaranteeConstants { a: 1.0, ..base.clone() },
            GuaranteeConstants { y_dim: 2, ..base.clone() },
        ] {
            assert!(theoretical_radius(&bad).is_err());
        }
    }

    #[test]
    fn lad_exact_line() {
        let v = [0.5, 1.0, 2.0, 3.5];
        let e: Vec<f64> = v.iter().map(|x| 2.0 * x + 3.0).collect();
        let (a, b) = lad_fit_nonneg(&v, &e).unwrap();
        assert!((a - 2.0).abs() < 1e-10 && (b - 3.0).abs() < 1e-10);
    }

    #[test]
    fn lad_constant_regressor_objective() {
        let v = [1.0, 1.0, 1.0];
        let e = [0.0, 1.0, 2.0];
        let (a, b) = lad_fit_nonneg(&v, &e).unwrap();
        assert!((lad_objective(&v, &e, a, b) - 2.0).abs() < 1e-10);
        // Grid oracle over [0, 3]² with step 1e-2 never beats it.
        let mut best = f64::INFINITY;
        for i in 0..=300 {
            for j in 0..=300 {
                best = best.min(lad_objective(&v, &e, i as f64 * 0.01, j as f64 * 0.01));
            }
        }
        assert!((best - 2.0).abs() < 1e-10);
    }

    #[test]
    fn lad_decreasing_data_clamps_slope() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let e = [4.0, 3.0, 2.0, 1.0];
        let (a, b) = lad_fit_nonneg(&v, &e).unwrap();
        assert_eq!(a, 0.0);
        assert!((lad_objective(&v, &e, a, b) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn lad_errors() {
        assert!(lad_fit_nonneg(&[], &[]).is_err());
        assert!(lad_fit_nonneg(&[1.0], &[1.0, 2.0]).is_err());
    }
}
