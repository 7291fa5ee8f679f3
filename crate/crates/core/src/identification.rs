//! Multi-step least-squares predictor, residuals and the empirical
//! prediction ensemble `ŷⁱ(z) = L̂ z + ξ̂ⁱ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DrmpcError, Result};
use crate::lifting::{causal_columns, TrajectoryDataset, TrajectoryRecord};

/// Relative singular-value threshold for rank decisions in block-row fits.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepPredictor {
    pub l_hat: DMatrix<f64>,
    pub residuals: Vec<DVector<f64>>,
    pub anchors: Vec<DVector<f64>>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub causal: bool,
}

/// Finite-support distribution with explicit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(DrmpcError::InvalidArgument("distribution needs an atom".into()));
        }
        check_dim("distribution weights", atoms.len(), weights.len())?;
        let dim = atoms[0].len();
        for a in &atoms {
            check_dim("distribution atom", dim, a.len())?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DrmpcError::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DrmpcError::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<DVector<f64>>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        let weights = vec![w; atoms.len()];
        // Summation error of 1/N can exceed 1e-12 only for absurd N.
        Self::new(atoms, weights)
    }

    pub fn dirac(atom: DVector<f64>) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            acc += a * *w;
        }
        acc
    }

    /// Merges atoms closer than `tol` (Euclidean), adding their weights.
    pub fn merged(&self, tol: f64) -> Self {
        let mut atoms: Vec<DVector<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            match atoms.iter().position(|b| (b - a).norm() <= tol) {
                Some(k) => weights[k] += w,
                None => {
                    atoms.push(a.clone());
                    weights.push(*w);
                }
            }
        }
        Self { atoms, weights }
    }
}

fn regressor_width(n: usize, m: usize, horizon: usize, block_row: usize, causal: bool) -> usize {
    if causal {
        causal_columns(n, m, block_row)
    } else {
        n + m * horizon
    }
}

/// Least-squares `L̂ = argmin Σ ‖L zⁱ − yⁱ‖²`, solved independently per block
/// row. With `enforce_causal` each block row only regresses on the initial
/// state and the inputs up to its own step, so forbidden blocks stay exactly zero.
pub fn fit_lifted_matrix(
    records: &[&TrajectoryRecord],
    n: usize,
    m: usize,
    horizon: usize,
    enforce_causal: bool,
) -> Result<DMatrix<f64>> {
    if records.is_empty() {
        return Err(DrmpcError::InvalidArgument("cannot fit on zero records".into()));
    }
    let zd = n + m * horizon;
    let mut l_hat = DMatrix::zeros(n * horizon, zd);
    for r in 0..horizon {
        let p = regressor_width(n, m, horizon, r, enforce_causal);
        let x = DMatrix::from_fn(records.len(), p, |i, c| records[i].z[c]);
        let y = DMatrix::from_fn(records.len(), n, |i, c| records[i].y[r * n + c]);
        let svd = x.svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > RANK_TOL * smax)
            .count();
        if smax == 0.0 || rank < p {
            return Err(DrmpcError::SingularFit {
                block_row: r,
                rank: if smax == 0.0 { 0 } else { rank },
                columns: p,
                left_out: None,
            });
        }
        let theta = svd
            .solve(&y, RANK_TOL * smax)
            .map_err(|e| DrmpcError::Solver(e.to_string()))?;
        l_hat
            .view_mut((r * n, 0), (n, p))
            .copy_from(&theta.transpose());
    }
    Ok(l_hat)
}

pub fn fit_multistep_ls(data: &TrajectoryDataset, enforce_causal: bool) -> Result<MultiStepPredictor> {
    let refs: Vec<&TrajectoryRecord> = data.records.iter().collect();
    let l_hat = fit_lifted_matrix(&refs, data.n, data.m, data.horizon, enforce_causal)?;
    let mut pred = MultiStepPredictor::with_matrix(l_hat, data)?;
    pred.causal = enforce_causal;
    Ok(pred)
}

pub fn compute_residuals(l_hat: &DMatrix<f64>, data: &TrajectoryDataset) -> Result<Vec<DVector<f64>>> {
    check_dim("predictor rows", data.y_dim(), l_hat.nrows())?;
    check_dim("predictor columns", data.z_dim(), l_hat.ncols())?;
    Ok(data.records.iter().map(|r| &r.y - l_hat * &r.z).collect())
}

pub fn predict_ensemble(pred: &MultiStepPredictor, z: &DVector<f64>) -> Result<DiscreteDistribution> {
    check_dim("ensemble z", pred.z_dim(), z.len())?;
    let nominal = &pred.l_hat * z;
    let atoms = pred.residuals.iter().map(|xi| &nominal + xi).collect();
    DiscreteDistribution::uniform(atoms)
}

impl MultiStepPredictor {
    /// Predictor from an externally supplied `L̂` with residuals taken on `data`.
    pub fn with_matrix(l_hat: DMatrix<f64>, data: &TrajectoryDataset) -> Result<Self> {
        let residuals = compute_residuals(&l_hat, data)?;
        let causal = crate::lifting::is_causal(&l_hat, data.n, data.m, data.horizon);
        Ok(Self {
            l_hat,
            residuals,
            anchors: data.records.iter().map(|r| r.z.clone()).collect(),
            n: data.n,
            m: data.m,
            horizon: data.horizon,
            causal,
        })
    }

    pub fn z_dim(&self) -> usize {
        self.n + self.m * self.horizon
    }

    pub fn y_dim(&self) -> usize {
        self.n * self.horizon
    }

    pub fn sample_count(&self) -> usize {
        self.residuals.len()
    }

    /// `(1/N) Σ ‖z − zⁱ‖`, the decision-dependent factor of the radius.
    pub fn mean_anchor_distance(&self, z: &DVector<f64>) -> f64 {
        let total: f64 = self.anchors.iter().map(|a| (z - a).norm()).sum();
        total / self.anchors.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PredictorJson {
            n: self.n,
            m: self.m,
            horizon: self.horizon,
            causal: self.causal,
            l_hat: (0..self.l_hat.nrows())
                .map(|i| self.l_hat.row(i).iter().copied().collect())
                .collect(),
            residuals: self.residuals.iter().map(|v| v.iter().copied().collect()).collect(),
            anchors: self.anchors.iter().map(|v| v.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PredictorJson = serde_json::from_str(text)?;
        let rows = doc.n * doc.horizon;
        let cols = doc.n + doc.m * doc.horizon;
        check_dim("predictor json rows", rows, doc.l_hat.len())?;
        let mut flat = Vec::with_capacity(rows * cols);
        for row in &doc.l_hat {
            check_dim("predictor json columns", cols, row.len())?;
            flat.extend_from_slice(row);
        }
        check_dim("predictor json anchors", doc.residuals.len(), doc.anchors.len())?;
        let residuals: Vec<DVector<f64>> = doc.residuals.into_iter().map(DVector::from_vec).collect();
        let anchors: Vec<DVector<f64>> = doc.anchors.into_iter().map(DVector::from_vec).collect();
        for r in &residuals {
            check_dim("predictor json residual", rows, r.len())?;
        }
        for a in &anchors {
            check_dim("predictor json anchor", cols, a.len())?;
        }
        Ok(Self {
            l_hat: DMatrix::from_row_slice(rows, cols, &flat),
            residuals,
            anchors,
            n: doc.n,
            m: doc.m,
            horizon: doc.horizon,
            causal: doc.causal,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PredictorJson {
    n: usize,
    m: usize,
    horizon: usize,
    causal: bool,
    /// Row-major.
    l_hat: Vec<Vec<f64>>,
    residuals: Vec<Vec<f64>>,
    anchors: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{generate_dataset, is_causal, DisturbanceSpec, LiftedDynamics, LtiSystem};

    fn noiseless_example_system() -> LtiSystem {
        let sys = LtiSystem::example_system();
        LtiSystem::new(sys.a().clone(), sys.b().clone(), DisturbanceSpec::Zero).unwrap()
    }

    fn excitation() -> DisturbanceSpec {
        DisturbanceSpec::Gaussian { std_dev: 0.5 }
    }

    #[test]
    fn noiseless_fit_recovers_true_lifting() {
        let sys = noiseless_example_system();
        let data = generate_dataset(&sys, 12, 5, &excitation(), &excitation(), 1).unwrap();
        let truth = LiftedDynamics::from_system(&sys, 5).unwrap();
        for causal in [true, false] {
            let pred = fit_multistep_ls(&data, causal).unwrap();
            assert!((&pred.l_hat - &truth.l).amax() < 1e-8, "causal={causal}");
        }
    }

    #[test]
    fn causal_fit_has_exact_zero_blocks() {
        let sys = LtiSystem::example_system();
        let data = generate_dataset(&sys, 10, 5, &excitation(), &excitation(), 2).unwrap();
        let pred = fit_multistep_ls(&data, true).unwrap();
        assert!(is_causal(&pred.l_hat, 2, 1, 5));
        assert!(pred.causal);
    }

    #[test]
    fn residuals_are_orthogonal_to_permitted_regressors() {
        let sys = LtiSystem::example_system();
        let data = generate_dataset(&sys, 10, 5, &excitation(), &excitation(), 3).unwrap();
        let pred = fit_multistep_ls(&data, true).unwrap();
        for r in 0..5 {
            let p = causal_columns(2, 1, r);
            for s in 0..2 {
                for c in 0..p {
                    let dot: f64 = pred
                        .residuals
                        .iter()
                        .zip(&data.records)
                        .map(|(xi, rec)| xi[r * 2 + s] * rec.z[c])
                        .sum();
                    assert!(dot.abs() < 1e-8, "row {r} state {s} col {c}: {dot}");
                }
            }
        }
    }

    #[test]
    fn singular_fit_names_block_row() {
        let sys = LtiSystem::example_system();
        // 4 records, block row 2 needs 5 regressors.
        let data = generate_dataset(&sys, 4, 5, &excitation(), &excitation(), 4).unwrap();
        match fit_multistep_ls(&data, true) {
            Err(DrmpcError::SingularFit { block_row, columns, .. }) => {
                assert_eq!(block_row, 2);
                assert_eq!(columns, 5);
            }
            other => panic!("expected singular fit, got {other:?}"),
        }
    }

    #[test]
    fn residual_edge_cases() {
        let sys = noiseless_example_system();
        let data = generate_dataset(&sys, 5, 3, &excitation(), &excitation(), 5).unwrap();
        let zero = DMatrix::zeros(6, 5);
        for (xi, r) in compute_residuals(&zero, &data).unwrap().iter().zip(&data.records) {
            assert_eq!(xi, &r.y);
        }
        let truth = LiftedDynamics::from_system(&sys, 3).unwrap();
        for xi in compute_residuals(&truth.l, &data).unwrap() {
            assert!(xi.amax() < 1e-12);
        }
        assert!(compute_residuals(&DMatrix::zeros(6, 4), &data).is_err());
    }

    #[test]
    fn ensemble_reproduces_fitting_records_and_is_affine() {
        let sys = LtiSystem::example_system();
        let data = generate_dataset(&sys, 10, 5, &excitation(), &excitation(), 6).unwrap();
        let pred = fit_multistep_ls(&data, true).unwrap();
        for (i, rec) in data.records.iter().enumerate() {
            let ens = predict_ensemble(&pred, &rec.z).unwrap();
            assert!((&ens.atoms()[i] - &rec.y).amax() < 1e-12);
            assert!(ens.weights().iter().all(|w| (*w - 0.1).abs() < 1e-15));
        }
        let z = DVector::from_fn(7, |i, _| 0.1 * i as f64);
        let delta = DVector::from_fn(7, |i, _| (i as f64).sin());
        let a = predict_ensemble(&pred, &z).unwrap();
        let b = predict_ensemble(&pred, &(&z + &delta)).unwrap();
        let shift = &pred.l_hat * &delta;
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!((y - x - &shift).amax() < 1e-12);
        }
        assert!(predict_ensemble(&pred, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn predictor_json_roundtrip() {
        let sys = LtiSystem::example_system();
        let data = generate_dataset(&sys, 10, 5, &excitation(), &excitation(), 7).unwrap();
        let pred = fit_multistep_ls(&data, true).unwrap();
        let back = MultiStepPredictor::from_json(&pred.to_json().unwrap()).unwrap();
        assert_eq!(back, pred);
    }

    #[test]
    fn distribution_validation_and_merge() {
        let a = DVector::from_vec(vec![0.0]);
        assert!(DiscreteDistribution::new(vec![a.clone()], vec![0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        let d = DiscreteDistribution::uniform(vec![a.clone(), a.clone(), DVector::from_vec(vec![1.0])])
            .unwrap();
        let m = d.merged(1e-12);
        assert_eq!(m.len(), 2);
        assert!((m.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
    }
}
