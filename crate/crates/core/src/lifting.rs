//! True-system simulation, the T-step lifted dynamics `y = L z + H w`, and
//! trajectory datasets.
//!
//! Stacking conventions (used everywhere in the crate):
//! - `z = (x₀, u₀, …, u_{T−1}) ∈ R^{n+mT}`
//! - `y = (x₁, …, x_T) ∈ R^{nT}`
//! - `w = (w₀, …, w_{T−1}) ∈ R^{nT}`

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DrmpcError, Result};

pub const DATASET_FORMAT_VERSION: &str = "drmpc-dataset v1";

/// Per-coordinate i.i.d. distribution used for disturbances, dataset inputs
/// and dataset initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceSpec {
    Zero,
    /// Zero-mean Gaussian with the same standard deviation on every coordinate.
    Gaussian { std_dev: f64 },
    /// Uniform on `[-half_width, half_width]` per coordinate.
    Uniform { half_width: f64 },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = match self {
            DisturbanceSpec::Zero => false,
            DisturbanceSpec::Gaussian { std_dev } => !(std_dev.is_finite() && *std_dev >= 0.0),
            DisturbanceSpec::Uniform { half_width } => {
                !(half_width.is_finite() && *half_width >= 0.0)
            }
        };
        if bad {
            return Err(DrmpcError::InvalidArgument(format!(
                "disturbance spec {self:?} needs a finite nonnegative scale"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match *self {
            DisturbanceSpec::Zero => DVector::zeros(dim),
            DisturbanceSpec::Gaussian { std_dev } => {
                let normal = Normal::new(0.0, std_dev).expect("validated scale");
                DVector::from_fn(dim, |_, _| normal.sample(rng))
            }
            DisturbanceSpec::Uniform { half_width } => {
                if half_width == 0.0 {
                    DVector::zeros(dim)
                } else {
                    DVector::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width))
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            DisturbanceSpec::Zero => true,
            DisturbanceSpec::Gaussian { std_dev } => std_dev == 0.0,
            DisturbanceSpec::Uniform { half_width } => half_width == 0.0,
        }
    }
}

/// `x_{k+1} = A x_k + B u_k + w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise: DisturbanceSpec,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, noise: DisturbanceSpec) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 {
            return Err(DrmpcError::InvalidArgument(
                "system needs at least one state and one input".into(),
            ));
        }
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        noise.validate()?;
        Ok(Self { a, b, noise })
    }

    /// The two-state, single-input example system with `w ~ N(0, 0.03²)`.
    pub fn example_system() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.05, 0.9]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DisturbanceSpec::Gaussian { std_dev: 0.03 },
        )
        .expect("valid example system")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn noise(&self) -> &DisturbanceSpec {
        &self.noise
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + w
    }

    pub fn sample_disturbance<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.noise.sample(self.state_dim(), rng)
    }
}

/// The lifted matrices of `y = L z + H w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDynamics {
    pub l: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
}

pub fn build_lifted(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> Result<LiftedDynamics> {
    let n = a.nrows();
    let m = b.ncols();
    if horizon == 0 {
        return Err(DrmpcError::InvalidArgument("horizon must be at least 1".into()));
    }
    if n == 0 || m == 0 {
        return Err(DrmpcError::InvalidArgument("empty system matrices".into()));
    }
    check_dim("A columns", n, a.ncols())?;
    check_dim("B rows", n, b.nrows())?;

    // powers[k] = A^k
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for k in 1..=horizon {
        let next = a * &powers[k - 1];
        powers.push(next);
    }
    let mut l = DMatrix::zeros(n * horizon, n + m * horizon);
    let mut h = DMatrix::zeros(n * horizon, n * horizon);
    for r in 0..horizon {
        l.view_mut((r * n, 0), (n, n)).copy_from(&powers[r + 1]);
        for c in 0..=r {
            let ab = &powers[r - c] * b;
            l.view_mut((r * n, n + c * m), (n, m)).copy_from(&ab);
            h.view_mut((r * n, c * n), (n, n)).copy_from(&powers[r - c]);
        }
    }
    Ok(LiftedDynamics {
        l,
        h,
        n,
        m,
        horizon,
    })
}

impl LiftedDynamics {
    pub fn from_system(sys: &LtiSystem, horizon: usize) -> Result<Self> {
        build_lifted(sys.a(), sys.b(), horizon)
    }

    pub fn z_dim(&self) -> usize {
        self.n + self.m * self.horizon
    }

    pub fn y_dim(&self) -> usize {
        self.n * self.horizon
    }

    pub fn predict(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("lifted z", self.z_dim(), z.len())?;
        check_dim("lifted w", self.y_dim(), w.len())?;
        Ok(&self.l * z + &self.h * w)
    }
}

/// Number of leading `z` columns block row `r` may depend on under causality:
/// the initial state and the inputs `u₀ … u_r`.
pub fn causal_columns(n: usize, m: usize, block_row: usize) -> usize {
    n + m * (block_row + 1)
}

/// True when every entry that a strictly future input would occupy is exactly zero.
pub fn is_causal(l: &DMatrix<f64>, n: usize, m: usize, horizon: usize) -> bool {
    if l.nrows() != n * horizon || l.ncols() != n + m * horizon {
        return false;
    }
    (0..horizon).all(|r| {
        let start = causal_columns(n, m, r);
        l.view((r * n, start), (n, l.ncols() - start))
            .iter()
            .all(|v| *v == 0.0)
    })
}

/// Iterates the one-step recursion and returns `x₁ … x_T`.
pub fn simulate_trajectory(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    if u.len() != w.len() {
        return Err(DrmpcError::InvalidArgument(format!(
            "input sequence has {} steps but disturbance sequence has {}",
            u.len(),
            w.len()
        )));
    }
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(u.len());
    for (uk, wk) in u.iter().zip(w) {
        check_dim("input", sys.input_dim(), uk.len())?;
        check_dim("disturbance", sys.state_dim(), wk.len())?;
        x = sys.step(&x, uk, wk);
        states.push(x.clone());
    }
    Ok(states)
}

pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let data: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    DVector::from_vec(data)
}

pub fn stack_z(x0: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
    let mut data: Vec<f64> = x0.iter().copied().collect();
    data.extend(u.iter().flat_map(|p| p.iter().copied()));
    DVector::from_vec(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    /// Stacked disturbance, known only for freshly simulated records.
    pub w: Option<DVector<f64>>,
}

/// Generation provenance carried in dataset headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<DisturbanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<DisturbanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<DisturbanceSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub records: Vec<TrajectoryRecord>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn new(
        n: usize,
        m: usize,
        horizon: usize,
        records: Vec<TrajectoryRecord>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if n == 0 || m == 0 || horizon == 0 {
            return Err(DrmpcError::InvalidArgument(
                "dataset dimensions must be positive".into(),
            ));
        }
        if records.is_empty() {
            return Err(DrmpcError::InvalidArgument("dataset needs at least one record".into()));
        }
        for r in &records {
            check_dim("dataset z", n + m * horizon, r.z.len())?;
            check_dim("dataset y", n * horizon, r.y.len())?;
            if let Some(w) = &r.w {
                check_dim("dataset w", n * horizon, w.len())?;
            }
        }
        Ok(Self {
            n,
            m,
            horizon,
            records,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn z_dim(&self) -> usize {
        self.n + self.m * self.horizon
    }

    pub fn y_dim(&self) -> usize {
        self.n * self.horizon
    }

    /// Copy keeping only the records at `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records.get(i).cloned().ok_or_else(|| {
                    DrmpcError::InvalidArgument(format!("record index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.n, self.m, self.horizon, records, self.meta.clone())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {DATASET_FORMAT_VERSION}")?;
        writeln!(
            out,
            "# dims n={} m={} horizon={} records={}",
            self.n,
            self.m,
            self.horizon,
            self.records.len()
        )?;
        writeln!(out, "# meta {}", serde_json::to_string(&self.meta)?)?;
        let columns: Vec<String> = (0..self.z_dim())
            .map(|i| format!("z_{i}"))
            .chain((0..self.y_dim()).map(|i| format!("y_{i}")))
            .collect();
        writeln!(out, "# columns {}", columns.join(","))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for r in &self.records {
            let row: Vec<String> = r.z.iter().chain(r.y.iter()).map(|v| v.to_string()).collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let text = std::io::read_to_string(input)?;
        let mut dims: Option<(usize, usize, usize, usize)> = None;
        let mut meta = DatasetMeta::default();
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("dims ") {
                dims = Some(parse_dims(rest)?);
            } else if let Some(rest) = line.strip_prefix("meta ") {
                meta = serde_json::from_str(rest)?;
            }
        }
        let (n, m, horizon, count) =
            dims.ok_or_else(|| DrmpcError::Format("missing '# dims' header".into()))?;
        let width = (n + m * horizon) + n * horizon;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = Vec::with_capacity(count);
        for row in reader.records() {
            let row = row?;
            if row.len() != width {
                return Err(DrmpcError::Format(format!(
                    "row has {} fields, expected {width}",
                    row.len()
                )));
            }
            let values = row
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| DrmpcError::Format(format!("bad number {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let zd = n + m * horizon;
            records.push(TrajectoryRecord {
                z: DVector::from_column_slice(&values[..zd]),
                y: DVector::from_column_slice(&values[zd..]),
                w: None,
            });
        }
        if records.len() != count {
            return Err(DrmpcError::Format(format!(
                "header announces {count} records, found {}",
                records.len()
            )));
        }
        Self::new(n, m, horizon, records, meta)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetJson {
            format: DATASET_FORMAT_VERSION.to_string(),
            n: self.n,
            m: self.m,
            horizon: self.horizon,
            meta: self.meta.clone(),
            records: self
                .records
                .iter()
                .map(|r| RecordJson {
                    z: r.z.iter().copied().collect(),
                    y: r.y.iter().copied().collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetJson = serde_json::from_str(text)?;
        let records = doc
            .records
            .into_iter()
            .map(|r| TrajectoryRecord {
                z: DVector::from_vec(r.z),
                y: DVector::from_vec(r.y),
                w: None,
            })
            .collect();
        Self::new(doc.n, doc.m, doc.horizon, records, doc.meta)
    }

    /// Loads CSV or JSON, chosen by file extension (`.json` means JSON).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::read_csv(text.as_bytes())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::write(path, self.to_json()?)?;
        } else {
            let mut buf = Vec::new();
            self.write_csv(&mut buf)?;
            std::fs::write(path, buf)?;
        }
        Ok(())
    }
}

fn parse_dims(rest: &str) -> Result<(usize, usize, usize, usize)> {
    let mut n = None;
    let mut m = None;
    let mut horizon = None;
    let mut count = None;
    for item in rest.split_whitespace() {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| DrmpcError::Format(format!("bad dims entry {item:?}")))?;
        let value: usize = value
            .parse()
            .map_err(|_| DrmpcError::Format(format!("bad dims value {item:?}")))?;
        match key {
            "n" => n = Some(value),
            "m" => m = Some(value),
            "horizon" => horizon = Some(value),
            "records" => count = Some(value),
            _ => {}
        }
    }
    match (n, m, horizon, count) {
        (Some(n), Some(m), Some(h), Some(c)) => Ok((n, m, h, c)),
        _ => Err(DrmpcError::Format("incomplete dims header".into())),
    }
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    z: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    format: String,
    n: usize,
    m: usize,
    horizon: usize,
    #[serde(default)]
    meta: DatasetMeta,
    records: Vec<RecordJson>,
}

/// Independent random stream for record `index`; earlier records do not
/// change when the dataset size changes.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Simulates `count` independent trajectories of length `horizon`.
///
/// Per record the draws are, in order: `x₀`, then `(u_k, w_k)` for each step.
pub fn generate_dataset(
    sys: &LtiSystem,
    count: usize,
    horizon: usize,
    input_spec: &DisturbanceSpec,
    init_spec: &DisturbanceSpec,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if count == 0 || horizon == 0 {
        return Err(DrmpcError::InvalidArgument(
            "dataset needs N >= 1 and T >= 1".into(),
        ));
    }
    input_spec.validate()?;
    init_spec.validate()?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(seed, i as u64);
            let x0 = init_spec.sample(n, &mut rng);
            let mut u = Vec::with_capacity(horizon);
            let mut w = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                u.push(input_spec.sample(m, &mut rng));
                w.push(sys.sample_disturbance(&mut rng));
            }
            let states = simulate_trajectory(sys, &x0, &u, &w)?;
            Ok(TrajectoryRecord {
                z: stack_z(&x0, &u),
                y: stack(&states),
                w: Some(stack(&w)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = DatasetMeta {
        seed: Some(seed),
        input: Some(input_spec.clone()),
        initial_state: Some(init_spec.clone()),
        noise: Some(sys.noise().clone()),
    };
    TrajectoryDataset::new(n, m, horizon, records, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.05, 0.9])
    }

    #[test]
    fn one_step_lifting_is_a_b() {
        let a = example_a();
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let lifted = build_lifted(&a, &b, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[0.9, 0.1, 0.0, 0.05, 0.9, 1.0]);
        assert_eq!(lifted.l, expected);
        assert_eq!(lifted.h, DMatrix::identity(2, 2));
    }

    #[test]
    fn second_block_row_holds_a_squared() {
        let a = example_a();
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let lifted = build_lifted(&a, &b, 5).unwrap();
        // A² = [[0.81 + 0.005, 0.09 + 0.09], [0.045 + 0.045, 0.005 + 0.81]]
        let a2 = DMatrix::from_row_slice(2, 2, &[0.815, 0.18, 0.09, 0.815]);
        let block = lifted.l.view((2, 0), (2, 2)).into_owned();
        assert!((block - a2).amax() < 1e-15);
        assert!(is_causal(&lifted.l, 2, 1, 5));
        for r in 0..5 {
            for c in 0..5 {
                let blk = lifted.h.view((2 * r, 2 * c), (2, 2));
                if c == r {
                    assert_eq!(blk.into_owned(), DMatrix::identity(2, 2));
                } else if c > r {
                    assert!(blk.iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let a = DMatrix::zeros(2, 3);
        let b = DMatrix::zeros(2, 1);
        assert!(build_lifted(&a, &b, 2).is_err());
        assert!(build_lifted(&example_a(), &DMatrix::zeros(3, 1), 2).is_err());
        assert!(build_lifted(&example_a(), &DMatrix::zeros(2, 1), 0).is_err());
    }

    #[test]
    fn simulation_fixed_point_and_hand_step() {
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DisturbanceSpec::Zero,
        )
        .unwrap();
        let v = DVector::from_vec(vec![0.3, -1.2]);
        let u = vec![DVector::from_vec(vec![5.0]); 4];
        let w = vec![DVector::zeros(2); 4];
        for x in simulate_trajectory(&sys, &v, &u, &w).unwrap() {
            assert_eq!(x, v);
        }

        let sys = LtiSystem::example_system();
        let x0 = DVector::from_vec(vec![0.9, 0.9]);
        let x = simulate_trajectory(&sys, &x0, &[DVector::zeros(1)], &[DVector::zeros(2)]).unwrap();
        assert!((x[0][0] - 0.9).abs() < 1e-15);
        assert!((x[0][1] - 0.855).abs() < 1e-15);

        assert!(simulate_trajectory(&sys, &x0, &u, &w[..2]).is_err());
    }

    #[test]
    fn degenerate_specs_give_zero_records() {
        let sys = LtiSystem::new(example_a(), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), DisturbanceSpec::Zero)
            .unwrap();
        let data = generate_dataset(&sys, 4, 3, &DisturbanceSpec::Zero, &DisturbanceSpec::Zero, 9).unwrap();
        for r in &data.records {
            assert!(r.z.iter().chain(r.y.iter()).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn generation_is_seeded_and_prefix_stable() {
        let sys = LtiSystem::example_system();
        let spec = DisturbanceSpec::Gaussian { std_dev: 0.5 };
        let a = generate_dataset(&sys, 8, 5, &spec, &spec, 3).unwrap();
        let b = generate_dataset(&sys, 8, 5, &spec, &spec, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&sys, 12, 5, &spec, &spec, 3).unwrap();
        assert_eq!(&a.records[..], &c.records[..8]);
        let d = generate_dataset(&sys, 8, 5, &spec, &spec, 4).unwrap();
        assert_ne!(a.records[0], d.records[0]);
    }

    #[test]
    fn records_match_lifted_form() {
        let sys = LtiSystem::example_system();
        let spec = DisturbanceSpec::Gaussian { std_dev: 0.5 };
        let data = generate_dataset(&sys, 6, 5, &spec, &spec, 11).unwrap();
        let lifted = LiftedDynamics::from_system(&sys, 5).unwrap();
        for r in &data.records {
            let y = lifted.predict(&r.z, r.w.as_ref().unwrap()).unwrap();
            assert!((y - &r.y).amax() < 1e-10);
        }
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let sys = LtiSystem::example_system();
        let spec = DisturbanceSpec::Uniform { half_width: 0.4 };
        let mut data = generate_dataset(&sys, 3, 2, &spec, &spec, 5).unwrap();
        data.records.iter_mut().for_each(|r| r.w = None);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# drmpc-dataset v1\n# dims n=2 m=1 horizon=2 records=3\n"));
        assert_eq!(TrajectoryDataset::read_csv(text.as_bytes()).unwrap(), data);
        assert_eq!(TrajectoryDataset::from_json(&data.to_json().unwrap()).unwrap(), data);
    }

    #[test]
    fn csv_rejects_wrong_width() {
        let text = "# dims n=1 m=1 horizon=1 records=1\n1,2,3,4\n";
        assert!(TrajectoryDataset::read_csv(text.as_bytes()).is_err());
    }
}
