//! Pairwise machine comparison: Euclidean distance, (Ψ-)DTW, the DTW
//! warping amount, harmonic amplitude differences, and the fleet matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{self, FleetWindow, Series, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DissimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("psi {psi} must be smaller than the shortest series length {len}")]
    PsiTooLarge { psi: usize, len: usize },
    #[error("need at least 2 machines, got {0}")]
    TooFewMachines(usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T, E = DissimilarityError> = std::result::Result<T, E>;

/// How two data points are compared inside Euclidean distance and DTW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// `‖x − y‖₂`
    #[default]
    DiffNorm,
    /// `‖x‖₂ − ‖y‖₂`, the difference of norms. Only ever used squared.
    NormDiff,
}

pub fn pointwise_cost(x: &[f64], y: &[f64], mode: CostMode) -> Result<f64> {
    if x.len() != y.len() {
        return Err(DissimilarityError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(cost_unchecked(x, y, mode))
}

#[inline]
fn cost_unchecked(x: &[f64], y: &[f64], mode: CostMode) -> f64 {
    match mode {
        CostMode::DiffNorm => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        CostMode::NormDiff => {
            x.iter().map(|a| a * a).sum::<f64>().sqrt() - y.iter().map(|b| b * b).sum::<f64>().sqrt()
        }
    }
}

#[inline]
fn squared_cost(x: &[f64], y: &[f64], mode: CostMode) -> f64 {
    match mode {
        CostMode::DiffNorm => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        CostMode::NormDiff => cost_unchecked(x, y, mode).powi(2),
    }
}

/// Lock-step distance `sqrt(Σ cost(x_i, y_i)²)`.
pub fn euclidean(x: &Series, y: &Series, mode: CostMode) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(DissimilarityError::DimensionMismatch(x.dim(), y.dim()));
    }
    if x.len() != y.len() {
        return Err(DissimilarityError::LengthMismatch(x.len(), y.len()));
    }
    Ok(x.frames().zip(y.frames()).map(|(a, b)| squared_cost(a, b, mode)).sum::<f64>().sqrt())
}

/// Euclidean distance of two feature vectors (a length-1 sequence).
pub fn feature_euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(DissimilarityError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(cost_unchecked(x, y, CostMode::DiffNorm))
}

/// An alignment between two series. Indices are 0-based `(i, j)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    pub steps: Vec<(usize, usize)>,
    pub psi: usize,
}

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the relaxed boundary, monotonicity and step-size conditions for
    /// series of lengths `nx` and `ny`.
    pub fn validate(&self, nx: usize, ny: usize) -> std::result::Result<(), String> {
        let (&(i0, j0), &(il, jl)) = match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err("empty path".into()),
        };
        let psi = self.psi;
        if !((j0 == 0 && i0 <= psi) || (i0 == 0 && j0 <= psi)) {
            return Err(format!("start ({i0}, {j0}) outside the relaxed boundary"));
        }
        let end_ok = (jl + 1 == ny && il + 1 + psi >= nx && il < nx) || (il + 1 == nx && jl + 1 + psi >= ny && jl < ny);
        if !end_ok {
            return Err(format!("end ({il}, {jl}) outside the relaxed boundary"));
        }
        for w in self.steps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.0 < a.0 || b.1 < a.1 {
                return Err(format!("non-monotone step {a:?} -> {b:?}"));
            }
            let d = (b.0 - a.0, b.1 - a.1);
            if !matches!(d, (1, 0) | (0, 1) | (1, 1)) {
                return Err(format!("illegal step {a:?} -> {b:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwAlignment {
    pub distance: f64,
    pub path: WarpingPath,
}

/// Ψ-DTW: minimal `sqrt(Σ cost²)` over warping paths whose first and last
/// steps may skip up to `psi` samples of either series. `psi = 0` is the
/// classic boundary condition.
///
/// Among equally good predecessors the backtrack prefers the diagonal, then
/// `(0,1)`, then `(1,0)`, which keeps the warping count low and deterministic.
pub fn dtw(x: &Series, y: &Series, psi: usize, mode: CostMode) -> Result<DtwAlignment> {
    if x.dim() != y.dim() {
        return Err(DissimilarityError::DimensionMismatch(x.dim(), y.dim()));
    }
    let (nx, ny) = (x.len(), y.len());
    if psi >= nx.min(ny) {
        return Err(DissimilarityError::PsiTooLarge { psi, len: nx.min(ny) });
    }

    let mut acc = vec![0.0f64; nx * ny];
    for i in 0..nx {
        let xi = x.frame(i);
        let row = i * ny;
        for j in 0..ny {
            let c = squared_cost(xi, y.frame(j), mode);
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = acc[row - ny + j - 1];
            }
            if j > 0 {
                best = best.min(acc[row + j - 1]);
            }
            if i > 0 {
                best = best.min(acc[row - ny + j]);
            }
            if (j == 0 && i <= psi) || (i == 0 && j <= psi) {
                best = 0.0;
            }
            acc[row + j] = best + c;
        }
    }

    // Corner first, then progressively larger end skips.
    let mut end = (nx - 1, ny - 1);
    for d in 1..=psi {
        for cand in [(nx - 1 - d, ny - 1), (nx - 1, ny - 1 - d)] {
            if acc[cand.0 * ny + cand.1] < acc[end.0 * ny + end.1] {
                end = cand;
            }
        }
    }
    let total = acc[end.0 * ny + end.1];

    let mut steps = vec![end];
    let (mut i, mut j) = end;
    loop {
        let is_start = (j == 0 && i <= psi) || (i == 0 && j <= psi);
        if is_start {
            break;
        }
        let mut next = None;
        let mut best = f64::INFINITY;
        if i > 0 && j > 0 {
            best = acc[(i - 1) * ny + j - 1];
            next = Some((i - 1, j - 1));
        }
        if j > 0 && acc[i * ny + j - 1] < best {
            best = acc[i * ny + j - 1];
            next = Some((i, j - 1));
        }
        if i > 0 && acc[(i - 1) * ny + j] < best {
            next = Some((i - 1, j));
        }
        (i, j) = next.expect("interior cell always has a predecessor");
        steps.push((i, j));
    }
    steps.reverse();
    Ok(DtwAlignment { distance: total.sqrt(), path: WarpingPath { steps, psi } })
}

/// Number of non-diagonal steps in the path, optionally divided by its length.
pub fn warping_amount(path: &WarpingPath, normalized: bool) -> f64 {
    let count = path.steps.windows(2).filter(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1) != (1, 1)).count() as f64;
    if normalized && !path.is_empty() {
        count / path.len() as f64
    } else {
        count
    }
}

/// Spectrum preparation applied before reading harmonic amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicOptions {
    pub k: u32,
    pub half_window_hz: f64,
    /// When set, the spectrum is converted to `log10(max(a, floor))` and then
    /// min-max scaled before the amplitude is read.
    pub log_floor: Option<f64>,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        Self { k: 3, half_window_hz: 5.0, log_floor: None }
    }
}

/// Amplitude of the `k`-th harmonic of a machine's own estimated fundamental.
pub fn harmonic_feature(x: &Series, opts: &HarmonicOptions) -> Result<f64> {
    let mut spectrum = signal::fft_magnitude(x)?;
    if let Some(floor) = opts.log_floor {
        spectrum = signal::log_scale(&spectrum, floor)?;
        spectrum.amplitudes = signal::normalize_column(&spectrum.amplitudes, signal::NormMode::Minmax, 0)?;
    }
    let f0 = signal::estimate_fundamental(&spectrum)?;
    Ok(signal::harmonic_amplitude(&spectrum, f0, opts.k, opts.half_window_hz)?)
}

/// `|harmonic(k, X) − harmonic(k, Y)|`.
pub fn harmonic_diff(x: &Series, y: &Series, opts: &HarmonicOptions) -> Result<f64> {
    Ok((harmonic_feature(x, opts)? - harmonic_feature(y, opts)?).abs())
}

/// A configured pairwise dissimilarity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Euclidean { cost: CostMode },
    Dtw { psi: usize, cost: CostMode },
    WarpingAmount { psi: usize, normalized: bool, cost: CostMode },
    HarmonicDiff(HarmonicOptions),
    FeatureEuclidean,
}

impl Measure {
    pub fn evaluate(&self, x: &Series, y: &Series) -> Result<f64> {
        match self {
            Measure::Euclidean { cost } => euclidean(x, y, *cost),
            Measure::Dtw { psi, cost } => Ok(dtw(x, y, *psi, *cost)?.distance),
            Measure::WarpingAmount { psi, normalized, cost } => {
                Ok(warping_amount(&dtw(x, y, *psi, *cost)?.path, *normalized))
            }
            Measure::HarmonicDiff(opts) => harmonic_diff(x, y, opts),
            Measure::FeatureEuclidean => {
                if x.len() != 1 || y.len() != 1 {
                    return Err(DissimilarityError::LengthMismatch(x.len(), y.len()));
                }
                feature_euclidean(x.frame(0), y.frame(0))
            }
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Measure::Euclidean { .. } => "euclidean".into(),
            Measure::Dtw { psi, .. } => format!("dtw(psi={psi})"),
            Measure::WarpingAmount { psi, normalized, .. } => {
                format!("warping_amount(psi={psi}, normalized={normalized})")
            }
            Measure::HarmonicDiff(o) => format!("harmonic_diff(k={})", o.k),
            Measure::FeatureEuclidean => "feature_euclidean".into(),
        }
    }
}

/// Symmetric matrix of pairwise dissimilarities with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    pub machine_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub measure_tag: String,
}

impl DissimilarityMatrix {
    pub fn new(machine_ids: Vec<String>, values: Vec<Vec<f64>>, measure_tag: impl Into<String>) -> Result<Self> {
        let n = machine_ids.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(DissimilarityError::InvalidMatrix(format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if values[i][i] != 0.0 {
                return Err(DissimilarityError::InvalidMatrix(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i][j];
                if !v.is_finite() || v < 0.0 || v != values[j][i] {
                    return Err(DissimilarityError::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {v} is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { machine_ids, values, measure_tag: measure_tag.into() })
    }

    pub fn len(&self) -> usize {
        self.machine_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machine_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.machine_ids.iter().position(|m| m == id)
    }

    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index_of(a)?][self.index_of(b)?])
    }
}

/// Evaluates `f` once per unordered pair, in parallel, and assembles the
/// symmetric matrix. The result does not depend on scheduling.
pub fn build_matrix_with<T, F>(ids: &[String], items: &[T], tag: &str, f: F) -> Result<DissimilarityMatrix>
where
    T: Sync,
    F: Fn(&T, &T) -> Result<f64> + Sync,
{
    let n = items.len();
    if n < 2 || ids.len() != n {
        return Err(DissimilarityError::TooFewMachines(n));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(&items[i], &items[j])).collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(results) {
        values[i][j] = v;
        values[j][i] = v;
    }
    DissimilarityMatrix::new(ids.to_vec(), values, tag)
}

pub fn build_matrix(window: &FleetWindow, measure: &Measure) -> Result<DissimilarityMatrix> {
    let ids = window.machine_ids();
    let series: Vec<&Series> = window.machines.iter().map(|(_, s)| s).collect();
    build_matrix_with(&ids, &series, &measure.tag(), |x, y| measure.evaluate(x, y))
}
