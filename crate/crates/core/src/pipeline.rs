//! Variant recipes, CSV ingestion and fleet runs.
//!
//! A run analyzes every window independently (preprocess, dissimilarity
//! matrix, dendrogram), then walks the windows in order to partition, score,
//! classify and debounce. Only the second stage depends on `thr_cc`, so
//! threshold sweeps reuse the window analyses.

use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clustering::{self, ClusterError, Dendrogram, Linkage, Partition};
use crate::detection::{self, ConfusionCounts, Debouncer, DetectionError, Metrics, SweepTable};
use crate::dissimilarity::{self, CostMode, DissimilarityError, DissimilarityMatrix, HarmonicOptions, Measure};
use crate::fleetsim::{speed_to_fundamental, GroundTruth, ScenarioConfig, SimError, AXES};
use crate::signal::{self, FleetRecording, FleetWindow, NormMode, Series, SignalError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("ragged columns at line {line}: expected {expected} fields, found {found}")]
    RaggedColumns { line: u64, expected: usize, found: usize },
    #[error("non-uniform sample rate at line {line}")]
    RateMismatch { line: u64 },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Dissimilarity(#[from] DissimilarityError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub fn is_config_error(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Json(_))
            || matches!(self, PipelineError::Sim(SimError::InvalidConfig(_)))
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Min-max normalized current waveforms compared by the Ψ-DTW warping amount.
    #[default]
    Waveform,
    /// Third-harmonic amplitude of the log-scaled, min-max normalized spectrum.
    Harmonic,
    /// Log-scaled low-passed spectrograms compared by DTW.
    Spectrogram,
    /// Vibration harmonics 3–6 of each axis, percentile-scaled across the fleet.
    VibrationFeatures,
}

impl std::str::FromStr for Variant {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| PipelineError::Config(format!("unknown variant {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    pub variant: Variant,
    pub thr_cc: f64,
    pub thr_ad: f64,
    pub debounce_n: usize,
    pub window_s: f64,
    pub linkage: Linkage,
    pub cost: CostMode,
    /// Boundary relaxation in samples for the waveform variant.
    pub psi: usize,
    pub samples_per_period: usize,
    pub harmonic_k: u32,
    pub half_window_hz: f64,
    pub log_floor: f64,
    pub frame_s: f64,
    pub lowpass_hz: f64,
    pub harmonics: Vec<u32>,
    /// Normalization of the vibration features across the fleet.
    pub feature_normalization: NormMode,
    pub pole_pairs: u32,
    /// Derive the fundamental from the speed channel when one is present.
    pub use_speed_channel: bool,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Waveform,
            thr_cc: 0.9,
            thr_ad: detection::DEFAULT_THR_AD,
            debounce_n: detection::DEFAULT_DEBOUNCE,
            window_s: 0.5,
            linkage: Linkage::Single,
            cost: CostMode::DiffNorm,
            psi: 25,
            samples_per_period: 50,
            harmonic_k: 3,
            half_window_hz: 5.0,
            log_floor: 1e-12,
            frame_s: 0.05,
            lowpass_hz: 200.0,
            harmonics: vec![3, 4, 5, 6],
            feature_normalization: NormMode::Percentile,
            pole_pairs: 2,
            use_speed_channel: true,
        }
    }
}

impl VariantConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.thr_cc) {
            return bad("thr_cc must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.thr_ad) {
            return bad("thr_ad must lie in [0, 1)");
        }
        if self.debounce_n == 0 {
            return bad("debounce_n must be at least 1");
        }
        if !(self.window_s > 0.0 && self.frame_s > 0.0 && self.lowpass_hz > 0.0) {
            return bad("window, frame and low-pass settings must be positive");
        }
        if self.samples_per_period < 2 || self.harmonic_k == 0 || !(self.log_floor > 0.0) {
            return bad("samples_per_period >= 2, harmonic_k >= 1 and log_floor > 0 are required");
        }
        if self.harmonics.is_empty() || self.harmonics.contains(&0) {
            return bad("harmonics must be a non-empty list of positive orders");
        }
        if self.half_window_hz < 0.0 || self.pole_pairs == 0 {
            return bad("half_window_hz must be non-negative and pole_pairs positive");
        }
        Ok(())
    }

    pub fn measure(&self) -> Measure {
        match self.variant {
            Variant::Waveform => Measure::WarpingAmount { psi: self.psi, normalized: true, cost: self.cost },
            Variant::Harmonic => Measure::Euclidean { cost: CostMode::DiffNorm },
            Variant::Spectrogram => Measure::Dtw { psi: 0, cost: self.cost },
            Variant::VibrationFeatures => Measure::FeatureEuclidean,
        }
    }

    fn harmonic_options(&self) -> HarmonicOptions {
        HarmonicOptions { k: self.harmonic_k, half_window_hz: self.half_window_hz, log_floor: Some(self.log_floor) }
    }

    fn fundamental(&self, window: &FleetWindow, series: &Series) -> Result<f64> {
        if self.use_speed_channel {
            if let Some(rpm) = window.speed_rpm {
                let f = speed_to_fundamental(rpm, self.pole_pairs);
                if f > 0.0 {
                    return Ok(f);
                }
                return Err(PipelineError::Data(format!("speed {rpm} rpm gives no usable fundamental")));
            }
        }
        let spectrum = signal::fft_magnitude(series)?;
        Ok(signal::estimate_fundamental(&spectrum)?)
    }
}

/// Window-level products that do not depend on the partition threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAnalysis {
    pub window_index: usize,
    pub speed_rpm: Option<f64>,
    /// Machines that passed preprocessing, in fleet order.
    pub machine_ids: Vec<String>,
    /// Machines dropped by preprocessing, with the reason.
    pub excluded: Vec<(String, String)>,
    /// Preprocessed representation of every included machine.
    #[serde(skip)]
    pub representations: Vec<Series>,
    /// `None` when too many machines failed preprocessing.
    pub matrix: Option<DissimilarityMatrix>,
    pub dendrogram: Option<Dendrogram>,
}

impl WindowAnalysis {
    pub fn skipped(&self) -> bool {
        self.matrix.is_none()
    }
}

fn vibration_features(window: &FleetWindow, series: &Series, config: &VariantConfig) -> Result<Vec<f64>> {
    if series.dim() != AXES.len() {
        return Err(PipelineError::Data(format!(
            "vibration features need 3 axes per machine, found {}",
            series.dim()
        )));
    }
    let f0 = config.fundamental(window, &series.channel(0)?)?;
    let mut features = Vec::with_capacity(AXES.len() * config.harmonics.len());
    for axis in 0..AXES.len() {
        let spectrum = signal::fft_magnitude(&series.channel(axis)?)?;
        for &k in &config.harmonics {
            features.push(signal::harmonic_amplitude(&spectrum, f0, k, config.half_window_hz)?);
        }
    }
    Ok(features)
}

fn preprocess_machine(window: &FleetWindow, series: &Series, config: &VariantConfig) -> Result<Series> {
    match config.variant {
        Variant::Waveform => {
            let f0 = config.fundamental(window, series)?;
            let down = signal::downsample_per_period(series, f0, config.samples_per_period)?;
            if down.len() <= config.psi {
                return Err(PipelineError::Data(format!(
                    "{} samples after resampling do not exceed psi = {}",
                    down.len(),
                    config.psi
                )));
            }
            Ok(signal::normalize(&down, NormMode::Minmax)?)
        }
        Variant::Harmonic => {
            let h = dissimilarity::harmonic_feature(series, &config.harmonic_options())?;
            Ok(Series::from_scalars(vec![h], 1.0)?)
        }
        Variant::Spectrogram => {
            let sg = signal::spectrogram(series, config.frame_s)?;
            let logged = signal::log_scale_series(&sg, config.log_floor)?;
            let low = signal::lowpass_truncate(&logged, config.lowpass_hz)?;
            Ok(signal::normalize_minmax_joint(&low)?)
        }
        Variant::VibrationFeatures => {
            let features = vibration_features(window, series, config)?;
            let dim = features.len();
            Ok(Series::from_flat(features, dim, 1.0)?)
        }
    }
}

/// Scales each feature dimension across the fleet. Dimensions without
/// spread carry no information and become zero.
fn normalize_across_fleet(reps: &mut [Series], mode: NormMode) -> Result<()> {
    let dim = reps[0].dim();
    let mut scaled: Vec<Vec<f64>> = reps.iter().map(|r| r.values().to_vec()).collect();
    for d in 0..dim {
        let column: Vec<f64> = reps.iter().map(|r| r.values()[d]).collect();
        let out = match signal::normalize_column(&column, mode, d) {
            Ok(v) => v,
            Err(SignalError::DegenerateScale { .. }) => vec![0.0; column.len()],
            Err(e) => return Err(e.into()),
        };
        for (row, v) in scaled.iter_mut().zip(out) {
            row[d] = v;
        }
    }
    for (rep, values) in reps.iter_mut().zip(scaled) {
        *rep = Series::from_flat(values, dim, 1.0)?;
    }
    Ok(())
}

/// Preprocesses, compares and clusters one window.
pub fn analyze_window(window: &FleetWindow, config: &VariantConfig) -> Result<WindowAnalysis> {
    let mut machine_ids = Vec::new();
    let mut representations = Vec::new();
    let mut excluded = Vec::new();
    for (id, series) in &window.machines {
        match preprocess_machine(window, series, config) {
            Ok(rep) => {
                machine_ids.push(id.clone());
                representations.push(rep);
            }
            Err(e) => {
                warn!("window {}: machine {id} excluded: {e}", window.window_index);
                excluded.push((id.clone(), e.to_string()));
            }
        }
    }
    let mut analysis = WindowAnalysis {
        window_index: window.window_index,
        speed_rpm: window.speed_rpm,
        machine_ids,
        excluded,
        representations,
        matrix: None,
        dendrogram: None,
    };
    let total = window.machines.len();
    if 2 * analysis.excluded.len() > total || analysis.machine_ids.len() < 2 {
        warn!(
            "window {}: skipped, {} of {total} machines failed preprocessing",
            window.window_index,
            analysis.excluded.len()
        );
        return Ok(analysis);
    }
    if config.variant == Variant::VibrationFeatures {
        normalize_across_fleet(&mut analysis.representations, config.feature_normalization)?;
    }
    let measure = config.measure();
    let matrix = dissimilarity::build_matrix_with(
        &analysis.machine_ids,
        &analysis.representations,
        &measure.tag(),
        |x, y| measure.evaluate(x, y),
    )?;
    analysis.dendrogram = Some(clustering::agglomerate(&matrix, config.linkage)?);
    analysis.matrix = Some(matrix);
    debug!("window {}: analyzed {} machines", window.window_index, analysis.machine_ids.len());
    Ok(analysis)
}

/// Analyzes all windows of a recording; windows run in parallel.
pub fn analyze(recording: &FleetRecording, config: &VariantConfig) -> Result<Vec<WindowAnalysis>> {
    config.validate()?;
    if recording.machines.len() < 3 {
        return Err(PipelineError::Data(format!(
            "need at least 3 machines for a majority vote, got {}",
            recording.machines.len()
        )));
    }
    let windows = recording.windows(config.window_s)?;
    windows.par_iter().map(|w| analyze_window(w, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineVerdict {
    pub machine_id: String,
    /// `None` when the machine was excluded or the window skipped.
    pub score: Option<f64>,
    pub cluster: Option<usize>,
    pub instant_anomalous: bool,
    pub debounced_faulty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub window_index: usize,
    pub skipped: bool,
    pub machines: Vec<MachineVerdict>,
}

impl WindowVerdict {
    pub fn get(&self, id: &str) -> Option<&MachineVerdict> {
        self.machines.iter().find(|m| m.machine_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub analysis: WindowAnalysis,
    pub partition: Option<Partition>,
    pub verdict: WindowVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub config: VariantConfig,
    pub machine_ids: Vec<String>,
    pub windows: Vec<WindowResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

impl RunResult {
    /// JSON document of the run. Matrices and dendrograms are only included
    /// when asked for.
    pub fn to_json(&self, include_matrices: bool) -> Value {
        let mut v = serde_json::to_value(self).expect("run result serializes");
        if !include_matrices {
            if let Some(windows) = v.get_mut("windows").and_then(Value::as_array_mut) {
                for w in windows {
                    if let Some(a) = w.get_mut("analysis").and_then(Value::as_object_mut) {
                        a.remove("matrix");
                        a.remove("dendrogram");
                    }
                }
            }
        }
        v
    }

    pub fn window(&self, window_index: usize) -> Option<&WindowResult> {
        self.windows.iter().find(|w| w.analysis.window_index == window_index)
    }
}

/// Partitions, scores, classifies and debounces analyzed windows in order.
///
/// Debounce counters restart whenever a machine is excluded or a window is
/// skipped.
pub fn decide(
    analyses: &[WindowAnalysis],
    fleet_ids: &[String],
    thr_cc: f64,
    thr_ad: f64,
    debounce_n: usize,
) -> Result<Vec<WindowResult>> {
    let mut debouncers: Vec<Debouncer> = fleet_ids.iter().map(|_| Debouncer::new(debounce_n)).collect();
    let mut out = Vec::with_capacity(analyses.len());
    for a in analyses {
        let partition = match (&a.matrix, &a.dendrogram) {
            (Some(m), Some(d)) => Some(clustering::partition(d, m, thr_cc)?),
            _ => None,
        };
        let scores = match &partition {
            Some(p) => Some(detection::score(p, &a.machine_ids)?),
            None => None,
        };
        let mut machines = Vec::with_capacity(fleet_ids.len());
        for (id, deb) in fleet_ids.iter().zip(debouncers.iter_mut()) {
            let pos = a.machine_ids.iter().position(|m| m == id);
            let verdict = match (pos, &scores, &partition) {
                (Some(i), Some(s), Some(p)) => {
                    let anomalous = detection::classify(&s[i..=i], thr_ad)[0];
                    MachineVerdict {
                        machine_id: id.clone(),
                        score: Some(s[i]),
                        cluster: p.cluster_of(id),
                        instant_anomalous: anomalous,
                        debounced_faulty: deb.update(anomalous),
                    }
                }
                _ => {
                    deb.reset();
                    MachineVerdict {
                        machine_id: id.clone(),
                        score: None,
                        cluster: None,
                        instant_anomalous: false,
                        debounced_faulty: false,
                    }
                }
            };
            machines.push(verdict);
        }
        out.push(WindowResult {
            analysis: a.clone(),
            partition,
            verdict: WindowVerdict { window_index: a.window_index, skipped: a.skipped(), machines },
        });
    }
    Ok(out)
}

/// Confusion counts of debounced predictions over every machine and every
/// window after the first `debounce_n − 1` warm-up windows.
pub fn evaluate<'a, I>(verdicts: I, truth: &GroundTruth, debounce_n: usize) -> Result<ConfusionCounts>
where
    I: IntoIterator<Item = &'a WindowVerdict>,
{
    let mut counts = ConfusionCounts::default();
    for v in verdicts.into_iter().skip(debounce_n.saturating_sub(1)) {
        for m in &v.machines {
            let label = truth
                .is_faulty(&m.machine_id)
                .ok_or_else(|| PipelineError::Data(format!("no ground truth for machine {}", m.machine_id)))?;
            counts.record(m.debounced_faulty, label);
        }
    }
    Ok(counts)
}

/// Runs one variant end to end; metrics are filled in when truth is given.
pub fn run_variant(
    recording: &FleetRecording,
    config: &VariantConfig,
    truth: Option<&GroundTruth>,
) -> Result<RunResult> {
    let analyses = analyze(recording, config)?;
    let ids = recording.machine_ids();
    let windows = decide(&analyses, &ids, config.thr_cc, config.thr_ad, config.debounce_n)?;
    let counts = truth
        .map(|t| evaluate(windows.iter().map(|w| &w.verdict), t, config.debounce_n))
        .transpose()?;
    Ok(RunResult {
        variant: config.variant,
        config: config.clone(),
        machine_ids: ids,
        windows,
        metrics: counts.as_ref().map(detection::metrics),
        counts,
    })
}

/// Grid used for partition-threshold sweeps.
pub const THR_CC_GRID: [f64; 6] = [0.5, 0.7, 0.8, 0.85, 0.9, 0.95];
/// Grid used for σ-band baseline sweeps.
pub const SIGMA_GRID: [f64; 8] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];

/// Metrics of one variant for every `thr_cc` in `grid`, sharing the window
/// analyses across the grid.
pub fn sweep_thr_cc(
    recording: &FleetRecording,
    config: &VariantConfig,
    grid: &[f64],
    truth: &GroundTruth,
    scenario: &str,
) -> Result<SweepTable> {
    let analyses = analyze(recording, config)?;
    sweep_analyses(&analyses, &recording.machine_ids(), config, grid, truth, scenario)
}

pub fn sweep_analyses(
    analyses: &[WindowAnalysis],
    fleet_ids: &[String],
    config: &VariantConfig,
    grid: &[f64],
    truth: &GroundTruth,
    scenario: &str,
) -> Result<SweepTable> {
    let rows = grid
        .iter()
        .map(|&thr| {
            if !(0.0..=1.0).contains(&thr) {
                return Err(PipelineError::Config(format!("thr_cc {thr} outside [0, 1]")));
            }
            let windows = decide(analyses, fleet_ids, thr, config.thr_ad, config.debounce_n)?;
            Ok((thr, evaluate(windows.iter().map(|w| &w.verdict), truth, config.debounce_n)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(detection::sweep("thr_cc", scenario, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub sigma_grid: Vec<f64>,
    pub window_s: f64,
    pub debounce_n: usize,
    pub harmonic_k: u32,
    /// Harmonic orders used for 3-axis vibration recordings.
    pub harmonics: Vec<u32>,
    pub half_window_hz: f64,
    pub pole_pairs: u32,
    pub use_speed_channel: bool,
    pub leave_one_out: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            sigma_grid: SIGMA_GRID.to_vec(),
            window_s: 0.5,
            debounce_n: detection::DEFAULT_DEBOUNCE,
            harmonic_k: 3,
            harmonics: vec![3, 4, 5, 6],
            half_window_hz: 5.0,
            pole_pairs: 2,
            use_speed_channel: true,
            leave_one_out: false,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s >= 0.0)) {
            return Err(PipelineError::Config("sigma grid must be a non-empty list of non-negative values".into()));
        }
        if self.debounce_n == 0 || !(self.window_s > 0.0) {
            return Err(PipelineError::Config("debounce_n >= 1 and window_s > 0 are required".into()));
        }
        Ok(())
    }

    fn as_variant_config(&self) -> VariantConfig {
        VariantConfig {
            variant: Variant::VibrationFeatures,
            half_window_hz: self.half_window_hz,
            harmonics: self.harmonics.clone(),
            pole_pairs: self.pole_pairs,
            use_speed_channel: self.use_speed_channel,
            ..VariantConfig::default()
        }
    }
}

/// Baseline indicators of one machine in one window: the raw third-harmonic
/// amplitude for current, or harmonics 3–6 of every axis for vibration.
pub fn baseline_indicators(window: &FleetWindow, series: &Series, config: &BaselineConfig) -> Result<Vec<f64>> {
    if series.dim() == 1 {
        let opts = HarmonicOptions { k: config.harmonic_k, half_window_hz: config.half_window_hz, log_floor: None };
        Ok(vec![dissimilarity::harmonic_feature(series, &opts)?])
    } else {
        vibration_features(window, series, &config.as_variant_config())
    }
}

/// The classic σ-band detector swept over `config.sigma_grid`, debounced and
/// evaluated exactly like the framework.
pub fn run_baseline(
    recording: &FleetRecording,
    config: &BaselineConfig,
    truth: &GroundTruth,
    scenario: &str,
) -> Result<SweepTable> {
    config.validate()?;
    let ids = recording.machine_ids();
    let windows = recording.windows(config.window_s)?;
    // Per window: indicators of the included machines, or None when skipped.
    let indicators: Vec<Option<Vec<Option<Vec<f64>>>>> = windows
        .par_iter()
        .map(|w| {
            let per_machine: Vec<Option<Vec<f64>>> = w
                .machines
                .iter()
                .map(|(id, s)| match baseline_indicators(w, s, config) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        warn!("window {}: machine {id} excluded from baseline: {e}", w.window_index);
                        None
                    }
                })
                .collect();
            let failed = per_machine.iter().filter(|m| m.is_none()).count();
            (2 * failed <= per_machine.len() && per_machine.len() - failed >= 2).then_some(per_machine)
        })
        .collect();

    let rows = config
        .sigma_grid
        .iter()
        .map(|&sigma| {
            let mut debouncers: Vec<Debouncer> = ids.iter().map(|_| Debouncer::new(config.debounce_n)).collect();
            let mut verdicts = Vec::with_capacity(windows.len());
            for (w, ind) in windows.iter().zip(&indicators) {
                let flags = match ind {
                    Some(per_machine) => {
                        let present: Vec<Vec<f64>> = per_machine.iter().flatten().cloned().collect();
                        let band = detection::sigma_band_baseline(&present, sigma, config.leave_one_out)?;
                        let mut it = band.faulty.into_iter();
                        per_machine.iter().map(|m| m.as_ref().map(|_| it.next().expect("one flag per machine"))).collect()
                    }
                    None => vec![None; ids.len()],
                };
                let machines = ids
                    .iter()
                    .zip(debouncers.iter_mut())
                    .zip(flags)
                    .map(|((id, deb), flag)| {
                        let (anomalous, faulty) = match flag {
                            Some(a) => (a, deb.update(a)),
                            None => {
                                deb.reset();
                                (false, false)
                            }
                        };
                        MachineVerdict {
                            machine_id: id.clone(),
                            score: None,
                            cluster: None,
                            instant_anomalous: anomalous,
                            debounced_faulty: faulty,
                        }
                    })
                    .collect();
                verdicts.push(WindowVerdict { window_index: w.window_index, skipped: ind.is_none(), machines });
            }
            Ok((sigma, evaluate(&verdicts, truth, config.debounce_n)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(detection::sweep("sigma", scenario, rows))
}

/// Contents of a configuration file; every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub scenario: ScenarioConfig,
    pub analysis: VariantConfig,
    pub baseline: BaselineConfig,
}

impl FleetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.analysis.validate()?;
        self.baseline.validate()
    }
}

/// Reads a fleet recording in the `t,<channels...>[,rpm]` layout.
///
/// Single-channel machines are named by their id; 3-axis machines use
/// `<id>:X`, `<id>:Y`, `<id>:Z`. The sample rate is inferred from `t`.
pub fn ingest_csv(path: &Path) -> Result<FleetRecording> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_error)?;
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(PipelineError::Parse { line: 1, message: "first column must be `t`".into() });
    }
    let has_rpm = header.last().map(String::as_str) == Some("rpm");
    let channel_cols = &header[1..header.len() - usize::from(has_rpm)];
    if channel_cols.is_empty() {
        return Err(PipelineError::Parse { line: 1, message: "no machine columns".into() });
    }

    // Group contiguous `<id>` / `<id>:<axis>` columns into machines.
    let mut groups: Vec<(String, usize)> = Vec::new();
    for col in channel_cols {
        let id = col.split_once(':').map_or(col.as_str(), |(id, _)| id);
        match groups.last_mut() {
            Some((last, count)) if last == id && col.contains(':') => *count += 1,
            _ => {
                if groups.iter().any(|(g, _)| g == id) {
                    return Err(PipelineError::Parse { line: 1, message: format!("machine {id} appears twice") });
                }
                groups.push((id.to_string(), 1));
            }
        }
    }
    let dim = groups[0].1;
    if groups.iter().any(|(_, d)| *d != dim) {
        return Err(PipelineError::Parse { line: 1, message: "machines have differing channel counts".into() });
    }

    let mut t = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channel_cols.len()];
    let mut rpm = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(PipelineError::RaggedColumns { line, expected: header.len(), found: record.len() });
        }
        let parse = |k: usize| -> Result<f64> {
            let raw = record[k].trim();
            let v: f64 = raw.parse().map_err(|_| PipelineError::Parse {
                line,
                message: format!("column `{}`: cannot parse {raw:?}", header[k]),
            })?;
            if !v.is_finite() {
                return Err(PipelineError::Parse { line, message: format!("column `{}`: non-finite value", header[k]) });
            }
            Ok(v)
        };
        t.push((parse(0)?, line));
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(parse(c + 1)?);
        }
        if has_rpm {
            rpm.push(parse(header.len() - 1)?);
        }
    }
    if t.len() < 2 {
        return Err(PipelineError::Data("need at least 2 samples to infer the sample rate".into()));
    }

    // The first interval sets the expected spacing so the first row that
    // breaks it is the one reported; the rate itself uses the full span.
    let (t0, _) = t[0];
    let first = t[1].0 - t0;
    if !(first > 0.0) {
        return Err(PipelineError::RateMismatch { line: t[1].1 });
    }
    for (i, &(ti, line)) in t.iter().enumerate() {
        if ((ti - t0) - i as f64 * first).abs() > 1e-6 * first {
            return Err(PipelineError::RateMismatch { line });
        }
    }
    let sample_rate = (t.len() - 1) as f64 / (t[t.len() - 1].0 - t0);
    // Prefer an integer rate when the time column was written from one.
    let sample_rate = if (sample_rate - sample_rate.round()).abs() < 1e-6 { sample_rate.round() } else { sample_rate };

    let mut machines = Vec::with_capacity(groups.len());
    let mut col = 0;
    for (id, d) in groups {
        let n = columns[col].len();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            values.extend((col..col + d).map(|c| columns[c][i]));
        }
        col += d;
        machines.push((id, Series::from_flat(values, d, sample_rate)?));
    }
    Ok(FleetRecording::new(sample_rate, machines, has_rpm.then_some(rpm))?)
}

fn csv_error(e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PipelineError::Io(io),
        other => PipelineError::Parse { line, message: format!("{other:?}") },
    }
}
