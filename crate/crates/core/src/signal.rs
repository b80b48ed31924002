//! Signal containers, normalization, windowing and spectral transforms.
//!
//! Everything here is a pure function of its inputs. A [`Series`] is
//! immutable once built, so it can be shared freely across threads.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators below this are treated as a degenerate scale.
pub const DEGENERATE_SCALE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("degenerate scale in dimension {dim} (denominator {denominator:e})")]
    DegenerateScale { dim: usize, denominator: f64 },
    #[error("window of {duration_s} s at {sample_rate} Hz holds fewer than 2 samples")]
    WindowTooShort { duration_s: f64, sample_rate: f64 },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("expected a 1-dimensional series, got dimension {0}")]
    NotScalar(usize),
    #[error("series carries no frequency-bin resolution")]
    MissingBinResolution,
    #[error("cutoff {cutoff_hz} Hz is below the bin resolution {bin_hz} Hz")]
    CutoffBelowResolution { cutoff_hz: f64, bin_hz: f64 },
    #[error("spectrum has no distinguishable peak outside DC")]
    FlatSpectrum,
    #[error("harmonic band up to {upper_hz} Hz exceeds Nyquist {nyquist_hz} Hz")]
    HarmonicOutOfRange { upper_hz: f64, nyquist_hz: f64 },
    #[error("resampling to {target_hz} Hz would not reduce the rate {sample_rate} Hz")]
    UpsamplingRequested { target_hz: f64, sample_rate: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

/// A uniformly sampled sequence of `n` vectors of dimension `m`.
///
/// Samples are stored row-major. Spectrogram-style series additionally carry
/// the frequency resolution of their dimensions in `bin_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    values: Vec<f64>,
    dim: usize,
    sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bin_hz: Option<f64>,
}

impl Series {
    pub fn from_flat(values: Vec<f64>, dim: usize, sample_rate: f64) -> Result<Self> {
        if dim == 0 {
            return Err(SignalError::InvalidSeries("dimension must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(SignalError::InvalidSeries("series must hold at least one sample".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(SignalError::InvalidSeries(format!(
                "{} values do not split into vectors of dimension {dim}",
                values.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::InvalidSeries(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFiniteInput);
        }
        Ok(Self { values, dim, sample_rate, bin_hz: None })
    }

    pub fn from_scalars(values: Vec<f64>, sample_rate: f64) -> Result<Self> {
        Self::from_flat(values, 1, sample_rate)
    }

    pub fn from_vectors(samples: &[Vec<f64>], sample_rate: f64) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        if samples.iter().any(|s| s.len() != dim) {
            return Err(SignalError::InvalidSeries("ragged sample vectors".into()));
        }
        Self::from_flat(samples.concat(), dim, sample_rate)
    }

    /// Attaches the frequency resolution of the dimensions (spectrogram frames).
    pub fn with_bin_hz(mut self, bin_hz: f64) -> Self {
        self.bin_hz = Some(bin_hz);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn bin_hz(&self) -> Option<f64> {
        self.bin_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Flat row-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// Values of one dimension as a 1-dimensional series.
    pub fn channel(&self, d: usize) -> Result<Series> {
        if d >= self.dim {
            return Err(SignalError::InvalidArgument(format!(
                "channel {d} out of range for dimension {}",
                self.dim
            )));
        }
        let values = self.frames().map(|f| f[d]).collect();
        Ok(Series { values, dim: 1, sample_rate: self.sample_rate, bin_hz: None })
    }

    /// Samples `[start, start + len)` as a new series.
    pub fn segment(&self, start: usize, len: usize) -> Result<Series> {
        if len == 0 || start + len > self.len() {
            return Err(SignalError::InvalidArgument(format!(
                "segment [{start}, {}) outside series of length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Series {
            values: self.values[start * self.dim..(start + len) * self.dim].to_vec(),
            dim: self.dim,
            sample_rate: self.sample_rate,
            bin_hz: self.bin_hz,
        })
    }

    fn map_dims<F>(&self, mut f: F) -> Result<Series>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        let mut out = vec![0.0; self.values.len()];
        for d in 0..self.dim {
            let column: Vec<f64> = self.frames().map(|fr| fr[d]).collect();
            let mapped = f(d, &column)?;
            for (i, v) in mapped.into_iter().enumerate() {
                out[i * self.dim + d] = v;
            }
        }
        Ok(Series { values: out, ..self.clone_meta() })
    }

    fn clone_meta(&self) -> Series {
        Series { values: Vec::new(), dim: self.dim, sample_rate: self.sample_rate, bin_hz: self.bin_hz }
    }
}

/// One analysis window holding an aligned series for every machine.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetWindow {
    pub window_index: usize,
    pub duration_s: f64,
    /// Machine id and its series, in fleet order.
    pub machines: Vec<(String, Series)>,
    pub speed_rpm: Option<f64>,
}

impl FleetWindow {
    pub fn new(
        window_index: usize,
        duration_s: f64,
        machines: Vec<(String, Series)>,
        speed_rpm: Option<f64>,
    ) -> Result<Self> {
        if machines.len() < 2 {
            return Err(SignalError::InvalidArgument("a fleet window needs at least 2 machines".into()));
        }
        let (_, first) = &machines[0];
        for (id, s) in &machines[1..] {
            if s.len() != first.len() || s.dim() != first.dim() || s.sample_rate() != first.sample_rate() {
                return Err(SignalError::InvalidArgument(format!(
                    "machine {id} is not aligned with the rest of the fleet"
                )));
            }
        }
        Ok(Self { window_index, duration_s, machines, speed_rpm })
    }

    pub fn machine_ids(&self) -> Vec<String> {
        self.machines.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Full-length aligned signals of a fleet, with an optional shared speed
/// channel in rpm.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetRecording {
    pub sample_rate: f64,
    pub machines: Vec<(String, Series)>,
    pub rpm: Option<Vec<f64>>,
}

impl FleetRecording {
    pub fn new(sample_rate: f64, machines: Vec<(String, Series)>, rpm: Option<Vec<f64>>) -> Result<Self> {
        let len = machines.first().map(|(_, s)| s.len()).unwrap_or(0);
        for (id, s) in &machines {
            if s.len() != len || s.sample_rate() != sample_rate {
                return Err(SignalError::InvalidArgument(format!("machine {id} is not aligned with the fleet")));
            }
        }
        if let Some(r) = &rpm {
            if r.len() != len {
                return Err(SignalError::InvalidArgument("speed channel length differs from the signals".into()));
            }
        }
        Ok(Self { sample_rate, machines, rpm })
    }

    /// Samples per machine.
    pub fn len(&self) -> usize {
        self.machines.first().map(|(_, s)| s.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn machine_ids(&self) -> Vec<String> {
        self.machines.iter().map(|(id, _)| id.clone()).collect()
    }

    /// Non-overlapping analysis windows; each carries the mean speed over
    /// its span when a speed channel is present.
    pub fn windows(&self, duration_s: f64) -> Result<Vec<FleetWindow>> {
        let len = window_len(duration_s, self.sample_rate)?;
        let count = self.len() / len;
        (0..count)
            .map(|w| {
                let machines = self
                    .machines
                    .iter()
                    .map(|(id, s)| Ok((id.clone(), s.segment(w * len, len)?)))
                    .collect::<Result<Vec<_>>>()?;
                let speed_rpm =
                    self.rpm.as_ref().map(|r| r[w * len..(w + 1) * len].iter().sum::<f64>() / len as f64);
                FleetWindow::new(w, duration_s, machines, speed_rpm)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Minmax,
    Zscore,
    Percentile,
}

/// Percentile of `sorted` (ascending) by linear interpolation between order
/// statistics, `p` in [0, 100].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Scales a single column of values. Shared by per-series and fleet-wise
/// normalization.
pub fn normalize_column(values: &[f64], mode: NormMode, dim: usize) -> Result<Vec<f64>> {
    let n = values.len() as f64;
    let (center, scale) = match mode {
        NormMode::Minmax => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min, max - min)
        }
        NormMode::Zscore => {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        }
        NormMode::Percentile => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = percentile_sorted(&sorted, 50.0);
            (median, percentile_sorted(&sorted, 75.0) - percentile_sorted(&sorted, 25.0))
        }
    };
    if !(scale >= DEGENERATE_SCALE_EPS) {
        return Err(SignalError::DegenerateScale { dim, denominator: scale });
    }
    Ok(values.iter().map(|v| (v - center) / scale).collect())
}

/// Normalizes every dimension independently.
pub fn normalize(series: &Series, mode: NormMode) -> Result<Series> {
    series.map_dims(|d, column| normalize_column(column, mode, d))
}

/// Min-max scaling over all values of the series jointly, keeping the
/// relative level of the dimensions.
pub fn normalize_minmax_joint(series: &Series) -> Result<Series> {
    let scaled = normalize_column(series.values(), NormMode::Minmax, 0)?;
    Ok(Series { values: scaled, ..series.clone_meta() })
}

fn window_len(duration_s: f64, sample_rate: f64) -> Result<usize> {
    let len = (duration_s * sample_rate).round();
    if !(len >= 2.0) {
        return Err(SignalError::WindowTooShort { duration_s, sample_rate });
    }
    Ok(len as usize)
}

/// Consecutive non-overlapping windows; a trailing partial window is dropped.
pub fn split_windows(stream: &Series, duration_s: f64) -> Result<Vec<Series>> {
    let len = window_len(duration_s, stream.sample_rate())?;
    (0..stream.len() / len).map(|w| stream.segment(w * len, len)).collect()
}

/// Single-sided amplitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub amplitudes: Vec<f64>,
    pub bin_hz: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        (self.amplitudes.len() - 1) as f64 * self.bin_hz
    }
}

/// Scale from a raw DFT magnitude to the amplitude of the sinusoid it
/// represents: `1/n` for DC and the Nyquist bin, `2/n` elsewhere.
pub fn amplitude_scale(bin: usize, n: usize) -> f64 {
    if bin == 0 || (n.is_multiple_of(2) && bin == n / 2) {
        1.0 / n as f64
    } else {
        2.0 / n as f64
    }
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

fn magnitudes_with(fft: &dyn Fft<f64>, samples: &[f64], scratch: &mut Vec<Complex<f64>>) -> Vec<f64> {
    let n = samples.len();
    scratch.clear();
    scratch.extend(samples.iter().map(|&v| Complex::new(v, 0.0)));
    fft.process(scratch);
    (0..=n / 2).map(|k| scratch[k].norm() * amplitude_scale(k, n)).collect()
}

/// One-sided amplitude spectrum with a rectangular window; any length `n`.
///
/// Bin `k` holds the amplitude of a sinusoid at `k * sample_rate / n` Hz, so
/// a pure tone of amplitude `a` on an exact bin reads `a`.
pub fn fft_magnitude(series: &Series) -> Result<Spectrum> {
    if series.dim() != 1 {
        return Err(SignalError::NotScalar(series.dim()));
    }
    if series.values().iter().any(|v| !v.is_finite()) {
        return Err(SignalError::NonFiniteInput);
    }
    let n = series.len();
    let fft = plan(n);
    let amplitudes = magnitudes_with(fft.as_ref(), series.values(), &mut Vec::with_capacity(n));
    Ok(Spectrum { amplitudes, bin_hz: series.sample_rate() / n as f64 })
}

pub fn log_scale(spectrum: &Spectrum, floor: f64) -> Result<Spectrum> {
    if !(floor > 0.0) {
        return Err(SignalError::InvalidArgument(format!("log floor must be positive, got {floor}")));
    }
    Ok(Spectrum {
        amplitudes: spectrum.amplitudes.iter().map(|a| a.max(floor).log10()).collect(),
        bin_hz: spectrum.bin_hz,
    })
}

/// Element-wise `log10(max(v, floor))` of a spectrogram-style series.
pub fn log_scale_series(series: &Series, floor: f64) -> Result<Series> {
    if !(floor > 0.0) {
        return Err(SignalError::InvalidArgument(format!("log floor must be positive, got {floor}")));
    }
    Ok(Series {
        values: series.values().iter().map(|a| a.max(floor).log10()).collect(),
        ..series.clone_meta()
    })
}

/// Non-overlapping frame spectra. Each output sample is the amplitude
/// spectrum of one frame; the output rate is the frame rate.
pub fn spectrogram(series: &Series, frame_s: f64) -> Result<Series> {
    if series.dim() != 1 {
        return Err(SignalError::NotScalar(series.dim()));
    }
    let len = window_len(frame_s, series.sample_rate())?;
    let frames = series.len() / len;
    if frames == 0 {
        return Err(SignalError::WindowTooShort { duration_s: frame_s, sample_rate: series.sample_rate() });
    }
    let fft = plan(len);
    let mut scratch = Vec::with_capacity(len);
    let bins = len / 2 + 1;
    let mut values = Vec::with_capacity(frames * bins);
    for chunk in series.values().chunks_exact(len) {
        values.extend(magnitudes_with(fft.as_ref(), chunk, &mut scratch));
    }
    let rate = series.sample_rate() / len as f64;
    Ok(Series::from_flat(values, bins, rate)?.with_bin_hz(rate))
}

/// Drops every frequency dimension above `cutoff_hz`.
pub fn lowpass_truncate(spec_series: &Series, cutoff_hz: f64) -> Result<Series> {
    let bin_hz = spec_series.bin_hz().ok_or(SignalError::MissingBinResolution)?;
    if cutoff_hz < bin_hz {
        return Err(SignalError::CutoffBelowResolution { cutoff_hz, bin_hz });
    }
    let keep = ((cutoff_hz / bin_hz) * (1.0 + 1e-12)).floor() as usize + 1;
    let keep = keep.min(spec_series.dim());
    if keep == spec_series.dim() {
        return Ok(spec_series.clone());
    }
    let values = spec_series.frames().flat_map(|f| f[..keep].iter().copied()).collect();
    Ok(Series::from_flat(values, keep, spec_series.sample_rate())?.with_bin_hz(bin_hz))
}

/// Frequency of the highest non-DC bin.
pub fn estimate_fundamental(spectrum: &Spectrum) -> Result<f64> {
    let ac = spectrum.amplitudes.get(1..).unwrap_or(&[]);
    let first = *ac.first().ok_or(SignalError::FlatSpectrum)?;
    if ac.iter().all(|&a| a == first) {
        return Err(SignalError::FlatSpectrum);
    }
    // First maximum wins on ties.
    let (idx, _) = ac
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &a)| if a > best.1 { (i, a) } else { best });
    Ok(spectrum.frequency(idx + 1))
}

/// Maximum amplitude in the band `k·f0 ± half_window_hz`.
///
/// When the band is narrower than one bin the nearest bin is used.
pub fn harmonic_amplitude(spectrum: &Spectrum, fundamental_hz: f64, k: u32, half_window_hz: f64) -> Result<f64> {
    if k == 0 || !(fundamental_hz > 0.0) || half_window_hz < 0.0 {
        return Err(SignalError::InvalidArgument(format!(
            "harmonic {k} of {fundamental_hz} Hz with half window {half_window_hz} Hz"
        )));
    }
    let center = k as f64 * fundamental_hz;
    let upper = center + half_window_hz;
    let nyquist = spectrum.nyquist_hz();
    if upper > nyquist * (1.0 + 1e-12) {
        return Err(SignalError::HarmonicOutOfRange { upper_hz: upper, nyquist_hz: nyquist });
    }
    let lo = ((center - half_window_hz) / spectrum.bin_hz).ceil().max(0.0) as usize;
    let hi = ((upper / spectrum.bin_hz).floor() as usize).min(spectrum.amplitudes.len() - 1);
    if lo > hi {
        let nearest = ((center / spectrum.bin_hz).round() as usize).min(spectrum.amplitudes.len() - 1);
        return Ok(spectrum.amplitudes[nearest]);
    }
    Ok(spectrum.amplitudes[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Linear-interpolation resampling to `samples_per_period` samples per
/// period of `fundamental_hz`. No anti-alias filter is applied.
pub fn downsample_per_period(series: &Series, fundamental_hz: f64, samples_per_period: usize) -> Result<Series> {
    if series.dim() != 1 {
        return Err(SignalError::NotScalar(series.dim()));
    }
    if samples_per_period == 0 || !(fundamental_hz > 0.0) {
        return Err(SignalError::InvalidArgument(format!(
            "cannot resample to {samples_per_period} samples per period of {fundamental_hz} Hz"
        )));
    }
    let target_hz = fundamental_hz * samples_per_period as f64;
    if !(series.sample_rate() > target_hz) {
        return Err(SignalError::UpsamplingRequested { target_hz, sample_rate: series.sample_rate() });
    }
    let x = series.values();
    let ratio = series.sample_rate() / target_hz;
    let last = (x.len() - 1) as f64;
    let count = (last / ratio + 1e-9).floor() as usize + 1;
    let values = (0..count)
        .map(|k| {
            let pos = (k as f64 * ratio).min(last);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 || i + 1 >= x.len() {
                x[i]
            } else {
                x[i] + (x[i + 1] - x[i]) * frac
            }
        })
        .collect();
    Series::from_scalars(values, target_hz)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn tone(freqs: &[(f64, f64)], seconds: f64, rate: f64) -> Series {
        let n = (seconds * rate).round() as usize;
        let v = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                freqs.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum()
            })
            .collect();
        Series::from_scalars(v, rate).unwrap()
    }

    #[test]
    fn series_rejects_bad_input() {
        assert!(Series::from_scalars(vec![], 1.0).is_err());
        assert!(Series::from_scalars(vec![1.0], 0.0).is_err());
        assert_eq!(Series::from_scalars(vec![f64::NAN], 1.0), Err(SignalError::NonFiniteInput));
        assert!(Series::from_flat(vec![1.0, 2.0, 3.0], 2, 1.0).is_err());
    }

    #[test]
    fn minmax_simple() {
        let s = Series::from_scalars(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(normalize(&s, NormMode::Minmax).unwrap().values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn zscore_constant_is_degenerate() {
        let s = Series::from_scalars(vec![5.0, 5.0, 5.0], 1.0).unwrap();
        assert!(matches!(normalize(&s, NormMode::Zscore), Err(SignalError::DegenerateScale { dim: 0, .. })));
    }

    #[test]
    fn zscore_moments() {
        let s = Series::from_scalars(vec![1.0, 4.0, 2.0, 8.0, -3.0], 1.0).unwrap();
        let z = normalize(&s, NormMode::Zscore).unwrap();
        let mean = z.values().iter().sum::<f64>() / 5.0;
        let var = z.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_per_dimension() {
        let s = Series::from_vectors(&[vec![0.0, 10.0], vec![1.0, 30.0], vec![2.0, 20.0]], 1.0).unwrap();
        let n = normalize(&s, NormMode::Minmax).unwrap();
        assert_eq!(n.values(), &[0.0, 0.0, 0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn split_windows_arithmetic() {
        let s = Series::from_scalars(vec![0.0; 100], 100.0).unwrap();
        let w = split_windows(&s, 0.5).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|s| s.len() == 50));

        let s = Series::from_scalars(vec![0.0; 49], 100.0).unwrap();
        assert!(split_windows(&s, 0.5).unwrap().is_empty());

        let s = Series::from_scalars(vec![0.0; 32000], 25600.0).unwrap();
        let w = split_windows(&s, 0.5).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|s| s.len() == 12800));

        assert!(matches!(split_windows(&s, 1e-6), Err(SignalError::WindowTooShort { .. })));
    }

    #[test]
    fn fft_pure_tone() {
        let spec = fft_magnitude(&tone(&[(50.0, 1.0)], 1.0, 1000.0)).unwrap();
        assert_eq!(spec.amplitudes.len(), 501);
        assert_eq!(spec.bin_hz, 1.0);
        let peak = spec.amplitudes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(peak.0, 50);
        assert!((peak.1 - 1.0).abs() < 1e-9);
        assert!(spec.amplitudes.iter().enumerate().filter(|(k, _)| *k != 50).all(|(_, a)| *a < 1e-9));
    }

    #[test]
    fn fft_zeros_and_non_scalar() {
        let spec = fft_magnitude(&Series::from_scalars(vec![0.0; 17], 10.0).unwrap()).unwrap();
        assert_eq!(spec.amplitudes.len(), 9);
        assert!(spec.amplitudes.iter().all(|&a| a == 0.0));
        let two_d = Series::from_flat(vec![0.0; 4], 2, 1.0).unwrap();
        assert_eq!(fft_magnitude(&two_d), Err(SignalError::NotScalar(2)));
    }

    #[test]
    fn log_scale_examples() {
        let s = Spectrum { amplitudes: vec![1.0, 10.0, 100.0], bin_hz: 1.0 };
        assert_eq!(log_scale(&s, 1e-12).unwrap().amplitudes, vec![0.0, 1.0, 2.0]);
        let z = Spectrum { amplitudes: vec![0.0], bin_hz: 1.0 };
        assert_eq!(log_scale(&z, 1e-12).unwrap().amplitudes, vec![-12.0]);
        assert!(log_scale(&z, 0.0).is_err());
    }

    #[test]
    fn spectrogram_frame_count_and_tone() {
        let s = tone(&[(100.0, 1.0)], 0.5, 12800.0);
        let sg = spectrogram(&s, 0.05).unwrap();
        assert_eq!(sg.len(), 10);
        assert_eq!(sg.dim(), 321);
        assert_eq!(sg.bin_hz(), Some(20.0));
        for f in sg.frames() {
            let arg = f.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(arg, 5);
        }
    }

    #[test]
    fn spectrogram_chirp_argmax_increases() {
        let rate = 12800.0;
        let v: Vec<f64> = (0..6400)
            .map(|i| {
                let t = i as f64 / rate;
                // 100 Hz -> 1100 Hz linear sweep over 0.5 s
                (2.0 * PI * (100.0 * t + 1000.0 * t * t)).sin()
            })
            .collect();
        let sg = spectrogram(&Series::from_scalars(v, rate).unwrap(), 0.05).unwrap();
        let argmax: Vec<usize> = sg
            .frames()
            .map(|f| f.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0)
            .collect();
        assert!(argmax.windows(2).all(|w| w[1] > w[0]), "{argmax:?}");
    }

    #[test]
    fn lowpass_truncate_examples() {
        // bins every 20 Hz up to 640 Hz
        let sg = Series::from_flat(vec![1.0; 33 * 2], 33, 20.0).unwrap().with_bin_hz(20.0);
        assert_eq!(lowpass_truncate(&sg, 200.0).unwrap().dim(), 11);
        assert_eq!(lowpass_truncate(&sg, 640.0).unwrap(), sg);
        assert_eq!(lowpass_truncate(&sg, 5000.0).unwrap(), sg);
        assert!(matches!(lowpass_truncate(&sg, 10.0), Err(SignalError::CutoffBelowResolution { .. })));
        let plain = Series::from_flat(vec![1.0; 4], 2, 1.0).unwrap();
        assert_eq!(lowpass_truncate(&plain, 10.0), Err(SignalError::MissingBinResolution));
    }

    #[test]
    fn fundamental_examples() {
        let spec = fft_magnitude(&tone(&[(50.0, 1.0)], 1.0, 1000.0)).unwrap();
        assert!((estimate_fundamental(&spec).unwrap() - 50.0).abs() <= spec.bin_hz / 2.0);

        let spec = fft_magnitude(&tone(&[(50.0, 1.0), (150.0, 0.2)], 1.0, 1000.0)).unwrap();
        assert_eq!(estimate_fundamental(&spec).unwrap(), 50.0);

        let mut s = tone(&[(50.0, 1.0)], 1.0, 1000.0).values().to_vec();
        s.iter_mut().for_each(|v| *v += 10.0);
        let spec = fft_magnitude(&Series::from_scalars(s, 1000.0).unwrap()).unwrap();
        assert_eq!(estimate_fundamental(&spec).unwrap(), 50.0);

        let flat = Spectrum { amplitudes: vec![3.0, 1.0, 1.0, 1.0], bin_hz: 1.0 };
        assert_eq!(estimate_fundamental(&flat), Err(SignalError::FlatSpectrum));
        let dc_only = Spectrum { amplitudes: vec![3.0], bin_hz: 1.0 };
        assert_eq!(estimate_fundamental(&dc_only), Err(SignalError::FlatSpectrum));
    }

    #[test]
    fn harmonic_amplitude_examples() {
        let pure = fft_magnitude(&tone(&[(50.0, 1.0)], 0.5, 25600.0)).unwrap();
        let h1 = harmonic_amplitude(&pure, 50.0, 1, 5.0).unwrap();
        assert!((h1 - 1.0).abs() < 0.05);
        let h3 = harmonic_amplitude(&pure, 50.0, 3, 5.0).unwrap();
        assert!(h3 < h1);
        assert!(h3 < 1e-9);

        assert!(matches!(
            harmonic_amplitude(&pure, 50.0, 300, 5.0),
            Err(SignalError::HarmonicOutOfRange { .. })
        ));
    }

    #[test]
    fn harmonic_amplitude_narrow_band_uses_nearest_bin() {
        let spec = Spectrum { amplitudes: vec![0.0, 1.0, 5.0, 2.0, 0.0], bin_hz: 2.0 };
        assert_eq!(harmonic_amplitude(&spec, 4.1, 1, 0.1).unwrap(), 5.0);
    }

    #[test]
    fn downsample_counts_and_constants() {
        let s = tone(&[(50.0, 1.0)], 0.5, 25600.0);
        let d = downsample_per_period(&s, 50.0, 50).unwrap();
        assert_eq!(d.len(), 1250);
        assert_eq!(d.sample_rate(), 2500.0);

        let c = Series::from_scalars(vec![3.5; 1000], 1000.0).unwrap();
        let d = downsample_per_period(&c, 2.0, 50).unwrap();
        assert!(d.values().iter().all(|&v| v == 3.5));

        assert!(matches!(
            downsample_per_period(&c, 20.0, 50),
            Err(SignalError::UpsamplingRequested { .. })
        ));
    }

    #[test]
    fn channel_and_segment() {
        let s = Series::from_vectors(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], 2.0).unwrap();
        assert_eq!(s.channel(1).unwrap().values(), &[2.0, 4.0, 6.0]);
        assert_eq!(s.segment(1, 2).unwrap().values(), &[3.0, 4.0, 5.0, 6.0]);
        assert!(s.segment(2, 2).is_err());
        assert!(s.channel(2).is_err());
    }
}
