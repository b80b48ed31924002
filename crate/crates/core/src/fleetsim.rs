//! Synthetic fleet generator: stator-current and 3-axis vibration signals of
//! similar machines, some of them carrying a voltage-unbalance signature.
//!
//! All amplitudes and gains are synthetic defaults. They are tuned so that
//! the healthy fleet's amplitude spread exceeds the fault's effect on raw
//! amplitudes, while the harmonic content stays separable below the
//! flux-weakening speed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{FleetRecording, Series};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    #[default]
    Current,
    Vibration,
}

impl SignalKind {
    pub fn default_sample_rate(self) -> f64 {
        match self {
            SignalKind::Current => 25600.0,
            SignalKind::Vibration => 12800.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Stationary { rpm: f64 },
    /// Linear ramp from `rpm_start` to `rpm_end` over `duration_s`, then held.
    Runup { rpm_start: f64, rpm_end: f64, duration_s: f64 },
}

impl SpeedProfile {
    pub fn rpm_at(&self, t: f64) -> f64 {
        match *self {
            SpeedProfile::Stationary { rpm } => rpm,
            SpeedProfile::Runup { rpm_start, rpm_end, duration_s } => {
                rpm_start + (rpm_end - rpm_start) * (t / duration_s).clamp(0.0, 1.0)
            }
        }
    }

    /// Integral of the speed in revolutions-per-minute-seconds, `∫₀ᵗ rpm dt`.
    fn rpm_integral(&self, t: f64) -> f64 {
        match *self {
            SpeedProfile::Stationary { rpm } => rpm * t,
            SpeedProfile::Runup { rpm_start, rpm_end, duration_s } => {
                let ramp_t = t.min(duration_s);
                let slope = (rpm_end - rpm_start) / duration_s;
                rpm_start * ramp_t + 0.5 * slope * ramp_t * ramp_t + rpm_end * (t - ramp_t).max(0.0)
            }
        }
    }

    fn max_rpm(&self) -> f64 {
        match *self {
            SpeedProfile::Stationary { rpm } => rpm,
            SpeedProfile::Runup { rpm_start, rpm_end, .. } => rpm_start.max(rpm_end),
        }
    }
}

/// Speed range over which the third-harmonic fault signature fades out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluxWeakening {
    pub enabled: bool,
    pub onset_rpm: f64,
    pub zero_rpm: f64,
}

impl Default for FluxWeakening {
    fn default() -> Self {
        Self { enabled: true, onset_rpm: 1385.0, zero_rpm: 1420.0 }
    }
}

impl FluxWeakening {
    /// 1 below onset, 0 above the zero speed, linear in between.
    pub fn taper(&self, rpm: f64) -> f64 {
        if !self.enabled || rpm <= self.onset_rpm {
            1.0
        } else if rpm >= self.zero_rpm {
            0.0
        } else {
            (self.zero_rpm - rpm) / (self.zero_rpm - self.onset_rpm)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub signal: SignalKind,
    pub machine_count: usize,
    pub faulty_ids: Vec<String>,
    pub speed_profile: SpeedProfile,
    pub load: bool,
    pub pole_pairs: u32,
    /// Defaults to 25600 Hz for current and 12800 Hz for vibration.
    pub sample_rate: Option<f64>,
    pub duration_s: f64,
    /// White Gaussian noise standard deviation relative to the base amplitude.
    pub noise_level: f64,
    /// Base amplitude of the fundamental (current) or scale of all
    /// harmonics (vibration).
    pub amplitude: f64,
    /// Per-machine amplitudes are drawn from `amplitude · [1 − spread, 1 + spread]`.
    pub amplitude_spread: f64,
    /// Third-harmonic to fundamental ratio of faulty machines.
    pub fault_gain: f64,
    /// Third-harmonic to fundamental ratio of healthy machines.
    pub residual_h3: f64,
    /// Relative jitter of the vibration harmonic amplitudes.
    pub vibration_jitter: f64,
    /// Range of the multiplicative fault gains on vibration harmonics 3–6.
    pub vibration_gain_range: (f64, f64),
    pub flux_weakening: FluxWeakening,
    /// Optional per-machine speed deviation in rpm.
    pub speed_offsets: BTreeMap<String, f64>,
    /// Optional per-machine amplitude factor replacing the random spread draw.
    pub amplitude_overrides: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            signal: SignalKind::Current,
            machine_count: 10,
            faulty_ids: vec!["M02".into(), "M10".into()],
            speed_profile: SpeedProfile::Stationary { rpm: 820.0 },
            load: true,
            pole_pairs: 2,
            sample_rate: None,
            duration_s: 30.0,
            noise_level: 0.01,
            amplitude: 1.0,
            amplitude_spread: 0.2,
            fault_gain: 0.15,
            residual_h3: 0.02,
            vibration_jitter: 0.2,
            vibration_gain_range: (1.5, 3.0),
            flux_weakening: FluxWeakening::default(),
            speed_offsets: BTreeMap::new(),
            amplitude_overrides: BTreeMap::new(),
            seed: 0,
        }
    }
}

/// Nominal vibration harmonic amplitudes for harmonics 1–6.
const VIBRATION_HARMONICS: [f64; 6] = [1.0, 0.8, 0.35, 0.3, 0.2, 0.15];
/// Relative response of the X, Y and Z axes.
const AXIS_SCALE: [f64; 3] = [1.0, 0.8, 0.6];
pub const AXES: [&str; 3] = ["X", "Y", "Z"];

const LOAD_AMPLITUDE_GAIN: f64 = 1.25;
const UNLOADED_VIBRATION_NOISE_GAIN: f64 = 3.0;

impl ScenarioConfig {
    /// A fleet whose absolute third-harmonic level is dominated by machine
    /// amplitude: both faulty machines run at low amplitude and two healthy
    /// ones at high amplitude, so a healthy machine can carry a larger
    /// absolute third harmonic than a faulty one.
    pub fn amplitude_confounded() -> Self {
        Self {
            amplitude_spread: 0.5,
            fault_gain: 0.07,
            amplitude_overrides: [("M02", 0.5), ("M10", 0.55), ("M05", 1.6), ("M07", 1.5)]
                .into_iter()
                .map(|(id, f)| (id.to_string(), f))
                .collect(),
            ..Self::default()
        }
    }

    pub fn machine_ids(&self) -> Vec<String> {
        (1..=self.machine_count).map(|i| format!("M{i:02}")).collect()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate.unwrap_or_else(|| self.signal.default_sample_rate())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.machine_count < 2 {
            return bad(format!("need at least 2 machines, got {}", self.machine_count));
        }
        let ids = self.machine_ids();
        for f in &self.faulty_ids {
            if !ids.contains(f) {
                return bad(format!("faulty id {f} is not a machine of this fleet"));
            }
        }
        let mut unique = self.faulty_ids.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != self.faulty_ids.len() {
            return bad("faulty ids contain duplicates".into());
        }
        if 2 * self.faulty_ids.len() >= self.machine_count {
            return bad(format!(
                "{} faulty machines out of {} breaks the healthy-majority assumption",
                self.faulty_ids.len(),
                self.machine_count
            ));
        }
        if self.flux_weakening.onset_rpm >= self.flux_weakening.zero_rpm {
            return bad("flux weakening onset must be below its zero speed".into());
        }
        if !(self.sample_rate() > 0.0 && self.duration_s > 0.0 && self.amplitude > 0.0) {
            return bad("sample rate, duration and amplitude must be positive".into());
        }
        if !(0.0..1.0).contains(&self.amplitude_spread) || !(0.0..1.0).contains(&self.vibration_jitter) {
            return bad("amplitude spread and vibration jitter must lie in [0, 1)".into());
        }
        if self.noise_level < 0.0 || self.fault_gain < 0.0 || self.residual_h3 < 0.0 {
            return bad("noise level and harmonic ratios must be non-negative".into());
        }
        let (glo, ghi) = self.vibration_gain_range;
        if !(glo >= 1.0 && ghi >= glo) {
            return bad("vibration gain range must satisfy 1 <= low <= high".into());
        }
        if self.pole_pairs == 0 {
            return bad("pole pairs must be positive".into());
        }
        for (id, factor) in &self.amplitude_overrides {
            if !ids.contains(id) {
                return bad(format!("amplitude override for unknown machine {id}"));
            }
            if !(*factor > 0.0 && factor.is_finite()) {
                return bad(format!("amplitude override for {id} must be positive"));
            }
        }
        match self.speed_profile {
            SpeedProfile::Stationary { rpm } if rpm < 0.0 => bad("speed must be non-negative".into()),
            SpeedProfile::Runup { rpm_start, rpm_end, duration_s }
                if rpm_start < 0.0 || rpm_end < 0.0 || !(duration_s > 0.0) =>
            {
                bad("run-up needs non-negative speeds and a positive duration".into())
            }
            _ => Ok(()),
        }?;
        let f_max = speed_to_fundamental(self.speed_profile.max_rpm(), self.pole_pairs);
        let top = if self.signal == SignalKind::Current { 3.0 } else { 6.0 };
        if top * f_max >= self.sample_rate() / 2.0 {
            return bad("highest synthesized harmonic exceeds Nyquist".into());
        }
        Ok(())
    }

    fn amplitude_scale(&self) -> f64 {
        if self.load {
            LOAD_AMPLITUDE_GAIN
        } else {
            1.0
        }
    }
}

/// Per-machine health labels, constant over a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<(String, bool)>,
}

impl GroundTruth {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            labels: config.machine_ids().into_iter().map(|id| {
                let faulty = config.faulty_ids.contains(&id);
                (id, faulty)
            }).collect(),
        }
    }

    pub fn is_faulty(&self, id: &str) -> Option<bool> {
        self.labels.iter().find(|(m, _)| m == id).map(|(_, f)| *f)
    }
}

/// `pole_pairs · rpm / 60`.
pub fn speed_to_fundamental(rpm: f64, pole_pairs: u32) -> f64 {
    pole_pairs as f64 * rpm / 60.0
}

/// Independent random stream for one machine, so machines can be generated
/// in any order with identical results.
fn machine_rng(seed: u64, machine: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(machine as u64 + 1);
    rng
}

struct Timeline {
    rpm: Vec<f64>,
    /// Electrical phase 2π·∫f dt per sample.
    phase: Vec<f64>,
}

fn timeline(config: &ScenarioConfig, offset_rpm: f64) -> Timeline {
    let fs = config.sample_rate();
    let n = (config.duration_s * fs).round() as usize;
    let pp = config.pole_pairs as f64;
    let mut rpm = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        rpm.push(config.speed_profile.rpm_at(t) + offset_rpm);
        phase.push(2.0 * PI * pp / 60.0 * (config.speed_profile.rpm_integral(t) + offset_rpm * t));
    }
    Timeline { rpm, phase }
}

fn common_rpm(config: &ScenarioConfig) -> Vec<f64> {
    let fs = config.sample_rate();
    let n = (config.duration_s * fs).round() as usize;
    (0..n).map(|i| config.speed_profile.rpm_at(i as f64 / fs)).collect()
}

fn amplitude_draw(rng: &mut ChaCha8Rng, base: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        base
    } else {
        base * rng.random_range(1.0 - spread..=1.0 + spread)
    }
}

/// Stator current of every machine plus the shared speed channel.
pub fn generate_current(config: &ScenarioConfig) -> Result<(FleetRecording, GroundTruth)> {
    let mut config = config.clone();
    config.signal = SignalKind::Current;
    config.validate()?;
    let fs = config.sample_rate();
    let truth = GroundTruth::from_config(&config);
    let noise_sd = config.noise_level * config.amplitude;

    let mut machines = Vec::with_capacity(config.machine_count);
    for (i, (id, faulty)) in truth.labels.iter().enumerate() {
        let mut rng = machine_rng(config.seed, i);
        // The draw is taken even when overridden so the remaining stream is unchanged.
        let drawn = amplitude_draw(&mut rng, config.amplitude, config.amplitude_spread);
        let amp = config.amplitude_overrides.get(id).map_or(drawn, |f| config.amplitude * f) * config.amplitude_scale();
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let offset = config.speed_offsets.get(id).copied().unwrap_or(0.0);
        let tl = timeline(&config, offset);
        let values = tl
            .phase
            .iter()
            .zip(&tl.rpm)
            .map(|(&theta, &rpm)| {
                let h3 = if *faulty {
                    config.residual_h3 + config.flux_weakening.taper(rpm) * (config.fault_gain - config.residual_h3)
                } else {
                    config.residual_h3
                };
                let noise: f64 = rng.sample(StandardNormal);
                amp * ((theta + phi).sin() + h3 * (3.0 * (theta + phi)).sin()) + noise_sd * noise
            })
            .collect();
        machines.push((id.clone(), Series::from_scalars(values, fs).expect("finite synthesized samples")));
    }
    let recording = FleetRecording::new(fs, machines, Some(common_rpm(&config))).expect("aligned synthesized fleet");
    Ok((recording, truth))
}

/// Per-machine fault pattern on vibration harmonics 3–6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibrationFault {
    /// Amplified harmonic orders, ascending.
    pub harmonics: Vec<u32>,
    /// Gain per axis for each amplified harmonic, `gains[axis][h]`.
    pub gains: Vec<Vec<f64>>,
}

/// Randomized parameters drawn for one machine's vibration signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibrationMachine {
    /// `amplitudes[axis][k-1]` for harmonic `k`, before fault gains.
    pub amplitudes: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
    pub fault: Option<VibrationFault>,
}

fn draw_vibration_machine(config: &ScenarioConfig, id: &str, faulty: bool, rng: &mut ChaCha8Rng) -> VibrationMachine {
    let factor = config.amplitude_overrides.get(id).copied().unwrap_or(1.0);
    let scale = config.amplitude * factor * config.amplitude_scale();
    let amplitudes = AXIS_SCALE
        .iter()
        .map(|axis| {
            VIBRATION_HARMONICS.iter().map(|h| amplitude_draw(rng, scale * axis * h, config.vibration_jitter)).collect()
        })
        .collect();
    let phases = (0..3).map(|_| (0..6).map(|_| rng.random_range(0.0..2.0 * PI)).collect()).collect();
    let fault = faulty.then(|| {
        let mut orders = [3u32, 4, 5, 6];
        orders.shuffle(rng);
        let count = rng.random_range(2..=4);
        let mut harmonics = orders[..count].to_vec();
        harmonics.sort_unstable();
        let (lo, hi) = config.vibration_gain_range;
        let gains =
            (0..3).map(|_| harmonics.iter().map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect()).collect();
        VibrationFault { harmonics, gains }
    });
    VibrationMachine { amplitudes, phases, fault }
}

/// Parameters each machine's vibration is synthesized from; the same draws
/// [`generate_vibration`] uses.
pub fn vibration_parameters(config: &ScenarioConfig) -> Vec<VibrationMachine> {
    let truth = GroundTruth::from_config(config);
    truth
        .labels
        .iter()
        .enumerate()
        .map(|(i, (id, faulty))| draw_vibration_machine(config, id, *faulty, &mut machine_rng(config.seed, i)))
        .collect()
}

/// 3-axis acceleration of every machine (series of dimension 3, axes X, Y, Z).
pub fn generate_vibration(config: &ScenarioConfig) -> Result<(FleetRecording, GroundTruth)> {
    let mut config = config.clone();
    config.signal = SignalKind::Vibration;
    config.validate()?;
    let fs = config.sample_rate();
    let truth = GroundTruth::from_config(&config);
    let noise_gain = if config.load { 1.0 } else { UNLOADED_VIBRATION_NOISE_GAIN };
    let noise_sd = config.noise_level * config.amplitude * noise_gain;

    let mut machines = Vec::with_capacity(config.machine_count);
    for (i, (id, faulty)) in truth.labels.iter().enumerate() {
        let mut rng = machine_rng(config.seed, i);
        let params = draw_vibration_machine(&config, id, *faulty, &mut rng);
        let offset = config.speed_offsets.get(id).copied().unwrap_or(0.0);
        let tl = timeline(&config, offset);
        let mut values = Vec::with_capacity(tl.phase.len() * 3);
        for (&theta, &rpm) in tl.phase.iter().zip(&tl.rpm) {
            let taper = config.flux_weakening.taper(rpm);
            for axis in 0..3 {
                let mut v = 0.0;
                for k in 1..=6u32 {
                    let mut amp = params.amplitudes[axis][k as usize - 1];
                    if let Some(fault) = &params.fault {
                        if let Some(h) = fault.harmonics.iter().position(|&o| o == k) {
                            amp *= 1.0 + taper * (fault.gains[axis][h] - 1.0);
                        }
                    }
                    v += amp * (k as f64 * theta + params.phases[axis][k as usize - 1]).sin();
                }
                let noise: f64 = rng.sample(StandardNormal);
                values.push(v + noise_sd * noise);
            }
        }
        machines.push((id.clone(), Series::from_flat(values, 3, fs).expect("finite synthesized samples")));
    }
    let recording = FleetRecording::new(fs, machines, Some(common_rpm(&config))).expect("aligned synthesized fleet");
    Ok((recording, truth))
}

pub fn generate(config: &ScenarioConfig) -> Result<(FleetRecording, GroundTruth)> {
    match config.signal {
        SignalKind::Current => generate_current(config),
        SignalKind::Vibration => generate_vibration(config),
    }
}

/// Column name of one channel: the machine id for 1-channel machines,
/// `<id>:X|Y|Z` for 3-axis machines.
pub fn channel_name(id: &str, dim: usize, channel: usize) -> String {
    if dim == 1 {
        id.to_string()
    } else if dim == 3 {
        format!("{id}:{}", AXES[channel])
    } else {
        format!("{id}:{channel}")
    }
}

/// Writes the recording as `t,<channels...>[,rpm]`, one row per sample.
/// Values use the shortest representation that parses back exactly.
pub fn export_csv(recording: &FleetRecording, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for (id, s) in &recording.machines {
        header.extend((0..s.dim()).map(|c| channel_name(id, s.dim(), c)));
    }
    if recording.rpm.is_some() {
        header.push("rpm".into());
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..recording.len() {
        row.clear();
        row.push(format!("{:?}", i as f64 / recording.sample_rate));
        for (_, s) in &recording.machines {
            row.extend(s.frame(i).iter().map(|v| format!("{v:?}")));
        }
        if let Some(rpm) = &recording.rpm {
            row.push(format!("{:?}", rpm[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Scenario description stored next to an exported recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSidecar {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
}

pub fn write_sidecar(config: &ScenarioConfig, truth: &GroundTruth, path: &Path) -> Result<()> {
    let sidecar = ScenarioSidecar { config: config.clone(), truth: truth.clone() };
    let text = serde_json::to_string_pretty(&sidecar).expect("scenario serializes");
    std::fs::write(path, text)?;
    Ok(())
}
