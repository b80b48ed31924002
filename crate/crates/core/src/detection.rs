//! Anomaly scoring, thresholding, debouncing, the fleet σ-band baseline and
//! precision/recall/F1 evaluation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Partition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 machines, got {0}")]
    TooFewMachines(usize),
    #[error("indicators are ragged or non-finite")]
    InvalidIndicators,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = DetectionError> = std::result::Result<T, E>;

/// Default anomaly threshold: at least two thirds of the fleet is assumed healthy.
pub const DEFAULT_THR_AD: f64 = 2.0 / 3.0;
pub const DEFAULT_DEBOUNCE: usize = 5;

/// Per-machine anomaly scores `(N − |own cluster|) / N`, in the order of
/// `machine_ids`.
pub fn score(partition: &Partition, machine_ids: &[String]) -> Result<Vec<f64>> {
    let n = machine_ids.len();
    if partition.machine_count() != n {
        return Err(DetectionError::LengthMismatch(partition.machine_count(), n));
    }
    machine_ids
        .iter()
        .map(|id| {
            let c = partition
                .cluster_of(id)
                .ok_or_else(|| DetectionError::InvalidArgument(format!("machine {id} not in partition")))?;
            Ok((n - partition.clusters[c].len()) as f64 / n as f64)
        })
        .collect()
}

/// `score > thr_ad`, strictly.
pub fn classify(scores: &[f64], thr_ad: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > thr_ad).collect()
}

/// Consecutive-window counter for one machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Debouncer {
    n: usize,
    run: usize,
}

impl Debouncer {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "debounce length must be at least 1");
        Self { n, run: 0 }
    }

    /// Feeds one window's verdict and returns whether the machine is faulty,
    /// i.e. anomalous in each of the last `n` windows.
    pub fn update(&mut self, anomalous: bool) -> bool {
        self.run = if anomalous { self.run + 1 } else { 0 };
        self.run >= self.n
    }

    pub fn reset(&mut self) {
        self.run = 0;
    }
}

/// Faulty at `t` iff anomalous at every window in `[t − n + 1, t]`.
pub fn debounce(history: &[bool], n: usize) -> Vec<bool> {
    let mut d = Debouncer::new(n);
    history.iter().map(|&a| d.update(a)).collect()
}

/// Result of the fleet σ-band check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandVerdict {
    pub faulty: Vec<bool>,
    /// Every indicator dimension had zero spread across the fleet.
    pub degenerate: bool,
}

/// A machine is faulty when any of its indicators lies more than `sigma`
/// fleet standard deviations from the fleet mean. Mean and (population)
/// standard deviation include the machine itself unless `leave_one_out`.
pub fn sigma_band_baseline(indicators: &[Vec<f64>], sigma: f64, leave_one_out: bool) -> Result<BandVerdict> {
    let n = indicators.len();
    if n < 2 {
        return Err(DetectionError::TooFewMachines(n));
    }
    let dims = indicators[0].len();
    if dims == 0 || indicators.iter().any(|v| v.len() != dims || v.iter().any(|x| !x.is_finite())) {
        return Err(DetectionError::InvalidIndicators);
    }
    let stats = |d: usize, skip: Option<usize>| {
        let vals: Vec<f64> =
            indicators.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| v[d]).collect();
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k).sqrt();
        (mean, sd)
    };
    let fleet: Vec<(f64, f64)> = (0..dims).map(|d| stats(d, None)).collect();
    let degenerate = fleet.iter().all(|&(_, sd)| sd == 0.0);
    let faulty = (0..n)
        .map(|i| {
            (0..dims).any(|d| {
                let (mean, sd) = if leave_one_out { stats(d, Some(i)) } else { fleet[d] };
                (indicators[i][d] - mean).abs() > sigma * sd
            })
        })
        .collect();
    Ok(BandVerdict { faulty, degenerate })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(DetectionError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut c = ConfusionCounts::default();
    pred.iter().zip(truth).for_each(|(&p, &t)| c.record(p, t));
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio was 0/0 and defaulted to 0.
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall).0
}

pub fn metrics(counts: &ConfusionCounts) -> Metrics {
    let (tp, fp, fn_) = (counts.tp as f64, counts.fp as f64, counts.fn_ as f64);
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (f1, df) = ratio(2.0 * precision * recall, precision + recall);
    Metrics { precision, recall, f1, degenerate: dp || dr || df }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

/// Metrics for every value of a swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub scenario: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the highest F1; the first one wins ties.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.metrics.f1 >= r.metrics.f1 => Some(b),
            _ => Some(r),
        })
    }

    /// Plain-text table: one column per parameter value, rows for precision,
    /// recall and F1. The best-F1 column is marked with `*`.
    pub fn render(&self) -> String {
        let best = self.best().map(|b| b.parameter);
        let label_w = self.scenario.len().max(10);
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$} {:<9}", "", "Metric");
        for r in &self.rows {
            let head = format!("{}={}", self.parameter, r.parameter);
            let _ = write!(out, " {head:>12}");
        }
        out.push('\n');
        type Getter = fn(&Metrics) -> f64;
        let rows: [(&str, Getter); 3] =
            [("Precision", |m| m.precision), ("Recall", |m| m.recall), ("F1", |m| m.f1)];
        for (k, (name, get)) in rows.iter().enumerate() {
            let label = if k == 0 { self.scenario.as_str() } else { "" };
            let _ = write!(out, "{label:<label_w$} {name:<9}");
            for r in &self.rows {
                let mark = if Some(r.parameter) == best { "*" } else { " " };
                let _ = write!(out, " {:>11.3}{mark}", get(&r.metrics));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds a sweep table from per-parameter predictions. Each entry pairs a
/// parameter value with its `(prediction, truth)` evaluations.
pub fn sweep<I>(parameter: &str, scenario: &str, results: I) -> SweepTable
where
    I: IntoIterator<Item = (f64, ConfusionCounts)>,
{
    SweepTable {
        parameter: parameter.into(),
        scenario: scenario.into(),
        rows: results
            .into_iter()
            .map(|(p, counts)| SweepRow { parameter: p, counts, metrics: metrics(&counts) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn part(sizes: &[usize]) -> Partition {
        let mut next = 0;
        Partition {
            clusters: sizes
                .iter()
                .map(|&s| {
                    let c = (next..next + s).map(|i| format!("m{i}")).collect();
                    next += s;
                    c
                })
                .collect(),
        }
    }

    #[test]
    fn score_examples() {
        let s = score(&part(&[8, 2]), &ids(10)).unwrap();
        assert!(s[..8].iter().all(|&v| v == 0.2));
        assert!(s[8..].iter().all(|&v| v == 0.8));
        assert!(score(&part(&[10]), &ids(10)).unwrap().iter().all(|&v| v == 0.0));
        assert!(score(&part(&[1; 10]), &ids(10)).unwrap().iter().all(|&v| v == 0.9));
        assert!(score(&part(&[3]), &ids(4)).is_err());
    }

    #[test]
    fn classify_is_strict() {
        assert_eq!(classify(&[0.8, 2.0 / 3.0, 0.0], DEFAULT_THR_AD), vec![true, false, false]);
    }

    #[test]
    fn debounce_examples() {
        let five = [true; 5];
        assert_eq!(debounce(&five, 5), vec![false, false, false, false, true]);
        let broken = [true, true, true, true, false, true, true, true, true];
        assert!(debounce(&broken, 5).iter().all(|&f| !f));
        let mixed = [true, false, true, true, false];
        assert_eq!(debounce(&mixed, 1), mixed.to_vec());
    }

    #[test]
    fn debouncer_clears_when_run_breaks() {
        let h = [true, true, true, false, true];
        assert_eq!(debounce(&h, 3), vec![false, false, true, false, false]);
        let mut d = Debouncer::new(2);
        assert!(!d.update(true));
        d.reset();
        assert!(!d.update(true));
        assert!(d.update(true));
    }

    #[test]
    fn sigma_band_examples() {
        let flat: Vec<Vec<f64>> = vec![vec![1.0]; 5];
        let v = sigma_band_baseline(&flat, 0.5, false).unwrap();
        assert!(v.faulty.iter().all(|&f| !f));
        assert!(v.degenerate);

        let mut twelve: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 + 0.01 * i as f64; 12]).collect();
        twelve[3][7] = 10.0;
        let v = sigma_band_baseline(&twelve, 2.0, false).unwrap();
        assert_eq!(v.faulty.iter().filter(|&&f| f).count(), 1);
        assert!(v.faulty[3]);

        assert_eq!(sigma_band_baseline(&[vec![1.0]], 1.0, false), Err(DetectionError::TooFewMachines(1)));
        assert!(sigma_band_baseline(&[vec![1.0], vec![1.0, 2.0]], 1.0, false).is_err());
    }

    #[test]
    fn sigma_band_leave_one_out() {
        let ind: Vec<Vec<f64>> = vec![vec![0.0], vec![0.1], vec![-0.1], vec![0.05], vec![3.0]];
        let fleet = sigma_band_baseline(&ind, 2.5, false).unwrap();
        let loo = sigma_band_baseline(&ind, 2.5, true).unwrap();
        // The outlier inflates the fleet-wide deviation enough to hide itself.
        assert!(!fleet.faulty[4]);
        assert!(loo.faulty[4]);
        assert!(!loo.faulty[1]);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[false, true], &[false, true]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 0, fn_: 0, tn: 1 });
        let c = confusion(&[true; 4], &[false; 4]).unwrap();
        assert_eq!(c.fp, 4);
        assert_eq!(confusion(&[true], &[]), Err(DetectionError::LengthMismatch(1, 0)));
    }

    #[test]
    fn metrics_examples() {
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 0 });
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 0.75).abs() < 1e-15);
        assert!(!m.degenerate);

        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 3, tn: 5 });
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);

        assert!((f1_score(1.0, 0.857) - 0.923).abs() <= 0.001);
    }

    #[test]
    fn sweep_single_value_matches_metrics() {
        let c = ConfusionCounts { tp: 5, fp: 2, fn_: 1, tn: 30 };
        let t = sweep("thr_cc", "s", [(0.9, c)]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].metrics, metrics(&c));
    }

    #[test]
    fn render_has_paper_layout() {
        let grid = [0.5, 0.7, 0.8, 0.85, 0.9, 0.95];
        let t = sweep(
            "thr_cc",
            "820 RPM - load",
            grid.iter().enumerate().map(|(i, &g)| (g, ConfusionCounts { tp: i as u64, fp: 1, fn_: 1, tn: 10 })),
        );
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("thr_cc=0.85"));
        assert!(lines[1].contains("Precision"));
        assert!(lines[3].trim_start().starts_with("F1"));
        assert_eq!(lines[3].matches('*').count(), 1);
        assert_eq!(t.best().unwrap().parameter, 0.95);
    }
}
