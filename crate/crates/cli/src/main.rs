use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use fleetmon::fleetsim::{self, GroundTruth, ScenarioSidecar, SimError};
use fleetmon::pipeline::{self, FleetConfig, PipelineError, Variant};
use fleetmon::report::{self, ReportError};

const DATA_FILE: &str = "fleet.csv";
const SIDECAR_FILE: &str = "scenario.json";

/// Fleet-level condition monitoring: simulate fleets, cluster machines per
/// window and flag the ones that leave the majority.
#[derive(Debug, Parser)]
#[command(name = "fleetmon", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fleet recording and its ground truth.
    Simulate {
        /// JSON config; the `scenario` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for fleet.csv and scenario.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a variant over every window and write the results as JSON.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for result.json (and sweep.txt).
        #[arg(long)]
        out: PathBuf,
        /// Include dissimilarity matrices and dendrograms in result.json.
        #[arg(long)]
        include_matrices: bool,
        /// Comma-separated thr_cc values to sweep; needs ground truth.
        #[arg(long, value_delimiter = ',')]
        thr_cc_grid: Option<Vec<f64>>,
    },
    /// Sweep the σ-band baseline detector; needs ground truth.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated σ values.
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        /// Output directory for baseline.txt and baseline.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the five-panel SVG report of one window, plus its JSON.
    Report {
        #[command(flatten)]
        run: RunArgs,
        /// Window index.
        #[arg(long)]
        window: usize,
        /// SVG path; the JSON is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// A fleet CSV, or a directory holding fleet.csv (and scenario.json).
    #[arg(long)]
    data: PathBuf,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth sidecar; defaults to scenario.json next to the data.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// waveform, harmonic, spectrogram or vibration_features.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    thr_cc: Option<f64>,
    #[arg(long)]
    thr_ad: Option<f64>,
    #[arg(long)]
    debounce_n: Option<usize>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnknownWindow(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<FleetConfig, CliError> {
    match path {
        Some(p) => Ok(FleetConfig::load(p)?),
        None => Ok(FleetConfig::default()),
    }
}

impl DataArgs {
    fn csv_path(&self) -> PathBuf {
        if self.data.is_dir() {
            self.data.join(DATA_FILE)
        } else {
            self.data.clone()
        }
    }

    fn truth_path(&self) -> Option<PathBuf> {
        if let Some(t) = &self.truth {
            return Some(t.clone());
        }
        let dir = if self.data.is_dir() { self.data.clone() } else { self.data.parent()?.to_path_buf() };
        Some(dir.join(SIDECAR_FILE)).filter(|p| p.is_file())
    }

    fn load_truth(&self) -> Result<Option<GroundTruth>, CliError> {
        let Some(path) = self.truth_path() else { return Ok(None) };
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let sidecar: ScenarioSidecar = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: invalid ground truth: {e}", path.display())))?;
        Ok(Some(sidecar.truth))
    }
}

impl RunArgs {
    fn config(&self) -> Result<FleetConfig, CliError> {
        let mut config = load_config(self.data.config.as_deref())?;
        let a = &mut config.analysis;
        if let Some(v) = self.variant {
            a.variant = v;
        }
        if let Some(v) = self.thr_cc {
            a.thr_cc = v;
        }
        if let Some(v) = self.thr_ad {
            a.thr_ad = v;
        }
        if let Some(v) = self.debounce_n {
            a.debounce_n = v;
        }
        a.validate()?;
        Ok(config)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut scenario = load_config(config.as_deref())?.scenario;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            scenario.validate()?;
            create_dir(&out)?;
            let (recording, truth) = fleetsim::generate(&scenario)?;
            fleetsim::export_csv(&recording, &out.join(DATA_FILE))?;
            fleetsim::write_sidecar(&scenario, &truth, &out.join(SIDECAR_FILE))?;
            info!("wrote {} machines, {} samples to {}", recording.machines.len(), recording.len(), out.display());
        }
        Command::Analyze { run, out, include_matrices, thr_cc_grid } => {
            let config = run.config()?;
            let truth = run.data.load_truth()?;
            let recording = pipeline::ingest_csv(&run.data.csv_path())?;
            create_dir(&out)?;
            match thr_cc_grid {
                None => {
                    let result = pipeline::run_variant(&recording, &config.analysis, truth.as_ref())?;
                    let json = serde_json::to_string_pretty(&result.to_json(include_matrices))
                        .map_err(|e| CliError::Data(e.to_string()))?;
                    write_file(&out.join("result.json"), &json)?;
                    if let Some(m) = result.metrics {
                        println!("precision {:.3}  recall {:.3}  f1 {:.3}", m.precision, m.recall, m.f1);
                    }
                }
                Some(grid) => {
                    let truth = truth.ok_or_else(|| CliError::Data("a thr_cc sweep needs ground truth".into()))?;
                    let name = format!("{:?}", config.analysis.variant).to_lowercase();
                    let table = pipeline::sweep_thr_cc(&recording, &config.analysis, &grid, &truth, &name)?;
                    let text = table.render();
                    write_file(&out.join("sweep.txt"), &text)?;
                    write_file(
                        &out.join("sweep.json"),
                        &serde_json::to_string_pretty(&table).map_err(|e| CliError::Data(e.to_string()))?,
                    )?;
                    print!("{text}");
                }
            }
        }
        Command::Baseline { data, sigma_grid, out } => {
            let mut config = load_config(data.config.as_deref())?.baseline;
            if let Some(grid) = sigma_grid {
                config.sigma_grid = grid;
            }
            config.validate()?;
            let truth = data.load_truth()?.ok_or_else(|| CliError::Data("the baseline sweep needs ground truth".into()))?;
            let recording = pipeline::ingest_csv(&data.csv_path())?;
            let table = pipeline::run_baseline(&recording, &config, &truth, "baseline")?;
            let text = table.render();
            if let Some(out) = out {
                create_dir(&out)?;
                write_file(&out.join("baseline.txt"), &text)?;
                write_file(
                    &out.join("baseline.json"),
                    &serde_json::to_string_pretty(&table).map_err(|e| CliError::Data(e.to_string()))?,
                )?;
            }
            print!("{text}");
        }
        Command::Report { run, window, out } => {
            let config = run.config()?;
            let truth = run.data.load_truth()?;
            let recording = pipeline::ingest_csv(&run.data.csv_path())?;
            let result = pipeline::run_variant(&recording, &config.analysis, truth.as_ref())?;
            let json = report::emit_report_to(&result, window, &out)?;
            info!("wrote {} and {}", out.display(), json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fleetmon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
