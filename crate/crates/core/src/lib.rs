//! Fleet-based anomaly detection for condition monitoring.
//!
//! Machines of a fleet that operate under comparable conditions are compared
//! pairwise, clustered hierarchically, and scored by how small a minority
//! their cluster forms. The crate is organized by pipeline stage:
//!
//! - [`signal`]: series containers, normalization, windowing and spectra
//! - [`dissimilarity`]: Euclidean distance, Ψ-DTW and its warping amount,
//!   harmonic differences, the fleet dissimilarity matrix
//! - [`clustering`]: agglomerative clustering and cophenetic-correlation
//!   partitioning
//! - [`detection`]: anomaly scores, debouncing, the σ-band baseline, metrics
//! - [`fleetsim`]: synthetic current and vibration fleets
//! - [`pipeline`]: variant recipes, CSV ingestion, runs and sweeps
//! - [`report`]: static SVG/JSON reports of a single window

pub mod clustering;
pub mod detection;
pub mod dissimilarity;
pub mod fleetsim;
pub mod pipeline;
pub mod report;
pub mod signal;
