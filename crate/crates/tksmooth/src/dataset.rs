//! File formats for the command line: datasets, estimates, and experiment
//! summaries.
//!
//! Datasets are self-describing JSON documents carrying the model name and
//! parameters, the time stamps, the per-stage scalar measurements, and
//! (optionally) the simulated truth. Summaries are emitted either as CSV
//! (fixed columns, one row per smoother) or as JSON including the raw
//! per-run metrics. All writers produce deterministic bytes: field order is
//! fixed, floats use Rust's shortest round-trip formatting, and wall-clock
//! timings are never serialized.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    linear_sinusoid_model, simulate_linear_run, simulate_vdp_run, vdp_model, ExperimentKind,
    ExperimentSummary, RunSeed, RunSeries, TABLE1_DT, TABLE1_MEAS_VAR, VDP_MEAS_VAR, VDP_MU,
    VDP_PROCESS_VAR, VDP_SPAN, VDP_STAGES,
};
use crate::models::{SequenceModel, StateTrajectory};
use crate::noise::ContaminationScheme;
use crate::objectives::ObjectiveKind;
use crate::solver::SmootherReport;

/// Model description stored inside a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Integrated-velocity sinusoid tracker: `G = [[1,0],[Δt,1]]`, matched
    /// process covariance, measurement of the second state component, anchor
    /// `g0 = G·(−1, 0)ᵀ`.
    LinearSinusoid {
        dt: f64,
        measurement_variance: f64,
        dof_meas: f64,
        dof_proc: f64,
    },
    /// Euler-discretized Van der Pol oscillator observed in its first
    /// component; `anchor` is the fixed first prediction `g_1(x_0)`.
    VanDerPol {
        mu: f64,
        dt: f64,
        process_variance: f64,
        measurement_variance: f64,
        dof_meas: f64,
        dof_proc: f64,
        anchor: Vec<f64>,
    },
}

/// A measurement sequence plus the model that explains it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub model: ModelSpec,
    pub times: Vec<f64>,
    /// Scalar measurement per stage (both built-in models observe one
    /// component).
    pub measurements: Vec<f64>,
    /// Simulated ground truth, when known; one `[x₁, x₂]` row per stage.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    /// Builds the smoother model described by the file.
    pub fn to_model(&self) -> Result<SequenceModel> {
        if self.times.len() != self.measurements.len() {
            return Err(Error::DimensionMismatch {
                what: "time stamps vs measurements",
                expected: self.times.len(),
                got: self.measurements.len(),
            });
        }
        if self.measurements.is_empty() {
            return Err(Error::InvalidParameter {
                name: "measurements",
                message: "dataset holds no stages".to_string(),
            });
        }
        match &self.model {
            ModelSpec::LinearSinusoid {
                dt,
                measurement_variance,
                dof_meas,
                dof_proc,
            } => linear_sinusoid_model(
                *dt,
                *measurement_variance,
                &self.measurements,
                *dof_meas,
                *dof_proc,
            ),
            ModelSpec::VanDerPol {
                mu,
                dt,
                process_variance,
                measurement_variance,
                dof_meas,
                dof_proc,
                anchor,
            } => vdp_model(
                *mu,
                *dt,
                *process_variance,
                *measurement_variance,
                &self.measurements,
                DVector::from_column_slice(anchor),
                *dof_meas,
                *dof_proc,
            ),
        }
    }

    /// Default smoother start for this dataset: the zero trajectory for the
    /// linear model, the noise-free forward pass for the Van der Pol model.
    pub fn initial_guess(&self, model: &SequenceModel) -> Result<StateTrajectory> {
        match self.model {
            ModelSpec::LinearSinusoid { .. } => Ok(StateTrajectory::zeros(
                model.state_dim(),
                self.times.clone(),
            )),
            ModelSpec::VanDerPol { .. } => model.forward_simulation(self.times.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }
}

/// Generates the linear-sinusoid dataset for one seed, truth included.
pub fn linear_dataset(scheme: &ContaminationScheme, seed: RunSeed, dof: f64) -> Result<Dataset> {
    let (truth, model) = simulate_linear_run(scheme, seed, dof)?;
    Ok(Dataset {
        model: ModelSpec::LinearSinusoid {
            dt: TABLE1_DT,
            measurement_variance: TABLE1_MEAS_VAR,
            dof_meas: dof,
            dof_proc: dof,
        },
        times: truth.times.clone(),
        measurements: stage_measurements(&model),
        truth: Some(state_rows(&truth)),
    })
}

/// Generates the Van der Pol dataset for one seed, truth included.
pub fn vdp_dataset(outlier_probability: f64, seed: RunSeed, dof: f64) -> Result<Dataset> {
    let (truth, model) = simulate_vdp_run(outlier_probability, seed, dof)?;
    Ok(Dataset {
        model: ModelSpec::VanDerPol {
            mu: VDP_MU,
            dt: VDP_SPAN / VDP_STAGES as f64,
            process_variance: VDP_PROCESS_VAR,
            measurement_variance: VDP_MEAS_VAR,
            dof_meas: dof,
            dof_proc: dof,
            anchor: model.anchor().as_slice().to_vec(),
        },
        times: truth.times.clone(),
        measurements: stage_measurements(&model),
        truth: Some(state_rows(&truth)),
    })
}

fn stage_measurements(model: &SequenceModel) -> Vec<f64> {
    (0..model.len())
        .map(|k| model.stage(k).measurement()[0])
        .collect()
}

fn state_rows(trajectory: &StateTrajectory) -> Vec<Vec<f64>> {
    trajectory
        .states
        .iter()
        .map(|x| x.as_slice().to_vec())
        .collect()
}

/// Smoothing result written by the `smooth` subcommand: one state row per
/// stage plus the termination bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub smoother: String,
    pub status: String,
    pub iterations: usize,
    /// Objective value at the returned estimate.
    pub objective: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl EstimateDoc {
    pub fn new(kind: ObjectiveKind, report: &SmootherReport) -> Self {
        Self {
            smoother: kind.name().to_string(),
            status: report.status.to_string(),
            iterations: report.iterations,
            objective: report.trace.last().map(|r| r.objective).unwrap_or(f64::NAN),
            times: report.estimate.times.clone(),
            states: state_rows(&report.estimate),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_text(path, &text)
    }
}

/// The experiment identity cells shared by the summary writers and the CLI
/// banner: `(study, scheme, p, phi)`. `p` and `phi` are empty where not
/// applicable; a uniform contamination's `phi` is rendered `lo..hi`.
pub fn kind_cells(kind: &ExperimentKind) -> (&'static str, String, String, String) {
    match kind {
        ExperimentKind::Table1 { scheme } => match scheme {
            ContaminationScheme::Nominal { .. } => (
                "table1",
                "nominal".to_string(),
                String::new(),
                String::new(),
            ),
            ContaminationScheme::ContaminatingNormal {
                p,
                outlier_variance,
                ..
            } => (
                "table1",
                "normal".to_string(),
                p.to_string(),
                outlier_variance.to_string(),
            ),
            ContaminationScheme::ContaminatingUniform { p, lo, hi, .. } => (
                "table1",
                "uniform".to_string(),
                p.to_string(),
                format!("{lo}..{hi}"),
            ),
        },
        ExperimentKind::VdpRobust {
            outlier_probability,
        } => (
            "vdp",
            "normal".to_string(),
            outlier_probability.to_string(),
            crate::experiments::VDP_OUTLIER_VAR.to_string(),
        ),
        ExperimentKind::TTrendStudy { jump } => (
            "ttrend",
            if *jump { "jump" } else { "nominal" }.to_string(),
            String::new(),
            String::new(),
        ),
    }
}

/// Renders a summary as CSV. Columns are fixed:
/// `scheme,p,phi,smoother,median_<metric>,q025,q975,runs`, one row per
/// smoother; `p`/`phi` cells are empty where the scheme has no such
/// parameter.
pub fn summary_to_csv(summary: &ExperimentSummary) -> String {
    let (_, scheme, p, phi) = kind_cells(&summary.kind);
    let mut out = String::new();
    writeln!(
        out,
        "scheme,p,phi,smoother,median_{},q025,q975,runs",
        summary.metric.name()
    )
    .expect("writing to String cannot fail");
    for row in &summary.rows {
        writeln!(
            out,
            "{scheme},{p},{phi},{},{},{},{},{}",
            row.smoother, row.median, row.q025, row.q975, summary.runs
        )
        .expect("writing to String cannot fail");
    }
    out
}

#[derive(Serialize)]
struct ExperimentDoc<'a> {
    study: &'static str,
    scheme: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<&'a str>,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    experiment: ExperimentDoc<'a>,
    metric: &'static str,
    runs: usize,
    rows: &'a [crate::experiments::SmootherAggregate],
    per_run: &'a [crate::experiments::RunMetrics],
}

/// Renders a summary (with raw per-run metrics) as JSON. Wall time is
/// deliberately omitted so identical seeds produce identical bytes.
pub fn summary_to_json(summary: &ExperimentSummary) -> Result<String> {
    let (study, scheme, p, phi) = kind_cells(&summary.kind);
    let doc = SummaryDoc {
        experiment: ExperimentDoc {
            study,
            scheme: &scheme,
            p: if p.is_empty() {
                None
            } else {
                Some(p.parse().expect("p cell is a float"))
            },
            phi: if phi.is_empty() { None } else { Some(&phi) },
        },
        metric: summary.metric.name(),
        runs: summary.runs,
        rows: &summary.rows,
        per_run: &summary.per_run,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Renders only the per-run metrics as JSON (the raw side file accompanying
/// a CSV summary).
pub fn per_run_to_json(summary: &ExperimentSummary) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&summary.per_run)?;
    text.push('\n');
    Ok(text)
}

/// Renders per-run truth/measurement/estimate series as JSON for plotting.
pub fn series_to_json(series: &[RunSeries]) -> Result<String> {
    let mut text = serde_json::to_string_pretty(series)?;
    text.push('\n');
    Ok(text)
}

/// Writes a text file, tagging failures with the path.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
