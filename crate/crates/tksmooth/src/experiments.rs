//! Monte Carlo experiment drivers and metrics.
//!
//! Three studies are implemented, one per `experiment` subcommand:
//!
//! * **table1** — a linear sinusoid tracked through contaminated scalar
//!   measurements; compares the Gaussian and T-Robust smoothers by median
//!   trajectory MSE over many independent runs.
//! * **vdp** — the Van der Pol oscillator with stochastic Euler dynamics and
//!   heavily contaminated measurements of the first component.
//! * **ttrend** — the sinusoid again, short horizon, clean measurements, with
//!   an optional unmodeled jump in the true state; compares all three
//!   smoothers by the x₂ RMSE.
//!
//! Runs are embarrassingly parallel: run `i` draws everything from the ChaCha
//! stream derived from `(master_seed, i)`, and results are keyed by run index
//! before aggregation, so serial and parallel execution produce identical
//! summaries.

use std::f64::consts::PI;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::block_tridiag::BlockVector;
use crate::error::{Error, Result};
use crate::models::{linear_stage, vdp_stage, SequenceModel, StateTrajectory};
use crate::noise::{run_stream, sample_gaussian_vector, ContaminationScheme};
use crate::objectives::ObjectiveKind;
use crate::solver::{smooth, SmootherStatus, SolverConfig};

/// Linear sinusoid study: stage count and step length (`t_k = 0.04π·k`).
pub const TABLE1_STAGES: usize = 100;
pub const TABLE1_DT: f64 = 0.04 * PI;
/// Nominal measurement variance shared by the linear studies.
pub const TABLE1_MEAS_VAR: f64 = 0.25;

/// Jump study: 20 samples over `[0, 2π]`, measurement variance 0.05, and an
/// unmodeled step of +2 on both true state components after `t = π`.
pub const TTREND_STAGES: usize = 20;
pub const TTREND_MEAS_VAR: f64 = 0.05;
pub const TTREND_JUMP: f64 = 2.0;

/// Van der Pol study constants: `μ = 2`, 164 Euler steps over `[0, 16]`,
/// per-component process variance 0.01, measurements of x₁ with nominal
/// variance 0.25 contaminated by `N(0, 100)` outliers.
pub const VDP_MU: f64 = 2.0;
pub const VDP_STAGES: usize = 164;
pub const VDP_SPAN: f64 = 16.0;
pub const VDP_PROCESS_VAR: f64 = 0.01;
pub const VDP_MEAS_VAR: f64 = 0.25;
pub const VDP_OUTLIER_VAR: f64 = 100.0;
pub const VDP_X0: [f64; 2] = [0.0, -0.5];

/// Identifies one Monte Carlo run's RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeed {
    pub master_seed: u64,
    pub run_index: u64,
}

impl RunSeed {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        Self {
            master_seed,
            run_index,
        }
    }

    pub fn stream(self) -> rand_chacha::ChaCha8Rng {
        run_stream(self.master_seed, self.run_index)
    }
}

/// Which study to run, with its study-specific knobs.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    Table1 { scheme: ContaminationScheme },
    VdpRobust { outlier_probability: f64 },
    TTrendStudy { jump: bool },
}

/// A full experiment request.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub runs: usize,
    pub master_seed: u64,
    pub smoothers: Vec<ObjectiveKind>,
    pub solver: SolverConfig,
    /// Student's t degrees of freedom handed to every stage (both roles).
    pub dof: f64,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter {
                name: "runs",
                message: "at least one Monte Carlo run is required".to_string(),
            });
        }
        if self.smoothers.is_empty() {
            return Err(Error::InvalidParameter {
                name: "smoothers",
                message: "at least one smoother must be requested".to_string(),
            });
        }
        self.solver.validate()
    }
}

/// Per-smoother outcome of a single run.
#[derive(Debug, Clone, Serialize)]
pub struct SmootherRunOutcome {
    pub smoother: String,
    pub mse: f64,
    pub rmse_x2: f64,
    pub iterations: usize,
}

/// All smoother outcomes for one Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub run_index: usize,
    pub per_smoother: Vec<SmootherRunOutcome>,
}

/// Which scalar metric the summary aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    RmseX2,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mse => "mse",
            Self::RmseX2 => "rmse_x2",
        }
    }

    fn of(self, outcome: &SmootherRunOutcome) -> f64 {
        match self {
            Self::Mse => outcome.mse,
            Self::RmseX2 => outcome.rmse_x2,
        }
    }
}

/// Median and central 95% interval of one smoother's metric distribution.
#[derive(Debug, Clone, Serialize)]
pub struct SmootherAggregate {
    pub smoother: String,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Aggregated experiment result plus the raw per-run metrics behind it.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub kind: ExperimentKind,
    pub metric: Metric,
    pub rows: Vec<SmootherAggregate>,
    pub runs: usize,
    pub wall_time: Duration,
    pub per_run: Vec<RunMetrics>,
}

/// Truth/measurement/estimate series of one run, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct RunSeries {
    pub run_index: usize,
    pub times: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub measurements: Vec<f64>,
    pub estimates: Vec<SmootherSeries>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmootherSeries {
    pub smoother: String,
    pub states: Vec<Vec<f64>>,
}

/// Trajectory-averaged squared state error (all components).
pub fn mse(truth: &StateTrajectory, estimate: &StateTrajectory) -> f64 {
    assert_eq!(truth.len(), estimate.len(), "trajectory length mismatch");
    let total: f64 = (0..truth.len())
        .map(|k| (truth.state(k) - estimate.state(k)).norm_squared())
        .sum();
    total / truth.len() as f64
}

/// Root-mean-square error of one state component.
pub fn rmse_component(
    truth: &StateTrajectory,
    estimate: &StateTrajectory,
    component: usize,
) -> f64 {
    assert_eq!(truth.len(), estimate.len(), "trajectory length mismatch");
    let total: f64 = (0..truth.len())
        .map(|k| {
            let d = truth.state(k)[component] - estimate.state(k)[component];
            d * d
        })
        .sum();
    (total / truth.len() as f64).sqrt()
}

/// Lower-interpolation empirical quantile: for a sorted sample of size `M`,
/// returns `sorted[floor(q·(M−1))]`. Fixed convention used for every summary.
pub fn quantile_lower(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    sorted[(q * (sorted.len() - 1) as f64).floor() as usize]
}

/// Shared plumbing: the sinusoid truth `x(t) = (−cos t, −sin t)` sampled at
/// `t_k = dt·k`, with an optional step of `jump` added to both components
/// strictly after `t = π`.
pub fn sinusoid_truth(stages: usize, dt: f64, jump: Option<f64>) -> StateTrajectory {
    let times: Vec<f64> = (1..=stages).map(|k| dt * k as f64).collect();
    let states = times
        .iter()
        .map(|&t| {
            let mut x = DVector::from_column_slice(&[-t.cos(), -t.sin()]);
            if let Some(step) = jump {
                if t > PI {
                    x.add_scalar_mut(step);
                }
            }
            x
        })
        .collect();
    StateTrajectory::new(BlockVector::new(states), times).expect("lengths agree by construction")
}

/// The linear-sinusoid smoother model for measurements `z` at the given step
/// length: integrated-velocity dynamics `G = [[1,0],[Δt,1]]` with the matched
/// process covariance, measurement of the second component, and anchor
/// `g0 = G·(−1, 0)ᵀ`.
pub fn linear_sinusoid_model(
    dt: f64,
    meas_var: f64,
    measurements: &[f64],
    dof_meas: f64,
    dof_proc: f64,
) -> Result<SequenceModel> {
    let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, dt, 1.0]);
    let q = DMatrix::from_row_slice(
        2,
        2,
        &[dt, dt * dt / 2.0, dt * dt / 2.0, dt * dt * dt / 3.0],
    );
    let h = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let r = DMatrix::from_element(1, 1, meas_var);
    let stages = measurements
        .iter()
        .map(|&z| {
            linear_stage(
                g.clone(),
                q.clone(),
                h.clone(),
                r.clone(),
                DVector::from_element(1, z),
                dof_meas,
                dof_proc,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceModel::new(stages, DVector::from_column_slice(&[-1.0, -dt]))
}

/// The Van der Pol smoother model for measurements `z`, anchored at
/// `g0 = g(x_0)`.
#[allow(clippy::too_many_arguments)] // mirrors the stage definition (dynamics, noise, data, dof)
pub fn vdp_model(
    mu: f64,
    dt: f64,
    process_var: f64,
    meas_var: f64,
    measurements: &[f64],
    anchor: DVector<f64>,
    dof_meas: f64,
    dof_proc: f64,
) -> Result<SequenceModel> {
    let q = DMatrix::identity(2, 2) * process_var;
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let r = DMatrix::from_element(1, 1, meas_var);
    let stages = measurements
        .iter()
        .map(|&z| {
            vdp_stage(
                mu,
                dt,
                q.clone(),
                h.clone(),
                r.clone(),
                DVector::from_element(1, z),
                dof_meas,
                dof_proc,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceModel::new(stages, anchor)
}

/// One linear-study dataset: deterministic sinusoid truth plus measurement
/// noise from `scheme` on the stream for `seed`.
pub fn simulate_linear_run(
    scheme: &ContaminationScheme,
    seed: RunSeed,
    dof: f64,
) -> Result<(StateTrajectory, SequenceModel)> {
    scheme.validate()?;
    let truth = sinusoid_truth(TABLE1_STAGES, TABLE1_DT, None);
    let mut rng = seed.stream();
    let measurements: Vec<f64> = truth
        .states
        .iter()
        .map(|x| x[1] + scheme.draw(&mut rng))
        .collect();
    let model = linear_sinusoid_model(TABLE1_DT, TABLE1_MEAS_VAR, &measurements, dof, dof)?;
    Ok((truth, model))
}

/// One jump-study dataset: short sinusoid with clean Gaussian measurement
/// noise; when `jump` is set the truth (and hence the data) carries the
/// unmodeled step.
pub fn simulate_ttrend_run(
    jump: Option<f64>,
    seed: RunSeed,
    dof: f64,
) -> Result<(StateTrajectory, SequenceModel)> {
    let dt = 2.0 * PI / TTREND_STAGES as f64;
    let truth = sinusoid_truth(TTREND_STAGES, dt, jump);
    let scheme = ContaminationScheme::Nominal {
        variance: TTREND_MEAS_VAR,
    };
    let mut rng = seed.stream();
    let measurements: Vec<f64> = truth
        .states
        .iter()
        .map(|x| x[1] + scheme.draw(&mut rng))
        .collect();
    let model = linear_sinusoid_model(dt, TTREND_MEAS_VAR, &measurements, dof, dof)?;
    Ok((truth, model))
}

/// One Van der Pol dataset: stochastic Euler truth from `x_0 = (0, −0.5)`,
/// then contaminated measurements of the first component. The draw order is
/// fixed (all process noise in stage order, then all measurement noise), so
/// a run is fully determined by its seed.
pub fn simulate_vdp_run(
    outlier_probability: f64,
    seed: RunSeed,
    dof: f64,
) -> Result<(StateTrajectory, SequenceModel)> {
    let scheme = ContaminationScheme::ContaminatingNormal {
        variance: VDP_MEAS_VAR,
        p: outlier_probability,
        outlier_variance: VDP_OUTLIER_VAR,
    };
    scheme.validate()?;
    let dt = VDP_SPAN / VDP_STAGES as f64;
    let x0 = DVector::from_column_slice(&VDP_X0);
    // Template model used for its transition map; measurements filled below.
    let zeros = vec![0.0; VDP_STAGES];
    let mut model = vdp_model(
        VDP_MU,
        dt,
        VDP_PROCESS_VAR,
        VDP_MEAS_VAR,
        &zeros,
        DVector::zeros(2),
        dof,
        dof,
    )?;
    let q = crate::models::SpdMatrix::new(DMatrix::identity(2, 2) * VDP_PROCESS_VAR, "Q")?;

    let mut rng = seed.stream();
    let times: Vec<f64> = (1..=VDP_STAGES).map(|k| dt * k as f64).collect();
    let mut states = Vec::with_capacity(VDP_STAGES);
    let mut prev = x0.clone();
    for k in 0..VDP_STAGES {
        let drift = model.stage(k).transition(&prev);
        let next = sample_gaussian_vector(&drift, &q, &mut rng);
        states.push(next.clone());
        prev = next;
    }
    let truth = StateTrajectory::new(BlockVector::new(states), times)?;
    for k in 0..VDP_STAGES {
        let z = DVector::from_element(1, truth.state(k)[0] + scheme.draw(&mut rng));
        model.stages_mut()[k].set_measurement(z)?;
    }
    // Anchor the smoother at the noise-free first prediction.
    let anchor = model.stage(0).transition(&x0);
    let model = SequenceModel::new(model.stages().to_vec(), anchor)?;
    Ok((truth, model))
}

/// Runs one smoother on one simulated dataset and reports the metrics and
/// the estimate. Any non-converged run is an error — dropping it would bias
/// the medians.
fn run_one_smoother(
    kind: ObjectiveKind,
    model: &SequenceModel,
    x0: StateTrajectory,
    truth: &StateTrajectory,
    cfg: &SolverConfig,
    run_index: usize,
) -> Result<(SmootherRunOutcome, StateTrajectory)> {
    let report = smooth(kind, model, x0, cfg).map_err(|e| Error::RunFailed {
        run_index,
        message: format!("{kind}: {e}"),
    })?;
    if report.status != SmootherStatus::ConvergedDelta {
        return Err(Error::RunFailed {
            run_index,
            message: format!("{kind}: solver stopped with status {}", report.status),
        });
    }
    let outcome = SmootherRunOutcome {
        smoother: kind.name().to_string(),
        mse: mse(truth, &report.estimate),
        rmse_x2: rmse_component(truth, &report.estimate, 1),
        iterations: report.iterations,
    };
    Ok((outcome, report.estimate))
}

fn aggregate(
    kind: ExperimentKind,
    metric: Metric,
    smoothers: &[ObjectiveKind],
    per_run: Vec<RunMetrics>,
    wall_time: Duration,
) -> ExperimentSummary {
    let rows = smoothers
        .iter()
        .enumerate()
        .map(|(idx, smoother)| {
            let mut values: Vec<f64> = per_run
                .iter()
                .map(|r| metric.of(&r.per_smoother[idx]))
                .collect();
            values.sort_by(|a, b| a.total_cmp(b));
            SmootherAggregate {
                smoother: smoother.name().to_string(),
                median: quantile_lower(&values, 0.5),
                q025: quantile_lower(&values, 0.025),
                q975: quantile_lower(&values, 0.975),
            }
        })
        .collect();
    ExperimentSummary {
        kind,
        metric,
        rows,
        runs: per_run.len(),
        wall_time,
        per_run,
    }
}

/// Runs the requested Monte Carlo body in parallel, keyed by run index.
fn drive<F>(runs: usize, body: F) -> Result<Vec<RunMetrics>>
where
    F: Fn(usize) -> Result<RunMetrics> + Sync,
{
    let results: Vec<Result<RunMetrics>> = (0..runs).into_par_iter().map(&body).collect();
    results.into_iter().collect()
}

/// The contaminated linear sinusoid study.
pub fn run_table1(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    let ExperimentKind::Table1 { scheme } = &spec.kind else {
        return Err(Error::InvalidParameter {
            name: "experiment",
            message: "run_table1 requires a Table1 spec".to_string(),
        });
    };
    let started = std::time::Instant::now();
    let per_run = drive(spec.runs, |i| {
        let (truth, model) =
            simulate_linear_run(scheme, RunSeed::new(spec.master_seed, i as u64), spec.dof)?;
        let per_smoother = spec
            .smoothers
            .iter()
            .map(|&kind| {
                let x0 = StateTrajectory::zeros(2, truth.times.clone());
                run_one_smoother(kind, &model, x0, &truth, &spec.solver, i).map(|(o, _)| o)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunMetrics {
            run_index: i,
            per_smoother,
        })
    })?;
    Ok(aggregate(
        spec.kind.clone(),
        Metric::Mse,
        &spec.smoothers,
        per_run,
        started.elapsed(),
    ))
}

fn series_of(
    truth: &StateTrajectory,
    model: &SequenceModel,
    estimates: Vec<(ObjectiveKind, StateTrajectory)>,
    run_index: usize,
) -> RunSeries {
    RunSeries {
        run_index,
        times: truth.times.clone(),
        truth: truth.states.iter().map(|x| x.as_slice().to_vec()).collect(),
        measurements: (0..model.len())
            .map(|k| model.stage(k).measurement()[0])
            .collect(),
        estimates: estimates
            .into_iter()
            .map(|(kind, est)| SmootherSeries {
                smoother: kind.name().to_string(),
                states: est.states.iter().map(|x| x.as_slice().to_vec()).collect(),
            })
            .collect(),
    }
}

/// The Van der Pol study. Also returns each run's series for plotting.
pub fn run_vdp(spec: &ExperimentSpec) -> Result<(ExperimentSummary, Vec<RunSeries>)> {
    spec.validate()?;
    let ExperimentKind::VdpRobust {
        outlier_probability,
    } = spec.kind
    else {
        return Err(Error::InvalidParameter {
            name: "experiment",
            message: "run_vdp requires a VdpRobust spec".to_string(),
        });
    };
    let started = std::time::Instant::now();
    let outcomes: Vec<Result<(RunMetrics, RunSeries)>> = (0..spec.runs)
        .into_par_iter()
        .map(|i| {
            let (truth, model) = simulate_vdp_run(
                outlier_probability,
                RunSeed::new(spec.master_seed, i as u64),
                spec.dof,
            )?;
            let mut per_smoother = Vec::with_capacity(spec.smoothers.len());
            let mut estimates = Vec::with_capacity(spec.smoothers.len());
            for &kind in &spec.smoothers {
                let x0 = model.forward_simulation(truth.times.clone())?;
                let (outcome, estimate) =
                    run_one_smoother(kind, &model, x0, &truth, &spec.solver, i)?;
                per_smoother.push(outcome);
                estimates.push((kind, estimate));
            }
            let series = series_of(&truth, &model, estimates, i);
            Ok((
                RunMetrics {
                    run_index: i,
                    per_smoother,
                },
                series,
            ))
        })
        .collect();
    let mut per_run = Vec::with_capacity(spec.runs);
    let mut dumps = Vec::with_capacity(spec.runs);
    for outcome in outcomes {
        let (metrics, series) = outcome?;
        per_run.push(metrics);
        dumps.push(series);
    }
    Ok((
        aggregate(
            spec.kind.clone(),
            Metric::Mse,
            &spec.smoothers,
            per_run,
            started.elapsed(),
        ),
        dumps,
    ))
}

/// The jump study. Aggregates the x₂ RMSE and returns per-run series.
pub fn run_ttrend(spec: &ExperimentSpec) -> Result<(ExperimentSummary, Vec<RunSeries>)> {
    spec.validate()?;
    let ExperimentKind::TTrendStudy { jump } = spec.kind else {
        return Err(Error::InvalidParameter {
            name: "experiment",
            message: "run_ttrend requires a TTrendStudy spec".to_string(),
        });
    };
    let jump_size = jump.then_some(TTREND_JUMP);
    let started = std::time::Instant::now();
    let outcomes: Vec<Result<(RunMetrics, RunSeries)>> = (0..spec.runs)
        .into_par_iter()
        .map(|i| {
            let (truth, model) = simulate_ttrend_run(
                jump_size,
                RunSeed::new(spec.master_seed, i as u64),
                spec.dof,
            )?;
            let mut per_smoother = Vec::with_capacity(spec.smoothers.len());
            let mut estimates = Vec::with_capacity(spec.smoothers.len());
            for &kind in &spec.smoothers {
                let x0 = StateTrajectory::zeros(2, truth.times.clone());
                let (outcome, estimate) =
                    run_one_smoother(kind, &model, x0, &truth, &spec.solver, i)?;
                per_smoother.push(outcome);
                estimates.push((kind, estimate));
            }
            let series = series_of(&truth, &model, estimates, i);
            Ok((
                RunMetrics {
                    run_index: i,
                    per_smoother,
                },
                series,
            ))
        })
        .collect();
    let mut per_run = Vec::with_capacity(spec.runs);
    let mut dumps = Vec::with_capacity(spec.runs);
    for outcome in outcomes {
        let (metrics, series) = outcome?;
        per_run.push(metrics);
        dumps.push(series);
    }
    Ok((
        aggregate(
            spec.kind.clone(),
            Metric::RmseX2,
            &spec.smoothers,
            per_run,
            started.elapsed(),
        ),
        dumps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_truth_hits_pi_exactly() {
        let truth = sinusoid_truth(TABLE1_STAGES, TABLE1_DT, None);
        // t_25 = 0.04π·25 = π: (−cos π, −sin π) = (1, 0).
        approx::assert_relative_eq!(truth.times[24], PI, max_relative = 1e-14);
        approx::assert_relative_eq!(truth.state(24)[0], 1.0, max_relative = 1e-12);
        approx::assert_abs_diff_eq!(truth.state(24)[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn jump_applies_strictly_after_pi() {
        let truth = sinusoid_truth(TTREND_STAGES, 2.0 * PI / TTREND_STAGES as f64, Some(2.0));
        for (k, &t) in truth.times.iter().enumerate() {
            let expected = if t > PI { -t.cos() + 2.0 } else { -t.cos() };
            approx::assert_relative_eq!(truth.state(k)[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_rate_contamination_reproduces_nominal_data() {
        let nominal = ContaminationScheme::Nominal { variance: 0.25 };
        let mixture = ContaminationScheme::ContaminatingNormal {
            variance: 0.25,
            p: 0.0,
            outlier_variance: 100.0,
        };
        let seed = RunSeed::new(5, 3);
        let (_, model_a) = simulate_linear_run(&nominal, seed, 4.0).unwrap();
        let (_, model_b) = simulate_linear_run(&mixture, seed, 4.0).unwrap();
        for k in 0..model_a.len() {
            assert_eq!(
                model_a.stage(k).measurement(),
                model_b.stage(k).measurement()
            );
        }
    }

    #[test]
    fn pooled_nominal_measurement_variance() {
        // 100 runs × 100 stages = 10⁴ draws of N(0, 0.25) around the truth.
        let scheme = ContaminationScheme::Nominal { variance: 0.25 };
        let mut pooled = Vec::new();
        for run in 0..100 {
            let (truth, model) = simulate_linear_run(&scheme, RunSeed::new(77, run), 4.0).unwrap();
            for k in 0..model.len() {
                pooled.push(model.stage(k).measurement()[0] - truth.state(k)[1]);
            }
        }
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let var =
            pooled.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (pooled.len() - 1) as f64;
        assert!((0.24..=0.26).contains(&var), "pooled variance {var}");
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        let sample: Vec<f64> = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        let mut sorted = sample.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(quantile_lower(&sorted, 0.5), 3.0);
        assert_eq!(quantile_lower(&sorted, 0.0), 1.0);
        assert_eq!(quantile_lower(&sorted, 1.0), 5.0);
        // Lower interpolation: index floor(0.025·4) = 0, floor(0.975·4) = 3.
        assert_eq!(quantile_lower(&sorted, 0.025), 1.0);
        assert_eq!(quantile_lower(&sorted, 0.975), 4.0);

        let even = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_lower(&even, 0.5), 2.0); // floor(0.5·3) = 1
    }

    #[test]
    fn mse_and_rmse_metrics() {
        let truth = StateTrajectory::new(
            BlockVector::new(vec![
                DVector::from_column_slice(&[1.0, 2.0]),
                DVector::from_column_slice(&[3.0, 4.0]),
            ]),
            vec![0.0, 1.0],
        )
        .unwrap();
        let estimate = StateTrajectory::new(
            BlockVector::new(vec![
                DVector::from_column_slice(&[1.0, 1.0]),
                DVector::from_column_slice(&[5.0, 4.0]),
            ]),
            vec![0.0, 1.0],
        )
        .unwrap();
        // Errors: (0,1) and (2,0) → mse = (1 + 4)/2 = 2.5; x₂ rmse = sqrt(1/2).
        assert_eq!(mse(&truth, &estimate), 2.5);
        approx::assert_relative_eq!(
            rmse_component(&truth, &estimate, 1),
            (0.5_f64).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn spec_validation_rejects_empty_requests() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Table1 {
                scheme: ContaminationScheme::Nominal { variance: 0.25 },
            },
            runs: 0,
            master_seed: 1,
            smoothers: vec![ObjectiveKind::TRobust],
            solver: SolverConfig::default(),
            dof: 4.0,
        };
        assert!(run_table1(&spec).is_err());

        let wrong_kind = ExperimentSpec {
            kind: ExperimentKind::TTrendStudy { jump: true },
            runs: 1,
            master_seed: 1,
            smoothers: vec![ObjectiveKind::TRobust],
            solver: SolverConfig::default(),
            dof: 4.0,
        };
        assert!(run_table1(&wrong_kind).is_err());
    }

    #[test]
    fn small_table1_run_is_deterministic_and_ordered() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Table1 {
                scheme: ContaminationScheme::ContaminatingNormal {
                    variance: 0.25,
                    p: 0.1,
                    outlier_variance: 100.0,
                },
            },
            runs: 8,
            master_seed: 123,
            smoothers: vec![ObjectiveKind::GaussianL2, ObjectiveKind::TRobust],
            solver: SolverConfig::default(),
            dof: 4.0,
        };
        let a = run_table1(&spec).unwrap();
        let b = run_table1(&spec).unwrap();
        assert_eq!(a.rows.len(), 2);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.median, rb.median);
            assert_eq!(ra.q025, rb.q025);
            assert_eq!(ra.q975, rb.q975);
            assert!(ra.q025 <= ra.median && ra.median <= ra.q975);
        }
        for (i, run) in a.per_run.iter().enumerate() {
            assert_eq!(run.run_index, i);
        }
    }
}
