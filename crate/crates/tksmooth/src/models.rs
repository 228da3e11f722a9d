//! Discrete-time state-space models for smoothing.
//!
//! A trajectory `x_1 .. x_N` evolves through per-stage process maps and is
//! observed through per-stage measurement maps:
//!
//! ```text
//! x_k = g_k(x_{k-1}) + w_k,   w_k process noise, covariance Q_k,
//! z_k = h_k(x_k)     + v_k,   v_k measurement noise, covariance R_k,
//! ```
//!
//! with the first stage anchored by a known constant `g0` so that
//! `w_1 = x_1 - g0`. Process and measurement maps are arbitrary smooth
//! functions supplied as closures together with their Jacobians; constructors
//! for the linear Gaussian chain and the Van der Pol oscillator used by the
//! experiment drivers are provided.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::block_tridiag::BlockVector;
use crate::error::{Error, Result};

/// Degrees of freedom used by the experiment drivers when none is given.
pub const DEFAULT_DOF: f64 = 4.0;

/// A state-to-vector map (process or measurement function).
pub type StateFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Jacobian of a [`StateFn`] at a point.
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A symmetric positive definite matrix with its Cholesky factor and inverse
/// cached at construction.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates squareness, symmetry and positive definiteness.
    /// `context` names the matrix in error messages.
    pub fn new(matrix: DMatrix<f64>, context: &str) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                what: "SPD matrix must be square",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let scale = matrix.abs().max().max(1.0);
        let asym = (&matrix - matrix.transpose()).abs().max();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidParameter {
                name: "covariance",
                message: format!("{context} is not symmetric (max asymmetry {asym:e})"),
            });
        }
        let chol =
            nalgebra::Cholesky::new(matrix.clone()).ok_or_else(|| Error::NotPositiveDefinite {
                context: context.to_string(),
            })?;
        let inv = chol.inverse();
        let inverse = 0.5 * (&inv + inv.transpose());
        Ok(Self {
            matrix,
            chol_l: chol.unpack(),
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Symmetrized inverse, computed once from the Cholesky factor.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Lower Cholesky factor `L` with `L L^T` equal to the matrix.
    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// Quadratic form in the inverse, `v^T M^{-1} v = |L^{-1} v|^2`.
    pub fn quad_inverse(&self, v: &DVector<f64>) -> f64 {
        self.chol_l
            .solve_lower_triangular(v)
            .expect("Cholesky factor has positive diagonal")
            .norm_squared()
    }

    /// `log det M`, from the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol_l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// One time step of the model: process map into this stage, measurement map
/// out of it, noise covariances and Student's t degrees of freedom.
#[derive(Clone)]
pub struct StageModel {
    g: StateFn,
    g_jac: JacobianFn,
    h: StateFn,
    h_jac: JacobianFn,
    q: SpdMatrix,
    r: SpdMatrix,
    z: DVector<f64>,
    dof_meas: f64,
    dof_proc: f64,
}

impl std::fmt::Debug for StageModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageModel")
            .field("state_dim", &self.state_dim())
            .field("meas_dim", &self.meas_dim())
            .field("dof_meas", &self.dof_meas)
            .field("dof_proc", &self.dof_proc)
            .finish_non_exhaustive()
    }
}

impl StageModel {
    /// Assembles a stage from its maps, Jacobians, covariances and
    /// measurement. The maps must be pure (no interior mutability); they are
    /// called concurrently during Monte Carlo experiments.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: StateFn,
        g_jac: JacobianFn,
        h: StateFn,
        h_jac: JacobianFn,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        z: DVector<f64>,
        dof_meas: f64,
        dof_proc: f64,
    ) -> Result<Self> {
        let q = SpdMatrix::new(q, "process covariance Q")?;
        let r = SpdMatrix::new(r, "measurement covariance R")?;
        if z.len() != r.dim() {
            return Err(Error::DimensionMismatch {
                what: "measurement vs measurement covariance",
                expected: r.dim(),
                got: z.len(),
            });
        }
        for (name, dof) in [("dof_meas", dof_meas), ("dof_proc", dof_proc)] {
            if dof <= 0.0 || !dof.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("degrees of freedom must be positive and finite, got {dof}"),
                });
            }
        }
        Ok(Self {
            g,
            g_jac,
            h,
            h_jac,
            q,
            r,
            z,
            dof_meas,
            dof_proc,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.q.dim()
    }

    pub fn meas_dim(&self) -> usize {
        self.z.len()
    }

    /// Process map `g_k`, taking the previous state.
    pub fn transition(&self, x_prev: &DVector<f64>) -> DVector<f64> {
        (self.g)(x_prev)
    }

    pub fn transition_jacobian(&self, x_prev: &DVector<f64>) -> DMatrix<f64> {
        (self.g_jac)(x_prev)
    }

    /// Measurement map `h_k`, taking this stage's state.
    pub fn observation(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.h)(x)
    }

    pub fn observation_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.h_jac)(x)
    }

    pub fn process_cov(&self) -> &SpdMatrix {
        &self.q
    }

    pub fn measurement_cov(&self) -> &SpdMatrix {
        &self.r
    }

    pub fn measurement(&self) -> &DVector<f64> {
        &self.z
    }

    /// Replaces the recorded measurement (used when simulating data into a
    /// model template).
    pub fn set_measurement(&mut self, z: DVector<f64>) -> Result<()> {
        if z.len() != self.r.dim() {
            return Err(Error::DimensionMismatch {
                what: "measurement vs measurement covariance",
                expected: self.r.dim(),
                got: z.len(),
            });
        }
        self.z = z;
        Ok(())
    }

    /// Student's t degrees of freedom of the measurement noise model.
    pub fn dof_meas(&self) -> f64 {
        self.dof_meas
    }

    /// Student's t degrees of freedom of the process noise model.
    pub fn dof_proc(&self) -> f64 {
        self.dof_proc
    }
}

/// A state estimate or ground truth over the whole horizon: one state per
/// stage plus its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub states: BlockVector,
    pub times: Vec<f64>,
}

impl StateTrajectory {
    pub fn new(states: BlockVector, times: Vec<f64>) -> Result<Self> {
        if states.len() != times.len() {
            return Err(Error::DimensionMismatch {
                what: "trajectory states vs time stamps",
                expected: times.len(),
                got: states.len(),
            });
        }
        Ok(Self { states, times })
    }

    /// All-zero trajectory, the default smoother start for linear models.
    pub fn zeros(dim: usize, times: Vec<f64>) -> Self {
        Self {
            states: BlockVector::zeros(dim, times.len()),
            times,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        self.states.block(k)
    }
}

/// The full horizon: `N` stages plus the anchor `g0 = g_1(x_0)` treated as a
/// known constant, so the first process residual is `w_1 = x_1 - g0`.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    stages: Vec<StageModel>,
    g0: DVector<f64>,
    dim: usize,
}

impl SequenceModel {
    pub fn new(stages: Vec<StageModel>, g0: DVector<f64>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter {
                name: "stages",
                message: "a sequence model needs at least one stage".to_string(),
            });
        }
        let dim = g0.len();
        for (k, s) in stages.iter().enumerate() {
            if s.state_dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "stage state dimension vs g0",
                    expected: dim,
                    got: stages[k].state_dim(),
                });
            }
        }
        Ok(Self { stages, g0, dim })
    }

    /// Number of stages `N`.
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.dim
    }

    /// Stage `k`, zero-indexed (stage `0` is the one anchored by `g0`).
    pub fn stage(&self, k: usize) -> &StageModel {
        &self.stages[k]
    }

    pub fn stages(&self) -> &[StageModel] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [StageModel] {
        &mut self.stages
    }

    /// The anchor constant `g0`.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.g0
    }

    fn check_trajectory(&self, x: &StateTrajectory) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "trajectory length vs stage count",
                expected: self.len(),
                got: x.len(),
            });
        }
        for b in x.states.iter() {
            if b.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "trajectory state dimension",
                    expected: self.dim,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    /// Process and measurement residuals of a trajectory:
    /// `w_1 = x_1 - g0`, `w_k = x_k - g_k(x_{k-1})`, `v_k = z_k - h_k(x_k)`.
    pub fn residuals(&self, x: &StateTrajectory) -> Result<(BlockVector, BlockVector)> {
        self.check_trajectory(x)?;
        let mut w = Vec::with_capacity(self.len());
        let mut v = Vec::with_capacity(self.len());
        for (k, stage) in self.stages.iter().enumerate() {
            let predicted = if k == 0 {
                self.g0.clone()
            } else {
                stage.transition(x.state(k - 1))
            };
            w.push(x.state(k) - predicted);
            v.push(stage.measurement() - stage.observation(x.state(k)));
        }
        Ok((BlockVector::new(w), BlockVector::new(v)))
    }

    /// Noise-free forward pass `x_1 = g0, x_k = g_k(x_{k-1})`, the default
    /// smoother start for nonlinear models.
    pub fn forward_simulation(&self, times: Vec<f64>) -> Result<StateTrajectory> {
        if times.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "time stamps vs stage count",
                expected: self.len(),
                got: times.len(),
            });
        }
        let mut states = Vec::with_capacity(self.len());
        let mut current = self.g0.clone();
        for stage in self.stages.iter().skip(1) {
            states.push(current.clone());
            current = stage.transition(&current);
        }
        states.push(current);
        StateTrajectory::new(BlockVector::new(states), times)
    }
}

/// Stage with linear process and measurement maps `g(x) = G x`,
/// `h(x) = H x`.
pub fn linear_stage(
    g_mat: DMatrix<f64>,
    q: DMatrix<f64>,
    h_mat: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DVector<f64>,
    dof_meas: f64,
    dof_proc: f64,
) -> Result<StageModel> {
    let n = q.nrows();
    if g_mat.nrows() != n || g_mat.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "linear process matrix",
            expected: n,
            got: g_mat.nrows().max(g_mat.ncols()),
        });
    }
    if h_mat.ncols() != n || h_mat.nrows() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "linear measurement matrix",
            expected: n,
            got: h_mat.ncols(),
        });
    }
    let g = g_mat.clone();
    let g_for_jac = g_mat;
    let h = h_mat.clone();
    let h_for_jac = h_mat;
    StageModel::new(
        Arc::new(move |x| &g * x),
        Arc::new(move |_| g_for_jac.clone()),
        Arc::new(move |x| &h * x),
        Arc::new(move |_| h_for_jac.clone()),
        q,
        r,
        z,
        dof_meas,
        dof_proc,
    )
}

/// Stage of the Van der Pol oscillator discretized by one explicit Euler
/// step of length `dt`, with a linear measurement map `H`:
///
/// ```text
/// g(x) = ( x1 + x2 dt,  x2 + (mu (1 - x1^2) x2 - x1) dt ).
/// ```
#[allow(clippy::too_many_arguments)] // mirrors the stage definition (dynamics, noise, data, dof)
pub fn vdp_stage(
    mu: f64,
    dt: f64,
    q: DMatrix<f64>,
    h_mat: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DVector<f64>,
    dof_meas: f64,
    dof_proc: f64,
) -> Result<StageModel> {
    if q.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            what: "Van der Pol process covariance",
            expected: 2,
            got: q.nrows(),
        });
    }
    if h_mat.ncols() != 2 || h_mat.nrows() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "Van der Pol measurement matrix",
            expected: 2,
            got: h_mat.ncols(),
        });
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "dt",
            message: format!("step length must be positive and finite, got {dt}"),
        });
    }
    let h = h_mat.clone();
    let h_for_jac = h_mat;
    StageModel::new(
        Arc::new(move |x: &DVector<f64>| {
            let (x1, x2) = (x[0], x[1]);
            DVector::from_column_slice(&[x1 + x2 * dt, x2 + (mu * (1.0 - x1 * x1) * x2 - x1) * dt])
        }),
        Arc::new(move |x: &DVector<f64>| {
            let (x1, x2) = (x[0], x[1]);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    1.0,
                    dt,
                    (-2.0 * mu * x1 * x2 - 1.0) * dt,
                    1.0 + mu * (1.0 - x1 * x1) * dt,
                ],
            )
        }),
        Arc::new(move |x| &h * x),
        Arc::new(move |_| h_for_jac.clone()),
        q,
        r,
        z,
        dof_meas,
        dof_proc,
    )
}
