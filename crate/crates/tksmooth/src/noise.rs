//! Student's t log-density and the noise samplers used to generate
//! experiment data.
//!
//! The generalized Student's t density with mean `μ`, SPD scale matrix `R`
//! and degrees of freedom `s` has log-density
//!
//! ```text
//! log Γ((s+m)/2) − log Γ(s/2) − ½ log det(π s R)
//!     − ((s+m)/2) log(1 + ‖v−μ‖²_{R⁻¹} / s),
//! ```
//!
//! which tends to the Gaussian log-density as `s → ∞`. Measurement noise for
//! the Monte Carlo studies is drawn from mixture ("contamination") schemes:
//! nominal Gaussian draws replaced with probability `p` by a wide Gaussian or
//! a uniform outlier.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::models::SpdMatrix;

/// Parameters of a generalized Student's t distribution.
#[derive(Debug, Clone)]
pub struct StudentTParams {
    pub mean: DVector<f64>,
    pub scale: SpdMatrix,
    pub dof: f64,
}

impl StudentTParams {
    pub fn new(mean: DVector<f64>, scale: SpdMatrix, dof: f64) -> Result<Self> {
        if scale.dim() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "Student t mean vs scale matrix",
                expected: scale.dim(),
                got: mean.len(),
            });
        }
        if dof <= 0.0 || !dof.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dof",
                message: format!("degrees of freedom must be positive and finite, got {dof}"),
            });
        }
        Ok(Self { mean, scale, dof })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Log-density of the generalized Student's t at `v`.
pub fn student_t_log_density(v: &DVector<f64>, params: &StudentTParams) -> Result<f64> {
    let m = params.dim();
    if v.len() != m {
        return Err(Error::DimensionMismatch {
            what: "Student t evaluation point",
            expected: m,
            got: v.len(),
        });
    }
    let s = params.dof;
    let quad = params.scale.quad_inverse(&(v - &params.mean));
    let ln_gamma = statrs::function::gamma::ln_gamma;
    // log det(π s R) = m log(π s) + log det R.
    let log_det = (std::f64::consts::PI * s).ln() * m as f64 + params.scale.log_det();
    Ok(ln_gamma((s + m as f64) / 2.0)
        - ln_gamma(s / 2.0)
        - 0.5 * log_det
        - 0.5 * (s + m as f64) * (quad / s).ln_1p())
}

/// Measurement-noise model for data generation: a nominal Gaussian optionally
/// contaminated by an outlier component at rate `p`.
#[derive(Debug, Clone, PartialEq)]
pub enum ContaminationScheme {
    /// `N(0, variance)`.
    Nominal { variance: f64 },
    /// `(1−p) N(0, variance) + p N(0, outlier_variance)`.
    ContaminatingNormal {
        variance: f64,
        p: f64,
        outlier_variance: f64,
    },
    /// `(1−p) N(0, variance) + p U[lo, hi]`.
    ContaminatingUniform {
        variance: f64,
        p: f64,
        lo: f64,
        hi: f64,
    },
}

impl ContaminationScheme {
    pub fn validate(&self) -> Result<()> {
        let check_var = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    message: format!("variance must be positive and finite, got {v}"),
                })
            }
        };
        match *self {
            Self::Nominal { variance } => check_var("variance", variance),
            Self::ContaminatingNormal {
                variance,
                p,
                outlier_variance,
            } => {
                check_var("variance", variance)?;
                check_var("phi", outlier_variance)?;
                Self::check_p(p)
            }
            Self::ContaminatingUniform {
                variance,
                p,
                lo,
                hi,
            } => {
                check_var("variance", variance)?;
                Self::check_p(p)?;
                if lo < hi {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "lo/hi",
                        message: format!("uniform bounds must satisfy lo < hi, got [{lo}, {hi}]"),
                    })
                }
            }
        }
    }

    fn check_p(p: f64) -> Result<()> {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "p",
                message: format!("contamination probability must lie in [0, 1], got {p}"),
            })
        }
    }

    /// One draw. Every call first consumes a uniform for the mixture choice,
    /// so schemes with `p = 0` replay the nominal stream exactly.
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        let pick: f64 = rng.gen();
        match *self {
            Self::Nominal { variance } => gaussian_scalar(variance, rng),
            Self::ContaminatingNormal {
                variance,
                p,
                outlier_variance,
            } => {
                if pick < p {
                    gaussian_scalar(outlier_variance, rng)
                } else {
                    gaussian_scalar(variance, rng)
                }
            }
            Self::ContaminatingUniform {
                variance,
                p,
                lo,
                hi,
            } => {
                if pick < p {
                    Uniform::new_inclusive(lo, hi).sample(rng)
                } else {
                    gaussian_scalar(variance, rng)
                }
            }
        }
    }
}

fn gaussian_scalar(variance: f64, rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, variance.sqrt())
        .expect("validated variance")
        .sample(rng)
}

/// The ChaCha stream for one Monte Carlo run, derived from the master seed
/// and the run index so runs are independent and order-insensitive.
pub fn run_stream(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// `count` i.i.d. scalar draws from `scheme`, on the stream derived from
/// `(seed, 0)`.
pub fn sample_measurement_noise(
    scheme: &ContaminationScheme,
    seed: u64,
    count: usize,
) -> Result<Vec<f64>> {
    scheme.validate()?;
    let mut rng = run_stream(seed, 0);
    Ok((0..count).map(|_| scheme.draw(&mut rng)).collect())
}

/// A draw from `N(mean, covariance)` via the Cholesky factor of the
/// covariance.
pub fn sample_gaussian_vector(
    mean: &DVector<f64>,
    covariance: &SpdMatrix,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let std_normal: DVector<f64> =
        DVector::from_fn(covariance.dim(), |_, _| StandardNormal.sample(rng));
    mean + covariance.chol_l() * std_normal
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn scalar_t(dof: f64, scale: f64) -> StudentTParams {
        StudentTParams::new(
            DVector::zeros(1),
            SpdMatrix::new(DMatrix::from_element(1, 1, scale), "scale").unwrap(),
            dof,
        )
        .unwrap()
    }

    #[test]
    fn cauchy_at_mode() {
        let p = scalar_t(1.0, 1.0);
        let ld = student_t_log_density(&DVector::zeros(1), &p).unwrap();
        assert_relative_eq!(ld, -(std::f64::consts::PI.ln()), max_relative = 1e-12);
    }

    /// Composite Simpson integral of the density over the whole line via the
    /// substitution v = μ + σ tan u, which maps (−π/2, π/2) onto ℝ.
    fn normalization(params: &StudentTParams) -> f64 {
        let sigma = params.scale.matrix()[(0, 0)].sqrt();
        let mu = params.mean[0];
        let steps = 40_000; // even
        let a = -std::f64::consts::FRAC_PI_2;
        let h = std::f64::consts::PI / steps as f64;
        let f = |u: f64| {
            let sec2 = 1.0 / (u.cos() * u.cos());
            let v = mu + sigma * u.tan();
            student_t_log_density(&DVector::from_element(1, v), params)
                .unwrap()
                .exp()
                * sigma
                * sec2
        };
        let mut acc = 0.0;
        for i in 0..steps {
            let u0 = a + i as f64 * h;
            // Open endpoints: tan is singular exactly at ±π/2; the integrand
            // extends continuously, so nudge the outermost nodes inward.
            let left = if i == 0 { u0 + 1e-9 } else { u0 };
            let right = if i == steps - 1 {
                u0 + h - 1e-9
            } else {
                u0 + h
            };
            acc += (right - left) / 6.0 * (f(left) + 4.0 * f(0.5 * (left + right)) + f(right));
        }
        acc
    }

    #[test]
    fn density_normalizes_to_one() {
        for (dof, scale) in [(1.0, 1.0), (4.0, 1.0), (4.0, 0.25), (100.0, 2.0)] {
            let p = scalar_t(dof, scale);
            let total = normalization(&p);
            assert!(
                (total - 1.0).abs() <= 1e-6,
                "dof={dof} scale={scale}: integral {total}"
            );
        }
    }

    #[test]
    fn gaussian_limit_of_large_dof() {
        let p = scalar_t(1e6, 1.0);
        for v in [0.0, 1.0, 2.0] {
            let t_density = student_t_log_density(&DVector::from_element(1, v), &p)
                .unwrap()
                .exp();
            let normal = (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!(
                (t_density - normal).abs() <= 1e-4,
                "v={v}: {t_density} vs {normal}"
            );
        }
    }

    #[test]
    fn density_is_symmetric_and_decreasing() {
        let p = scalar_t(4.0, 0.5);
        let at = |v: f64| student_t_log_density(&DVector::from_element(1, v), &p).unwrap();
        let mut prev = at(0.0);
        for i in 1..40 {
            let v = 0.25 * i as f64;
            assert_eq!(at(v), at(-v), "symmetry at {v}");
            let cur = at(v);
            assert!(cur < prev, "not decreasing at {v}");
            prev = cur;
        }
    }

    #[test]
    fn nominal_sample_variance_matches() {
        let scheme = ContaminationScheme::Nominal { variance: 0.25 };
        let draws = sample_measurement_noise(&scheme, 42, 100_000).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var =
            draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((0.24..=0.26).contains(&var), "sample variance {var}");
    }

    #[test]
    fn zero_rate_mixture_replays_nominal_stream() {
        let nominal =
            sample_measurement_noise(&ContaminationScheme::Nominal { variance: 0.25 }, 7, 1000)
                .unwrap();
        let mixture = sample_measurement_noise(
            &ContaminationScheme::ContaminatingNormal {
                variance: 0.25,
                p: 0.0,
                outlier_variance: 100.0,
            },
            7,
            1000,
        )
        .unwrap();
        assert_eq!(nominal, mixture);
    }

    #[test]
    fn pure_uniform_bounds_and_mean() {
        let scheme = ContaminationScheme::ContaminatingUniform {
            variance: 0.25,
            p: 1.0,
            lo: -10.0,
            hi: 10.0,
        };
        let draws = sample_measurement_noise(&scheme, 11, 100_000).unwrap();
        assert!(draws.iter().all(|d| (-10.0..=10.0).contains(d)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() <= 0.1, "sample mean {mean}");
    }

    #[test]
    fn gaussian_vector_moments_and_determinism() {
        let cov = SpdMatrix::new(DMatrix::identity(2, 2), "cov").unwrap();
        let mean = DVector::from_column_slice(&[5.0, 5.0]);
        let mut rng = run_stream(3, 0);
        let draws: Vec<DVector<f64>> = (0..100_000)
            .map(|_| sample_gaussian_vector(&mean, &cov, &mut rng))
            .collect();
        let emp_mean = draws.iter().sum::<DVector<f64>>() / draws.len() as f64;
        assert!((emp_mean[0] - 5.0).abs() <= 0.02 && (emp_mean[1] - 5.0).abs() <= 0.02);
        let mut emp_cov = DMatrix::zeros(2, 2);
        for d in &draws {
            let c = d - &emp_mean;
            emp_cov += &c * c.transpose();
        }
        emp_cov /= (draws.len() - 1) as f64;
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((emp_cov[(i, j)] - expect).abs() <= 0.02);
            }
        }

        let mut r1 = run_stream(9, 4);
        let mut r2 = run_stream(9, 4);
        let a = sample_gaussian_vector(&mean, &cov, &mut r1);
        let b = sample_gaussian_vector(&mean, &cov, &mut r2);
        assert_eq!(a, b);
    }

    #[test]
    fn scheme_validation() {
        assert!(ContaminationScheme::Nominal { variance: 0.0 }
            .validate()
            .is_err());
        assert!(ContaminationScheme::ContaminatingNormal {
            variance: 0.25,
            p: 1.5,
            outlier_variance: 10.0
        }
        .validate()
        .is_err());
        assert!(ContaminationScheme::ContaminatingUniform {
            variance: 0.25,
            p: 0.5,
            lo: 3.0,
            hi: 3.0
        }
        .validate()
        .is_err());
    }
}
