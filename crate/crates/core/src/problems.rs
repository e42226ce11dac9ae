//! Synthetic stochastic objectives with exact deterministic-gradient oracles.
//!
//! Each problem is a pair `(f, F)` with `F(θ) = E[f(θ, X)]`, exposing
//! stochastic gradients `∇f(θ, x)` for the optimiser and closed-form oracle
//! gradients `∇F(θ)` for validation only. Every problem declares the
//! regularity constants it satisfies:
//!
//! * `F ≥ F_lb`,
//! * `‖∇F(θ₁) − ∇F(θ₂)‖ ≤ C‖θ₁ − θ₂‖`,
//! * `E‖∇f(θ, X) − ∇F(θ)‖² ≤ C₁ + C₂‖∇F(θ)‖²`,
//!
//! and, for heavy-tailed problems, the tail certificate
//! `P[‖∇f(θ, X)‖ ≥ t] ≤ (π₃‖∇F(θ)‖ / t)^π₂` valid for `‖∇F(θ)‖ ≤ π₁` and
//! `t ≥ π₃‖∇F(θ)‖`.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ParamVector;

/// Noise regime a problem certifies.
///
/// `A`: general noise (`C₁ ≥ 0`). `B`: interpolation noise (`C₁ = 0`).
/// `C`: additionally certifies the Pareto tail constants `(π₁, π₂, π₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

/// Regularity constants a problem declares about itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcnConstants {
    pub f_lower_bound: f64,
    /// Lipschitz constant of the oracle gradient.
    pub lipschitz_c: f64,
    pub noise_c1: f64,
    pub noise_c2: f64,
    pub pareto_pi1: Option<f64>,
    pub pareto_pi2: Option<f64>,
    pub pareto_pi3: Option<f64>,
    pub scenario: Scenario,
}

impl BcnConstants {
    pub fn validate(&self) -> Result<(), Error> {
        if self.lipschitz_c < 0.0 || self.noise_c1 < 0.0 || self.noise_c2 < 0.0 {
            return Err(Error::invalid("BCN constants must be non-negative"));
        }
        if self.scenario == Scenario::B && self.noise_c1 != 0.0 {
            return Err(Error::invalid("scenario B requires C1 = 0"));
        }
        if self.scenario == Scenario::C {
            let pi1 = self.pareto_pi1.ok_or_else(|| Error::invalid("scenario C requires pi1"))?;
            let pi2 = self.pareto_pi2.ok_or_else(|| Error::invalid("scenario C requires pi2"))?;
            let pi3 = self.pareto_pi3.ok_or_else(|| Error::invalid("scenario C requires pi3"))?;
            if !(0.0 < pi1 && pi1 < 1.0) || !(0.0 < pi2 && pi2 < 1.0) || pi3 < 1.0 {
                return Err(Error::invalid(
                    "tail constants need pi1, pi2 in (0,1) and pi3 >= 1",
                ));
            }
        }
        Ok(())
    }
}

/// One realisation of the per-sample randomness `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    /// A Rademacher sign.
    Sign(f64),
    /// Regression pair: feature vector and response.
    Regression { features: DVector<f64>, response: f64 },
    /// Additive gradient noise.
    Noise(DVector<f64>),
    /// Positive gradient multiplier.
    Multiplier(f64),
}

/// A stochastic objective with exact oracles.
///
/// `oracle_gradient` is the exact expectation of `stochastic_gradient` over
/// the sample law; it exists for validation and scoring only and is never fed
/// to the estimated stopping criteria's decision rule.
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;
    fn dimension(&self) -> usize;
    fn bcn(&self) -> &BcnConstants;
    fn sample(&self, rng: &mut dyn RngCore) -> SampleOutcome;
    fn stochastic_gradient(
        &self,
        theta: &ParamVector,
        outcome: &SampleOutcome,
    ) -> Result<ParamVector, Error>;
    fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error>;
    fn oracle_objective(&self, theta: &ParamVector) -> f64;
}

fn check_dim(expected: usize, got: usize) -> Result<(), Error> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(&mut *rng)
}

/// Least squares `f(θ, (a, y)) = ½(aᵀθ − y)²` with Gaussian features
/// `a ~ N(0, Σ)`, `Σ` diagonal, and responses `y = aᵀθ* + σξ`.
///
/// With `u = θ − θ*`, `∇F(θ) = Σu` and (fourth-moment identity for Gaussian
/// features) `E‖∇f − ∇F‖² = tr(Σ)·uᵀΣu + uᵀΣ²u + σ²tr(Σ)`, which gives the
/// tight constants `C₁ = σ²tr(Σ)` and `C₂ = tr(Σ)/λ_min(Σ) + 1`. Noise-free
/// responses (`σ = 0`) interpolate, so the problem is scenario B there and
/// scenario A otherwise.
#[derive(Debug, Clone)]
pub struct LinearRegression {
    theta_star: DVector<f64>,
    cov_diag: DVector<f64>,
    noise_std: f64,
    bcn: BcnConstants,
}

impl LinearRegression {
    pub fn new(
        theta_star: DVector<f64>,
        cov_diag: DVector<f64>,
        noise_std: f64,
    ) -> Result<Self, Error> {
        if theta_star.is_empty() {
            return Err(Error::invalid("regression needs dimension >= 1"));
        }
        check_dim(theta_star.len(), cov_diag.len())?;
        if cov_diag.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::invalid("feature covariance diagonal must be positive"));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::invalid("response noise std must be >= 0"));
        }
        let trace: f64 = cov_diag.iter().sum();
        let lambda_min = cov_diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = cov_diag.iter().cloned().fold(0.0f64, f64::max);
        let bcn = BcnConstants {
            f_lower_bound: 0.5 * noise_std * noise_std,
            lipschitz_c: lambda_max,
            noise_c1: noise_std * noise_std * trace,
            noise_c2: trace / lambda_min + 1.0,
            pareto_pi1: None,
            pareto_pi2: None,
            pareto_pi3: None,
            scenario: if noise_std > 0.0 { Scenario::A } else { Scenario::B },
        };
        bcn.validate()?;
        Ok(Self { theta_star, cov_diag, noise_std, bcn })
    }

    /// Isotropic features, `Σ = I`.
    pub fn isotropic(theta_star: DVector<f64>, noise_std: f64) -> Result<Self, Error> {
        let dim = theta_star.len();
        Self::new(theta_star, DVector::from_element(dim, 1.0), noise_std)
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }
}

impl Problem for LinearRegression {
    fn name(&self) -> &'static str {
        "linear_regression"
    }

    fn dimension(&self) -> usize {
        self.theta_star.len()
    }

    fn bcn(&self) -> &BcnConstants {
        &self.bcn
    }

    fn sample(&self, rng: &mut dyn RngCore) -> SampleOutcome {
        let features = DVector::from_iterator(
            self.cov_diag.len(),
            self.cov_diag.iter().map(|&v| v.sqrt() * standard_normal(rng)),
        );
        let mut response = features.dot(&self.theta_star);
        if self.noise_std > 0.0 {
            response += self.noise_std * standard_normal(rng);
        }
        SampleOutcome::Regression { features, response }
    }

    fn stochastic_gradient(
        &self,
        theta: &ParamVector,
        outcome: &SampleOutcome,
    ) -> Result<ParamVector, Error> {
        check_dim(self.dimension(), theta.len())?;
        match outcome {
            SampleOutcome::Regression { features, response } => {
                check_dim(self.dimension(), features.len())?;
                let residual = features.dot(theta) - response;
                Ok(features * residual)
            }
            _ => Err(Error::invalid("regression expects a feature/response sample")),
        }
    }

    fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error> {
        check_dim(self.dimension(), theta.len())?;
        Ok((theta - &self.theta_star).component_mul(&self.cov_diag))
    }

    fn oracle_objective(&self, theta: &ParamVector) -> f64 {
        let u = theta - &self.theta_star;
        0.5 * (u.component_mul(&self.cov_diag).dot(&u) + self.noise_std * self.noise_std)
    }
}

/// The scalar objective `f(θ, X) = θX` with `X` Rademacher.
///
/// `F ≡ 0` and `∇F ≡ 0`, yet `‖∇f(θ, X)‖ = 1` for every outcome: the
/// stochastic gradients concentrate away from their mean, so a vote-based
/// criterion with `ε < 1` can never trigger.
#[derive(Debug, Clone)]
pub struct Rademacher {
    bcn: BcnConstants,
}

impl Rademacher {
    pub fn new() -> Self {
        Self {
            bcn: BcnConstants {
                f_lower_bound: 0.0,
                lipschitz_c: 0.0,
                noise_c1: 1.0,
                noise_c2: 0.0,
                pareto_pi1: None,
                pareto_pi2: None,
                pareto_pi3: None,
                scenario: Scenario::A,
            },
        }
    }
}

impl Default for Rademacher {
    fn default() -> Self {
        Self::new()
    }
}

impl Problem for Rademacher {
    fn name(&self) -> &'static str {
        "rademacher"
    }

    fn dimension(&self) -> usize {
        1
    }

    fn bcn(&self) -> &BcnConstants {
        &self.bcn
    }

    fn sample(&self, rng: &mut dyn RngCore) -> SampleOutcome {
        SampleOutcome::Sign(if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
    }

    fn stochastic_gradient(
        &self,
        theta: &ParamVector,
        outcome: &SampleOutcome,
    ) -> Result<ParamVector, Error> {
        check_dim(1, theta.len())?;
        match outcome {
            SampleOutcome::Sign(s) => Ok(DVector::from_element(1, *s)),
            _ => Err(Error::invalid("rademacher expects a sign sample")),
        }
    }

    fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error> {
        check_dim(1, theta.len())?;
        Ok(DVector::zeros(1))
    }

    fn oracle_objective(&self, _theta: &ParamVector) -> f64 {
        0.0
    }
}

/// Nonconvex well `F(θ) = ½‖θ‖² + a·Σᵢ sin(θᵢ)` observed through additive
/// Gaussian gradient noise: `∇f(θ, ξ) = ∇F(θ) + ξ`, `ξ ~ N(0, ν²I)`.
///
/// `∇F(θ) = θ + a·cos(θ)` coordinatewise; the Hessian `I − a·diag(sin θ)` has
/// eigenvalues in `[1 − a, 1 + a]`, so `C = 1 + a` and the objective is
/// genuinely nonconvex for `a > 1`. The noise is independent of `θ`, giving
/// `C₁ = ν²p` exactly and `C₂ = 0`.
#[derive(Debug, Clone)]
pub struct SineWell {
    dim: usize,
    amplitude: f64,
    noise_std: f64,
    bcn: BcnConstants,
}

impl SineWell {
    pub fn new(dim: usize, amplitude: f64, noise_std: f64) -> Result<Self, Error> {
        if dim == 0 {
            return Err(Error::invalid("sine well needs dimension >= 1"));
        }
        if amplitude < 0.0 || noise_std < 0.0 {
            return Err(Error::invalid("amplitude and noise std must be >= 0"));
        }
        let c1 = noise_std * noise_std * dim as f64;
        let bcn = BcnConstants {
            f_lower_bound: -amplitude * dim as f64,
            lipschitz_c: 1.0 + amplitude,
            noise_c1: c1,
            noise_c2: 0.0,
            pareto_pi1: None,
            pareto_pi2: None,
            pareto_pi3: None,
            scenario: if c1 > 0.0 { Scenario::A } else { Scenario::B },
        };
        Ok(Self { dim, amplitude, noise_std, bcn })
    }
}

impl Problem for SineWell {
    fn name(&self) -> &'static str {
        "sine_well"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn bcn(&self) -> &BcnConstants {
        &self.bcn
    }

    fn sample(&self, rng: &mut dyn RngCore) -> SampleOutcome {
        SampleOutcome::Noise(DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|_| self.noise_std * standard_normal(rng)),
        ))
    }

    fn stochastic_gradient(
        &self,
        theta: &ParamVector,
        outcome: &SampleOutcome,
    ) -> Result<ParamVector, Error> {
        match outcome {
            SampleOutcome::Noise(noise) => {
                check_dim(self.dim, noise.len())?;
                Ok(self.oracle_gradient(theta)? + noise)
            }
            _ => Err(Error::invalid("sine well expects a noise sample")),
        }
    }

    fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error> {
        check_dim(self.dim, theta.len())?;
        Ok(theta.map(|t| t + self.amplitude * t.cos()))
    }

    fn oracle_objective(&self, theta: &ParamVector) -> f64 {
        0.5 * theta.norm_squared() + self.amplitude * theta.iter().map(|t| t.sin()).sum::<f64>()
    }
}

/// Quadratic base objective `F(θ) = ½‖θ − θ*‖²` observed through a
/// heavy-tailed positive multiplier: `∇f(θ, V) = (V / E[V])·∇F(θ)` with `V`
/// drawn from a Pareto distribution of shape `π₂ ∈ (0, 1)` truncated to
/// `[1, v_max]`.
///
/// Truncation keeps the second moment finite, so the noise-model constants
/// exist (`C₁ = 0`, `C₂ = Var(V)/E[V]²`). The tail certificate holds with
/// `π₃ = 1` for every `θ`: since `E[V] ≥ 1`, for `t ≥ ‖∇F(θ)‖`
/// `P[‖∇f‖ ≥ t] = P[V ≥ tE[V]/‖∇F‖] ≤ (tE[V]/‖∇F‖)^{−π₂} ≤ (‖∇F‖/t)^{π₂}`.
/// We record `π₁ = 0.5` as the advertised small-gradient region.
#[derive(Debug, Clone)]
pub struct ParetoTail {
    theta_star: DVector<f64>,
    shape: f64,
    v_max: f64,
    mean_v: f64,
    bcn: BcnConstants,
}

impl ParetoTail {
    pub fn new(theta_star: DVector<f64>, shape: f64, v_max: f64) -> Result<Self, Error> {
        if theta_star.is_empty() {
            return Err(Error::invalid("pareto tail needs dimension >= 1"));
        }
        if !(0.0 < shape && shape < 1.0) {
            return Err(Error::invalid("tail index must lie in (0, 1)"));
        }
        if v_max <= 1.0 || !v_max.is_finite() {
            return Err(Error::invalid("truncation cap must exceed 1"));
        }
        let mean_v = truncated_pareto_moment(shape, v_max, 1);
        let second = truncated_pareto_moment(shape, v_max, 2);
        let noise_c2 = second / (mean_v * mean_v) - 1.0;
        let bcn = BcnConstants {
            f_lower_bound: 0.0,
            lipschitz_c: 1.0,
            noise_c1: 0.0,
            noise_c2,
            pareto_pi1: Some(0.5),
            pareto_pi2: Some(shape),
            pareto_pi3: Some(1.0),
            scenario: Scenario::C,
        };
        bcn.validate()?;
        Ok(Self { theta_star, shape, v_max, mean_v, bcn })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn mean_multiplier(&self) -> f64 {
        self.mean_v
    }
}

/// `E[V^k]` for a Pareto(shape) distribution truncated to `[1, v_max]`,
/// `k ∈ {1, 2}`, `shape ∈ (0, 1)`.
fn truncated_pareto_moment(shape: f64, v_max: f64, k: u32) -> f64 {
    let z = 1.0 - v_max.powf(-shape);
    let e = k as f64 - shape;
    shape * (v_max.powf(e) - 1.0) / (e * z)
}

impl Problem for ParetoTail {
    fn name(&self) -> &'static str {
        "pareto_tail"
    }

    fn dimension(&self) -> usize {
        self.theta_star.len()
    }

    fn bcn(&self) -> &BcnConstants {
        &self.bcn
    }

    fn sample(&self, rng: &mut dyn RngCore) -> SampleOutcome {
        // inverse CDF of the truncated Pareto
        let u: f64 = rng.gen();
        let z = 1.0 - self.v_max.powf(-self.shape);
        let v = (1.0 - u * z).powf(-1.0 / self.shape);
        SampleOutcome::Multiplier(v.min(self.v_max))
    }

    fn stochastic_gradient(
        &self,
        theta: &ParamVector,
        outcome: &SampleOutcome,
    ) -> Result<ParamVector, Error> {
        match outcome {
            SampleOutcome::Multiplier(v) => {
                Ok(self.oracle_gradient(theta)? * (*v / self.mean_v))
            }
            _ => Err(Error::invalid("pareto tail expects a multiplier sample")),
        }
    }

    fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error> {
        check_dim(self.dimension(), theta.len())?;
        Ok(theta - &self.theta_star)
    }

    fn oracle_objective(&self, theta: &ParamVector) -> f64 {
        0.5 * (theta - &self.theta_star).norm_squared()
    }
}
