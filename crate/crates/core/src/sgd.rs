//! The stochastic gradient iteration `β_{k+1} = β_k − M_k ∇f(β_k, X_{k+1})`
//! with checkpoint instrumentation.
//!
//! The hot loop touches only stochastic gradients; oracle quantities are
//! evaluated at checkpoints, never inside the iteration.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::problems::Problem;
use crate::rng::{stream, LANE_INIT, LANE_TRAJECTORY};
use crate::schedule::{step_matrix, ScheduleSpec, StepMatrix};
use crate::ParamVector;

/// Where a run starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPoint {
    Fixed { values: Vec<f64> },
    /// `β₀ ~ N(0, std²·I)`, derived from the run seed.
    Gaussian { dim: usize, std: f64 },
}

impl InitialPoint {
    pub fn dimension(&self) -> usize {
        match self {
            InitialPoint::Fixed { values } => values.len(),
            InitialPoint::Gaussian { dim, .. } => *dim,
        }
    }

    fn realise(&self, seed: u64) -> ParamVector {
        match self {
            InitialPoint::Fixed { values } => DVector::from_column_slice(values),
            InitialPoint::Gaussian { dim, std } => {
                let mut rng = stream(seed, &[LANE_INIT]);
                DVector::from_iterator(
                    *dim,
                    (0..*dim).map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        std * z
                    }),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub budget: u64,
    pub checkpoint_every: u64,
    pub init: InitialPoint,
}

impl RunConfig {
    pub fn validate(&self, problem_dim: usize) -> Result<(), Error> {
        if self.budget == 0 || self.checkpoint_every == 0 {
            return Err(Error::invalid("budget and checkpoint_every must be >= 1"));
        }
        if self.budget < self.checkpoint_every {
            return Err(Error::invalid("budget must be >= checkpoint_every"));
        }
        if self.init.dimension() != problem_dim {
            return Err(Error::DimensionMismatch {
                expected: problem_dim,
                got: self.init.dimension(),
            });
        }
        if let InitialPoint::Fixed { values } = &self.init {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("initial point must be finite"));
            }
        }
        Ok(())
    }
}

/// Oracle measurements at one checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: u64,
    pub point: ParamVector,
    pub grad_norm: f64,
    pub objective: f64,
}

/// The recorded outcome of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub final_point: ParamVector,
    /// Iteration at which a non-finite iterate appeared, if any; the
    /// checkpoints then end at the last finite one.
    pub diverged_at: Option<u64>,
}

impl Trajectory {
    pub fn min_checkpoint_grad_norm(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.grad_norm).fold(f64::INFINITY, f64::min)
    }
}

/// One update: `θ − M·g`.
pub fn step(theta: &ParamVector, m: &StepMatrix, g: &ParamVector) -> Result<ParamVector, Error> {
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: g.len() });
    }
    let next = theta - m.apply(g)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { context: "sgd step", iteration: 0 });
    }
    Ok(next)
}

/// Sequential driver shared by the plain run and the stopping-rule harness.
/// Draws exactly one sample per iteration from the trajectory lane.
pub(crate) struct Engine<'a> {
    problem: &'a dyn Problem,
    schedule: &'a ScheduleSpec,
    rng: ChaCha8Rng,
    theta: ParamVector,
    iteration: u64,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        problem: &'a dyn Problem,
        schedule: &'a ScheduleSpec,
        cfg: &RunConfig,
    ) -> Result<Self, Error> {
        schedule.validate()?;
        cfg.validate(problem.dimension())?;
        if schedule.dimension() != problem.dimension() {
            return Err(Error::DimensionMismatch {
                expected: problem.dimension(),
                got: schedule.dimension(),
            });
        }
        Ok(Self {
            problem,
            schedule,
            rng: stream(cfg.seed, &[LANE_TRAJECTORY]),
            theta: cfg.init.realise(cfg.seed),
            iteration: 0,
        })
    }

    pub(crate) fn iteration(&self) -> u64 {
        self.iteration
    }

    pub(crate) fn theta(&self) -> &ParamVector {
        &self.theta
    }

    /// Advance to iteration `target`, or stop early with a divergence error.
    pub(crate) fn advance_to(&mut self, target: u64) -> Result<(), Error> {
        while self.iteration < target {
            let m = step_matrix(self.schedule, self.iteration)?;
            let outcome = self.problem.sample(&mut self.rng);
            let g = self.problem.stochastic_gradient(&self.theta, &outcome)?;
            let next = step(&self.theta, &m, &g).map_err(|e| match e {
                Error::Diverged { context, .. } => {
                    Error::Diverged { context, iteration: self.iteration + 1 }
                }
                other => other,
            })?;
            self.theta = next;
            self.iteration += 1;
        }
        Ok(())
    }

    pub(crate) fn measure(&self) -> Result<Checkpoint, Error> {
        Ok(Checkpoint {
            iteration: self.iteration,
            point: self.theta.clone(),
            grad_norm: self.problem.oracle_gradient(&self.theta)?.norm(),
            objective: self.problem.oracle_objective(&self.theta),
        })
    }
}

/// Run the iteration for `cfg.budget` steps, checkpointing at iteration 0,
/// every `checkpoint_every` iterations, and at the final iterate.
///
/// On divergence the trajectory is truncated at the last finite checkpoint
/// and `diverged_at` records the offending iteration.
pub fn run(
    problem: &dyn Problem,
    schedule: &ScheduleSpec,
    cfg: &RunConfig,
) -> Result<Trajectory, Error> {
    let mut engine = Engine::new(problem, schedule, cfg)?;
    let mut checkpoints = vec![engine.measure()?];
    let mut diverged_at = None;

    let mut next_stop = cfg.checkpoint_every;
    while engine.iteration() < cfg.budget {
        let target = next_stop.min(cfg.budget);
        match engine.advance_to(target) {
            Ok(()) => {
                let measurement = engine.measure()?;
                // a finite iterate can still overflow the oracle measurements
                if !measurement.grad_norm.is_finite() || !measurement.objective.is_finite() {
                    diverged_at = Some(measurement.iteration);
                    break;
                }
                checkpoints.push(measurement);
                next_stop += cfg.checkpoint_every;
            }
            Err(Error::Diverged { iteration, .. }) => {
                diverged_at = Some(iteration);
                break;
            }
            Err(other) => return Err(other),
        }
    }

    Ok(Trajectory {
        checkpoints,
        final_point: engine.theta().clone(),
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearRegression, Rademacher, SampleOutcome};
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn fixed(values: &[f64]) -> InitialPoint {
        InitialPoint::Fixed { values: values.to_vec() }
    }

    #[test]
    fn step_hand_values() {
        let spec = ScheduleSpec::ScalarPower { a: 0.5, q: 0.0, dim: 2 };
        let m = step_matrix(&spec, 0).unwrap();
        // θ = (1, 1), M = ½I, g = (2, −2) → (0, 2)
        let next = step(&dvector![1.0, 1.0], &m, &dvector![2.0, -2.0]).unwrap();
        assert_eq!(next, dvector![0.0, 2.0]);
        // zero gradient leaves θ unchanged
        let same = step(&dvector![1.0, 1.0], &m, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(same, dvector![1.0, 1.0]);
        // scalar case: θ = 0.3, λ = 0.1, g = 1 → 0.2
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 0.0, dim: 1 };
        let m = step_matrix(&spec, 0).unwrap();
        let next = step(&dvector![0.3], &m, &dvector![1.0]).unwrap();
        assert_relative_eq!(next[0], 0.2, max_relative = 1e-15);
    }

    #[test]
    fn noise_free_regression_fixed_point() {
        let problem = LinearRegression::isotropic(dvector![1.0, -2.0, 0.5], 0.0).unwrap();
        let cfg = RunConfig {
            seed: 7,
            budget: 500,
            checkpoint_every: 100,
            init: fixed(&[1.0, -2.0, 0.5]),
        };
        let spec = ScheduleSpec::ScalarRational { a: 0.5, b: 100.0, dim: 3 };
        let traj = run(&problem, &spec, &cfg).unwrap();
        assert!(traj.diverged_at.is_none());
        for c in &traj.checkpoints {
            assert_eq!(c.grad_norm, 0.0);
        }
    }

    #[test]
    fn rademacher_oracle_norm_always_zero() {
        let problem = Rademacher::new();
        let cfg = RunConfig { seed: 3, budget: 200, checkpoint_every: 50, init: fixed(&[0.3]) };
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        let traj = run(&problem, &spec, &cfg).unwrap();
        for c in &traj.checkpoints {
            assert_eq!(c.grad_norm, 0.0);
        }
    }

    #[test]
    fn fixed_seed_reproduces_trajectory_bytes() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.3).unwrap();
        let cfg = RunConfig {
            seed: 11,
            budget: 1000,
            checkpoint_every: 250,
            init: InitialPoint::Gaussian { dim: 2, std: 1.0 },
        };
        let spec = ScheduleSpec::ScalarRational { a: 0.1, b: 50.0, dim: 2 };
        let a = run(&problem, &spec, &cfg).unwrap();
        let b = run(&problem, &spec, &cfg).unwrap();
        assert_eq!(a.final_point, b.final_point);
        let norms_a: Vec<f64> = a.checkpoints.iter().map(|c| c.grad_norm).collect();
        let norms_b: Vec<f64> = b.checkpoints.iter().map(|c| c.grad_norm).collect();
        assert_eq!(norms_a, norms_b);
    }

    /// Counts sample() calls to verify the one-draw-per-iteration contract.
    struct CountingProblem {
        inner: Rademacher,
        draws: AtomicU64,
    }

    impl Problem for CountingProblem {
        fn name(&self) -> &'static str {
            "counting"
        }
        fn dimension(&self) -> usize {
            1
        }
        fn bcn(&self) -> &crate::problems::BcnConstants {
            self.inner.bcn()
        }
        fn sample(&self, rng: &mut dyn rand::RngCore) -> SampleOutcome {
            self.draws.fetch_add(1, Ordering::Relaxed);
            self.inner.sample(rng)
        }
        fn stochastic_gradient(
            &self,
            theta: &ParamVector,
            outcome: &SampleOutcome,
        ) -> Result<ParamVector, Error> {
            self.inner.stochastic_gradient(theta, outcome)
        }
        fn oracle_gradient(&self, theta: &ParamVector) -> Result<ParamVector, Error> {
            self.inner.oracle_gradient(theta)
        }
        fn oracle_objective(&self, theta: &ParamVector) -> f64 {
            self.inner.oracle_objective(theta)
        }
    }

    #[test]
    fn exactly_one_sample_per_iteration() {
        let problem = CountingProblem { inner: Rademacher::new(), draws: AtomicU64::new(0) };
        let cfg = RunConfig { seed: 5, budget: 137, checkpoint_every: 10, init: fixed(&[0.0]) };
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        run(&problem, &spec, &cfg).unwrap();
        assert_eq!(problem.draws.load(Ordering::Relaxed), 137);
    }

    #[test]
    fn divergence_truncates_at_last_finite_checkpoint() {
        // a step size far above 2/λ_max(Σ) blows the quadratic up
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.0).unwrap();
        let cfg = RunConfig {
            seed: 1,
            budget: 100_000,
            checkpoint_every: 10,
            init: fixed(&[1.0e3, -1.0e3]),
        };
        let spec = ScheduleSpec::ScalarPower { a: 50.0, q: 0.0, dim: 2 };
        let traj = run(&problem, &spec, &cfg).unwrap();
        let diverged = traj.diverged_at.expect("should diverge");
        assert!(diverged > 0);
        assert!(traj.checkpoints.iter().all(|c| c.grad_norm.is_finite()));
        assert!(traj.checkpoints.last().unwrap().iteration <= diverged);
    }

    #[test]
    fn budget_below_checkpoint_stride_rejected() {
        let problem = Rademacher::new();
        let cfg = RunConfig { seed: 0, budget: 5, checkpoint_every: 10, init: fixed(&[0.0]) };
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        assert!(run(&problem, &spec, &cfg).is_err());
    }
}
