//! Replicated experiments: triggering-rate sweeps over a criterion grid,
//! false-negative rate measurement against the `1/γ` design target, and
//! empirical audits of the closed-form lower bounds.
//!
//! Replication `r` of grid cell `g` at checkpoint `c` draws its criterion
//! samples from the stream `(base_seed, LANE_SWEEP, c, g, r)`, so results are
//! invariant to execution order and thread count; cells and replications are
//! reduced deterministically by key.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, FalseNegativeDesign};
use crate::error::Error;
use crate::problems::{Problem, Scenario};
use crate::rng::{stream, LANE_AUDIT, LANE_FN_RATE, LANE_PILOT, LANE_SWEEP};
use crate::schedule::ScheduleSpec;
use crate::sgd::{self, RunConfig};
use crate::stats::{wilson_interval, WILSON_Z95};
use crate::stopping::{sc0_evaluate, sc1_evaluate, sc2_evaluate, CriterionKind};
use crate::ParamVector;

/// Criterion grid of an experiment plan: one cell per `N` (SC-1) or per
/// `(N, δ)` pair (SC-2), all at the same threshold `ε`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub criterion: CriterionKind,
    pub n_values: Vec<u64>,
    #[serde(default)]
    pub delta_values: Vec<f64>,
    pub epsilon: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n == 0) {
            return Err(Error::invalid("grid needs sample sizes >= 1"));
        }
        match self.criterion {
            CriterionKind::Sc2 => {
                if self.delta_values.is_empty()
                    || self.delta_values.iter().any(|&d| !(0.0 < d && d < 1.0))
                {
                    return Err(Error::invalid("sc2 grid needs delta values in (0, 1)"));
                }
            }
            CriterionKind::Sc0 | CriterionKind::Sc1 => {
                if !self.delta_values.is_empty() {
                    return Err(Error::invalid("delta values only apply to sc2 grids"));
                }
            }
        }
        Ok(())
    }

    /// Cells in grid-index order.
    pub fn cells(&self) -> Vec<(u64, Option<f64>)> {
        match self.criterion {
            CriterionKind::Sc2 => self
                .n_values
                .iter()
                .flat_map(|&n| self.delta_values.iter().map(move |&d| (n, Some(d))))
                .collect(),
            _ => self.n_values.iter().map(|&n| (n, None)).collect(),
        }
    }
}

/// A full sweep: one trajectory, every grid cell replicated at every
/// checkpoint.
pub struct SweepPlan<'a> {
    pub problem: &'a dyn Problem,
    pub schedule: &'a ScheduleSpec,
    pub run: &'a RunConfig,
    pub grid: &'a GridSpec,
    pub replications: u64,
    pub base_seed: u64,
}

/// Aggregated result of one (checkpoint × cell).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub checkpoint_iteration: u64,
    pub oracle_grad_norm: f64,
    pub objective: f64,
    pub criterion: CriterionKind,
    pub n: u64,
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub replications: u64,
    pub trigger_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
}

/// Run the trajectory, then estimate the triggering rate of every grid cell
/// at every checkpoint from independent criterion streams.
pub fn trigger_rate_sweep(plan: &SweepPlan) -> Result<Vec<CellResult>, Error> {
    plan.grid.validate()?;
    if plan.replications == 0 {
        return Err(Error::invalid("replications must be >= 1"));
    }
    let trajectory = sgd::run(plan.problem, plan.schedule, plan.run)?;
    if let Some(iteration) = trajectory.diverged_at {
        return Err(Error::Diverged { context: "sweep trajectory", iteration });
    }
    let cells = plan.grid.cells();

    let tasks: Vec<(usize, usize)> = (0..trajectory.checkpoints.len())
        .flat_map(|c| (0..cells.len()).map(move |g| (c, g)))
        .collect();

    // indexed parallel collect preserves (checkpoint, grid index) order
    let results: Vec<CellResult> = tasks
        .par_iter()
        .map(|&(c, g)| {
            let checkpoint = &trajectory.checkpoints[c];
            let (n, delta) = cells[g];
            let mut triggers = 0u64;
            for r in 0..plan.replications {
                let mut rng =
                    stream(plan.base_seed, &[LANE_SWEEP, c as u64, g as u64, r]);
                let triggered = match plan.grid.criterion {
                    CriterionKind::Sc0 => {
                        sc0_evaluate(checkpoint.grad_norm, plan.grid.epsilon)
                    }
                    CriterionKind::Sc1 => {
                        sc1_evaluate(
                            plan.problem,
                            &checkpoint.point,
                            n,
                            plan.grid.epsilon,
                            &mut rng,
                        )?
                        .triggered
                    }
                    CriterionKind::Sc2 => {
                        sc2_evaluate(
                            plan.problem,
                            &checkpoint.point,
                            n,
                            plan.grid.epsilon,
                            delta.expect("sc2 cell has delta"),
                            &mut rng,
                        )?
                        .triggered
                    }
                };
                if triggered {
                    triggers += 1;
                }
            }
            let rate = triggers as f64 / plan.replications as f64;
            let (ci_lo, ci_hi) = wilson_interval(triggers, plan.replications, WILSON_Z95);
            let truth = sc0_evaluate(checkpoint.grad_norm, plan.grid.epsilon);
            Ok(CellResult {
                checkpoint_iteration: checkpoint.iteration,
                oracle_grad_norm: checkpoint.grad_norm,
                objective: checkpoint.objective,
                criterion: plan.grid.criterion,
                n,
                delta,
                epsilon: plan.grid.epsilon,
                replications: plan.replications,
                trigger_rate: rate,
                ci_lo,
                ci_hi,
                fn_rate: if truth { 1.0 - rate } else { 0.0 },
                fp_rate: if truth { 0.0 } else { rate },
            })
        })
        .collect::<Result<_, Error>>()?;

    Ok(results)
}

/// One criterion cell for targeted experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionCell {
    pub kind: CriterionKind,
    pub n: u64,
    pub delta: Option<f64>,
    pub epsilon: f64,
}

/// The gradient-norm gate below which a false-negative design's guarantee
/// applies: `ρε/√γ` for SC-1 and SC-2 under scenario B, `ρε/(π₃γ)` for SC-2
/// under scenario C.
pub fn fn_gate(
    cell: &CriterionCell,
    design: &FalseNegativeDesign,
    pareto_pi3: Option<f64>,
) -> Result<f64, Error> {
    design.validate()?;
    match (cell.kind, design.scenario) {
        (CriterionKind::Sc1, _) => Ok(design.rho * cell.epsilon / design.gamma.sqrt()),
        (CriterionKind::Sc2, Scenario::B) => {
            Ok(design.rho * cell.epsilon / design.gamma.sqrt())
        }
        (CriterionKind::Sc2, Scenario::C) => {
            let pi3 = pareto_pi3
                .ok_or_else(|| Error::invalid("scenario C gate needs pi3"))?;
            Ok(design.rho * cell.epsilon / (pi3 * design.gamma))
        }
        (CriterionKind::Sc2, Scenario::A) => {
            Err(Error::invalid("sc2 false-negative designs cover scenarios B and C"))
        }
        (CriterionKind::Sc0, _) => {
            Err(Error::invalid("the deterministic criterion has no false negatives"))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FnRateReport {
    pub reps: u64,
    /// Fraction of replications in which the criterion did NOT trigger.
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Design target `1/γ`.
    pub target: f64,
    pub gate: f64,
    pub oracle_grad_norm: f64,
}

/// Estimate the false-negative rate of a criterion cell at a fixed iterate
/// satisfying the design's gradient gate. Replication `r` draws from
/// `(base_seed, LANE_FN_RATE, r)`.
pub fn false_negative_rate(
    problem: &dyn Problem,
    theta: &ParamVector,
    cell: &CriterionCell,
    design: &FalseNegativeDesign,
    reps: u64,
    base_seed: u64,
) -> Result<FnRateReport, Error> {
    if reps == 0 {
        return Err(Error::invalid("reps must be >= 1"));
    }
    let gate = fn_gate(cell, design, problem.bcn().pareto_pi3)?;
    let grad_norm = problem.oracle_gradient(theta)?.norm();
    if grad_norm > gate {
        return Err(Error::precondition(format!(
            "oracle gradient norm {grad_norm} exceeds the design gate {gate}"
        )));
    }
    let misses: u64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(base_seed, &[LANE_FN_RATE, r]);
            let triggered = match cell.kind {
                CriterionKind::Sc1 => {
                    sc1_evaluate(problem, theta, cell.n, cell.epsilon, &mut rng)?.triggered
                }
                CriterionKind::Sc2 => {
                    sc2_evaluate(
                        problem,
                        theta,
                        cell.n,
                        cell.epsilon,
                        cell.delta.ok_or_else(|| Error::invalid("sc2 cell needs delta"))?,
                        &mut rng,
                    )?
                    .triggered
                }
                CriterionKind::Sc0 => {
                    return Err(Error::invalid("sc0 has no false negatives"))
                }
            };
            Ok(u64::from(!triggered))
        })
        .sum::<Result<u64, Error>>()?;
    let rate = misses as f64 / reps as f64;
    let (ci_lo, ci_hi) = wilson_interval(misses, reps, WILSON_Z95);
    Ok(FnRateReport {
        reps,
        rate,
        ci_lo,
        ci_hi,
        target: 1.0 / design.gamma,
        gate,
        oracle_grad_norm: grad_norm,
    })
}

/// Monte Carlo estimate of `P[‖∇f(θ, X)‖ ≤ ε]` from `draws` samples.
pub fn estimate_pass_probability(
    problem: &dyn Problem,
    theta: &ParamVector,
    epsilon: f64,
    draws: u64,
    base_seed: u64,
) -> Result<f64, Error> {
    if draws == 0 {
        return Err(Error::invalid("pilot draws must be >= 1"));
    }
    let mut rng = stream(base_seed, &[LANE_PILOT]);
    let mut passing = 0u64;
    for _ in 0..draws {
        let outcome = problem.sample(&mut rng);
        if problem.stochastic_gradient(theta, &outcome)?.norm() <= epsilon {
            passing += 1;
        }
    }
    Ok(passing as f64 / draws as f64)
}

/// Which lower bound an audit cell checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "bound", rename_all = "snake_case")]
pub enum AuditBound {
    /// Second-moment bound on the SC-1 statistic.
    Sc1Markov,
    /// Tail-certificate bound on the SC-1 statistic.
    Sc1Pareto,
    /// McDiarmid bound on the SC-2 vote, with the pass probability estimated
    /// by a pilot of the given size.
    Sc2McDiarmid { pilot_draws: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditCell {
    pub bound: AuditBound,
    pub n: u64,
    pub delta: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub theta_index: usize,
    pub cell_index: usize,
    pub oracle_grad_norm: f64,
    pub n: u64,
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub bound: f64,
    pub vacuous: bool,
    pub empirical: f64,
    /// Three-sigma binomial slack at the bound value.
    pub slack: f64,
    pub pass: bool,
}

/// Compare empirical trigger frequencies against the closed-form lower
/// bounds on a (θ × cell) grid. Non-vacuous bounds must be met within a
/// three-sigma binomial slack.
pub fn bound_audit(
    problem: &dyn Problem,
    thetas: &[ParamVector],
    cells: &[AuditCell],
    reps: u64,
    base_seed: u64,
) -> Result<Vec<AuditRow>, Error> {
    if reps == 0 || thetas.is_empty() || cells.is_empty() {
        return Err(Error::invalid("audit needs thetas, cells, and reps >= 1"));
    }
    let bcn = problem.bcn();
    let tasks: Vec<(usize, usize)> = (0..thetas.len())
        .flat_map(|t| (0..cells.len()).map(move |c| (t, c)))
        .collect();

    let rows: Vec<AuditRow> = tasks
        .par_iter()
        .map(|&(t, c)| {
            let theta = &thetas[t];
            let cell = &cells[c];
            let grad_norm = problem.oracle_gradient(theta)?.norm();

            let (bound, vacuous, is_vote, delta) = match &cell.bound {
                AuditBound::Sc1Markov => {
                    let b = bounds::sc1_trigger_lower_bound(
                        bcn.noise_c1,
                        bcn.noise_c2,
                        cell.n,
                        grad_norm,
                        cell.epsilon,
                    );
                    (b.value, b.vacuous, false, None)
                }
                AuditBound::Sc1Pareto => {
                    let pi1 = bcn.pareto_pi1.ok_or_else(|| {
                        Error::precondition("problem declares no tail certificate")
                    })?;
                    let pi2 = bcn.pareto_pi2.expect("pi2 present with pi1");
                    let pi3 = bcn.pareto_pi3.expect("pi3 present with pi1");
                    if grad_norm > pi1 {
                        return Err(Error::precondition(format!(
                            "tail bound needs grad_norm <= pi1 ({grad_norm} > {pi1})"
                        )));
                    }
                    let b = bounds::pareto_trigger_lower_bound(
                        pi2,
                        pi3,
                        cell.n,
                        grad_norm,
                        cell.epsilon,
                    )?;
                    (b.value, b.vacuous, false, None)
                }
                AuditBound::Sc2McDiarmid { pilot_draws } => {
                    let delta = cell
                        .delta
                        .ok_or_else(|| Error::invalid("sc2 audit cell needs delta"))?;
                    let pass = estimate_pass_probability(
                        problem,
                        theta,
                        cell.epsilon,
                        *pilot_draws,
                        crate::rng::derive_seed(base_seed, &[LANE_AUDIT, t as u64, c as u64]),
                    )?;
                    let gap = delta - pass;
                    let b = bounds::sc2_trigger_lower_bound(cell.n, gap)?;
                    (b.value, b.vacuous, true, Some(delta))
                }
            };

            let mut triggers = 0u64;
            for r in 0..reps {
                let mut rng = stream(base_seed, &[LANE_AUDIT, t as u64, c as u64, r]);
                let triggered = if is_vote {
                    sc2_evaluate(
                        problem,
                        theta,
                        cell.n,
                        cell.epsilon,
                        delta.expect("vote cell"),
                        &mut rng,
                    )?
                    .triggered
                } else {
                    sc1_evaluate(problem, theta, cell.n, cell.epsilon, &mut rng)?.triggered
                };
                if triggered {
                    triggers += 1;
                }
            }
            let empirical = triggers as f64 / reps as f64;
            let slack = if vacuous {
                0.0
            } else {
                3.0 * (bound * (1.0 - bound) / reps as f64).sqrt()
            };
            let pass = vacuous || empirical >= bound - slack;
            Ok(AuditRow {
                theta_index: t,
                cell_index: c,
                oracle_grad_norm: grad_norm,
                n: cell.n,
                delta: cell.delta,
                epsilon: cell.epsilon,
                bound,
                vacuous,
                empirical,
                slack,
                pass,
            })
        })
        .collect::<Result<_, Error>>()?;

    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearRegression, Rademacher};
    use crate::sgd::InitialPoint;
    use nalgebra::dvector;

    fn small_run(dim: usize) -> RunConfig {
        RunConfig {
            seed: 21,
            budget: 100,
            checkpoint_every: 25,
            init: InitialPoint::Fixed { values: vec![0.0; dim] },
        }
    }

    #[test]
    fn noise_free_regression_sweep_rate_is_one() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.0).unwrap();
        let schedule = ScheduleSpec::ScalarRational { a: 0.1, b: 100.0, dim: 2 };
        let grid = GridSpec {
            criterion: CriterionKind::Sc1,
            n_values: vec![5, 20],
            delta_values: vec![],
            epsilon: 0.07,
        };
        let run = small_run(2);
        let plan = SweepPlan {
            problem: &problem,
            schedule: &schedule,
            run: &run,
            grid: &grid,
            replications: 40,
            base_seed: 77,
        };
        let cells = trigger_rate_sweep(&plan).unwrap();
        assert_eq!(cells.len(), 5 * 2); // 5 checkpoints (0,25,50,75,100) × 2 cells
        for cell in &cells {
            assert_eq!(cell.trigger_rate, 1.0);
            assert_eq!(cell.fn_rate, 0.0);
            assert_eq!(cell.fp_rate, 0.0);
            assert!(cell.ci_lo < 1.0 && cell.ci_hi == 1.0);
        }
    }

    #[test]
    fn rademacher_sc2_sweep_rate_is_zero() {
        let problem = Rademacher::new();
        let schedule = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        let grid = GridSpec {
            criterion: CriterionKind::Sc2,
            n_values: vec![50, 100],
            delta_values: vec![0.5, 0.8],
            epsilon: 0.5,
        };
        let run = small_run(1);
        let plan = SweepPlan {
            problem: &problem,
            schedule: &schedule,
            run: &run,
            grid: &grid,
            replications: 25,
            base_seed: 3,
        };
        let cells = trigger_rate_sweep(&plan).unwrap();
        assert_eq!(cells.len(), 5 * 4);
        for cell in &cells {
            assert_eq!(cell.trigger_rate, 0.0);
            // oracle norm is 0 ≤ ε, so every miss is a false negative
            assert_eq!(cell.fn_rate, 1.0);
        }
    }

    #[test]
    fn sweep_results_independent_of_thread_count() {
        let problem = LinearRegression::isotropic(dvector![0.2, -0.4], 0.3).unwrap();
        let schedule = ScheduleSpec::ScalarRational { a: 0.1, b: 50.0, dim: 2 };
        let grid = GridSpec {
            criterion: CriterionKind::Sc1,
            n_values: vec![10, 50],
            delta_values: vec![],
            epsilon: 0.2,
        };
        let run = small_run(2);
        let plan = SweepPlan {
            problem: &problem,
            schedule: &schedule,
            run: &run,
            grid: &grid,
            replications: 30,
            base_seed: 5,
        };
        let wide = trigger_rate_sweep(&plan).unwrap();
        let narrow = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| trigger_rate_sweep(&plan).unwrap());
        let rates_wide: Vec<f64> = wide.iter().map(|c| c.trigger_rate).collect();
        let rates_narrow: Vec<f64> = narrow.iter().map(|c| c.trigger_rate).collect();
        assert_eq!(rates_wide, rates_narrow);
    }

    #[test]
    fn fn_rate_zero_at_interpolating_point() {
        let problem = LinearRegression::isotropic(dvector![0.3, 0.3], 0.0).unwrap();
        let cell = CriterionCell {
            kind: CriterionKind::Sc1,
            n: 10,
            delta: None,
            epsilon: 0.07,
        };
        let design = FalseNegativeDesign { rho: 0.5, gamma: 10.0, scenario: Scenario::B };
        let report = false_negative_rate(
            &problem,
            &dvector![0.3, 0.3],
            &cell,
            &design,
            200,
            11,
        )
        .unwrap();
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.target, 0.1);
    }

    #[test]
    fn fn_rate_rejects_gate_violation() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.0).unwrap();
        let cell = CriterionCell {
            kind: CriterionKind::Sc1,
            n: 10,
            delta: None,
            epsilon: 0.07,
        };
        let design = FalseNegativeDesign { rho: 0.5, gamma: 10.0, scenario: Scenario::B };
        // gate is ρε/√γ ≈ 0.011; a point with ‖∇F‖ = 1 violates it
        let err =
            false_negative_rate(&problem, &dvector![1.0, 0.0], &cell, &design, 100, 1)
                .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn vacuous_audit_cells_pass_trivially() {
        let problem = Rademacher::new();
        // C₁ = 1 makes the SC-1 bound vacuous at N = 1, ε = 0.5
        let cells = vec![AuditCell {
            bound: AuditBound::Sc1Markov,
            n: 1,
            delta: None,
            epsilon: 0.5,
        }];
        let rows =
            bound_audit(&problem, &[dvector![0.2]], &cells, 50, 13).unwrap();
        assert!(rows[0].vacuous);
        assert!(rows[0].pass);
        assert!(rows[0].bound <= 0.0);
    }

    #[test]
    fn regression_audit_bound_holds() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.0).unwrap();
        // scenario B at small gradient: bound close to one, empirically met
        let cells = vec![AuditCell {
            bound: AuditBound::Sc1Markov,
            n: 50,
            delta: None,
            epsilon: 0.07,
        }];
        let theta = dvector![0.007, 0.007]; // ‖∇F‖ ≈ 0.0099
        let rows = bound_audit(&problem, &[theta], &cells, 400, 29).unwrap();
        assert!(!rows[0].vacuous);
        assert!(rows[0].bound > 0.9);
        assert!(rows[0].pass, "empirical {} < bound {}", rows[0].empirical, rows[0].bound);
    }
}
