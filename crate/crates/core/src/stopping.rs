//! Stopping criteria evaluated on a strictly increasing checkpoint schedule.
//!
//! Three rules decide, at evaluation index `j` (iterate `β_{T_j}`), whether
//! to halt:
//!
//! * SC-0 — the deterministic rule `‖∇F(β_{T_j})‖ ≤ ε` (oracle access),
//! * SC-1 — gradient estimation: `(1/N_j)‖Σᵢ ∇f(β_{T_j}, Z_ij)‖ ≤ ε` over
//!   `N_j` fresh samples,
//! * SC-2 — majority vote: the fraction of fresh samples with
//!   `‖∇f(β_{T_j}, Z_ij)‖ ≤ ε` reaches `δ_j`.
//!
//! Both comparisons are inclusive. Criterion samples come from a dedicated
//! seed lane `(seed, LANE_CRITERION, j, i)`, so they are independent of the
//! trajectory stream. Records carry the oracle gradient norm for scoring
//! only; the decision rules never read it.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::problems::{Problem, SampleOutcome};
use crate::rng::{stream, LANE_CRITERION};
use crate::schedule::ScheduleSpec;
use crate::sgd::{Engine, RunConfig};
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Sc0,
    Sc1,
    Sc2,
}

/// Deterministic rule `j ↦ N_j` (evaluation indices start at 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SampleSizeRule {
    Constant { n: u64 },
    /// `N_j = base + slope·(j − 1)`.
    Affine { base: u64, slope: u64 },
}

impl SampleSizeRule {
    pub fn at(&self, j: u64) -> u64 {
        match self {
            SampleSizeRule::Constant { n } => *n,
            SampleSizeRule::Affine { base, slope } => base + slope * (j - 1),
        }
    }
}

/// Deterministic rule `j ↦ δ_j`, capped by `δ̄`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum VoteThresholdRule {
    Constant { delta: f64 },
}

impl VoteThresholdRule {
    pub fn at(&self, _j: u64) -> f64 {
        match self {
            VoteThresholdRule::Constant { delta } => *delta,
        }
    }
}

/// Evaluation schedule `T_j`, strictly increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EvalSchedule {
    /// `T_j = j·stride`.
    Stride { stride: u64 },
    Explicit { iterations: Vec<u64> },
}

impl EvalSchedule {
    /// `T_j` for `j ≥ 1`, or `None` past an explicit list.
    pub fn at(&self, j: u64) -> Option<u64> {
        match self {
            EvalSchedule::Stride { stride } => Some(j * stride),
            EvalSchedule::Explicit { iterations } => iterations.get(j as usize - 1).copied(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub epsilon: f64,
    pub sample_size: SampleSizeRule,
    pub vote_threshold: Option<VoteThresholdRule>,
    pub delta_bar: Option<f64>,
    pub schedule: EvalSchedule,
    pub max_evaluations: u64,
}

impl CriterionConfig {
    pub fn validate(&self, kind: CriterionKind) -> Result<(), Error> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.max_evaluations == 0 {
            return Err(Error::invalid("max_evaluations must be >= 1"));
        }
        match &self.schedule {
            EvalSchedule::Stride { stride } => {
                if *stride == 0 {
                    return Err(Error::invalid("stride must be >= 1"));
                }
            }
            EvalSchedule::Explicit { iterations } => {
                if iterations.is_empty() {
                    return Err(Error::invalid("explicit schedule must be nonempty"));
                }
                if iterations[0] == 0 {
                    return Err(Error::invalid("evaluation iterations start at 1"));
                }
                if iterations.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("evaluation schedule must be strictly increasing"));
                }
            }
        }
        for j in 1..=self.max_evaluations.min(16) {
            if self.sample_size.at(j) == 0 {
                return Err(Error::invalid("sample sizes must be >= 1"));
            }
        }
        if kind == CriterionKind::Sc2 {
            let rule = self
                .vote_threshold
                .as_ref()
                .ok_or_else(|| Error::invalid("sc2 needs a vote threshold rule"))?;
            let delta_bar = self
                .delta_bar
                .ok_or_else(|| Error::invalid("sc2 needs delta_bar"))?;
            if !(0.0 < delta_bar && delta_bar < 1.0) {
                return Err(Error::invalid("delta_bar must lie in (0, 1)"));
            }
            for j in 1..=self.max_evaluations.min(16) {
                let d = rule.at(j);
                if !(0.0 < d && d < delta_bar) {
                    return Err(Error::invalid("delta_j must lie in (0, delta_bar)"));
                }
            }
        }
        Ok(())
    }
}

/// How an evaluation's decision compares to the deterministic rule at the
/// same iterate and the same ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::TruePositive => "true_positive",
            Classification::FalsePositive => "false_positive",
            Classification::TrueNegative => "true_negative",
            Classification::FalseNegative => "false_negative",
        }
    }
}

/// Classify an estimated decision against the oracle verdict.
pub fn classify(triggered: bool, oracle_grad_norm: f64, epsilon: f64) -> Classification {
    let ground_truth = sc0_evaluate(oracle_grad_norm, epsilon);
    match (triggered, ground_truth) {
        (true, true) => Classification::TruePositive,
        (true, false) => Classification::FalsePositive,
        (false, false) => Classification::TrueNegative,
        (false, true) => Classification::FalseNegative,
    }
}

/// One criterion evaluation.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub j: u64,
    pub iteration: u64,
    /// Mean-gradient norm (SC-1), vote fraction (SC-2), or oracle norm (SC-0).
    pub statistic: f64,
    pub triggered: bool,
    /// Ground truth at the iterate, recorded for scoring only.
    pub oracle_grad_norm: f64,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopOutcome {
    Triggered { j: u64, iteration: u64 },
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct StopReport {
    pub outcome: StopOutcome,
    pub records: Vec<EvalRecord>,
    /// Iterate at the stop (or at exhaustion).
    pub stop_point: ParamVector,
}

/// SC-0: the deterministic threshold rule (inclusive).
pub fn sc0_evaluate(oracle_grad_norm: f64, epsilon: f64) -> bool {
    oracle_grad_norm <= epsilon
}

/// SC-1 statistic from stored samples: `(1/N)·‖Σᵢ ∇f(θ, Zᵢ)‖`.
pub fn sc1_statistic(
    problem: &dyn Problem,
    theta: &ParamVector,
    samples: &[SampleOutcome],
) -> Result<f64, Error> {
    let mut sum = ParamVector::zeros(theta.len());
    for outcome in samples {
        let g = problem.stochastic_gradient(theta, outcome)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { context: "sc1 gradient sample", iteration: 0 });
        }
        sum += g;
    }
    Ok(sum.norm() / samples.len() as f64)
}

/// SC-2 statistic from stored samples: the fraction with `‖∇f(θ, Zᵢ)‖ ≤ ε`.
pub fn sc2_statistic(
    problem: &dyn Problem,
    theta: &ParamVector,
    epsilon: f64,
    samples: &[SampleOutcome],
) -> Result<f64, Error> {
    let mut passing = 0u64;
    for outcome in samples {
        let g = problem.stochastic_gradient(theta, outcome)?;
        let norm = g.norm();
        if !norm.is_finite() {
            return Err(Error::Diverged { context: "sc2 gradient sample", iteration: 0 });
        }
        if norm <= epsilon {
            passing += 1;
        }
    }
    Ok(passing as f64 / samples.len() as f64)
}

fn draw_samples(
    problem: &dyn Problem,
    n: u64,
    rng: &mut dyn RngCore,
) -> Vec<SampleOutcome> {
    (0..n).map(|_| problem.sample(rng)).collect()
}

/// Evaluate SC-1 once at `θ` with `n` fresh draws from `rng`.
pub fn sc1_evaluate(
    problem: &dyn Problem,
    theta: &ParamVector,
    n: u64,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> Result<EvalRecord, Error> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let samples = draw_samples(problem, n, rng);
    let statistic = sc1_statistic(problem, theta, &samples)?;
    let triggered = statistic <= epsilon;
    let oracle_grad_norm = problem.oracle_gradient(theta)?.norm();
    Ok(EvalRecord {
        j: 0,
        iteration: 0,
        statistic,
        triggered,
        oracle_grad_norm,
        classification: classify(triggered, oracle_grad_norm, epsilon),
    })
}

/// Evaluate SC-2 once at `θ` with `n` fresh draws from `rng`.
pub fn sc2_evaluate(
    problem: &dyn Problem,
    theta: &ParamVector,
    n: u64,
    epsilon: f64,
    delta: f64,
    rng: &mut dyn RngCore,
) -> Result<EvalRecord, Error> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let samples = draw_samples(problem, n, rng);
    let statistic = sc2_statistic(problem, theta, epsilon, &samples)?;
    let triggered = statistic >= delta;
    let oracle_grad_norm = problem.oracle_gradient(theta)?.norm();
    Ok(EvalRecord {
        j: 0,
        iteration: 0,
        statistic,
        triggered,
        oracle_grad_norm,
        classification: classify(triggered, oracle_grad_norm, epsilon),
    })
}

/// Advance SGD and evaluate the chosen criterion at each `T_j`, halting at
/// the first trigger or when evaluations/budget run out.
///
/// Criterion sample `i` of evaluation `j` uses the stream
/// `(cfg.seed, LANE_CRITERION, j, i)`, independent of the trajectory lane.
pub fn run_with_criterion(
    problem: &dyn Problem,
    schedule: &ScheduleSpec,
    cfg: &RunConfig,
    crit: &CriterionConfig,
    kind: CriterionKind,
) -> Result<StopReport, Error> {
    crit.validate(kind)?;
    let mut engine = Engine::new(problem, schedule, cfg)?;
    let mut records = Vec::new();
    let mut outcome = StopOutcome::BudgetExhausted;

    for j in 1..=crit.max_evaluations {
        let Some(t_j) = crit.schedule.at(j) else { break };
        if t_j > cfg.budget {
            break;
        }
        engine.advance_to(t_j)?;
        let theta = engine.theta();
        let n = crit.sample_size.at(j);

        let record = match kind {
            CriterionKind::Sc0 => {
                let oracle_grad_norm = problem.oracle_gradient(theta)?.norm();
                let triggered = sc0_evaluate(oracle_grad_norm, crit.epsilon);
                EvalRecord {
                    j,
                    iteration: t_j,
                    statistic: oracle_grad_norm,
                    triggered,
                    oracle_grad_norm,
                    classification: classify(triggered, oracle_grad_norm, crit.epsilon),
                }
            }
            CriterionKind::Sc1 => {
                let samples = draw_lane_samples(problem, cfg.seed, j, n);
                let statistic = sc1_statistic(problem, theta, &samples)?;
                let triggered = statistic <= crit.epsilon;
                let oracle_grad_norm = problem.oracle_gradient(theta)?.norm();
                EvalRecord {
                    j,
                    iteration: t_j,
                    statistic,
                    triggered,
                    oracle_grad_norm,
                    classification: classify(triggered, oracle_grad_norm, crit.epsilon),
                }
            }
            CriterionKind::Sc2 => {
                let delta = crit.vote_threshold.as_ref().expect("validated").at(j);
                let samples = draw_lane_samples(problem, cfg.seed, j, n);
                let statistic = sc2_statistic(problem, theta, crit.epsilon, &samples)?;
                let triggered = statistic >= delta;
                let oracle_grad_norm = problem.oracle_gradient(theta)?.norm();
                EvalRecord {
                    j,
                    iteration: t_j,
                    statistic,
                    triggered,
                    oracle_grad_norm,
                    classification: classify(triggered, oracle_grad_norm, crit.epsilon),
                }
            }
        };
        let triggered = record.triggered;
        records.push(record);
        if triggered {
            outcome = StopOutcome::Triggered { j, iteration: t_j };
            break;
        }
    }

    Ok(StopReport { outcome, records, stop_point: engine.theta().clone() })
}

fn draw_lane_samples(problem: &dyn Problem, seed: u64, j: u64, n: u64) -> Vec<SampleOutcome> {
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, &[LANE_CRITERION, j, i]);
            problem.sample(&mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearRegression, Rademacher};
    use crate::rng::LANE_PILOT;
    use crate::sgd::InitialPoint;
    use nalgebra::dvector;

    #[test]
    fn sc0_threshold_is_inclusive() {
        assert!(sc0_evaluate(0.0, 0.07));
        assert!(sc0_evaluate(0.07, 0.07));
        assert!(!sc0_evaluate(0.0701, 0.07));
    }

    #[test]
    fn sc1_hand_values_on_rademacher() {
        let problem = Rademacher::new();
        let theta = dvector![0.3];
        // draws (+1, −1): statistic |(1/2)(1 − 1)| = 0
        let cancel = [SampleOutcome::Sign(1.0), SampleOutcome::Sign(-1.0)];
        assert_eq!(sc1_statistic(&problem, &theta, &cancel).unwrap(), 0.0);
        // draws (+1, +1): statistic |(1/2)·2| = 1
        let agree = [SampleOutcome::Sign(1.0), SampleOutcome::Sign(1.0)];
        assert_eq!(sc1_statistic(&problem, &theta, &agree).unwrap(), 1.0);
    }

    #[test]
    fn sc1_triggers_at_interpolating_point() {
        let problem = LinearRegression::isotropic(dvector![0.5, -0.5], 0.0).unwrap();
        let mut rng = stream(1, &[LANE_PILOT]);
        let record =
            sc1_evaluate(&problem, &dvector![0.5, -0.5], 25, 0.07, &mut rng).unwrap();
        assert_eq!(record.statistic, 0.0);
        assert!(record.triggered);
        assert_eq!(record.classification, Classification::TruePositive);
    }

    #[test]
    fn sc2_never_triggers_on_rademacher_below_one() {
        let problem = Rademacher::new();
        let mut rng = stream(2, &[LANE_PILOT]);
        // every gradient has norm exactly 1 > ε = 0.5
        let record =
            sc2_evaluate(&problem, &dvector![0.3], 200, 0.5, 0.5, &mut rng).unwrap();
        assert_eq!(record.statistic, 0.0);
        assert!(!record.triggered);
        // ground truth is "stop" (oracle norm 0), so this is a false negative
        assert_eq!(record.classification, Classification::FalseNegative);
        // with ε = 1 the vote is unanimous
        let record =
            sc2_evaluate(&problem, &dvector![0.3], 200, 1.0, 0.8, &mut rng).unwrap();
        assert_eq!(record.statistic, 1.0);
        assert!(record.triggered);
    }

    #[test]
    fn sc2_vote_count_is_integral() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.5).unwrap();
        let theta = dvector![0.05, -0.02];
        let mut rng = stream(3, &[LANE_PILOT]);
        let samples: Vec<_> = (0..77).map(|_| problem.sample(&mut rng)).collect();
        let stat = sc2_statistic(&problem, &theta, 0.3, &samples).unwrap();
        let count = stat * 77.0;
        assert!((count - count.round()).abs() < 1e-9);
    }

    #[test]
    fn sc2_monotone_in_delta() {
        let problem = LinearRegression::isotropic(dvector![0.0], 0.5).unwrap();
        let theta = dvector![0.1];
        let samples: Vec<_> = {
            let mut rng = stream(4, &[LANE_PILOT]);
            (0..50).map(|_| problem.sample(&mut rng)).collect()
        };
        let stat = sc2_statistic(&problem, &theta, 0.2, &samples).unwrap();
        let mut last = true;
        for delta in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let triggered = stat >= delta;
            // raising δ can only flip true → false
            assert!(last || !triggered);
            last = triggered;
        }
    }

    #[test]
    fn classification_table_is_exhaustive() {
        assert_eq!(classify(true, 0.05, 0.07), Classification::TruePositive);
        assert_eq!(classify(true, 0.08, 0.07), Classification::FalsePositive);
        assert_eq!(classify(false, 0.08, 0.07), Classification::TrueNegative);
        assert_eq!(classify(false, 0.05, 0.07), Classification::FalseNegative);
    }

    fn quick_cfg(dim: usize, budget: u64) -> RunConfig {
        RunConfig {
            seed: 9,
            budget,
            checkpoint_every: budget,
            init: InitialPoint::Fixed { values: vec![0.0; dim] },
        }
    }

    #[test]
    fn sc0_with_huge_epsilon_triggers_immediately() {
        let problem = Rademacher::new();
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        let crit = CriterionConfig {
            epsilon: 1.0e9,
            sample_size: SampleSizeRule::Constant { n: 1 },
            vote_threshold: None,
            delta_bar: None,
            schedule: EvalSchedule::Stride { stride: 10 },
            max_evaluations: 100,
        };
        let report =
            run_with_criterion(&problem, &spec, &quick_cfg(1, 1000), &crit, CriterionKind::Sc0)
                .unwrap();
        assert_eq!(report.outcome, StopOutcome::Triggered { j: 1, iteration: 10 });
        assert_eq!(report.records.len(), 1);
    }

    #[test]
    fn sc2_rademacher_exhausts_with_all_false_negatives() {
        let problem = Rademacher::new();
        let spec = ScheduleSpec::ScalarPower { a: 0.1, q: 1.0, dim: 1 };
        let crit = CriterionConfig {
            epsilon: 0.5,
            sample_size: SampleSizeRule::Constant { n: 50 },
            vote_threshold: Some(VoteThresholdRule::Constant { delta: 0.5 }),
            delta_bar: Some(0.8),
            schedule: EvalSchedule::Stride { stride: 20 },
            max_evaluations: 25,
        };
        let report =
            run_with_criterion(&problem, &spec, &quick_cfg(1, 1000), &crit, CriterionKind::Sc2)
                .unwrap();
        assert_eq!(report.outcome, StopOutcome::BudgetExhausted);
        assert_eq!(report.records.len(), 25);
        assert!(report
            .records
            .iter()
            .all(|r| r.classification == Classification::FalseNegative));
    }

    #[test]
    fn sc1_noise_free_regression_triggers_first_evaluation() {
        let problem = LinearRegression::isotropic(dvector![0.0, 0.0], 0.0).unwrap();
        let spec = ScheduleSpec::ScalarRational { a: 0.1, b: 100.0, dim: 2 };
        let crit = CriterionConfig {
            epsilon: 0.07,
            sample_size: SampleSizeRule::Constant { n: 10 },
            vote_threshold: None,
            delta_bar: None,
            schedule: EvalSchedule::Stride { stride: 5 },
            max_evaluations: 10,
        };
        let report =
            run_with_criterion(&problem, &spec, &quick_cfg(2, 100), &crit, CriterionKind::Sc1)
                .unwrap();
        assert_eq!(report.outcome, StopOutcome::Triggered { j: 1, iteration: 5 });
        assert_eq!(report.records[0].classification, Classification::TruePositive);
    }

    #[test]
    fn schedules_must_increase_strictly() {
        let crit = CriterionConfig {
            epsilon: 0.1,
            sample_size: SampleSizeRule::Constant { n: 1 },
            vote_threshold: None,
            delta_bar: None,
            schedule: EvalSchedule::Explicit { iterations: vec![5, 5, 10] },
            max_evaluations: 3,
        };
        assert!(crit.validate(CriterionKind::Sc1).is_err());
        let crit = CriterionConfig {
            schedule: EvalSchedule::Explicit { iterations: vec![5, 8, 10] },
            ..crit
        };
        assert!(crit.validate(CriterionKind::Sc1).is_ok());
    }

    #[test]
    fn sc2_threshold_rule_must_stay_below_cap() {
        let crit = CriterionConfig {
            epsilon: 0.1,
            sample_size: SampleSizeRule::Constant { n: 5 },
            vote_threshold: Some(VoteThresholdRule::Constant { delta: 0.85 }),
            delta_bar: Some(0.8),
            schedule: EvalSchedule::Stride { stride: 10 },
            max_evaluations: 5,
        };
        assert!(crit.validate(CriterionKind::Sc2).is_err());
    }

    #[test]
    fn affine_sample_size_rule() {
        let rule = SampleSizeRule::Affine { base: 50, slope: 25 };
        assert_eq!(rule.at(1), 50);
        assert_eq!(rule.at(4), 125);
    }
}
