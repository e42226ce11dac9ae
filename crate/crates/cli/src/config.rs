//! Experiment configuration file: a JSON document with strictly validated
//! sections. Unknown keys are rejected everywhere; numeric ranges are
//! checked when the sections are converted into engine types.
//!
//! The published schema lives in `docs/config.schema.json`.

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use sgdstop_core::bounds::FalseNegativeDesign;
use sgdstop_core::montecarlo::{AuditBound, AuditCell, CriterionCell, GridSpec};
use sgdstop_core::problems::{
    LinearRegression, ParetoTail, Problem, Rademacher, Scenario, SineWell,
};
use sgdstop_core::schedule::ScheduleSpec;
use sgdstop_core::sgd::{InitialPoint, RunConfig};
use sgdstop_core::stopping::{
    CriterionConfig, CriterionKind, EvalSchedule, SampleSizeRule, VoteThresholdRule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub schedule: ScheduleSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_rate: Option<FnRateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_audit: Option<BoundAuditSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    LinearRegression {
        theta_star: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov_diag: Option<Vec<f64>>,
        noise_std: f64,
    },
    Rademacher {},
    SineWell {
        dim: usize,
        amplitude: f64,
        noise_std: f64,
    },
    ParetoTail {
        theta_star: Vec<f64>,
        shape: f64,
        v_max: f64,
    },
}

impl ProblemSection {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemSection::LinearRegression { theta_star, cov_diag, noise_std } => {
                let theta_star = DVector::from_column_slice(theta_star);
                let problem = match cov_diag {
                    Some(diag) => LinearRegression::new(
                        theta_star,
                        DVector::from_column_slice(diag),
                        *noise_std,
                    )?,
                    None => LinearRegression::isotropic(theta_star, *noise_std)?,
                };
                Box::new(problem)
            }
            ProblemSection::Rademacher {} => Box::new(Rademacher::new()),
            ProblemSection::SineWell { dim, amplitude, noise_std } => {
                Box::new(SineWell::new(*dim, *amplitude, *noise_std)?)
            }
            ProblemSection::ParetoTail { theta_star, shape, v_max } => Box::new(ParetoTail::new(
                DVector::from_column_slice(theta_star),
                *shape,
                *v_max,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    ScalarRational { a: f64, b: f64, dim: usize },
    ScalarPower { a: f64, q: f64, dim: usize },
    DiagonalRational { scales: Vec<f64>, a: f64, b: f64 },
    /// Row-major symmetric matrices.
    ExplicitList { matrices: Vec<Vec<Vec<f64>>> },
}

impl ScheduleSection {
    pub fn build(&self) -> Result<ScheduleSpec> {
        let spec = match self {
            ScheduleSection::ScalarRational { a, b, dim } => {
                ScheduleSpec::ScalarRational { a: *a, b: *b, dim: *dim }
            }
            ScheduleSection::ScalarPower { a, q, dim } => {
                ScheduleSpec::ScalarPower { a: *a, q: *q, dim: *dim }
            }
            ScheduleSection::DiagonalRational { scales, a, b } => {
                ScheduleSpec::DiagonalRational { scales: scales.clone(), a: *a, b: *b }
            }
            ScheduleSection::ExplicitList { matrices } => {
                let mut built = Vec::with_capacity(matrices.len());
                for (k, rows) in matrices.iter().enumerate() {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        bail!("schedule matrix {k} is not square");
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    built.push(DMatrix::from_row_slice(n, n, &flat));
                }
                ScheduleSpec::ExplicitList { matrices: built }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    Fixed { values: Vec<f64> },
    Gaussian { dim: usize, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub budget: u64,
    pub checkpoint_every: u64,
    pub init: InitSection,
}

impl RunSection {
    pub fn build(&self, seed_override: Option<u64>) -> RunConfig {
        RunConfig {
            seed: seed_override.unwrap_or(self.seed),
            budget: self.budget,
            checkpoint_every: self.checkpoint_every,
            init: match &self.init {
                InitSection::Fixed { values } => InitialPoint::Fixed { values: values.clone() },
                InitSection::Gaussian { dim, std } => {
                    InitialPoint::Gaussian { dim: *dim, std: *std }
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSection {
    Sc0,
    Sc1,
    Sc2,
}

impl From<KindSection> for CriterionKind {
    fn from(value: KindSection) -> Self {
        match value {
            KindSection::Sc0 => CriterionKind::Sc0,
            KindSection::Sc1 => CriterionKind::Sc1,
            KindSection::Sc2 => CriterionKind::Sc2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSizeSection {
    Constant { n: u64 },
    Affine { base: u64, slope: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalScheduleSection {
    Stride { stride: u64 },
    Explicit { iterations: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSection {
    pub kind: KindSection,
    pub epsilon: f64,
    pub sample_size: SampleSizeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_bar: Option<f64>,
    pub schedule: EvalScheduleSection,
    pub max_evaluations: u64,
}

impl CriterionSection {
    pub fn build(&self) -> Result<(CriterionKind, CriterionConfig)> {
        let kind: CriterionKind = self.kind.into();
        let config = CriterionConfig {
            epsilon: self.epsilon,
            sample_size: match &self.sample_size {
                SampleSizeSection::Constant { n } => SampleSizeRule::Constant { n: *n },
                SampleSizeSection::Affine { base, slope } => {
                    SampleSizeRule::Affine { base: *base, slope: *slope }
                }
            },
            vote_threshold: self.delta.map(|delta| VoteThresholdRule::Constant { delta }),
            delta_bar: self.delta_bar,
            schedule: match &self.schedule {
                EvalScheduleSection::Stride { stride } => EvalSchedule::Stride { stride: *stride },
                EvalScheduleSection::Explicit { iterations } => {
                    EvalSchedule::Explicit { iterations: iterations.clone() }
                }
            },
            max_evaluations: self.max_evaluations,
        };
        config.validate(kind)?;
        Ok((kind, config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub criterion: KindSection,
    pub n_values: Vec<u64>,
    #[serde(default)]
    pub delta_values: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub replications: u64,
    pub grid: GridSection,
}

impl MonteCarloSection {
    pub fn build(&self, reps_override: Option<u64>) -> Result<(GridSpec, u64)> {
        let grid = GridSpec {
            criterion: self.grid.criterion.into(),
            n_values: self.grid.n_values.clone(),
            delta_values: self.grid.delta_values.clone(),
            epsilon: self.grid.epsilon,
        };
        grid.validate()?;
        Ok((grid, reps_override.unwrap_or(self.replications)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScenarioSection {
    A,
    B,
    C,
}

impl From<ScenarioSection> for Scenario {
    fn from(value: ScenarioSection) -> Self {
        match value {
            ScenarioSection::A => Scenario::A,
            ScenarioSection::B => Scenario::B,
            ScenarioSection::C => Scenario::C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub rho: f64,
    pub gamma: f64,
    pub scenario: ScenarioSection,
}

impl DesignSection {
    pub fn build(&self) -> FalseNegativeDesign {
        FalseNegativeDesign { rho: self.rho, gamma: self.gamma, scenario: self.scenario.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub kind: KindSection,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub epsilon: f64,
}

impl CellSection {
    pub fn build(&self) -> CriterionCell {
        CriterionCell {
            kind: self.kind.into(),
            n: self.n,
            delta: self.delta,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnRateSection {
    pub design: DesignSection,
    pub cell: CellSection,
    pub theta: Vec<f64>,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AuditBoundSection {
    Sc1Markov {},
    Sc1Pareto {},
    Sc2Mcdiarmid { pilot_draws: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCellSection {
    pub bound: AuditBoundSection,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub epsilon: f64,
}

impl AuditCellSection {
    pub fn build(&self) -> AuditCell {
        AuditCell {
            bound: match &self.bound {
                AuditBoundSection::Sc1Markov {} => AuditBound::Sc1Markov,
                AuditBoundSection::Sc1Pareto {} => AuditBound::Sc1Pareto,
                AuditBoundSection::Sc2Mcdiarmid { pilot_draws } => {
                    AuditBound::Sc2McDiarmid { pilot_draws: *pilot_draws }
                }
            },
            n: self.n,
            delta: self.delta,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundAuditSection {
    pub thetas: Vec<Vec<f64>>,
    pub cells: Vec<AuditCellSection>,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub lipschitz_c: f64,
    pub noise_c2: f64,
    pub horizon: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "problem": {"sine_well": {"dim": 10, "amplitude": 2.0, "noise_std": 0.1}},
        "schedule": {"scalar_rational": {"a": 0.05, "b": 2000.0, "dim": 10}},
        "run": {
            "seed": 1,
            "budget": 4000,
            "checkpoint_every": 100,
            "init": {"fixed": {"values": [0,0,0,0,0,0,0,0,0,0]}}
        },
        "montecarlo": {
            "replications": 100,
            "grid": {"criterion": "sc1", "n_values": [50, 100, 200], "epsilon": 0.07}
        }
    }"#;

    #[test]
    fn sample_config_parses_and_round_trips() {
        let config: ConfigFile = serde_json::from_str(SAMPLE).unwrap();
        let reserialized = serde_json::to_string(&config).unwrap();
        let reparsed: ConfigFile = serde_json::from_str(&reserialized).unwrap();
        assert_eq!(config, reparsed);
        assert!(config.problem.build().is_ok());
        assert!(config.schedule.build().is_ok());
        let (grid, reps) = config.montecarlo.as_ref().unwrap().build(None).unwrap();
        assert_eq!(reps, 100);
        assert_eq!(grid.cells().len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("\"seed\": 1,", "\"seed\": 1, \"wallclock\": true,");
        assert!(serde_json::from_str::<ConfigFile>(&bad).is_err());
    }

    #[test]
    fn seed_override_applies() {
        let config: ConfigFile = serde_json::from_str(SAMPLE).unwrap();
        assert_eq!(config.run.build(None).seed, 1);
        assert_eq!(config.run.build(Some(99)).seed, 99);
    }
}
