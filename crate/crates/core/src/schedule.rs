//! Matrix learning-rate schedules and certificates for the step-size
//! conditions they must satisfy:
//!
//! * P1 — every step matrix is symmetric positive definite,
//! * P2 — `Σ λ_max(M_k)²` is finite (bounded by some `S`),
//! * P3 — `Σ λ_min(M_k)` diverges,
//! * P4 — `λ_max(M_k)·κ(M_k) → 0`.
//!
//! A certificate also reports the smallest index `k*` from which the
//! per-eigenvalue inequality
//! `½λ_min(M_k) ≤ λ − (C/2)λ² − (C·C₂/2)λ_max(M_k)²`
//! holds through the checked horizon, together with the relaxed P4 threshold
//! `1/(2C(C₂+1))` below which `λ_max·κ` must eventually fall.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ParamVector;

/// Relative tolerance for the symmetry check on explicit step matrices.
const SYMMETRY_RTOL: f64 = 1e-12;
/// Tolerance for positive-definiteness of eigenvalues from the symmetric
/// eigendecomposition used for explicit matrix lists.
const EIGEN_TOL: f64 = 1e-10;

/// A learning-rate schedule `{M_k}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScheduleSpec {
    /// `M_k = (a·b / (k + b))·I`.
    ScalarRational { a: f64, b: f64, dim: usize },
    /// `M_k = (a / (k + 1)^q)·I`.
    ScalarPower { a: f64, q: f64, dim: usize },
    /// `M_k = diag(scales)·(a·b / (k + b))`.
    DiagonalRational { scales: Vec<f64>, a: f64, b: f64 },
    /// An explicit finite list of symmetric positive definite matrices.
    ExplicitList { matrices: Vec<DMatrix<f64>> },
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ScheduleSpec::ScalarRational { a, b, dim } => {
                if !(*a > 0.0 && *b > 0.0) || *dim == 0 {
                    return Err(Error::invalid("scalar rational needs a > 0, b > 0, dim >= 1"));
                }
            }
            ScheduleSpec::ScalarPower { a, q, dim } => {
                if !(*a > 0.0) || !q.is_finite() || *q < 0.0 || *dim == 0 {
                    return Err(Error::invalid("scalar power needs a > 0, q >= 0, dim >= 1"));
                }
            }
            ScheduleSpec::DiagonalRational { scales, a, b } => {
                if scales.is_empty() || scales.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
                    return Err(Error::invalid("diagonal scales must be positive"));
                }
                if !(*a > 0.0 && *b > 0.0) {
                    return Err(Error::invalid("diagonal rational needs a > 0, b > 0"));
                }
            }
            ScheduleSpec::ExplicitList { matrices } => {
                if matrices.is_empty() {
                    return Err(Error::invalid("explicit schedule list must be nonempty"));
                }
                for (k, m) in matrices.iter().enumerate() {
                    if m.nrows() != m.ncols() || m.nrows() == 0 {
                        return Err(Error::invalid(format!("matrix {k} is not square")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            ScheduleSpec::ScalarRational { dim, .. } | ScheduleSpec::ScalarPower { dim, .. } => {
                *dim
            }
            ScheduleSpec::DiagonalRational { scales, .. } => scales.len(),
            ScheduleSpec::ExplicitList { matrices } => matrices[0].nrows(),
        }
    }

    /// Scalar step size at index `k` for the scalar families.
    fn scalar_rate(&self, k: u64) -> Option<f64> {
        match self {
            ScheduleSpec::ScalarRational { a, b, .. } => Some(a * b / (k as f64 + b)),
            ScheduleSpec::ScalarPower { a, q, .. } => Some(a / (k as f64 + 1.0).powf(*q)),
            _ => None,
        }
    }
}

enum StepForm {
    Scalar(f64),
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// One step matrix with cached eigendata.
pub struct StepMatrix {
    form: StepForm,
    dim: usize,
    lambda_min: f64,
    lambda_max: f64,
}

impl StepMatrix {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    /// `M·g`.
    pub fn apply(&self, g: &ParamVector) -> Result<ParamVector, Error> {
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: g.len() });
        }
        Ok(match &self.form {
            StepForm::Scalar(lambda) => g * *lambda,
            StepForm::Diagonal(d) => g.component_mul(d),
            StepForm::Dense(m) => m * g,
        })
    }

    /// Materialise the full matrix (diagnostics only).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        match &self.form {
            StepForm::Scalar(lambda) => DMatrix::from_diagonal_element(self.dim, self.dim, *lambda),
            StepForm::Diagonal(d) => DMatrix::from_diagonal(d),
            StepForm::Dense(m) => m.clone(),
        }
    }
}

/// Build the step matrix `M_k`, with eigendata cached.
///
/// Scalar families produce `λ_k·I` (κ = 1); the diagonal family reads its
/// eigendata off the stored diagonal; explicit lists go through a symmetric
/// eigendecomposition.
pub fn step_matrix(spec: &ScheduleSpec, k: u64) -> Result<StepMatrix, Error> {
    spec.validate()?;
    match spec {
        ScheduleSpec::ScalarRational { dim, .. } | ScheduleSpec::ScalarPower { dim, .. } => {
            let lambda = spec.scalar_rate(k).expect("scalar family");
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::invalid(format!("non-positive step size at k = {k}")));
            }
            Ok(StepMatrix {
                form: StepForm::Scalar(lambda),
                dim: *dim,
                lambda_min: lambda,
                lambda_max: lambda,
            })
        }
        ScheduleSpec::DiagonalRational { scales, a, b } => {
            let rate = a * b / (k as f64 + b);
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::invalid(format!("non-positive step size at k = {k}")));
            }
            let diag = DVector::from_iterator(scales.len(), scales.iter().map(|&s| s * rate));
            let lambda_min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let lambda_max = diag.iter().cloned().fold(0.0f64, f64::max);
            Ok(StepMatrix {
                form: StepForm::Diagonal(diag),
                dim: scales.len(),
                lambda_min,
                lambda_max,
            })
        }
        ScheduleSpec::ExplicitList { matrices } => {
            let m = matrices.get(k as usize).ok_or_else(|| {
                Error::invalid(format!(
                    "index {k} beyond explicit schedule horizon {}",
                    matrices.len()
                ))
            })?;
            let scale = m.norm().max(1.0);
            if (m - m.transpose()).norm() > SYMMETRY_RTOL * scale {
                return Err(Error::invalid(format!("matrix {k} is not symmetric")));
            }
            let eigen = m.clone().symmetric_eigen();
            let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let lambda_max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lambda_min <= EIGEN_TOL * scale {
                return Err(Error::invalid(format!("matrix {k} is not positive definite")));
            }
            Ok(StepMatrix {
                form: StepForm::Dense(m.clone()),
                dim: m.nrows(),
                lambda_min,
                lambda_max,
            })
        }
    }
}

/// Verdict on a series property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ProvenFinite,
    ProvenInfinite,
    Unknown,
}

/// Machine-checked schedule certificate.
///
/// `p2_verdict = ProvenFinite` (with `p2_bound`) asserts P2 holds;
/// `p3_verdict = ProvenInfinite` asserts P3 holds. For explicit lists the
/// verdicts beyond the horizon are `Unknown` and only partial sums are
/// reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleCertificate {
    pub p1_ok: bool,
    pub p2_verdict: Verdict,
    /// Upper bound `S` on `Σ λ_max(M_k)²` when P2 is proven.
    pub p2_bound: Option<f64>,
    pub p2_partial_sum: f64,
    pub p3_verdict: Verdict,
    pub p3_partial_sum: f64,
    /// Limit of `λ_max(M_k)·κ(M_k)` (analytic for parametric families, the
    /// last checked value for explicit lists).
    pub p4_limit_estimate: f64,
    /// Relaxed admissibility threshold `1/(2C(C₂+1))` for `λ_max·κ`; `None`
    /// when `C = 0` renders it unconstrained.
    pub p4_relaxed_threshold: Option<f64>,
    /// Smallest index from which the step-size inequality holds through the
    /// horizon at both extreme eigenvalues.
    pub k_star: Option<u64>,
    pub horizon_checked: u64,
}

/// Left-hand side minus right-hand side of the certified inequality at one
/// eigenvalue; non-positive means the inequality holds.
fn inequality_residual(lambda: f64, lambda_min: f64, lambda_max: f64, c: f64, c2: f64) -> f64 {
    0.5 * lambda_min - (lambda - 0.5 * c * lambda * lambda - 0.5 * c * c2 * lambda_max * lambda_max)
}

fn holds_at(m: &StepMatrix, c: f64, c2: f64) -> bool {
    inequality_residual(m.lambda_min(), m.lambda_min(), m.lambda_max(), c, c2) <= 0.0
        && inequality_residual(m.lambda_max(), m.lambda_min(), m.lambda_max(), c, c2) <= 0.0
}

/// Certify P1–P4 for a schedule against the problem constants `C` (gradient
/// Lipschitz) and `C₂` (noise scaling), checking indices `0..horizon`.
pub fn certify(
    spec: &ScheduleSpec,
    lipschitz_c: f64,
    noise_c2: f64,
    horizon: u64,
) -> Result<ScheduleCertificate, Error> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("certification horizon must be >= 1"));
    }
    if lipschitz_c < 0.0 || noise_c2 < 0.0 {
        return Err(Error::invalid("constants must be non-negative"));
    }

    let checked = match spec {
        ScheduleSpec::ExplicitList { matrices } => (matrices.len() as u64).min(horizon),
        _ => horizon,
    };

    let mut p1_ok = true;
    let mut p2_partial = 0.0;
    let mut p3_partial = 0.0;
    let mut last_fail: Option<u64> = None;
    let mut last_p4 = 0.0;
    for k in 0..checked {
        let m = match step_matrix(spec, k) {
            Ok(m) => m,
            Err(_) => {
                p1_ok = false;
                break;
            }
        };
        p2_partial += m.lambda_max() * m.lambda_max();
        p3_partial += m.lambda_min();
        last_p4 = m.lambda_max() * m.kappa();
        if !holds_at(&m, lipschitz_c, noise_c2) {
            last_fail = Some(k);
        }
    }

    let (p2_verdict, p2_bound, p3_verdict, p4_limit) = match spec {
        ScheduleSpec::ScalarRational { a, b, .. } => {
            // Σ (ab/(k+b))² ≤ (ab)²(1/b² + 1/b) by the integral bound; the
            // harmonic tail of Σ ab/(k+b) diverges.
            let ab = a * b;
            (
                Verdict::ProvenFinite,
                Some(ab * ab * (1.0 / (b * b) + 1.0 / b)),
                Verdict::ProvenInfinite,
                0.0,
            )
        }
        ScheduleSpec::ScalarPower { a, q, .. } => {
            let (p2, bound) = if *q > 0.5 {
                // Σ (k+1)^{-2q} ≤ 1 + 1/(2q − 1)
                (Verdict::ProvenFinite, Some(a * a * (1.0 + 1.0 / (2.0 * q - 1.0))))
            } else {
                (Verdict::ProvenInfinite, None)
            };
            let p3 = if *q <= 1.0 { Verdict::ProvenInfinite } else { Verdict::ProvenFinite };
            let p4 = if *q > 0.0 { 0.0 } else { *a };
            (p2, bound, p3, p4)
        }
        ScheduleSpec::DiagonalRational { scales, a, b } => {
            let smax = scales.iter().cloned().fold(0.0f64, f64::max);
            let ab_max = a * b * smax;
            (
                Verdict::ProvenFinite,
                Some(ab_max * ab_max * (1.0 / (b * b) + 1.0 / b)),
                Verdict::ProvenInfinite,
                0.0,
            )
        }
        ScheduleSpec::ExplicitList { .. } => (Verdict::Unknown, None, Verdict::Unknown, last_p4),
    };

    let k_star = if !p1_ok {
        None
    } else {
        match last_fail {
            None => Some(0),
            Some(k) if k + 1 < checked => Some(k + 1),
            Some(_) => None,
        }
    };

    let denom = 2.0 * lipschitz_c * (noise_c2 + 1.0);
    Ok(ScheduleCertificate {
        p1_ok,
        p2_verdict,
        p2_bound,
        p2_partial_sum: p2_partial,
        p3_verdict,
        p3_partial_sum: p3_partial,
        p4_limit_estimate: p4_limit,
        p4_relaxed_threshold: if denom > 0.0 { Some(1.0 / denom) } else { None },
        k_star,
        horizon_checked: checked,
    })
}
