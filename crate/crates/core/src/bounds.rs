//! Closed-form lower bounds on triggering probabilities, minimum sample
//! sizes for false-negative control, and constant-conversion formulas.
//!
//! Lower bounds are returned unclamped with a `vacuous` flag (`value ≤ 0`),
//! so callers can see how far from useful a configuration is. Minimum sample
//! sizes use strict-inequality semantics: the returned `N` exceeds the
//! threshold and `N − 1` does not. Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::problems::Scenario;

/// An unclamped probability lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// True when the bound carries no information (`value ≤ 0`).
    pub vacuous: bool,
}

impl BoundValue {
    fn new(value: f64) -> Self {
        BoundValue { value, vacuous: value <= 0.0 }
    }
}

/// Design parameters for false-negative control: the probability is held at
/// `1/γ` for iterates whose oracle gradient norm sits below a `ρ`-scaled gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FalseNegativeDesign {
    pub rho: f64,
    pub gamma: f64,
    pub scenario: Scenario,
}

impl FalseNegativeDesign {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0 < self.rho && self.rho < 1.0) {
            return Err(Error::invalid("rho must lie in (0, 1)"));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::invalid("gamma must exceed 1"));
        }
        Ok(())
    }
}

/// Probability that the mean of `n` stochastic gradients at a point with
/// oracle norm `grad_norm` has norm at most `epsilon`, lower-bounded via the
/// second-moment (Markov) argument:
/// `1 − (C₁ + (C₂ + N)‖∇F‖²) / (Nε²)`.
pub fn sc1_trigger_lower_bound(
    c1: f64,
    c2: f64,
    n: u64,
    grad_norm: f64,
    epsilon: f64,
) -> BoundValue {
    let n = n as f64;
    let g2 = grad_norm * grad_norm;
    BoundValue::new(1.0 - (c1 + (c2 + n) * g2) / (n * epsilon * epsilon))
}

/// The heavy-tailed counterpart via a union bound on the tail certificate:
/// `1 − N(π₃‖∇F‖ / ε)^π₂`, valid only when `ε ≥ π₃‖∇F‖` (the `‖∇F‖ ≤ π₁`
/// hypothesis is the caller's to check against the problem's certificate).
pub fn pareto_trigger_lower_bound(
    pi2: f64,
    pi3: f64,
    n: u64,
    grad_norm: f64,
    epsilon: f64,
) -> Result<BoundValue, Error> {
    if !(0.0 < pi2 && pi2 < 1.0) || pi3 < 1.0 {
        return Err(Error::invalid("need pi2 in (0,1) and pi3 >= 1"));
    }
    if epsilon < pi3 * grad_norm {
        return Err(Error::precondition(format!(
            "tail bound needs epsilon >= pi3 * grad_norm ({} < {})",
            epsilon,
            pi3 * grad_norm
        )));
    }
    Ok(BoundValue::new(1.0 - n as f64 * (pi3 * grad_norm / epsilon).powf(pi2)))
}

/// McDiarmid lower bound on the vote criterion firing:
/// `1 − exp(−2NΔ²)` where `Δ = δ − P[‖∇f(θ, X)‖ ≤ ε]` must be negative.
pub fn sc2_trigger_lower_bound(n: u64, delta_gap: f64) -> Result<BoundValue, Error> {
    if delta_gap >= 0.0 {
        return Err(Error::precondition(
            "concentration bound needs Delta < 0 (vote threshold below the pass probability)",
        ));
    }
    Ok(BoundValue::new(-f64::exp_m1(-2.0 * n as f64 * delta_gap * delta_gap)))
}

fn smallest_integer_above(threshold: f64) -> u64 {
    debug_assert!(threshold >= 0.0 && threshold.is_finite());
    (threshold.floor() + 1.0) as u64
}

/// Minimum sample size so that SC-1's false-negative probability is at most
/// `1/γ` whenever `‖∇F‖ ≤ ρε/√γ`: smallest integer strictly exceeding
/// `(γC₁ + C₂(ερ)²) / ((1 − ρ²)ε²)`.
pub fn sc1_min_sample_size(
    c1: f64,
    c2: f64,
    epsilon: f64,
    design: &FalseNegativeDesign,
) -> Result<u64, Error> {
    design.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let rho2 = design.rho * design.rho;
    let threshold =
        (design.gamma * c1 + c2 * (epsilon * design.rho).powi(2)) / ((1.0 - rho2) * epsilon * epsilon);
    Ok(smallest_integer_above(threshold))
}

/// Upper limit on admissible `ρ` for the vote criterion's false-negative
/// designs: `√((1 − δ̄)/(C₂ + 1))` under scenario B, `(1 − δ̄)^{1/π₂}` under
/// scenario C.
pub fn sc2_rho_cap(
    scenario: Scenario,
    c2: f64,
    delta_bar: f64,
    pi2: Option<f64>,
) -> Result<f64, Error> {
    if !(0.0 < delta_bar && delta_bar < 1.0) {
        return Err(Error::invalid("delta_bar must lie in (0, 1)"));
    }
    match scenario {
        Scenario::B => Ok(((1.0 - delta_bar) / (c2 + 1.0)).sqrt()),
        Scenario::C => {
            let pi2 = pi2.ok_or_else(|| Error::invalid("scenario C needs pi2"))?;
            if !(0.0 < pi2 && pi2 < 1.0) {
                return Err(Error::invalid("pi2 must lie in (0, 1)"));
            }
            Ok((1.0 - delta_bar).powf(1.0 / pi2))
        }
        Scenario::A => Err(Error::invalid("vote-criterion designs cover scenarios B and C only")),
    }
}

/// Minimum sample size so that SC-2's false-negative probability is at most
/// `1/γ` at the scenario's gradient gate (`ρε/√γ` for B, `ρε/(π₃γ)` for C):
/// smallest integer strictly exceeding `log(γ) / (2(1 − δ̄ − ρ²/γ)²)` for B
/// and `log(γ) / (2(1 − δ̄ − (ρ/γ)^{π₂})²)` for C.
///
/// The design must leave the concentration gap positive, i.e. `ρ²/γ` (resp.
/// `(ρ/γ)^{π₂}`) strictly below `1 − δ̄`.
pub fn sc2_min_sample_size(
    scenario: Scenario,
    delta_bar: f64,
    design: &FalseNegativeDesign,
    pi2: Option<f64>,
) -> Result<u64, Error> {
    design.validate()?;
    if !(0.0 < delta_bar && delta_bar < 1.0) {
        return Err(Error::invalid("delta_bar must lie in (0, 1)"));
    }
    let reduction = match scenario {
        Scenario::B => design.rho * design.rho / design.gamma,
        Scenario::C => {
            let pi2 = pi2.ok_or_else(|| Error::invalid("scenario C needs pi2"))?;
            if !(0.0 < pi2 && pi2 < 1.0) {
                return Err(Error::invalid("pi2 must lie in (0, 1)"));
            }
            (design.rho / design.gamma).powf(pi2)
        }
        Scenario::A => {
            return Err(Error::invalid("vote-criterion designs cover scenarios B and C only"))
        }
    };
    let gap = 1.0 - delta_bar - reduction;
    if gap <= 0.0 {
        return Err(Error::precondition(format!(
            "rho too large for delta_bar: concentration gap {gap} is not positive"
        )));
    }
    Ok(smallest_integer_above(design.gamma.ln() / (2.0 * gap * gap)))
}

/// Noise constants implied by an almost-sure Lipschitz stochastic gradient
/// with constant `C` and a lower bound `L` on the per-sample objective:
/// `(C₁, C₂) = (0, 4C)` when `L ≥ 0` and `(−4CL, 4C)` when `L < 0`.
pub fn derive_bcn_from_sg_lipschitz(sg_lipschitz_c: f64, lower_l: f64) -> Result<(f64, f64), Error> {
    if !(sg_lipschitz_c > 0.0) {
        return Err(Error::invalid("Lipschitz constant must be positive"));
    }
    if lower_l >= 0.0 {
        Ok((0.0, 4.0 * sg_lipschitz_c))
    } else {
        Ok((-4.0 * sg_lipschitz_c * lower_l, 4.0 * sg_lipschitz_c))
    }
}

/// Convert objective-form noise constants to gradient form under a
/// Polyak–Łojasiewicz inequality with modulus `μ` and optimum `F*`:
/// `(C₁', C₂') = (C₁ + C₂F*, C₂/μ)`.
pub fn pl_convert(c1: f64, c2: f64, f_star: f64, mu: f64) -> Result<(f64, f64), Error> {
    if !(mu > 0.0) {
        return Err(Error::invalid("PL modulus must be positive"));
    }
    Ok((c1 + c2 * f_star, c2 / mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design(rho: f64, gamma: f64, scenario: Scenario) -> FalseNegativeDesign {
        FalseNegativeDesign { rho, gamma, scenario }
    }

    #[test]
    fn sc1_bound_hand_values() {
        assert_eq!(sc1_trigger_lower_bound(0.0, 0.0, 1, 0.0, 1.0).value, 1.0);
        // 1 − 1/(100·0.01) = 0, vacuous
        let b = sc1_trigger_lower_bound(1.0, 1.0, 100, 0.0, 0.1);
        assert_relative_eq!(b.value, 0.0, epsilon = 1e-15);
        assert!(b.vacuous);
        // 1 − 0.13/0.4 = 0.675
        let b = sc1_trigger_lower_bound(0.0, 3.0, 10, 0.1, 0.2);
        assert_relative_eq!(b.value, 0.675, max_relative = 1e-14);
        assert!(!b.vacuous);
    }

    #[test]
    fn pareto_bound_hand_values() {
        let b = pareto_trigger_lower_bound(0.5, 1.0, 1, 0.0, 0.3).unwrap();
        assert_eq!(b.value, 1.0);
        // 1 − (0.25)^0.5 = 0.5
        let b = pareto_trigger_lower_bound(0.5, 1.0, 1, 0.01, 0.04).unwrap();
        assert_relative_eq!(b.value, 0.5, max_relative = 1e-14);
        // more samples make it worse: 1 − 4·0.5 = −1
        let b = pareto_trigger_lower_bound(0.5, 1.0, 4, 0.01, 0.04).unwrap();
        assert_relative_eq!(b.value, -1.0, max_relative = 1e-14);
        assert!(b.vacuous);
        // precondition ε ≥ π₃·g
        assert!(pareto_trigger_lower_bound(0.5, 2.0, 1, 0.03, 0.04).is_err());
    }

    #[test]
    fn sc2_bound_hand_values() {
        let b = sc2_trigger_lower_bound(100, -0.2).unwrap();
        assert_relative_eq!(b.value, 1.0 - (-8.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(b.value, 0.99966, max_relative = 1e-4);
        let b = sc2_trigger_lower_bound(1, -0.5).unwrap();
        assert_relative_eq!(b.value, 1.0 - (-0.5f64).exp(), max_relative = 1e-14);
        let b = sc2_trigger_lower_bound(1, -1.0e-9).unwrap();
        assert!(b.value < 1e-15 && b.value > 0.0);
        assert!(sc2_trigger_lower_bound(10, 0.0).is_err());
    }

    #[test]
    fn sc1_min_sample_size_hand_values() {
        let d = design(0.5, 10.0, Scenario::A);
        assert_eq!(sc1_min_sample_size(0.0, 0.0, 0.3, &d).unwrap(), 1);
        // C₂ρ²/(1−ρ²) = 1/3 → 1
        assert_eq!(sc1_min_sample_size(0.0, 1.0, 0.3, &d).unwrap(), 1);
        // (10 + 0.0025)/0.0075 ≈ 1333.67 → 1334
        assert_eq!(sc1_min_sample_size(1.0, 1.0, 0.1, &d).unwrap(), 1334);
    }

    #[test]
    fn sc2_rho_cap_hand_values() {
        // B, C₂ = 0: cap → 1 as δ̄ → 0
        let cap = sc2_rho_cap(Scenario::B, 0.0, 1e-12, None).unwrap();
        assert!((cap - 1.0).abs() < 1e-9);
        assert_relative_eq!(
            sc2_rho_cap(Scenario::B, 0.0, 0.75, None).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            sc2_rho_cap(Scenario::C, 0.0, 0.75, Some(0.5)).unwrap(),
            0.0625,
            max_relative = 1e-14
        );
        assert!(sc2_rho_cap(Scenario::A, 0.0, 0.5, None).is_err());
    }

    #[test]
    fn sc2_min_sample_size_hand_values() {
        // ln(10)/(2·0.199²) ≈ 29.07 → 30
        let d = design(0.1, 10.0, Scenario::B);
        assert_eq!(sc2_min_sample_size(Scenario::B, 0.8, &d, None).unwrap(), 30);
        // threshold → ½ as δ̄, ρ → 0 with γ = e → 1
        let d = design(1e-9, std::f64::consts::E, Scenario::B);
        assert_eq!(sc2_min_sample_size(Scenario::B, 1e-12, &d, None).unwrap(), 1);
        // scenario C: ln(10)/(2(0.2 − √0.005)²) ≈ 68.87 → 69
        let d = design(0.05, 10.0, Scenario::C);
        assert_eq!(sc2_min_sample_size(Scenario::C, 0.8, &d, Some(0.5)).unwrap(), 69);
        // non-positive concentration gap is an error
        let d = design(0.9, 1.01, Scenario::B);
        assert!(sc2_min_sample_size(Scenario::B, 0.8, &d, None).is_err());
    }

    #[test]
    fn lipschitz_conversion_hand_values() {
        assert_eq!(derive_bcn_from_sg_lipschitz(1.0, 0.0).unwrap(), (0.0, 4.0));
        assert_eq!(derive_bcn_from_sg_lipschitz(2.0, -1.0).unwrap(), (8.0, 8.0));
        assert_eq!(derive_bcn_from_sg_lipschitz(3.0, 5.0).unwrap(), (0.0, 12.0));
    }

    #[test]
    fn pl_conversion_hand_values() {
        assert_eq!(pl_convert(0.0, 0.0, 7.0, 2.0).unwrap(), (0.0, 0.0));
        assert_eq!(pl_convert(1.0, 2.0, 3.0, 4.0).unwrap(), (7.0, 0.5));
        assert_eq!(pl_convert(0.0, 1.0, 0.0, 1.0).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn sc1_bound_monotone_in_n_and_grad_norm() {
        let mut last = f64::NEG_INFINITY;
        for n in [1u64, 2, 5, 10, 100, 1000] {
            let b = sc1_trigger_lower_bound(0.5, 2.0, n, 0.0, 0.1).value;
            assert!(b >= last);
            last = b;
        }
        let mut last = f64::INFINITY;
        for g in [0.0, 0.01, 0.05, 0.1, 0.5] {
            let b = sc1_trigger_lower_bound(0.5, 2.0, 50, g, 0.1).value;
            assert!(b <= last);
            last = b;
        }
    }
}
