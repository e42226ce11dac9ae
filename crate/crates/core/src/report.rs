//! CSV and JSON serialisation with a fixed column order and `.` decimal
//! separator, so outputs diff cleanly and are byte-identical for a fixed
//! seed within one build.

use std::fmt::Write as _;

use crate::montecarlo::{AuditRow, CellResult};
use crate::schedule::ScheduleCertificate;
use crate::sgd::Trajectory;
use crate::stopping::{CriterionKind, StopReport};
use crate::ParamVector;

fn fmt_f64(value: f64) -> String {
    // shortest round-trip representation; stable within a build
    format!("{value}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

pub fn criterion_label(kind: CriterionKind) -> &'static str {
    match kind {
        CriterionKind::Sc0 => "sc0",
        CriterionKind::Sc1 => "sc1",
        CriterionKind::Sc2 => "sc2",
    }
}

/// `k, grad_norm, objective` — one row per checkpoint.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut out = String::from("k,grad_norm,objective\n");
    for c in &trajectory.checkpoints {
        let _ = writeln!(
            out,
            "{},{},{}",
            c.iteration,
            fmt_f64(c.grad_norm),
            fmt_f64(c.objective)
        );
    }
    out
}

/// Sidecar with the final parameters, one coordinate per row.
pub fn final_params_csv(point: &ParamVector) -> String {
    let mut out = String::from("index,value\n");
    for (i, v) in point.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i, fmt_f64(*v));
    }
    out
}

/// `j, iteration, statistic, triggered, oracle_grad_norm, classification`.
pub fn stop_report_csv(report: &StopReport) -> String {
    let mut out = String::from("j,iteration,statistic,triggered,oracle_grad_norm,classification\n");
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.j,
            r.iteration,
            fmt_f64(r.statistic),
            r.triggered,
            fmt_f64(r.oracle_grad_norm),
            r.classification.label()
        );
    }
    out
}

/// One row per sweep cell:
/// `checkpoint_iter, oracle_grad_norm, objective, criterion, N, delta,
/// epsilon, reps, trigger_rate, ci_lo, ci_hi, fn_rate, fp_rate`.
pub fn cells_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(
        "checkpoint_iter,oracle_grad_norm,objective,criterion,N,delta,epsilon,reps,trigger_rate,ci_lo,ci_hi,fn_rate,fp_rate\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.checkpoint_iteration,
            fmt_f64(c.oracle_grad_norm),
            fmt_f64(c.objective),
            criterion_label(c.criterion),
            c.n,
            fmt_opt(c.delta),
            fmt_f64(c.epsilon),
            c.replications,
            fmt_f64(c.trigger_rate),
            fmt_f64(c.ci_lo),
            fmt_f64(c.ci_hi),
            fmt_f64(c.fn_rate),
            fmt_f64(c.fp_rate)
        );
    }
    out
}

/// One row per audited (θ × cell):
/// `theta_index, cell_index, oracle_grad_norm, N, delta, epsilon, bound,
/// vacuous, empirical, slack, pass`.
pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from(
        "theta_index,cell_index,oracle_grad_norm,N,delta,epsilon,bound,vacuous,empirical,slack,pass\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.theta_index,
            r.cell_index,
            fmt_f64(r.oracle_grad_norm),
            r.n,
            fmt_opt(r.delta),
            fmt_f64(r.epsilon),
            fmt_f64(r.bound),
            r.vacuous,
            fmt_f64(r.empirical),
            fmt_f64(r.slack),
            r.pass
        );
    }
    out
}

/// Pretty JSON for a schedule certificate.
pub fn certificate_json(cert: &ScheduleCertificate) -> String {
    let mut s = serde_json::to_string_pretty(cert).expect("certificate serialises");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{certify, ScheduleSpec};
    use crate::sgd::Checkpoint;
    use nalgebra::dvector;

    #[test]
    fn trajectory_csv_layout() {
        let trajectory = Trajectory {
            checkpoints: vec![
                Checkpoint {
                    iteration: 0,
                    point: dvector![1.0],
                    grad_norm: 2.5,
                    objective: 3.125,
                },
                Checkpoint {
                    iteration: 100,
                    point: dvector![0.5],
                    grad_norm: 0.25,
                    objective: 0.03125,
                },
            ],
            final_point: dvector![0.5],
            diverged_at: None,
        };
        let csv = trajectory_csv(&trajectory);
        assert_eq!(csv, "k,grad_norm,objective\n0,2.5,3.125\n100,0.25,0.03125\n");
        assert_eq!(final_params_csv(&trajectory.final_point), "index,value\n0,0.5\n");
    }

    #[test]
    fn certificate_json_round_trips() {
        let spec = ScheduleSpec::ScalarRational { a: 0.2, b: 375_000.0, dim: 1 };
        let cert = certify(&spec, 1.0, 0.0, 100).unwrap();
        let json = certificate_json(&cert);
        let parsed: crate::schedule::ScheduleCertificate =
            serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.p2_verdict, cert.p2_verdict);
        assert_eq!(parsed.k_star, cert.k_star);
    }
}
