//! Convergence tables from a training trace.

use dda_core::optimize::{prop1_check, TrainingTrace};

use crate::formats::{float, phase_name, Table, ALTERNATIONS, CURVES, PROP1};

/// Loss and completion-error curves, distance table and distance-series summary.
pub struct ConvergenceReport {
    pub curves: Table,
    pub distances: Table,
    pub prop1: Table,
    /// One-line human summary.
    pub note: String,
}

pub fn convergence(trace: &TrainingTrace) -> ConvergenceReport {
    let mut curves = Table::new(
        CURVES,
        &[
            "step",
            "phase",
            "ux_loss",
            "completion_abs_err",
            "batch_id",
            "block",
            "phase_start",
        ],
    );
    let mut block = 0usize;
    for (i, s) in trace.steps.iter().enumerate() {
        let start = i == 0 || trace.steps[i - 1].phase != s.phase;
        if start && i > 0 {
            block += 1;
        }
        curves.row([
            s.step.to_string(),
            phase_name(s.phase).to_string(),
            float(s.ux_loss),
            float(s.completion_abs_err),
            s.batch_id.map(|b| b.to_string()).unwrap_or_default(),
            block.to_string(),
            (start as u8).to_string(),
        ]);
    }

    let mut distances = Table::new(ALTERNATIONS, &["cycle", "dist_M_to_C", "dist_M_to_nextC"]);
    for a in &trace.alternations {
        distances.row([a.cycle.to_string(), float(a.dist_m_to_c), float(a.dist_m_to_next_c)]);
    }

    let mut prop1 = Table::new(
        PROP1,
        &[
            "records",
            "pairs",
            "non_increasing_pairs",
            "fraction_non_increasing",
            "first",
            "last",
            "last_below_first",
            "note",
        ],
    );
    let note = match (trace.alternations.len(), prop1_check(trace)) {
        (0, _) => {
            prop1.row(["0", "0", "0", "", "", "", "", "zero alternations"]);
            "zero alternations".to_string()
        }
        (n, Err(_)) => {
            let note = format!("{n} alternation(s): too few for a distance series");
            prop1.row([
                "0".to_string(),
                "0".into(),
                "0".into(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                note.clone(),
            ]);
            note
        }
        (n, Ok(r)) => {
            let note = format!(
                "{n} alternations; {}/{} distance pairs non-increasing; last {} first",
                r.non_increasing_pairs,
                r.pairs,
                if r.last_below_first { "<" } else { ">=" }
            );
            prop1.row([
                r.records.to_string(),
                r.pairs.to_string(),
                r.non_increasing_pairs.to_string(),
                float(r.fraction_non_increasing),
                float(r.first),
                float(r.last),
                r.last_below_first.to_string(),
                String::new(),
            ]);
            note
        }
    };
    ConvergenceReport {
        curves,
        distances,
        prop1,
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dda_core::optimize::{AlternationRecord, Phase, StepRecord};

    fn step(i: usize, phase: Phase) -> StepRecord {
        StepRecord {
            step: i,
            phase,
            ux_loss: 1.0,
            completion_abs_err: 0.1,
            batch_id: None,
        }
    }

    fn text(t: Table) -> String {
        String::from_utf8(t.into_bytes()).unwrap()
    }

    #[test]
    fn ux_only_trace_notes_zero_alternations() {
        let trace = TrainingTrace::from_records(vec![step(0, Phase::Ux), step(1, Phase::Ux)], vec![]);
        let r = convergence(&trace);
        assert_eq!(r.note, "zero alternations");
        assert!(text(r.prop1).contains("zero alternations"));
        assert_eq!(text(r.distances).lines().count(), 2);
    }

    #[test]
    fn three_cycles_give_three_distance_rows_and_markers() {
        let steps = vec![
            step(0, Phase::Ux),
            step(1, Phase::Projection),
            step(2, Phase::Projection),
            step(3, Phase::Ux),
        ];
        let alts = (0..3)
            .map(|c| AlternationRecord {
                cycle: c,
                dist_m_to_c: 3.0 - c as f64,
                dist_m_to_next_c: 1.0,
                ux_epochs: 1,
                proj_iterations: 1,
                satisfied: true,
            })
            .collect();
        let r = convergence(&TrainingTrace::from_records(steps, alts));
        let d = text(r.distances);
        assert_eq!(d.lines().count(), 2 + 3);
        let curves = text(r.curves);
        let starts: Vec<&str> = curves.lines().skip(2).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(starts, vec!["1", "1", "0", "1"]);
        let p = text(r.prop1);
        assert!(p.lines().nth(2).unwrap().starts_with("2,1,1,1.0,2.0,1.0,true"));
    }
}
