//! Built-in scenario traces and the strategy-by-scenario matrix.

use crate::explorer::{run_one, RunError};
use crate::model::Schedule;
use crate::oracle::Verdict;
use crate::recovery::Strategy;
use crate::trace::parse_trace;

/// One shipped trace: its file stem and text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusTrace {
    pub name: &'static str,
    /// The timeline scenario this crash point illustrates, e.g. "1.3".
    pub scenario: &'static str,
    pub text: &'static str,
}

impl CorpusTrace {
    pub fn schedule(&self) -> Schedule {
        parse_trace(self.text).unwrap_or_else(|e| panic!("corpus trace {}: {e}", self.name))
    }
}

macro_rules! trace {
    ($name:literal, $scenario:literal) => {
        CorpusTrace {
            name: $name,
            scenario: $scenario,
            text: include_str!(concat!("../corpus/", $name, ".trace")),
        }
    };
}

pub const CORPUS: [CorpusTrace; 9] = [
    trace!("fig1_t5", "1.1"),
    trace!("fig1_t8", "1.2"),
    trace!("fig1_t10", "1.3"),
    trace!("fig2_t4", "2.1"),
    trace!("fig2_t8", "2.1"),
    trace!("fig2_t10", "2.2"),
    trace!("fig3_t4", "3.1"),
    trace!("fig3_t5", "3.1"),
    trace!("fig3_t10", "3.2"),
];

pub fn find(name: &str) -> Option<&'static CorpusTrace> {
    let stem = name.strip_suffix(".trace").unwrap_or(name);
    CORPUS.iter().find(|t| t.name == stem)
}

/// Verdicts of every strategy on one trace, in [`Strategy::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub trace: &'static CorpusTrace,
    pub verdicts: Vec<(Strategy, Result<Verdict, RunError>)>,
}

pub fn matrix(strategies: &[Strategy]) -> Vec<MatrixRow> {
    CORPUS
        .iter()
        .map(|trace| {
            let s = trace.schedule();
            MatrixRow {
                trace,
                verdicts: strategies.iter().map(|&st| (st, run_one(&s, st))).collect(),
            }
        })
        .collect()
}

/// Plain-text table, one row per trace and one column per strategy.
pub fn render_matrix(rows: &[MatrixRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = format!("{:<10} {:<8}", "trace", "scenario");
    for (st, _) in &first.verdicts {
        out.push_str(&format!(" {:<15}", st.name()));
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:<10} {:<8}", row.trace.name, row.trace.scenario));
        for (_, v) in &row.verdicts {
            let cell = match v {
                Ok(Verdict::Pass) => "PASS",
                Ok(Verdict::Violation(_)) => "FAIL",
                Err(_) => "ERROR",
            };
            out.push_str(&format!(" {cell:<15}"));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_trace_parses() {
        for t in &CORPUS {
            let s = t.schedule();
            assert!(s.crash_pos().is_some(), "{}", t.name);
        }
        assert!(find("fig2_t10.trace").is_some());
        assert!(find("fig9").is_none());
    }
}
