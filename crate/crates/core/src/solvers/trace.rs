use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Outcome of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::BudgetExhausted => "budget-exhausted",
            Verdict::Diverged => "diverged",
        })
    }
}

/// One iteration. Changes are per-pixel RMS values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub energy: f64,
    pub dx: f64,
    pub dq: f64,
    pub dlambda: f64,
    pub seconds: f64,
    /// Largest confidence value after the iteration; not written to CSV.
    #[serde(skip)]
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub verdict: Verdict,
}

impl SolverTrace {
    pub(crate) fn new() -> Self {
        Self { records: Vec::new(), verdict: Verdict::BudgetExhausted }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// CSV with header `iter,energy,dx,dq,dlambda,seconds`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.records.is_empty() {
            w.write_record(["iter", "energy", "dx", "dq", "dlambda", "seconds"])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
