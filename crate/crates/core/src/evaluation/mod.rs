//! Metrics, leave-one-pump-out cross-validation, design space exploration
//! and Pareto fronts.

mod crossval;
mod dse;
mod metrics;
mod pareto;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::detectors::PolicyKind;
use crate::nn::ModelConfig;

pub use crossval::{
    cross_validate, CrossValConfig, CrossValReport, FoldAudit, SelectionAudit, Variant,
    VariantResult,
};
pub use dse::{run_dse, DseConfig, DseGrid};
pub use metrics::{accuracy, detected, fpr, tpdr};
pub use pareto::{pareto_front, pareto_indices};

pub const AGGREGATE_SCOPE: &str = "aggregate";

pub const RESULTS_HEADER: &str =
    "scope,algorithm,policy,depth,kernel,channels,mac_count,accuracy,fpr,tpdr";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Threshold,
    Cnn,
    Ecnn,
    Combined,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Threshold => "threshold",
            Algorithm::Cnn => "cnn",
            Algorithm::Ecnn => "ecnn",
            Algorithm::Combined => "combined",
        }
    }

    /// Whether the algorithm runs the network with the enhanced input.
    pub fn uses_ecnn(&self) -> bool {
        matches!(self, Algorithm::Ecnn | Algorithm::Combined)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Algorithm::Threshold),
            "cnn" => Ok(Algorithm::Cnn),
            "ecnn" => Ok(Algorithm::Ecnn),
            "combined" => Ok(Algorithm::Combined),
            other => Err(Error::usage(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Metrics for one pump, one aggregate, or one design point.
///
/// For a single pump `tpdr` is 1 or 0 depending on whether an abnormal
/// sample was detected; for an aggregate it is the fraction of pumps.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub scope: String,
    pub algorithm: Algorithm,
    /// `None` for algorithms without a pump-specific parameter.
    pub policy: Option<PolicyKind>,
    /// `None` for the threshold detector.
    pub config: Option<ModelConfig>,
    pub mac_count: u64,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub tpdr: Option<f64>,
    pub sample_count: usize,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        let (d, k, c) = match &self.config {
            Some(c) => (Some(c.depth), Some(c.kernel), Some(c.channels)),
            None => (None, None, None),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scope,
            self.algorithm.as_str(),
            self.policy.map(|p| p.as_str()).unwrap_or("none"),
            opt(d),
            opt(k),
            opt(c),
            self.mac_count,
            self.accuracy,
            opt(self.fpr),
            opt(self.tpdr),
        )
    }
}

pub fn write_results_csv(records: &[EvalRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn save_results_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_results_csv(records, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
