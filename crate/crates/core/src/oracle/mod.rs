//! Exact conditional expectations, martingales and fail-stop adversaries.

mod martingale;
pub(crate) mod optimal;
mod strategy;

use std::sync::Arc;

pub use martingale::{is_martingale, tower_violation, Conditioning, MartingaleSequence};
pub use strategy::{
    check_target, simulate, AbortBin, AbortRule, BiasReport, BiasSummary, FailStopStrategy, MeasureMode, Outcome,
};

use crate::error::Result;
use crate::num::Rational;
use crate::protocol::{PartyId, ProtocolSpec, Symbol};
use crate::tree::TranscriptTree;

/// A protocol together with its transcript tree, answering exact queries.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    tree: Arc<TranscriptTree>,
}

impl ExactOracle {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        Ok(ExactOracle { tree: Arc::new(TranscriptTree::build(spec)?) })
    }

    pub fn from_tree(tree: Arc<TranscriptTree>) -> Self {
        ExactOracle { tree }
    }

    pub fn spec(&self) -> &ProtocolSpec {
        self.tree.spec()
    }

    pub fn tree(&self) -> &Arc<TranscriptTree> {
        &self.tree
    }

    /// `E[C | M_{<=i} = prefix]`.
    pub fn cond_output_expectation(&self, prefix: &[Symbol]) -> Result<Rational> {
        Ok(self.tree.output_expectation(self.tree.find(prefix)?))
    }

    /// `E[Z_i^P | M_{<=i} = prefix]` with `i = prefix.len()`.
    pub fn cond_backup_expectation(&self, prefix: &[Symbol], party: PartyId) -> Result<Rational> {
        Ok(self.tree.backup_expectation(self.tree.find(prefix)?, party))
    }

    pub fn doob_martingale(&self, conditioning: Conditioning<'_>) -> Result<Vec<MartingaleSequence>> {
        martingale::doob_martingale(&self.tree, conditioning)
    }

    /// `Pr[exists i: |X_i - X_{i-1}| >= threshold]`.
    pub fn gap_probability(&self, threshold: f64, conditioning: Conditioning<'_>) -> Result<Rational> {
        Ok(martingale::gap_probability(&self.doob_martingale(conditioning)?, threshold))
    }

    /// Best fail-stop bias toward `target` for `corrupted`, with a strategy attaining it.
    pub fn optimal_failstop(&self, corrupted: PartyId, target: u8) -> Result<(Rational, FailStopStrategy)> {
        optimal::optimal_failstop(&self.tree, corrupted, target)
    }

    pub fn measure_bias(&self, strategy: &FailStopStrategy, mode: MeasureMode) -> Result<BiasReport> {
        strategy::measure_bias(self.spec(), strategy, mode)
    }
}

pub fn cond_output_expectation(spec: &ProtocolSpec, prefix: &[Symbol]) -> Result<Rational> {
    ExactOracle::new(spec)?.cond_output_expectation(prefix)
}

pub fn cond_backup_expectation(spec: &ProtocolSpec, prefix: &[Symbol], party: PartyId) -> Result<Rational> {
    ExactOracle::new(spec)?.cond_backup_expectation(prefix, party)
}

pub fn doob_martingale(spec: &ProtocolSpec, conditioning: Conditioning<'_>) -> Result<Vec<MartingaleSequence>> {
    ExactOracle::new(spec)?.doob_martingale(conditioning)
}

pub fn gap_probability(spec: &ProtocolSpec, threshold: f64, conditioning: Conditioning<'_>) -> Result<Rational> {
    ExactOracle::new(spec)?.gap_probability(threshold, conditioning)
}

pub fn optimal_failstop(spec: &ProtocolSpec, corrupted: PartyId, target: u8) -> Result<(Rational, FailStopStrategy)> {
    ExactOracle::new(spec)?.optimal_failstop(corrupted, target)
}

pub fn measure_bias(spec: &ProtocolSpec, strategy: &FailStopStrategy, mode: MeasureMode) -> Result<BiasReport> {
    strategy::measure_bias(spec, strategy, mode)
}

/// The jump threshold `1/(4 sqrt r)`.
pub fn jump_threshold(rounds: usize) -> f64 {
    1.0 / (4.0 * (rounds as f64).sqrt())
}
