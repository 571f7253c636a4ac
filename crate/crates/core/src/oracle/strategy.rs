use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{display, from_counts, half, to_f64, Rational};
use crate::protocol::{check_budget, PartyId, ProtocolSpec, Symbol, Tape};
use crate::rng::stream;

type DecisionFn = dyn Fn(Tape, &[Symbol], Symbol) -> bool + Send + Sync;

/// When the corrupted party stops, consulted before each round it is due to send.
#[derive(Clone)]
pub enum AbortRule {
    Never,
    /// Abort when the history `m_{<j}` is in the set.
    Before(HashSet<Vec<Symbol>>),
    /// Abort instead of sending `m_j` when `m_{<=j}`, including the withheld message, is in the set.
    Withhold(HashSet<Vec<Symbol>>),
    /// Abort at the information sets `(own tape, m_{<j})` in the set.
    InfoSets(HashSet<(Tape, Vec<Symbol>)>),
    /// Arbitrary rule of the own tape, the history and the message about to be sent.
    Custom(Arc<DecisionFn>),
}

impl fmt::Debug for AbortRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortRule::Never => f.write_str("Never"),
            AbortRule::Before(s) => write!(f, "Before({} histories)", s.len()),
            AbortRule::Withhold(s) => write!(f, "Withhold({} prefixes)", s.len()),
            AbortRule::InfoSets(s) => write!(f, "InfoSets({} sets)", s.len()),
            AbortRule::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A fail-stop adversary: the corrupted party runs honestly until its rule says stop.
#[derive(Debug, Clone)]
pub struct FailStopStrategy {
    pub name: String,
    pub corrupted: PartyId,
    /// The output bit the adversary pushes the honest party toward.
    pub target: u8,
    pub rule: AbortRule,
}

impl FailStopStrategy {
    pub fn new(name: impl Into<String>, corrupted: PartyId, target: u8, rule: AbortRule) -> Result<Self> {
        check_target(target)?;
        Ok(FailStopStrategy { name: name.into(), corrupted, target, rule })
    }

    pub fn never(corrupted: PartyId, target: u8) -> Self {
        FailStopStrategy { name: "never".into(), corrupted, target: target.min(1), rule: AbortRule::Never }
    }

    pub fn custom(
        name: impl Into<String>,
        corrupted: PartyId,
        target: u8,
        f: impl Fn(Tape, &[Symbol], Symbol) -> bool + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(name, corrupted, target, AbortRule::Custom(Arc::new(f)))
    }

    /// Whether to abort instead of sending `next` after history `history`.
    pub fn aborts(&self, tape: Tape, history: &[Symbol], next: Symbol) -> bool {
        match &self.rule {
            AbortRule::Never => false,
            AbortRule::Before(set) => set.contains(history),
            AbortRule::Withhold(set) => {
                let mut prefix = Vec::with_capacity(history.len() + 1);
                prefix.extend_from_slice(history);
                prefix.push(next);
                set.contains(&prefix)
            }
            AbortRule::InfoSets(set) => set.contains(&(tape, history.to_vec())),
            AbortRule::Custom(f) => f(tape, history, next),
        }
    }
}

pub fn check_target(target: u8) -> Result<()> {
    if target > 1 {
        return Err(Error::Domain { value: target.to_string(), expected: "a target bit in {0, 1}" });
    }
    Ok(())
}

/// Result of one attacked execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub honest_output: bool,
    /// Round whose message was withheld, if any.
    pub abort_round: Option<usize>,
}

/// Runs the protocol with the corrupted party following `strategy`.
pub fn simulate(spec: &ProtocolSpec, strategy: &FailStopStrategy, tapes: [Tape; 2]) -> Outcome {
    let p = strategy.corrupted;
    let h = p.other();
    let mut messages = Vec::with_capacity(spec.rounds());
    for round in 1..=spec.rounds() {
        let sender = spec.sender(round);
        let m = spec.message(round, tapes[sender.index()], &messages);
        if sender == p && strategy.aborts(tapes[p.index()], &messages, m) {
            return Outcome {
                honest_output: spec.backup(h, round - 1, tapes[h.index()], &messages),
                abort_round: Some(round),
            };
        }
        messages.push(m);
    }
    Outcome { honest_output: spec.output(h, tapes[h.index()], &messages), abort_round: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MeasureMode {
    Exact,
    Sampled { n: u64, seed: u64 },
}

/// Honest-output distribution of one attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasReport {
    pub protocol: String,
    pub strategy: String,
    pub corrupted: PartyId,
    pub target: u8,
    pub mode: MeasureMode,
    /// Executions counted: all tape pairs in exact mode, the samples otherwise.
    pub total: u64,
    /// Executions in which the honest party output 1.
    pub ones: u64,
    /// `abort_counts[j-1]` counts aborts at round `j`; the last entry counts runs without abort.
    pub abort_counts: Vec<u64>,
}

impl BiasReport {
    pub fn pr_one(&self) -> Rational {
        from_counts(self.ones, self.total)
    }

    /// `Pr[honest output = target] - 1/2`; negative when the attack backfires.
    pub fn bias(&self) -> Rational {
        let d = self.pr_one() - half();
        if self.target == 1 {
            d
        } else {
            -d
        }
    }

    pub fn bias_f64(&self) -> f64 {
        to_f64(&self.bias())
    }

    pub fn abort_probability(&self) -> Rational {
        let none = *self.abort_counts.last().unwrap_or(&0);
        from_counts(self.total - none, self.total)
    }

    /// Probability of each abort round `1..=r`, then of no abort.
    pub fn abort_distribution(&self) -> Vec<Rational> {
        self.abort_counts.iter().map(|&c| from_counts(c, self.total)).collect()
    }

    pub fn summary(&self) -> BiasSummary {
        let exact = matches!(self.mode, MeasureMode::Exact);
        let r = self.abort_counts.len() - 1;
        let abort_hist = self
            .abort_counts
            .iter()
            .enumerate()
            .map(|(j, &count)| AbortBin {
                round: if j < r { (j + 1).to_string() } else { "none".into() },
                count,
                probability: count as f64 / self.total as f64,
            })
            .collect();
        let (n, seed) = match self.mode {
            MeasureMode::Exact => (self.total, None),
            MeasureMode::Sampled { n, seed } => (n, Some(seed)),
        };
        BiasSummary {
            protocol: self.protocol.clone(),
            strategy: self.strategy.clone(),
            corrupted: self.corrupted,
            target: self.target,
            bias: self.bias_f64(),
            bias_exact: exact.then(|| display(&self.bias())),
            pr_one: to_f64(&self.pr_one()),
            pr_one_exact: exact.then(|| display(&self.pr_one())),
            abort_hist,
            mode: if exact { "exact" } else { "sampled" }.into(),
            n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortBin {
    pub round: String,
    pub count: u64,
    pub probability: f64,
}

/// Flat, serializable view of a [`BiasReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub protocol: String,
    pub strategy: String,
    pub corrupted: PartyId,
    pub target: u8,
    pub bias: f64,
    pub bias_exact: Option<String>,
    pub pr_one: f64,
    pub pr_one_exact: Option<String>,
    pub abort_hist: Vec<AbortBin>,
    pub mode: String,
    pub n: u64,
    pub seed: Option<u64>,
}

#[derive(Default)]
struct Tally {
    ones: u64,
    hist: Vec<u64>,
}

impl Tally {
    fn new(r: usize) -> Self {
        Tally { ones: 0, hist: vec![0; r + 1] }
    }

    fn add(&mut self, o: Outcome, r: usize) {
        self.ones += o.honest_output as u64;
        self.hist[o.abort_round.map_or(r, |j| j - 1)] += 1;
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.ones += other.ones;
        for (a, b) in self.hist.iter_mut().zip(other.hist) {
            *a += b;
        }
        self
    }
}

const CHUNK: u64 = 1 << 16;

pub(crate) fn measure_bias(
    spec: &ProtocolSpec,
    strategy: &FailStopStrategy,
    mode: MeasureMode,
) -> Result<BiasReport> {
    check_target(strategy.target)?;
    let r = spec.rounds();
    let (tally, total) = match mode {
        MeasureMode::Exact => {
            let total = check_budget(spec)?;
            let db = spec.domain(PartyId::B);
            let tally = (0..spec.domain(PartyId::A))
                .into_par_iter()
                .map(|a| {
                    let mut t = Tally::new(r);
                    for b in 0..db {
                        t.add(simulate(spec, strategy, [a, b]), r);
                    }
                    t
                })
                .reduce(|| Tally::new(r), Tally::merge);
            (tally, total)
        }
        MeasureMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter("sampled mode needs n >= 1".into()));
            }
            let chunks = n.div_ceil(CHUNK);
            let tally = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream(seed, "measure_bias", c);
                    let mut t = Tally::new(r);
                    for _ in 0..CHUNK.min(n - c * CHUNK) {
                        let tapes = [
                            rng.random_range(0..spec.domain(PartyId::A)),
                            rng.random_range(0..spec.domain(PartyId::B)),
                        ];
                        t.add(simulate(spec, strategy, tapes), r);
                    }
                    t
                })
                .reduce(|| Tally::new(r), Tally::merge);
            (tally, n)
        }
    };
    Ok(BiasReport {
        protocol: spec.name(),
        strategy: strategy.name.clone(),
        corrupted: strategy.corrupted,
        target: strategy.target,
        mode,
        total,
        ones: tally.ones,
        abort_counts: tally.hist,
    })
}
