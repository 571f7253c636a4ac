//! Finite two-party protocols with backup values.
//!
//! A [`ProtocolSpec`] describes an `r`-round, no-input protocol between parties `A` and `B`. Each
//! party owns a private tape, an integer drawn uniformly from `[0, domain)`. Round `i` is sent by
//! the party named by the sender schedule, and its message is a function of the sender's tape and
//! the messages before it. After `i` messages each party holds a backup bit `Z_i`, the value it
//! outputs if the counterpart stops right there; `Z_r` is the party's output.
//!
//! Everything is deterministic given the two tapes, which keeps exact enumeration indexable and
//! sampling a matter of drawing two integers.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{from_counts, Rational};

pub type Tape = u64;
pub type Symbol = u32;

/// The empty message `⊥`.
pub const BOTTOM: Symbol = 0;

/// Default cap on the number of tape pairs an exact computation may enumerate.
pub const DEFAULT_BUDGET: u64 = 1 << 22;

/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "FAIRFLIP_BUDGET";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    A,
    B,
}

impl PartyId {
    pub const BOTH: [PartyId; 2] = [PartyId::A, PartyId::B];

    pub fn other(self) -> PartyId {
        match self {
            PartyId::A => PartyId::B,
            PartyId::B => PartyId::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PartyId::A => 0,
            PartyId::B => 1,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyId::A => "A",
            PartyId::B => "B",
        })
    }
}

impl FromStr for PartyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(PartyId::A),
            "B" | "b" => Ok(PartyId::B),
            other => Err(Error::InvalidParameter(format!("unknown party `{other}`"))),
        }
    }
}

/// Human-readable protocol name plus its size parameters, e.g. `majority:5`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolLabel {
    pub name: String,
    pub params: Vec<u64>,
}

impl ProtocolLabel {
    pub fn new(name: impl Into<String>, params: Vec<u64>) -> Self {
        ProtocolLabel { name: name.into(), params }
    }
}

impl fmt::Display for ProtocolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for p in &self.params {
            write!(f, ":{p}")?;
        }
        Ok(())
    }
}

type ScheduleFn = dyn Fn(usize) -> PartyId + Send + Sync;
type MessageFn = dyn Fn(usize, Tape, &[Symbol]) -> Symbol + Send + Sync;
type BackupFn = dyn Fn(PartyId, usize, Tape, &[Symbol]) -> bool + Send + Sync;
type OutputFn = dyn Fn(PartyId, Tape, &[Symbol]) -> bool + Send + Sync;

/// An immutable, cheaply clonable protocol description.
///
/// A party's backup values and output may only read that party's own tape and the public
/// messages. This is what makes the protocols information-theoretic: conditioned on a transcript,
/// the two tapes are independent.
#[derive(Clone)]
pub struct ProtocolSpec {
    label: ProtocolLabel,
    rounds: usize,
    domains: [Tape; 2],
    uniform_output: bool,
    schedule: Arc<ScheduleFn>,
    message: Arc<MessageFn>,
    backup: Arc<BackupFn>,
    output: Arc<OutputFn>,
}

impl fmt::Debug for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolSpec")
            .field("label", &self.label.to_string())
            .field("rounds", &self.rounds)
            .field("domains", &self.domains)
            .finish_non_exhaustive()
    }
}

impl ProtocolSpec {
    pub fn builder(label: ProtocolLabel, rounds: usize) -> ProtocolBuilder {
        ProtocolBuilder {
            label,
            rounds,
            domains: [1, 1],
            uniform_output: true,
            schedule: None,
            message: None,
            backup: None,
            output: None,
        }
    }

    pub fn label(&self) -> &ProtocolLabel {
        &self.label
    }

    pub fn name(&self) -> String {
        self.label.to_string()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Sender of round `round`, for `round` in `1..=r`.
    pub fn sender(&self, round: usize) -> PartyId {
        (self.schedule)(round)
    }

    pub fn domain(&self, party: PartyId) -> Tape {
        self.domains[party.index()]
    }

    /// Number of tape pairs, i.e. the size of an exhaustive enumeration.
    pub fn enumeration_size(&self) -> u128 {
        self.domains[0] as u128 * self.domains[1] as u128
    }

    /// Whether honest executions are expected to output a uniform bit. Variants such as the
    /// stopped protocol waive this.
    pub fn expects_uniform_output(&self) -> bool {
        self.uniform_output
    }

    /// Message of round `round` sent by a party holding `tape`, given the earlier messages.
    pub fn message(&self, round: usize, tape: Tape, previous: &[Symbol]) -> Symbol {
        (self.message)(round, tape, previous)
    }

    /// Backup bit `Z_round` of `party`; `messages` must be exactly `m_{<=round}`.
    pub fn backup(&self, party: PartyId, round: usize, tape: Tape, messages: &[Symbol]) -> bool {
        (self.backup)(party, round, tape, messages)
    }

    pub fn output(&self, party: PartyId, tape: Tape, messages: &[Symbol]) -> bool {
        (self.output)(party, tape, messages)
    }

    pub fn check_tape(&self, party: PartyId, tape: Tape) -> Result<()> {
        let domain = self.domain(party);
        if tape < domain {
            Ok(())
        } else {
            Err(Error::TapeOutOfRange { party, tape, domain })
        }
    }

    /// Transcript of the honest execution on `tapes`, without range checks.
    pub fn transcript(&self, tapes: [Tape; 2]) -> Vec<Symbol> {
        let mut messages = Vec::with_capacity(self.rounds);
        for round in 1..=self.rounds {
            let sender = self.sender(round);
            let m = self.message(round, tapes[sender.index()], &messages);
            messages.push(m);
        }
        messages
    }
}

pub struct ProtocolBuilder {
    label: ProtocolLabel,
    rounds: usize,
    domains: [Tape; 2],
    uniform_output: bool,
    schedule: Option<Arc<ScheduleFn>>,
    message: Option<Arc<MessageFn>>,
    backup: Option<Arc<BackupFn>>,
    output: Option<Arc<OutputFn>>,
}

impl ProtocolBuilder {
    pub fn domains(mut self, a: Tape, b: Tape) -> Self {
        self.domains = [a, b];
        self
    }

    /// Overrides the default schedule, where `A` sends the odd rounds.
    pub fn schedule(mut self, f: impl Fn(usize) -> PartyId + Send + Sync + 'static) -> Self {
        self.schedule = Some(Arc::new(f));
        self
    }

    pub fn messages(
        mut self,
        f: impl Fn(usize, Tape, &[Symbol]) -> Symbol + Send + Sync + 'static,
    ) -> Self {
        self.message = Some(Arc::new(f));
        self
    }

    pub fn backups(
        mut self,
        f: impl Fn(PartyId, usize, Tape, &[Symbol]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.backup = Some(Arc::new(f));
        self
    }

    /// Overrides the default output, which is the last backup value.
    pub fn outputs(
        mut self,
        f: impl Fn(PartyId, Tape, &[Symbol]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.output = Some(Arc::new(f));
        self
    }

    pub fn non_uniform(mut self) -> Self {
        self.uniform_output = false;
        self
    }

    pub fn build(self) -> Result<ProtocolSpec> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("a protocol needs at least one round".into()));
        }
        if self.domains.contains(&0) {
            return Err(Error::InvalidParameter("tape domains must be positive".into()));
        }
        let message = self
            .message
            .ok_or_else(|| Error::InvalidParameter("missing message function".into()))?;
        let backup = self
            .backup
            .ok_or_else(|| Error::InvalidParameter("missing backup function".into()))?;
        let rounds = self.rounds;
        let output = match self.output {
            Some(f) => f,
            None => {
                let backup = backup.clone();
                Arc::new(move |p: PartyId, t: Tape, m: &[Symbol]| backup(p, rounds, t, m))
            }
        };
        let schedule = self.schedule.unwrap_or_else(|| Arc::new(alternating));
        Ok(ProtocolSpec {
            label: self.label,
            rounds,
            domains: self.domains,
            uniform_output: self.uniform_output,
            schedule,
            message,
            backup,
            output,
        })
    }
}

/// `A` sends odd rounds, `B` even rounds.
pub fn alternating(round: usize) -> PartyId {
    if round % 2 == 1 {
        PartyId::A
    } else {
        PartyId::B
    }
}

/// A transcript prefix `m_{<=i}`; its round index is its length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TranscriptPrefix(pub Vec<Symbol>);

impl TranscriptPrefix {
    pub fn round(&self) -> usize {
        self.0.len()
    }

    pub fn messages(&self) -> &[Symbol] {
        &self.0
    }
}

impl From<Vec<Symbol>> for TranscriptPrefix {
    fn from(v: Vec<Symbol>) -> Self {
        TranscriptPrefix(v)
    }
}

impl AsRef<[Symbol]> for TranscriptPrefix {
    fn as_ref(&self) -> &[Symbol] {
        &self.0
    }
}

/// Full record of one honest execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub tapes: [Tape; 2],
    pub messages: Vec<Symbol>,
    /// `backups[p][i]` is `Z_i` of party `p`, for `i` in `0..=r`.
    pub backups: [Vec<bool>; 2],
    pub outputs: [bool; 2],
    /// The common output `C`, taken from `A`'s output.
    pub output: bool,
}

impl ExecutionRecord {
    pub fn prefix(&self, round: usize) -> TranscriptPrefix {
        TranscriptPrefix(self.messages[..round].to_vec())
    }

    pub fn backup(&self, party: PartyId, round: usize) -> bool {
        self.backups[party.index()][round]
    }
}

pub fn execute(spec: &ProtocolSpec, tape_a: Tape, tape_b: Tape) -> Result<ExecutionRecord> {
    spec.check_tape(PartyId::A, tape_a)?;
    spec.check_tape(PartyId::B, tape_b)?;
    Ok(execute_unchecked(spec, [tape_a, tape_b]))
}

fn execute_unchecked(spec: &ProtocolSpec, tapes: [Tape; 2]) -> ExecutionRecord {
    let messages = spec.transcript(tapes);
    let backups = PartyId::BOTH.map(|p| {
        (0..=spec.rounds())
            .map(|i| spec.backup(p, i, tapes[p.index()], &messages[..i]))
            .collect::<Vec<_>>()
    });
    let outputs = PartyId::BOTH.map(|p| spec.output(p, tapes[p.index()], &messages));
    ExecutionRecord { tapes, messages, backups, outputs, output: outputs[0] }
}

/// Draws uniform tapes and runs the honest execution.
pub fn sample_execution<R: Rng + ?Sized>(spec: &ProtocolSpec, rng: &mut R) -> ExecutionRecord {
    let tapes = [rng.random_range(0..spec.domain(PartyId::A)), rng.random_range(0..spec.domain(PartyId::B))];
    execute_unchecked(spec, tapes)
}

/// Current enumeration budget, honouring [`BUDGET_ENV`].
pub fn enumeration_budget() -> u64 {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

/// Returns the number of tape pairs if it fits the budget.
pub fn check_budget(spec: &ProtocolSpec) -> Result<u64> {
    let size = spec.enumeration_size();
    let budget = enumeration_budget();
    if size > budget as u128 {
        return Err(Error::CapacityExceeded { size, budget });
    }
    Ok(size as u64)
}

/// All honest executions, each carrying the same weight `1/N`.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub records: Vec<ExecutionRecord>,
    pub weight: Rational,
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_weight(&self) -> Rational {
        &self.weight * Rational::from_integer(self.records.len().into())
    }

    pub fn prob_output_one(&self) -> Rational {
        let ones = self.records.iter().filter(|r| r.output).count() as u64;
        from_counts(ones, self.records.len() as u64)
    }
}

/// Enumerates every tape pair in lexicographic `(tape_a, tape_b)` order.
pub fn enumerate_executions(spec: &ProtocolSpec) -> Result<Enumeration> {
    let n = check_budget(spec)?;
    let records = tape_pairs(spec).map(|t| execute_unchecked(spec, t)).collect();
    Ok(Enumeration { records, weight: from_counts(1, n) })
}

pub fn tape_pairs(spec: &ProtocolSpec) -> impl Iterator<Item = [Tape; 2]> + '_ {
    let db = spec.domain(PartyId::B);
    (0..spec.domain(PartyId::A)).flat_map(move |a| (0..db).map(move |b| [a, b]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    OutputDelivery,
    Determinism,
    BackupMatchesOutput,
    Agreement,
    Uniformity,
    TranscriptDeterminesOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    /// Set when the check does not apply to this protocol (uniformity of stopped variants).
    pub waived: bool,
    /// First tape pair, in enumeration order, violating the check.
    pub witness: Option<[Tape; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub protocol: String,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.waived)
    }

    pub fn get(&self, check: Check) -> &CheckResult {
        self.checks.iter().find(|c| c.check == check).expect("every check is reported")
    }
}

/// Mechanically checks the fair coin-flipping requirements on every tape pair.
pub fn validate(spec: &ProtocolSpec) -> Result<ValidationReport> {
    let n = check_budget(spec)?;
    let mut determinism = None;
    let mut backup_final = None;
    let mut agreement = None;
    let mut transcript_output = None;
    let mut by_transcript: HashMap<Vec<Symbol>, bool> = HashMap::new();
    let mut ones = 0u64;

    for tapes in tape_pairs(spec) {
        let record = execute_unchecked(spec, tapes);
        if determinism.is_none() && execute_unchecked(spec, tapes) != record {
            determinism = Some(tapes);
        }
        let r = spec.rounds();
        if backup_final.is_none()
            && PartyId::BOTH.iter().any(|p| record.backup(*p, r) != record.outputs[p.index()])
        {
            backup_final = Some(tapes);
        }
        if agreement.is_none() && record.outputs[0] != record.outputs[1] {
            agreement = Some(tapes);
        }
        match by_transcript.get(&record.messages) {
            Some(&c) if c != record.output => {
                transcript_output.get_or_insert(tapes);
            }
            Some(_) => {}
            None => {
                by_transcript.insert(record.messages.clone(), record.output);
            }
        }
        ones += record.output as u64;
    }

    let uniform = 2 * ones == n;
    let result = |check, witness: Option<[Tape; 2]>| CheckResult {
        check,
        passed: witness.is_none(),
        waived: false,
        witness,
    };
    let checks = vec![
        // backup and output functions are total, so an honest party always has a bit to output
        result(Check::OutputDelivery, None),
        result(Check::Determinism, determinism),
        result(Check::BackupMatchesOutput, backup_final),
        result(Check::Agreement, agreement),
        CheckResult {
            check: Check::Uniformity,
            passed: uniform,
            waived: !spec.expects_uniform_output(),
            witness: None,
        },
        result(Check::TranscriptDeterminesOutput, transcript_output),
    ];
    Ok(ValidationReport { protocol: spec.name(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ratio;
    use crate::zoo;

    #[test]
    fn party_complement_is_an_involution() {
        for p in PartyId::BOTH {
            assert_ne!(p, p.other());
            assert_eq!(p, p.other().other());
        }
    }

    #[test]
    fn dictator_execution_outputs_the_sent_coin() {
        let spec = zoo::dictator();
        let rec = execute(&spec, 1, 0).unwrap();
        assert_eq!(rec.messages, vec![1]);
        assert!(rec.output);
        assert!(rec.backup(PartyId::A, 1) && rec.backup(PartyId::B, 1));
    }

    #[test]
    fn blum_output_is_xor() {
        let rec = execute(&zoo::blum(), 1, 1).unwrap();
        assert_eq!(rec.messages, vec![BOTTOM, 1, 1]);
        assert!(!rec.output);
    }

    #[test]
    fn majority_of_two_ones() {
        // tape bit j-1 is the coin revealed in round j
        let spec = zoo::majority(3).unwrap();
        let rec = execute(&spec, 0b001, 0b010).unwrap();
        assert_eq!(rec.messages, vec![1, 1, 0]);
        assert!(rec.output);
    }

    #[test]
    fn out_of_range_tape_is_rejected() {
        let err = execute(&zoo::blum(), 2, 0).unwrap_err();
        assert_eq!(err, Error::TapeOutOfRange { party: PartyId::A, tape: 2, domain: 2 });
    }

    #[test]
    fn enumeration_weights() {
        let dict = enumerate_executions(&zoo::dictator()).unwrap();
        // the honest party keeps a private coin for its round-0 backup
        assert_eq!(dict.len(), 4);
        assert_eq!(dict.total_weight(), ratio(1, 1));

        let blum = enumerate_executions(&zoo::blum()).unwrap();
        assert_eq!(blum.len(), 4);
        assert_eq!(blum.prob_output_one(), ratio(1, 2));

        let maj = enumerate_executions(&zoo::majority(3).unwrap()).unwrap();
        assert_eq!(maj.len(), 1 << 6);
        assert_eq!(maj.prob_output_one(), ratio(1, 2));
        assert_eq!(maj.total_weight(), ratio(1, 1));
    }

    #[test]
    fn capacity_error_mentions_sampled_mode() {
        let spec = ProtocolSpec::builder(ProtocolLabel::new("huge", vec![]), 1)
            .domains(1 << 20, 1 << 20)
            .messages(|_, t, _| (t & 1) as Symbol)
            .backups(|_, _, t, _| t & 1 == 1)
            .build()
            .unwrap();
        let err = enumerate_executions(&spec).unwrap_err();
        assert!(matches!(err, Error::CapacityExceeded { .. }));
        assert!(err.to_string().contains("sampled mode"));
    }

    #[test]
    fn zoo_protocols_validate() {
        for spec in [zoo::dictator(), zoo::blum(), zoo::majority(3).unwrap(), zoo::majority(5).unwrap()] {
            let report = validate(&spec).unwrap();
            assert!(report.passed(), "{}: {:?}", spec.name(), report);
        }
    }

    #[test]
    fn broken_agreement_reports_first_witness() {
        let spec = zoo::broken_blum();
        let report = validate(&spec).unwrap();
        let agreement = report.get(Check::Agreement);
        assert!(!agreement.passed);
        assert_eq!(agreement.witness, Some([0, 1]));
    }

    #[test]
    fn even_majority_is_not_uniform() {
        let report = validate(&zoo::majority_unchecked(4)).unwrap();
        let uniformity = report.get(Check::Uniformity);
        assert!(!uniformity.passed && !uniformity.waived);
        assert!(!report.passed());
    }

    #[test]
    fn sampled_execution_matches_execute() {
        let spec = zoo::majority(5).unwrap();
        let mut rng = crate::rng::stream(3, "test", 0);
        for _ in 0..50 {
            let rec = sample_execution(&spec, &mut rng);
            assert_eq!(rec, execute(&spec, rec.tapes[0], rec.tapes[1]).unwrap());
        }
    }
}
