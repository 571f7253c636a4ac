//! The stop-and-test protocol, its exact decorrelator, and attack-decision correlations.
//!
//! A test party `T` with an abort test runs the protocol up to a uniformly chosen round `i`; if
//! it is due to send round `i` it outputs whether the test fires on `f_{<=i}`, otherwise 0. The
//! counterpart outputs its backup `Z_{i-1}`. For information-theoretic protocols the two outputs
//! are independent given the transcript, so the decorrelator is exact: the two conditional means.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::attacks::GValues;
use crate::error::{Error, Result};
use crate::forecaster::{Forecast, ForecasterSpec};
use crate::num::{abs, display, from_counts, ge_threshold, pow2_inv, to_f64, zero, Rational};
use crate::protocol::{tape_pairs, PartyId, ProtocolLabel, ProtocolSpec, Symbol, Tape, BOTTOM};
use crate::tree::{NodeId, TranscriptTree};

type TestFn = dyn Fn(&[Forecast], &Rational) -> bool + Send + Sync;

/// A test on the forecast prefix `f_0..f_i` and the estimate `G(f_{<=i})`, evaluated by `tester`
/// at the rounds it sends.
#[derive(Clone)]
pub struct AbortTest {
    pub name: String,
    pub tester: PartyId,
    /// Fire at most once per execution, at the first tester round where the predicate holds.
    pub first_crossing: bool,
    predicate: Arc<TestFn>,
}

impl std::fmt::Debug for AbortTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AbortTest")
            .field("name", &self.name)
            .field("tester", &self.tester)
            .field("first_crossing", &self.first_crossing)
            .finish()
    }
}

impl AbortTest {
    pub fn predicate(
        name: impl Into<String>,
        tester: PartyId,
        first_crossing: bool,
        f: impl Fn(&[Forecast], &Rational) -> bool + Send + Sync + 'static,
    ) -> Self {
        AbortTest { name: name.into(), tester, first_crossing, predicate: Arc::new(f) }
    }

    pub fn never(tester: PartyId) -> Self {
        Self::predicate("never", tester, true, |_, _| false)
    }

    /// Fires when `G(f_{<=i})` exceeds the counterpart's previous forecast by `theta` (toward 0),
    /// or falls below it by `theta` (toward 1).
    pub fn threshold(tester: PartyId, toward: u8, theta: f64) -> Self {
        let other = tester.other();
        Self::predicate(format!("threshold({tester},{toward},{theta})"), tester, true, move |f, g| {
            let prev = f[f.len() - 2].value(other);
            let gap = if toward == 0 { g - prev } else { prev - g };
            ge_threshold(&gap, theta)
        })
    }

    /// The forecaster attack's test: `G(f_{<=i}) >= f^B_{i-1} + 1/(16 sqrt r)`, tested by `A`.
    pub fn a_star(rounds: usize) -> Self {
        let mut t = Self::threshold(PartyId::A, 0, crate::attacks::a_star_threshold(rounds));
        t.name = "a_star".into();
        t
    }

    pub fn fires(&self, forecasts: &[Forecast], g: &Rational) -> bool {
        (self.predicate)(forecasts, g)
    }

    /// `E_i` per node: whether an execution through the node at depth `i` has the test fire at
    /// round `i`.
    pub fn firing(&self, fspec: &ForecasterSpec, g: &GValues) -> Vec<bool> {
        let tree = fspec.tree();
        let spec = tree.spec();
        let mut fired = vec![false; tree.nodes().len()];
        // whether the test already fired strictly above the node
        let mut before = vec![false; tree.nodes().len()];
        for depth in 1..=tree.rounds() {
            let own = spec.sender(depth) == self.tester;
            for &id in tree.level(depth) {
                let parent = tree.node(id).parent.expect("non-root");
                before[id] = before[parent] || fired[parent];
                if own && !(self.first_crossing && before[id]) {
                    fired[id] = self.fires(&fspec.prefix_at(id), g.at(id));
                }
            }
        }
        fired
    }

    /// Transcript prefixes `m_{<=i}` at which the test fires.
    pub fn firing_prefixes(&self, fspec: &ForecasterSpec, g: &GValues) -> Vec<Vec<Symbol>> {
        let tree = fspec.tree();
        self.firing(fspec, g)
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(id, _)| tree.node(id).prefix.clone())
            .collect()
    }
}

/// The stop-and-test protocol for `test`.
///
/// The tester's tape is `(i - 1) * domain + t`. Round 1 is the tester announcing `i`; rounds
/// `2..=r` replay the original rounds `1..r`, with rounds at or beyond `i` carrying `⊥`. The
/// tester outputs `E_i`, the counterpart `Z_{i-1}`. Backups before the end are 0.
pub fn build_pi_hat(fspec: &ForecasterSpec, test: &AbortTest, g: &GValues) -> Result<ProtocolSpec> {
    let spec = fspec.spec().clone();
    let r = spec.rounds();
    let tester = test.tester;
    let dt = spec.domain(tester);
    let fires: std::collections::HashSet<Vec<Symbol>> = test.firing_prefixes(fspec, g).into_iter().collect();
    let rounds = r.max(1);
    let own = move |p: PartyId, t: Tape| if p == tester { t % dt } else { t };

    let sched = spec.clone();
    let msg = spec.clone();
    let out = spec.clone();
    let output = move |p: PartyId, t: Tape, m: &[Symbol]| -> bool {
        let i = m[0] as usize;
        let history = &m[1..i];
        if p == tester {
            if out.sender(i) != tester {
                return false;
            }
            let mut prefix = history.to_vec();
            prefix.push(out.message(i, own(p, t), history));
            fires.contains(&prefix)
        } else {
            out.backup(p, i - 1, t, history)
        }
    };
    let domains = match tester {
        PartyId::A => (dt * r as Tape, spec.domain(PartyId::B)),
        PartyId::B => (spec.domain(PartyId::A), dt * r as Tape),
    };
    ProtocolSpec::builder(
        ProtocolLabel::new(format!("pi_hat({},{},{})", spec.name(), test.name, tester), vec![]),
        rounds,
    )
    .domains(domains.0, domains.1)
    .non_uniform()
    .schedule(move |j| if j == 1 { tester } else { sched.sender(j - 1) })
    .messages(move |j, t, m| {
        if j == 1 {
            return (t / dt + 1) as Symbol;
        }
        let i = m[0] as usize;
        if j - 1 < i {
            let sender = msg.sender(j - 1);
            msg.message(j - 1, own(sender, t), &m[1..])
        } else {
            BOTTOM
        }
    })
    .backups(move |p, j, t, m| j == rounds && output(p, t, m))
    .build()
}

/// Product-distribution parameters for the two outputs given a transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecorrelatorOutput {
    pub wa: Rational,
    pub wb: Rational,
}

impl DecorrelatorOutput {
    pub fn party(&self, p: PartyId) -> &Rational {
        match p {
            PartyId::A => &self.wa,
            PartyId::B => &self.wb,
        }
    }
}

/// Exact decorrelator: conditional output means per full transcript.
#[derive(Debug, Clone)]
pub struct Decorrelator {
    tree: TranscriptTree,
}

impl Decorrelator {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        Ok(Decorrelator { tree: TranscriptTree::build(spec)? })
    }

    pub fn tree(&self) -> &TranscriptTree {
        &self.tree
    }

    pub fn at_leaf(&self, leaf: NodeId) -> DecorrelatorOutput {
        let n = self.tree.node(leaf);
        let spec = self.tree.spec();
        let [wa, wb] = PartyId::BOTH.map(|p| {
            let ones = n.tapes_of(p).iter().filter(|&&t| spec.output(p, t, &n.prefix)).count();
            from_counts(ones as u64, n.tapes_of(p).len() as u64)
        });
        DecorrelatorOutput { wa, wb }
    }

    pub fn decorrelate(&self, transcript: &[Symbol]) -> Result<DecorrelatorOutput> {
        let id = self.tree.find(transcript)?;
        if self.tree.node(id).depth() != self.tree.rounds() {
            return Err(Error::InvalidParameter("the decorrelator takes full transcripts".into()));
        }
        Ok(self.at_leaf(id))
    }
}

pub fn exact_decorrelator(spec_hat: &ProtocolSpec, transcript: &[Symbol]) -> Result<DecorrelatorOutput> {
    Decorrelator::new(spec_hat)?.decorrelate(transcript)
}

/// Distance between the joint output law and the decorrelator's product law.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecorrelationDistance {
    /// Largest statistical distance over transcripts.
    pub max: Rational,
    /// Distance averaged over the transcript distribution.
    pub expected: Rational,
    pub transcripts: usize,
}

/// Compares, per transcript, the output law counted over all tape pairs with the product of the
/// decorrelator's marginals.
pub fn decorrelation_distance(spec: &ProtocolSpec) -> Result<DecorrelationDistance> {
    let dcr = Decorrelator::new(spec)?;
    let mut joint: HashMap<Vec<Symbol>, [u64; 4]> = HashMap::new();
    for tapes in tape_pairs(spec) {
        let m = spec.transcript(tapes);
        let oa = spec.output(PartyId::A, tapes[0], &m) as usize;
        let ob = spec.output(PartyId::B, tapes[1], &m) as usize;
        joint.entry(m).or_default()[2 * oa + ob] += 1;
    }
    let total = dcr.tree.total();
    let mut max = zero();
    let mut expected = zero();
    for (m, counts) in &joint {
        let n: u64 = counts.iter().sum();
        let w = dcr.decorrelate(m)?;
        let one = crate::num::one();
        let pa = [&one - &w.wa, w.wa.clone()];
        let pb = [&one - &w.wb, w.wb.clone()];
        let mut sd = zero();
        for x in 0..2 {
            for y in 0..2 {
                sd += abs(&(from_counts(counts[2 * x + y], n) - &pa[x] * &pb[y]));
            }
        }
        sd /= crate::num::int(2);
        expected += &sd * from_counts(n, total);
        max = max.max(sd);
    }
    Ok(DecorrelationDistance { max, expected, transcripts: joint.len() })
}

/// Per-round correlation between the tester's decision and the counterpart's backup error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundCorrelation {
    pub round: usize,
    /// `E[E_{i+1} (Z_i - F_i)]` for the counterpart's backup and forecast.
    pub corr: Rational,
    /// `E[E Z - W^T W^H]`.
    pub res1: Rational,
    /// `E[W^T W^H - W^T F]`.
    pub res2: Rational,
    /// `E[W^T F - E F]`.
    pub res3: Rational,
    /// `4 r 2^-k`.
    pub bound: Rational,
}

impl RoundCorrelation {
    pub fn within_bound(&self) -> bool {
        abs(&self.corr) <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub protocol: String,
    pub k: u32,
    pub round: usize,
    pub party: PartyId,
    pub corr: f64,
    pub corr_exact: String,
    pub bound: f64,
    pub pass: bool,
}

impl RoundCorrelation {
    pub fn row(&self, protocol: &str, k: u32, party: PartyId) -> CorrelationRow {
        CorrelationRow {
            protocol: protocol.to_string(),
            k,
            round: self.round,
            party,
            corr: to_f64(&self.corr),
            corr_exact: display(&self.corr),
            bound: to_f64(&self.bound),
            pass: self.within_bound(),
        }
    }
}

/// `E[E_{i+1}^P (Z_i^{P'} - F_i^{P'})]` for `i` in `0..r`, where `P = test.tester`, together with
/// the three residuals computed through the decorrelator of the stop-and-test protocol.
pub fn attack_correlation(fspec: &ForecasterSpec, test: &AbortTest, g: &GValues) -> Result<Vec<RoundCorrelation>> {
    let tree = fspec.tree();
    let spec = tree.spec();
    let r = tree.rounds();
    let p = test.tester;
    let h = p.other();
    let fired = test.firing(fspec, g);
    let hat = build_pi_hat(fspec, test, g)?;
    let dcr = Decorrelator::new(&hat)?;
    let bound = crate::num::int(4 * r as i128) * pow2_inv(fspec.bits());

    let mut rows = Vec::with_capacity(r);
    for i in 0..r {
        let (mut corr, mut res1, mut res2, mut res3) = (zero(), zero(), zero(), zero());
        if spec.sender(i + 1) == p {
            for &w in tree.level(i) {
                let pw = tree.probability(w);
                let f = fspec.at(w).value(h);
                // E[E], E[E Z] given m_{<=i}, summed over the tester's next message
                let (mut e, mut ez) = (zero(), zero());
                for &(_, u) in &tree.node(w).children {
                    if fired[u] {
                        let pu = from_counts(tree.weight(u), tree.weight(w));
                        ez += &pu * tree.backup_expectation_at(u, h, i);
                        e += pu;
                    }
                }
                let mut hat_transcript = vec![(i + 1) as Symbol];
                hat_transcript.extend_from_slice(&tree.node(w).prefix);
                hat_transcript.resize(hat.rounds(), BOTTOM);
                let wt = dcr.decorrelate(&hat_transcript)?;
                let (wp, wh) = (wt.party(p), wt.party(h));
                corr += &pw * (&ez - &e * &f);
                res1 += &pw * (&ez - wp * wh);
                res2 += &pw * (wp * wh - wp * &f);
                res3 += &pw * (wp * &f - &e * &f);
            }
        }
        rows.push(RoundCorrelation { round: i, corr, res1, res2, res3, bound: bound.clone() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{a_star_attack, OracleMode};
    use crate::num::int;
    use crate::oracle::AbortRule;
    use crate::protocol::{enumerate_executions, execute};
    use crate::zoo;

    fn exact(fspec: &ForecasterSpec) -> GValues {
        GValues::compute(fspec, 0.5, OracleMode::ExactG).unwrap()
    }

    #[test]
    fn never_test_outputs_zero() {
        let f = ForecasterSpec::new(&zoo::majority(3).unwrap(), 8).unwrap();
        let g = exact(&f);
        let hat = build_pi_hat(&f, &AbortTest::never(PartyId::A), &g).unwrap();
        for rec in enumerate_executions(&hat).unwrap().records {
            assert!(!rec.outputs[0]);
        }
        let dcr = Decorrelator::new(&hat).unwrap();
        for &leaf in dcr.tree().leaves() {
            assert_eq!(dcr.at_leaf(leaf).wa, zero());
        }
        for row in attack_correlation(&f, &AbortTest::never(PartyId::A), &g).unwrap() {
            assert_eq!((row.corr, row.res1, row.res2, row.res3), (zero(), zero(), zero(), zero()));
        }
    }

    #[test]
    fn blum_test_fires_on_the_attack_abort_set() {
        let f = ForecasterSpec::new(&zoo::blum(), 8).unwrap();
        let g = exact(&f);
        let test = AbortTest::a_star(3);
        let strategy = a_star_attack(&f, 0.0, OracleMode::ExactG).unwrap();
        let AbortRule::Withhold(set) = &strategy.rule else { panic!("a_star withholds") };
        let mut fired: Vec<_> = test.firing_prefixes(&f, &g);
        let mut expected: Vec<_> = set.iter().cloned().collect();
        fired.sort();
        expected.sort();
        assert_eq!(fired, expected);
    }

    #[test]
    fn pi_hat_outputs_replay_direct_evaluation() {
        let spec = zoo::majority(3).unwrap();
        let f = ForecasterSpec::new(&spec, 8).unwrap();
        let g = exact(&f);
        let three_quarters = Forecast::new(192, 192, 8);
        let test = AbortTest::predicate("has 3/4", PartyId::A, false, move |fs, _| fs.contains(&three_quarters));
        let hat = build_pi_hat(&f, &test, &g).unwrap();
        for tape in 0..hat.domain(PartyId::A) {
            for b in 0..hat.domain(PartyId::B) {
                let rec = execute(&hat, tape, b).unwrap();
                let i = (tape / 8 + 1) as usize;
                let a = tape % 8;
                let full = spec.transcript([a, b]);
                let expected_e = spec.sender(i) == PartyId::A
                    && forecast_contains(&f, &full[..i], three_quarters);
                assert_eq!(rec.outputs[0], expected_e, "tapes {tape} {b}");
                assert_eq!(rec.outputs[1], spec.backup(PartyId::B, i - 1, b, &full[..i - 1]));
            }
        }
    }

    fn forecast_contains(f: &ForecasterSpec, prefix: &[Symbol], x: Forecast) -> bool {
        crate::forecaster::forecast_sequence(f, prefix).unwrap().contains(&x)
    }

    #[test]
    fn blum_decorrelator_after_b_reveals_one() {
        let f = ForecasterSpec::new(&zoo::blum(), 8).unwrap();
        let g = exact(&f);
        // stop at round 3 = A's reveal; the counterpart then outputs Z_2^B = b
        let hat = build_pi_hat(&f, &AbortTest::a_star(3), &g).unwrap();
        let w = exact_decorrelator(&hat, &[3, BOTTOM, 1]).unwrap();
        assert_eq!(w.wb, int(1));
    }

    #[test]
    fn product_law_holds_exactly() {
        for spec in zoo::canonical() {
            let f = ForecasterSpec::new(&spec, 8).unwrap();
            let g = exact(&f);
            for tester in PartyId::BOTH {
                let test = AbortTest::threshold(tester, 0, crate::attacks::a_star_threshold(spec.rounds()));
                let hat = build_pi_hat(&f, &test, &g).unwrap();
                let d = decorrelation_distance(&hat).unwrap();
                assert_eq!(d.max, zero(), "{}", hat.name());
            }
        }
    }

    #[test]
    fn residuals_sum_to_the_correlation() {
        let f = ForecasterSpec::new(&zoo::skewed_gap(3, 3).unwrap(), 2).unwrap();
        let g = exact(&f);
        for tester in PartyId::BOTH {
            let test = AbortTest::threshold(tester, 0, crate::attacks::a_star_threshold(3));
            for row in attack_correlation(&f, &test, &g).unwrap() {
                assert_eq!(&row.res1 + &row.res2 + &row.res3, row.corr);
                assert_eq!(row.res1, zero());
                assert_eq!(row.res3, zero());
                assert!(row.within_bound());
            }
        }
    }
}
