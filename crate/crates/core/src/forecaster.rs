//! Exact quantized forecaster and the expected outcome function.
//!
//! The forecast after `m_{<=i}` is the pair of conditional expectations of the two backup values
//! `Z_i^A`, `Z_i^B`, rounded to `k` fractional bits. After the last message both coordinates are
//! the common output. The expected outcome function `g` maps a forecast prefix
//! `f_{<=i} = (f_0, ..., f_i)` to `E[C | F_{<=i} = f_{<=i}]`.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{abs, from_counts, half, ratio, zero, Rational};
use crate::protocol::{PartyId, ProtocolLabel, ProtocolSpec, Symbol, Tape};
use crate::tree::{NodeId, TranscriptTree};

pub const DEFAULT_BITS: u32 = 8;
pub const MAX_BITS: u32 = 62;

/// Quantization bits for an accuracy parameter: `ceil(log2(1/rho)) + 1`.
pub fn bits_for(rho: f64) -> u32 {
    (1.0 / rho).log2().ceil() as u32 + 1
}

/// A forecast pair stored as fixed-point numerators over `2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Forecast {
    pub a: u64,
    pub b: u64,
    pub k: u32,
}

impl Forecast {
    pub fn new(a: u64, b: u64, k: u32) -> Self {
        Forecast { a, b, k }
    }

    /// Numerator of `party`'s coordinate.
    pub fn raw(&self, party: PartyId) -> u64 {
        match party {
            PartyId::A => self.a,
            PartyId::B => self.b,
        }
    }

    pub fn value(&self, party: PartyId) -> Rational {
        from_counts(self.raw(party), BigInt::from(1u8) << self.k)
    }

    pub fn to_f64(&self, party: PartyId) -> f64 {
        self.raw(party) as f64 / (self.k as f64).exp2()
    }
}

/// Randomness of a forecaster. The exact forecaster is deterministic and ignores it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForecastSeed(pub u64);

/// Rounds `x` in `[0, 1]` to the nearest multiple of `2^-k`, ties down.
pub fn quantize(x: &Rational, k: u32) -> u64 {
    let scaled = x * Rational::from_integer(BigInt::from(1u8) << k) - half();
    scaled.ceil().to_integer().to_u64().expect("probabilities quantize into [0, 2^k]")
}

/// The exact forecaster of one protocol, with its outcome table `g`.
#[derive(Debug, Clone)]
pub struct ForecasterSpec {
    k: u32,
    tree: Arc<TranscriptTree>,
    forecasts: Vec<Forecast>,
    /// Forecast-prefix class of every node, numbered per depth.
    class_of: Vec<usize>,
    /// `(ones, size)` counts of every class, per depth.
    class_counts: Vec<Vec<(u128, u128)>>,
    class_index: Vec<HashMap<Vec<Forecast>, usize>>,
}

impl ForecasterSpec {
    pub fn new(spec: &ProtocolSpec, k: u32) -> Result<Self> {
        Self::from_tree(Arc::new(TranscriptTree::build(spec)?), k)
    }

    pub fn from_tree(tree: Arc<TranscriptTree>, k: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&k) {
            return Err(Error::InvalidParameter(format!("quantization bits must be in 1..={MAX_BITS}")));
        }
        let r = tree.rounds();
        let forecasts: Vec<Forecast> = (0..tree.nodes().len())
            .map(|id| {
                if tree.node(id).depth() == r {
                    let c = quantize(&tree.output_expectation(id), k);
                    Forecast::new(c, c, k)
                } else {
                    let [a, b] = PartyId::BOTH.map(|p| quantize(&tree.backup_expectation(id, p), k));
                    Forecast::new(a, b, k)
                }
            })
            .collect();

        let mut class_of = vec![0; forecasts.len()];
        let mut class_counts = Vec::with_capacity(r + 1);
        let mut class_index = Vec::with_capacity(r + 1);
        let mut root_key = HashMap::new();
        root_key.insert(vec![forecasts[TranscriptTree::ROOT]], 0);
        class_index.push(root_key);
        class_counts.push(vec![(tree.node(TranscriptTree::ROOT).ones, tree.weight(TranscriptTree::ROOT))]);
        let mut keys: Vec<Vec<Forecast>> = vec![vec![forecasts[TranscriptTree::ROOT]]];
        for depth in 1..=r {
            let mut by_parent: HashMap<(usize, Forecast), usize> = HashMap::new();
            let mut counts: Vec<(u128, u128)> = Vec::new();
            let mut index = HashMap::new();
            let mut next_keys = Vec::new();
            for &id in tree.level(depth) {
                let parent = tree.node(id).parent.expect("non-root node");
                let key = (class_of[parent], forecasts[id]);
                let class = *by_parent.entry(key).or_insert_with(|| {
                    let mut fk = keys[class_of[parent]].clone();
                    fk.push(forecasts[id]);
                    index.insert(fk.clone(), counts.len());
                    next_keys.push(fk);
                    counts.push((0, 0));
                    counts.len() - 1
                });
                class_of[id] = class;
                counts[class].0 += tree.node(id).ones;
                counts[class].1 += tree.weight(id);
            }
            keys = next_keys;
            class_counts.push(counts);
            class_index.push(index);
        }
        Ok(ForecasterSpec { k, tree, forecasts, class_of, class_counts, class_index })
    }

    pub fn bits(&self) -> u32 {
        self.k
    }

    pub fn tree(&self) -> &Arc<TranscriptTree> {
        &self.tree
    }

    pub fn spec(&self) -> &ProtocolSpec {
        self.tree.spec()
    }

    pub fn rounds(&self) -> usize {
        self.tree.rounds()
    }

    pub(crate) fn check_tree(&self, tree: &TranscriptTree) -> Result<()> {
        if tree.spec().name() != self.spec().name() || tree.nodes().len() != self.tree.nodes().len() {
            return Err(Error::InvalidParameter(format!(
                "forecaster for {} used with {}",
                self.spec().name(),
                tree.spec().name()
            )));
        }
        Ok(())
    }

    /// Forecast at a node of the transcript tree.
    pub fn at(&self, id: NodeId) -> Forecast {
        self.forecasts[id]
    }

    pub fn forecast(&self, prefix: &[Symbol], _seed: ForecastSeed) -> Result<Forecast> {
        Ok(self.at(self.tree.find(prefix)?))
    }

    /// `f_0, ..., f_i` along the path to a node.
    pub fn prefix_at(&self, id: NodeId) -> Vec<Forecast> {
        self.tree.path(id).into_iter().map(|n| self.forecasts[n]).collect()
    }

    /// `g(F_{<=i})` for the forecast prefix of a node.
    pub fn expected_outcome_at(&self, id: NodeId) -> Rational {
        let d = self.tree.node(id).depth();
        let (ones, size) = self.class_counts[d][self.class_of[id]];
        from_counts(ones, size)
    }

    /// Class id of a node's forecast prefix at its depth; equal ids mean equal prefixes.
    pub fn class_at(&self, id: NodeId) -> usize {
        self.class_of[id]
    }

    /// Class id of a forecast prefix `f_0..f_i`, if it occurs.
    pub fn class_of_prefix(&self, f_prefix: &[Forecast]) -> Option<usize> {
        let depth = f_prefix.len().checked_sub(1)?;
        self.class_index.get(depth)?.get(f_prefix).copied()
    }

    /// `g(f_{<=i})`, or `None` when the forecast prefix never occurs.
    pub fn expected_outcome(&self, f_prefix: &[Forecast]) -> Option<Rational> {
        let class = self.class_of_prefix(f_prefix)?;
        let (ones, size) = self.class_counts[f_prefix.len() - 1][class];
        Some(from_counts(ones, size))
    }

    /// Tape-pair counts `(ones, size)` of a forecast-prefix class at `depth`.
    pub fn class_counts(&self, depth: usize, class: usize) -> (u128, u128) {
        self.class_counts[depth][class]
    }

    pub fn classes_at(&self, depth: usize) -> usize {
        self.class_counts[depth].len()
    }

    /// Largest number of distinct forecasts at any round `1..=r`.
    pub fn measured_c(&self) -> u64 {
        (1..=self.rounds())
            .map(|d| {
                let mut v: Vec<_> = self.tree.level(d).iter().map(|&id| self.forecasts[id]).collect();
                v.sort();
                v.dedup();
                v.len() as u64
            })
            .max()
            .unwrap_or(1)
    }
}

pub fn exact_forecast(fspec: &ForecasterSpec, prefix: &[Symbol]) -> Result<Forecast> {
    fspec.forecast(prefix, ForecastSeed::default())
}

/// `F_0, ..., F_len` along a transcript or transcript prefix.
pub fn forecast_sequence(fspec: &ForecasterSpec, transcript: &[Symbol]) -> Result<Vec<Forecast>> {
    let id = fspec.tree.find(transcript)?;
    Ok(fspec.prefix_at(id))
}

/// Statistical distance between `(Z_I^P, M_{<=I})` and `(U_{F_I^P}, M_{<=I})` for uniform `I`
/// in `1..=r`.
pub fn forecast_fidelity(fspec: &ForecasterSpec, party: PartyId) -> Rational {
    let tree = &fspec.tree;
    let r = tree.rounds();
    let mut total = zero();
    for depth in 1..=r {
        for &id in tree.level(depth) {
            let truth = tree.backup_expectation(id, party);
            let diff = abs(&(truth - fspec.at(id).value(party)));
            if !diff.is_zero() {
                total += diff * tree.probability(id);
            }
        }
    }
    total / ratio(r as i128, 1)
}

/// The stopped protocol: `A` first announces a uniform stop round `i` in `1..=r`, the parties
/// run the original protocol and both output their backup value `Z_i`.
///
/// `A`'s tape is `(i - 1) * domain_A + a`. Later backups stay at `Z_i` once round `i` is passed.
pub fn make_stopped(spec: &ProtocolSpec) -> ProtocolSpec {
    let r = spec.rounds();
    let da = spec.domain(PartyId::A);
    let inner = move |p: PartyId, t: Tape| if p == PartyId::A { t % da } else { t };
    let sched = spec.clone();
    let msg = spec.clone();
    let back = spec.clone();
    let out = spec.clone();
    ProtocolSpec::builder(ProtocolLabel::new(format!("stopped({})", spec.name()), vec![]), r + 1)
        .domains(da * r as Tape, spec.domain(PartyId::B))
        .non_uniform()
        .schedule(move |j| if j == 1 { PartyId::A } else { sched.sender(j - 1) })
        .messages(move |j, t, m| {
            if j == 1 {
                (t / da + 1) as Symbol
            } else {
                msg.message(j - 1, t % da, &m[1..])
            }
        })
        .backups(move |p, j, t, m| {
            if j == 0 {
                return back.backup(p, 0, inner(p, t), &[]);
            }
            let i = (m[0] as usize).min(j - 1);
            back.backup(p, i, inner(p, t), &m[1..=i])
        })
        .outputs(move |p, t, m| {
            let i = m[0] as usize;
            out.backup(p, i, inner(p, t), &m[1..=i])
        })
        .build()
        .expect("stopped protocol is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, pow2_inv};
    use crate::protocol::{execute, validate, Check, BOTTOM};
    use crate::zoo;

    #[test]
    fn quantization_rounds_to_nearest_ties_down() {
        assert_eq!(quantize(&ratio(3, 4), 8), 192);
        assert_eq!(quantize(&ratio(1, 4), 1), 0);
        assert_eq!(quantize(&ratio(3, 4), 1), 1);
        assert_eq!(quantize(&ratio(1, 3), 1), 1);
        assert_eq!(quantize(&int(1), 8), 256);
        assert_eq!(quantize(&int(0), 30), 0);
    }

    #[test]
    fn forecast_examples() {
        let blum = ForecasterSpec::new(&zoo::blum(), 8).unwrap();
        assert_eq!(exact_forecast(&blum, &[BOTTOM, 1]).unwrap().value(PartyId::B), int(1));
        let seq = forecast_sequence(&blum, &[BOTTOM, 1, 1]).unwrap();
        assert_eq!(seq[2].value(PartyId::B), int(1));
        assert_eq!((seq[3].a, seq[3].b), (0, 0));

        let maj = ForecasterSpec::new(&zoo::majority(3).unwrap(), 8).unwrap();
        assert_eq!(exact_forecast(&maj, &[1]).unwrap().value(PartyId::B), ratio(3, 4));
        let last = *forecast_sequence(&maj, &[1, 1, 0]).unwrap().last().unwrap();
        assert_eq!(last, Forecast::new(256, 256, 8));

        let dict = ForecasterSpec::new(&zoo::dictator(), 8).unwrap();
        let seq = forecast_sequence(&dict, &[1]).unwrap();
        assert_eq!(seq, vec![Forecast::new(128, 128, 8), Forecast::new(256, 256, 8)]);
    }

    #[test]
    fn final_forecast_is_the_output() {
        for spec in zoo::canonical() {
            let f = ForecasterSpec::new(&spec, 3).unwrap();
            for &leaf in f.tree().leaves() {
                let c = quantize(&f.tree().output_expectation(leaf), 3);
                assert!(c == 0 || c == 8);
                assert_eq!(f.at(leaf), Forecast::new(c, c, 3));
            }
        }
    }

    #[test]
    fn expected_outcome_table() {
        let maj = ForecasterSpec::new(&zoo::majority(3).unwrap(), 8).unwrap();
        let f = forecast_sequence(&maj, &[1]).unwrap();
        assert_eq!(maj.expected_outcome(&f), Some(ratio(3, 4)));
        assert_eq!(maj.expected_outcome(&[Forecast::new(7, 7, 8)]), None);
        assert_eq!(maj.expected_outcome(&[]), None);
    }

    #[test]
    fn measured_c_is_bounded() {
        for spec in zoo::canonical() {
            for k in [1, 2, 8] {
                let f = ForecasterSpec::new(&spec, k).unwrap();
                let c = f.measured_c();
                assert!(c >= 1 && c <= (1u64 << k).pow(2) + 2 * (1 << k) + 1);
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        for spec in zoo::canonical() {
            let f = ForecasterSpec::new(&spec, 30).unwrap();
            for p in PartyId::BOTH {
                assert!(forecast_fidelity(&f, p) <= pow2_inv(30));
            }
        }
        let maj = ForecasterSpec::new(&zoo::majority(3).unwrap(), 8).unwrap();
        assert!(forecast_fidelity(&maj, PartyId::B) <= pow2_inv(8));
        // blum's expectations are all multiples of 1/2, so even one bit is lossless
        let blum = ForecasterSpec::new(&zoo::blum(), 1).unwrap();
        assert_eq!(forecast_fidelity(&blum, PartyId::A), zero());
        let coarse = ForecasterSpec::new(&zoo::majority(3).unwrap(), 1).unwrap();
        assert!(forecast_fidelity(&coarse, PartyId::B) > zero());
    }

    #[test]
    fn stopped_protocol() {
        let dict = make_stopped(&zoo::dictator());
        assert_eq!(dict.rounds(), 2);
        let rec = execute(&dict, 1, 0).unwrap();
        assert_eq!(rec.messages, vec![1, 1]);
        assert_eq!(rec.outputs, [true, true]);

        let blum = make_stopped(&zoo::blum());
        // stop round 2 with a = 0, b = 1
        let rec = execute(&blum, 2, 1).unwrap();
        assert_eq!(rec.messages[0], 2);
        assert_eq!(rec.outputs, [true, true]);
        let rec = execute(&blum, 3, 1).unwrap();
        assert_eq!(rec.outputs, [false, true]);

        let maj = make_stopped(&zoo::majority(3).unwrap());
        let report = validate(&maj).unwrap();
        assert!(!report.get(Check::Agreement).passed);
        assert!(report.get(Check::Uniformity).waived);
        assert!(report.get(Check::BackupMatchesOutput).passed);
    }
}
