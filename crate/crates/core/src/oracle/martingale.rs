use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::forecaster::ForecasterSpec;
use crate::num::{abs, from_counts, ge_threshold, zero, Rational};
use crate::protocol::Symbol;
use crate::tree::TranscriptTree;

/// What the martingale conditions on.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    /// `X_i = E[C | M_{<=i}]`.
    Transcript,
    /// `X_i = g(F_{<=i})`, the expected outcome given the forecasts so far.
    Forecast(&'a ForecasterSpec),
}

/// The martingale values along one full transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSequence {
    pub transcript: Vec<Symbol>,
    #[serde(serialize_with = "ser_rationals")]
    pub values: Vec<Rational>,
    #[serde(serialize_with = "ser_rational")]
    pub weight: Rational,
}

fn ser_rational<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::num::display(x))
}

fn ser_rationals<S: serde::Serializer>(xs: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(crate::num::display))
}

impl MartingaleSequence {
    pub fn max_increment(&self) -> Rational {
        self.values.windows(2).map(|w| abs(&(&w[1] - &w[0]))).max().unwrap_or_else(zero)
    }

    pub fn has_jump(&self, threshold: f64) -> bool {
        self.values.windows(2).any(|w| ge_threshold(&abs(&(&w[1] - &w[0])), threshold))
    }
}

pub(crate) fn doob_martingale(
    tree: &TranscriptTree,
    conditioning: Conditioning<'_>,
) -> Result<Vec<MartingaleSequence>> {
    if let Conditioning::Forecast(f) = conditioning {
        f.check_tree(tree)?;
    }
    Ok(tree
        .leaves()
        .iter()
        .map(|&leaf| {
            let path = tree.path(leaf);
            let values = match conditioning {
                Conditioning::Transcript => path.iter().map(|&id| tree.output_expectation(id)).collect(),
                Conditioning::Forecast(f) => path.iter().map(|&id| f.expected_outcome_at(id)).collect(),
            };
            MartingaleSequence {
                transcript: tree.node(leaf).prefix.clone(),
                values,
                weight: from_counts(tree.weight(leaf), tree.total()),
            }
        })
        .collect())
}

pub(crate) fn gap_probability(seqs: &[MartingaleSequence], threshold: f64) -> Rational {
    seqs.iter().filter(|s| s.has_jump(threshold)).fold(zero(), |acc, s| acc + &s.weight)
}

/// First round `i` at which, for some history `X_{<=i}`, the weighted mean of `X_{i+1}` differs
/// from `X_i`, together with that history.
pub fn tower_violation(seqs: &[MartingaleSequence]) -> Option<(usize, Vec<Rational>)> {
    let len = seqs.first()?.values.len();
    for i in 0..len.saturating_sub(1) {
        let mut groups: HashMap<&[Rational], (Rational, Rational)> = HashMap::new();
        for s in seqs {
            let e = groups.entry(&s.values[..=i]).or_insert_with(|| (zero(), zero()));
            e.0 += &s.weight;
            e.1 += &s.weight * &s.values[i + 1];
        }
        let mut bad: Vec<_> = groups
            .into_iter()
            .filter(|(h, (w, m))| m != &(w * &h[i]))
            .map(|(h, _)| h.to_vec())
            .collect();
        bad.sort();
        if let Some(h) = bad.into_iter().next() {
            return Some((i, h));
        }
    }
    None
}

pub fn is_martingale(seqs: &[MartingaleSequence]) -> bool {
    tower_violation(seqs).is_none()
}
