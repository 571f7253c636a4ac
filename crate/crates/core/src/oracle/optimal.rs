//! Optimal fail-stop adversary by backward induction.
//!
//! For a corrupted party `P` with tape `t` standing at node `u` of the transcript tree, let
//! `W(t, u)` be the largest achievable number of honest tapes `h in S_H(u)` on which the honest
//! party ends with the target bit. Honest rounds split `S_H(u)` among the children, so `W` adds
//! up over them; at its own rounds `P` compares aborting, which fixes the honest backup on all of
//! `S_H(u)`, against sending its message. Every value is an integer count, so the induction is
//! exact and the final bias is `sum_t W(t, root) / N - 1/2`.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::num::{from_counts, half, Rational};
use crate::protocol::{enumeration_budget, PartyId};
use crate::tree::TranscriptTree;

use super::strategy::{check_target, AbortRule, FailStopStrategy};

pub(crate) fn optimal_failstop(
    tree: &TranscriptTree,
    corrupted: PartyId,
    target: u8,
) -> Result<(Rational, FailStopStrategy)> {
    check_target(target)?;
    let spec = tree.spec();
    let z = target == 1;
    let p = corrupted;
    let h = p.other();
    let r = spec.rounds();

    let states: u128 = tree.nodes().iter().map(|n| n.tapes_of(p).len() as u128).sum();
    let budget = enumeration_budget();
    if states > budget as u128 {
        return Err(Error::CapacityExceeded { size: states, budget });
    }

    // values[node][k] is W for the k-th tape of S_P(node)
    let mut values: Vec<Vec<u64>> = vec![Vec::new(); tree.nodes().len()];
    let mut aborts = HashSet::new();

    for &leaf in tree.leaves() {
        let n = tree.node(leaf);
        let wins = n.tapes_of(h).iter().filter(|&&t| spec.output(h, t, &n.prefix) == z).count() as u64;
        values[leaf] = vec![wins; n.tapes_of(p).len()];
    }

    for depth in (0..r).rev() {
        let round = depth + 1;
        let sender = spec.sender(round);
        for &id in tree.level(depth) {
            let n = tree.node(id);
            let row = if sender == h {
                let mut row = vec![0u64; n.tapes_of(p).len()];
                for &(_, c) in &n.children {
                    for (acc, v) in row.iter_mut().zip(&values[c]) {
                        *acc += v;
                    }
                }
                row
            } else {
                let abort = n
                    .tapes_of(h)
                    .iter()
                    .filter(|&&t| spec.backup(h, depth, t, &n.prefix) == z)
                    .count() as u64;
                n.tapes_of(p)
                    .iter()
                    .map(|&t| {
                        let m = spec.message(round, t, &n.prefix);
                        let c = tree.child(id, m).expect("own message leads to a child");
                        let k = tree.node(c).tapes_of(p).binary_search(&t).expect("tape stays consistent");
                        let cont = values[c][k];
                        if abort > cont {
                            aborts.insert((t, n.prefix.clone()));
                            abort
                        } else {
                            cont
                        }
                    })
                    .collect()
            };
            values[id] = row;
        }
    }

    let wins: u128 = values[TranscriptTree::ROOT].iter().map(|&v| v as u128).sum();
    let bias = from_counts(wins, tree.total()) - half();
    let strategy = FailStopStrategy::new("optimal", corrupted, target, AbortRule::InfoSets(aborts))?;
    Ok((bias, strategy))
}
