//! The transcript tree of a protocol.
//!
//! Messages depend only on the sender's tape and the history, so the tape pairs consistent with a
//! prefix form a rectangle `S_A × S_B`. Each node stores its two tape sets, which turns every
//! conditional expectation over the honest execution into counting within one party's set.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::num::{from_counts, Rational};
use crate::protocol::{check_budget, PartyId, ProtocolSpec, Symbol, Tape};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct Node {
    pub prefix: Vec<Symbol>,
    pub parent: Option<NodeId>,
    pub children: Vec<(Symbol, NodeId)>,
    /// Tapes of `A` and `B` consistent with the prefix, in increasing order.
    pub tapes: [Vec<Tape>; 2],
    /// Number of consistent tape pairs whose common output is 1.
    pub ones: u128,
}

impl Node {
    pub fn depth(&self) -> usize {
        self.prefix.len()
    }

    pub fn size(&self) -> u128 {
        self.tapes[0].len() as u128 * self.tapes[1].len() as u128
    }

    pub fn tapes_of(&self, party: PartyId) -> &[Tape] {
        &self.tapes[party.index()]
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptTree {
    spec: ProtocolSpec,
    nodes: Vec<Node>,
    index: HashMap<Vec<Symbol>, NodeId>,
    levels: Vec<Vec<NodeId>>,
    total: u128,
}

impl TranscriptTree {
    pub const ROOT: NodeId = 0;

    pub fn build(spec: &ProtocolSpec) -> Result<Self> {
        let total = check_budget(spec)? as u128;
        let r = spec.rounds();
        let root = Node {
            prefix: Vec::new(),
            parent: None,
            children: Vec::new(),
            tapes: PartyId::BOTH.map(|p| (0..spec.domain(p)).collect()),
            ones: 0,
        };
        let mut nodes = vec![root];
        let mut levels = vec![vec![Self::ROOT]];
        for round in 1..=r {
            let sender = spec.sender(round);
            let mut next = Vec::new();
            for &id in &levels[round - 1] {
                let mut groups: Vec<(Symbol, Vec<Tape>)> = Vec::new();
                for &t in nodes[id].tapes_of(sender) {
                    let m = spec.message(round, t, &nodes[id].prefix);
                    match groups.iter_mut().find(|(s, _)| *s == m) {
                        Some((_, ts)) => ts.push(t),
                        None => groups.push((m, vec![t])),
                    }
                }
                groups.sort_by_key(|(s, _)| *s);
                for (m, ts) in groups {
                    let mut prefix = nodes[id].prefix.clone();
                    prefix.push(m);
                    let mut tapes = nodes[id].tapes.clone();
                    tapes[sender.index()] = ts;
                    let child = nodes.len();
                    nodes.push(Node { prefix, parent: Some(id), children: Vec::new(), tapes, ones: 0 });
                    nodes[id].children.push((m, child));
                    next.push(child);
                }
            }
            levels.push(next);
        }

        for &leaf in &levels[r] {
            let node = &nodes[leaf];
            let ones_a = node
                .tapes_of(PartyId::A)
                .iter()
                .filter(|&&a| spec.output(PartyId::A, a, &node.prefix))
                .count() as u128;
            nodes[leaf].ones = ones_a * node.tapes[1].len() as u128;
        }
        for depth in (0..r).rev() {
            for &id in &levels[depth] {
                let ones = nodes[id].children.iter().map(|&(_, c)| nodes[c].ones).sum();
                nodes[id].ones = ones;
            }
        }

        let index = nodes.iter().enumerate().map(|(i, n)| (n.prefix.clone(), i)).collect();
        Ok(TranscriptTree { spec: spec.clone(), nodes, index, levels, total })
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn rounds(&self) -> usize {
        self.spec.rounds()
    }

    /// Number of tape pairs.
    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Node ids at depth `depth`, ordered by prefix.
    pub fn level(&self, depth: usize) -> &[NodeId] {
        &self.levels[depth]
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.levels[self.rounds()]
    }

    pub fn lookup(&self, prefix: &[Symbol]) -> Option<NodeId> {
        self.index.get(prefix).copied()
    }

    pub fn find(&self, prefix: &[Symbol]) -> Result<NodeId> {
        if prefix.len() > self.rounds() {
            return Err(Error::PrefixTooLong { len: prefix.len(), rounds: self.rounds() });
        }
        self.lookup(prefix).ok_or_else(|| Error::UnreachablePrefix(prefix.to_vec()))
    }

    pub fn child(&self, id: NodeId, m: Symbol) -> Option<NodeId> {
        self.nodes[id].children.iter().find(|(s, _)| *s == m).map(|&(_, c)| c)
    }

    /// Ancestors of `id` from the root down to `id` itself.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Node reached after `depth` rounds of the honest execution on `tapes`.
    pub fn descend(&self, tapes: [Tape; 2], depth: usize) -> NodeId {
        let mut id = Self::ROOT;
        for round in 1..=depth {
            let sender = self.spec.sender(round);
            let m = self.spec.message(round, tapes[sender.index()], &self.nodes[id].prefix);
            id = self.child(id, m).expect("honest messages stay inside the tree");
        }
        id
    }

    /// `Pr[M_{<=i} = prefix]` as a count of tape pairs.
    pub fn weight(&self, id: NodeId) -> u128 {
        self.nodes[id].size()
    }

    pub fn probability(&self, id: NodeId) -> Rational {
        from_counts(self.nodes[id].size(), self.total)
    }

    /// `E[C | M_{<=i}]` at the node.
    pub fn output_expectation(&self, id: NodeId) -> Rational {
        let n = &self.nodes[id];
        from_counts(n.ones, n.size())
    }

    /// Number of `party`'s consistent tapes whose backup after the node's prefix is 1.
    pub fn backup_ones(&self, id: NodeId, party: PartyId) -> u64 {
        let n = &self.nodes[id];
        n.tapes_of(party)
            .iter()
            .filter(|&&t| self.spec.backup(party, n.depth(), t, &n.prefix))
            .count() as u64
    }

    /// `E[Z_i^P | M_{<=i}]` at the node; the counterpart's tapes do not matter.
    pub fn backup_expectation(&self, id: NodeId, party: PartyId) -> Rational {
        let n = &self.nodes[id];
        from_counts(self.backup_ones(id, party) as u128, n.tapes_of(party).len() as u128)
    }

    /// Expectation of `party`'s backup with index `round` under the node, for `round <= depth`.
    pub fn backup_expectation_at(&self, id: NodeId, party: PartyId, round: usize) -> Rational {
        let n = &self.nodes[id];
        let ones = n
            .tapes_of(party)
            .iter()
            .filter(|&&t| self.spec.backup(party, round, t, &n.prefix[..round]))
            .count();
        from_counts(ones as u128, n.tapes_of(party).len() as u128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ratio;
    use crate::zoo;

    #[test]
    fn node_sizes_partition_the_tape_space() {
        let tree = TranscriptTree::build(&zoo::majority(5).unwrap()).unwrap();
        for depth in 0..=5 {
            let total: u128 = tree.level(depth).iter().map(|&id| tree.weight(id)).sum();
            assert_eq!(total, tree.total());
        }
    }

    #[test]
    fn rectangles_match_direct_execution() {
        let spec = zoo::blum();
        let tree = TranscriptTree::build(&spec).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let leaf = tree.descend([a, b], 3);
                let node = tree.node(leaf);
                assert!(node.tapes[0].contains(&a) && node.tapes[1].contains(&b));
                assert_eq!(node.prefix, spec.transcript([a, b]));
            }
        }
    }

    #[test]
    fn majority_first_coin_expectations() {
        let tree = TranscriptTree::build(&zoo::majority(3).unwrap()).unwrap();
        let id = tree.find(&[1]).unwrap();
        assert_eq!(tree.output_expectation(id), ratio(3, 4));
        assert_eq!(tree.backup_expectation(id, PartyId::B), ratio(3, 4));
    }

    #[test]
    fn unreachable_and_overlong_prefixes_are_errors() {
        let tree = TranscriptTree::build(&zoo::blum()).unwrap();
        assert!(matches!(tree.find(&[1]), Err(Error::UnreachablePrefix(_))));
        assert!(matches!(tree.find(&[0, 0, 0, 0]), Err(Error::PrefixTooLong { .. })));
    }
}
