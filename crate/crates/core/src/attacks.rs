//! Fail-stop attackers driven by conditional expectations or by the forecaster, and the
//! certification of the forecaster attack's bias bound.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_g, EstimatorParams, Sampling};
use crate::forecaster::ForecasterSpec;
use crate::independence::AbortTest;
use crate::num::{abs, display, from_f64, ge_threshold, half, int, pow2_inv, to_f64, zero, Rational};
use crate::oracle::{measure_bias, AbortRule, FailStopStrategy, MeasureMode};
use crate::protocol::{PartyId, ProtocolSpec, Symbol};
use crate::rng::{derive_seed, index_of};
use crate::tree::{NodeId, TranscriptTree};

pub fn ci_threshold(rounds: usize) -> f64 {
    0.5 / (rounds as f64).sqrt()
}

pub fn gap_threshold(rounds: usize, rho: f64) -> f64 {
    0.125 / (rounds as f64).sqrt() - rho
}

pub fn a_star_threshold(rounds: usize) -> f64 {
    1.0 / (16.0 * (rounds as f64).sqrt())
}

/// Where attackers get `G(f_{<=i})` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleMode {
    /// The exact expected outcome `g`.
    #[default]
    ExactG,
    /// The sampling estimator, one derived seed per forecast prefix.
    Estimator { seed: u64, sampling: Sampling },
}

/// `G(f_{<=i})` at every node of a forecaster's tree.
#[derive(Debug, Clone)]
pub struct GValues {
    values: Vec<Rational>,
    mode: OracleMode,
}

impl GValues {
    pub fn compute(fspec: &ForecasterSpec, rho: f64, mode: OracleMode) -> Result<Self> {
        let tree = fspec.tree();
        let n = tree.nodes().len();
        let values = match mode {
            OracleMode::ExactG => (0..n).map(|id| fspec.expected_outcome_at(id)).collect(),
            OracleMode::Estimator { seed, sampling } => {
                let params = EstimatorParams::for_forecaster(fspec, rho)?;
                let mut memo: HashMap<(usize, usize), Rational> = HashMap::new();
                let mut values = Vec::with_capacity(n);
                for id in 0..n {
                    let key = (tree.node(id).depth(), fspec.class_at(id));
                    if let Some(v) = memo.get(&key) {
                        values.push(v.clone());
                        continue;
                    }
                    let prefix = fspec.prefix_at(id);
                    let words = prefix.iter().flat_map(|f| [f.raw(PartyId::A), f.raw(PartyId::B)]);
                    let s = derive_seed(seed, "attack/g", index_of(words));
                    let v = estimate_g(fspec, &params, &prefix, s, sampling)?.value();
                    memo.insert(key, v.clone());
                    values.push(v);
                }
                values
            }
        };
        Ok(GValues { values, mode })
    }

    pub fn at(&self, id: NodeId) -> &Rational {
        &self.values[id]
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }
}

fn direction(target: u8, x: Rational) -> Rational {
    if target == 1 {
        x
    } else {
        -x
    }
}

/// Aborts instead of sending `m_j` when the honest party's backup mean exceeds the expected
/// outcome after `m_j` by `theta`, in the direction of `target`.
pub fn ci_attack_with(tree: &TranscriptTree, corrupted: PartyId, target: u8, theta: f64) -> Result<FailStopStrategy> {
    crate::oracle::check_target(target)?;
    let spec = tree.spec();
    let h = corrupted.other();
    let mut set = HashSet::new();
    for depth in 1..=tree.rounds() {
        if spec.sender(depth) != corrupted {
            continue;
        }
        for &u in tree.level(depth) {
            let gap = tree.backup_expectation_at(u, h, depth - 1) - tree.output_expectation(u);
            if ge_threshold(&direction(target, gap), theta) {
                set.insert(tree.node(u).prefix.clone());
            }
        }
    }
    FailStopStrategy::new(format!("ci({corrupted},{target})"), corrupted, target, AbortRule::Withhold(set))
}

pub fn ci_attack(spec: &ProtocolSpec, corrupted: PartyId, target: u8) -> Result<FailStopStrategy> {
    let tree = TranscriptTree::build(spec)?;
    ci_attack_with(&tree, corrupted, target, ci_threshold(spec.rounds()))
}

/// Nodes at which `(G(f_{<=i}) - f_i^H)` signed toward `target` reaches `theta`.
fn gap_crossings(fspec: &ForecasterSpec, g: &GValues, corrupted: PartyId, target: u8, theta: f64) -> Vec<bool> {
    let tree = fspec.tree();
    let h = corrupted.other();
    (0..tree.nodes().len())
        .map(|id| {
            tree.node(id).depth() >= 1 && {
                let gap = g.at(id) - fspec.at(id).value(h);
                ge_threshold(&direction(1 - target, gap), theta)
            }
        })
        .collect()
}

/// Watches every message, sent or received, and stops at the corrupted party's next round once
/// the gap between `G` and the honest party's forecast reaches `theta`.
pub fn gap_attack_with(
    fspec: &ForecasterSpec,
    g: &GValues,
    corrupted: PartyId,
    target: u8,
    theta: f64,
) -> Result<FailStopStrategy> {
    crate::oracle::check_target(target)?;
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!("gap threshold {theta} must be positive")));
    }
    let tree = fspec.tree();
    let spec = tree.spec();
    let crossed = gap_crossings(fspec, g, corrupted, target, theta);
    let mut seen = vec![false; tree.nodes().len()];
    let mut set = HashSet::new();
    for depth in 0..=tree.rounds() {
        for &id in tree.level(depth) {
            let above = tree.node(id).parent.is_some_and(|p| seen[p]);
            seen[id] = above || crossed[id];
            if seen[id] && depth < tree.rounds() && spec.sender(depth + 1) == corrupted {
                set.insert(tree.node(id).prefix.clone());
            }
        }
    }
    FailStopStrategy::new(format!("gap({corrupted},{target})"), corrupted, target, AbortRule::Before(set))
}

pub fn gap_attack(
    fspec: &ForecasterSpec,
    corrupted: PartyId,
    target: u8,
    rho: f64,
    mode: OracleMode,
) -> Result<FailStopStrategy> {
    let g = GValues::compute(fspec, rho, mode)?;
    gap_attack_with(fspec, &g, corrupted, target, gap_threshold(fspec.rounds(), rho))
}

fn test_strategy(fspec: &ForecasterSpec, g: &GValues, test: &AbortTest, target: u8) -> Result<FailStopStrategy> {
    let set: HashSet<Vec<Symbol>> = test.firing_prefixes(fspec, g).into_iter().collect();
    FailStopStrategy::new(test.name.clone(), test.tester, target, AbortRule::Withhold(set))
}

/// `A` withholds `m_i` at the first of its rounds with `G(f_{<=i}) >= f^B_{i-1} + 1/(16 sqrt r)`.
pub fn a_star_attack(fspec: &ForecasterSpec, rho: f64, mode: OracleMode) -> Result<FailStopStrategy> {
    let g = GValues::compute(fspec, rho, mode)?;
    test_strategy(fspec, &g, &AbortTest::a_star(fspec.rounds()), 0)
}

/// The same attack with the gap negated, pushing `B` toward 1.
pub fn a_star_mirrored(fspec: &ForecasterSpec, rho: f64, mode: OracleMode) -> Result<FailStopStrategy> {
    let g = GValues::compute(fspec, rho, mode)?;
    let mut test = AbortTest::threshold(PartyId::A, 1, a_star_threshold(fspec.rounds()));
    test.name = "a_star_mirrored".into();
    test_strategy(fspec, &g, &test, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    Ci,
    Gap,
    AStar,
    AStarMirrored,
    Optimal,
}

impl std::str::FromStr for AttackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(AttackerKind::Ci),
            "gap" => Ok(AttackerKind::Gap),
            "astar" | "a_star" => Ok(AttackerKind::AStar),
            "astar_mirrored" | "a_star_mirrored" => Ok(AttackerKind::AStarMirrored),
            "optimal" => Ok(AttackerKind::Optimal),
            _ => Err(Error::Domain { value: s.into(), expected: "ci, gap, astar, astar_mirrored or optimal" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackerKind,
    pub corrupted: PartyId,
    pub target: u8,
    pub rho: f64,
    pub mode: OracleMode,
    /// Overrides the attacker's default threshold.
    pub theta: Option<f64>,
}

impl AttackConfig {
    pub fn new(kind: AttackerKind, corrupted: PartyId, target: u8) -> Self {
        AttackConfig { kind, corrupted, target, rho: 0.0, mode: OracleMode::ExactG, theta: None }
    }

    pub fn threshold(&self, rounds: usize) -> f64 {
        self.theta.unwrap_or(match self.kind {
            AttackerKind::Ci => ci_threshold(rounds),
            AttackerKind::Gap => gap_threshold(rounds, self.rho),
            AttackerKind::AStar | AttackerKind::AStarMirrored => a_star_threshold(rounds),
            AttackerKind::Optimal => 0.0,
        })
    }

    pub fn strategy(&self, fspec: &ForecasterSpec) -> Result<FailStopStrategy> {
        crate::oracle::check_target(self.target)?;
        let r = fspec.rounds();
        let theta = self.threshold(r);
        if self.kind != AttackerKind::Optimal && !(theta > 0.0) {
            return Err(Error::InvalidParameter(format!("threshold {theta} must be positive")));
        }
        let astar = |toward: u8, name: &str| -> Result<FailStopStrategy> {
            if self.corrupted != PartyId::A {
                return Err(Error::InvalidParameter(format!("{name} corrupts A")));
            }
            let g = GValues::compute(fspec, self.rho, self.mode)?;
            let mut test = AbortTest::threshold(PartyId::A, toward, theta);
            test.name = name.into();
            test_strategy(fspec, &g, &test, toward)
        };
        match self.kind {
            AttackerKind::Ci => ci_attack_with(fspec.tree(), self.corrupted, self.target, theta),
            AttackerKind::Gap => {
                let g = GValues::compute(fspec, self.rho, self.mode)?;
                gap_attack_with(fspec, &g, self.corrupted, self.target, theta)
            }
            AttackerKind::AStar => astar(0, "a_star"),
            AttackerKind::AStarMirrored => astar(1, "a_star_mirrored"),
            AttackerKind::Optimal => Ok(crate::oracle::optimal::optimal_failstop(fspec.tree(), self.corrupted, self.target)?.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// One checked inequality, with both sides exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertEntry {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    /// Distance to violation; negative when the relation fails.
    pub slack: f64,
    pub pass: bool,
    /// Entries that hold only under the attack's premise are reported without being asserted.
    pub asserted: bool,
    pub lhs_exact: String,
    pub rhs_exact: String,
}

impl CertEntry {
    fn new(name: impl Into<String>, lhs: &Rational, relation: Relation, rhs: &Rational, asserted: bool) -> Self {
        let (slack, pass) = match relation {
            Relation::Le => (rhs - lhs, lhs <= rhs),
            Relation::Ge => (lhs - rhs, lhs >= rhs),
            Relation::Eq => (-abs(&(lhs - rhs)), lhs == rhs),
        };
        CertEntry {
            name: name.into(),
            relation,
            lhs: to_f64(lhs),
            rhs: to_f64(rhs),
            slack: to_f64(&slack),
            pass,
            asserted,
            lhs_exact: display(lhs),
            rhs_exact: display(rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub protocol: String,
    pub k: u32,
    pub rho: f64,
    pub mode: OracleMode,
    pub theta: f64,
    pub abort_probability: f64,
    pub measured_bias: f64,
    pub measured_bias_exact: String,
    pub lower_bound: f64,
    pub lower_bound_exact: String,
    pub entries: Vec<CertEntry>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass || !e.asserted)
    }

    pub fn entry(&self, name: &str) -> Option<&CertEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Runs the forecaster attack and evaluates every step of its bias argument exactly, with the
/// quantization error `2^-k` in place of the forecaster's accuracy.
pub fn a_star_certify(fspec: &ForecasterSpec, rho: f64, mode: OracleMode) -> Result<CertificationReport> {
    let tree = fspec.tree();
    let spec = tree.spec();
    let r = tree.rounds();
    let b = PartyId::B;
    let theta = a_star_threshold(r);
    let g = GValues::compute(fspec, rho, mode)?;
    let test = AbortTest::a_star(r);
    let fired = test.firing(fspec, &g);
    let strategy = test_strategy(fspec, &g, &test, 0)?;

    // Stopping nodes: the firing node at depth J, or the leaf when nothing fires.
    let mut stopped = vec![false; tree.nodes().len()];
    let mut stops = Vec::new();
    for depth in 0..=r {
        for &id in tree.level(depth) {
            let above = tree.node(id).parent.is_some_and(|p| stopped[p]);
            stopped[id] = above || fired[id];
            if fired[id] && !above || depth == r && !stopped[id] {
                stops.push(id);
            }
        }
    }

    let q = pow2_inv(fspec.bits());
    let slack_g = if mode == OracleMode::ExactG { zero() } else { int(2 * r as i128) * from_f64(rho) };
    let (mut pr_abort, mut ez, mut eg, mut egj, mut gap, mut tail, mut zf_tail) =
        (zero(), zero(), zero(), zero(), zero(), zero(), zero());
    let mut terms = vec![zero(); r];
    for &u in &stops {
        let p = tree.probability(u);
        let depth = tree.node(u).depth();
        let aborted = fired[u];
        // honest output: Z_{J-1}^B, with J = r + 1 when nothing fires
        let j_minus_1 = if aborted { depth - 1 } else { r };
        let at = if aborted { tree.node(u).parent.expect("firing below root") } else { u };
        let z = tree.backup_expectation_at(u, b, j_minus_1);
        let f = fspec.at(at).value(b);
        let gj = if aborted { g.at(u).clone() } else { fspec.expected_outcome_at(u) };
        let true_g = fspec.expected_outcome_at(u);
        ez += &p * &z;
        eg += &p * &true_g;
        egj += &p * (&true_g - &gj);
        if aborted {
            pr_abort += &p;
            gap += &p * (&gj - &f);
            terms[depth - 1] += &p * (&z - &f);
        } else {
            tail += &p * (&gj - &f);
            zf_tail += &p * (&z - &f);
        }
    }
    let zf: Rational = terms.iter().sum::<Rational>() + &zf_tail;
    let pr_one = tree.output_expectation(TranscriptTree::ROOT);
    let bias_from_tree = half() - &ez;
    let measured = measure_bias(spec, &strategy, MeasureMode::Exact)?.bias();
    let theta_q = from_f64(theta);
    let bound5 = int((4 * r * r) as i128) * &q;
    let lower = (half() - &pr_one) + &theta_q * &pr_abort + &tail - &bound5 - &slack_g;
    let tight = (half() - &eg) + &gap + &tail - &zf + &egj;

    let mut entries = vec![CertEntry::new("abort_premise", &pr_abort, Relation::Ge, &Rational::new(1.into(), 800.into()), false)];
    entries.push(CertEntry::new("stopping_sum", &zf, Relation::Eq, &terms.iter().sum(), true));
    for (i, t) in terms.iter().enumerate().take(r.saturating_sub(1)) {
        let bound = int(4 * r as i128) * &q;
        entries.push(CertEntry::new(format!("round_correlation[{i}]"), &abs(t), Relation::Le, &bound, true));
    }
    entries.push(CertEntry::new("correlation_total", &abs(&zf), Relation::Le, &bound5, true));
    entries.push(CertEntry::new("outcome_tower", &eg, Relation::Eq, &pr_one, true));
    entries.push(CertEntry::new("estimation_error", &abs(&egj), Relation::Le, &slack_g, mode == OracleMode::ExactG));
    entries.push(CertEntry::new("decomposition", &ez, Relation::Eq, &(&eg - &gap - &tail + &zf - &egj), true));
    entries.push(CertEntry::new("gap", &gap, Relation::Ge, &(&theta_q * &pr_abort), true));
    entries.push(CertEntry::new("measured", &measured, Relation::Eq, &bias_from_tree, true));
    entries.push(CertEntry::new("tight", &tight, Relation::Eq, &measured, true));
    entries.push(CertEntry::new("lower_bound", &lower, Relation::Le, &measured, true));
    let floor = from_f64(1.0 / (25600.0 * (r as f64).sqrt()));
    entries.push(CertEntry::new("fairness_floor", &measured, Relation::Ge, &floor, false));

    Ok(CertificationReport {
        protocol: spec.name(),
        k: fspec.bits(),
        rho,
        mode,
        theta,
        abort_probability: to_f64(&pr_abort),
        measured_bias: to_f64(&measured),
        measured_bias_exact: display(&measured),
        lower_bound: to_f64(&lower),
        lower_bound_exact: display(&lower),
        entries,
    })
}
