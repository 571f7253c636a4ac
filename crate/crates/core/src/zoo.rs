//! Reference protocols.
//!
//! Coins are tape bits: in `majority(r)` bit `j-1` of a party's tape is the coin it reveals in
//! round `j` when it is the sender, and a private completion coin otherwise.

use crate::error::{Error, Result};
use crate::protocol::{PartyId, ProtocolLabel, ProtocolSpec, Symbol, Tape, BOTTOM};

/// A named constructor in the zoo.
#[derive(Debug, Clone, Copy)]
pub struct ZooEntry {
    pub name: &'static str,
    pub params: &'static str,
    pub summary: &'static str,
    /// Properties certified by the exact oracle.
    pub expected: &'static str,
    build: fn(&[u64]) -> Result<ProtocolSpec>,
}

impl ZooEntry {
    pub fn make(&self, params: &[u64]) -> Result<ProtocolSpec> {
        (self.build)(params)
    }
}

const ENTRIES: [ZooEntry; 4] = [
    ZooEntry {
        name: "dictator",
        params: "",
        summary: "A sends its coin; both output it; B's round-0 backup is a private coin",
        expected: "optimal bias 1/4 for corrupted A, 0 for corrupted B",
        build: |p| {
            no_params("dictator", p)?;
            Ok(dictator())
        },
    },
    ZooEntry {
        name: "blum",
        params: "",
        summary: "null commitment, B reveals b, A reveals a; output a xor b",
        expected: "optimal bias 1/4",
        build: |p| {
            no_params("blum", p)?;
            Ok(blum())
        },
    },
    ZooEntry {
        name: "majority",
        params: "r (odd)",
        summary: "alternating coin reveals; output the majority; backups complete with private coins",
        expected: "optimal bias 3/16, 25/128, 99/512, 1615/8192 for r = 3, 5, 7, 9",
        build: |p| match p {
            [r] => majority(*r as usize),
            _ => Err(Error::InvalidParameter("majority takes one parameter r".into())),
        },
    },
    ZooEntry {
        name: "skewed_gap",
        params: "r (odd)[:lag]",
        summary: "majority messages; B's backups ignore the last `lag` revealed coins (default r)",
        expected: "A's threshold attack fires with constant probability",
        build: |p| match p {
            [r] => skewed_gap(*r as usize, *r as usize),
            [r, lag] => skewed_gap(*r as usize, *lag as usize),
            _ => Err(Error::InvalidParameter("skewed_gap takes r and an optional lag".into())),
        },
    },
];

fn no_params(name: &str, p: &[u64]) -> Result<()> {
    if p.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} takes no parameters")))
    }
}

pub fn list() -> &'static [ZooEntry] {
    &ENTRIES
}

pub fn make(name: &str, params: &[u64]) -> Result<ProtocolSpec> {
    list()
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownProtocol(name.to_string()))?
        .make(params)
}

/// Parses `name[:p1[:p2]]`, e.g. `majority:5`.
pub fn parse(s: &str) -> Result<ProtocolSpec> {
    let mut parts = s.split(':');
    let name = parts.next().unwrap_or_default();
    let params = parts
        .map(|p| {
            p.parse::<u64>()
                .map_err(|_| Error::InvalidParameter(format!("bad protocol parameter `{p}` in `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    make(name, &params)
}

/// The protocols swept by the experiment suites.
pub fn canonical() -> Vec<ProtocolSpec> {
    ["dictator", "blum", "majority:3", "majority:5", "majority:7", "skewed_gap:3"]
        .iter()
        .map(|s| parse(s).expect("canonical zoo entries are valid"))
        .collect()
}

pub fn dictator() -> ProtocolSpec {
    ProtocolSpec::builder(ProtocolLabel::new("dictator", vec![]), 1)
        .domains(2, 2)
        .messages(|_, a, _| a as Symbol)
        .backups(|p, i, t, m| match (p, i) {
            (PartyId::A, _) => t == 1,
            (PartyId::B, 0) => t == 1,
            (PartyId::B, _) => m[0] == 1,
        })
        .build()
        .expect("dictator is well formed")
}

fn blum_messages(round: usize, tape: Tape, _: &[Symbol]) -> Symbol {
    match round {
        1 => BOTTOM,
        _ => tape as Symbol,
    }
}

fn blum_backup(p: PartyId, i: usize, t: Tape, m: &[Symbol]) -> bool {
    match (p, i) {
        (PartyId::A, 0 | 1) => t == 1,
        (PartyId::A, _) => (t as Symbol ^ m[1]) == 1,
        (PartyId::B, 0..=2) => t == 1,
        (PartyId::B, _) => (m[1] ^ m[2]) == 1,
    }
}

fn blum_schedule(round: usize) -> PartyId {
    if round == 2 {
        PartyId::B
    } else {
        PartyId::A
    }
}

pub fn blum() -> ProtocolSpec {
    ProtocolSpec::builder(ProtocolLabel::new("blum", vec![]), 3)
        .domains(2, 2)
        .schedule(blum_schedule)
        .messages(blum_messages)
        .backups(blum_backup)
        .build()
        .expect("blum is well formed")
}

/// Blum with a corrupted output rule for `B`: it flips its output when `b = 1` and `a = 0`.
pub fn broken_blum() -> ProtocolSpec {
    ProtocolSpec::builder(ProtocolLabel::new("broken_blum", vec![]), 3)
        .domains(2, 2)
        .schedule(blum_schedule)
        .messages(blum_messages)
        .backups(blum_backup)
        .outputs(|p, _, m| {
            let c = (m[1] ^ m[2]) == 1;
            match p {
                PartyId::A => c,
                PartyId::B => c ^ (m[1] == 1 && m[2] == 0),
            }
        })
        .build()
        .expect("broken blum is well formed")
}

fn bit(tape: Tape, j: usize) -> bool {
    (tape >> j) & 1 == 1
}

/// Strict majority of the first `revealed` messages and the party's coins `revealed..r`.
fn completed_majority(r: usize, revealed: usize, tape: Tape, m: &[Symbol]) -> bool {
    let ones = m[..revealed].iter().filter(|&&s| s == 1).count()
        + (revealed..r).filter(|&j| bit(tape, j)).count();
    2 * ones > r
}

/// `r`-round majority; `r` must be odd.
pub fn majority(r: usize) -> Result<ProtocolSpec> {
    if r % 2 == 0 {
        return Err(Error::Domain { value: r.to_string(), expected: "an odd number of rounds" });
    }
    Ok(majority_unchecked(r))
}

/// Majority with any `r`; ties are broken towards 0, so even `r` is biased.
pub fn majority_unchecked(r: usize) -> ProtocolSpec {
    assert!((1..=20).contains(&r), "majority supports 1..=20 rounds");
    ProtocolSpec::builder(ProtocolLabel::new("majority", vec![r as u64]), r)
        .domains(1 << r, 1 << r)
        .messages(|j, t, _| bit(t, j - 1) as Symbol)
        .backups(move |_, i, t, m| completed_majority(r, i, t, m))
        .build()
        .expect("majority is well formed")
}

/// Majority whose honest `B` backs up with a stale view: before the end it ignores the last
/// `lag` revealed coins and completes with its own tape instead. `A` is unchanged.
pub fn skewed_gap(r: usize, lag: usize) -> Result<ProtocolSpec> {
    if r % 2 == 0 {
        return Err(Error::Domain { value: r.to_string(), expected: "an odd number of rounds" });
    }
    if r > 20 {
        return Err(Error::InvalidParameter("skewed_gap supports at most 20 rounds".into()));
    }
    let mut params = vec![r as u64];
    if lag != r {
        params.push(lag as u64);
    }
    Ok(ProtocolSpec::builder(ProtocolLabel::new("skewed_gap", params), r)
        .domains(1 << r, 1 << r)
        .messages(|j, t, _| bit(t, j - 1) as Symbol)
        .backups(move |p, i, t, m| match p {
            PartyId::B if i < r => completed_majority(r, i.saturating_sub(lag), t, m),
            _ => completed_majority(r, i, t, m),
        })
        .build()
        .expect("skewed_gap is well formed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ratio;
    use crate::protocol::{enumerate_executions, validate};

    #[test]
    fn parse_and_make() {
        assert_eq!(parse("majority:3").unwrap().rounds(), 3);
        assert_eq!(parse("skewed_gap:5:2").unwrap().name(), "skewed_gap:5:2");
        assert_eq!(parse("skewed_gap:3").unwrap().name(), "skewed_gap:3");
        assert!(matches!(parse("nope"), Err(Error::UnknownProtocol(_))));
        assert!(matches!(parse("majority:x"), Err(Error::InvalidParameter(_))));
        assert!(matches!(parse("blum:1"), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn even_majority_is_rejected() {
        assert!(matches!(make("majority", &[4]), Err(Error::Domain { .. })));
    }

    #[test]
    fn majority_three_is_fair_and_valid() {
        let spec = make("majority", &[3]).unwrap();
        assert!(validate(&spec).unwrap().passed());
        assert_eq!(enumerate_executions(&spec).unwrap().prob_output_one(), ratio(1, 2));
    }

    #[test]
    fn canonical_specs_validate_within_budget() {
        for spec in canonical() {
            assert!(spec.enumeration_size() <= 1 << 22);
            assert!(validate(&spec).unwrap().passed(), "{}", spec.name());
        }
    }

    #[test]
    fn skewed_backups_differ_from_majority() {
        let skew = skewed_gap(3, 3).unwrap();
        let maj = majority(3).unwrap();
        // B holds 0,0,0 while A revealed two ones
        let m = [1, 0, 1];
        assert!(!maj.backup(PartyId::B, 2, 0b000, &m[..2]));
        assert!(!skew.backup(PartyId::B, 1, 0b000, &m[..1]));
        assert!(maj.backup(PartyId::B, 1, 0b110, &m[..1]));
        assert!(skew.backup(PartyId::B, 3, 0, &m) && maj.backup(PartyId::B, 3, 0, &m));
    }
}
