use fairflip::num::{ge_threshold, ratio, zero};
use fairflip::oracle::{jump_threshold, Conditioning};
use fairflip::protocol::{enumerate_executions, validate};
use fairflip::{zoo, ExactOracle, ForecasterSpec, PartyId};

/// Probability that `g(F_{<=i}) - F_i^B` reaches `theta` somewhere along the transcript.
fn lag_probability(f: &ForecasterSpec, theta: f64) -> fairflip::Rational {
    let tree = f.tree();
    let mut total = zero();
    for &leaf in tree.leaves() {
        let hit = tree.path(leaf).into_iter().skip(1).any(|id| {
            ge_threshold(&(f.expected_outcome_at(id) - f.at(id).value(PartyId::B)), theta)
        });
        if hit {
            total += tree.probability(leaf);
        }
    }
    total
}

#[test]
fn skewed_gap_certificate() {
    for r in [3, 5] {
        let spec = zoo::skewed_gap(r, r).unwrap();
        assert!(validate(&spec).unwrap().passed());
        let f = ForecasterSpec::new(&spec, 8).unwrap();
        let p = lag_probability(&f, 1.0 / (8.0 * (r as f64).sqrt()));
        assert!(p >= ratio(1, 200), "skewed_gap:{r} lag probability {p}");
        let jump = ExactOracle::new(&spec).unwrap().gap_probability(jump_threshold(r), Conditioning::Transcript).unwrap();
        assert!(jump >= ratio(1, 20));
    }
}

#[test]
fn majority_forecasts_never_lag() {
    let f = ForecasterSpec::new(&zoo::majority(5).unwrap(), 8).unwrap();
    assert_eq!(lag_probability(&f, 1.0 / (8.0 * 5f64.sqrt())), zero());
}

#[test]
fn every_entry_is_listed_and_fair() {
    let names: Vec<_> = zoo::list().iter().map(|e| e.name).collect();
    for name in ["dictator", "blum", "majority", "skewed_gap"] {
        assert!(names.contains(&name));
    }
    for spec in zoo::canonical() {
        assert!(spec.enumeration_size() <= 1 << 22);
        assert_eq!(enumerate_executions(&spec).unwrap().prob_output_one(), ratio(1, 2), "{}", spec.name());
    }
    assert!(zoo::parse("majority:4").is_err());
    assert!(zoo::parse("nosuch").is_err());
}
