use std::collections::HashSet;

use fairflip::attacks::{a_star_certify, GValues, OracleMode};
use fairflip::forecaster::{forecast_fidelity, quantize};
use fairflip::independence::{attack_correlation, build_pi_hat, decorrelation_distance, AbortTest};
use fairflip::num::{from_counts, pow2_inv, zero, Rational};
use fairflip::oracle::{is_martingale, measure_bias, AbortRule, Conditioning};
use fairflip::protocol::ProtocolLabel;
use fairflip::rng::index_of;
use fairflip::tree::TranscriptTree;
use fairflip::{ExactOracle, FailStopStrategy, ForecasterSpec, MeasureMode, PartyId, ProtocolSpec, Symbol};
use proptest::prelude::*;

/// A protocol whose messages and backups are arbitrary functions given by hashing, with a common
/// output fixed by the transcript.
fn table_protocol(seed: u64, rounds: usize, da: u64, db: u64, alphabet: u64) -> ProtocolSpec {
    let key = move |tag: u64, a: u64, b: u64, m: &[Symbol]| {
        index_of([seed, tag, a, b].into_iter().chain(m.iter().map(|&s| s as u64)))
    };
    ProtocolSpec::builder(ProtocolLabel::new("table", vec![seed, rounds as u64, da, db, alphabet]), rounds)
        .domains(da, db)
        .non_uniform()
        .messages(move |j, t, m| (key(0, j as u64, t, m) % alphabet) as Symbol)
        .backups(move |p, i, t, m| {
            if i == rounds {
                key(3, 0, 0, m) & 1 == 1
            } else {
                key(1 + p.index() as u64, i as u64, t, m) & 1 == 1
            }
        })
        .build()
        .unwrap()
}

fn protocols() -> impl Strategy<Value = ProtocolSpec> {
    (any::<u64>(), 1usize..=3, 2u64..=4, 2u64..=4, 2u64..=3)
        .prop_map(|(seed, r, da, db, k)| table_protocol(seed, r, da, db, k))
}

fn exact_g(f: &ForecasterSpec) -> GValues {
    GValues::compute(f, 0.0, OracleMode::ExactG).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conditional_expectations_are_martingales(spec in protocols(), k in 1u32..=4) {
        let o = ExactOracle::new(&spec).unwrap();
        prop_assert!(is_martingale(&o.doob_martingale(Conditioning::Transcript).unwrap()));
        let f = ForecasterSpec::from_tree(o.tree().clone(), k).unwrap();
        prop_assert!(is_martingale(&o.doob_martingale(Conditioning::Forecast(&f)).unwrap()));
    }

    #[test]
    fn optimum_is_attained_and_dominant(spec in protocols(), pick in any::<u64>()) {
        let o = ExactOracle::new(&spec).unwrap();
        let tree = o.tree();
        for p in PartyId::BOTH {
            for z in 0..2 {
                let (best, strategy) = o.optimal_failstop(p, z).unwrap();
                prop_assert_eq!(o.measure_bias(&strategy, MeasureMode::Exact).unwrap().bias(), best.clone());
                let mut sets = HashSet::new();
                for depth in 0..spec.rounds() {
                    if spec.sender(depth + 1) != p {
                        continue;
                    }
                    for &id in tree.level(depth) {
                        for &t in tree.node(id).tapes_of(p) {
                            let prefix = &tree.node(id).prefix;
                            if index_of([pick, t].into_iter().chain(prefix.iter().map(|&s| s as u64))) & 1 == 1 {
                                sets.insert((t, prefix.clone()));
                            }
                        }
                    }
                }
                let other = FailStopStrategy::new("random", p, z, AbortRule::InfoSets(sets)).unwrap();
                prop_assert!(measure_bias(&spec, &other, MeasureMode::Exact).unwrap().bias() <= best);
            }
        }
    }

    #[test]
    fn stop_and_test_outputs_are_conditionally_independent(spec in protocols(), theta in 0.01f64..0.6) {
        let f = ForecasterSpec::new(&spec, 3).unwrap();
        let g = exact_g(&f);
        for tester in PartyId::BOTH {
            for toward in 0..2 {
                let test = AbortTest::threshold(tester, toward, theta);
                let hat = build_pi_hat(&f, &test, &g).unwrap();
                prop_assert_eq!(decorrelation_distance(&hat).unwrap().max, zero());
                for row in attack_correlation(&f, &test, &g).unwrap() {
                    prop_assert_eq!(&row.res1 + &row.res2 + &row.res3, row.corr.clone());
                    prop_assert_eq!(row.res1.clone(), zero());
                    prop_assert!(row.within_bound());
                }
            }
        }
    }

    #[test]
    fn certification_is_sound_in_exact_mode(spec in protocols(), k in 1u32..=8) {
        let f = ForecasterSpec::new(&spec, k).unwrap();
        let rep = a_star_certify(&f, 0.0, OracleMode::ExactG).unwrap();
        prop_assert!(rep.passed(), "{:#?}", rep);
        prop_assert!(rep.lower_bound <= rep.measured_bias);
    }

    #[test]
    fn forecasts_stay_within_quantization_error(spec in protocols(), k in 1u32..=10) {
        let f = ForecasterSpec::new(&spec, k).unwrap();
        for p in PartyId::BOTH {
            prop_assert!(forecast_fidelity(&f, p) <= pow2_inv(k + 1));
        }
        let tree = TranscriptTree::build(&spec).unwrap();
        for &leaf in tree.leaves() {
            prop_assert_eq!(f.at(leaf).a, f.at(leaf).b);
        }
    }

    #[test]
    fn quantization_is_nearest_with_ties_down(num in 0u64..=1000, den in 1u64..=1000, k in 1u32..=20) {
        let x: Rational = from_counts(num.min(den), den);
        let q = quantize(&x, k);
        let scaled = &x * fairflip::num::int(1i128 << k);
        let err = fairflip::num::abs(&(&scaled - fairflip::num::int(q as i128)));
        prop_assert!(err <= fairflip::num::half());
        if err == fairflip::num::half() {
            prop_assert!(fairflip::num::int(q as i128) < scaled);
        }
    }
}
