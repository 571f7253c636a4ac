//! Frozen values from independent computations.

use fairflip::estimator::sample_count;
use fairflip::num::ratio;
use fairflip::{zoo, ExactOracle, PartyId};
use num_bigint::BigUint;

/// `(r, corrupted, numerator, denominator)` of the optimal bias, identical for both targets.
const MAJORITY: [(usize, PartyId, i128, i128); 8] = [
    (3, PartyId::A, 3, 16),
    (3, PartyId::B, 1, 8),
    (5, PartyId::A, 25, 128),
    (5, PartyId::B, 19, 128),
    (7, PartyId::A, 99, 512),
    (7, PartyId::B, 21, 128),
    (9, PartyId::A, 1615, 8192),
    (9, PartyId::B, 1403, 8192),
];

#[test]
fn majority_optimal_bias_table() {
    for (r, p, num, den) in MAJORITY {
        let o = ExactOracle::new(&zoo::majority(r).unwrap()).unwrap();
        for z in 0..2 {
            assert_eq!(o.optimal_failstop(p, z).unwrap().0, ratio(num, den), "majority:{r} {p} z={z}");
        }
    }
}

/// `ceil(1/2 (2 c^r / rho)^4 ln(8 / rho))` at 80 significant digits, `rho` taken as the exact
/// binary value of the literal.
const SAMPLE_COUNTS: &[(u64, u32, f64, &str)] = &[
    (2, 4, 0.5522797490916735, "15064527"),
    (1, 2, 0.5348622104260596, "265"),
    (1, 1, 0.0009765625, "79260832017725"),
    (3, 4, 0.00048828125, "58789987580711165565826"),
    (4, 4, 0.00048828125, "5865744663604008689239354"),
    (3, 1, 0.5058477146022232, "27325"),
    (4, 2, 0.5604101618710906, "14131464"),
    (2, 3, 0.7733512256179048, "214044"),
    (1, 4, 0.25, "7098"),
    (2, 1, 0.03125, "744261118"),
    (1, 4, 0.3522246927907557, "1624"),
    (1, 3, 0.980281362910036, "19"),
    (1, 4, 0.7175304770503627, "73"),
    (2, 4, 0.9271169275949348, "1529336"),
    (3, 2, 0.32391288899596954, "15290034"),
    (2, 4, 0.0625, "166714490422"),
    (4, 1, 0.00048828125, "349625627017260116"),
    (4, 1, 0.0078125, "3810616923930"),
    (3, 2, 0.8495671971533763, "225942"),
    (3, 3, 0.011702656393143409, "1479606359515615"),
    (2, 2, 0.5869581931872481, "45073"),
    (1, 2, 0.000244140625, "23412430380620098"),
    (2, 4, 0.8907237696298125, "1828372"),
    (2, 3, 0.7106677784514075, "311012"),
    (1, 4, 0.000244140625, "23412430380620098"),
    (1, 2, 0.8553551560792259, "34"),
    (2, 2, 0.03125, "11908177888"),
    (3, 3, 0.0009765625, "42122455828331412719"),
    (2, 3, 0.0009765625, "324652367944598679"),
    (4, 2, 0.4223222617830162, "48478845"),
    (4, 3, 0.03125, "780414346020670"),
    (1, 3, 0.00390625, "261979913521"),
    (1, 3, 0.49568636243841663, "369"),
    (2, 4, 0.11746336080987087, "11624728505"),
    (1, 1, 0.9559553600570372, "21"),
    (3, 3, 0.00048828125, "725802315811248957603"),
    (3, 2, 0.015625, "5493484344265"),
    (4, 4, 0.03125, "199786072581291495"),
    (1, 4, 0.6081659450498503, "151"),
    (4, 1, 0.43247351912802184, "170817"),
    (1, 4, 0.0078125, "14885222360"),
    (1, 4, 0.6649094131513568, "102"),
    (3, 4, 0.9292881389830621, "994094628"),
    (3, 1, 0.0009765625, "6420127393435668"),
    (4, 3, 0.2731396814442499, "81438394947"),
    (3, 2, 0.5307998544176962, "1793728"),
    (4, 1, 0.125, "34887240"),
    (2, 2, 0.5, "90853"),
    (1, 1, 0.5, "355"),
];

#[test]
fn sample_count_matches_high_precision_table() {
    for &(c, r, rho, want) in SAMPLE_COUNTS {
        let want: BigUint = want.parse().unwrap();
        assert_eq!(sample_count(c, r, rho).unwrap(), want, "c={c} r={r} rho={rho}");
    }
}
