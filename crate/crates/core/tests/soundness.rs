mod common;

use evocert::certificates::TheoremId;
use proptest::prelude::*;

const THEOREMS: [TheoremId; 7] = [
    TheoremId::A1T21,
    TheoremId::A2T23,
    TheoremId::C25,
    TheoremId::A3T24,
    TheoremId::HT31,
    TheoremId::HT33,
    TheoremId::HT34,
];

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn certified_trajectories_stay_inside_envelopes(k in 0..THEOREMS.len(), seed in any::<u64>()) {
        let id = THEOREMS[k];
        if let Some((cert, rep)) = common::check_one(id, seed) {
            prop_assert!(!rep.blew_up, "{id} seed {seed} escaped");
            prop_assert!(rep.max_ratio <= 1.0 + 1e-5, "{id} seed {seed}: ratio {} at t = {} ({:?})", rep.max_ratio, rep.argmax_t, cert.constants);
        }
    }
}

#[test]
fn generator_is_reproducible() {
    for id in THEOREMS {
        let (a, b) = (common::random_spec(id, 11), common::random_spec(id, 11));
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn every_theorem_certifies_some_random_specs() {
    for (k, id) in THEOREMS.into_iter().enumerate() {
        let run = common::soundness(id, 3, 30, 1e-5, 900 + k as u64);
        assert_eq!(run.certified, 3, "{id}: {} of {} attempts", run.certified, run.attempts);
        assert!(run.violations.is_empty(), "{id}: {:?}", run.violations);
    }
}
