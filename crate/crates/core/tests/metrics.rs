mod common;

use common::*;
use geoharness::metrics::{pea, tao, tem, tio};
use geoharness::tools::synthetic_registry;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn names(max_len: usize, min_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0u8..8).prop_map(|c| ((b'a' + c) as char).to_string()), min_len..=max_len)
}

fn pea_of(case: &PeaCase) -> f64 {
    pea(&case.trajectory, &case.gold, &synthetic_registry(), &case.probe).unwrap().score
}

proptest! {
    #[test]
    fn sequence_metrics_match_oracles(pred in names(12, 0), gold in names(12, 1)) {
        let t = tao(&pred, &gold).unwrap();
        let (p, r, f1) = tao_oracle(&pred, &gold);
        prop_assert_eq!((t.precision, t.recall, t.f1), (p, r, f1));
        prop_assert_eq!(tio(&pred, &gold).unwrap(), tio_oracle(&pred, &gold));
        prop_assert_eq!(tem(&pred, &gold).unwrap(), tem_oracle(&pred, &gold));
    }

    #[test]
    fn tem_bounded_by_tio(pred in names(12, 0), gold in names(12, 1)) {
        let (m, o) = (tem(&pred, &gold).unwrap(), tio(&pred, &gold).unwrap());
        prop_assert!(0.0 <= m && m <= o && o <= 1.0);
    }

    #[test]
    fn off_gold_insertions(pred in names(10, 0), gold in names(10, 1), at in any::<prop::sample::Index>(), extra in 1usize..4) {
        let mut noisy = pred.clone();
        for i in 0..extra {
            noisy.insert(at.index(noisy.len() + 1), format!("zz{i}"));
        }
        prop_assert_eq!(tio(&noisy, &gold).unwrap(), tio(&pred, &gold).unwrap());
        let (before, after) = (tao(&pred, &gold).unwrap(), tao(&noisy, &gold).unwrap());
        prop_assert_eq!(after.recall, before.recall);
        prop_assert!(after.precision <= before.precision);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pea_ignores_failed_attempts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 0.3);
        prop_assert_eq!(pea_of(&with_failed_attempts(&case, &mut rng)), pea_of(&case));
    }

    #[test]
    fn pea_ignores_consistent_renaming(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 0.3);
        prop_assert_eq!(pea_of(&rename_intermediates(&case, &mut rng)), pea_of(&case));
    }

    #[test]
    fn pea_loses_one_step_per_missing_file(seed in any::<u64>(), k in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 0.0);
        let n = case.n();
        prop_assert_eq!(pea_of(&case), 1.0);
        let after = pea_of(&delete_result(&case, k.index(n)));
        prop_assert_eq!(after, (n - 1) as f64 / n as f64);
    }

    #[test]
    fn pea_ignores_map_styling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 0.3);
        prop_assert_eq!(pea_of(&perturb_style(&case, &mut rng)), pea_of(&case));
    }
}

#[test]
fn renaming_a_consumed_input_alone_breaks_the_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let case = loop {
        let c = random_case(&mut rng, 6, 0.0);
        let first_out = c.gold.steps[0].args["output"].as_str().unwrap().to_owned();
        let consumed = c.gold.steps[1..].iter().any(|s| s.args.values().any(|v| format!("{v:?}").contains(&first_out)));
        if c.n() >= 2 && consumed {
            break c;
        }
    };
    let mut broken = case.clone();
    let out = broken.trajectory.records[0].args.get_mut("output").unwrap();
    *out = geoharness::args::ArgValue::Str("elsewhere.geojson".into());
    broken.probe.0.insert("elsewhere.geojson".into());
    assert_eq!(pea_of(&case), 1.0);
    assert!(pea_of(&broken) < 1.0, "consumers still name the old path");
}
