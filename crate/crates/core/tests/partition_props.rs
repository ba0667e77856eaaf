mod common;

use common::{arb_instance, random_valid_partition};
use proptest::prelude::*;
use spr_core::generate::{random_connected_instance, RandomGraphSpec};
use spr_core::partition::{contract, distortion, oracle_optimal, validate};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn contraction_never_shortens_terminal_distances(inst in arb_instance(40, 8), seeds in proptest::collection::vec(any::<u64>(), 10)) {
        for s in seeds {
            let p = random_valid_partition(&inst, s);
            prop_assert!(validate(&inst, &p).is_empty());
            let minor = contract(&inst, &p).unwrap();
            let d = minor.distances();
            for i in 0..inst.k() {
                for j in 0..inst.k() {
                    prop_assert!(d[i][j] >= inst.terminal_distance(i, j));
                }
            }
            prop_assert!(distortion(&inst, &minor).unwrap().max_ratio >= 1.0);
        }
    }
}

#[test]
fn oracle_is_a_lower_bound_for_random_partitions() {
    for seed in 0..20u64 {
        let shape = RandomGraphSpec { n: 9, k: 3, extra_edges: 6, max_weight: 5 };
        let inst = random_connected_instance(&shape, seed).unwrap();
        let best = oracle_optimal(&inst).unwrap();
        let minor = contract(&inst, &best.partition).unwrap();
        assert_eq!(distortion(&inst, &minor).unwrap().max_ratio, best.distortion);
        for s in 0..50 {
            let p = random_valid_partition(&inst, s);
            let d = distortion(&inst, &contract(&inst, &p).unwrap()).unwrap().max_ratio;
            assert!(d >= best.distortion, "seed {seed}/{s}: {d} < {}", best.distortion);
        }
    }
}
