mod common;

use common::arb_instance;
use proptest::prelude::*;
use spr_core::ball_growing::{compute_base_mean, replay, run, GrowthParams, RoundMeans};
use spr_core::partition::validate;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_produce_valid_partitions(inst in arb_instance(60, 8), seed in any::<u64>()) {
        let (p, trace) = run(&inst, &GrowthParams::with_seed(seed)).unwrap();
        prop_assert!(validate(&inst, &p).is_empty());
        prop_assert_eq!(&trace.partition(), &p);
        trace.check_against(&inst).unwrap();
        prop_assert!(trace.total_rounds() <= trace.round_cap);
    }

    #[test]
    fn radii_are_monotone_and_means_geometric(inst in arb_instance(40, 6), seed in any::<u64>()) {
        let params = GrowthParams::with_seed(seed);
        let (_, trace) = run(&inst, &params).unwrap();
        if let Some(d) = trace.base_mean {
            prop_assert_eq!(d, compute_base_mean(&inst, &params).unwrap());
            for (r, m) in trace.rounds.iter().zip(RoundMeans::new(d, trace.growth_rate)) {
                prop_assert_eq!(r.mean, m);
            }
        }
        for w in trace.rounds.windows(2) {
            for j in 0..inst.k() {
                prop_assert!(w[1].radii[j] >= w[0].radii[j]);
            }
        }
    }

    #[test]
    fn assigned_vertices_lie_inside_their_ball(inst in arb_instance(40, 6), seed in any::<u64>()) {
        let (_, trace) = run(&inst, &GrowthParams::with_seed(seed)).unwrap();
        for e in &trace.events {
            prop_assert!(inst.distance(e.vertex, inst.terminal(e.terminal)) <= e.radius);
        }
    }

    #[test]
    fn replay_reproduces_the_trace(inst in arb_instance(40, 6), seed in any::<u64>()) {
        let (p, trace) = run(&inst, &GrowthParams::with_seed(seed)).unwrap();
        let (q, again) = replay(&inst, &trace).unwrap();
        prop_assert_eq!(p, q);
        prop_assert_eq!(trace.events, again.events);
    }
}
