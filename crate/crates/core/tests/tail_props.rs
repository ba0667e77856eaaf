use proptest::prelude::*;
use spr_core::tail_bounds::{
    certify, erlang_cdf_lower, erlang_tails, lemma4_bound, lemma6_check, monte_carlo_tail, ErlangQuery, Suite,
    TailQuery, LEMMA4_GRID_KAPPA, LEMMA4_GRID_M, LEMMA6_GRID_C, LEMMA6_GRID_M,
};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

proptest! {
    #[test]
    fn lower_cdf_matches_statrs(m in 1u32..80, x in 0.0f64..300.0) {
        let got = erlang_cdf_lower(m, x);
        let want = if x == 0.0 { 0.0 } else { gamma_lr(m as f64, x) };
        prop_assert!((got - want).abs() < 1e-12, "m={} x={}: {} vs {}", m, x, got, want);
    }

    #[test]
    fn cdf_is_monotone(m in 1u32..50, x in 0.0f64..100.0, dx in 0.0f64..5.0) {
        prop_assert!(erlang_cdf_lower(m, x) <= erlang_cdf_lower(m, x + dx));
    }
}

#[test]
fn upper_tail_has_relative_precision() {
    for m in [5u32, 10, 30, 50] {
        for c in [6.0, 8.0, 10.0] {
            let x = c * m as f64;
            let ours = erlang_tails(m, x).ln_upper;
            let theirs = gamma_ur(m as f64, x).ln();
            assert!((ours - theirs).abs() < 1e-8 * theirs.abs(), "m={m} C={c}: {ours} vs {theirs}");
        }
    }
    // the classical leading term, `e^{−x} x^m / (x − m + 1)`, approaches the
    // exact tail as m grows
    let (m, x) = (200u32, 1200.0);
    let lead = -x + m as f64 * f64::ln(x) - f64::ln(x - m as f64 + 1.0) - ln_gamma(m as f64);
    assert!((erlang_tails(m, x).ln_upper - lead).abs() < 0.01);
}

#[test]
fn lower_tail_grid_dominance() {
    for m in LEMMA4_GRID_M {
        for kappa in LEMMA4_GRID_KAPPA {
            let exact = erlang_cdf_lower(m, kappa * m as f64);
            let b = lemma4_bound(m, kappa).unwrap();
            assert!(exact <= b.tight && b.tight <= b.loose, "m={m} kappa={kappa}");
        }
    }
}

#[test]
fn upper_tail_grid_dominance() {
    for m in LEMMA6_GRID_M {
        for c in LEMMA6_GRID_C {
            assert!(lemma6_check(m, c).holds, "m={m} C={c}");
        }
    }
}

#[test]
fn monte_carlo_tracks_exact_cdf_on_a_grid() {
    for (i, m) in [1u32, 3, 8].into_iter().enumerate() {
        for (j, x) in [0.5, 2.0, 8.0].into_iter().enumerate() {
            let q = TailQuery::ErlangLower(ErlangQuery { m, mean: 1.0, x });
            let est = monte_carlo_tail(&q, 50_000, (10 * i + j) as u64).unwrap();
            assert!(est.within_three_sigma_of(erlang_cdf_lower(m, x)), "m={m} x={x}: {est:?}");
        }
    }
}

#[test]
fn cdf_suite_passes() {
    let rows = certify(Suite::Cdf, 20_000, 3).unwrap();
    assert!(rows.iter().all(|r| r.passed), "{rows:#?}");
}
