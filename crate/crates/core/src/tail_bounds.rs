//! Tail bounds for sums of independent exponential variables, checked
//! against exact Erlang probabilities and Monte Carlo estimates.
//!
//! `P[Erlang(m,1) ≤ x] = γ(m,x)/(m−1)!` is evaluated by its power series for
//! `x < m+1` and through a Lentz continued fraction for `Γ(m,x)` otherwise,
//! both in log space so upper tails far below `f64::EPSILON` keep full
//! relative precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball_growing::erv_from_uniform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("kappa = {0} exceeds 1/4")]
    KappaTooLarge(f64),
    #[error("parameters outside the bound's regime: {0}")]
    ParamOutOfRegime(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("at least 10000 samples are required, got {0}")]
    TooFewSamples(usize),
}

pub const MIN_SAMPLES: usize = 10_000;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// `ln((m−1)!)`.
fn ln_factorial_before(m: u32) -> f64 {
    (2..m).map(|i| (i as f64).ln()).sum()
}

/// Both tails of `Erlang(m,1)` at `x`, plus `ln` of the upper tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErlangTails {
    pub lower: f64,
    pub upper: f64,
    pub ln_upper: f64,
}

pub fn erlang_tails(m: u32, x: f64) -> ErlangTails {
    assert!(m >= 1, "Erlang shape must be positive");
    assert!(x >= 0.0, "threshold must be nonnegative");
    if x == 0.0 {
        return ErlangTails { lower: 0.0, upper: 1.0, ln_upper: 0.0 };
    }
    let a = m as f64;
    let ln_prefix = -x + a * x.ln() - ln_factorial_before(m);
    if x < a + 1.0 {
        // Σ_ℓ x^ℓ / (m (m+1) ⋯ (m+ℓ))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let lower = (ln_prefix + sum.ln()).exp().min(1.0);
        let upper = 1.0 - lower;
        ErlangTails { lower, upper, ln_upper: upper.ln() }
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let ln_upper = ln_prefix + h.ln();
        let upper = ln_upper.exp().min(1.0);
        ErlangTails { lower: 1.0 - upper, upper, ln_upper }
    }
}

/// `P[Erlang(m,1) ≤ x]`.
pub fn erlang_cdf_lower(m: u32, x: f64) -> f64 {
    erlang_tails(m, x).lower
}

/// `P[Erlang(m,1) ≥ x]`.
pub fn erlang_cdf_upper(m: u32, x: f64) -> f64 {
    erlang_tails(m, x).upper
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Bound {
    /// `min(1, 4/(3√(2πm)) · (3κ)^m)`.
    pub tight: f64,
    /// `(3κ)^m`.
    pub loose: f64,
}

/// Bound on `P[Σ E_i ≤ κ·A·m]` for `m` exponentials with means at least `A`.
pub fn lemma4_bound(m: u32, kappa: f64) -> Result<Lemma4Bound, TailError> {
    if m == 0 {
        return Err(TailError::InvalidQuery("m must be at least 1".into()));
    }
    if !(kappa >= 0.0) {
        return Err(TailError::InvalidQuery(format!("kappa = {kappa} must be nonnegative")));
    }
    if kappa > 0.25 {
        return Err(TailError::KappaTooLarge(kappa));
    }
    let loose = (3.0 * kappa).powi(m as i32);
    let tight = (4.0 / (3.0 * (2.0 * std::f64::consts::PI * m as f64).sqrt()) * loose).min(1.0);
    Ok(Lemma4Bound { tight, loose })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Check {
    /// `Γ(m, Cm) / (m−1)!`.
    pub exact_tail: f64,
    pub ln_exact_tail: f64,
    /// `e^{−Cm/2}`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares `P[Erlang(m,1) ≥ Cm]` with `e^{−Cm/2}`; the comparison is made
/// on logarithms.
pub fn lemma6_check(m: u32, c: f64) -> Lemma6Check {
    let x = c * m as f64;
    let t = erlang_tails(m, x);
    let ln_bound = -x / 2.0;
    Lemma6Check { exact_tail: t.upper, ln_exact_tail: t.ln_upper, bound: ln_bound.exp(), holds: t.ln_upper <= ln_bound }
}

/// `2 · k^{−(M/(12δ)+3)}`.
pub fn lemma5_bound(big_m: f64, delta: f64, k: usize) -> Result<f64, TailError> {
    if !(big_m >= 18.0) {
        return Err(TailError::ParamOutOfRegime(format!("M = {big_m} < 18")));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(TailError::ParamOutOfRegime(format!("delta = {delta} not in (0, 1/2]")));
    }
    if k < 3 {
        return Err(TailError::ParamOutOfRegime(format!("k = {k} < 3")));
    }
    Ok(2.0 * (k as f64).powf(-(big_m / (12.0 * delta) + 3.0)))
}

/// Sum of `m` i.i.d. exponentials of mean `mean`, compared with `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangQuery {
    pub m: u32,
    pub mean: f64,
    pub x: f64,
}

impl ErlangQuery {
    fn validate(&self) -> Result<(), TailError> {
        if self.m == 0 || !(self.mean > 0.0) || !(self.x >= 0.0) {
            return Err(TailError::InvalidQuery(format!("{self:?}")));
        }
        Ok(())
    }
}

/// `Σ_{i≥1} R_i` with `R_i ~ Exp(mean A / r^{i−1})`, `r = 1 + δ/ln k`,
/// compared with `M · A · ln k / δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSumQuery {
    pub mean: f64,
    pub delta: f64,
    pub k: usize,
    pub big_m: f64,
}

impl GeometricSumQuery {
    pub fn rate(&self) -> f64 {
        1.0 + self.delta / (self.k as f64).ln()
    }

    pub fn threshold(&self) -> f64 {
        self.big_m * self.mean * (self.k as f64).ln() / self.delta
    }

    /// Smallest `N` with `Σ_{i>N} E[R_i] = A · r^{−N} · r/(r−1) < 1e-12 · A`.
    pub fn truncation(&self) -> usize {
        let r = self.rate();
        let tail_factor = r / (r - 1.0);
        let mut n = ((tail_factor / 1e-12).ln() / r.ln()).ceil().max(0.0) as usize;
        while tail_factor * r.powi(-(n as i32)) >= 1e-12 {
            n += 1;
        }
        n
    }

    fn validate(&self) -> Result<(), TailError> {
        if !(self.mean > 0.0) || !(self.delta > 0.0) || self.k < 2 || !(self.big_m > 0.0) {
            return Err(TailError::InvalidQuery(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailQuery {
    /// `P[Σ ≤ x]`.
    ErlangLower(ErlangQuery),
    /// `P[Σ ≥ x]`.
    ErlangUpper(ErlangQuery),
    /// `P[Σ ≥ M·A·ln k/δ]`.
    GeometricSum(GeometricSumQuery),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub probability: f64,
    /// `√(p̂(1−p̂)/n)`.
    pub stderr: f64,
    pub hits: u64,
    pub samples: usize,
}

impl TailEstimate {
    /// `|p̂ − p| ≤ 3·√(p(1−p)/n)`, using the reference value for the
    /// standard error so a zero count against a tiny `p` is not rejected.
    pub fn within_three_sigma_of(&self, p: f64) -> bool {
        let sigma = (p * (1.0 - p) / self.samples as f64).sqrt();
        (self.probability - p).abs() <= 3.0 * sigma
    }
}

const BATCH: usize = 8192;

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn erv<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    erv_from_uniform(mean, rng.gen::<f64>())
}

/// Empirical tail probability. Samples are split into fixed-size batches,
/// each with its own ChaCha stream, so the result depends only on the seed.
pub fn monte_carlo_tail(query: &TailQuery, n_samples: usize, seed: u64) -> Result<TailEstimate, TailError> {
    if n_samples < MIN_SAMPLES {
        return Err(TailError::TooFewSamples(n_samples));
    }
    let sample: Box<dyn Fn(&mut ChaCha8Rng) -> bool + Sync> = match *query {
        TailQuery::ErlangLower(q) => {
            q.validate()?;
            Box::new(move |rng| (0..q.m).map(|_| erv(rng, q.mean)).sum::<f64>() <= q.x)
        }
        TailQuery::ErlangUpper(q) => {
            q.validate()?;
            Box::new(move |rng| (0..q.m).map(|_| erv(rng, q.mean)).sum::<f64>() >= q.x)
        }
        TailQuery::GeometricSum(q) => {
            q.validate()?;
            let r = q.rate();
            let means: Vec<f64> = std::iter::successors(Some(q.mean), |m| Some(m / r)).take(q.truncation()).collect();
            let threshold = q.threshold();
            Box::new(move |rng| means.iter().map(|&m| erv(rng, m)).sum::<f64>() >= threshold)
        }
    };
    let batches = n_samples.div_ceil(BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b);
            let size = BATCH.min(n_samples - b * BATCH);
            (0..size).filter(|_| sample(&mut rng)).count() as u64
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(TailEstimate { probability: p, stderr: (p * (1.0 - p) / n_samples as f64).sqrt(), hits, samples: n_samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Cdf,
    Lemma4,
    Lemma5,
    Lemma6,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Cdf, Suite::Lemma4, Suite::Lemma5, Suite::Lemma6];
}

/// One line of a certification table. Rows with `certified == false` are
/// reported outside the asserted range and never count as failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRow {
    pub suite: Suite,
    pub case: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    pub certified: bool,
}

pub const LEMMA4_GRID_M: [u32; 5] = [1, 2, 5, 10, 20];
pub const LEMMA4_GRID_KAPPA: [f64; 4] = [0.02, 0.05, 0.1, 0.25];
pub const LEMMA6_GRID_M: [u32; 4] = [5, 10, 30, 50];
pub const LEMMA6_GRID_C: [f64; 3] = [6.0, 8.0, 10.0];
pub const LEMMA5_GRID_K: [usize; 2] = [4, 10];

fn mc_row(suite: Suite, case: String, q: TailQuery, exact: f64, samples: usize, seed: u64) -> Result<CertRow, TailError> {
    let est = monte_carlo_tail(&q, samples, seed)?;
    let sigma = (exact * (1.0 - exact) / samples as f64).sqrt();
    Ok(CertRow {
        suite,
        case,
        value: est.probability,
        bound: 3.0 * sigma,
        passed: est.within_three_sigma_of(exact),
        certified: true,
    })
}

/// Runs one certification suite. Monte Carlo rows draw from seeds derived
/// from `seed` and the row index.
pub fn certify(suite: Suite, samples: usize, seed: u64) -> Result<Vec<CertRow>, TailError> {
    let mut rows = Vec::new();
    let derive = |i: usize| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
    match suite {
        Suite::Cdf => {
            let mut prev = 0.0;
            let mut monotone = true;
            for i in 0..=400 {
                let v = erlang_cdf_lower(5, i as f64 * 0.1);
                monotone &= v >= prev;
                prev = v;
            }
            rows.push(CertRow {
                suite,
                case: "monotone m=5 x in [0,40]".into(),
                value: prev,
                bound: 1.0,
                passed: monotone && erlang_cdf_lower(5, 0.0) == 0.0 && (1.0 - prev) < 1e-9,
                certified: true,
            });
            let mut idx = 0;
            for m in [1u32, 2, 5, 10] {
                for factor in [0.5, 1.0, 2.0] {
                    let x = factor * m as f64;
                    let q = TailQuery::ErlangLower(ErlangQuery { m, mean: 1.0, x });
                    rows.push(mc_row(suite, format!("mc m={m} x={x}"), q, erlang_cdf_lower(m, x), samples, derive(idx))?);
                    idx += 1;
                }
            }
        }
        Suite::Lemma4 => {
            let mut idx = 0;
            for m in LEMMA4_GRID_M {
                for kappa in LEMMA4_GRID_KAPPA {
                    let x = kappa * m as f64;
                    let exact = erlang_cdf_lower(m, x);
                    let b = lemma4_bound(m, kappa)?;
                    rows.push(CertRow {
                        suite,
                        case: format!("exact m={m} kappa={kappa}"),
                        value: exact,
                        bound: b.loose,
                        passed: exact <= b.tight && b.tight <= b.loose,
                        certified: true,
                    });
                    let q = TailQuery::ErlangLower(ErlangQuery { m, mean: 1.0, x });
                    rows.push(mc_row(suite, format!("mc m={m} kappa={kappa}"), q, exact, samples, derive(idx))?);
                    idx += 1;
                }
            }
        }
        Suite::Lemma6 => {
            for m in LEMMA6_GRID_M {
                for c in LEMMA6_GRID_C {
                    let r = lemma6_check(m, c);
                    rows.push(CertRow {
                        suite,
                        case: format!("m={m} C={c}"),
                        value: r.exact_tail,
                        bound: r.bound,
                        passed: r.holds,
                        certified: true,
                    });
                }
            }
            for m in [1u32, 2] {
                let r = lemma6_check(m, 6.0);
                rows.push(CertRow {
                    suite,
                    case: format!("m={m} C=6"),
                    value: r.exact_tail,
                    bound: r.bound,
                    passed: r.holds,
                    certified: false,
                });
            }
        }
        Suite::Lemma5 => {
            for (idx, k) in LEMMA5_GRID_K.into_iter().enumerate() {
                let q = GeometricSumQuery { mean: 1.0, delta: 0.5, k, big_m: 18.0 };
                let bound = lemma5_bound(q.big_m, q.delta, k)?;
                let est = monte_carlo_tail(&TailQuery::GeometricSum(q), samples, derive(idx))?;
                rows.push(CertRow {
                    suite,
                    case: format!("mc k={k} M=18 delta=0.5"),
                    value: est.probability,
                    bound: bound + 3.0 * est.stderr,
                    passed: est.probability <= bound + 3.0 * est.stderr,
                    certified: true,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        assert!((erlang_cdf_lower(1, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((erlang_cdf_lower(1, 1.0) - 0.6321206).abs() < 1e-7);
        assert!((erlang_cdf_lower(1, 0.25) - 0.2211992).abs() < 1e-7);
        assert_eq!(erlang_cdf_lower(2, 0.0), 0.0);
    }

    /// `P[Erlang(m,1) ≤ x] = 1 − e^{−x} Σ_{i<m} x^i/i!`, summed directly.
    fn poisson_oracle(m: u32, x: f64) -> f64 {
        let mut term = 1.0;
        let mut s = 1.0;
        for i in 1..m {
            term *= x / i as f64;
            s += term;
        }
        1.0 - (-x).exp() * s
    }

    #[test]
    fn both_branches_match_poisson_sum() {
        for m in 1..=30u32 {
            for i in 1..200 {
                let x = i as f64 * 0.25;
                let got = erlang_cdf_lower(m, x);
                let want = poisson_oracle(m, x);
                assert!((got - want).abs() < 1e-12, "m={m} x={x}: {got} vs {want}");
                assert!((got + erlang_cdf_upper(m, x) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn log_upper_tail_matches_closed_form_for_m1() {
        for x in [6.0, 50.0, 300.0, 600.0] {
            let t = erlang_tails(1, x);
            assert!((t.ln_upper + x).abs() < 1e-9 * x, "x={x}");
        }
    }

    #[test]
    fn lower_tail_bound_examples() {
        assert_eq!(lemma4_bound(1, 0.25).unwrap().loose, 0.75);
        assert_eq!(lemma4_bound(2, 0.25).unwrap().loose, 0.5625);
        assert_eq!(lemma4_bound(7, 0.0).unwrap(), Lemma4Bound { tight: 0.0, loose: 0.0 });
        assert_eq!(lemma4_bound(1, 0.3), Err(TailError::KappaTooLarge(0.3)));
        let t = lemma4_bound(1, 0.25).unwrap().tight;
        assert!((t - 4.0 / (3.0 * (2.0 * std::f64::consts::PI).sqrt()) * 0.75).abs() < 1e-15);
    }

    #[test]
    fn upper_tail_check_examples() {
        let r = lemma6_check(30, 6.0);
        assert!(r.holds && r.ln_exact_tail <= -90.0);
        assert!(lemma6_check(5, 10.0).holds);
        let one = lemma6_check(1, 6.0);
        assert!((one.exact_tail - (-6.0f64).exp()).abs() < 1e-15);
        assert!((one.bound - (-3.0f64).exp()).abs() < 1e-15);
        assert!(one.holds);
    }

    #[test]
    fn geometric_sum_bound_examples() {
        assert!((lemma5_bound(18.0, 0.5, 4).unwrap() - 2.0 / 4096.0).abs() < 1e-18);
        assert!((lemma5_bound(18.0, 0.5, 4).unwrap() - 4.88e-4).abs() < 1e-6);
        assert!((lemma5_bound(18.0, 0.5, 10).unwrap() - 2e-6).abs() < 1e-18);
        for k in [3usize, 5, 17] {
            let want = 2.0 * (k as f64).powi(-9);
            assert!((lemma5_bound(36.0, 0.5, k).unwrap() / want - 1.0).abs() < 1e-12);
        }
        assert!(matches!(lemma5_bound(17.0, 0.5, 4), Err(TailError::ParamOutOfRegime(_))));
        assert!(matches!(lemma5_bound(18.0, 0.6, 4), Err(TailError::ParamOutOfRegime(_))));
        assert!(matches!(lemma5_bound(18.0, 0.5, 2), Err(TailError::ParamOutOfRegime(_))));
    }

    #[test]
    fn truncation_budget() {
        for k in [3usize, 4, 10, 100] {
            let q = GeometricSumQuery { mean: 1.0, delta: 0.5, k, big_m: 18.0 };
            let n = q.truncation();
            let r = q.rate();
            let discarded = r.powi(-(n as i32)) * r / (r - 1.0);
            assert!(discarded < 1e-12);
            assert!(r.powi(-(n as i32 - 1)) * r / (r - 1.0) >= 1e-12);
        }
    }

    #[test]
    fn monte_carlo_examples() {
        let q = TailQuery::ErlangLower(ErlangQuery { m: 1, mean: 1.0, x: 1.0 });
        let e = monte_carlo_tail(&q, 100_000, 1).unwrap();
        assert!(e.within_three_sigma_of(1.0 - (-1.0f64).exp()));
        let q = TailQuery::ErlangLower(ErlangQuery { m: 5, mean: 1.0, x: 1.25 });
        let e = monte_carlo_tail(&q, 100_000, 2).unwrap();
        assert!(e.probability <= lemma4_bound(5, 0.25).unwrap().tight + 3.0 * e.stderr);
        assert!(matches!(monte_carlo_tail(&q, 9_999, 0), Err(TailError::TooFewSamples(9_999))));
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let q = TailQuery::ErlangUpper(ErlangQuery { m: 3, mean: 1.0, x: 3.0 });
        assert_eq!(monte_carlo_tail(&q, 20_000, 9), monte_carlo_tail(&q, 20_000, 9));
    }

    #[test]
    fn scaling_by_a_power_of_two_is_exact() {
        for a in [0.25, 4.0, 1024.0] {
            let scaled = TailQuery::ErlangLower(ErlangQuery { m: 4, mean: a, x: 3.0 * a });
            let unit = TailQuery::ErlangLower(ErlangQuery { m: 4, mean: 1.0, x: 3.0 });
            assert_eq!(monte_carlo_tail(&scaled, 10_000, 5).unwrap(), monte_carlo_tail(&unit, 10_000, 5).unwrap());
        }
    }

    #[test]
    fn upper_tail_suite_certifies() {
        let rows = certify(Suite::Lemma6, MIN_SAMPLES, 0).unwrap();
        assert!(rows.iter().filter(|r| r.certified).all(|r| r.passed));
        assert_eq!(rows.iter().filter(|r| r.certified).count(), 12);
    }
}
