//! Shift statistics: per-document shift and baseline-instability vectors,
//! the normalized per-dimension benchmark `b`, its length `B`, bootstrap
//! standard errors, percentile intervals and Bonferroni-corrected tests.
//!
//! Every bootstrap draw `k` uses its own ChaCha stream (`seed`, stream `k`),
//! so draws can be computed in any order or in parallel and still give
//! bit-identical results.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimensions::DimensionScores;
use crate::error::{Error, Result};
use crate::scalar::{mean, norm, sample_sd, Scalar};

pub const DEFAULT_ITERS: usize = 10_000;
pub const MIN_ITERS: usize = 1_000;
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iters: usize,
    pub seed: RngSeed,
    /// Number of hypotheses for the Bonferroni correction.
    pub m_tests: usize,
}

impl BootstrapConfig {
    pub fn new(seed: u64, m_tests: usize) -> Self {
        BootstrapConfig {
            iters: DEFAULT_ITERS,
            seed: RngSeed(seed),
            m_tests,
        }
    }

    fn check(&self) -> Result<()> {
        if self.iters < MIN_ITERS {
            return Err(Error::Precondition(format!(
                "bootstrap needs at least {MIN_ITERS} iterations, got {}",
                self.iters
            )));
        }
        if self.m_tests == 0 {
            return Err(Error::Precondition("m_tests must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSample<T> {
    pub doc_id: String,
    pub genre: String,
    /// `v_orig2 - v_model`
    pub delta_v: Vec<T>,
    /// `v_orig2 - v_orig1`
    pub i: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult<T> {
    pub config_id: String,
    pub n_docs: usize,
    pub mean_delta: Vec<T>,
    pub mean_delta_ci_low: Vec<T>,
    pub mean_delta_ci_high: Vec<T>,
    pub se_i: Vec<T>,
    pub b: Vec<T>,
    pub b_ci_low: Vec<T>,
    pub b_ci_high: Vec<T>,
    pub p_values: Vec<T>,
    pub significant: Vec<bool>,
    #[serde(rename = "B")]
    pub big_b: T,
    #[serde(rename = "B_ci")]
    pub big_b_ci: (T, T),
    pub iters: usize,
    pub seed: RngSeed,
    pub m_tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanBaseline<T> {
    pub n_docs: usize,
    pub mean_i: Vec<T>,
    pub ci_low: Vec<T>,
    pub ci_high: Vec<T>,
    /// Bootstrap SE of the mean of `i`, per dimension.
    pub se_i: Vec<T>,
    pub p_values: Vec<T>,
    pub significant: Vec<bool>,
}

/// Chunk ids are `<doc_id>#<role>`; the document part is what pairs them.
pub fn doc_of(chunk_id: &str) -> &str {
    chunk_id.rsplit_once('#').map_or(chunk_id, |(d, _)| d)
}

/// Elementwise `v_orig2 - v_other`.
pub fn shift<T: Scalar>(v_orig2: &DimensionScores<T>, v_other: &DimensionScores<T>) -> Result<Vec<T>> {
    if v_orig2.model_id != v_other.model_id {
        return Err(Error::ModelMismatch(format!(
            "models {} and {}",
            v_orig2.model_id, v_other.model_id
        )));
    }
    if doc_of(&v_orig2.chunk_id) != doc_of(&v_other.chunk_id) {
        return Err(Error::ModelMismatch(format!(
            "documents {} and {}",
            v_orig2.chunk_id, v_other.chunk_id
        )));
    }
    if v_orig2.v.len() != v_other.v.len() {
        return Err(Error::DimensionMismatch {
            expected: v_orig2.v.len(),
            got: v_other.v.len(),
        });
    }
    Ok(v_orig2.v.iter().zip(&v_other.v).map(|(&a, &b)| a - b).collect())
}

fn draw_rng(seed: RngSeed, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(draw as u64);
    rng
}

/// Document indices for bootstrap draw `draw`.
pub fn resample_indices(n: usize, seed: RngSeed, draw: usize) -> Vec<usize> {
    let mut rng = draw_rng(seed, draw);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Means of `iters` resamples of `samples`.
pub fn bootstrap_means<T: Scalar>(samples: &[T], iters: usize, seed: RngSeed) -> Vec<T> {
    let n = samples.len();
    (0..iters)
        .into_par_iter()
        .map(|k| {
            let s: T = resample_indices(n, seed, k).into_iter().map(|j| samples[j]).sum();
            s / T::of_usize(n)
        })
        .collect()
}

/// Rescales a bootstrap SE of a mean so that it estimates `s / sqrt(n)` with
/// the n - 1 sample standard deviation rather than the population spread.
fn small_sample_factor<T: Scalar>(n: usize) -> T {
    (T::of_usize(n) / T::of_usize(n - 1)).sqrt()
}

/// Standard deviation of the bootstrap distribution of the mean, rescaled by
/// `sqrt(n / (n - 1))`.
pub fn bootstrap_se<T: Scalar>(samples: &[T], iters: usize, seed: RngSeed) -> Result<T> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if iters < MIN_ITERS {
        return Err(Error::Precondition(format!(
            "bootstrap needs at least {MIN_ITERS} iterations, got {iters}"
        )));
    }
    let means = bootstrap_means(samples, iters, seed);
    Ok(sample_sd(&means).unwrap_or_else(T::zero) * small_sample_factor(samples.len()))
}

/// Linear-interpolated quantile of unsorted data, `q` in [0, 1].
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> T {
    let mut v: Vec<T> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap statistics"));
    if v.is_empty() {
        return T::nan();
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Two-sided bootstrap p-value for `H0: mean = 0`: twice the fraction of
/// resampled means on the other side of zero, floored at `1 / iters`.
pub fn p_value<T: Scalar>(observed_mean: T, draws: &[T]) -> T {
    if observed_mean == T::zero() || draws.is_empty() {
        return T::one();
    }
    let crossing = draws
        .iter()
        .filter(|&&d| {
            if observed_mean > T::zero() {
                d <= T::zero()
            } else {
                d >= T::zero()
            }
        })
        .count();
    let iters = T::of_usize(draws.len());
    let p = T::of(2.0) * T::of_usize(crossing) / iters;
    p.max(T::one() / iters).min(T::one())
}

pub fn bonferroni_threshold(m_tests: usize) -> f64 {
    ALPHA / m_tests as f64
}

pub fn is_significant<T: Scalar>(p: T, m_tests: usize) -> bool {
    p.as_f64() < bonferroni_threshold(m_tests)
}

/// Bootstrap test of one mean against zero with Bonferroni correction.
pub fn significance<T: Scalar>(mean_delta: T, draws: &[T], m_tests: usize) -> bool {
    is_significant(p_value(mean_delta, draws), m_tests)
}

/// `b_d = mean_delta_d / se_i_d`.
pub fn normalize<T: Scalar>(mean_delta: &[T], se_i: &[T]) -> Vec<T> {
    mean_delta.iter().zip(se_i).map(|(&m, &s)| m / s).collect()
}

fn check_samples<T>(samples: &[ShiftSample<T>]) -> Result<usize> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let d = samples[0].delta_v.len();
    for s in samples {
        for len in [s.delta_v.len(), s.i.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
    }
    Ok(d)
}

fn column<T: Scalar>(samples: &[ShiftSample<T>], d: usize, pick: fn(&ShiftSample<T>) -> &Vec<T>) -> Vec<T> {
    samples.iter().map(|s| pick(s)[d]).collect()
}

/// Mean of `i` per dimension with bootstrap SE, CI and test.
pub fn human_baseline<T: Scalar>(samples: &[ShiftSample<T>], cfg: &BootstrapConfig) -> Result<HumanBaseline<T>> {
    cfg.check()?;
    let dims = check_samples(samples)?;
    let mut out = HumanBaseline {
        n_docs: samples.len(),
        mean_i: vec![],
        ci_low: vec![],
        ci_high: vec![],
        se_i: vec![],
        p_values: vec![],
        significant: vec![],
    };
    for d in 0..dims {
        let col = column(samples, d, |s| &s.i);
        let m = mean(&col).expect("non-empty");
        let draws = bootstrap_means(&col, cfg.iters, cfg.seed);
        let p = p_value(m, &draws);
        out.mean_i.push(m);
        out.ci_low.push(percentile(&draws, 0.025).min(m));
        out.ci_high.push(percentile(&draws, 0.975).max(m));
        out.se_i.push(sample_sd(&draws).unwrap_or_else(T::zero) * small_sample_factor(samples.len()));
        out.p_values.push(p);
        out.significant.push(is_significant(p, cfg.m_tests));
    }
    Ok(out)
}

/// Benchmark one configuration, estimating `SE(I)` from its own documents.
pub fn benchmark<T: Scalar>(
    config_id: &str,
    samples: &[ShiftSample<T>],
    cfg: &BootstrapConfig,
) -> Result<BenchmarkResult<T>> {
    run_benchmark(config_id, samples, None, cfg)
}

/// Benchmark one configuration against a shared human-baseline `SE(I)`.
pub fn benchmark_with_baseline<T: Scalar>(
    config_id: &str,
    samples: &[ShiftSample<T>],
    baseline: &HumanBaseline<T>,
    cfg: &BootstrapConfig,
) -> Result<BenchmarkResult<T>> {
    run_benchmark(config_id, samples, Some(&baseline.se_i), cfg)
}

struct Draw<T> {
    mean_delta: Vec<T>,
    mean_i: Vec<T>,
    /// `None` when the resampled `i` has zero spread on some dimension.
    b: Option<Vec<T>>,
}

fn run_benchmark<T: Scalar>(
    config_id: &str,
    samples: &[ShiftSample<T>],
    shared_se: Option<&Vec<T>>,
    cfg: &BootstrapConfig,
) -> Result<BenchmarkResult<T>> {
    cfg.check()?;
    let dims = check_samples(samples)?;
    if let Some(se) = shared_se {
        if se.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: se.len(),
            });
        }
    }
    let n = samples.len();
    let nt = T::of_usize(n);

    // Joint resampling: each draw picks documents and recomputes both the
    // mean shift and the spread of i from the same documents.
    let draws: Vec<Draw<T>> = (0..cfg.iters)
        .into_par_iter()
        .map(|k| {
            let idx = resample_indices(n, cfg.seed, k);
            let mut mean_delta = vec![T::zero(); dims];
            let mut mean_i = vec![T::zero(); dims];
            for &j in &idx {
                for d in 0..dims {
                    mean_delta[d] = mean_delta[d] + samples[j].delta_v[d];
                    mean_i[d] = mean_i[d] + samples[j].i[d];
                }
            }
            for d in 0..dims {
                mean_delta[d] = mean_delta[d] / nt;
                mean_i[d] = mean_i[d] / nt;
            }
            // Analytic SE of the mean of the resampled set, s / sqrt(n).
            let mut b = Some(Vec::with_capacity(dims));
            for d in 0..dims {
                let ss: T = idx
                    .iter()
                    .map(|&j| {
                        let e = samples[j].i[d] - mean_i[d];
                        e * e
                    })
                    .sum();
                let se = (ss / (nt - T::one())).sqrt() / nt.sqrt();
                match (&mut b, se > T::zero()) {
                    (Some(v), true) => v.push(mean_delta[d] / se),
                    _ => b = None,
                }
            }
            Draw { mean_delta, mean_i, b }
        })
        .collect();

    let se_i: Vec<T> = match shared_se {
        Some(se) => se.clone(),
        None => (0..dims)
            .map(|d| {
                let col: Vec<T> = draws.iter().map(|w| w.mean_i[d]).collect();
                sample_sd(&col).unwrap_or_else(T::zero) * small_sample_factor(n)
            })
            .collect(),
    };
    let zero: Vec<String> = se_i
        .iter()
        .enumerate()
        .filter(|(_, s)| s.partial_cmp(&&T::zero()) != Some(std::cmp::Ordering::Greater))
        .map(|(d, _)| format!("dimension {}", d + 1))
        .collect();
    if !zero.is_empty() {
        return Err(Error::ZeroBaseline(zero));
    }

    let mean_delta: Vec<T> = (0..dims)
        .map(|d| mean(&column(samples, d, |s| &s.delta_v)).expect("non-empty"))
        .collect();
    let b = normalize(&mean_delta, &se_i);
    let big_b = norm(&b);

    let b_draws: Vec<&Vec<T>> = draws.iter().filter_map(|w| w.b.as_ref()).collect();
    let mut result = BenchmarkResult {
        config_id: config_id.to_string(),
        n_docs: n,
        mean_delta: mean_delta.clone(),
        mean_delta_ci_low: vec![],
        mean_delta_ci_high: vec![],
        se_i,
        b: b.clone(),
        b_ci_low: vec![],
        b_ci_high: vec![],
        p_values: vec![],
        significant: vec![],
        big_b,
        big_b_ci: (big_b, big_b),
        iters: cfg.iters,
        seed: cfg.seed,
        m_tests: cfg.m_tests,
    };
    for d in 0..dims {
        let md: Vec<T> = draws.iter().map(|w| w.mean_delta[d]).collect();
        let p = p_value(mean_delta[d], &md);
        result.mean_delta_ci_low.push(percentile(&md, 0.025).min(mean_delta[d]));
        result.mean_delta_ci_high.push(percentile(&md, 0.975).max(mean_delta[d]));
        result.p_values.push(p);
        result.significant.push(is_significant(p, cfg.m_tests));
        if b_draws.is_empty() {
            result.b_ci_low.push(b[d]);
            result.b_ci_high.push(b[d]);
        } else {
            let bd: Vec<T> = b_draws.iter().map(|v| v[d]).collect();
            result.b_ci_low.push(percentile(&bd, 0.025).min(b[d]));
            result.b_ci_high.push(percentile(&bd, 0.975).max(b[d]));
        }
    }
    if !b_draws.is_empty() {
        let lengths: Vec<T> = b_draws.iter().map(|v| norm(v)).collect();
        result.big_b_ci = (
            percentile(&lengths, 0.025).min(big_b),
            percentile(&lengths, 0.975).max(big_b),
        );
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(chunk: &str, v: Vec<f64>) -> DimensionScores<f64> {
        DimensionScores {
            model_id: "m".into(),
            chunk_id: chunk.into(),
            v,
        }
    }

    #[test]
    fn shift_arithmetic() {
        let a = scores("d#part2", vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = scores("d#gpt", vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(shift(&a, &b).unwrap(), vec![3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(shift(&a, &a).unwrap().iter().all(|&x| x == 0.0));
        let mut other = b.clone();
        other.model_id = "n".into();
        assert!(matches!(shift(&a, &other), Err(Error::ModelMismatch(_))));
        let elsewhere = scores("e#gpt", vec![0.0; 6]);
        assert!(matches!(shift(&a, &elsewhere), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn se_edge_cases() {
        assert_eq!(bootstrap_se(&[5.0f64, 5.0, 5.0, 5.0], 1000, RngSeed(1)).unwrap(), 0.0);
        assert!(matches!(
            bootstrap_se(&[1.0f64], 1000, RngSeed(1)),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(bootstrap_se(&[1.0f64, 2.0], 10, RngSeed(1)).is_err());
    }

    #[test]
    fn se_matches_analytic() {
        let se = bootstrap_se(&[0.0f64, 0.0, 10.0, 10.0], 10_000, RngSeed(7)).unwrap();
        let analytic = 5.773_502_691_896_258 / 2.0;
        assert!((se - analytic).abs() / analytic < 0.10, "{se}");
    }

    #[test]
    fn p_value_rules() {
        let draws: Vec<f64> = (1..=10_000).map(|k| k as f64).collect();
        assert_eq!(p_value(5.0, &draws), 1.0 / 10_000.0);
        assert_eq!(p_value(0.0, &draws), 1.0);
        assert_eq!(p_value(-5.0, &draws), 1.0);
        assert!(!is_significant(0.01f64, 198));
        assert!(is_significant(0.0001f64, 198));
        assert!((bonferroni_threshold(198) - 0.000_252_525).abs() < 1e-9);
    }

    #[test]
    fn percentiles() {
        let v = [4.0f64, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
    }

    fn alternating(n: usize, delta: f64) -> Vec<ShiftSample<f64>> {
        (0..n)
            .map(|k| ShiftSample {
                doc_id: format!("d{k}"),
                genre: "g".into(),
                delta_v: vec![delta],
                i: vec![if k % 2 == 0 { 1.0 } else { -1.0 }],
            })
            .collect()
    }

    #[test]
    fn normalized_by_alternating_baseline() {
        // i alternates +-1 over 50 documents: s = sqrt(50/49), SE = s / sqrt(50).
        let samples = alternating(50, 1.0);
        let r = benchmark("c", &samples, &BootstrapConfig::new(3, 1)).unwrap();
        let analytic = (50.0f64 / 49.0).sqrt() / 50f64.sqrt();
        assert!((r.se_i[0] - analytic).abs() / analytic < 0.05);
        assert!((r.b[0] * r.se_i[0] - 1.0).abs() < 1e-12);
        assert!(r.b_ci_low[0] <= r.b[0] && r.b[0] <= r.b_ci_high[0]);
        assert!(r.significant[0]);
    }

    #[test]
    fn zero_baseline_is_reported() {
        let mut samples = alternating(10, 1.0);
        for s in &mut samples {
            s.i = vec![0.5];
        }
        assert!(matches!(
            benchmark("c", &samples, &BootstrapConfig::new(1, 1)),
            Err(Error::ZeroBaseline(d)) if d == ["dimension 1"]
        ));
    }

    #[test]
    fn perfect_imitation() {
        let samples: Vec<_> = alternating(20, 0.0);
        let r = benchmark("c", &samples, &BootstrapConfig::new(1, 6)).unwrap();
        assert_eq!(r.b, vec![0.0]);
        assert_eq!(r.big_b, 0.0);
        assert!(r.b_ci_low[0] <= 0.0 && r.b_ci_high[0] >= 0.0);
        assert!(!r.significant[0]);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let samples = alternating(30, 0.7);
        let cfg = BootstrapConfig::new(42, 6);
        let a = benchmark("c", &samples, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| benchmark("c", &samples, &cfg).unwrap());
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn shift_is_antisymmetric(a in proptest::collection::vec(-10.0f64..10.0, 6),
                                  b in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let x = scores("d#1", a);
            let y = scores("d#2", b);
            let ab = shift(&x, &y).unwrap();
            let ba = shift(&y, &x).unwrap();
            for (p, q) in ab.iter().zip(&ba) {
                prop_assert_eq!(*p, -*q);
            }
        }

        #[test]
        fn scaling_leaves_b_unchanged(c in 0.1f64..20.0, seed in 0u64..1000) {
            let samples: Vec<ShiftSample<f64>> = (0..12)
                .map(|k| ShiftSample {
                    doc_id: format!("d{k}"),
                    genre: "g".into(),
                    delta_v: vec![(k as f64 * 0.37).sin() + 0.3, (k as f64).cos()],
                    i: vec![(k as f64 * 1.3).cos(), (k as f64 * 0.7).sin()],
                })
                .collect();
            let scaled: Vec<_> = samples.iter().map(|s| ShiftSample {
                delta_v: s.delta_v.iter().map(|x| x * c).collect(),
                i: s.i.iter().map(|x| x * c).collect(),
                ..s.clone()
            }).collect();
            let cfg = BootstrapConfig { iters: 1000, seed: RngSeed(seed), m_tests: 2 };
            let r1 = benchmark("c", &samples, &cfg).unwrap();
            let r2 = benchmark("c", &scaled, &cfg).unwrap();
            for (x, y) in r1.b.iter().zip(&r2.b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
            prop_assert!((r1.big_b - r2.big_b).abs() <= 1e-9 * r1.big_b.max(1.0));
            prop_assert_eq!(r1.significant, r2.significant);
        }
    }
}
