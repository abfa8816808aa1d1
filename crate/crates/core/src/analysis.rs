//! Posterior summaries and sampler diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::ChainRecord;
use crate::prior::CoeffVector;

/// Points used for the reconstruction-error norms.
pub const ERROR_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Linf,
    L2,
}

/// `n` equispaced points from `a` to `b` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn posterior_mean(record: &ChainRecord) -> Result<CoeffVector> {
    mean_of(&record.samples)
}

fn mean_of(samples: &[CoeffVector]) -> Result<CoeffVector> {
    let first = samples.first().ok_or(Error::EmptyRecord)?;
    let mut acc = vec![0.0; first.len()];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    CoeffVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Linear-interpolation quantile of sorted data (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise `(1 ∓ level) / 2` quantiles of `transform(θ_s(x))` over the
/// recorded samples.
pub fn credible_band<T>(
    record: &ChainRecord,
    grid: &[f64],
    level: f64,
    transform: T,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    T: Fn(f64) -> f64,
{
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("credible level {level} outside (0, 1)")));
    }
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut vals = Vec::with_capacity(record.len());
    for &x in grid {
        vals.clear();
        for s in &record.samples {
            vals.push(transform(s.eval(x)?));
        }
        vals.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&vals, 0.5 * (1.0 - level)));
        upper.push(quantile_sorted(&vals, 0.5 * (1.0 + level)));
    }
    Ok((lower, upper))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1/2)")));
    }
    Ok(())
}

/// Distance between two curves on `(ε, 1 − ε)`, sampled at
/// [`ERROR_GRID_POINTS`] points. The L2 norm uses the trapezoid rule.
pub fn curve_distance<F, G>(f: F, g: G, epsilon: f64, norm: Norm) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    check_epsilon(epsilon)?;
    let grid = uniform_grid(epsilon, 1.0 - epsilon, ERROR_GRID_POINTS);
    let diff: Vec<f64> = grid.iter().map(|&x| f(x) - g(x)).collect();
    Ok(match norm {
        Norm::Linf => diff.iter().fold(0.0, |m, d| m.max(d.abs())),
        Norm::L2 => {
            let h = (1.0 - 2.0 * epsilon) / (ERROR_GRID_POINTS - 1) as f64;
            let n = diff.len();
            let inner: f64 = diff[1..n - 1].iter().map(|d| d * d).sum();
            (h * (inner + 0.5 * (diff[0].powi(2) + diff[n - 1].powi(2)))).sqrt()
        }
    })
}

/// `‖θ̂ − θ₀‖` on `(ε, 1 − ε)`.
pub fn reconstruction_error(
    mean_coeffs: &CoeffVector,
    truth: &CoeffVector,
    epsilon: f64,
    norm: Norm,
) -> Result<f64> {
    curve_distance(
        |x| mean_coeffs.eval_unchecked(x),
        |x| truth.eval_unchecked(x),
        epsilon,
        norm,
    )
}

/// Effective sample size `N / (1 + 2 Σ ρ_t)` with the sum truncated by the
/// initial positive sequence of paired autocorrelations. A constant series
/// has ESS 1.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 10 {
        return Err(Error::ShortSeries(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if !(c0 > 0.0) {
        return Ok(1.0);
    }
    // Σ over pairs Γ_m = ρ_{2m} + ρ_{2m+1} while positive; τ = −1 + 2 Σ Γ_m
    let mut sum_pairs = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Settings of the posterior summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_level() -> f64 {
    0.95
}

fn default_grid_size() -> usize {
    201
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            level: default_level(),
            grid_size: default_grid_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: usize,
    pub acceptance_rate: f64,
    /// Per coefficient, ordered `k = −K..=K`; `None` for records shorter
    /// than ten samples.
    pub effective_sample_size: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean_coeffs: CoeffVector,
    pub grid: Vec<f64>,
    pub beta_mean_curve: Vec<f64>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    pub truth_curve: Option<Vec<f64>>,
    /// Keys `theta_linf`, `theta_l2`, `beta_linf`, `beta_l2`; present when
    /// the truth is known.
    pub errors: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
}

/// Mean, bands on `β = m_β + exp(θ)`, errors against `truth` and
/// diagnostics.
pub fn summarize(
    record: &ChainRecord,
    truth: Option<&CoeffVector>,
    m_beta: f64,
    settings: &AnalysisSettings,
) -> Result<PosteriorSummary> {
    let mean = posterior_mean(record)?;
    let beta = |t: f64| m_beta + t.exp();
    let grid = uniform_grid(0.0, 1.0, settings.grid_size);
    let (band_lower, band_upper) = credible_band(record, &grid, settings.level, beta)?;
    let beta_mean_curve = grid.iter().map(|&x| beta(mean.eval_unchecked(x))).collect();
    let mut errors = BTreeMap::new();
    if let Some(t) = truth {
        if t.len() != mean.len() {
            return Err(Error::LengthMismatch {
                expected: mean.len(),
                got: t.len(),
            });
        }
        for (name, norm) in [("linf", Norm::Linf), ("l2", Norm::L2)] {
            errors.insert(format!("theta_{name}"), reconstruction_error(&mean, t, settings.epsilon, norm)?);
            let b = curve_distance(
                |x| beta(mean.eval_unchecked(x)),
                |x| beta(t.eval_unchecked(x)),
                settings.epsilon,
                norm,
            )?;
            errors.insert(format!("beta_{name}"), b);
        }
    }
    let truth_curve = truth.map(|t| grid.iter().map(|&x| beta(t.eval_unchecked(x))).collect());
    let effective_sample_size = mean
        .frequencies()
        .map(|k| effective_sample_size(&record.coefficient_series(k)).ok())
        .collect();
    let accepted = record.accept_flags.iter().filter(|&&a| a).count();
    Ok(PosteriorSummary {
        mean_coeffs: mean,
        grid,
        beta_mean_curve,
        band_lower,
        band_upper,
        truth_curve,
        errors,
        diagnostics: Diagnostics {
            samples: record.len(),
            acceptance_rate: accepted as f64 / record.len() as f64,
            effective_sample_size,
        },
    })
}

/// Fraction of `grid` where `m_β + exp(θ₀)` lies inside the pointwise band.
pub fn band_coverage(
    record: &ChainRecord,
    truth: &CoeffVector,
    grid: &[f64],
    level: f64,
    m_beta: f64,
) -> Result<f64> {
    let beta = |t: f64| m_beta + t.exp();
    let (lo, hi) = credible_band(record, grid, level, beta)?;
    let inside = grid
        .iter()
        .zip(lo.iter().zip(&hi))
        .filter(|(&x, (&l, &u))| {
            let b = beta(truth.eval_unchecked(x));
            l <= b && b <= u
        })
        .count();
    Ok(inside as f64 / grid.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn record(samples: Vec<Vec<f64>>) -> ChainRecord {
        ChainRecord::from_samples(samples.into_iter().map(|s| CoeffVector::new(s).unwrap()).collect())
    }

    #[test]
    fn means() {
        let r = record(vec![vec![1.0, 2.0, -3.0]]);
        assert_eq!(posterior_mean(&r).unwrap().as_slice(), &[1.0, 2.0, -3.0]);
        let r = record(vec![vec![1.0, 2.0, -3.0], vec![-1.0, -2.0, 3.0]]);
        assert_eq!(posterior_mean(&r).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(posterior_mean(&record(vec![])), Err(Error::EmptyRecord));
    }

    #[test]
    fn bands_of_identical_samples_collapse() {
        let r = record(vec![vec![0.2, 0.5, -0.1]; 7]);
        let grid = uniform_grid(0.0, 1.0, 11);
        let (lo, hi) = credible_band(&r, &grid, 0.95, |t| t.exp()).unwrap();
        for ((l, h), &x) in lo.iter().zip(&hi).zip(&grid) {
            let v = r.samples[0].eval(x).unwrap().exp();
            assert!((l - v).abs() < 1e-14 && (h - v).abs() < 1e-14);
        }
        assert!(credible_band(&record(vec![]), &grid, 0.9, |t| t).is_err());
    }

    #[test]
    fn band_limits_reach_sample_extremes() {
        let r = record((0..20).map(|i| vec![i as f64 * 0.1]).collect());
        let (lo, hi) = credible_band(&r, &[0.3], 1.0 - 1e-12, |t| t).unwrap();
        assert!((lo[0] - 0.0).abs() < 1e-9 && (hi[0] - 1.9).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_error_examples() {
        let t = CoeffVector::new(vec![0.4, -0.2, 1.1]).unwrap();
        assert_eq!(reconstruction_error(&t, &t, 0.05, Norm::Linf).unwrap(), 0.0);
        assert_eq!(reconstruction_error(&t, &t, 0.05, Norm::L2).unwrap(), 0.0);

        let c = CoeffVector::new(vec![0.7]).unwrap();
        let z = CoeffVector::zeros(0);
        assert!((reconstruction_error(&c, &z, 0.1, Norm::Linf).unwrap() - 0.7).abs() < 1e-14);
        let l2 = reconstruction_error(&c, &z, 0.1, Norm::L2).unwrap();
        assert!((l2 - 0.7 * 0.8f64.sqrt()).abs() < 1e-12);

        let s = CoeffVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let l2 = reconstruction_error(&s, &CoeffVector::zeros(1), 0.0, Norm::L2).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-6, "{l2}");
        assert!(reconstruction_error(&s, &z, 0.5, Norm::L2).is_err());
    }

    #[test]
    fn ess_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let iid: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = effective_sample_size(&iid).unwrap();
        assert!((8000.0..=12000.0).contains(&e), "{e}");

        assert_eq!(effective_sample_size(&[3.0; 50]).unwrap(), 1.0);
        assert_eq!(effective_sample_size(&[1.0; 9]), Err(Error::ShortSeries(9)));

        let phi = 0.9;
        let n = 100_000;
        let mut x = 0.0;
        let ar: Vec<f64> = (0..n)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let e = effective_sample_size(&ar).unwrap();
        let expect = n as f64 * (1.0 - phi) / (1.0 + phi);
        assert!((e / expect - 1.0).abs() < 0.2, "{e} vs {expect}");
    }

    #[test]
    fn summary_has_consistent_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = record(
            (0..50)
                .map(|_| (0..5).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect(),
        );
        let truth = CoeffVector::zeros(2);
        let s = summarize(&r, Some(&truth), 0.0, &AnalysisSettings::default()).unwrap();
        assert_eq!(s.grid.len(), 201);
        assert_eq!(s.band_lower.len(), 201);
        assert!(s.band_lower.iter().zip(&s.band_upper).all(|(l, u)| l <= u));
        assert_eq!(s.errors.len(), 4);
        assert!(s.errors.values().all(|e| *e >= 0.0));
        assert_eq!(s.diagnostics.effective_sample_size.len(), 5);
        let cov = band_coverage(&r, &truth, &uniform_grid(0.05, 0.95, 200), 0.95, 0.0).unwrap();
        assert!(cov > 0.9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn band_widens_with_level(
            vals in proptest::collection::vec(-2.0f64..2.0, 3..40),
            l1 in 0.05f64..0.9, dl in 0.0f64..0.09,
        ) {
            let r = record(vals.iter().map(|&v| vec![v]).collect());
            let (a, b) = credible_band(&r, &[0.5], l1, |t| t).unwrap();
            let (c, d) = credible_band(&r, &[0.5], l1 + dl, |t| t).unwrap();
            prop_assert!(c[0] <= a[0] + 1e-15 && d[0] >= b[0] - 1e-15);
        }

        #[test]
        fn l2_error_shrinks_with_epsilon(
            c in proptest::collection::vec(-2.0f64..2.0, 5), e1 in 0.0f64..0.45, de in 0.0f64..0.04,
        ) {
            let m = CoeffVector::new(c).unwrap();
            let z = CoeffVector::zeros(2);
            let a = reconstruction_error(&m, &z, e1, Norm::L2).unwrap();
            let b = reconstruction_error(&m, &z, e1 + de, Norm::L2).unwrap();
            // trapezoid rule on nested intervals; allow quadrature noise
            prop_assert!(b <= a + 1e-4 * (1.0 + a));
        }

        #[test]
        fn mean_is_permutation_invariant(
            vals in proptest::collection::vec(-3.0f64..3.0, 2..30), seed in 0u64..1000,
        ) {
            let r = record(vals.iter().map(|&v| vec![v]).collect());
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let p = record(idx.iter().map(|&i| vec![vals[i]]).collect());
            let a = posterior_mean(&r).unwrap().as_slice()[0];
            let b = posterior_mean(&p).unwrap().as_slice()[0];
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
