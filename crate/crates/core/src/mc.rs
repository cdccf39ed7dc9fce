//! Monte Carlo oracle for the parameter-estimation model.
//!
//! Each link is sampled as the normal linear model `y = t x + z` with
//! `x ~ N(0, V_m)` and `z ~ N(0, sigma^2)`. Samples come from ChaCha8
//! (`rand_chacha`), which is platform independent, and normals from the
//! ziggurat sampler in `rand_distr`. Trial `i` of a run with master seed `s`
//! is seeded with `splitmix64(s ^ splitmix64(i))`, so results do not depend
//! on how trials are scheduled across threads.
//!
//! The variance estimator uses the `1/m` normalizer. Its scaled form
//! `m sigma_hat^2 / sigma^2` follows chi-square with `m - 1` degrees of
//! freedom (one degree is spent on `t_hat`), which is what the checks test.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::finite_size::{confidence_bounds, normal_quantile_two_sided};

/// Paired sender symbols and received values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LinkSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return domain(format!("sample lengths differ: {} vs {}", x.len(), y.len()));
        }
        if x.len() < 2 {
            return domain(format!("sample needs at least 2 points, got {}", x.len()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Draws `m` pairs from the linear channel model, deterministically in `seed`.
pub fn sample_link(m: usize, modulation_variance: f64, t_true: f64, sigma2_true: f64, seed: u64) -> Result<LinkSample> {
    if m < 2 {
        return domain(format!("sample needs m >= 2, got {m}"));
    }
    if !(modulation_variance > 0.0) || !(sigma2_true >= 0.0) || !t_true.is_finite() {
        return domain(format!(
            "need V_m > 0, sigma^2 >= 0, finite t; got {modulation_variance}, {sigma2_true}, {t_true}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = Normal::new(0.0, modulation_variance.sqrt()).expect("validated std dev");
    let noise = Normal::new(0.0, sigma2_true.sqrt()).expect("validated std dev");
    let mut x = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for _ in 0..m {
        let xi = symbols.sample(&mut rng);
        let zi = noise.sample(&mut rng);
        x.push(xi);
        y.push(t_true * xi + zi);
    }
    Ok(LinkSample { x, y })
}

/// Residual form used by the variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorForm {
    /// `(1/m) sum (y - t_hat x)^2`.
    #[default]
    MaximumLikelihood,
    /// `(1/m) sum (y - t_hat x)`, which has expectation zero. Negative control only.
    UnsquaredResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MlEstimate {
    pub t_hat: f64,
    pub sigma2_hat: f64,
}

pub fn ml_estimate(sample: &LinkSample) -> Result<MlEstimate> {
    ml_estimate_with(sample, EstimatorForm::MaximumLikelihood)
}

pub fn ml_estimate_with(sample: &LinkSample, form: EstimatorForm) -> Result<MlEstimate> {
    let (sxx, sxy) = sample
        .x
        .iter()
        .zip(&sample.y)
        .fold((0.0, 0.0), |(sxx, sxy), (&x, &y)| (sxx + x * x, sxy + x * y));
    if !(sxx > 0.0) {
        return domain("sender symbols are all zero; transmission is unidentifiable");
    }
    let t_hat = sxy / sxx;
    let residuals = sample.x.iter().zip(&sample.y).map(|(&x, &y)| y - t_hat * x);
    let total: f64 = match form {
        EstimatorForm::MaximumLikelihood => residuals.map(|r| r * r).sum(),
        EstimatorForm::UnsquaredResiduals => residuals.sum(),
    };
    Ok(MlEstimate {
        t_hat,
        sigma2_hat: total / sample.len() as f64,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Parameters of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McParams {
    pub trials: usize,
    pub m: usize,
    pub modulation_variance: f64,
    pub t_true: f64,
    pub sigma2_true: f64,
    pub eps_pe: f64,
    pub seed: u64,
    pub estimator: EstimatorForm,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            trials: 10_000,
            m: 10_000,
            modulation_variance: 100.0,
            t_true: 0.9,
            sigma2_true: 1.002,
            eps_pe: 0.05,
            seed: 7,
            estimator: EstimatorForm::MaximumLikelihood,
        }
    }
}

/// Empirical moments and coverage over all trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub mean_t_hat: f64,
    pub var_t_hat: f64,
    /// Mean of `m sigma_hat^2 / sigma^2`.
    pub mean_chi2: f64,
    pub var_chi2: f64,
    pub t_coverage: f64,
    pub sigma2_coverage: f64,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    t_hat: f64,
    chi2: f64,
    t_covered: bool,
    sigma2_covered: bool,
}

fn run_trial(p: &McParams, z: f64, index: u64) -> Result<TrialOutcome> {
    let sample = sample_link(p.m, p.modulation_variance, p.t_true, p.sigma2_true, trial_seed(p.seed, index))?;
    let est = ml_estimate_with(&sample, p.estimator)?;
    let m = p.m as f64;
    // Intervals need a positive variance; a degenerate estimate gets zero width.
    let (dt, ds) = if est.sigma2_hat > 0.0 {
        confidence_bounds(m, p.modulation_variance, est.sigma2_hat, z)?
    } else {
        (0.0, 0.0)
    };
    Ok(TrialOutcome {
        t_hat: est.t_hat,
        chi2: m * est.sigma2_hat / p.sigma2_true,
        t_covered: (est.t_hat - p.t_true).abs() <= dt,
        sigma2_covered: (est.sigma2_hat - p.sigma2_true).abs() <= ds,
    })
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Runs all trials (in parallel on the current rayon pool) and summarizes them.
pub fn run_trials(p: &McParams) -> Result<TrialSummary> {
    if p.trials < 2 {
        return domain(format!("need at least 2 trials, got {}", p.trials));
    }
    if !(p.sigma2_true > 0.0) {
        return domain(format!("sigma^2 must be > 0, got {}", p.sigma2_true));
    }
    let z = normal_quantile_two_sided(p.eps_pe)?;
    let outcomes = (0..p.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(p, z, i))
        .collect::<Result<Vec<_>>>()?;
    let n = outcomes.len() as f64;
    let (mean_t_hat, var_t_hat) = mean_var(outcomes.iter().map(|o| o.t_hat));
    let (mean_chi2, var_chi2) = mean_var(outcomes.iter().map(|o| o.chi2));
    Ok(TrialSummary {
        trials: p.trials,
        mean_t_hat,
        var_t_hat,
        mean_chi2,
        var_chi2,
        t_coverage: outcomes.iter().filter(|o| o.t_covered).count() as f64 / n,
        sigma2_coverage: outcomes.iter().filter(|o| o.sigma2_covered).count() as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub nominal: f64,
    pub t_coverage: f64,
    pub sigma2_coverage: f64,
}

/// Empirical coverage of the `t'` and `sigma'^2` confidence intervals.
#[allow(clippy::too_many_arguments)]
pub fn coverage_test(
    trials: usize,
    m: usize,
    modulation_variance: f64,
    t_true: f64,
    sigma2_true: f64,
    eps_pe: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < 100 {
        return domain(format!("coverage needs at least 100 trials, got {trials}"));
    }
    let s = run_trials(&McParams {
        trials,
        m,
        modulation_variance,
        t_true,
        sigma2_true,
        eps_pe,
        seed,
        estimator: EstimatorForm::MaximumLikelihood,
    })?;
    Ok(CoverageReport {
        nominal: 1.0 - eps_pe,
        t_coverage: s.t_coverage,
        sigma2_coverage: s.sigma2_coverage,
    })
}

/// One statistic compared against its theoretical value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatCheck {
    pub name: &'static str,
    pub observed: f64,
    pub expected: f64,
    /// Allowed absolute deviation.
    pub tolerance: f64,
    pub passed: bool,
}

impl StatCheck {
    fn new(name: &'static str, observed: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name,
            observed,
            expected,
            tolerance,
            passed: (observed - expected).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub params: McParams,
    pub summary: TrialSummary,
    pub checks: Vec<StatCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StatCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Runs the trials and checks every sampling-distribution law.
///
/// Coverage tolerances are three binomial standard errors at the trial count
/// (plus one trial of granularity; the variance interval gets another 0.01
/// for its normal approximation to chi-square). Moment tolerances are four
/// sampling standard errors, floored at 10% for variances and 1% for the
/// chi-square mean.
pub fn validate(p: &McParams) -> Result<ValidationReport> {
    let s = run_trials(p)?;
    let trials = p.trials as f64;
    let m = p.m as f64;
    let nominal = 1.0 - p.eps_pe;
    let binom_se = (nominal * (1.0 - nominal) / trials).sqrt();
    let var_rel_se = (2.0 / (trials - 1.0)).sqrt();
    let dof = m - 1.0;

    let var_t_theory = p.sigma2_true / (m * p.modulation_variance);
    let checks = vec![
        StatCheck::new("t_coverage", s.t_coverage, nominal, 3.0 * binom_se + 1.0 / trials),
        StatCheck::new(
            "sigma2_coverage",
            s.sigma2_coverage,
            nominal,
            3.0 * binom_se + 1.0 / trials + 0.01,
        ),
        StatCheck::new(
            "t_hat_mean",
            s.mean_t_hat,
            p.t_true,
            3.0 * (s.var_t_hat / trials).sqrt(),
        ),
        StatCheck::new(
            "t_hat_variance",
            s.var_t_hat,
            var_t_theory,
            var_t_theory * (4.0 * var_rel_se).max(0.10),
        ),
        StatCheck::new(
            "chi2_mean",
            s.mean_chi2,
            dof,
            dof * (4.0 * (2.0 * dof / trials).sqrt() / dof).max(0.01),
        ),
        StatCheck::new(
            "chi2_variance",
            s.var_chi2,
            2.0 * dof,
            2.0 * dof * (4.0 * var_rel_se).max(0.10),
        ),
    ];
    Ok(ValidationReport {
        params: *p,
        summary: s,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_sample_is_exact() {
        let s = sample_link(64, 100.0, 0.7, 0.0, 3).unwrap();
        assert!(s.x.iter().zip(&s.y).all(|(&x, &y)| y == 0.7 * x));
        let est = ml_estimate(&s).unwrap();
        assert!((est.t_hat - 0.7).abs() < 1e-15);
        assert!(est.sigma2_hat < 1e-28);
    }

    #[test]
    fn exact_fit() {
        let s = LinkSample::new(vec![1.0, -1.0], vec![2.0, -2.0]).unwrap();
        let est = ml_estimate(&s).unwrap();
        assert_eq!((est.t_hat, est.sigma2_hat), (2.0, 0.0));
    }

    #[test]
    fn degenerate_inputs() {
        let zeros = LinkSample::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        assert!(ml_estimate(&zeros).is_err());
        assert!(LinkSample::new(vec![1.0], vec![1.0]).is_err());
        assert!(LinkSample::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(sample_link(1, 100.0, 0.9, 1.0, 0).is_err());
    }

    #[test]
    fn same_seed_same_sample() {
        let a = sample_link(1000, 100.0, 0.9, 1.002, 11).unwrap();
        let b = sample_link(1000, 100.0, 0.9, 1.002, 11).unwrap();
        let c = sample_link(1000, 100.0, 0.9, 1.002, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn received_second_moment() {
        let s = sample_link(1_000_000, 100.0, 0.9, 1.002, 5).unwrap();
        let var_y = s.y.iter().map(|y| y * y).sum::<f64>() / s.len() as f64;
        let expected = 0.81 * 100.0 + 1.002;
        assert!((var_y / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn large_sample_estimate_within_five_sigma() {
        let s = sample_link(1_000_000, 100.0, 0.9, 1.002, 9).unwrap();
        let est = ml_estimate(&s).unwrap();
        assert!((est.t_hat - 0.9).abs() < 5.0 * (1.002f64 / (1e6 * 100.0)).sqrt());
    }

    #[test]
    fn uncorrelated_channel() {
        let s = sample_link(200_000, 100.0, 0.0, 1.0, 21).unwrap();
        let (sx, sy) = (s.x.iter().map(|x| x * x).sum::<f64>(), s.y.iter().map(|y| y * y).sum::<f64>());
        let sxy: f64 = s.x.iter().zip(&s.y).map(|(x, y)| x * y).sum();
        assert!((sxy / (sx * sy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| trial_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn coverage_vanishes_as_eps_goes_to_one() {
        let r = coverage_test(200, 500, 100.0, 0.9, 1.002, 1.0, 1).unwrap();
        assert_eq!(r.t_coverage, 0.0);
        assert_eq!(r.sigma2_coverage, 0.0);
        assert!(coverage_test(99, 500, 100.0, 0.9, 1.002, 0.05, 1).is_err());
    }

    #[test]
    fn trial_summary_is_deterministic_across_pools() {
        let p = McParams {
            trials: 300,
            m: 200,
            ..McParams::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_trials(&p)).unwrap();
        let b = four.install(|| run_trials(&p)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_estimator_fails_chi_square() {
        let p = McParams {
            trials: 500,
            m: 1000,
            estimator: EstimatorForm::UnsquaredResiduals,
            ..McParams::default()
        };
        let report = validate(&p).unwrap();
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name == "chi2_mean"));
    }
}
