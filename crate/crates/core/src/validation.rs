//! Monte Carlo checks of the exit identities against their analytic sides.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_analytics::{ExitAnalytics, ExitProblem};
use crate::levy_model::{check_theorem_applicability, Theorem};
use crate::simulator::{censored_fraction, run_in_pool, simulate_exit, ExitSample, SimConfig};
use crate::stats::{ks_statistic, pearson, McEstimate};

pub const Z_THRESHOLD: f64 = 3.0;
pub const MIN_OVERSHOOT_SAMPLES: usize = 10_000;
/// KS critical value coefficient at level 0.01.
pub const KS_COEFFICIENT: f64 = 1.63;

/// A Monte Carlo mean set against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub mc: McEstimate,
    pub reference: f64,
    /// Nonzero when the reference is itself estimated from the samples.
    pub reference_std_error: f64,
    pub z: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn new(name: String, mc: McEstimate, reference: f64, reference_std_error: f64, z: f64) -> Self {
        IdentityCheck {
            name,
            mc,
            reference,
            reference_std_error,
            z,
            passed: z.abs() < Z_THRESHOLD,
        }
    }
}

fn require_uncensored(samples: &[ExitSample]) -> Result<()> {
    let censored = samples.iter().filter(|s| s.censored).count();
    if censored > 0 {
        return Err(Error::CensoredData {
            censored,
            total: samples.len(),
        });
    }
    Ok(())
}

fn per_path<F>(samples: &[ExitSample], workers: Option<usize>, f: F) -> Result<Vec<f64>>
where
    F: Fn(&ExitSample) -> Result<f64> + Sync,
{
    run_in_pool(workers, || samples.par_iter().map(&f).collect::<Result<Vec<_>>>())?
}

/// Mean and standard error of `e^{-mu beta tau}`.
pub fn estimate_laplace(samples: &[ExitSample], mu: f64, beta: f64) -> Result<McEstimate> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidInput {
            field: "mu",
            reason: format!("must be finite and >= 0 (got {mu})"),
        });
    }
    require_uncensored(samples)?;
    if mu == 0.0 {
        return Ok(McEstimate {
            mean: 1.0,
            std_error: 0.0,
            n: samples.len(),
            censored_fraction: 0.0,
        });
    }
    let v: Vec<f64> = samples.iter().map(|s| (-mu * beta * s.tau).exp()).collect();
    Ok(McEstimate::from_values(&v, 0.0))
}

/// How the per-path weight of an identity is formed.
///
/// Both weights grow like `e^{K X_tau}` against an overshoot tail of the
/// same order, so the plain weight has infinite variance and its z-score is
/// unreliable. Integrating the crossing jump out given `X_{tau-}` keeps the
/// expectation and restores a finite variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WeightEstimator {
    #[default]
    Conditional,
    Plain,
}

/// Stopped expectation of `e^{-mu beta tau} G(X_tau, mu)` against `G(x, mu)`.
pub fn theorem1_check(
    analytics: &ExitAnalytics,
    samples: &[ExitSample],
    mu: f64,
    estimator: WeightEstimator,
    workers: Option<usize>,
) -> Result<IdentityCheck> {
    check_theorem_applicability(&analytics.problem().model, Theorem::MartingaleIdentity).into_result()?;
    require_uncensored(samples)?;
    let reference = analytics.g_function(analytics.problem().x, mu)?;
    let w = per_path(samples, workers, |s| match estimator {
        WeightEstimator::Conditional => analytics.conditional_theorem1_weight(s.pre_exit_value, s.tau, mu),
        WeightEstimator::Plain => analytics.theorem1_weight(s.exit_value, s.tau, mu),
    })?;
    let mc = McEstimate::from_values(&w, 0.0);
    let z = mc.z_score(reference);
    Ok(IdentityCheck::new(format!("theorem1 mu={mu}"), mc, reference, 0.0, z))
}

pub fn validate_theorem1(problem: &ExitProblem, mu: f64, cfg: &SimConfig) -> Result<IdentityCheck> {
    check_theorem_applicability(&problem.model, Theorem::MartingaleIdentity).into_result()?;
    let analytics = ExitAnalytics::new(*problem)?;
    let run = simulate_exit(problem, cfg)?;
    theorem1_check(&analytics, &run.samples, mu, WeightEstimator::Conditional, cfg.workers)
}

/// Mean of the mean-identity integral at `X_tau` against `beta E tau`,
/// with the z-score taken on the per-path difference.
pub fn theorem2_check(
    analytics: &ExitAnalytics,
    samples: &[ExitSample],
    estimator: WeightEstimator,
    workers: Option<usize>,
) -> Result<IdentityCheck> {
    check_theorem_applicability(&analytics.problem().model, Theorem::MeanIdentity).into_result()?;
    require_uncensored(samples)?;
    let beta = analytics.problem().model.beta;
    let lhs = per_path(samples, workers, |s| match estimator {
        WeightEstimator::Conditional => analytics.conditional_theorem2_integral(s.pre_exit_value),
        WeightEstimator::Plain => analytics.theorem2_mean_integral(s.exit_value),
    })?;
    let scaled_tau: Vec<f64> = samples.iter().map(|s| beta * s.tau).collect();
    let diff: Vec<f64> = lhs.iter().zip(&scaled_tau).map(|(a, b)| a - b).collect();
    let mc = McEstimate::from_values(&lhs, 0.0);
    let rhs = McEstimate::from_values(&scaled_tau, 0.0);
    let z = McEstimate::from_values(&diff, 0.0).z_score(0.0);
    Ok(IdentityCheck::new("theorem2".into(), mc, rhs.mean, rhs.std_error, z))
}

pub fn validate_theorem2(problem: &ExitProblem, cfg: &SimConfig) -> Result<IdentityCheck> {
    check_theorem_applicability(&problem.model, Theorem::MeanIdentity).into_result()?;
    let analytics = ExitAnalytics::new(*problem)?;
    let run = simulate_exit(problem, cfg)?;
    theorem2_check(&analytics, &run.samples, WeightEstimator::Conditional, cfg.workers)
}

/// MC Laplace transform against the explicit formula.
pub fn laplace_check(analytics: &ExitAnalytics, samples: &[ExitSample], mu: f64) -> Result<IdentityCheck> {
    let reference = analytics.laplace_exit(mu)?.value;
    let mc = estimate_laplace(samples, mu, analytics.problem().model.beta)?;
    let z = mc.z_score(reference);
    Ok(IdentityCheck::new(format!("laplace mu={mu}"), mc, reference, 0.0, z))
}

/// MC mean exit time against the explicit formula.
pub fn mean_check(analytics: &ExitAnalytics, samples: &[ExitSample]) -> Result<IdentityCheck> {
    let reference = analytics.mean_exit()?;
    require_uncensored(samples)?;
    let tau: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    let mc = McEstimate::from_values(&tau, 0.0);
    let z = mc.z_score(reference);
    Ok(IdentityCheck::new("mean".into(), mc, reference, 0.0, z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvershootReport {
    pub n: usize,
    pub k: f64,
    pub ks: f64,
    pub ks_threshold: f64,
    pub ks_passed: bool,
    pub correlation: f64,
    pub correlation_threshold: f64,
    pub correlation_passed: bool,
    pub mean: McEstimate,
    pub mean_z: f64,
    pub mean_passed: bool,
}

impl OvershootReport {
    pub fn passed(&self) -> bool {
        self.ks_passed && self.correlation_passed && self.mean_passed
    }
}

/// Overshoot against Exponential(rate `k`) and its correlation with `tau`.
pub fn overshoot_tests(samples: &[ExitSample], k: f64) -> Result<OvershootReport> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidInput {
            field: "k",
            reason: format!("must be finite and > 0 (got {k})"),
        });
    }
    if samples.len() < MIN_OVERSHOOT_SAMPLES {
        return Err(Error::InsufficientData {
            required: MIN_OVERSHOOT_SAMPLES,
            got: samples.len(),
        });
    }
    require_uncensored(samples)?;
    let n = samples.len();
    let chi: Vec<f64> = samples.iter().map(|s| s.overshoot).collect();
    let tau: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    let ks = ks_statistic(&chi, |x| -(-k * x.max(0.0)).exp_m1());
    let ks_threshold = KS_COEFFICIENT / (n as f64).sqrt();
    let correlation = pearson(&chi, &tau);
    let correlation_threshold = Z_THRESHOLD / (n as f64).sqrt();
    let mean = McEstimate::from_values(&chi, 0.0);
    let mean_z = mean.z_score(1.0 / k);
    Ok(OvershootReport {
        n,
        k,
        ks,
        ks_threshold,
        ks_passed: ks < ks_threshold,
        correlation,
        correlation_threshold,
        correlation_passed: correlation.abs() < correlation_threshold,
        mean,
        mean_z,
        mean_passed: mean_z.abs() < Z_THRESHOLD,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitEntry {
    pub b: f64,
    pub mean_tau: f64,
    /// KS distance of `tau / E tau` from the unit exponential.
    pub ks: f64,
    /// Empirical `P(tau / E tau > 1)`.
    pub tail_at_one: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub entries: Vec<LimitEntry>,
    pub decreasing: bool,
}

/// Normalises simulated exit times by the analytic mean for every barrier
/// in `b_grid` and measures the distance to the unit exponential.
pub fn validate_limit_theorem(problem: &ExitProblem, cfg: &SimConfig, b_grid: &[f64]) -> Result<LimitReport> {
    check_theorem_applicability(&problem.model, Theorem::ExponentialJumps).into_result()?;
    let mut entries = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        let p = problem.with_barrier(b)?;
        let mean_tau = ExitAnalytics::new(p)?.mean_exit()?;
        let run = simulate_exit(&p, cfg)?;
        require_uncensored(&run.samples)?;
        let scaled: Vec<f64> = run.samples.iter().map(|s| s.tau / mean_tau).collect();
        let ks = ks_statistic(&scaled, |x| -(-x.max(0.0)).exp_m1());
        let tail_at_one = scaled.iter().filter(|&&v| v > 1.0).count() as f64 / scaled.len() as f64;
        entries.push(LimitEntry {
            b,
            mean_tau,
            ks,
            tail_at_one,
            censored_fraction: censored_fraction(&run.samples),
        });
    }
    let decreasing = entries.windows(2).all(|w| w[1].ks < w[0].ks);
    Ok(LimitReport { entries, decreasing })
}
