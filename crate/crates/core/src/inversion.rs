//! Survival function `P(tau_b > t)` by Gaver-Stehfest inversion of the
//! real-axis Laplace transform.
//!
//! The transform of the survival function is `(1 - E e^{-s tau_b}) / s`.
//! With nodes `s_k = k ln2 / t` the Stehfest sum collapses to
//! `sum_k V_k r_k / k` where `r_k = 1 - E e^{-s_k tau_b}`.
//!
//! Accuracy degrades in the far tail, where the survival is small next to
//! the cancellation in the alternating sum; `err_est` and `precision_loss`
//! report this.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_analytics::ExitAnalytics;
use crate::numerics::compensated_sum;

const PRECISION_LOSS_GAP: f64 = 1e-3;
const CLAMP_SLACK: f64 = 0.01;
const CHECK_OFFSET: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InversionMethod {
    #[default]
    GaverStehfest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub method: InversionMethod,
    pub terms: usize,
    /// Digits the weights must be exact to. The weights are exact
    /// rationals, so any value is honoured; it only guards against
    /// requests below double precision.
    pub working_precision_digits: u32,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            method: InversionMethod::GaverStehfest,
            terms: 16,
            working_precision_digits: 30,
        }
    }
}

impl InversionConfig {
    pub fn with_terms(terms: usize) -> Self {
        InversionConfig {
            terms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.terms.is_multiple_of(2) || !(4..=32).contains(&self.terms) {
            return Err(Error::InvalidInput {
                field: "terms",
                reason: format!("must be even and within 4..=32 (got {})", self.terms),
            });
        }
        if self.working_precision_digits < 16 {
            return Err(Error::InvalidInput {
                field: "working_precision_digits",
                reason: format!("must be at least 16 (got {})", self.working_precision_digits),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Clamped to `[0, 1]`.
    pub survival: f64,
    pub raw: f64,
    /// `|S_N - S_{N+4}|`.
    pub err_est: f64,
    pub precision_loss: bool,
}

/// Stehfest weights `V_1..V_n` as exact rationals.
pub fn stehfest_weights_exact(n: usize) -> Vec<BigRational> {
    assert!(n.is_multiple_of(2) && n >= 2, "Stehfest needs an even term count");
    let half = n / 2;
    let fact: Vec<BigInt> = std::iter::once(BigInt::one())
        .chain((1..=n).scan(BigInt::one(), |acc, i| {
            *acc *= i;
            Some(acc.clone())
        }))
        .collect();
    (1..=n)
        .map(|k| {
            let mut sum = BigRational::zero();
            for j in k.div_ceil(2)..=k.min(half) {
                let num = BigInt::from(j).pow(half as u32) * &fact[2 * j];
                let den = &fact[half - j] * &fact[j] * &fact[j - 1] * &fact[k - j] * &fact[2 * j - k];
                sum += BigRational::new(num, den);
            }
            if (k + half) % 2 == 1 {
                -sum
            } else {
                sum
            }
        })
        .collect()
}

pub fn stehfest_weights(n: usize) -> Vec<f64> {
    stehfest_weights_exact(n)
        .iter()
        .map(|w| w.to_f64().expect("finite weight"))
        .collect()
}

/// Gaver-Stehfest approximation of `f(t)` from its Laplace transform.
pub fn gaver_stehfest<F>(transform: F, t: f64, terms: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    check_t(t)?;
    let ln2_t = std::f64::consts::LN_2 / t;
    let w = stehfest_weights(terms);
    let values = (1..=terms)
        .map(|k| transform(k as f64 * ln2_t).map(|f| w[k - 1] * f))
        .collect::<Result<Vec<_>>>()?;
    Ok(ln2_t * compensated_sum(values))
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput {
            field: "t",
            reason: format!("must be finite and > 0 (got {t})"),
        })
    }
}

/// `P(tau_b > t)`.
pub fn survival(analytics: &ExitAnalytics, t: f64, cfg: &InversionConfig) -> Result<SurvivalPoint> {
    cfg.validate()?;
    check_t(t)?;
    let beta = analytics.problem().model.beta;
    let n = cfg.terms;
    let check_n = n + CHECK_OFFSET;
    let ln2_t = std::f64::consts::LN_2 / t;
    // r_k / k for k = 1..=n+4; both sums share these nodes
    let ratios = (1..=check_n)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 * ln2_t;
            analytics.laplace_complement(s / beta).map(|r| r / k as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = |m: usize| {
        let w = stehfest_weights(m);
        compensated_sum(w.iter().zip(&ratios).map(|(w, r)| w * r))
    };
    let raw = sum(n);
    let err_est = (raw - sum(check_n)).abs();
    let precision_loss =
        err_est > PRECISION_LOSS_GAP || !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&raw) || !raw.is_finite();
    Ok(SurvivalPoint {
        t,
        survival: raw.clamp(0.0, 1.0),
        raw,
        err_est,
        precision_loss,
    })
}

pub fn survival_curve(analytics: &ExitAnalytics, ts: &[f64], cfg: &InversionConfig) -> Result<Vec<SurvivalPoint>> {
    ts.iter().map(|&t| survival(analytics, t, cfg)).collect()
}
