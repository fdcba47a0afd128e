//! The normalized cumulant integral `phi(u) = Delta(u) + W(u)`, where
//!
//! ```text
//! Delta(u) = (1/beta) int_0^u log E e^{v Q_1} / v dv
//! W(u)     = (lambda/beta) int_0^u (E e^{v xi} - 1) / v dv
//! ```
//!
//! Drift, diffusion and exponential downward jumps give `Delta` in closed
//! form; constant downward jumps need a quadrature. `W` is closed-form for
//! exponential upward jumps and a quadrature for Gamma jumps. Quadrature-backed
//! pieces are memoized by the exact bit pattern of their arguments, since
//! the outer integrals revisit the same node set over and over.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::levy_model::{build_cumulants, ln_one_minus_ratio, CumulantSpec, LevyModel, NegJumpLaw, PosJumpLaw};
use crate::numerics::ln_expm1;
use crate::quadrature::{integrate_signed, integrate_singular, Abscissa, QuadratureConfig, QuadratureResult};

/// Below this argument the integrands `(E e^{v xi} - 1)/v` are replaced by
/// their limit, the mean jump size.
const REMOVABLE_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedForms {
    pub delta: bool,
    pub w: bool,
}

type Cache = RwLock<HashMap<(u64, u64), f64>>;

#[derive(Debug)]
pub struct PhiEvaluator {
    model: LevyModel,
    cumulants: CumulantSpec,
    closed_forms: ClosedForms,
    inner_cfg: QuadratureConfig,
    w_cache: Option<Cache>,
    delta_cache: Option<Cache>,
}

impl Clone for PhiEvaluator {
    fn clone(&self) -> Self {
        PhiEvaluator::new(&self.model)
            .expect("model already validated")
            .with_cache(self.w_cache.is_some())
    }
}

impl PhiEvaluator {
    pub fn new(model: &LevyModel) -> Result<Self> {
        let cumulants = build_cumulants(model)?;
        let closed_forms = ClosedForms {
            delta: !matches!(model.neg_jumps, Some(NegJumpLaw::Constant { .. })),
            w: model.pos_jumps.is_exponential(),
        };
        Ok(PhiEvaluator {
            model: *model,
            cumulants,
            closed_forms,
            inner_cfg: QuadratureConfig {
                abs_tol: 1e-15,
                rel_tol: 1e-13,
                ..Default::default()
            },
            w_cache: Some(RwLock::default()),
            delta_cache: Some(RwLock::default()),
        })
    }

    /// Turns memoization of quadrature-backed pieces on or off.
    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.w_cache = enabled.then(RwLock::default);
        self.delta_cache = enabled.then(RwLock::default);
        self
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn cumulants(&self) -> &CumulantSpec {
        &self.cumulants
    }

    pub fn closed_forms(&self) -> ClosedForms {
        self.closed_forms
    }

    /// MGF boundary `K`.
    pub fn k(&self) -> f64 {
        self.cumulants.k
    }

    fn check_domain(&self, u: f64) -> Result<()> {
        if u >= 0.0 && u < self.k() {
            Ok(())
        } else {
            Err(Error::Domain {
                value: u,
                domain: format!("[0, {})", self.k()),
            })
        }
    }

    pub fn delta(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(self.delta_unchecked(u))
    }

    /// `Delta(K)`; the built-in `Q` components keep `Delta` continuous up to
    /// and beyond `K`.
    pub fn delta_at_boundary(&self) -> f64 {
        self.delta_unchecked(self.k())
    }

    pub fn w(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(self.w_with_gap(u, self.k() - u))
    }

    pub fn phi(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(self.phi_with_gap(u, self.k() - u))
    }

    /// `log e^{-phi(u)} = -phi(u)`.
    pub fn exp_neg_phi(&self, u: f64) -> Result<f64> {
        Ok(-self.phi(u)?)
    }

    pub(crate) fn phi_with_gap(&self, u: f64, gap: f64) -> f64 {
        self.delta_unchecked(u) + self.w_with_gap(u, gap)
    }

    pub(crate) fn delta_unchecked(&self, u: f64) -> f64 {
        let m = &self.model;
        let beta = m.beta;
        let mut d = (m.drift * u + 0.25 * m.volatility * m.volatility * u * u) / beta;
        match m.neg_jumps {
            Some(NegJumpLaw::Exponential { rate }) => {
                d -= m.neg_intensity / beta * (u / rate).ln_1p();
            }
            Some(NegJumpLaw::Constant { size }) if m.neg_intensity > 0.0 && u > 0.0 => {
                let ein = self.cached(&self.delta_cache, u, 0.0, || {
                    constant_jump_ein(size, u, &self.inner_cfg)
                });
                d -= m.neg_intensity / beta * ein;
            }
            _ => {}
        }
        d
    }

    /// `W(u)` with `gap = K - u` supplied by the caller.
    pub(crate) fn w_with_gap(&self, u: f64, gap: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let scale = self.model.pos_intensity / self.model.beta;
        match self.model.pos_jumps {
            PosJumpLaw::Exponential { rate } => -scale * ln_one_minus_ratio(u, gap, rate),
            PosJumpLaw::Gamma { .. } => {
                let law = self.model.pos_jumps;
                let integral = self.cached(&self.w_cache, u, gap, || {
                    match mgf_excess_integral(&law, u, gap, &self.inner_cfg) {
                        Ok(r) => r.value,
                        // only shapes >= 1 reach this, where W blows up at K
                        Err(Error::Divergent(_)) => f64::INFINITY,
                        Err(_) => f64::NAN,
                    }
                });
                scale * integral
            }
        }
    }

    fn cached(&self, cache: &Option<Cache>, u: f64, gap: f64, compute: impl FnOnce() -> f64) -> f64 {
        let Some(cache) = cache else {
            return compute();
        };
        let key = (u.to_bits(), gap.to_bits());
        if let Some(&v) = cache.read().expect("cache lock").get(&key) {
            return v;
        }
        let v = compute();
        cache.write().expect("cache lock").insert(key, v);
        v
    }

    /// `W(u)` by quadrature of `(lambda/beta) (E e^{v xi} - 1)/v` for any
    /// upward law; a cross-check of the closed forms.
    pub fn w_numeric(&self, u: f64) -> Result<QuadratureResult> {
        self.check_domain(u)?;
        let scale = self.model.pos_intensity / self.model.beta;
        let r = mgf_excess_integral(&self.model.pos_jumps, u, self.k() - u, &self.inner_cfg)?;
        Ok(scaled(r, scale))
    }

    /// `Delta(u)` by quadrature of `psi_Q(v) / (beta v)`.
    pub fn delta_numeric(&self, u: f64) -> Result<QuadratureResult> {
        self.check_domain(u)?;
        let m = self.model;
        let integrand = |a: Abscissa| {
            let v = a.x;
            let mut g = m.drift + 0.5 * m.volatility * m.volatility * v;
            if let Some(law) = m.neg_jumps {
                g += m.neg_intensity
                    * if v < REMOVABLE_CUTOFF {
                        -law.mean()
                    } else {
                        law.mgf_minus_one(v) / v
                    };
            }
            g / m.beta
        };
        integrate_signed(integrand, 0.0, u, &self.inner_cfg)
    }

    /// `phi(K)` evaluated as an improper integral; `Err(Divergent)` signals
    /// `phi(K) = infinity`.
    pub fn phi_at_boundary_numeric(&self) -> Result<f64> {
        let law = self.model.pos_jumps;
        let k = self.k();
        let log_f = |a: Abscissa| ln_mgf_excess_ratio(&law, a.x, a.to_upper);
        let r = crate::quadrature::integrate_to_boundary_limit(log_f, 0.0, k, &self.inner_cfg)?;
        Ok(self.model.pos_intensity / self.model.beta * r.value + self.delta_at_boundary())
    }
}

fn scaled(mut r: QuadratureResult, factor: f64) -> QuadratureResult {
    r.value *= factor;
    r.abs_error_estimate *= factor.abs();
    r.scaled_value *= factor;
    r.scaled_error *= factor.abs();
    r
}

/// `log((E e^{v xi} - 1)/v)` with `gap = K - v`.
fn ln_mgf_excess_ratio(law: &PosJumpLaw, v: f64, gap: f64) -> f64 {
    if v < REMOVABLE_CUTOFF {
        return law.mean().ln();
    }
    ln_expm1(law.ln_mgf(v, gap)) - v.ln()
}

/// `int_0^u (E e^{v xi} - 1)/v dv`, with `gap = K - u`.
fn mgf_excess_integral(law: &PosJumpLaw, u: f64, gap: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    let r = integrate_singular(|a| ln_mgf_excess_ratio(law, a.x, gap + a.to_upper), 0.0, u, cfg);
    match r {
        Err(Error::NonConvergence(best)) => Ok(*best),
        other => other,
    }
}

/// `int_0^u (1 - e^{-v d})/v dv`, the entire exponential integral `Ein(u d)`.
fn constant_jump_ein(size: f64, u: f64, cfg: &QuadratureConfig) -> f64 {
    let log_f = |a: Abscissa| {
        let v = a.x;
        if v < REMOVABLE_CUTOFF {
            size.ln()
        } else {
            (-(-v * size).exp_m1()).ln() - v.ln()
        }
    };
    match integrate_singular(log_f, 0.0, u, cfg) {
        Ok(r) => r.value,
        Err(Error::NonConvergence(best)) => best.value,
        Err(_) => f64::NAN,
    }
}
