//! Analytic exit-time quantities for the barrier problem
//! `tau_b = inf { t > 0 : X_t >= b }` started from `X_0 = x < b`.
//!
//! Everything here is a ratio or a single integral over `(0, K)` of
//!
//! ```text
//! e^{z u - phi(u)} (1 - u/K)^a u^p * bracket(u)
//! ```
//!
//! with `bracket` one of `1`, `e^{u g} - 1` or `e^{u g} - 1 + u/K`. For
//! exponential upward jumps `e^{-phi(u)} = (1 - u/K)^{lambda/beta} e^{-Delta(u)}`,
//! so the explicit Laplace-transform and mean formulas come out of the same
//! builder with `a = -1`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::levy_model::{check_theorem_applicability, ln_one_minus_ratio, LevyModel, Theorem};
use crate::numerics::{ln_expm1, ln_expm1_plus};
use crate::phi_kernel::PhiEvaluator;
#[cfg(test)]
use crate::quadrature::integrate_signed;
use crate::quadrature::{integrate_singular, Abscissa, QuadratureConfig, QuadratureResult};

/// Start level, barrier and model of a first-passage question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitProblem {
    pub model: LevyModel,
    pub x: f64,
    pub b: f64,
}

impl ExitProblem {
    pub fn new(model: LevyModel, x: f64, b: f64) -> Result<Self> {
        model.validate()?;
        if !x.is_finite() {
            return Err(Error::InvalidInput {
                field: "x",
                reason: format!("must be finite (got {x})"),
            });
        }
        if !(b.is_finite() && b > x) {
            return Err(Error::InvalidInput {
                field: "b",
                reason: format!("barrier must be finite and exceed the start level {x} (got {b})"),
            });
        }
        Ok(ExitProblem { model, x, b })
    }

    pub fn with_barrier(&self, b: f64) -> Result<Self> {
        ExitProblem::new(self.model, self.x, b)
    }
}

/// `E e^{-mu beta tau_b}` with the two quadratures it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceValue {
    pub mu: f64,
    pub value: f64,
    pub numerator: QuadratureResult,
    pub denominator: QuadratureResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticMean {
    pub value: f64,
    pub ln_value: f64,
    /// `Gamma(lambda/beta) e^{-Delta(K)} / (beta K)`.
    pub constant: f64,
}

#[derive(Debug, Clone, Copy)]
enum Bracket {
    One,
    /// `e^{u g} - 1`
    ExpMinusOne(f64),
    /// `e^{u g} - 1 + u/K`
    ExpMinusOnePlusRatio(f64),
}

/// Log-integrand `z u - phi(u) + a log(1 - u/K) + p log u + log bracket(u)`.
#[derive(Debug, Clone, Copy)]
struct LogKernel {
    linear: f64,
    u_power: f64,
    extra_jump_power: f64,
    bracket: Bracket,
}

impl LogKernel {
    fn plain(linear: f64, u_power: f64) -> Self {
        LogKernel {
            linear,
            u_power,
            extra_jump_power: 0.0,
            bracket: Bracket::One,
        }
    }

    fn eval(&self, phi: &PhiEvaluator, a: Abscissa) -> f64 {
        let u = a.from_lower;
        let gap = a.to_upper;
        let k = phi.k();
        let mut l = -phi.phi_with_gap(u, gap) + self.linear * u;
        if self.u_power != 0.0 {
            l += self.u_power * u.ln();
        }
        if self.extra_jump_power != 0.0 {
            l += self.extra_jump_power * ln_one_minus_ratio(u, gap, k);
        }
        match self.bracket {
            Bracket::One => {}
            Bracket::ExpMinusOne(g) => l += ln_expm1(u * g),
            Bracket::ExpMinusOnePlusRatio(g) => l += ln_expm1_plus(u * g, u / k),
        }
        l
    }
}

#[derive(Debug, Clone)]
pub struct ExitAnalytics {
    problem: ExitProblem,
    phi: PhiEvaluator,
    cfg: QuadratureConfig,
}

impl ExitAnalytics {
    pub fn new(problem: ExitProblem) -> Result<Self> {
        Ok(ExitAnalytics {
            phi: PhiEvaluator::new(&problem.model)?,
            problem,
            cfg: QuadratureConfig::tight(),
        })
    }

    pub fn with_quadrature(mut self, cfg: QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        self.cfg = cfg;
        Ok(self)
    }

    pub fn problem(&self) -> &ExitProblem {
        &self.problem
    }

    pub fn phi(&self) -> &PhiEvaluator {
        &self.phi
    }

    pub fn quadrature_config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    fn integrate(&self, kernel: LogKernel) -> Result<QuadratureResult> {
        integrate_singular(|a| kernel.eval(&self.phi, a), 0.0, self.phi.k(), &self.cfg)
    }

    /// The explicit formulas need exponential upward jumps and an
    /// overshoot that is exactly the jump excess: no diffusion, and no
    /// upward creeping towards `c/beta > b`.
    fn require_explicit_formulas(&self, b: f64) -> Result<()> {
        check_theorem_applicability(&self.problem.model, Theorem::ExponentialJumps).into_result()?;
        let level = self.problem.model.relaxation_level();
        if level > b {
            return Err(Error::NotApplicable(format!(
                "drift level c/beta = {level} exceeds the barrier {b}; the path can creep over it"
            )));
        }
        Ok(())
    }

    fn require_mu(mu: f64) -> Result<()> {
        if mu > 0.0 && mu.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput {
                field: "mu",
                reason: format!("must be finite and > 0 (got {mu})"),
            })
        }
    }

    /// `G(z, mu) = int_0^K e^{u z - phi(u)} u^{mu - 1} du`.
    pub fn g_function(&self, z: f64, mu: f64) -> Result<f64> {
        Ok(self.g_function_quadrature(z, mu)?.value)
    }

    pub fn g_function_quadrature(&self, z: f64, mu: f64) -> Result<QuadratureResult> {
        Self::require_mu(mu)?;
        self.integrate(LogKernel::plain(z, mu - 1.0))
    }

    /// `E e^{-mu beta tau_b}` for the problem's start and barrier.
    pub fn laplace_exit(&self, mu: f64) -> Result<LaplaceValue> {
        self.laplace_transform_at(self.problem.x, self.problem.b, mu)
    }

    /// Same formula for any `b >= x`; `b = x` is allowed as a diagnostic.
    pub fn laplace_transform_at(&self, x: f64, b: f64, mu: f64) -> Result<LaplaceValue> {
        Self::require_mu(mu)?;
        if !(b >= x) {
            return Err(Error::InvalidInput {
                field: "b",
                reason: format!("must be >= x = {x}"),
            });
        }
        self.require_explicit_formulas(b)?;
        let numerator = self.integrate(LogKernel::plain(x, mu - 1.0))?;
        let denominator = self.integrate(LogKernel {
            extra_jump_power: -1.0,
            ..LogKernel::plain(b, mu - 1.0)
        })?;
        let value =
            (numerator.log_scale - denominator.log_scale).exp() * numerator.scaled_value / denominator.scaled_value;
        Ok(LaplaceValue {
            mu,
            value,
            numerator,
            denominator,
        })
    }

    /// `1 - E e^{-mu beta tau_b}`, from the difference of the two integrals
    /// taken under one integral sign so small `mu` loses no digits.
    pub fn laplace_complement(&self, mu: f64) -> Result<f64> {
        Self::require_mu(mu)?;
        let ExitProblem { x, b, .. } = self.problem;
        self.require_explicit_formulas(b)?;
        let difference = self.integrate(LogKernel {
            extra_jump_power: -1.0,
            bracket: Bracket::ExpMinusOnePlusRatio(b - x),
            ..LogKernel::plain(x, mu - 1.0)
        })?;
        let denominator = self.integrate(LogKernel {
            extra_jump_power: -1.0,
            ..LogKernel::plain(b, mu - 1.0)
        })?;
        Ok((difference.ln_value() - denominator.ln_value()).exp())
    }

    /// `E tau_b`.
    pub fn mean_exit(&self) -> Result<f64> {
        Ok(self.mean_exit_quadrature()?.value)
    }

    /// `beta E tau_b` as a log-scaled quadrature result.
    pub fn mean_exit_quadrature(&self) -> Result<QuadratureResult> {
        let ExitProblem { x, b, model } = self.problem;
        self.require_explicit_formulas(b)?;
        let mut r = self.integrate(LogKernel {
            extra_jump_power: -1.0,
            bracket: Bracket::ExpMinusOnePlusRatio(b - x),
            ..LogKernel::plain(x, -1.0)
        })?;
        r.log_scale -= model.beta.ln();
        r.value /= model.beta;
        r.abs_error_estimate /= model.beta;
        Ok(r)
    }

    /// Lower bound on `E tau_b` obtained by setting the overshoot to zero in
    /// the mean identity.
    pub fn overshoot_free_lower_bound(&self) -> Result<f64> {
        Ok(self.theorem2_mean_integral(self.problem.b)? / self.problem.model.beta)
    }

    /// `int_0^K (e^{u X} - e^{u x}) e^{-phi(u)} u^{-1} du` for one realized
    /// exit value `X`.
    pub fn theorem2_mean_integral(&self, exit_value: f64) -> Result<f64> {
        check_theorem_applicability(&self.problem.model, Theorem::MeanIdentity).into_result()?;
        let x = self.problem.x;
        if !(exit_value >= x) {
            return Err(Error::InvalidInput {
                field: "exit_value",
                reason: format!("must be >= x = {x} (got {exit_value})"),
            });
        }
        if exit_value == x {
            return Ok(0.0);
        }
        Ok(self
            .integrate(LogKernel {
                bracket: Bracket::ExpMinusOne(exit_value - x),
                ..LogKernel::plain(x, -1.0)
            })?
            .value)
    }

    /// `e^{-mu beta t} G(X, mu)` for one stopped path.
    pub fn theorem1_weight(&self, exit_value: f64, exit_time: f64, mu: f64) -> Result<f64> {
        check_theorem_applicability(&self.problem.model, Theorem::MartingaleIdentity).into_result()?;
        let g = self.g_function_quadrature(exit_value, mu)?;
        Ok((g.ln_value() - mu * self.problem.model.beta * exit_time).exp())
    }

    /// `E[e^{-mu beta tau} G(X_tau, mu) | F_{tau-}]` for a path that jumped
    /// over the barrier from `pre_exit_value` at `exit_time`: the crossing
    /// jump is integrated out against its law conditioned on reaching `b`.
    /// A path that reached `b` continuously (`pre_exit_value >= b`) gets the
    /// plain weight at its exit value.
    pub fn conditional_theorem1_weight(&self, pre_exit_value: f64, exit_time: f64, mu: f64) -> Result<f64> {
        let b = self.problem.b;
        if pre_exit_value >= b {
            return self.theorem1_weight(pre_exit_value, exit_time, mu);
        }
        check_theorem_applicability(&self.problem.model, Theorem::MartingaleIdentity).into_result()?;
        Self::require_mu(mu)?;
        let y = pre_exit_value;
        let jump = self.problem.model.pos_jumps.conditioned_above(b - y);
        let r = integrate_singular(
            |ab: Abscissa| {
                let (u, gap) = (ab.from_lower, ab.to_upper);
                u * y + jump.ln_mgf(u, gap) - self.phi.phi_with_gap(u, gap) + (mu - 1.0) * u.ln()
            },
            0.0,
            self.phi.k(),
            &self.cfg,
        )?;
        Ok((r.ln_value() - mu * self.problem.model.beta * exit_time).exp())
    }

    /// `E[int (e^{u X_tau} - e^{u x}) e^{-phi(u)} u^{-1} du | F_{tau-}]`, the
    /// mean-identity integrand with the crossing jump integrated out.
    pub fn conditional_theorem2_integral(&self, pre_exit_value: f64) -> Result<f64> {
        let ExitProblem { x, b, model } = self.problem;
        if pre_exit_value >= b {
            return self.theorem2_mean_integral(pre_exit_value);
        }
        check_theorem_applicability(&model, Theorem::MeanIdentity).into_result()?;
        let y = pre_exit_value;
        let jump = model.pos_jumps.conditioned_above(b - y);
        let r = integrate_singular(
            |ab: Abscissa| {
                let (u, gap) = (ab.from_lower, ab.to_upper);
                let excess = u * (y - x) + jump.ln_mgf(u, gap);
                u * x + ln_expm1(excess) - self.phi.phi_with_gap(u, gap) - u.ln()
            },
            0.0,
            self.phi.k(),
            &self.cfg,
        )?;
        Ok(r.value)
    }

    /// Large-barrier equivalent `C e^{K b} (K b)^{-lambda/beta}` of `E tau_b`.
    pub fn asymptotic_mean(&self) -> Result<AsymptoticMean> {
        let ExitProblem { b, model, .. } = self.problem;
        self.require_explicit_formulas(b)?;
        if !(b > 0.0) {
            return Err(Error::InvalidInput {
                field: "b",
                reason: "the asymptotic form needs b > 0".into(),
            });
        }
        let k = self.phi.k();
        let r = model.intensity_ratio();
        let ln_c = ln_gamma(r) - (model.beta * k).ln() - self.phi.delta_at_boundary();
        let ln_value = ln_c + k * b - r * (k * b).ln();
        Ok(AsymptoticMean {
            value: ln_value.exp(),
            ln_value,
            constant: ln_c.exp(),
        })
    }

    /// `E e^{-z tau_b / E tau_b}`, which tends to `1/(1+z)` as `b` grows.
    pub fn limit_theorem_lt(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidInput {
                field: "z",
                reason: format!("must be finite and > 0 (got {z})"),
            });
        }
        let beta_mean = self.mean_exit_quadrature()?.ln_value() + self.problem.model.beta.ln();
        let mu = (z.ln() - beta_mean).exp();
        Ok(self.laplace_exit(mu)?.value)
    }
}
