//! Driving Lévy process of the Ornstein–Uhlenbeck model.
//!
//! The driver is `L_t = Q_t + R_t`, where `Q_t` carries drift, a Brownian
//! part and downward compound-Poisson jumps, and `R_t` is a compound Poisson
//! process of upward jumps. The process itself solves
//! `X_t = x - beta * int_0^t X_s ds + L_t`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Law of the upward jump sizes `xi_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PosJumpLaw {
    /// Exponential with the given rate; its MGF boundary equals the rate.
    #[serde(rename = "exp")]
    Exponential { rate: f64 },
    /// Gamma with the given shape and unit scale; MGF boundary 1.
    #[serde(rename = "gamma")]
    Gamma { shape: f64 },
}

impl PosJumpLaw {
    /// `sup { v >= 0 : E e^{v xi} < inf }`.
    pub fn mgf_boundary(&self) -> f64 {
        match *self {
            PosJumpLaw::Exponential { rate } => rate,
            PosJumpLaw::Gamma { .. } => 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PosJumpLaw::Exponential { rate } => 1.0 / rate,
            PosJumpLaw::Gamma { shape } => shape,
        }
    }

    /// `log E e^{v xi}` for `0 <= v < K`, given `gap = K - v` computed by
    /// the caller without cancellation.
    pub fn ln_mgf(&self, v: f64, gap: f64) -> f64 {
        let k = self.mgf_boundary();
        let ln_one_minus = ln_one_minus_ratio(v, gap, k);
        match *self {
            PosJumpLaw::Exponential { .. } => -ln_one_minus,
            PosJumpLaw::Gamma { shape } => -shape * ln_one_minus,
        }
    }

    /// `P(xi > delta)`.
    pub fn tail_prob(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 1.0;
        }
        match *self {
            PosJumpLaw::Exponential { rate } => (-rate * delta).exp(),
            PosJumpLaw::Gamma { shape } => gamma_ur(shape, delta),
        }
    }

    /// `log E[e^{v xi} | xi >= a]` for `0 <= v < K`, with `gap = K - v`.
    pub fn ln_conditional_mgf(&self, v: f64, gap: f64, a: f64) -> f64 {
        self.conditioned_above(a).ln_mgf(v, gap)
    }

    /// The law of `xi` given `xi >= a`.
    pub fn conditioned_above(&self, a: f64) -> ConditionalJump {
        let a = a.max(0.0);
        let ln_tail = match *self {
            PosJumpLaw::Exponential { .. } => 0.0,
            PosJumpLaw::Gamma { shape } => ln_gamma_ur(shape, a),
        };
        ConditionalJump { law: *self, a, ln_tail }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, PosJumpLaw::Exponential { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PosJumpLaw::Exponential { rate } => positive("pos_jumps.rate", rate),
            PosJumpLaw::Gamma { shape } => positive("pos_jumps.shape", shape),
        }
    }
}

const MODEL_FIELDS: [&str; 7] = [
    "beta",
    "drift",
    "volatility",
    "pos_jumps",
    "pos_intensity",
    "neg_jumps",
    "neg_intensity",
];

/// Upward jump law conditioned on exceeding a threshold; built once per
/// threshold so repeated MGF evaluations skip the tail normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalJump {
    law: PosJumpLaw,
    a: f64,
    ln_tail: f64,
}

impl ConditionalJump {
    /// `log E[e^{v xi} | xi >= a]` for `0 <= v < K`, with `gap = K - v`.
    pub fn ln_mgf(&self, v: f64, gap: f64) -> f64 {
        let a = self.a;
        match self.law {
            PosJumpLaw::Exponential { rate } => v * a - ln_one_minus_ratio(v, gap, rate),
            PosJumpLaw::Gamma { shape } => {
                // log Q(a(1-v)) - log Q(a) = int of the hazard over a length v a
                let shift = if v * a < 1e-8 {
                    v * a * gamma_hazard(shape, a)
                } else {
                    ln_gamma_ur(shape, a * gap) - self.ln_tail
                };
                -shape * ln_one_minus_ratio(v, gap, 1.0) + shift
            }
        }
    }
}

/// Law of the downward jump sizes `eta > 0` (applied as `-eta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum NegJumpLaw {
    #[serde(rename = "exp")]
    Exponential { rate: f64 },
    #[serde(rename = "const")]
    Constant { size: f64 },
}

impl NegJumpLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            NegJumpLaw::Exponential { rate } => 1.0 / rate,
            NegJumpLaw::Constant { size } => size,
        }
    }

    /// `E e^{-v eta} - 1` for `v >= 0`.
    pub fn mgf_minus_one(&self, v: f64) -> f64 {
        match *self {
            NegJumpLaw::Exponential { rate } => -v / (rate + v),
            NegJumpLaw::Constant { size } => (-v * size).exp_m1(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NegJumpLaw::Exponential { rate } => positive("neg_jumps.rate", rate),
            NegJumpLaw::Constant { size } => positive("neg_jumps.size", size),
        }
    }
}

/// Full specification of the driver plus the mean-reversion rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    pub beta: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub volatility: f64,
    pub pos_jumps: PosJumpLaw,
    pub pos_intensity: f64,
    #[serde(default)]
    pub neg_jumps: Option<NegJumpLaw>,
    #[serde(default)]
    pub neg_intensity: f64,
}

impl LevyModel {
    /// Pure compound-Poisson driver with exponential upward jumps.
    pub fn exponential(beta: f64, pos_intensity: f64, rate: f64) -> Self {
        LevyModel {
            beta,
            drift: 0.0,
            volatility: 0.0,
            pos_jumps: PosJumpLaw::Exponential { rate },
            pos_intensity,
            neg_jumps: None,
            neg_intensity: 0.0,
        }
    }

    /// Pure compound-Poisson driver with unit-scale Gamma upward jumps.
    pub fn gamma(beta: f64, pos_intensity: f64, shape: f64) -> Self {
        LevyModel {
            pos_jumps: PosJumpLaw::Gamma { shape },
            ..LevyModel::exponential(beta, pos_intensity, 1.0)
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_volatility(mut self, volatility: f64) -> Self {
        self.volatility = volatility;
        self
    }

    pub fn with_neg_jumps(mut self, law: NegJumpLaw, intensity: f64) -> Self {
        self.neg_jumps = Some(law);
        self.neg_intensity = intensity;
        self
    }

    /// Parses and validates a model document. Errors name the offending
    /// field, including type errors inside it.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid("<document>", &e.to_string()))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| invalid("<document>", "expected a JSON object"))?;
        if let Some(key) = obj.keys().find(|k| !MODEL_FIELDS.contains(&k.as_str())) {
            return Err(invalid("<document>", &format!("unknown field `{key}`")));
        }
        fn field<T: serde::de::DeserializeOwned>(
            obj: &serde_json::Map<String, serde_json::Value>,
            name: &'static str,
            default: Option<T>,
        ) -> Result<T> {
            match (obj.get(name), default) {
                (Some(v), _) => serde_json::from_value(v.clone()).map_err(|e| invalid(name, &e.to_string())),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(invalid(name, "missing")),
            }
        }
        let model = LevyModel {
            beta: field(obj, "beta", None)?,
            drift: field(obj, "drift", Some(0.0))?,
            volatility: field(obj, "volatility", Some(0.0))?,
            pos_jumps: field(obj, "pos_jumps", None)?,
            pos_intensity: field(obj, "pos_intensity", None)?,
            neg_jumps: field(obj, "neg_jumps", Some(None))?,
            neg_intensity: field(obj, "neg_intensity", Some(0.0))?,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive("beta", self.beta)?;
        finite("drift", self.drift)?;
        if !(self.volatility >= 0.0) || !self.volatility.is_finite() {
            return Err(invalid("volatility", "must be finite and >= 0"));
        }
        self.pos_jumps.validate()?;
        positive("pos_intensity", self.pos_intensity)?;
        if !(self.neg_intensity >= 0.0) || !self.neg_intensity.is_finite() {
            return Err(invalid("neg_intensity", "must be finite and >= 0"));
        }
        match self.neg_jumps {
            Some(law) => law.validate()?,
            None if self.neg_intensity > 0.0 => return Err(invalid("neg_jumps", "required when neg_intensity > 0")),
            None => {}
        }
        Ok(())
    }

    /// Long-run level `c / beta` that the process relaxes to between jumps.
    pub fn relaxation_level(&self) -> f64 {
        self.drift / self.beta
    }

    /// Total rate of the merged jump clock.
    pub fn total_jump_rate(&self) -> f64 {
        self.pos_intensity + self.active_neg_intensity()
    }

    pub(crate) fn active_neg_intensity(&self) -> f64 {
        if self.neg_jumps.is_some() {
            self.neg_intensity
        } else {
            0.0
        }
    }

    /// `lambda / beta`, the exponent of `(1 - u/K)` in the exponential-jump formulas.
    pub fn intensity_ratio(&self) -> f64 {
        self.pos_intensity / self.beta
    }
}

/// Closed-form cumulants `psi_Q`, `psi_R` of the two driver components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantSpec {
    model: LevyModel,
    /// MGF boundary of `L_1`; finite for every built-in upward law.
    pub k: f64,
}

impl CumulantSpec {
    /// `log E e^{v Q_1}`, finite for all `v >= 0`.
    pub fn psi_q(&self, v: f64) -> f64 {
        let m = &self.model;
        let mut psi = m.drift * v + 0.5 * m.volatility * m.volatility * v * v;
        if let Some(law) = m.neg_jumps {
            psi += m.neg_intensity * law.mgf_minus_one(v);
        }
        psi
    }

    /// `log E e^{v R_1}`; `+inf` for `v >= K`.
    pub fn psi_r(&self, v: f64) -> f64 {
        if v >= self.k {
            return f64::INFINITY;
        }
        let ln_mgf = self.model.pos_jumps.ln_mgf(v, self.k - v);
        self.model.pos_intensity * ln_mgf.exp_m1()
    }

    pub fn psi(&self, v: f64) -> f64 {
        self.psi_q(v) + self.psi_r(v)
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }
}

pub fn build_cumulants(model: &LevyModel) -> Result<CumulantSpec> {
    model.validate()?;
    Ok(CumulantSpec {
        model: *model,
        k: model.pos_jumps.mgf_boundary(),
    })
}

/// Whether `phi(K) = lim_{u -> K} phi(u)` is finite.
///
/// `Delta` is continuous up to `K` for every built-in `Q`, so only `W`
/// matters: exponential jumps give `W(u) = -(lambda/beta) log(1 - u/K)`,
/// unit Gamma jumps give a finite limit exactly when the shape is below one.
pub fn phi_at_k_finite(model: &LevyModel) -> bool {
    match model.pos_jumps {
        PosJumpLaw::Exponential { .. } => false,
        PosJumpLaw::Gamma { shape } => shape < 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Stopped martingale identity `E e^{-mu beta tau} G(X_tau, mu) = G(x, mu)`.
    MartingaleIdentity,
    /// Mean identity `beta E tau = E int (e^{u X_tau} - e^{u x}) e^{-phi} u^{-1} du`.
    MeanIdentity,
    /// Explicit exit formulas for exponential upward jumps.
    ExponentialJumps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applicability {
    pub theorem: Theorem,
    /// Hypotheses that do not hold; empty when applicable.
    pub failed: Vec<String>,
}

impl Applicability {
    pub fn is_applicable(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_applicable() {
            Ok(())
        } else {
            Err(Error::NotApplicable(format!(
                "{:?}: {}",
                self.theorem,
                self.failed.join("; ")
            )))
        }
    }
}

pub fn check_theorem_applicability(model: &LevyModel, theorem: Theorem) -> Applicability {
    let mut failed = Vec::new();
    if let Err(e) = model.validate() {
        failed.push(e.to_string());
    }
    let k = model.pos_jumps.mgf_boundary();
    let phi_k_finite = phi_at_k_finite(model);
    match theorem {
        Theorem::MartingaleIdentity | Theorem::MeanIdentity => {
            if !(k > 0.0) {
                failed.push("K > 0".into());
            }
            if phi_k_finite {
                failed.push("phi(K) = infinity".into());
            }
            if theorem == Theorem::MeanIdentity && !k.is_finite() {
                failed.push("K < infinity".into());
            }
        }
        Theorem::ExponentialJumps => {
            if !model.pos_jumps.is_exponential() {
                failed.push("upward jumps exponentially distributed".into());
            }
            // A Brownian part lets the path creep over the barrier, which
            // puts an atom at zero in the overshoot law.
            if model.volatility > 0.0 {
                failed.push("no diffusion part (overshoot must be exponential)".into());
            }
        }
    }
    Applicability { theorem, failed }
}

/// `log(1 - v/k)` given `gap = k - v`, choosing the cancellation-free form.
pub(crate) fn ln_one_minus_ratio(v: f64, gap: f64, k: f64) -> f64 {
    if v < 0.5 * k {
        (-v / k).ln_1p()
    } else {
        (gap / k).ln()
    }
}

/// `log Q(shape, x)` for the regularised upper incomplete gamma function,
/// switching to the leading asymptotic term once `Q` underflows.
fn ln_gamma_ur(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if shape.fract() == 0.0 && shape <= 64.0 && x < 500.0 {
        // Q(n, x) = e^{-x} sum_{k<n} x^k / k!
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..shape as usize {
            term *= x / k as f64;
            sum += term;
        }
        return sum.ln() - x;
    }
    let q = gamma_ur(shape, x);
    if q > 1e-290 {
        q.ln()
    } else {
        (shape - 1.0) * x.ln() - x - ln_gamma(shape) + ((shape - 1.0) / x).ln_1p()
    }
}

/// Hazard rate of the unit-scale Gamma law at `x > 0`.
fn gamma_hazard(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            1.0
        } else {
            0.0
        };
    }
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape) - ln_gamma_ur(shape, x)).exp()
}

fn invalid(field: &'static str, reason: &str) -> Error {
    Error::InvalidModel {
        field,
        reason: reason.to_string(),
    }
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, &format!("must be finite and > 0 (got {value})")))
    }
}

fn finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, &format!("must be finite (got {value})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_exp() -> LevyModel {
        LevyModel::exponential(1.0, 1.0, 1.0)
    }

    #[test]
    fn psi_r_exponential_half() {
        let c = build_cumulants(&unit_exp()).unwrap();
        assert!((c.psi_r(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cumulants_vanish_at_zero() {
        let models = [
            unit_exp(),
            LevyModel::gamma(2.0, 3.0, 0.5)
                .with_drift(-1.0)
                .with_volatility(0.7)
                .with_neg_jumps(NegJumpLaw::Constant { size: 0.3 }, 2.0),
            LevyModel::exponential(0.5, 1.0, 2.0).with_neg_jumps(NegJumpLaw::Exponential { rate: 4.0 }, 1.5),
        ];
        for m in &models {
            let c = build_cumulants(m).unwrap();
            assert_eq!(c.psi_q(0.0), 0.0);
            assert_eq!(c.psi_r(0.0), 0.0);
        }
    }

    #[test]
    fn gamma_boundary_is_one() {
        let c = build_cumulants(&LevyModel::gamma(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(c.k, 1.0);
        let c = build_cumulants(&LevyModel::exponential(1.0, 1.0, 2.5)).unwrap();
        assert_eq!(c.k, 2.5);
    }

    #[test]
    fn psi_r_blows_up_at_boundary() {
        let c = build_cumulants(&LevyModel::exponential(1.0, 1.0, 2.0)).unwrap();
        assert!(c.psi_r(2.0 - 1e-12) > 1e11);
        assert_eq!(c.psi_r(2.0), f64::INFINITY);
    }

    #[test]
    fn psi_r_increasing_and_convex() {
        for m in [
            LevyModel::exponential(1.0, 1.3, 2.0),
            LevyModel::gamma(1.0, 0.7, 2.5),
            LevyModel::gamma(1.0, 0.7, 0.4),
        ] {
            let c = build_cumulants(&m).unwrap();
            let h = c.k / 200.0;
            let vals: Vec<f64> = (0..200).map(|i| c.psi_r(i as f64 * h)).collect();
            for w in vals.windows(3) {
                assert!(w[1] > w[0]);
                assert!(w[2] - 2.0 * w[1] + w[0] > 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut m = unit_exp();
        m.volatility = -1.0;
        assert!(matches!(
            build_cumulants(&m),
            Err(Error::InvalidModel {
                field: "volatility",
                ..
            })
        ));
        let mut m = unit_exp();
        m.pos_intensity = 0.0;
        assert!(build_cumulants(&m).is_err());
        let mut m = unit_exp();
        m.beta = -1.0;
        assert!(build_cumulants(&m).is_err());
        let m = LevyModel::exponential(1.0, 1.0, 0.0);
        assert!(build_cumulants(&m).is_err());
        let mut m = unit_exp();
        m.neg_intensity = 1.0;
        assert!(matches!(
            m.validate(),
            Err(Error::InvalidModel { field: "neg_jumps", .. })
        ));
    }

    #[test]
    fn phi_k_classifier() {
        assert!(phi_at_k_finite(&LevyModel::gamma(1.0, 1.0, 0.5)));
        assert!(!phi_at_k_finite(&LevyModel::gamma(1.0, 1.0, 1.0)));
        assert!(!phi_at_k_finite(&LevyModel::gamma(1.0, 1.0, 2.0)));
        assert!(!phi_at_k_finite(&LevyModel::exponential(1.0, 1.0, 2.0)));
    }

    #[test]
    fn applicability_reports() {
        let all = [
            Theorem::MartingaleIdentity,
            Theorem::MeanIdentity,
            Theorem::ExponentialJumps,
        ];
        for t in all {
            assert!(check_theorem_applicability(&unit_exp(), t).is_applicable());
        }
        let g05 = LevyModel::gamma(1.0, 1.0, 0.5);
        let r = check_theorem_applicability(&g05, Theorem::MartingaleIdentity);
        assert!(!r.is_applicable());
        assert_eq!(r.failed, vec!["phi(K) = infinity".to_string()]);

        let g2 = LevyModel::gamma(1.0, 1.0, 2.0);
        assert!(check_theorem_applicability(&g2, Theorem::MartingaleIdentity).is_applicable());
        assert!(check_theorem_applicability(&g2, Theorem::MeanIdentity).is_applicable());
        assert!(!check_theorem_applicability(&g2, Theorem::ExponentialJumps).is_applicable());

        let diffusive = unit_exp().with_volatility(0.5);
        assert!(!check_theorem_applicability(&diffusive, Theorem::ExponentialJumps).is_applicable());
    }

    #[test]
    fn json_document() {
        let text = r#"{"beta":1.0,"drift":0.0,"volatility":0.0,
            "pos_jumps":{"type":"exp","rate":1.0},"pos_intensity":1.0,
            "neg_jumps":{"type":"const","size":0.5},"neg_intensity":2.0}"#;
        let m = LevyModel::from_json(text).unwrap();
        assert_eq!(m.neg_jumps, Some(NegJumpLaw::Constant { size: 0.5 }));
        let back = LevyModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);

        let gamma = r#"{"beta":2,"pos_jumps":{"type":"gamma","shape":0.5},"pos_intensity":1,"neg_jumps":null}"#;
        let m = LevyModel::from_json(gamma).unwrap();
        assert_eq!(m.pos_jumps, PosJumpLaw::Gamma { shape: 0.5 });

        let bad = r#"{"beta":1,"pos_jumps":{"type":"exp","rate":-2},"pos_intensity":1}"#;
        let err = LevyModel::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("pos_jumps.rate"), "{err}");

        let missing = r#"{"pos_jumps":{"type":"exp","rate":2},"pos_intensity":1}"#;
        let err = LevyModel::from_json(missing).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");

        let wrong_type = r#"{"beta":"fast","pos_jumps":{"type":"exp","rate":2},"pos_intensity":1}"#;
        let err = LevyModel::from_json(wrong_type).unwrap_err();
        assert!(err.to_string().contains("`beta`"), "{err}");
        let bad_law = r#"{"beta":1,"pos_jumps":{"type":"pareto","rate":2},"pos_intensity":1}"#;
        assert!(LevyModel::from_json(bad_law)
            .unwrap_err()
            .to_string()
            .contains("`pos_jumps`"));
        let extra = r#"{"beta":1,"pos_jumps":{"type":"exp","rate":2},"pos_intensity":1,"sigma":3}"#;
        assert!(LevyModel::from_json(extra).unwrap_err().to_string().contains("sigma"));
        assert!(LevyModel::from_json("[1, 2").is_err());
    }

    #[test]
    fn tail_probabilities() {
        let e = PosJumpLaw::Exponential { rate: 2.0 };
        assert!((e.tail_prob(0.1) - (-0.2f64).exp()).abs() < 1e-15);
        let g = PosJumpLaw::Gamma { shape: 1.0 };
        assert!((g.tail_prob(0.1) - (-0.1f64).exp()).abs() < 1e-12);
        let g2 = PosJumpLaw::Gamma { shape: 2.0 };
        // P(Gamma(2) > d) = (1 + d) e^{-d}
        assert!((g2.tail_prob(0.1) - 1.1 * (-0.1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn conditional_mgf_closed_forms() {
        let e = PosJumpLaw::Exponential { rate: 2.0 };
        let g1 = PosJumpLaw::Gamma { shape: 1.0 };
        let g2 = PosJumpLaw::Gamma { shape: 2.0 };
        for (v, a) in [(0.3, 0.0), (0.5, 1.7), (0.9, 4.0), (0.999, 0.2)] {
            let gap = 1.0 - v;
            // memoryless: a + Exp(2)
            let expected = v * a - (1.0 - v / 2.0f64).ln();
            assert!((e.ln_conditional_mgf(v, 2.0 - v, a) - expected).abs() < 1e-13);
            assert!((g1.ln_conditional_mgf(v, gap, a) - (v * a - gap.ln())).abs() < 1e-12);
            let num = (-gap * a).exp() * (a * gap + 1.0) / (gap * gap);
            let den = (-a).exp() * (a + 1.0);
            assert!((g2.ln_conditional_mgf(v, gap, a) - (num / den).ln()).abs() < 1e-11);
        }
        // linearised branch agrees with the direct difference
        let (v, a) = (1e-8 / 1.3, 1.3);
        let lin = g2.ln_conditional_mgf(v, 1.0 - v, a);
        let direct = -2.0 * (-v).ln_1p() + v * a * a / (1.0 + a);
        assert!((lin / direct - 1.0).abs() < 1e-7);
        assert!(g2.ln_conditional_mgf(1e-17, 1.0, 0.4) > 0.0);
        // continuous across the underflow switch
        let far = g2.ln_conditional_mgf(0.5, 0.5, 800.0);
        let expected = 400.0 + (401.0f64 / 0.25 / 801.0).ln();
        assert!((far - expected).abs() < 1e-3, "{far} {expected}");
    }

    #[test]
    fn incomplete_gamma_log_branches() {
        for shape in [1.0, 2.0, 3.0, 7.0] {
            for x in [1e-3, 0.5, 10.0, 120.0] {
                let reference = gamma_ur(shape, x).ln();
                assert!((ln_gamma_ur(shape, x) - reference).abs() < 1e-10 * reference.abs().max(1.0));
            }
        }
        // beyond the finite sum and past underflow
        let (shape, x) = (2.5f64, 900.0f64);
        let leading = 1.5 * x.ln() - x - ln_gamma(shape);
        assert!((ln_gamma_ur(shape, x) - leading).abs() < 2e-3);
    }
}
