//! Log-space tanh-sinh quadrature for integrands with power-law endpoint
//! singularities.
//!
//! Integrands are supplied as `log f` and evaluated at an [`Abscissa`] that
//! carries the distances to both endpoints, so factors such as
//! `(1 - u/K)^p` can be formed without cancellation next to `K`. Terms are
//! accumulated against a running maximum log value, which keeps `e^{ub}` for
//! large `b` from overflowing. The outermost evaluated node on each side sits
//! `~1e-275` from the endpoint; past it the trapezoid sum is continued with a
//! power law fitted to the last two nodes, which carries the mass of
//! `u^{mu-1}` for tiny `mu`.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Half-width of the tanh-sinh parameter range. At `t = 6` the node lies
/// about `1e-275` (relative) from the endpoint.
const T_MAX: i64 = 6;
const MIN_LEVELS: u32 = 2;
/// Finest tabulated step is `1 / TABLE_DENSITY` (level 12).
const TABLE_DENSITY: f64 = 4096.0;
/// Largest tanh-sinh parameter used when continuing an endpoint power law.
const EXTENSION_T_LIMIT: f64 = 40.0;
/// Exponent margin below which a fitted endpoint power law counts as `-1`.
const DIVERGENT_POWER_MARGIN: f64 = 1e-9;
/// Upper limit of the log-distance variable in boundary-limit mode.
const BOUNDARY_LOG_DISTANCE: f64 = 700.0;
const BOUNDARY_SPLIT: f64 = 350.0;
/// Integrals beyond this value are treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of step halvings after the initial unit step.
    pub max_levels: u32,
    /// Panel split as a fraction of the interval.
    pub split_point: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_levels: 12,
            split_point: 0.5,
        }
    }
}

impl QuadratureConfig {
    /// Near machine precision; used where results feed an ill-conditioned
    /// step such as Laplace inversion.
    pub fn tight() -> Self {
        QuadratureConfig {
            abs_tol: 1e-300,
            rel_tol: 1e-14,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidInput {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.abs_tol > 0.0) {
            return bad("abs_tol", "must be > 0");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol", "must be > 0");
        }
        if self.max_levels < 3 {
            return bad("max_levels", "must be >= 3");
        }
        if !(self.split_point > 0.0 && self.split_point < 1.0) {
            return bad("split_point", "must lie in (0, 1)");
        }
        Ok(())
    }
}

/// A quadrature node, with its distances to both ends of the integration
/// interval computed without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abscissa {
    pub x: f64,
    pub from_lower: f64,
    pub to_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    /// `e^{log_scale} * scaled_value`; may overflow to infinity.
    pub value: f64,
    pub abs_error_estimate: f64,
    pub nodes_used: usize,
    pub log_scale: f64,
    pub scaled_value: f64,
    pub scaled_error: f64,
    pub converged: bool,
}

impl QuadratureResult {
    /// Natural log of the value; meaningful for positive integrals.
    pub fn ln_value(&self) -> f64 {
        self.log_scale + self.scaled_value.ln()
    }

    fn zero() -> Self {
        QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            nodes_used: 0,
            log_scale: 0.0,
            scaled_value: 0.0,
            scaled_error: 0.0,
            converged: true,
        }
    }

    fn from_scaled(shift: f64, scaled: f64, scaled_err: f64, nodes: usize, converged: bool) -> Self {
        let (shift, scaled, scaled_err) = if shift.is_finite() {
            (shift, scaled, scaled_err)
        } else {
            (0.0, 0.0, 0.0)
        };
        QuadratureResult {
            value: scaled * shift.exp(),
            abs_error_estimate: scaled_err * shift.exp(),
            nodes_used: nodes,
            log_scale: shift,
            scaled_value: scaled,
            scaled_error: scaled_err,
            converged,
        }
    }

    /// Sum of two results, kept in log scale.
    pub fn combine(&self, other: &QuadratureResult) -> QuadratureResult {
        let shift = self.log_scale.max(other.log_scale);
        let a = (self.log_scale - shift).exp();
        let b = (other.log_scale - shift).exp();
        QuadratureResult::from_scaled(
            shift,
            self.scaled_value * a + other.scaled_value * b,
            self.scaled_error * a + other.scaled_error * b,
            self.nodes_used + other.nodes_used,
            self.converged && other.converged,
        )
    }
}

/// One evaluated integrand value in sign/log-magnitude form.
#[derive(Debug, Clone, Copy)]
struct Term {
    ln_abs: f64,
    sign: f64,
}

/// Compensated sum of `sign * e^{ln_abs}` terms relative to a running
/// maximum.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    shift: f64,
    sum: f64,
    comp: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            shift: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }

    fn add(&mut self, ln_abs: f64, sign: f64) {
        if ln_abs == f64::NEG_INFINITY || sign == 0.0 {
            return;
        }
        if ln_abs > self.shift {
            let r = if self.shift == f64::NEG_INFINITY {
                0.0
            } else {
                (self.shift - ln_abs).exp()
            };
            self.sum *= r;
            self.comp *= r;
            self.shift = ln_abs;
        }
        let v = sign * (ln_abs - self.shift).exp();
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn scaled(&self) -> f64 {
        self.sum + self.comp
    }

    /// Value expressed relative to a different shift.
    fn rescaled(&self, shift: f64) -> f64 {
        if self.shift == f64::NEG_INFINITY {
            0.0
        } else {
            self.scaled() * (self.shift - shift).exp()
        }
    }
}

/// Geometry of one tanh-sinh node on a panel of half-width `half`:
/// distance to the endpoint on the node's side, distance to the other end,
/// and `log` of the transformation weight.
fn node_geometry(t: f64, half: f64, ln_half: f64) -> (f64, f64, f64) {
    let scaled = t.abs() * TABLE_DENSITY;
    let table = unit_nodes();
    let (g, lw) = if scaled.fract() == 0.0 && (scaled as usize) < table.len() {
        table[scaled as usize]
    } else {
        unit_node(t.abs())
    };
    let near = half * g;
    (near, 2.0 * half - near, ln_half + lw)
}

/// Distance to the near endpoint and log weight on a unit half-width.
fn unit_node(t: f64) -> (f64, f64) {
    let q = FRAC_PI_2 * t.sinh();
    let e = (-2.0 * q).exp();
    let lw = FRAC_PI_2.ln() + t.cosh().ln() + 4f64.ln() - 2.0 * q - 2.0 * e.ln_1p();
    (2.0 * e / (1.0 + e), lw)
}

/// Nodes `|t| = i / TABLE_DENSITY` up to `T_MAX`, shared by all calls.
fn unit_nodes() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = T_MAX as usize * TABLE_DENSITY as usize;
        (0..=n).map(|i| unit_node(i as f64 / TABLE_DENSITY)).collect()
    })
}

#[derive(Clone, Copy)]
struct Panel {
    lower: f64,
    upper: f64,
    /// Offsets from the panel ends to the global interval ends.
    before: f64,
    after: f64,
}

impl Panel {
    fn half(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    fn abscissa(&self, t: f64, ln_half: f64) -> (Abscissa, f64, f64) {
        let (near, far, ln_w) = node_geometry(t, self.half(), ln_half);
        let (from_lower, to_upper) = if t >= 0.0 { (far, near) } else { (near, far) };
        let x = if t >= 0.0 {
            self.upper - to_upper
        } else {
            self.lower + from_lower
        };
        (
            Abscissa {
                x,
                from_lower: self.before + from_lower,
                to_upper: self.after + to_upper,
            },
            near,
            ln_w,
        )
    }
}

/// Power law `|f| ~ A d^p` fitted at an outer endpoint from the level-0
/// nodes at `|t| = T_MAX - 1` and `|t| = T_MAX`.
#[derive(Debug, Clone, Copy)]
struct EndpointFit {
    ln_f: f64,
    sign: f64,
    ln_d: f64,
    power: f64,
}

impl EndpointFit {
    fn new(outer: Option<(f64, f64, f64)>, inner: Option<(f64, f64, f64)>) -> Option<Self> {
        let ((l1, sign, d1), (l2, _, d2)) = (outer?, inner?);
        if !(l1.is_finite() && l2.is_finite()) {
            return None;
        }
        Some(EndpointFit {
            ln_f: l1,
            sign,
            ln_d: d1,
            power: (l1 - l2) / (d1 - d2),
        })
    }

    fn integrable(&self) -> bool {
        self.power + 1.0 > DIVERGENT_POWER_MARGIN
    }

    /// Adds the trapezoid terms beyond `|t| = T_MAX` at step `h`, with the
    /// integrand continued by the fitted power law. Node distances are
    /// only ever formed in log space, so they never underflow.
    fn extend(&self, acc: &mut LogSum, half: f64, h: f64, first: i64, stride: i64) -> usize {
        let mut added = 0;
        let mut j = first;
        loop {
            let t = j as f64 * h;
            if t > EXTENSION_T_LIMIT {
                break;
            }
            let q = FRAC_PI_2 * t.sinh();
            let e = (-2.0 * q).exp();
            // d = 2h' e^{-2q}/(1+e), w = 4 h' (pi/2) cosh t e^{-2q}/(1+e)^2;
            // the e^{-2q} factors are merged so large q cancels exactly
            let term = self.ln_f
                + self.power * ((2.0 * half).ln() - e.ln_1p() - self.ln_d)
                + half.ln()
                + FRAC_PI_2.ln()
                + t.cosh().ln()
                + 4f64.ln()
                - 2.0 * e.ln_1p()
                - 2.0 * q * (self.power + 1.0);
            acc.add(term, self.sign);
            added += 1;
            let decreasing = (self.power + 1.0) * std::f64::consts::PI * t.cosh() > 1.0;
            if decreasing && term < acc.shift - 60.0 {
                break;
            }
            j += stride;
        }
        added
    }
}

fn tanh_sinh<F>(mut f: F, lower: f64, upper: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult>
where
    F: FnMut(Abscissa) -> Term,
{
    cfg.validate()?;
    if !(lower.is_finite() && upper.is_finite()) {
        return Err(Error::Domain {
            value: if lower.is_finite() { upper } else { lower },
            domain: "finite interval".into(),
        });
    }
    if !(lower < upper) {
        if lower == upper {
            return Ok(QuadratureResult::zero());
        }
        return Err(Error::Domain {
            value: lower,
            domain: format!("lower < upper = {upper}"),
        });
    }
    let width = upper - lower;
    let mid = lower + cfg.split_point * width;
    let panels = [
        Panel {
            lower,
            upper: mid,
            before: 0.0,
            after: upper - mid,
        },
        Panel {
            lower: mid,
            upper,
            before: mid - lower,
            after: 0.0,
        },
    ];

    let mut acc = LogSum::new();
    let mut nodes = 0usize;
    // (outer, inner) samples for the lower and upper endpoint fits
    let mut edge_samples = [[None; 2]; 2];
    let mut fits: [Option<EndpointFit>; 2] = [None, None];
    let mut prev: Option<(LogSum, f64)> = None;
    let mut last_err = f64::INFINITY;
    let mut converged = false;
    let mut h = 1.0f64;

    for level in 0..=cfg.max_levels {
        let (start, stride) = if level == 0 { (0i64, 1i64) } else { (1, 2) };
        let steps = T_MAX << level;
        for (pi, panel) in panels.iter().enumerate() {
            let ln_half = panel.half().ln();
            let mut j = -steps + start;
            while j <= steps {
                let t = j as f64 * h;
                let (a, near, ln_w) = panel.abscissa(t, ln_half);
                j += stride;
                if !(near > 0.0) {
                    continue;
                }
                let term = f(a);
                nodes += 1;
                if term.ln_abs.is_nan() || term.ln_abs == f64::INFINITY {
                    return Err(Error::Domain {
                        value: a.x,
                        domain: "integrand finite in the interior".into(),
                    });
                }
                acc.add(term.ln_abs + ln_w, term.sign);
                if level == 0 {
                    let record = Some((term.ln_abs, term.sign, near.ln()));
                    match (pi, t as i64) {
                        (0, t) if t == -T_MAX => edge_samples[0][0] = record,
                        (0, t) if t == -T_MAX + 1 => edge_samples[0][1] = record,
                        (1, t) if t == T_MAX => edge_samples[1][0] = record,
                        (1, t) if t == T_MAX - 1 => edge_samples[1][1] = record,
                        _ => {}
                    }
                }
            }
        }
        if level == 0 {
            for side in 0..2 {
                fits[side] = EndpointFit::new(edge_samples[side][0], edge_samples[side][1]);
            }
        }
        for (side, fit) in fits.iter().enumerate() {
            if let Some(fit) = fit.filter(EndpointFit::integrable) {
                nodes += fit.extend(&mut acc, panels[side].half(), h, steps + 1, stride);
            }
        }

        let shift = acc.shift;
        let estimate = acc.scaled() * h;
        if let Some((prev_acc, prev_h)) = prev {
            let prev_estimate = prev_acc.rescaled(shift) * prev_h;
            last_err = (estimate - prev_estimate).abs();
            let abs_tol_scaled = (cfg.abs_tol.ln() - shift).exp();
            if level >= MIN_LEVELS && last_err <= abs_tol_scaled.max(cfg.rel_tol * estimate.abs()) {
                converged = true;
                prev = Some((acc, h));
                break;
            }
        }
        prev = Some((acc, h));
        h *= 0.5;
    }

    let (acc, h) = prev.expect("at least one level");
    let scaled = acc.scaled() * h;
    let body_ln = acc.shift + scaled.abs().ln();
    for fit in fits.iter().flatten() {
        // A non-integrable power at an endpoint only matters if the mass at
        // the outermost node is visible next to the body.
        if !fit.integrable() && (!body_ln.is_finite() || fit.ln_f + fit.ln_d > body_ln + (1e-15f64).ln()) {
            return Err(Error::Divergent(format!(
                "endpoint behaves like |u - a|^p with p = {:.3} <= -1 on [{lower}, {upper}]",
                fit.power
            )));
        }
    }
    let result = QuadratureResult::from_scaled(acc.shift, scaled, last_err, nodes, converged);
    if converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence(Box::new(result)))
    }
}

/// Integrates a positive integrand given by its logarithm over `[lower, upper]`.
///
/// Returning `-inf` from `log_f` means a zero integrand value.
pub fn integrate_singular<F>(log_f: F, lower: f64, upper: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult>
where
    F: Fn(Abscissa) -> f64,
{
    tanh_sinh(
        |a| Term {
            ln_abs: log_f(a),
            sign: 1.0,
        },
        lower,
        upper,
        cfg,
    )
}

/// Integrates a real-valued integrand of either sign.
pub fn integrate_signed<F>(f: F, lower: f64, upper: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult>
where
    F: Fn(Abscissa) -> f64,
{
    tanh_sinh(
        |a| {
            let v = f(a);
            if v.is_nan() {
                Term {
                    ln_abs: f64::NAN,
                    sign: 0.0,
                }
            } else {
                Term {
                    ln_abs: v.abs().ln(),
                    sign: v.signum(),
                }
            }
        },
        lower,
        upper,
        cfg,
    )
}

/// Integrates a positive log-integrand up to an open endpoint `upper` where
/// it may fail to be integrable.
///
/// The part next to `upper` is rewritten in the variable
/// `s = -log(upper - u)`, which turns an integrable power singularity into
/// exponential decay and a logarithmic divergence into a constant. The
/// integral is declared divergent when it exceeds [`DIVERGENCE_THRESHOLD`] or
/// when the stretch `upper - u < e^{-350}` still carries non-negligible mass.
pub fn integrate_to_boundary_limit<F>(
    log_f: F,
    lower: f64,
    upper: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult>
where
    F: Fn(Abscissa) -> f64,
{
    cfg.validate()?;
    if !(lower < upper) {
        return Err(Error::Domain {
            value: lower,
            domain: format!("lower < upper = {upper}"),
        });
    }
    let width = upper - lower;
    let mid = lower + cfg.split_point * width;
    let offset = upper - mid;
    let head = accept_unconverged(integrate_singular(
        |a| {
            log_f(Abscissa {
                to_upper: a.to_upper + offset,
                ..a
            })
        },
        lower,
        mid,
        cfg,
    ))?;

    let in_log_distance = |a: Abscissa| {
        let s = a.x;
        let d = (-s).exp();
        log_f(Abscissa {
            x: upper - d,
            from_lower: width - d,
            to_upper: d,
        }) - s
    };
    let s0 = -offset.ln();
    let mut cuts = vec![s0];
    for c in [s0 + 40.0, BOUNDARY_SPLIT, BOUNDARY_LOG_DISTANCE] {
        if c > *cuts.last().expect("nonempty") + 1.0 {
            cuts.push(c);
        }
    }
    let mut total = head;
    let mut far = None;
    for pair in cuts.windows(2) {
        let piece = accept_unconverged(integrate_singular(in_log_distance, pair[0], pair[1], cfg))?;
        total = total.combine(&piece);
        far = Some(piece);
    }
    let far = far.expect("at least one log-distance panel");

    if total.ln_value() > DIVERGENCE_THRESHOLD.ln() {
        return Err(Error::Divergent(format!(
            "integral exceeds {DIVERGENCE_THRESHOLD:e} approaching {upper}"
        )));
    }
    let tol = cfg.abs_tol.max(cfg.rel_tol * total.value);
    if far.ln_value() > tol.ln() {
        return Err(Error::Divergent(format!(
            "mass within e^-{BOUNDARY_SPLIT} of {upper} is {:e}",
            far.value
        )));
    }
    Ok(total)
}

fn accept_unconverged(r: Result<QuadratureResult>) -> Result<QuadratureResult> {
    match r {
        Err(Error::NonConvergence(best)) => Ok(*best),
        other => other,
    }
}
