//! Path simulation of `X_t = x - beta int_0^t X_s ds + L_t` up to the first
//! passage over `b`.
//!
//! `PureJumpExact` is free of discretisation error: between jumps the path
//! is the ODE solution `m + (X_s - m) e^{-beta (t - s)}` with `m = c/beta`.
//! `DiffusionEuler` uses the exact OU transition on a time grid with jumps
//! at their exact epochs, plus an optional Brownian-bridge crossing check.
//!
//! Every path draws from its own ChaCha8 stream `(seed, path index)`, so the
//! sample vector does not depend on the number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_analytics::{ExitAnalytics, ExitProblem};
use crate::levy_model::{LevyModel, NegJumpLaw, PosJumpLaw};

const HORIZON_MEANS: f64 = 50.0;
const PILOT_PATHS: usize = 1000;
/// Pilot horizon in relaxation times `1/beta`.
const PILOT_HORIZON: f64 = 1e3;
const PILOT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const BISECTION_STEPS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMode {
    PureJumpExact,
    DiffusionEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub dt: f64,
    /// Censoring horizon; `None` picks 50 means (analytic, or from a pilot run).
    pub t_max: Option<f64>,
    pub bridge_correction: bool,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
    /// Diagnostic: drop all jumps so paths follow the ODE.
    pub suppress_jumps: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        SimConfig {
            n_paths,
            seed,
            mode: SimMode::PureJumpExact,
            dt: 1e-3,
            t_max: None,
            bridge_correction: true,
            workers: None,
            suppress_jumps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput {
                field: "n_paths",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput {
                field: "dt",
                reason: format!("must be finite and > 0 (got {})", self.dt),
            });
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::InvalidInput {
                    field: "t_max",
                    reason: format!("must be > 0 (got {t})"),
                });
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidInput {
                field: "workers",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitSample {
    pub tau: f64,
    /// `X_tau`; for a censored path the state at `t_max`.
    pub exit_value: f64,
    /// `exit_value - b`.
    pub overshoot: f64,
    /// `X_{tau-}`: the state before the crossing jump, or `exit_value` when
    /// the barrier was reached continuously or the path was censored.
    pub pre_exit_value: f64,
    pub censored: bool,
    pub n_jumps: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub samples: Vec<ExitSample>,
    pub t_max: f64,
}

impl SimulationRun {
    pub fn censored_fraction(&self) -> f64 {
        censored_fraction(&self.samples)
    }
}

pub fn censored_fraction(samples: &[ExitSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.censored).count() as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy)]
enum UpJump {
    Exponential { mean: f64 },
    Gamma(Gamma<f64>),
}

impl UpJump {
    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            UpJump::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
            UpJump::Gamma(g) => g.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum DownJump {
    Exponential { mean: f64 },
    Constant(f64),
}

impl DownJump {
    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            DownJump::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
            DownJump::Constant(d) => *d,
        }
    }
}

/// `m + (x0 - m) e^{-beta t}`, the jump-free path.
pub fn ode_solution(model: &LevyModel, x0: f64, t: f64) -> f64 {
    let m = model.relaxation_level();
    m + (x0 - m) * (-model.beta * t).exp()
}

/// Exact OU transition over `h` driven by the standard normal `z`.
pub fn diffusion_step(model: &LevyModel, x0: f64, h: f64, z: f64) -> f64 {
    let (decay, sd) = step_coefficients(model, h);
    let m = model.relaxation_level();
    m + (x0 - m) * decay + sd * z
}

fn step_coefficients(model: &LevyModel, h: f64) -> (f64, f64) {
    let beta = model.beta;
    let sd = model.volatility * (-(-2.0 * beta * h).exp_m1() / (2.0 * beta)).sqrt();
    ((-beta * h).exp(), sd)
}

#[derive(Debug, Clone)]
pub struct Simulator {
    problem: ExitProblem,
    cfg: SimConfig,
    t_max: f64,
    up: UpJump,
    down: DownJump,
    up_rate: f64,
    total_rate: f64,
}

impl Simulator {
    pub fn new(problem: ExitProblem, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let model = problem.model;
        model.validate()?;
        if cfg.mode == SimMode::PureJumpExact && model.volatility > 0.0 {
            return Err(Error::ModeMismatch {
                volatility: model.volatility,
            });
        }
        let up = match model.pos_jumps {
            PosJumpLaw::Exponential { rate } => UpJump::Exponential { mean: 1.0 / rate },
            PosJumpLaw::Gamma { shape } => UpJump::Gamma(Gamma::new(shape, 1.0).map_err(|e| Error::InvalidModel {
                field: "pos_jumps.shape",
                reason: e.to_string(),
            })?),
        };
        let down = match model.neg_jumps {
            Some(NegJumpLaw::Exponential { rate }) => DownJump::Exponential { mean: 1.0 / rate },
            Some(NegJumpLaw::Constant { size }) => DownJump::Constant(size),
            None => DownJump::Constant(0.0),
        };
        let (up_rate, total_rate) = if cfg.suppress_jumps {
            (0.0, 0.0)
        } else {
            (model.pos_intensity, model.total_jump_rate())
        };
        let mut sim = Simulator {
            problem,
            cfg,
            t_max: cfg.t_max.unwrap_or(f64::INFINITY),
            up,
            down,
            up_rate,
            total_rate,
        };
        if cfg.t_max.is_none() {
            sim.t_max = sim.default_horizon()?;
        }
        Ok(sim)
    }

    fn default_horizon(&self) -> Result<f64> {
        let analytic = ExitAnalytics::new(self.problem).and_then(|a| a.mean_exit());
        if let Ok(mean) = analytic {
            if mean.is_finite() && !self.cfg.suppress_jumps {
                return Ok(HORIZON_MEANS * mean);
            }
        }
        let mut pilot = self.clone();
        pilot.cfg.seed ^= PILOT_SALT;
        pilot.t_max = PILOT_HORIZON / self.problem.model.beta;
        let n = PILOT_PATHS.min(self.cfg.n_paths.max(1)).max(1);
        let taus: Vec<f64> = pilot.run_indices(n)?.iter().map(|s| s.tau).collect();
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        Ok(HORIZON_MEANS * mean)
    }

    pub fn problem(&self) -> &ExitProblem {
        &self.problem
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Path number `index`; a pure function of `(seed, index)`.
    pub fn sample(&self, index: u64) -> ExitSample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        match self.cfg.mode {
            SimMode::PureJumpExact => self.pure_jump_path(&mut rng),
            SimMode::DiffusionEuler => self.diffusion_path(&mut rng),
        }
    }

    pub fn run(&self) -> Result<SimulationRun> {
        Ok(SimulationRun {
            samples: self.run_indices(self.cfg.n_paths)?,
            t_max: self.t_max,
        })
    }

    fn run_indices(&self, n: usize) -> Result<Vec<ExitSample>> {
        run_in_pool(self.cfg.workers, || {
            (0..n as u64).into_par_iter().map(|i| self.sample(i)).collect()
        })
    }

    fn exit(&self, tau: f64, value: f64, pre: f64, n_jumps: u64) -> ExitSample {
        ExitSample {
            tau,
            exit_value: value,
            overshoot: value - self.problem.b,
            pre_exit_value: pre,
            censored: false,
            n_jumps,
        }
    }

    fn censored(&self, value: f64, n_jumps: u64) -> ExitSample {
        ExitSample {
            censored: true,
            ..self.exit(self.t_max, value, value, n_jumps)
        }
    }

    fn pure_jump_path(&self, rng: &mut ChaCha8Rng) -> ExitSample {
        let model = &self.problem.model;
        let (b, beta) = (self.problem.b, model.beta);
        let m = model.relaxation_level();
        let t_max = self.t_max;
        let creeping = m > b;
        let rate = self.total_rate;
        // with beta equal to the clock rate, e^{-beta dt} is the uniform itself
        let unit_decay = beta == rate;
        let up_only = self.up_rate == rate;
        let mut x = self.problem.x;
        let mut t = 0.0;
        let mut jumps = 0u64;
        loop {
            let u = 1.0 - rng.random::<f64>();
            let dt = if rate > 0.0 { -u.ln() / rate } else { f64::INFINITY };
            if creeping {
                let t_star = t + ((m - x) / (m - b)).ln() / beta;
                if t_star <= (t + dt).min(t_max) {
                    return self.exit(t_star, b, b, jumps);
                }
            }
            if t + dt >= t_max {
                return self.censored(m + (x - m) * (-beta * (t_max - t)).exp(), jumps);
            }
            let decay = if unit_decay { u } else { (-beta * dt).exp() };
            x = m + (x - m) * decay;
            t += dt;
            jumps += 1;
            if up_only || rng.random::<f64>() * rate < self.up_rate {
                let pre = x;
                x += self.up.sample(rng);
                if x >= b {
                    return self.exit(t, x, pre, jumps);
                }
            } else {
                x -= self.down.sample(rng);
            }
        }
    }

    fn diffusion_path(&self, rng: &mut ChaCha8Rng) -> ExitSample {
        let model = &self.problem.model;
        let b = self.problem.b;
        let m = model.relaxation_level();
        let s2 = model.volatility * model.volatility;
        let dt = self.cfg.dt;
        let full_step = step_coefficients(model, dt);
        let rate = self.total_rate;
        let t_max = self.t_max;
        let next_epoch = |rng: &mut ChaCha8Rng, t: f64| {
            if rate > 0.0 {
                t + rng.sample::<f64, _>(Exp1) / rate
            } else {
                f64::INFINITY
            }
        };
        let mut x = self.problem.x;
        let mut t = 0.0;
        let mut jumps = 0u64;
        let mut next_jump = next_epoch(rng, t);
        loop {
            let to_jump = next_jump - t;
            let to_end = t_max - t;
            let h = dt.min(to_jump).min(to_end);
            let (decay, sd) = if h == dt {
                full_step
            } else {
                step_coefficients(model, h)
            };
            let z: f64 = rng.sample(StandardNormal);
            let x1 = m + (x - m) * decay + sd * z;
            let crossed = x1 >= b
                || (self.cfg.bridge_correction && s2 > 0.0 && {
                    let p = (-2.0 * (b - x) * (b - x1) / (s2 * h)).exp();
                    rng.random::<f64>() < p
                });
            if crossed {
                let offset = if self.cfg.bridge_correction {
                    place_crossing(rng, x, x1, b, s2, h)
                } else {
                    h
                };
                return self.exit(t + offset, b, b, jumps);
            }
            x = x1;
            if h == to_end {
                return self.censored(x, jumps);
            }
            if h == to_jump {
                t = next_jump;
                jumps += 1;
                if rng.random::<f64>() * rate < self.up_rate {
                    let pre = x;
                    x += self.up.sample(rng);
                    if x >= b {
                        return self.exit(t, x, pre, jumps);
                    }
                } else {
                    x -= self.down.sample(rng);
                }
                next_jump = next_epoch(rng, t);
            } else {
                t += h;
            }
        }
    }
}

/// Offset in `(0, h]` of a crossing known to happen on a step from `x0` to
/// `x1`, found by halving the step with sampled bridge midpoints.
fn place_crossing(rng: &mut ChaCha8Rng, x0: f64, x1: f64, b: f64, s2: f64, h: f64) -> f64 {
    let cross_prob = |a: f64, c: f64, len: f64| {
        if a >= b || c >= b {
            1.0
        } else if s2 == 0.0 {
            0.0
        } else {
            (-2.0 * (b - a) * (b - c) / (s2 * len)).exp()
        }
    };
    let (mut lo, mut len, mut a, mut c) = (0.0, h, x0, x1);
    for _ in 0..BISECTION_STEPS {
        let half = 0.5 * len;
        let z: f64 = rng.sample(StandardNormal);
        let mid = 0.5 * (a + c) + (s2 * half * 0.5).sqrt() * z;
        if mid >= b {
            c = mid;
        } else {
            let p1 = cross_prob(a, mid, half);
            let p2 = cross_prob(mid, c, half);
            let either = p1 + p2 - p1 * p2;
            if rng.random::<f64>() * either < p1 {
                c = mid;
            } else {
                lo += half;
                a = mid;
            }
        }
        len = half;
    }
    lo + len
}

/// Runs `f` on a pool of `workers` threads, or on the ambient pool for `None`.
pub fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput {
                    field: "workers",
                    reason: e.to_string(),
                })?;
            Ok(pool.install(f))
        }
    }
}

/// Simulates `cfg.n_paths` independent exits in path-index order.
pub fn simulate_exit(problem: &ExitProblem, cfg: &SimConfig) -> Result<SimulationRun> {
    Simulator::new(*problem, *cfg)?.run()
}
