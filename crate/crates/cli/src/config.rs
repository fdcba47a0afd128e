//! Resolved run configuration. It is written as the leading comment of
//! every output so a run can be replayed from its own output file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use levy_ou_exit::levy_model::LevyModel;
use levy_ou_exit::simulator::SimConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_PREFIX: &str = "# config: ";

/// Evenly spaced grid written `a:b:n`; `n = 1` is the single point `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.end
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected a:b:n, got `{s}`"));
        };
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{p}` is not a finite number"))
        };
        let (start, end) = (num(a)?, num(b)?);
        let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a point count"))?;
        if n == 0 {
            return Err("grid needs n >= 1".into());
        }
        if start > end {
            return Err(format!("grid start {start} exceeds end {end}"));
        }
        Ok(Grid { start, end, n })
    }
}

impl TryFrom<String> for Grid {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> String {
        g.to_string()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.n)
    }
}

/// Subcommand parameters after defaults and environment are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Params {
    Phi {
        u_grid: Grid,
    },
    Laplace {
        x: f64,
        b: f64,
        mu_grid: Grid,
    },
    Mean {
        x: f64,
        b: f64,
    },
    Asymptotic {
        x: f64,
        b_grid: Grid,
    },
    Limit {
        x: f64,
        b: f64,
        z_grid: Grid,
    },
    Survival {
        x: f64,
        b: f64,
        t_grid: Grid,
        terms: usize,
    },
    Simulate {
        x: f64,
        b: f64,
        sim: SimConfig,
        summary: bool,
    },
    Validate {
        x: f64,
        b: f64,
        sim: SimConfig,
        mu: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_path: PathBuf,
    pub output_path: Option<PathBuf>,
    /// Model as parsed, so a replay does not depend on the file still existing.
    pub model: LevyModel,
    #[serde(flatten)]
    pub params: Params,
}

impl RunConfig {
    pub fn comment_line(&self) -> String {
        format!(
            "{CONFIG_PREFIX}{}",
            serde_json::to_string(self).expect("config serializes")
        )
    }

    /// Reads the config back from the first line of an output file.
    pub fn from_comment_line(line: &str) -> Result<Self, String> {
        let json = line
            .trim_end()
            .strip_prefix(CONFIG_PREFIX)
            .ok_or_else(|| format!("first line does not start with `{CONFIG_PREFIX}`"))?;
        serde_json::from_str(json).map_err(|e| format!("config comment: {e}"))
    }

    /// Worker count used for the whole run.
    pub fn workers(&self) -> Option<usize> {
        match &self.params {
            Params::Simulate { sim, .. } | Params::Validate { sim, .. } => sim.workers,
            _ => None,
        }
    }
}
