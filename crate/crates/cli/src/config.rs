//! Run configuration shared by the flag parser and the `run` replay command.

use std::path::PathBuf;

use anyhow::{bail, Context};
use ratdiff_core::{normalize, validate_params, NormalizedEquation};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the default tolerance of every command.
pub const TOL_ENV: &str = "RATDIFF_TOL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Forbidden,
    Stability,
    Cycles,
    Sweep,
}

impl CommandKind {
    /// Tolerance used when neither `--tol` nor the environment supplies one.
    pub fn default_tol(self) -> f64 {
        match self {
            CommandKind::Simulate => ratdiff_core::DEFAULT_BLOWUP_TOL,
            // windows typed as decimals carry about nine digits
            CommandKind::Forbidden => 1e-8,
            CommandKind::Stability => ratdiff_core::stability::DEFAULT_UNIT_MARGIN,
            CommandKind::Cycles => ratdiff_core::semiconjugacy::DEFAULT_CYCLE_TOL,
            CommandKind::Sweep => 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Either the raw coefficients or the normal form. Exactly one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "ParamsRepr")]
pub enum Params {
    Raw {
        alpha: f64,
        beta: f64,
        gamma: f64,
        k: i64,
    },
    Normalized {
        c: f64,
        k: i64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    c: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    k: i64,
}

impl TryFrom<ParamsRepr> for Params {
    type Error = String;

    fn try_from(r: ParamsRepr) -> Result<Self, String> {
        match (r.c, r.alpha, r.beta, r.gamma) {
            (Some(c), None, None, None) => Ok(Params::Normalized { c, k: r.k }),
            (None, Some(alpha), Some(beta), Some(gamma)) => Ok(Params::Raw {
                alpha,
                beta,
                gamma,
                k: r.k,
            }),
            _ => Err("params need either c or all of alpha, beta, gamma".into()),
        }
    }
}

impl Params {
    pub fn equation(&self) -> ratdiff_core::Result<NormalizedEquation> {
        match *self {
            Params::Raw {
                alpha,
                beta,
                gamma,
                k,
            } => Ok(normalize(&validate_params(alpha, beta, gamma, k)?)),
            Params::Normalized { c, k } => {
                if k < 1 {
                    return Err(ratdiff_core::Error::InvalidOrder(k));
                }
                NormalizedEquation::new(c, k as usize)
            }
        }
    }

    pub fn k(&self) -> i64 {
        match *self {
            Params::Raw { k, .. } | Params::Normalized { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl SweepRange {
    /// `from, from + step, ...` up to and including `to` (within rounding).
    pub fn grid(&self) -> anyhow::Result<Vec<f64>> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            bail!("--c-step must be positive");
        }
        if !(self.from > 0.0) || !(self.to >= self.from) || !self.to.is_finite() {
            bail!("c range must satisfy 0 < c-from <= c-to");
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize;
        Ok((0..=count)
            .map(|i| self.from + i as f64 * self.step)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub params: Params,
    /// Oldest-first window, in the coordinates of `params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRange>,
    #[serde(default)]
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file. Accepts either a bare config object or any JSON
    /// document this tool emitted, which embeds its config under `"config"`.
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value)
            .with_context(|| format!("invalid config in {}", path.display()))
    }

    /// The window checked against the equation's order.
    pub fn window_for(&self, eq: &NormalizedEquation) -> anyhow::Result<Vec<f64>> {
        let window = self
            .window
            .as_ref()
            .context("an initial window is required (--init / --window)")?;
        if window.len() != eq.order() {
            bail!(
                "window has {} values but k = {} needs {}",
                window.len(),
                eq.k(),
                eq.order()
            );
        }
        if window.iter().any(|v| !v.is_finite()) {
            bail!("window entries must be finite");
        }
        Ok(window.clone())
    }
}

/// Resolves the tolerance: explicit flag, then the environment, then the
/// command default.
pub fn resolve_tol(kind: CommandKind, flag: Option<f64>) -> anyhow::Result<f64> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(raw) => raw
                .trim()
                .parse::<f64>()
                .with_context(|| format!("{TOL_ENV}={raw:?} is not a number"))?,
            Err(_) => kind.default_tol(),
        },
    };
    if !(tol > 0.0) || !tol.is_finite() {
        bail!("tolerance must be a positive finite number, got {tol}");
    }
    Ok(tol)
}
