//! Subcommand execution. Every command turns a [`RunConfig`] into the text to
//! emit plus an exit code.

use std::fmt::Write as _;

use anyhow::anyhow;
use ratdiff_core::semiconjugacy::RiccatiMap;
use ratdiff_core::stability::DEFAULT_ROOT_TOL;
use ratdiff_core::{
    analyze_convergence, char_poly_origin, char_poly_positive, detect_cycle, equilibria,
    is_forbidden, iterate, positive_eq_roots_factored, semistability_1d, verify_kp1_cycle,
    CycleReport, EquilibriumKind, ForbiddenVerdict, NormalizedEquation, RegimeReport, RootAnalysis,
    Semistability, Termination, DEFAULT_HORIZON,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CommandKind, Format, Params, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_BLOWUP: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            error,
        }
    }
}

impl From<ratdiff_core::Error> for Failure {
    fn from(e: ratdiff_core::Error) -> Self {
        use ratdiff_core::Error as E;
        let code = match e {
            E::ForbiddenBlowup { .. } | E::RiccatiBlowup { .. } => EXIT_BLOWUP,
            E::AmbiguousNearAccumulation { .. }
            | E::ConvergenceFailure { .. }
            | E::Overflow { .. } => EXIT_INCONCLUSIVE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

pub struct Emission {
    pub body: String,
    pub code: u8,
}

/// Doubles are written with 17 significant digits so they parse back to the
/// same bits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn csv_line(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

#[derive(Serialize)]
struct EquationInfo {
    c: f64,
    k: usize,
    scale: f64,
}

impl From<&NormalizedEquation> for EquationInfo {
    fn from(eq: &NormalizedEquation) -> Self {
        Self {
            c: eq.c(),
            k: eq.k(),
            scale: eq.scale(),
        }
    }
}

fn header(eq: &NormalizedEquation) -> String {
    format!(
        "# c={} k={} scale={}\n",
        num(eq.c()),
        eq.k(),
        num(eq.scale())
    )
}

pub fn execute(cfg: &RunConfig) -> Result<Emission, Failure> {
    let eq = cfg.params.equation()?;
    match cfg.command {
        CommandKind::Simulate => simulate(cfg, &eq),
        CommandKind::Forbidden => forbidden(cfg, &eq),
        CommandKind::Stability => stability(cfg, &eq),
        CommandKind::Cycles => cycles(cfg, &eq),
        CommandKind::Sweep => sweep(cfg),
    }
}

/// Window in normal-form coordinates.
fn normal_window(cfg: &RunConfig, eq: &NormalizedEquation) -> Result<Vec<f64>, Failure> {
    Ok(cfg
        .window_for(eq)?
        .into_iter()
        .map(|x| eq.to_normal(x))
        .collect())
}

#[derive(Serialize)]
struct SimulateDoc<'a> {
    config: &'a RunConfig,
    equation: EquationInfo,
    /// `x[-k], ..., x[N]` in the coordinates of the supplied parameters.
    values: Vec<f64>,
    terminated_early: Option<Termination>,
}

fn simulate(cfg: &RunConfig, eq: &NormalizedEquation) -> Result<Emission, Failure> {
    let steps = cfg.steps.ok_or_else(|| anyhow!("--steps is required"))?;
    let w0 = normal_window(cfg, eq)?;
    let traj = iterate(eq, &w0, steps, cfg.tol)?;
    let code = match traj.terminated_early() {
        None => EXIT_OK,
        Some(Termination::ForbiddenBlowup { .. }) => EXIT_BLOWUP,
        Some(Termination::NonFinite { .. }) => EXIT_INCONCLUSIVE,
    };
    let values: Vec<f64> = traj.values().iter().map(|&y| eq.to_raw(y)).collect();
    let body = match cfg.format {
        Format::Json => json(&SimulateDoc {
            config: cfg,
            equation: eq.into(),
            values,
            terminated_early: traj.terminated_early(),
        })?,
        Format::Csv => {
            let mut out = header(eq);
            match traj.terminated_early() {
                Some(Termination::ForbiddenBlowup { step }) => {
                    writeln!(out, "# terminated_early={step} cause=forbidden_blowup").unwrap()
                }
                Some(Termination::NonFinite { step }) => {
                    writeln!(out, "# terminated_early={step} cause=non_finite").unwrap()
                }
                None => {}
            }
            out.push_str("n,x\n");
            for (i, x) in values[eq.order()..].iter().enumerate() {
                csv_line(&mut out, &[(i + 1).to_string(), num(*x)]);
            }
            out
        }
    };
    Ok(Emission { body, code })
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ForbiddenOutcome {
    Decided {
        #[serde(flatten)]
        verdict: ForbiddenVerdict,
        predicted_blowup_step: Option<usize>,
    },
    AmbiguousNearAccumulation {
        product: f64,
        accumulation: f64,
        band: f64,
    },
}

#[derive(Serialize)]
struct ForbiddenDoc<'a> {
    config: &'a RunConfig,
    equation: EquationInfo,
    horizon: usize,
    result: ForbiddenOutcome,
}

fn forbidden(cfg: &RunConfig, eq: &NormalizedEquation) -> Result<Emission, Failure> {
    let w = normal_window(cfg, eq)?;
    let horizon = cfg.horizon.unwrap_or(DEFAULT_HORIZON);
    let (result, code) = match is_forbidden(eq, &w, horizon, cfg.tol) {
        Ok(verdict) => (
            ForbiddenOutcome::Decided {
                predicted_blowup_step: verdict.predicted_blowup_step(),
                verdict,
            },
            EXIT_OK,
        ),
        Err(ratdiff_core::Error::AmbiguousNearAccumulation {
            product,
            accumulation,
            band,
        }) => (
            ForbiddenOutcome::AmbiguousNearAccumulation {
                product,
                accumulation,
                band,
            },
            EXIT_INCONCLUSIVE,
        ),
        Err(e) => return Err(e.into()),
    };
    let body = match cfg.format {
        Format::Json => json(&ForbiddenDoc {
            config: cfg,
            equation: eq.into(),
            horizon,
            result,
        })?,
        Format::Csv => {
            let mut out = header(eq);
            out.push_str("status,member,witness_m,threshold,product,distance\n");
            match result {
                ForbiddenOutcome::Decided { verdict, .. } => csv_line(
                    &mut out,
                    &[
                        "decided".into(),
                        verdict.member.to_string(),
                        verdict.witness_m.map(|m| m.to_string()).unwrap_or_default(),
                        opt_num(verdict.threshold_value),
                        num(verdict.product),
                        num(verdict.distance),
                    ],
                ),
                ForbiddenOutcome::AmbiguousNearAccumulation {
                    product,
                    accumulation,
                    ..
                } => csv_line(
                    &mut out,
                    &[
                        "ambiguous_near_accumulation".into(),
                        String::new(),
                        String::new(),
                        num(accumulation),
                        num(product),
                        num((product - accumulation).abs()),
                    ],
                ),
            }
            out
        }
    };
    Ok(Emission { body, code })
}

#[derive(Serialize)]
struct RootEntry {
    re: f64,
    im: f64,
    modulus: f64,
    residual: f64,
}

#[derive(Serialize)]
struct EquilibriumEntry {
    kind: EquilibriumKind,
    /// In the coordinates of the supplied parameters.
    value: f64,
    char_poly: Vec<f64>,
    roots: Vec<RootEntry>,
    max_modulus: f64,
    verdict: ratdiff_core::Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    factored_roots: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct StabilityDoc<'a> {
    config: &'a RunConfig,
    equation: EquationInfo,
    equilibria: Vec<EquilibriumEntry>,
    /// One-sided stability of the factor map's fixed point 0.
    factor_origin: Semistability,
}

fn stability(cfg: &RunConfig, eq: &NormalizedEquation) -> Result<Emission, Failure> {
    let mut entries = Vec::new();
    for e in equilibria(eq) {
        let (poly, factored) = match e.kind {
            EquilibriumKind::Origin => (char_poly_origin(eq), None),
            EquilibriumKind::Positive => (
                char_poly_positive(eq)?,
                Some(
                    positive_eq_roots_factored(eq)?
                        .into_iter()
                        .map(|z| [z.re, z.im])
                        .collect(),
                ),
            ),
        };
        let analysis = RootAnalysis::of(&poly, DEFAULT_ROOT_TOL, cfg.tol)?;
        entries.push(EquilibriumEntry {
            kind: e.kind,
            value: eq.to_raw(e.value),
            char_poly: poly.coefficients().to_vec(),
            roots: analysis
                .roots
                .iter()
                .zip(&analysis.residuals)
                .map(|(z, r)| RootEntry {
                    re: z.re,
                    im: z.im,
                    modulus: z.norm(),
                    residual: *r,
                })
                .collect(),
            max_modulus: analysis.max_modulus,
            verdict: analysis.verdict,
            factored_roots: factored,
        });
    }
    let factor_origin = semistability_1d(&RiccatiMap { c: eq.c() }, 0.0, cfg.tol)?;
    let body = match cfg.format {
        Format::Json => json(&StabilityDoc {
            config: cfg,
            equation: eq.into(),
            equilibria: entries,
            factor_origin,
        })?,
        Format::Csv => {
            let mut out = header(eq);
            out.push_str("equilibrium,value,verdict,root,re,im,modulus\n");
            for e in &entries {
                let kind = serde_json::to_value(e.kind).map_err(anyhow::Error::from)?;
                let verdict = serde_json::to_value(e.verdict).map_err(anyhow::Error::from)?;
                for (i, r) in e.roots.iter().enumerate() {
                    csv_line(
                        &mut out,
                        &[
                            kind.as_str().unwrap_or_default().to_string(),
                            num(e.value),
                            verdict.as_str().unwrap_or_default().to_string(),
                            i.to_string(),
                            num(r.re),
                            num(r.im),
                            num(r.modulus),
                        ],
                    );
                }
            }
            out
        }
    };
    Ok(Emission {
        body,
        code: EXIT_OK,
    })
}

#[derive(Serialize)]
struct CyclesDoc<'a> {
    config: &'a RunConfig,
    equation: EquationInfo,
    report: CycleReport,
}

fn cycles(cfg: &RunConfig, eq: &NormalizedEquation) -> Result<Emission, Failure> {
    let w0 = normal_window(cfg, eq)?;
    let steps = cfg.steps.unwrap_or(0);
    let report = if steps == 0 {
        verify_kp1_cycle(eq, &w0, cfg.tol)?
    } else {
        let traj = iterate(eq, &w0, steps, ratdiff_core::DEFAULT_BLOWUP_TOL)?;
        match traj.terminated_early() {
            Some(Termination::ForbiddenBlowup { step }) => {
                return Err(ratdiff_core::Error::ForbiddenBlowup { step }.into())
            }
            Some(Termination::NonFinite { step }) => {
                return Err(ratdiff_core::Error::Overflow { step }.into())
            }
            None => detect_cycle(&traj, cfg.tol)?,
        }
    };
    let body = match cfg.format {
        Format::Json => json(&CyclesDoc {
            config: cfg,
            equation: eq.into(),
            report,
        })?,
        Format::Csv => {
            let mut out = header(eq);
            let mut cols: Vec<String> = ["is_cycle", "period", "fiber_value", "max_deviation"]
                .map(String::from)
                .to_vec();
            cols.extend((0..eq.order()).map(|i| format!("w{i}")));
            csv_line(&mut out, &cols);
            let mut row = vec![
                report.is_cycle.to_string(),
                report.period.to_string(),
                num(report.fiber_value),
                num(report.max_deviation),
            ];
            row.extend(report.cycle_window.iter().map(|&x| num(x)));
            csv_line(&mut out, &row);
            out
        }
    };
    Ok(Emission {
        body,
        code: EXIT_OK,
    })
}

#[derive(Serialize)]
struct SweepRow {
    c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<RegimeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip)]
    blowup: bool,
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    config: &'a RunConfig,
    rows: Vec<SweepRow>,
}

fn sweep(cfg: &RunConfig) -> Result<Emission, Failure> {
    let k = cfg.params.k();
    let range = cfg
        .sweep
        .ok_or_else(|| anyhow!("sweep needs --c-from, --c-to and --c-step"))?;
    if !matches!(cfg.params, Params::Normalized { .. }) {
        return Err(anyhow!("sweep takes --k with a c range, not alpha/beta/gamma").into());
    }
    let steps = cfg.steps.ok_or_else(|| anyhow!("--steps is required"))?;
    let grid = range.grid()?;
    let probe = Params::Normalized { c: grid[0], k }.equation()?;
    let w0 = cfg.window_for(&probe)?;

    // rows are independent; collect() keeps them in grid order
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&c| {
            let eq = match (Params::Normalized { c, k }).equation() {
                Ok(eq) => eq,
                Err(e) => {
                    return SweepRow {
                        c,
                        report: None,
                        error: Some(e.to_string()),
                        blowup: false,
                    }
                }
            };
            match analyze_convergence(&eq, &w0, steps, cfg.tol) {
                Ok(report) => SweepRow {
                    c,
                    report: Some(report),
                    error: None,
                    blowup: false,
                },
                Err(e) => SweepRow {
                    c,
                    blowup: matches!(e, ratdiff_core::Error::ForbiddenBlowup { .. }),
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let code = if rows.iter().any(|r| r.blowup) {
        EXIT_BLOWUP
    } else if rows.iter().any(|r| r.error.is_some()) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    };
    let body = match cfg.format {
        Format::Json => json(&SweepDoc { config: cfg, rows })?,
        Format::Csv => {
            let mut out = format!("# k={k}\n");
            out.push_str("c,regime,limit_kind,fiber_gap,rate_estimate,out_of_hypothesis,error\n");
            for row in &rows {
                let fields = match &row.report {
                    Some(r) => vec![
                        num(row.c),
                        format!("{:?}", r.regime),
                        serde_json::to_value(r.limit_kind)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default(),
                        num(r.fiber_gap),
                        opt_num(r.rate_estimate),
                        r.out_of_hypothesis.to_string(),
                        String::new(),
                    ],
                    None => vec![
                        num(row.c),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!(
                            "\"{}\"",
                            row.error.as_deref().unwrap_or("").replace('"', "'")
                        ),
                    ],
                };
                csv_line(&mut out, &fields);
            }
            out
        }
    };
    Ok(Emission { body, code })
}
