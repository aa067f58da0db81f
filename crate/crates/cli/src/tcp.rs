//! `tcp-dist` and `validate`.

use clap::{Args, ValueEnum};
use fluidtcp::tcp_finite::{solve_finite_distribution, FiniteBufferParams, FiniteBufferSolution, DEFAULT_HEADROOM};
use fluidtcp::tcp_infinite::{AnalyticWindowDistribution, TcpParams, Variant};
use fluidtcp::window_sim::{compare_histogram, simulate, BinSpec, FiniteFrfrLaw, FiniteWindowLaw, SimConfig, SimResult, WindowLaw, MIN_EVENTS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{resolve, row, Meta, Table};
use crate::{report_written, CliError, Ctx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Linear,
    Log,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct TcpDistFlags {
    /// Loss ratio p = lambda / alpha (required).
    #[arg(long)]
    p: Option<f64>,
    /// Window growth exponent.
    #[arg(long)]
    m: Option<f64>,
    /// Additive increase rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Multiplicative decrease factor.
    #[arg(long)]
    beta: Option<f64>,
    /// Router buffer in packets; omit for an infinite buffer.
    #[arg(long)]
    buffer: Option<f64>,
    /// Packets in flight on top of the buffer at the limit.
    #[arg(long)]
    headroom: Option<f64>,
    /// Bandwidth-delay product 2 alpha D in packets.
    #[arg(long)]
    bdp: Option<f64>,
    /// plain, frfr or wan.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, value_enum)]
    grid: Option<Grid>,
    /// Grid points.
    #[arg(long)]
    points: Option<usize>,
    /// Lower end of a log grid (default w_max * 1e-4).
    #[arg(long)]
    w_min: Option<f64>,
    /// Upper end of the grid (default: the window limit, or the far tail).
    #[arg(long)]
    w_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcpDistParams {
    pub p: Option<f64>,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub buffer: Option<f64>,
    pub headroom: f64,
    pub bdp: f64,
    pub variant: Variant,
    pub grid: Grid,
    pub points: usize,
    pub w_min: Option<f64>,
    pub w_max: Option<f64>,
}

impl Default for TcpDistParams {
    fn default() -> Self {
        TcpDistParams {
            p: None,
            m: 1.0,
            alpha: 1.0,
            beta: 0.5,
            buffer: None,
            headroom: DEFAULT_HEADROOM,
            bdp: 0.0,
            variant: Variant::Plain,
            grid: Grid::Linear,
            points: 201,
            w_min: None,
            w_max: None,
        }
    }
}

fn tcp_params(p: f64, m: f64, alpha: f64, beta: f64, bdp: f64) -> Result<TcpParams, CliError> {
    if !(alpha > 0.0) {
        return Err(CliError::Config(format!("alpha must be positive, got {alpha}")));
    }
    if !(bdp >= 0.0) {
        return Err(CliError::Config(format!("bdp must be non-negative, got {bdp}")));
    }
    Ok(TcpParams::new(m, alpha, beta, p * alpha)?.with_delay(bdp / (2.0 * alpha))?)
}

fn make_grid(kind: Grid, points: usize, w_min: Option<f64>, w_max: f64) -> Result<Vec<f64>, CliError> {
    if points < 2 {
        return Err(CliError::Config(format!("a grid needs at least 2 points, got {points}")));
    }
    if !(w_max > 0.0) || !w_max.is_finite() {
        return Err(CliError::Config(format!("w_max must be positive and finite, got {w_max}")));
    }
    let last = (points - 1) as f64;
    match kind {
        Grid::Linear => Ok((0..points).map(|i| w_max * i as f64 / last).collect()),
        Grid::Log => {
            let lo = w_min.unwrap_or(w_max * 1e-4);
            if !(lo > 0.0 && lo < w_max) {
                return Err(CliError::Config(format!("log grid needs 0 < w_min < w_max, got w_min={lo}")));
            }
            let r = (w_max / lo).ln();
            Ok((0..points).map(|i| if i + 1 == points { w_max } else { lo * (r * i as f64 / last).exp() }).collect())
        }
    }
}

/// Mean, standard deviation and second moment from the first two raw moments.
fn moments(m1: f64, m2: f64) -> Value {
    json!({ "mean": m1, "std_dev": (m2 - m1 * m1).max(0.0).sqrt(), "second": m2 })
}

fn finite_ccdf(law: &dyn WindowLaw, limit: f64, w: f64) -> Result<f64, CliError> {
    let cont = if w < limit { law.mass(w, limit)? } else { 0.0 };
    let atom = law.atom().filter(|&(at, _)| at >= w).map_or(0.0, |(_, weight)| weight);
    Ok(cont + atom)
}

pub fn tcp_dist(ctx: &Ctx, flags: &TcpDistFlags) -> Result<(), CliError> {
    let params: TcpDistParams = resolve(ctx.config.as_deref(), flags)?;
    let Some(p) = params.p else {
        return Err(CliError::Usage { subcommand: "tcp-dist", message: "the loss ratio --p is required".into() });
    };
    let tcp = tcp_params(p, params.m, params.alpha, params.beta, params.bdp)?;
    let mut sink = ctx.sink(Meta::new("tcp-dist", None, &params))?;
    let mut table = Table::new("tcp_dist", &["w", "pdf", "ccdf"]);
    let summary = match params.buffer {
        None => {
            let law = AnalyticWindowDistribution::new(tcp, params.variant)?;
            let grid = make_grid(params.grid, params.points, params.w_min, params.w_max.unwrap_or(law.upper_limit()))?;
            for [w, pdf, ccdf] in law.table(&grid)? {
                table.push(row![w, pdf, ccdf]);
            }
            json!({
                "variant": params.variant,
                "buffer": null,
                "lambda": tcp.lambda,
                "lambda_eff": tcp.lambda,
                "A": 0.0,
                "moments": moments(law.mean()?, law.moment(2.0)?),
                "atom": null,
            })
        }
        Some(buffer) => {
            if params.variant == Variant::Wan {
                return Err(CliError::Config("the wan variant has no finite-buffer law; drop --buffer or pick plain/frfr".into()));
            }
            let fb = FiniteBufferParams::with_headroom(tcp, buffer, params.headroom)?;
            let sol = solve_finite_distribution(&fb)?;
            let frfr = params.variant == Variant::Frfr;
            let grid = make_grid(params.grid, params.points, params.w_min, params.w_max.unwrap_or(sol.limit))?;
            let plain_law = FiniteWindowLaw(&sol);
            let frfr_law = FiniteFrfrLaw::new(&sol)?;
            let law: &dyn WindowLaw = if frfr { &frfr_law } else { &plain_law };
            let norm = sol.frfr_normalizer()?;
            for &w in &grid {
                let pdf = if frfr { sol.frfr_pdf_with_normalizer(w, norm).density } else { sol.pdf(w) };
                table.push(row![w, pdf, finite_ccdf(law, sol.limit, w)?]);
            }
            let (m1, m2) = if frfr { (sol.frfr_moment(1.0)?, sol.frfr_moment(2.0)?) } else { (sol.moment(1.0)?, sol.moment(2.0)?) };
            let s = sol.summary()?;
            json!({
                "variant": params.variant,
                "buffer": buffer,
                "lambda": tcp.lambda,
                "lambda_eff": s.lambda_eff,
                "A": s.a,
                "x": s.x,
                "c": s.c,
                "B_eff": s.b_eff,
                "moments": moments(m1, m2),
                "atom": law.atom().map(|(at, weight)| json!({ "at": at, "weight": weight })),
            })
        }
    };
    sink.table(&table)?;
    println!("tcp-dist: E[W] = {}, A = {}", summary["moments"]["mean"], summary["A"]);
    sink.summary("tcp_dist_summary", summary)?;
    report_written(&sink);
    Ok(())
}

/// One simulator-versus-law comparison of the validation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    Plain,
    Frfr,
    Wan,
    Finite,
    FiniteFrfr,
}

impl Case {
    fn name(self) -> &'static str {
        match self {
            Case::Plain => "plain",
            Case::Frfr => "frfr",
            Case::Wan => "wan",
            Case::Finite => "finite",
            Case::FiniteFrfr => "finite-frfr",
        }
    }

    fn finite(self) -> bool {
        matches!(self, Case::Finite | Case::FiniteFrfr)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ValidateFlags {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Decrease factor used by the simulator.
    #[arg(long)]
    beta: Option<f64>,
    /// Decrease factor used by the analytic law (default: --beta).
    #[arg(long)]
    model_beta: Option<f64>,
    /// Router buffer in packets for the finite cases.
    #[arg(long)]
    buffer: Option<f64>,
    #[arg(long)]
    headroom: Option<f64>,
    /// Bandwidth-delay product for the wan case.
    #[arg(long)]
    bdp: Option<f64>,
    /// Comma-separated cases to run.
    #[arg(long, value_enum, value_delimiter = ',')]
    cases: Option<Vec<Case>>,
    /// Loss events recorded per realization.
    #[arg(long)]
    events: Option<u64>,
    /// Independent realizations per case, merged in index order.
    #[arg(long)]
    realizations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Smallest accepted chi-square p-value.
    #[arg(long)]
    min_p_value: Option<f64>,
    /// Largest accepted Kolmogorov-Smirnov distance.
    #[arg(long)]
    max_ks: Option<f64>,
    /// Largest accepted |N_buffer/N - A|.
    #[arg(long)]
    max_a_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateParams {
    pub p: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub model_beta: Option<f64>,
    pub buffer: f64,
    pub headroom: f64,
    pub bdp: f64,
    pub cases: Vec<Case>,
    pub events: u64,
    pub realizations: u64,
    pub seed: u64,
    pub bins: usize,
    pub min_p_value: f64,
    pub max_ks: f64,
    pub max_a_error: f64,
}

impl Default for ValidateParams {
    fn default() -> Self {
        ValidateParams {
            p: 0.01,
            m: 1.0,
            alpha: 1.0,
            beta: 0.5,
            model_beta: None,
            buffer: 60.0,
            headroom: DEFAULT_HEADROOM,
            bdp: 0.0,
            cases: vec![Case::Plain, Case::Frfr, Case::Finite, Case::FiniteFrfr],
            events: 100_000,
            realizations: 1,
            seed: 1,
            bins: 100,
            min_p_value: 0.01,
            max_ks: 0.05,
            max_a_error: 0.02,
        }
    }
}

struct CaseSetup {
    case: Case,
    sim: SimConfig,
    law: AnalyticWindowDistribution,
    finite: Option<FiniteBufferSolution>,
}

fn setup(params: &ValidateParams, case: Case) -> Result<CaseSetup, CliError> {
    let bdp = if case == Case::Wan { params.bdp } else { 0.0 };
    if case == Case::Wan && !(bdp > 0.0) {
        return Err(CliError::Config("the wan case needs --bdp > 0".into()));
    }
    let sim_tcp = tcp_params(params.p, params.m, params.alpha, params.beta, bdp)?;
    let model_tcp = tcp_params(params.p, params.m, params.alpha, params.model_beta.unwrap_or(params.beta), bdp)?;
    let variant = match case {
        Case::Plain | Case::Finite => Variant::Plain,
        Case::Frfr | Case::FiniteFrfr => Variant::Frfr,
        Case::Wan => Variant::Wan,
    };
    let law = AnalyticWindowDistribution::new(model_tcp, variant)?;
    let (mut sim, finite) = if case.finite() {
        let sim_fb = FiniteBufferParams::with_headroom(sim_tcp, params.buffer, params.headroom)?;
        let model_fb = FiniteBufferParams::with_headroom(model_tcp, params.buffer, params.headroom)?;
        let sol = solve_finite_distribution(&model_fb)?;
        let mut c = SimConfig::finite(&sim_fb, params.events, params.seed);
        c.bins = Some(BinSpec::new(sol.limit, params.bins)?);
        (c, Some(sol))
    } else {
        let mut c = SimConfig::new(sim_tcp, None, params.events, params.seed);
        c.bins = Some(BinSpec::new(0.5 * law.upper_limit(), params.bins)?);
        (c, None)
    };
    sim.frfr = variant != Variant::Plain;
    sim.wan_idle = case == Case::Wan;
    Ok(CaseSetup { case, sim, law, finite })
}

/// Disjoint stream block per case, so a case's result does not depend on
/// which other cases run.
fn stream(case: Case, realization: u64) -> u64 {
    ((case as u64) << 32) | realization
}

pub fn validate(ctx: &Ctx, flags: &ValidateFlags) -> Result<(), CliError> {
    let mut params: ValidateParams = resolve(ctx.config.as_deref(), flags)?;
    if params.events < MIN_EVENTS {
        return Err(CliError::Config(format!("--events must be at least {MIN_EVENTS}, got {}", params.events)));
    }
    if params.realizations == 0 || params.realizations > u32::MAX as u64 {
        return Err(CliError::Config(format!("--realizations must lie in [1, 2^32), got {}", params.realizations)));
    }
    if params.cases.is_empty() {
        return Err(CliError::Config("no validation cases selected".into()));
    }
    params.cases.sort();
    params.cases.dedup();
    let setups = params.cases.iter().map(|&c| setup(&params, c)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..setups.len()).flat_map(|k| (0..params.realizations).map(move |r| (k, r))).collect();
    let runs: Vec<SimResult> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let mut c = setups[k].sim.clone();
            c.stream = stream(setups[k].case, r);
            simulate(&c)
        })
        .collect::<Result<_, _>>()?;

    let mut sink = ctx.sink(Meta::new("validate", Some(params.seed), &params))?;
    let mut table = Table::new(
        "validate_report",
        &[
            "case", "events", "chi2", "dof", "p_value", "ks", "mean_sim", "mean_model", "buffer_loss_fraction", "a_model", "a_error",
            "pass",
        ],
    );
    let mut failures = Vec::new();
    let per_case = params.realizations as usize;
    for (k, s) in setups.iter().enumerate() {
        let chunk = &runs[k * per_case..(k + 1) * per_case];
        let mut merged = chunk[0].clone();
        for r in &chunk[1..] {
            merged = merged.merge(r)?;
        }
        let (gof, mean_model, a_model) = match &s.finite {
            Some(sol) => {
                let (g, mean) = if s.case == Case::FiniteFrfr {
                    (compare_histogram(&merged, &FiniteFrfrLaw::new(sol)?)?, sol.frfr_moment(1.0)?)
                } else {
                    (compare_histogram(&merged, &FiniteWindowLaw(sol))?, sol.moment(1.0)?)
                };
                (g, mean, Some(sol.a))
            }
            None => (compare_histogram(&merged, &s.law)?, s.law.mean()?, None),
        };
        let frac = merged.buffer_loss_fraction();
        let a_error = a_model.map(|a| (frac - a).abs());
        let mut reasons = Vec::new();
        if !(gof.p_value >= params.min_p_value) {
            reasons.push(format!("p-value {:.4} < {}", gof.p_value, params.min_p_value));
        }
        if !(gof.ks <= params.max_ks) {
            reasons.push(format!("KS {:.4} > {}", gof.ks, params.max_ks));
        }
        if let Some(e) = a_error.filter(|e| !(*e <= params.max_a_error)) {
            reasons.push(format!("|N_buf/N - A| {e:.4} > {}", params.max_a_error));
        }
        let pass = reasons.is_empty();
        println!(
            "{:<12} p-value {:.4}  KS {:.4}  E[W] sim {:.4} model {:.4}  {}",
            s.case.name(),
            gof.p_value,
            gof.ks,
            merged.mean_window(),
            mean_model,
            if pass { "PASS".to_string() } else { format!("FAIL ({})", reasons.join("; ")) }
        );
        if !pass {
            failures.push(format!("{}: {}", s.case.name(), reasons.join("; ")));
        }
        table.push(row![
            s.case.name(),
            merged.n_losses(),
            gof.chi2,
            gof.dof,
            gof.p_value,
            gof.ks,
            merged.mean_window(),
            mean_model,
            if s.case.finite() { Some(frac) } else { None },
            a_model,
            a_error,
            pass
        ]);
    }
    sink.table(&table)?;
    report_written(&sink);
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failures.join("; ")))
    }
}
