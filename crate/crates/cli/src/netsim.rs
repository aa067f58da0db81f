//! `netsim`: link-capacity strategies on an AIMD tree network.

use clap::Args;
use fluidtcp::aimd_net::{ordering_holds, CapacityStrategy, NetsimConfig, PerformanceReport, EXPECTED_ORDER};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{resolve, row, Meta, Table};
use crate::{report_written, CliError, Ctx};

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct NetsimFlags {
    /// `all` or a comma-separated list of uniform, maximum, minimum, product, mean_field.
    #[arg(long)]
    strategy: Option<String>,
    /// Mean link capacity in bits per second.
    #[arg(long)]
    mean_capacity: Option<f64>,
    #[arg(long)]
    flows: Option<usize>,
    /// Window decreases per flow to simulate.
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    warmup_epochs: Option<u64>,
    /// Vertices of the grown tree.
    #[arg(long)]
    nodes: Option<usize>,
    /// Attachment parameter of the tree.
    #[arg(long)]
    tree_alpha: Option<f64>,
    /// Loss propensity shared by all flows.
    #[arg(long)]
    pi: Option<f64>,
    /// Zero-weight floor of the degree-based strategies.
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail with exit code 3 unless the strategies rank in the expected order.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NetsimRun {
    pub strategy: String,
    pub check: bool,
    #[serde(flatten)]
    pub net: NetsimConfig,
}

impl Default for NetsimRun {
    fn default() -> Self {
        NetsimRun { strategy: "all".into(), check: false, net: NetsimConfig::default() }
    }
}

fn strategies(spec: &str) -> Result<Vec<CapacityStrategy>, CliError> {
    if spec == "all" {
        return Ok(CapacityStrategy::ALL.to_vec());
    }
    let mut v = spec.split(',').map(|s| s.trim().parse::<CapacityStrategy>()).collect::<Result<Vec<_>, _>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], u: f64) -> f64 {
    sorted[(u * (sorted.len() - 1) as f64).round() as usize]
}

pub fn netsim(ctx: &Ctx, flags: &NetsimFlags) -> Result<(), CliError> {
    let run: NetsimRun = resolve(ctx.config.as_deref(), flags)?;
    let chosen = strategies(&run.strategy)?;
    if run.check && chosen.len() != EXPECTED_ORDER.len() {
        return Err(CliError::Config("--check ranks all five strategies; use --strategy all".into()));
    }
    let exp = run.net.prepare()?;
    let results: Vec<(CapacityStrategy, PerformanceReport, Vec<f64>)> = chosen
        .par_iter()
        .map(|&s| {
            let caps = exp.capacities(s)?.capacity().to_vec();
            Ok((s, exp.run(s)?, caps))
        })
        .collect::<Result<_, fluidtcp::Error>>()?;

    let mut sink = ctx.sink(Meta::new("netsim", Some(run.net.seed), &run))?;
    let mut summary = Table::new(
        "netsim_summary",
        &[
            "strategy", "q_mean", "q_median", "q_min", "q_max", "c_max", "events", "decreases", "duration", "tau_mean", "tau_se",
            "post_event_mean", "post_event_se", "sync_rate", "sync_rate_se",
        ],
    );
    let mut per_flow = Table::new("netsim_q", &["strategy", "flow", "q"]);
    let mut cdf = Table::new("netsim_q_cdf", &["strategy", "cdf", "q"]);
    let mut ccdf = Table::new("netsim_capacity_ccdf", &["strategy", "capacity", "ccdf"]);
    for (s, rep, caps) in &results {
        let name = s.name();
        let mut sorted = rep.q_per_flow.clone();
        sorted.sort_by(f64::total_cmp);
        let mut c_sorted = caps.clone();
        c_sorted.sort_by(f64::total_cmp);
        summary.push(row![
            name,
            rep.q_mean,
            quantile(&sorted, 0.5),
            sorted[0],
            sorted[sorted.len() - 1],
            c_sorted[c_sorted.len() - 1],
            rep.events,
            rep.decreases,
            rep.duration,
            rep.tau.mean,
            rep.tau.std_err,
            rep.post_event.mean,
            rep.post_event.std_err,
            rep.sync_rate.mean,
            rep.sync_rate.std_err
        ]);
        for (i, &q) in rep.q_per_flow.iter().enumerate() {
            per_flow.push(row![name, i, q]);
        }
        for k in 0..=100 {
            let u = k as f64 / 100.0;
            cdf.push(row![name, u, quantile(&sorted, u)]);
        }
        let m = c_sorted.len();
        for (i, &c) in c_sorted.iter().enumerate() {
            if i == 0 || c != c_sorted[i - 1] {
                ccdf.push(row![name, c, (m - i) as f64 / m as f64]);
            }
        }
        println!("{name:<11} Q mean {:>12.3}  median {:>12.3}  events {}", rep.q_mean, quantile(&sorted, 0.5), rep.events);
    }
    for t in [&summary, &per_flow, &cdf, &ccdf] {
        sink.table(t)?;
    }
    let means: Vec<(CapacityStrategy, f64)> = results.iter().map(|(s, r, _)| (*s, r.q_mean)).collect();
    let ordered = (means.len() == EXPECTED_ORDER.len()).then(|| ordering_holds(&means));
    sink.summary(
        "netsim_check",
        json!({
            "expected_order": EXPECTED_ORDER.iter().map(|s| s.name()).collect::<Vec<_>>(),
            "q_mean": means.iter().map(|(s, q)| (s.name().to_string(), json!(q))).collect::<serde_json::Map<_, _>>(),
            "ordering_holds": ordered,
            "checked": run.check,
        }),
    )?;
    report_written(&sink);
    if run.check {
        if ordered != Some(true) {
            return Err(CliError::Validation(format!("strategies do not rank as {:?}", EXPECTED_ORDER.map(|s| s.name()))));
        }
        println!("netsim --check: ordering {} holds", EXPECTED_ORDER.map(|s| s.name()).join(" > "));
    }
    Ok(())
}
