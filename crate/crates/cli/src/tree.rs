//! `tree`: empirical edge statistics of grown trees next to the analytic laws.

use clap::{Args, ValueEnum};
use fluidtcp::tree_analytic::{ccdf_n, ccdf_q, cond_mean_n_given_q, joint_pnq, unconditional_betweenness_ccdf, TABLE_MAX_TAU};
use fluidtcp::tree_gen::{enumerate_exact, grow, measure, EdgeRecord, TreeParams, ENUMERATION_MAX_TAU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{resolve, row, Meta, Table};
use crate::{report_written, CliError, Ctx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeCheck {
    /// Cluster-size and in-degree CCDFs against the closed forms.
    Ccdf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct TreeFlags {
    /// Edges per tree.
    #[arg(long)]
    tau: Option<usize>,
    /// Attachment parameter 1/(1+a) in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Independent trees, pooled.
    #[arg(long)]
    realizations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail with exit code 3 unless the empirical curves match.
    #[arg(long, value_enum)]
    check: Option<TreeCheck>,
    /// Allowed deviation in binomial standard errors for --check.
    #[arg(long)]
    check_z: Option<f64>,
    /// Absolute slack added to the --check tolerance.
    #[arg(long)]
    check_abs: Option<f64>,
    /// Exact joint law by enumerating every tree (tau <= 8).
    #[arg(long)]
    enumerate: bool,
    /// Also write the per-edge records of the first tree.
    #[arg(long)]
    edges: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeRun {
    pub tau: usize,
    pub alpha: f64,
    pub realizations: u64,
    pub seed: u64,
    pub check: Option<TreeCheck>,
    pub check_z: f64,
    pub check_abs: f64,
    pub enumerate: bool,
    pub edges: bool,
}

impl Default for TreeRun {
    fn default() -> Self {
        TreeRun { tau: 1000, alpha: 0.5, realizations: 1, seed: 1, check: None, check_z: 5.0, check_abs: 1e-3, enumerate: false, edges: false }
    }
}

/// Pooled histograms; merging is element-wise addition.
#[derive(Debug, Clone, Default)]
struct Counts {
    edges: u64,
    by_n: Vec<u64>,
    by_q: Vec<u64>,
    n_sum_by_q: Vec<f64>,
}

impl Counts {
    fn from_records(tau: usize, records: &[EdgeRecord]) -> Counts {
        let mut c = Counts { edges: records.len() as u64, by_n: vec![0; tau], ..Counts::default() };
        for r in records {
            c.by_n[r.n] += 1;
            if r.q_younger >= c.by_q.len() {
                c.by_q.resize(r.q_younger + 1, 0);
                c.n_sum_by_q.resize(r.q_younger + 1, 0.0);
            }
            c.by_q[r.q_younger] += 1;
            c.n_sum_by_q[r.q_younger] += r.n as f64;
        }
        c
    }

    fn merge(mut self, other: &Counts) -> Counts {
        self.edges += other.edges;
        for (a, b) in self.by_n.iter_mut().zip(&other.by_n) {
            *a += b;
        }
        if other.by_q.len() > self.by_q.len() {
            self.by_q.resize(other.by_q.len(), 0);
            self.n_sum_by_q.resize(other.by_q.len(), 0.0);
        }
        for (q, (&c, &s)) in other.by_q.iter().zip(&other.n_sum_by_q).enumerate() {
            self.by_q[q] += c;
            self.n_sum_by_q[q] += s;
        }
        self
    }
}

/// All small values, then about 40 points per decade up to `max`.
fn log_points(max: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (0..=max.min(30)).collect();
    if max > 30 {
        let (lo, hi) = (30f64.ln(), (max as f64).ln());
        let k = ((hi - lo) / std::f64::consts::LN_10 * 40.0).ceil() as usize;
        pts.extend((1..=k).map(|i| (lo + (hi - lo) * i as f64 / k as f64).exp().round() as usize));
        pts.dedup();
        pts.retain(|&n| n <= max);
    }
    pts
}

/// Tail sums `sum_{j >= i} v[j]`.
fn tails(v: &[u64]) -> Vec<u64> {
    let mut t = vec![0; v.len() + 1];
    for i in (0..v.len()).rev() {
        t[i] = t[i + 1] + v[i];
    }
    t
}

struct Deviation {
    worst: f64,
    worst_at: String,
    failures: usize,
}

impl Deviation {
    fn new() -> Deviation {
        Deviation { worst: 0.0, worst_at: String::new(), failures: 0 }
    }

    fn add(&mut self, run: &TreeRun, edges: u64, what: String, emp: f64, ana: f64) {
        let sigma = (ana * (1.0 - ana) / edges as f64).max(0.0).sqrt();
        let dev = (emp - ana).abs();
        if dev > run.check_z * sigma + run.check_abs {
            self.failures += 1;
        }
        if dev > self.worst {
            self.worst = dev;
            self.worst_at = what;
        }
    }
}

fn enumeration(ctx: &Ctx, run: &TreeRun) -> Result<(), CliError> {
    if run.tau > ENUMERATION_MAX_TAU {
        return Err(CliError::Config(format!("--enumerate supports tau <= {ENUMERATION_MAX_TAU}, got {}", run.tau)));
    }
    let exact = enumerate_exact(&TreeParams::new(run.alpha, run.tau, run.seed)?)?;
    let mut sink = ctx.sink(Meta::new("tree", None, run))?;
    let mut t = Table::new("tree_enumeration", &["n", "q", "exact", "analytic", "abs_diff"]);
    let mut worst = 0.0f64;
    for n in 0..run.tau {
        for q in 0..=n {
            let (e, a) = (exact.get(n, q), joint_pnq(run.tau, run.alpha, n, q)?);
            worst = worst.max((e - a).abs());
            t.push(row![n, q, e, a, (e - a).abs()]);
        }
    }
    sink.table(&t)?;
    let pass = worst <= 1e-12;
    sink.summary("tree_summary", json!({ "enumeration_max_abs_diff": worst, "tolerance": 1e-12, "pass": pass }))?;
    println!("tree --enumerate: max |exact - analytic| = {worst:.3e} (tolerance 1e-12)");
    report_written(&sink);
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation(format!("enumeration differs from the closed form by {worst:.3e}")))
    }
}

pub fn tree(ctx: &Ctx, flags: &TreeFlags) -> Result<(), CliError> {
    let run: TreeRun = resolve(ctx.config.as_deref(), flags)?;
    TreeParams::new(run.alpha, run.tau, run.seed)?;
    if run.enumerate {
        return enumeration(ctx, &run);
    }
    if run.realizations == 0 {
        return Err(CliError::Config("--realizations must be at least 1".into()));
    }
    let (tau, alpha) = (run.tau, run.alpha);
    let grown: Vec<(Counts, Option<Vec<EdgeRecord>>)> = (0..run.realizations)
        .into_par_iter()
        .map(|i| {
            let tree = grow(&TreeParams::new(alpha, tau, run.seed)?.with_stream(i))?;
            let records = measure(&tree);
            let counts = Counts::from_records(tau, &records);
            Ok((counts, (i == 0 && run.edges).then_some(records)))
        })
        .collect::<Result<_, fluidtcp::Error>>()?;
    let mut grown = grown.into_iter();
    let (first, first_records) = grown.next().expect("at least one realization");
    let counts = grown.fold(first, |acc, (c, _)| acc.merge(&c));
    let total = counts.edges as f64;
    // The finite-tau in-degree laws need dense recursions beyond this size.
    let q_tau = (tau <= TABLE_MAX_TAU).then_some(tau);

    let mut sink = ctx.sink(Meta::new("tree", Some(run.seed), &run))?;
    let mut dev_n = Deviation::new();
    let mut dev_q = Deviation::new();

    let tail_n = tails(&counts.by_n);
    let mut t = Table::new("tree_ccdf_n", &["n", "empirical", "analytic"]);
    for n in log_points(tau - 1) {
        let (emp, ana) = (tail_n[n] as f64 / total, ccdf_n(Some(tau), alpha, n)?);
        dev_n.add(&run, counts.edges, format!("n={n}"), emp, ana);
        t.push(row![n, emp, ana]);
    }
    sink.table(&t)?;

    let tail_q = tails(&counts.by_q);
    let mut t = Table::new("tree_ccdf_q", &["q", "empirical", "analytic"]);
    for q in 0..counts.by_q.len() {
        let (emp, ana) = (tail_q[q] as f64 / total, ccdf_q(q_tau, alpha, q)?);
        dev_q.add(&run, counts.edges, format!("q={q}"), emp, ana);
        t.push(row![q, emp, ana]);
    }
    sink.table(&t)?;

    let mut t = Table::new("tree_mean_n_given_q", &["q", "edges", "empirical", "analytic"]);
    for (q, (&c, &s)) in counts.by_q.iter().zip(&counts.n_sum_by_q).enumerate() {
        if c > 0 && q < tau {
            t.push(row![q, c, s / c as f64, cond_mean_n_given_q(q_tau, alpha, q)?]);
        }
    }
    sink.table(&t)?;

    // L = (n+1)(tau-n) is symmetric under n -> tau-1-n, so L >= L(n) iff n <= m <= tau-1-n.
    let mut t = Table::new("tree_betweenness_ccdf", &["l", "empirical", "analytic"]);
    for n in log_points((tau - 1) / 2) {
        let l = ((n + 1) * (tau - n)) as u64;
        let inside = tail_n[n] - tail_n[tau - n];
        t.push(row![l, inside as f64 / total, unconditional_betweenness_ccdf(tau, alpha, l as f64)?]);
    }
    sink.table(&t)?;

    if let Some(records) = first_records {
        let mut t = Table::new("tree_edges", &["edge_id", "tau_e", "n", "q_younger", "q_older", "L"]);
        for r in records {
            t.push(row![r.edge_id, r.tau_e, r.n, r.q_younger, r.q_older, r.l]);
        }
        sink.table(&t)?;
    }

    let checked = run.check.is_some();
    let pass = dev_n.failures == 0 && dev_q.failures == 0;
    sink.summary(
        "tree_summary",
        json!({
            "edges": counts.edges,
            "realizations": run.realizations,
            "in_degree_law_tau": q_tau,
            "ccdf_n": { "max_abs_diff": dev_n.worst, "at": dev_n.worst_at, "points_outside_tolerance": dev_n.failures },
            "ccdf_q": { "max_abs_diff": dev_q.worst, "at": dev_q.worst_at, "points_outside_tolerance": dev_q.failures },
            "checked": checked,
            "pass": pass,
        }),
    )?;
    println!(
        "tree: {} edges; ccdf_n max |diff| {:.2e} at {}; ccdf_q max |diff| {:.2e} at {}",
        counts.edges, dev_n.worst, dev_n.worst_at, dev_q.worst, dev_q.worst_at
    );
    report_written(&sink);
    if checked && !pass {
        return Err(CliError::Validation(format!(
            "{} cluster-size and {} in-degree CCDF points outside {} standard errors + {}",
            dev_n.failures, dev_q.failures, run.check_z, run.check_abs
        )));
    }
    if checked {
        println!("tree --check ccdf: PASS");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_points_cover_range() {
        let p = log_points(100_000);
        assert_eq!(p[0], 0);
        assert_eq!(*p.last().unwrap(), 100_000);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_points(5), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn counts_merge_adds() {
        let a = Counts { edges: 2, by_n: vec![1, 1], by_q: vec![2], n_sum_by_q: vec![1.0] };
        let b = Counts { edges: 2, by_n: vec![2, 0], by_q: vec![1, 1], n_sum_by_q: vec![0.0, 1.0] };
        let m = a.merge(&b);
        assert_eq!((m.edges, m.by_n, m.by_q, m.n_sum_by_q), (4, vec![3, 1], vec![3, 1], vec![1.0, 1.0]));
    }

    #[test]
    fn tails_sum_suffixes() {
        assert_eq!(tails(&[1, 2, 3]), vec![6, 5, 3, 0]);
    }
}
