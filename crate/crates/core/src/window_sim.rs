//! Event-driven Monte Carlo of the fluid window process, and goodness-of-fit
//! checks of its time-weighted histograms against the analytic laws.
//!
//! Between losses the window follows W^{m+1}(t) = W_0^{m+1} + alpha (m+1) t.
//! Losses arrive with rate lambda on the active clock; reaching the limit B~
//! is a buffer loss. Each loss multiplies W by beta. With FR/FR the window
//! then stays at the post-loss value for one round-trip time R(W_before).
//! With WAN idling, growth below T = 2 alpha D is stretched by T/W in wall
//! time (the sender waits for ACKs), while the loss clock only runs while active.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::specfun;
use crate::tcp_finite::{FiniteBufferParams, FiniteBufferSolution};
use crate::tcp_infinite::{AnalyticWindowDistribution, TcpParams};

/// How the exponential loss clock continues after a buffer loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Draw a fresh inter-loss time after every loss.
    Resample,
    /// Keep the unexpired part of the clock after a buffer loss.
    Residual,
}

/// Equal-width histogram bins on [0, hi] plus one overflow bin above hi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub hi: f64,
    pub count: usize,
}

impl BinSpec {
    pub fn new(hi: f64, count: usize) -> Result<Self> {
        if !(hi > 0.0) || !hi.is_finite() || count == 0 {
            return Err(invalid(format!("bins need hi > 0 and count > 0, got hi={hi} count={count}")));
        }
        Ok(BinSpec { hi, count })
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.count).map(|i| self.hi * i as f64 / self.count as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tcp: TcpParams,
    /// Effective window limit B~; `None` is an infinite buffer.
    pub limit: Option<f64>,
    pub frfr: bool,
    /// Stretch growth below 2 alpha D by the idle fraction.
    pub wan_idle: bool,
    /// Number of recorded loss events.
    pub events: u64,
    pub seed: u64,
    /// ChaCha stream index, one per simulation instance.
    pub stream: u64,
    pub bins: Option<BinSpec>,
    pub clock: ClockMode,
    /// Fraction of `events` simulated and discarded before recording.
    pub warmup_fraction: f64,
    /// Number of batches for batch-means error estimates.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(tcp: TcpParams, limit: Option<f64>, events: u64, seed: u64) -> Self {
        SimConfig {
            tcp,
            limit,
            frfr: false,
            wan_idle: false,
            events,
            seed,
            stream: 0,
            bins: None,
            clock: ClockMode::Resample,
            warmup_fraction: 0.01,
            batches: 256,
        }
    }

    pub fn finite(params: &FiniteBufferParams, events: u64, seed: u64) -> Self {
        Self::new(params.tcp, Some(params.effective_limit()), events, seed)
    }

    fn validate(&self) -> Result<()> {
        self.tcp.validate()?;
        if let Some(b) = self.limit {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Config(format!("window limit must be positive and finite, got {b}")));
            }
        }
        if self.tcp.lambda == 0.0 && self.limit.is_none() {
            return Err(Error::Config("lambda = 0 with an infinite buffer never loses a packet".into()));
        }
        if self.events == 0 {
            return Err(Error::Config("at least one loss event must be recorded".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warm-up fraction must lie in [0, 1), got {}", self.warmup_fraction)));
        }
        if self.batches == 0 {
            return Err(Error::Config("batches must be positive".into()));
        }
        Ok(())
    }
}

/// Accumulators of one batch of consecutive loss events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub time: f64,
    pub active_time: f64,
    pub w_time: f64,
    pub w2_time: f64,
    pub buffer_losses: u64,
    pub link_losses: u64,
}

impl BatchStats {
    fn add(&mut self, o: &BatchStats) {
        self.time += o.time;
        self.active_time += o.active_time;
        self.w_time += o.w_time;
        self.w2_time += o.w2_time;
        self.buffer_losses += o.buffer_losses;
        self.link_losses += o.link_losses;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Bin edges; the final bin runs from the last edge to infinity.
    pub edges: Vec<f64>,
    /// Wall time spent in each bin, overflow bin last.
    pub bin_time: Vec<f64>,
    pub totals: BatchStats,
    pub batches: Vec<BatchStats>,
    /// Per-batch wall time in each bin (empty without bins).
    pub batch_bin_time: Vec<Vec<f64>>,
}

impl SimResult {
    pub fn n_buffer_losses(&self) -> u64 {
        self.totals.buffer_losses
    }

    pub fn n_link_losses(&self) -> u64 {
        self.totals.link_losses
    }

    pub fn n_losses(&self) -> u64 {
        self.totals.buffer_losses + self.totals.link_losses
    }

    pub fn total_time(&self) -> f64 {
        self.totals.time
    }

    /// Measured N_buffer / N_total.
    pub fn buffer_loss_fraction(&self) -> f64 {
        self.n_buffer_losses() as f64 / self.n_losses() as f64
    }

    /// Losses per unit of active (non-idle, non-plateau) time.
    pub fn loss_rate(&self) -> f64 {
        self.n_losses() as f64 / self.totals.active_time
    }

    pub fn mean_window(&self) -> f64 {
        self.totals.w_time / self.totals.time
    }

    pub fn window_variance(&self) -> f64 {
        let m = self.mean_window();
        (self.totals.w2_time / self.totals.time - m * m).max(0.0)
    }

    /// Fraction of time spent in each bin; sums to one.
    pub fn occupancy(&self) -> Vec<f64> {
        let total: f64 = self.bin_time.iter().sum();
        self.bin_time.iter().map(|t| t / total).collect()
    }

    /// Standard error of a ratio statistic from batch means.
    fn batch_error(&self, f: impl Fn(&BatchStats) -> f64) -> f64 {
        let k = self.batches.len();
        if k < 2 {
            return f64::NAN;
        }
        let vals: Vec<f64> = self.batches.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / k as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }

    pub fn mean_window_error(&self) -> f64 {
        self.batch_error(|b| b.w_time / b.time)
    }

    pub fn loss_rate_error(&self) -> f64 {
        self.batch_error(|b| (b.buffer_losses + b.link_losses) as f64 / b.active_time)
    }

    pub fn buffer_loss_fraction_error(&self) -> f64 {
        self.batch_error(|b| b.buffer_losses as f64 / (b.buffer_losses + b.link_losses) as f64)
    }

    /// Combines independent runs with identical bins.
    pub fn merge(&self, other: &SimResult) -> Result<SimResult> {
        if self.edges != other.edges {
            return Err(invalid("cannot merge results with different bins"));
        }
        let mut out = self.clone();
        for (a, b) in out.bin_time.iter_mut().zip(&other.bin_time) {
            *a += b;
        }
        out.totals.add(&other.totals);
        out.batches.extend_from_slice(&other.batches);
        out.batch_bin_time.extend_from_slice(&other.batch_bin_time);
        Ok(out)
    }

    /// Sums adjacent groups of `factor` bins (the overflow bin stays separate).
    pub fn coarsen(&self, factor: usize) -> Result<SimResult> {
        let n = self.edges.len() - 1;
        if factor == 0 || n % factor != 0 {
            return Err(invalid(format!("factor {factor} does not divide {n} bins")));
        }
        let edges = self.edges.iter().step_by(factor).copied().collect();
        let sum = |row: &[f64]| {
            let mut out: Vec<f64> = row[..n].chunks(factor).map(|c| c.iter().sum()).collect();
            out.push(row[n]);
            out
        };
        Ok(SimResult {
            edges,
            bin_time: sum(&self.bin_time),
            totals: self.totals,
            batches: self.batches.clone(),
            batch_bin_time: self.batch_bin_time.iter().map(|r| sum(r)).collect(),
        })
    }
}

/// Wall-time integrals along the deterministic growth curve.
struct Growth {
    m: f64,
    alpha: f64,
    idle: f64,
}

fn power_integral(p: f64, a: f64, b: f64) -> f64 {
    if p == -1.0 {
        (b / a).ln()
    } else {
        (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0)
    }
}

impl Growth {
    /// Integral of w^k dt while the window grows from lo to hi.
    fn integral(&self, k: f64, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let mut total = 0.0;
        if self.idle > lo {
            total += self.idle * power_integral(k + self.m - 1.0, lo, hi.min(self.idle));
        }
        if hi > self.idle {
            total += power_integral(k + self.m, lo.max(self.idle), hi);
        }
        total / self.alpha
    }

    fn active_time(&self, lo: f64, hi: f64) -> f64 {
        (hi.powf(self.m + 1.0) - lo.powf(self.m + 1.0)) / (self.alpha * (self.m + 1.0))
    }
}

struct Recorder {
    edges: Vec<f64>,
    width: f64,
    rows: Vec<Vec<f64>>,
}

impl Recorder {
    fn bin_of(&self, w: f64) -> usize {
        let n = self.edges.len() - 1;
        ((w / self.width) as usize).min(n)
    }

    fn growth(&mut self, batch: usize, g: &Growth, lo: f64, hi: f64) {
        let n = self.edges.len() - 1;
        let mut i = self.bin_of(lo);
        let mut a = lo;
        while a < hi {
            let b = if i < n { self.edges[i + 1].min(hi) } else { hi };
            self.rows[batch][i] += g.integral(0.0, a, b);
            a = b;
            i += 1;
        }
    }

    fn plateau(&mut self, batch: usize, w: f64, t: f64) {
        let i = self.bin_of(w);
        self.rows[batch][i] += t;
    }
}

/// Runs one simulation instance.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let tcp = &config.tcp;
    let (m, alpha, beta, lambda) = (tcp.m, tcp.alpha, tcp.beta, tcp.lambda);
    let limit = config.limit.unwrap_or(f64::INFINITY);
    let growth = Growth { m, alpha, idle: if config.wan_idle { tcp.bdp() } else { 0.0 } };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    let exp = if lambda > 0.0 { Some(Exp::new(lambda).map_err(|e| invalid(e.to_string()))?) } else { None };
    let draw = |rng: &mut ChaCha8Rng| exp.as_ref().map_or(f64::INFINITY, |d| d.sample(rng));

    let warmup = (config.events as f64 * config.warmup_fraction).ceil() as u64;
    let total_events = warmup + config.events;
    let mut batches = vec![BatchStats::default(); config.batches.min(config.events as usize)];
    let nb = batches.len() as u64;
    let mut recorder = config.bins.map(|spec| {
        let edges = spec.edges();
        let n = edges.len();
        Recorder { edges, width: spec.hi / spec.count as f64, rows: vec![vec![0.0; n]; batches.len()] }
    });

    let mut w = if limit.is_finite() { beta * limit } else { (1.0 / tcp.loss_ratio()).powf(1.0 / (m + 1.0)) };
    let mut clock: Option<f64> = None;
    for event in 0..total_events {
        let delta = match (config.clock, clock.take()) {
            (ClockMode::Residual, Some(rest)) => rest,
            _ => draw(&mut rng),
        };
        let hit = if limit.is_finite() { growth.active_time(w, limit) } else { f64::INFINITY };
        let (w_end, buffer) = if delta < hit {
            ((w.powf(m + 1.0) + alpha * (m + 1.0) * delta).powf(1.0 / (m + 1.0)).min(limit), false)
        } else {
            if config.clock == ClockMode::Residual && delta.is_finite() {
                clock = Some(delta - hit);
            }
            (limit, true)
        };
        let w_post = beta * w_end;
        let plateau = if config.frfr { w_end.powf(m) / alpha } else { 0.0 };
        if event >= warmup {
            let bi = ((event - warmup) * nb / config.events) as usize;
            let b = &mut batches[bi];
            b.time += growth.integral(0.0, w, w_end) + plateau;
            b.active_time += delta.min(hit);
            b.w_time += growth.integral(1.0, w, w_end) + w_post * plateau;
            b.w2_time += growth.integral(2.0, w, w_end) + w_post * w_post * plateau;
            if buffer {
                b.buffer_losses += 1;
            } else {
                b.link_losses += 1;
            }
            if let Some(r) = recorder.as_mut() {
                r.growth(bi, &growth, w, w_end);
                if plateau > 0.0 {
                    r.plateau(bi, w_post, plateau);
                }
            }
        }
        w = w_post;
    }

    let mut totals = BatchStats::default();
    for b in &batches {
        totals.add(b);
    }
    let (edges, batch_bin_time) = match recorder {
        Some(r) => (r.edges, r.rows),
        None => (vec![0.0], batches.iter().map(|b| vec![b.time]).collect()),
    };
    let mut bin_time = vec![0.0; edges.len()];
    for row in &batch_bin_time {
        for (t, v) in bin_time.iter_mut().zip(row) {
            *t += v;
        }
    }
    Ok(SimResult { edges, bin_time, totals, batches, batch_bin_time })
}

/// Runs `instances` independent streams of one configuration and merges them.
pub fn simulate_streams(config: &SimConfig, instances: u64) -> Result<SimResult> {
    let mut merged: Option<SimResult> = None;
    for s in 0..instances {
        let mut c = config.clone();
        c.stream = config.stream + s;
        let r = simulate(&c)?;
        merged = Some(match merged {
            Some(acc) => acc.merge(&r)?,
            None => r,
        });
    }
    merged.ok_or_else(|| invalid("at least one instance is required"))
}

/// A window law that can be integrated over bins, possibly with one atom.
pub trait WindowLaw {
    fn mass(&self, lo: f64, hi: f64) -> Result<f64>;

    /// Location and weight of a Dirac component.
    fn atom(&self) -> Option<(f64, f64)> {
        None
    }
}

impl WindowLaw for AnalyticWindowDistribution {
    fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if hi.is_infinite() {
            return Ok(self.integrate(lo, self.upper_limit().max(lo))?.max(0.0));
        }
        self.integrate(lo, hi)
    }
}

/// Normalized finite-buffer window law.
pub struct FiniteWindowLaw<'a>(pub &'a FiniteBufferSolution);

impl WindowLaw for FiniteWindowLaw<'_> {
    fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.0.integrate_phi(0.0, lo, hi.min(self.0.limit))? / (1.0 - self.0.a))
    }
}

/// Finite-buffer FR/FR law with its atom at beta B~.
pub struct FiniteFrfrLaw<'a> {
    sol: &'a FiniteBufferSolution,
    norm: f64,
}

impl<'a> FiniteFrfrLaw<'a> {
    pub fn new(sol: &'a FiniteBufferSolution) -> Result<Self> {
        Ok(FiniteFrfrLaw { sol, norm: sol.frfr_normalizer()? })
    }
}

impl WindowLaw for FiniteFrfrLaw<'_> {
    fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        self.sol.integrate_frfr(lo, hi.min(self.sol.limit), self.norm)
    }

    fn atom(&self) -> Option<(f64, f64)> {
        let d = self.sol.frfr_pdf_with_normalizer(1.0, self.norm);
        Some((d.point_mass_at, d.point_mass_weight))
    }
}

/// Goodness of fit of a time-weighted histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofStats {
    /// Hotelling T^2 of the grouped occupancies, scaled to a chi-square scale.
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Largest CDF difference over bin edges.
    pub ks: f64,
    /// Number of bins after merging sparse ones.
    pub groups: usize,
    /// Number of batches the covariance was estimated from.
    pub batches: usize,
}

/// Expected bin probabilities of `law` on the result's bins (overflow last).
pub fn expected_occupancy(result: &SimResult, law: &dyn WindowLaw) -> Result<Vec<f64>> {
    let n = result.edges.len() - 1;
    let mut probs = Vec::with_capacity(n + 1);
    for i in 0..n {
        probs.push(law.mass(result.edges[i], result.edges[i + 1])?.max(0.0));
    }
    probs.push(law.mass(result.edges[n], f64::INFINITY)?.max(0.0));
    if let Some((at, weight)) = law.atom() {
        let i = if at >= result.edges[n] { n } else { result.edges.partition_point(|&e| e <= at) - 1 };
        probs[i] += weight;
    }
    Ok(probs)
}

/// Minimum events for a histogram comparison.
pub const MIN_EVENTS: u64 = 1000;

/// Largest difference of the cumulative sums of two binned distributions.
pub fn ks_distance(observed: &[f64], expected: &[f64]) -> f64 {
    let (mut co, mut ce, mut ks) = (0.0, 0.0, 0.0f64);
    for (o, e) in observed.iter().zip(expected) {
        co += o;
        ce += e;
        ks = ks.max((co - ce).abs());
    }
    ks
}

/// Solves S x = v for symmetric positive definite S (row-major, dimension d).
fn cholesky_solve(mut a: Vec<f64>, d: usize, v: &[f64]) -> Option<Vec<f64>> {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let diag = diag.sqrt();
        a[j * d + j] = diag;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / diag;
        }
    }
    let mut y = v.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= a[i * d + k] * y[k];
        }
        y[i] /= a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            y[i] -= a[k * d + i] * y[k];
        }
        y[i] /= a[i * d + i];
    }
    Some(y)
}

/// Goodness of fit of the time-weighted histogram against `law`.
///
/// Occupancy fractions of a time-weighted histogram are neither independent
/// nor multinomial, so the usual Pearson statistic is miscalibrated. The
/// covariance of the grouped occupancies is estimated from batch means
/// instead, and T^2 = r' S^{-1} r is referred to its F distribution.
/// Adjacent bins are merged until each group expects 30 loss cycles, and
/// into at most batches/4 groups.
pub fn compare_histogram(result: &SimResult, law: &dyn WindowLaw) -> Result<GofStats> {
    compare_histogram_with(result, law, 30.0)
}

pub fn compare_histogram_with(result: &SimResult, law: &dyn WindowLaw, min_expected: f64) -> Result<GofStats> {
    let events = result.n_losses();
    if events < MIN_EVENTS {
        return Err(Error::InsufficientSample(format!("{events} loss events recorded, at least {MIN_EVENTS} needed")));
    }
    let k = result.batch_bin_time.len();
    let observed = result.occupancy();
    let expected = expected_occupancy(result, law)?;

    let ks = ks_distance(&observed, &expected);

    // Group bins: each group expects min_expected cycles and the group
    // count stays well below the batch count.
    let floor = (min_expected / events as f64).max(4.0 / k as f64);
    let mut group_of = Vec::with_capacity(expected.len());
    let (mut groups, mut acc) = (0, 0.0);
    for e in &expected {
        group_of.push(groups);
        acc += e;
        if acc >= floor {
            groups += 1;
            acc = 0.0;
        }
    }
    // A short trailing remainder joins the last full group.
    if group_of.last() == Some(&groups) {
        if groups == 0 {
            groups = 1;
        } else {
            for x in group_of.iter_mut().filter(|x| **x == groups) {
                *x = groups - 1;
            }
        }
    }
    if groups < 2 {
        return Ok(GofStats { chi2: 0.0, dof: 0, p_value: 1.0, ks, groups, batches: k });
    }
    if k < groups + 2 {
        return Err(Error::InsufficientSample(format!("{k} batches cannot estimate a {groups}-group covariance")));
    }

    let mut obs = vec![0.0; groups];
    let mut exp = vec![0.0; groups];
    for (i, &gi) in group_of.iter().enumerate() {
        obs[gi] += observed[i];
        exp[gi] += expected[i];
    }
    // Ratio-estimator residuals per batch: time in group minus p^ times batch time.
    let d = groups - 1;
    let total = result.total_time();
    let mean_time = total / k as f64;
    let mut cov = vec![0.0; d * d];
    let mut r = vec![0.0; d];
    for row in &result.batch_bin_time {
        let bt: f64 = row.iter().sum();
        r.iter_mut().for_each(|v| *v = 0.0);
        for (i, &gi) in group_of.iter().enumerate() {
            if gi < d {
                r[gi] += row[i];
            }
        }
        for (j, v) in r.iter_mut().enumerate() {
            *v = (*v - obs[j] * bt) / mean_time;
        }
        for a in 0..d {
            for b in 0..=a {
                cov[a * d + b] += r[a] * r[b];
            }
        }
    }
    let norm = 1.0 / (k as f64 * (k - 1) as f64);
    for a in 0..d {
        for b in 0..=a {
            cov[a * d + b] *= norm;
            cov[b * d + a] = cov[a * d + b];
        }
    }
    // A group with no batch-to-batch variation carries no noise: a mismatch
    // there is a certain misfit, otherwise the group is dropped.
    let keep: Vec<usize> = (0..d).filter(|&j| cov[j * d + j] > 0.0).collect();
    if (0..d).any(|j| !(cov[j * d + j] > 0.0) && (obs[j] - exp[j]).abs() > 1e-12) {
        return Ok(GofStats { chi2: f64::INFINITY, dof: d, p_value: 0.0, ks, groups, batches: k });
    }
    let d = keep.len();
    if d == 0 {
        return Ok(GofStats { chi2: 0.0, dof: 0, p_value: 1.0, ks, groups, batches: k });
    }
    let full = groups - 1;
    let cov: Vec<f64> = keep.iter().flat_map(|&a| keep.iter().map(move |&b| (a, b))).map(|(a, b)| cov[a * full + b]).collect();
    let diff: Vec<f64> = keep.iter().map(|&j| obs[j] - exp[j]).collect();
    let Some(sol) = cholesky_solve(cov, d, &diff) else {
        return Err(Error::InsufficientSample("occupancy covariance is singular (deterministic run?)".into()));
    };
    let t2: f64 = diff.iter().zip(&sol).map(|(a, b)| a * b).sum();
    let (d1, d2) = (d as f64, (k - d) as f64);
    let f = t2 * d2 / (d1 * (k as f64 - 1.0));
    let p_value = specfun::regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))?;
    Ok(GofStats { chi2: t2, dof: d, p_value, ks, groups, batches: k })
}
