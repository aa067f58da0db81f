//! Stationary congestion-window law of the fluid TCP model behind an
//! infinite buffer: residues, densities, moments, the FR/FR and WAN
//! extensions, and the mean-field fixed point for parallel connections.
//!
//! The window grows as dW^{m+1}/dt = alpha (m+1) between losses, losses arrive
//! as a Poisson process of rate lambda, and each loss multiplies W by beta.
//! Everything depends on lambda and alpha only through s = lambda / alpha.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::NumericsConfig;
use crate::quad;
use crate::specfun::{self, lgamma};

/// Parameters of the fluid TCP model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcpParams {
    /// Exponent of the round-trip time model R(W) = W^m / alpha.
    pub m: f64,
    /// Rate scale in packets per second.
    pub alpha: f64,
    /// Multiplicative decrease factor.
    pub beta: f64,
    /// External loss event rate.
    pub lambda: f64,
    /// Link capacity in bits per second, when the model is tied to a link.
    pub link_capacity: Option<f64>,
    /// Packet size in bits.
    pub packet_size: Option<f64>,
    /// One-way link delay in seconds.
    pub delay: f64,
}

impl TcpParams {
    pub fn new(m: f64, alpha: f64, beta: f64, lambda: f64) -> Result<Self> {
        let p = TcpParams { m, alpha, beta, lambda, link_capacity: None, packet_size: None, delay: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// The LAN setting used throughout: m = 1, beta = 1/2, alpha = 1, lambda = p.
    pub fn lan(p: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 0.5, p)
    }

    /// Parameters tied to a link: alpha = C / P packets per second, lambda = p alpha.
    pub fn from_link(capacity: f64, packet_size: f64, delay: f64, p: f64, m: f64, beta: f64) -> Result<Self> {
        if !(capacity > 0.0) || !(packet_size > 0.0) {
            return Err(invalid("link capacity and packet size must be positive"));
        }
        let alpha = capacity / packet_size;
        let params = TcpParams {
            m,
            alpha,
            beta,
            lambda: p * alpha,
            link_capacity: Some(capacity),
            packet_size: Some(packet_size),
            delay,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_delay(mut self, delay: f64) -> Result<Self> {
        self.delay = delay;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(invalid(format!("m must be a finite nonnegative number, got {}", self.m)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.delay >= 0.0) || !self.delay.is_finite() {
            return Err(invalid(format!("delay must be nonnegative, got {}", self.delay)));
        }
        for (name, v) in [("link capacity", self.link_capacity), ("packet size", self.packet_size)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// c = beta^{m+1}.
    pub fn c(&self) -> f64 {
        self.beta.powf(self.m + 1.0)
    }

    /// Loss ratio p = lambda / alpha.
    pub fn loss_ratio(&self) -> f64 {
        self.lambda / self.alpha
    }

    /// Bandwidth-delay product 2 alpha D in packets.
    pub fn bdp(&self) -> f64 {
        2.0 * self.alpha * self.delay
    }
}

/// Residues h_0..h_K of the partial-fraction form of the window law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueTable {
    pub c: f64,
    pub h: Vec<f64>,
    /// 1 - sum_k c^k h_k, the mass lost to truncating the expansion.
    pub truncation_bound: f64,
}

impl ResidueTable {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// h_k = 1/(c^k L(c)) prod_{l=1}^k 1/(1 - c^{-l}) for k = 0..=k_max.
pub fn compute_residues(c: f64, k_max: usize) -> Result<ResidueTable> {
    compute_residues_with(c, k_max, &NumericsConfig::DEFAULT)
}

pub fn compute_residues_with(c: f64, k_max: usize, cfg: &NumericsConfig) -> Result<ResidueTable> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("residues need 0 < c < 1, got {c}")));
    }
    let l = specfun::euler_product_l_with(c, cfg.product_tail)?;
    let mut h = Vec::with_capacity(k_max + 1);
    h.push(1.0 / l);
    for k in 1..=k_max {
        let prev = h[k - 1];
        h.push(prev / (c - c.powi(1 - k as i32)));
    }
    let mut ck = 1.0;
    let mut sum = 0.0;
    for hk in &h {
        sum += ck * hk;
        ck *= c;
    }
    Ok(ResidueTable { c, h, truncation_bound: 1.0 - sum })
}

/// Which stationary law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Congestion avoidance only.
    Plain,
    /// With fast retransmit / fast recovery plateaus after each loss.
    Frfr,
    /// FR/FR plus idle periods of a window-limited sender on a long path.
    Wan,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "frfr" => Ok(Variant::Frfr),
            "wan" => Ok(Variant::Wan),
            other => Err(invalid(format!("unknown variant {other:?} (plain, frfr, wan)"))),
        }
    }
}

/// The plain law and every closed-form expectation built on it.
#[derive(Debug, Clone)]
pub(crate) struct PlainLaw {
    pub s: f64,
    pub m: f64,
    pub beta: f64,
    pub c: f64,
    pub h: Vec<f64>,
}

impl PlainLaw {
    pub fn new(params: &TcpParams, cfg: &NumericsConfig) -> Result<Self> {
        params.validate()?;
        if params.lambda == 0.0 {
            return Err(invalid("lambda = 0 has no stationary window law with an infinite buffer"));
        }
        let c = params.c();
        let table = compute_residues_with(c, cfg.residue_terms, cfg)?;
        if table.truncation_bound.abs() > 1e-8 {
            return Err(Error::NonConvergence {
                what: format!("residue series at c={c} (truncation bound {:e})", table.truncation_bound),
                iterations: cfg.residue_terms,
            });
        }
        Ok(PlainLaw { s: params.loss_ratio(), m: params.m, beta: params.beta, c, h: table.h })
    }

    fn y(&self, w: f64) -> f64 {
        self.s * w.powf(self.m + 1.0) / (self.m + 1.0)
    }

    pub fn pdf(&self, w: f64) -> f64 {
        if w < 0.0 {
            return 0.0;
        }
        let y = self.y(w);
        let mut sum = 0.0;
        let mut inv_ck = 1.0;
        for hk in &self.h {
            sum += hk * (-inv_ck * y).exp();
            inv_ck /= self.c;
        }
        (self.s * w.powf(self.m) * sum).max(0.0)
    }

    pub fn ccdf(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 1.0;
        }
        let y = self.y(w);
        let mut sum = 0.0;
        let mut ck = 1.0;
        for hk in &self.h {
            sum += ck * hk * (-y / ck).exp();
            ck *= self.c;
        }
        sum.clamp(0.0, 1.0)
    }

    /// E[W^k] for real k > -(m+1).
    pub fn moment(&self, k: f64) -> Result<f64> {
        let r = k / (self.m + 1.0);
        if r <= -1.0 {
            return Err(Error::Divergence(format!("E[W^{k}] diverges for m={}", self.m)));
        }
        if k == 0.0 {
            return Ok(1.0);
        }
        let mut sum = 0.0;
        let mut ck = 1.0;
        let base = self.c.powf(1.0 + r);
        for hk in &self.h {
            sum += ck * hk;
            ck *= base;
        }
        Ok(((self.m + 1.0) / self.s).powf(r) * lgamma(1.0 + r).exp() * sum)
    }

    /// E[W^k 1{W < t}] for real k > -(m+1).
    pub fn truncated_below(&self, k: f64, t: f64) -> Result<f64> {
        let r = k / (self.m + 1.0);
        if r <= -1.0 {
            return Err(Error::Divergence(format!("E[W^{k}; W<t] diverges for m={}", self.m)));
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        let y = self.y(t);
        let mut sum = 0.0;
        let mut inv_ck = 1.0;
        let base = self.c.powf(1.0 + r);
        let mut ck = 1.0;
        for hk in &self.h {
            sum += hk * ck * specfun::lower_incomplete_gamma(1.0 + r, y * inv_ck)?;
            ck *= base;
            inv_ck /= self.c;
        }
        Ok(((self.m + 1.0) / self.s).powf(r) * sum)
    }

    /// Window beyond which the plain CCDF is below `tail`.
    pub fn upper_limit(&self, tail: f64) -> f64 {
        let y = (self.h[0].max(1.0) / tail).ln();
        ((self.m + 1.0) * y / self.s).powf(1.0 / (self.m + 1.0))
    }

    /// Numerator shared by the FR/FR and WAN densities (without the idle term).
    pub fn frfr_numerator(&self, w: f64) -> f64 {
        let plateau = if w > 0.0 {
            self.s * self.beta.powf(-(self.m + 1.0)) * w.powf(self.m) * self.pdf(w / self.beta)
        } else {
            0.0
        };
        self.pdf(w) + plateau
    }

    pub fn frfr_norm(&self) -> Result<f64> {
        Ok(1.0 + self.s * self.moment(self.m)?)
    }

    /// Denominator of the WAN law at idle threshold t.
    pub fn wan_denominator(&self, t: f64) -> Result<f64> {
        let idle = if t > 0.0 { t * self.truncated_below(-1.0, t)? } else { 0.0 };
        Ok(self.ccdf(t) + self.s * self.moment(self.m)? + idle)
    }

    pub fn frfr_moment(&self, k: f64) -> Result<f64> {
        let num = self.moment(k)? + self.beta.powf(k) * self.s * self.moment(self.m + k)?;
        Ok(num / self.frfr_norm()?)
    }

    pub fn wan_moment(&self, k: f64, t: f64) -> Result<f64> {
        let mut num = self.moment(k)? + self.s * self.beta.powf(k) * self.moment(self.m + k)?;
        if t > 0.0 {
            num += t * self.truncated_below(k - 1.0, t)? - self.truncated_below(k, t)?;
        }
        Ok(num / self.wan_denominator(t)?)
    }
}

/// Evaluable stationary window law for one of the three variants.
#[derive(Debug, Clone)]
pub struct AnalyticWindowDistribution {
    params: TcpParams,
    residues: ResidueTable,
    variant: Variant,
    threshold: f64,
    denominator: f64,
    law: PlainLaw,
    cfg: NumericsConfig,
}

impl AnalyticWindowDistribution {
    /// Builds the law; the WAN idle threshold is the bandwidth-delay product 2 alpha D.
    pub fn new(params: TcpParams, variant: Variant) -> Result<Self> {
        Self::with_config(params, variant, NumericsConfig::DEFAULT)
    }

    pub fn with_config(params: TcpParams, variant: Variant, cfg: NumericsConfig) -> Result<Self> {
        Self::build(params, variant, params.bdp(), cfg)
    }

    /// WAN law with an explicit idle threshold in place of 2 alpha D.
    pub fn wan_with_threshold(params: TcpParams, threshold: f64, cfg: NumericsConfig) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(invalid(format!("idle threshold must be finite and nonnegative, got {threshold}")));
        }
        Self::build(params, Variant::Wan, threshold, cfg)
    }

    fn build(params: TcpParams, variant: Variant, threshold: f64, cfg: NumericsConfig) -> Result<Self> {
        let law = PlainLaw::new(&params, &cfg)?;
        let residues = compute_residues_with(law.c, cfg.residue_terms, &cfg)?;
        let denominator = match variant {
            Variant::Plain => 1.0,
            Variant::Frfr => law.frfr_norm()?,
            Variant::Wan => law.wan_denominator(threshold)?,
        };
        Ok(AnalyticWindowDistribution { params, residues, variant, threshold, denominator, law, cfg })
    }

    pub fn params(&self) -> &TcpParams {
        &self.params
    }

    pub fn residues(&self) -> &ResidueTable {
        &self.residues
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Idle threshold of the WAN variant (0 for the others).
    pub fn threshold(&self) -> f64 {
        match self.variant {
            Variant::Wan => self.threshold,
            _ => 0.0,
        }
    }

    /// Normalizing denominator of the variant (1 for the plain law).
    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    pub fn pdf(&self, w: f64) -> f64 {
        if w < 0.0 {
            return 0.0;
        }
        match self.variant {
            Variant::Plain => self.law.pdf(w),
            Variant::Frfr => self.law.frfr_numerator(w) / self.denominator,
            Variant::Wan => {
                let mut num = self.law.frfr_numerator(w);
                if w < self.threshold && w > 0.0 {
                    num += (self.threshold - w) / w * self.law.pdf(w);
                }
                num / self.denominator
            }
        }
    }

    /// Upper integration limit: the density is below the tail cut beyond it.
    pub fn upper_limit(&self) -> f64 {
        let plain = self.law.upper_limit(self.cfg.tail_cut);
        match self.variant {
            Variant::Plain => plain,
            _ => plain / self.params.beta,
        }
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        if self.variant == Variant::Wan && self.threshold > lo && self.threshold < hi {
            pts.push(self.threshold);
        }
        pts.push(hi);
        pts
    }

    /// Integral of the density over [lo, hi].
    pub fn integrate(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        let pts = self.breakpoints(lo, hi);
        Ok(quad::integrate_breaks(|w| self.pdf(w), &pts, self.cfg.quad_abs_tol, self.cfg.quad_rel_tol)?.value)
    }

    /// P(W > w). Closed form for the plain law, quadrature otherwise.
    pub fn ccdf(&self, w: f64) -> Result<f64> {
        if w <= 0.0 {
            return Ok(1.0);
        }
        match self.variant {
            Variant::Plain => Ok(self.law.ccdf(w)),
            _ => {
                let hi = self.upper_limit();
                Ok(self.integrate(w.min(hi), hi)?.clamp(0.0, 1.0))
            }
        }
    }

    /// Total mass by quadrature over [0, upper_limit].
    pub fn total_mass(&self) -> Result<f64> {
        self.integrate(0.0, self.upper_limit())
    }

    /// E[W^k] of this variant (real k; negative k must keep the moment finite).
    pub fn moment(&self, k: f64) -> Result<f64> {
        match self.variant {
            Variant::Plain => self.law.moment(k),
            Variant::Frfr => self.law.frfr_moment(k),
            Variant::Wan => self.law.wan_moment(k, self.threshold),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1.0)
    }

    pub fn std_dev(&self) -> Result<f64> {
        let m1 = self.moment(1.0)?;
        Ok((self.moment(2.0)? - m1 * m1).max(0.0).sqrt())
    }

    /// Rows (w, pdf, ccdf) on an ascending grid. Non-plain CCDFs are
    /// accumulated from the top so each grid cell is integrated once.
    pub fn table(&self, grid: &[f64]) -> Result<Vec<[f64; 3]>> {
        if grid.windows(2).any(|p| p[1] < p[0]) {
            return Err(invalid("grid must be ascending"));
        }
        let mut rows: Vec<[f64; 3]> = grid.iter().map(|&w| [w, self.pdf(w), 0.0]).collect();
        if self.variant == Variant::Plain {
            for r in &mut rows {
                r[2] = self.law.ccdf(r[0]);
            }
            return Ok(rows);
        }
        let hi = self.upper_limit();
        let mut upper = hi;
        let mut acc = 0.0;
        for r in rows.iter_mut().rev() {
            let w = r[0].max(0.0);
            if w < upper {
                acc += self.integrate(w, upper)?;
                upper = w;
            }
            r[2] = if r[0] <= 0.0 { 1.0 } else { acc.clamp(0.0, 1.0) };
        }
        Ok(rows)
    }
}

/// E[W^{r(m+1)}] of the plain law for real r > -1, evaluated from the residue series.
pub fn window_moment(params: &TcpParams, r: f64) -> Result<f64> {
    PlainLaw::new(params, &NumericsConfig::DEFAULT)?.moment(r * (params.m + 1.0))
}

/// E[W^{n(m+1)}] = n! (alpha (m+1) / lambda)^n prod_{k=1}^n 1/(1 - c^k).
pub fn window_moment_integer(params: &TcpParams, n: u32) -> Result<f64> {
    params.validate()?;
    if params.lambda == 0.0 {
        return Err(invalid("lambda = 0 has no stationary window law with an infinite buffer"));
    }
    let c = params.c();
    let scale = (params.m + 1.0) / params.loss_ratio();
    let mut v = 1.0;
    for k in 1..=n {
        v *= f64::from(k) * scale / (1.0 - c.powi(k as i32));
    }
    Ok(v)
}

/// E[W~] - E[W]: shift of the mean window caused by FR/FR plateaus.
pub fn frfr_mean_correction(params: &TcpParams) -> Result<f64> {
    let law = PlainLaw::new(params, &NumericsConfig::DEFAULT)?;
    let s = law.s;
    let ew = law.moment(1.0)?;
    let ewm = law.moment(params.m)?;
    let ewm1 = law.moment(params.m + 1.0)?;
    Ok(-s * (ew * ewm - params.beta * ewm1) / (1.0 + s * ewm))
}

/// E[(1/W) 1{W < t}] of the plain law via the incomplete-Gamma tail series:
/// E[1/W] - (s/(m+1))^{1/(m+1)} sum_k Gamma(m/(m+1), s t^{m+1} c^{-k}/(m+1)) c^{mk/(m+1)} h_k.
pub fn wan_truncated_inverse_moment(params: &TcpParams, threshold: f64) -> Result<f64> {
    let law = PlainLaw::new(params, &NumericsConfig::DEFAULT)?;
    if !(threshold >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {threshold}")));
    }
    let full = law.moment(-1.0)?;
    if threshold == 0.0 {
        return Ok(0.0);
    }
    if threshold.is_infinite() {
        return Ok(full);
    }
    let m = law.m;
    let z = m / (m + 1.0);
    let y = law.s * threshold.powf(m + 1.0) / (m + 1.0);
    let mut tail = 0.0;
    let mut inv_ck = 1.0;
    let cz = law.c.powf(z);
    let mut czk = 1.0;
    for hk in &law.h {
        tail += specfun::upper_incomplete_gamma(z, y * inv_ck)? * czk * hk;
        inv_ck /= law.c;
        czk *= cz;
    }
    Ok(full - (law.s / (m + 1.0)).powf(1.0 / (m + 1.0)) * tail)
}

/// Converged mean-field state of N parallel connections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    /// N E[W*]: the total window, which plays the role of 2 alpha D.
    pub total_window: f64,
    pub iterations: usize,
}

/// Fixed point of X = N E[W*](X), where E[W*](X) is the WAN mean with the
/// idle threshold 2 alpha D replaced by X. Starts from the ideal-WAN limit
/// X_0 = N / E[1/W].
pub fn mean_field_fixed_point(params: &TcpParams, n: u32) -> Result<MeanFieldSolution> {
    mean_field_fixed_point_with(params, n, &NumericsConfig::DEFAULT)
}

pub fn mean_field_fixed_point_with(params: &TcpParams, n: u32, cfg: &NumericsConfig) -> Result<MeanFieldSolution> {
    if n == 0 {
        return Err(invalid("mean field needs at least one connection"));
    }
    let law = PlainLaw::new(params, cfg)?;
    let nf = f64::from(n);
    let mut x = nf / law.moment(-1.0)?;
    for it in 1..=cfg.mean_field_max_iter {
        let next = nf * law.wan_moment(1.0, x)?;
        if (next - x).abs() < cfg.mean_field_rel_tol * x.abs() {
            return Ok(MeanFieldSolution { total_window: next, iterations: it });
        }
        x = next;
    }
    Err(Error::NonConvergence { what: "mean-field fixed point".into(), iterations: cfg.mean_field_max_iter })
}

/// Deterministic-loss throughput (P/R) sqrt(3/2) / sqrt(p) with R = 2D.
pub fn sqrt_law_throughput(params: &TcpParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("loss probability must lie in (0, 1), got {p}")));
    }
    let size = params.packet_size.ok_or_else(|| invalid("packet size is required"))?;
    if !(params.delay > 0.0) {
        return Err(invalid("a positive delay is required (R = 2D)"));
    }
    let rtt = 2.0 * params.delay;
    Ok(size / rtt * (1.5f64).sqrt() / p.sqrt())
}
