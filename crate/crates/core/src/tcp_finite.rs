//! Stationary window law behind a finite drop-tail buffer.
//!
//! The window cannot exceed the effective limit B~ = B + b_L + 2 alpha D.
//! Reaching it counts as a buffer loss. The stationary law is piecewise: on
//! each level (beta^{n+1} B~, beta^n B~] it is a finite sum of stretched
//! exponentials, whose coefficients h_{n,k} follow from a recursion started
//! at the top level. A is the fraction of losses that happen at the buffer.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::numerics::NumericsConfig;
use crate::quad;
use crate::specfun;
use crate::tcp_infinite::TcpParams;

/// Default window headroom b_L above the buffer size.
pub const DEFAULT_HEADROOM: f64 = 2.5354;

/// A finite-buffer configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteBufferParams {
    pub tcp: TcpParams,
    /// Buffer size B in packets.
    pub buffer: f64,
    /// Headroom b_L between the buffer size and the largest reachable window.
    pub headroom: f64,
}

impl FiniteBufferParams {
    pub fn new(tcp: TcpParams, buffer: f64) -> Result<Self> {
        Self::with_headroom(tcp, buffer, DEFAULT_HEADROOM)
    }

    pub fn with_headroom(tcp: TcpParams, buffer: f64, headroom: f64) -> Result<Self> {
        let p = FiniteBufferParams { tcp, buffer, headroom };
        p.validate()?;
        Ok(p)
    }

    /// Configuration whose effective limit B~ is given directly (b_L = 0, no delay term).
    pub fn from_effective_limit(tcp: TcpParams, limit: f64) -> Result<Self> {
        let tcp = tcp.with_delay(0.0)?;
        Self::with_headroom(tcp, limit, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.tcp.validate()?;
        if !(self.buffer > 0.0) || !self.buffer.is_finite() {
            return Err(invalid(format!("buffer size must be positive, got {}", self.buffer)));
        }
        if !(self.headroom >= 0.0) || !self.headroom.is_finite() {
            return Err(invalid(format!("headroom must be nonnegative, got {}", self.headroom)));
        }
        Ok(())
    }

    /// B~ = B + b_L + 2 alpha D.
    pub fn effective_limit(&self) -> f64 {
        self.buffer + self.headroom + self.tcp.bdp()
    }

    /// Control parameter x = (lambda/alpha) B~^{m+1} / (m+1).
    pub fn control(&self) -> f64 {
        let m = self.tcp.m;
        self.tcp.loss_ratio() * self.effective_limit().powf(m + 1.0) / (m + 1.0)
    }

    pub fn c(&self) -> f64 {
        self.tcp.c()
    }
}

fn check_a_args(x: f64, c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(domain(format!("c must lie in (0, 1), got {c}")));
    }
    if !(x >= 0.0) || x.is_nan() {
        return Err(domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(())
}

/// e^{-x}(1 + S(x)) with S(x) = sum_{n>=1} x^n/n! prod_{l<=n}(1 - c^l).
/// Terms are Poisson weights times a decreasing product, so the sum is
/// positive and tends to L(c) for large x.
fn scaled_series(x: f64, c: f64, cfg: &NumericsConfig) -> f64 {
    let mut t = (-x).exp();
    let mut sum = t;
    let mut cn = 1.0;
    let mut n = 0u32;
    loop {
        n += 1;
        cn *= c;
        t *= x / f64::from(n) * (1.0 - cn);
        sum += t;
        if f64::from(n) > x && t <= cfg.series_rel_tol * sum {
            return sum;
        }
    }
}

/// S(x)/x = sum_{n>=1} x^{n-1}/n! prod_{l<=n}(1 - c^l), finite at x = 0.
fn series_over_x(x: f64, c: f64, cfg: &NumericsConfig) -> f64 {
    let mut t = 1.0 - c;
    let mut sum = t;
    let mut cn = c;
    let mut n = 1u32;
    loop {
        n += 1;
        cn *= c;
        t *= x / f64::from(n) * (1.0 - cn);
        sum += t;
        if f64::from(n) > x && t <= cfg.series_rel_tol * sum {
            return sum;
        }
    }
}

/// A(x) from the direct sum G(x) = sum_k (e^{c^{k+1} x} - e^{c^k x}) prod_{l<=k} 1/(1-c^l).
pub fn buffer_loss_ratio_a_direct(x: f64, c: f64) -> Result<f64> {
    check_a_args(x, c)?;
    if x > 700.0 {
        return Err(domain(format!("direct evaluation of G overflows at x = {x}")));
    }
    let l = specfun::euler_product_l(c)?;
    let mut g = 0.0;
    let mut prod = 1.0;
    let mut ck = 1.0;
    for k in 0..2000 {
        if k > 0 {
            prod /= 1.0 - ck;
        }
        // e^{c^{k+1}x} - e^{c^k x} = e^{c^{k+1}x}(1 - e^{(1-c)c^k x})
        let term = -(c * ck * x).exp() * ((1.0 - c) * ck * x).exp_m1() * prod;
        g += term;
        if term.abs() <= 1e-17 * g.abs() {
            break;
        }
        ck *= c;
    }
    Ok(1.0 / (1.0 + l * g.abs()))
}

/// A(x) = 1/(1 + S(x)) from the positive series, evaluated in e^{-x}-scaled form.
pub fn buffer_loss_ratio_a_series(x: f64, c: f64) -> Result<f64> {
    check_a_args(x, c)?;
    if x > 745.0 {
        return Err(domain(format!("scaled series underflows at x = {x}")));
    }
    let cfg = NumericsConfig::DEFAULT;
    Ok((-x).exp() / scaled_series(x, c, &cfg))
}

/// Fraction of loss events caused by the buffer.
pub fn buffer_loss_ratio_a(x: f64, c: f64) -> Result<f64> {
    buffer_loss_ratio_a_with(x, c, &NumericsConfig::DEFAULT)
}

pub fn buffer_loss_ratio_a_with(x: f64, c: f64, cfg: &NumericsConfig) -> Result<f64> {
    check_a_args(x, c)?;
    if x == 0.0 {
        Ok(1.0)
    } else if x < cfg.a_series_switch {
        buffer_loss_ratio_a_direct(x, c)
    } else if x <= cfg.a_asymptotic {
        Ok((-x).exp() / scaled_series(x, c, cfg))
    } else {
        Ok((-x).exp() / specfun::euler_product_l(c)?)
    }
}

/// A e^x, which stays O(1) where A itself underflows.
fn a_times_exp(x: f64, c: f64, cfg: &NumericsConfig) -> Result<f64> {
    if x < cfg.a_series_switch {
        Ok(buffer_loss_ratio_a_with(x, c, cfg)? * x.exp())
    } else if x <= cfg.a_asymptotic {
        Ok(1.0 / scaled_series(x, c, cfg))
    } else {
        Ok(1.0 / specfun::euler_product_l(c)?)
    }
}

/// Total loss rate lambda' = lambda / (1 - A), including buffer losses.
/// Written as alpha (m+1) / (B~^{m+1} S(x)/x) + lambda, which stays finite
/// at lambda = 0 where it reduces to the sawtooth rate alpha (m+1)/((1-c) B~^{m+1}).
pub fn effective_loss(params: &FiniteBufferParams) -> Result<f64> {
    params.validate()?;
    let cfg = NumericsConfig::DEFAULT;
    let m = params.tcp.m;
    let c = params.c();
    let x = params.control();
    let s_over_x = if x <= cfg.a_series_switch {
        series_over_x(x, c, &cfg)
    } else {
        let a = buffer_loss_ratio_a_with(x, c, &cfg)?;
        if a == 0.0 {
            return Ok(params.tcp.lambda);
        }
        (1.0 - a) / (a * x)
    };
    let b = params.effective_limit();
    Ok(params.tcp.alpha * (m + 1.0) / (b.powf(m + 1.0) * s_over_x) + params.tcp.lambda)
}

/// Coefficients of the piecewise finite-buffer law.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteBufferSolution {
    pub params: FiniteBufferParams,
    /// Buffer share of loss events.
    pub a: f64,
    pub x: f64,
    pub c: f64,
    /// Effective limit B~.
    pub limit: f64,
    /// h[n][k] for level n; trailing negligible columns are dropped.
    pub h: Vec<Vec<f64>>,
    /// I_0..I_N.
    pub i: Vec<f64>,
    #[serde(skip)]
    cfg: NumericsConfig,
}

/// E(y) = e^{-cy} - e^{-y}.
fn e_diff(y: f64, c: f64) -> f64 {
    -(-c * y).exp() * (-(1.0 - c) * y).exp_m1()
}

pub fn solve_finite_distribution(params: &FiniteBufferParams) -> Result<FiniteBufferSolution> {
    solve_finite_distribution_with(params, &NumericsConfig::DEFAULT)
}

pub fn solve_finite_distribution_with(params: &FiniteBufferParams, cfg: &NumericsConfig) -> Result<FiniteBufferSolution> {
    params.validate()?;
    if params.tcp.lambda == 0.0 {
        return Err(invalid("lambda = 0 has a deterministic sawtooth, not a continuous law; simulate it instead"));
    }
    let c = params.c();
    let x = params.control();
    let a = buffer_loss_ratio_a_with(x, c, cfg)?;
    let h00 = a_times_exp(x, c, cfg)?;
    let mut h = vec![vec![h00]];
    let mut i = vec![-h00 * ((c - 1.0) * x).exp_m1()];
    let mut cn = 1.0;
    for n in 0..cfg.finite_level_cap {
        if cn * x < cfg.finite_level_floor {
            break;
        }
        let row = &h[n];
        let mut next_i = i[n];
        let mut tail = 0.0;
        let mut inv_ck = 1.0;
        for hk in row {
            let d = inv_ck - c;
            next_i -= e_diff(cn * d * x, c) * hk / d;
            tail += hk / d * (-cn * c * d * x).exp();
            inv_ck /= c;
        }
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(next_i + tail);
        for k in 1..=row.len() {
            next.push(row[k - 1] / (c - c.powi(1 - k as i32)));
        }
        let lead = next[0].abs();
        while next.len() > 4 && next.last().map_or(false, |v| v.abs() < cfg.column_drop_rel * lead) {
            next.pop();
        }
        h.push(next);
        i.push(next_i);
        cn *= c;
    }
    if !h.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::NonConvergence { what: format!("finite-buffer recursion at x={x}"), iterations: h.len() });
    }
    Ok(FiniteBufferSolution { params: *params, a, x, c, limit: params.effective_limit(), h, i, cfg: *cfg })
}

/// Continuous part and Dirac component of a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedDensity {
    pub density: f64,
    pub point_mass_at: f64,
    pub point_mass_weight: f64,
}

/// Summary written next to exported tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSummary {
    #[serde(rename = "A")]
    pub a: f64,
    pub x: f64,
    pub c: f64,
    #[serde(rename = "B_eff")]
    pub b_eff: f64,
    pub lambda_eff: f64,
}

impl FiniteBufferSolution {
    /// Index of the deepest level.
    pub fn levels(&self) -> usize {
        self.h.len() - 1
    }

    fn s(&self) -> f64 {
        self.params.tcp.loss_ratio()
    }

    fn m(&self) -> f64 {
        self.params.tcp.m
    }

    fn beta(&self) -> f64 {
        self.params.tcp.beta
    }

    /// Level n whose interval (beta^{n+1} B~, beta^n B~] contains w.
    fn level_of(&self, w: f64) -> usize {
        let beta = self.beta();
        let mut n = ((self.limit / w).ln() / (1.0 / beta).ln()).floor().max(0.0) as usize;
        // Correct the floor against rounding at the boundaries.
        while n > 0 && w > beta.powi(n as i32) * self.limit {
            n -= 1;
        }
        while w <= beta.powi(n as i32 + 1) * self.limit && n < self.levels() {
            n += 1;
        }
        n.min(self.levels())
    }

    /// Regular part phi of the before-loss law, which integrates to 1 - A.
    pub fn phi(&self, w: f64) -> f64 {
        if !(w > 0.0) || w > self.limit {
            return 0.0;
        }
        let (s, m) = (self.s(), self.m());
        let y = s * w.powf(m + 1.0) / (m + 1.0);
        let mut sum = 0.0;
        let mut inv_ck = 1.0;
        for hk in &self.h[self.level_of(w)] {
            sum += hk * (-inv_ck * y).exp();
            inv_ck /= self.c;
        }
        (s * w.powf(m) * sum).max(0.0)
    }

    fn breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let beta = self.beta();
        let mut pts = vec![hi];
        let mut b = self.limit;
        for _ in 0..=self.levels() {
            b *= beta;
            if b <= lo {
                break;
            }
            if b < hi {
                pts.push(b);
            }
        }
        pts.push(lo);
        pts.reverse();
        pts
    }

    /// Integral of w^k phi(w) over [lo, hi], split at the level boundaries.
    pub fn integrate_phi(&self, k: f64, lo: f64, hi: f64) -> Result<f64> {
        let hi = hi.min(self.limit);
        let lo = lo.max(0.0);
        if !(hi > lo) {
            return Ok(0.0);
        }
        let pts = self.breaks(lo, hi);
        let f = |w: f64| if k == 0.0 { self.phi(w) } else { w.powf(k) * self.phi(w) };
        Ok(quad::integrate_breaks(f, &pts, self.cfg.quad_abs_tol, self.cfg.quad_rel_tol)?.value)
    }

    /// E[W^k] under the normalized law f = phi/(1 - A).
    pub fn moment(&self, k: f64) -> Result<f64> {
        Ok(self.integrate_phi(k, 0.0, self.limit)? / (1.0 - self.a))
    }

    /// Normalized finite-buffer window density; zero above B~.
    pub fn pdf(&self, w: f64) -> f64 {
        if self.a >= 1.0 {
            return 0.0;
        }
        self.phi(w) / (1.0 - self.a)
    }

    /// Before-loss law: phi plus a Dirac mass A at B~.
    pub fn before_loss_pdf(&self, w: f64) -> MixedDensity {
        MixedDensity { density: self.phi(w), point_mass_at: self.limit, point_mass_weight: self.a }
    }

    /// Normalizer of the FR/FR law, 1 + (lambda/alpha) E_bl[W^m]/(1 - A).
    pub fn frfr_normalizer(&self) -> Result<f64> {
        let m = self.m();
        let ebl = self.a * self.limit.powf(m) + self.integrate_phi(m, 0.0, self.limit)?;
        Ok(1.0 + self.s() * ebl / (1.0 - self.a))
    }

    /// FR/FR law; the plateau after a buffer loss puts a Dirac mass at beta B~.
    pub fn frfr_pdf(&self, w: f64) -> Result<MixedDensity> {
        let norm = self.frfr_normalizer()?;
        Ok(self.frfr_pdf_with_normalizer(w, norm))
    }

    /// As [`Self::frfr_pdf`] with a precomputed normalizer, for evaluation on grids.
    pub fn frfr_pdf_with_normalizer(&self, w: f64, norm: f64) -> MixedDensity {
        let (s, m, beta) = (self.s(), self.m(), self.beta());
        let mut density = self.pdf(w);
        if w > 0.0 {
            density += s * beta.powf(-(m + 1.0)) * w.powf(m) * self.pdf(w / beta);
        }
        let weight = s * self.limit.powf(m) * self.a / (1.0 - self.a);
        MixedDensity { density: density / norm, point_mass_at: beta * self.limit, point_mass_weight: weight / norm }
    }

    /// Mass of the continuous FR/FR part over [lo, hi].
    pub fn integrate_frfr(&self, lo: f64, hi: f64, norm: f64) -> Result<f64> {
        let beta = self.beta();
        let m = self.m();
        // Plateau term: substitute u = w/beta.
        let plain = self.integrate_phi(0.0, lo, hi)?;
        let plateau = self.s() * self.integrate_phi(m, lo / beta, hi / beta)?;
        Ok((plain + plateau) / (1.0 - self.a) / norm)
    }

    /// E[W^k] under the FR/FR law, atom included.
    pub fn frfr_moment(&self, k: f64) -> Result<f64> {
        let norm = self.frfr_normalizer()?;
        let (s, m, beta) = (self.s(), self.m(), self.beta());
        let cont = self.integrate_phi(k, 0.0, self.limit)? + s * beta.powf(k) * self.integrate_phi(k + m, 0.0, self.limit)?;
        let atom = self.frfr_pdf_with_normalizer(1.0, norm);
        Ok(cont / (1.0 - self.a) / norm + atom.point_mass_weight * atom.point_mass_at.powf(k))
    }

    pub fn summary(&self) -> Result<FiniteSummary> {
        Ok(FiniteSummary { a: self.a, x: self.x, c: self.c, b_eff: self.limit, lambda_eff: effective_loss(&self.params)? })
    }
}

/// Normalized window density f_W(w) of a solved configuration.
pub fn finite_window_pdf(sol: &FiniteBufferSolution, w: f64) -> f64 {
    sol.pdf(w)
}

pub fn finite_frfr_pdf(sol: &FiniteBufferSolution, w: f64) -> Result<MixedDensity> {
    sol.frfr_pdf(w)
}

pub fn before_loss_pdf(sol: &FiniteBufferSolution, w: f64) -> MixedDensity {
    sol.before_loss_pdf(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lan_buffer(p: f64, limit: f64) -> FiniteBufferParams {
        FiniteBufferParams::from_effective_limit(TcpParams::lan(p).unwrap(), limit).unwrap()
    }

    #[test]
    fn a_reference_values() {
        assert_eq!(buffer_loss_ratio_a(0.0, 0.25).unwrap(), 1.0);
        assert!((buffer_loss_ratio_a(1.0, 0.25).unwrap() - 0.44395170439).abs() < 1e-10);
        assert!((buffer_loss_ratio_a(5.0, 0.25).unwrap() - 0.0096998050810).abs() < 1e-12);
    }

    #[test]
    fn a_paths_agree() {
        for x in [1e-3, 0.1, 1.0, 5.0, 29.0, 30.0, 50.0] {
            let d = buffer_loss_ratio_a_direct(x, 0.25).unwrap();
            let s = buffer_loss_ratio_a_series(x, 0.25).unwrap();
            assert!(((d - s) / s).abs() < 1e-10, "x={x}: {d} vs {s}");
        }
    }

    #[test]
    fn a_large_x_asymptotic() {
        let l = specfun::euler_product_l(0.25).unwrap();
        let a = buffer_loss_ratio_a(700.0, 0.25).unwrap();
        assert!(((a - (-700f64).exp() / l) / a).abs() < 1e-12);
        let a450 = buffer_loss_ratio_a(450.0, 0.25).unwrap();
        assert!(((a450 * 450f64.exp() * l) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn a_rejects_bad_input() {
        assert!(buffer_loss_ratio_a(-1.0, 0.25).is_err());
        assert!(buffer_loss_ratio_a(1.0, 1.0).is_err());
    }

    #[test]
    fn effective_loss_limits() {
        let tcp = TcpParams::lan(0.0).unwrap();
        let p = FiniteBufferParams::from_effective_limit(tcp, 50.0).unwrap();
        let want = 8.0 / (3.0 * 2500.0);
        assert!(((effective_loss(&p).unwrap() - want) / want).abs() < 1e-14);
        // p' ~ 8/(3 B~^2) + 3p/8 for small p.
        let q = lan_buffer(1e-7, 50.0);
        let approx = want + 0.375 * 1e-7;
        assert!((effective_loss(&q).unwrap() - approx).abs() < 1e-9);
        // A -> 0 far from the buffer.
        let far = lan_buffer(1e-2, 1e4);
        assert!((effective_loss(&far).unwrap() - 1e-2).abs() < 1e-15);
        // lambda/(1-A) identity.
        let mid = lan_buffer(1e-3, 60.0);
        let a = buffer_loss_ratio_a(mid.control(), 0.25).unwrap();
        assert!(((effective_loss(&mid).unwrap() - 1e-3 / (1.0 - a)) / 1e-3).abs() < 1e-12);
    }

    #[test]
    fn phi_integrates_to_one_minus_a() {
        for (p, b) in [(8e-4, 52.5354), (4.0 / 3600.0, 60.0), (1e-3, 1e3), (1e-2, 5.0)] {
            let sol = solve_finite_distribution(&lan_buffer(p, b)).unwrap();
            let total = sol.integrate_phi(0.0, 0.0, b).unwrap();
            assert!((total - (1.0 - sol.a)).abs() < 1e-8, "p={p} B={b}: {total} vs {}", 1.0 - sol.a);
        }
    }

    #[test]
    fn frfr_mass_sums_to_one() {
        for (p, b) in [(4.0 / 3600.0, 60.0), (8e-4, 52.5354)] {
            let sol = solve_finite_distribution(&lan_buffer(p, b)).unwrap();
            let norm = sol.frfr_normalizer().unwrap();
            let cont = sol.integrate_frfr(0.0, b, norm).unwrap();
            let pm = sol.frfr_pdf_with_normalizer(1.0, norm);
            assert_eq!(pm.point_mass_at, 0.5 * b);
            assert!((cont + pm.point_mass_weight - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn frfr_moment_matches_quadrature() {
        let sol = solve_finite_distribution(&lan_buffer(1e-2, 60.0)).unwrap();
        let norm = sol.frfr_normalizer().unwrap();
        assert!((sol.frfr_moment(0.0).unwrap() - 1.0).abs() < 1e-8);
        let atom = sol.frfr_pdf_with_normalizer(1.0, norm);
        let f = |w: f64| w * sol.frfr_pdf_with_normalizer(w, norm).density;
        let pts: Vec<f64> = (0..=600).map(|i| 0.1 * i as f64).collect();
        let direct = quad::integrate_breaks(f, &pts, 1e-12, 1e-10).unwrap().value + atom.point_mass_at * atom.point_mass_weight;
        assert!((sol.frfr_moment(1.0).unwrap() - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn columns_decay() {
        let sol = solve_finite_distribution(&lan_buffer(4.0 / 3600.0, 60.0)).unwrap();
        for row in sol.h.iter().skip(5) {
            assert!((row[4] / row[0]).abs() < 1e-3);
        }
    }

    #[test]
    fn pdf_vanishes_above_limit() {
        let sol = solve_finite_distribution(&lan_buffer(1e-3, 60.0)).unwrap();
        assert_eq!(sol.pdf(60.0001), 0.0);
        assert!(sol.pdf(59.9) > 0.0);
        assert_eq!(sol.before_loss_pdf(10.0).point_mass_weight, sol.a);
    }

    #[test]
    fn lambda_zero_is_rejected() {
        assert!(solve_finite_distribution(&lan_buffer(0.0, 50.0)).is_err());
    }
}
