//! Closed-form statistics of the growing preferential-attachment tree.
//!
//! Every edge carries a state `(n, q)`: the number of vertices below its
//! younger endpoint and that endpoint's in-degree. For `0 < alpha < 1`,
//!
//! ```text
//! P_tau(n, q) = ((tau+1-alpha)/tau) g(n, q),
//! g(n, q)     = (1/alpha-1)_q / (2-alpha)_{n+1} * D(n, q),
//! D(n, q)     = sum_k (-1)^k / (k! (q-k)!) (-alpha k)_n,
//! ```
//!
//! for `q <= n < tau`. `g` is the infinite-network joint law. The alternating
//! sums lose many digits for small `alpha`; they are evaluated in log space
//! with sign tracking, and when the result is tiny compared with the largest
//! term they are redone in exact rational arithmetic. Beyond the exact limits
//! the stationary master-equation recursion
//!
//! ```text
//! g(n,q) (n+2-alpha) = g(n-1,q-1) (alpha q + 1 - 2 alpha) + g(n-1,q) (n-1-alpha q) + [n=q=0]
//! ```
//!
//! is used instead; all of its coefficients are non-negative.
//!
//! Functions taking `tau: Option<usize>` treat `None` as the infinite-network
//! limit. `alpha = 0` is the uniform-attachment limit and `alpha = 1` the star.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::NumericsConfig;
use crate::specfun::{self, lgamma, lgamma_ratio, psi, signed_log_sum, SignedLog, EULER_GAMMA};

/// Largest tree for which [`joint_table`] builds a dense table.
pub const TABLE_MAX_TAU: usize = 4096;

/// Largest tree accepted by the finite-size betweenness routines.
pub const FINITE_CCDF_MAX_TAU: usize = 10_000;

/// Dense triangular table of `P(n, q)` for `0 <= q <= n < n_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistTable {
    /// `None` for the infinite-network law.
    pub tau: Option<usize>,
    pub alpha: f64,
    rows: Vec<Vec<f64>>,
    /// Entries taken from the master-equation recursion because the closed
    /// form cancelled.
    pub fallback_entries: usize,
}

impl DistTable {
    pub(crate) fn zeros(tau: Option<usize>, alpha: f64, n_len: usize) -> DistTable {
        DistTable { tau, alpha, rows: (0..n_len).map(|n| vec![0.0; n + 1]).collect(), fallback_entries: 0 }
    }

    pub(crate) fn set(&mut self, n: usize, q: usize, p: f64) {
        self.rows[n][q] = p;
    }

    /// Number of `n` rows stored.
    pub fn n_len(&self) -> usize {
        self.rows.len()
    }

    /// `P(n, q)`, zero outside the stored support.
    pub fn get(&self, n: usize, q: usize) -> f64 {
        self.rows.get(n).and_then(|r| r.get(q)).copied().unwrap_or(0.0)
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().flatten().sum()
    }

    pub fn marginal_n(&self, n: usize) -> f64 {
        self.rows.get(n).map_or(0.0, |r| r.iter().sum())
    }

    pub fn marginal_q(&self, q: usize) -> f64 {
        self.rows.iter().filter_map(|r| r.get(q)).sum()
    }

    /// `(n, q, P)` triples in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(n, r)| r.iter().enumerate().map(move |(q, &p)| (n, q, p)))
    }

    /// Largest absolute entrywise difference over the union of both supports.
    pub fn max_abs_diff(&self, other: &DistTable) -> f64 {
        let n_len = self.n_len().max(other.n_len());
        let mut worst: f64 = 0.0;
        for n in 0..n_len {
            for q in 0..=n {
                worst = worst.max((self.get(n, q) - other.get(n, q)).abs());
            }
        }
        worst
    }
}

// --- exact arithmetic helpers ----------------------------------------------

/// `alpha` as a rational: the simplest fraction (denominator <= 10^6) within
/// 4 ulp, otherwise the exact binary value.
pub(crate) fn rational_alpha(alpha: f64) -> BigRational {
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = alpha;
    for _ in 0..40 {
        let a = x.floor();
        let ai = a as i64;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > 1_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h2 as f64 / k2 as f64 - alpha).abs() <= 4.0 * f64::EPSILON * alpha.abs() {
            return BigRational::new(BigInt::from(h2), BigInt::from(k2));
        }
        let f = x - a;
        if f == 0.0 {
            break;
        }
        x = 1.0 / f;
    }
    BigRational::from_float(alpha).expect("alpha is finite")
}

/// ln |x| for a nonzero big integer.
fn bigint_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().unwrap_or(f64::INFINITY).ln()
    } else {
        let shift = bits - 64;
        (x >> shift).to_f64().unwrap_or(f64::INFINITY).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn rational_signed_log(r: &BigRational) -> SignedLog {
    if r.is_zero() {
        return SignedLog::ZERO;
    }
    let sign = if r.is_negative() { -1 } else { 1 };
    SignedLog { sign, ln_abs: bigint_ln(r.numer().magnitude()) - bigint_ln(r.denom().magnitude()) }
}

/// Nearest float to a rational, through logs when the parts overflow.
pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    match r.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => rational_signed_log(r).value(),
    }
}

// --- alternating Pochhammer sums -------------------------------------------

/// Linear form `(k_coef + ak_coef alpha) k + c + ca alpha`.
#[derive(Debug, Clone, Copy)]
struct Lin {
    k: i64,
    ak: i64,
    c: i64,
    ca: i64,
}

impl Lin {
    const fn new(k: i64, ak: i64, c: i64, ca: i64) -> Lin {
        Lin { k, ak, c, ca }
    }

    fn eval(&self, alpha: f64, k: usize) -> f64 {
        let kf = k as f64;
        self.k as f64 * kf + self.ak as f64 * alpha * kf + self.c as f64 + self.ca as f64 * alpha
    }

    /// Value times `d` for `alpha = p / d`.
    fn eval_scaled(&self, p: &BigInt, d: &BigInt, k: usize) -> BigInt {
        let k = k as i64;
        d * (self.k * k + self.c) + p * (self.ak * k + self.ca)
    }
}

/// `alpha k + 2 - alpha`
const TWO_MINUS_ALPHA: Lin = Lin::new(0, 1, 2, -1);
/// `alpha k + 1 - alpha`
const ONE_MINUS_ALPHA: Lin = Lin::new(0, 1, 1, -1);

/// `sum_{k=k0}^{q} (-1)^k / (k! (q-k)!) (c0 + ca0 alpha - alpha k)_n / prod_j denoms_j(k)`.
struct AltSum<'a> {
    q: usize,
    k0: usize,
    n: usize,
    shift: (i64, i64),
    denoms: &'a [Lin],
}

impl AltSum<'_> {
    fn plain(q: usize, n: usize, denoms: &[Lin]) -> AltSum<'_> {
        AltSum { q, k0: 0, n, shift: (0, 0), denoms }
    }

    /// `None` when the float sum cancels and the exact limits are exceeded.
    fn eval(&self, alpha: f64, cfg: &NumericsConfig) -> Result<Option<SignedLog>> {
        let mut terms = Vec::with_capacity(self.q + 1);
        let base = self.shift.0 as f64 + self.shift.1 as f64 * alpha;
        for k in self.k0..=self.q {
            let mut t = specfun::pochhammer_signed(base - alpha * k as f64, self.n as f64)?;
            if t.is_zero() {
                continue;
            }
            t.ln_abs -= lgamma(k as f64 + 1.0) + lgamma((self.q - k) as f64 + 1.0);
            if k % 2 == 1 {
                t.sign = -t.sign;
            }
            for l in self.denoms {
                let v = l.eval(alpha, k);
                if v == 0.0 {
                    return Err(domain("vanishing denominator in alternating sum"));
                }
                t = t.div(SignedLog::from_f64(v));
            }
            terms.push(t);
        }
        let (sum, largest, scale) = signed_log_sum(&terms);
        if largest == 0.0 {
            return Ok(Some(SignedLog::ZERO));
        }
        if sum.abs() >= cfg.d_cancellation_ratio * largest {
            let sign = if sum > 0.0 { 1 } else { -1 };
            return Ok(Some(SignedLog { sign, ln_abs: sum.abs().ln() + scale }));
        }
        if self.q <= cfg.d_exact_max_q && self.n <= cfg.d_exact_max_n {
            return self.eval_exact(alpha).map(Some);
        }
        Ok(None)
    }

    fn eval_exact(&self, alpha: f64) -> Result<SignedLog> {
        let ar = rational_alpha(alpha);
        let (p, d) = (ar.numer().clone(), ar.denom().clone());
        // Accumulates q! d^n times the sum.
        let mut total = BigRational::zero();
        let mut binom = BigInt::one();
        for k in 0..=self.q {
            if k > 0 {
                binom = binom * BigInt::from(self.q - k + 1) / BigInt::from(k);
            }
            if k < self.k0 {
                continue;
            }
            let mut num = binom.clone();
            let slope = self.shift.1 - k as i64;
            for i in 0..self.n {
                let f = &d * (self.shift.0 + i as i64) + &p * slope;
                if f.is_zero() {
                    num = BigInt::zero();
                    break;
                }
                num *= f;
            }
            if num.is_zero() {
                continue;
            }
            let mut den = BigInt::one();
            for l in self.denoms {
                let v = l.eval_scaled(&p, &d, k);
                if v.is_zero() {
                    return Err(domain("vanishing denominator in alternating sum"));
                }
                den *= v;
                num *= &d;
            }
            if k % 2 == 1 {
                num = -num;
            }
            total += BigRational::new(num, den);
        }
        let mut out = rational_signed_log(&total);
        if !out.is_zero() {
            out.ln_abs -= lgamma(self.q as f64 + 1.0) + self.n as f64 * bigint_ln(d.magnitude());
        }
        Ok(out)
    }
}

// --- master-equation recursion ---------------------------------------------

/// Rows `n = 0..n_len` of the infinite-network joint law `g(n, q)`, `q <= min(n, q_max)`.
fn master_rows(alpha: f64, n_len: usize, q_max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_len);
    for n in 0..n_len {
        let width = n.min(q_max) + 1;
        let mut row = vec![0.0; width];
        let nf = n as f64;
        for (q, slot) in row.iter_mut().enumerate() {
            let qf = q as f64;
            let mut v = if n == 0 && q == 0 { 1.0 } else { 0.0 };
            if n > 0 {
                let prev = &rows[n - 1];
                if q > 0 {
                    v += prev[q - 1] * (alpha * qf + 1.0 - 2.0 * alpha);
                }
                if q < n && q < prev.len() {
                    v += prev[q] * (nf - 1.0 - alpha * qf);
                }
            }
            *slot = v / (nf + 2.0 - alpha);
        }
        rows.push(row);
    }
    rows
}

/// Column `g(n, q)` for `n < n_end` (zero below `q`) from the recursion.
fn master_column(alpha: f64, q: usize, n_end: usize) -> Vec<f64> {
    master_rows(alpha, n_end, q).into_iter().map(|r| r.get(q).copied().unwrap_or(0.0)).collect()
}

// --- parameter checks ------------------------------------------------------

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

fn check_tau(tau: usize) -> Result<()> {
    if tau == 0 {
        Err(domain("tau must be at least 1"))
    } else {
        Ok(())
    }
}

fn prefactor(tau: usize, alpha: f64) -> f64 {
    (tau as f64 + 1.0 - alpha) / tau as f64
}

fn pref_opt(tau: Option<usize>, alpha: f64) -> f64 {
    tau.map_or(1.0, |t| prefactor(t, alpha))
}

/// ln (x)_n for x > 0.
fn lp(x: f64, n: f64) -> f64 {
    lgamma_ratio(x, n)
}

// --- joint law ---------------------------------------------------------------

/// `D(n, q)` in signed-log form; `None` if it cancels beyond the exact limits.
pub fn d_nq(alpha: f64, n: usize, q: usize, cfg: &NumericsConfig) -> Result<Option<SignedLog>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("D(n,q) needs 0 < alpha <= 1, got {alpha}")));
    }
    AltSum::plain(q, n, &[]).eval(alpha, cfg)
}

/// `g(n, q)` from the closed form (0 < alpha < 1, q <= n).
fn g_closed(alpha: f64, n: usize, q: usize, cfg: &NumericsConfig) -> Result<Option<f64>> {
    let d = AltSum::plain(q, n, &[]).eval(alpha, cfg)?;
    let ln_pref = lp(1.0 / alpha - 1.0, q as f64) - lp(2.0 - alpha, n as f64 + 1.0);
    Ok(d.map(|d| d.mul(SignedLog { sign: 1, ln_abs: ln_pref }).value()))
}

fn g_value(alpha: f64, n: usize, q: usize, cfg: &NumericsConfig) -> Result<f64> {
    match g_closed(alpha, n, q, cfg)? {
        Some(v) => Ok(v),
        None => Ok(master_rows(alpha, n + 1, q)[n][q]),
    }
}

/// Column `g(n, q)` for `n < n_end`, closed form with a recursion fallback.
fn g_column(alpha: f64, q: usize, n_end: usize, cfg: &NumericsConfig) -> Result<Vec<f64>> {
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(master_column(alpha, q, n_end));
    }
    let mut col = vec![0.0; n_end];
    for (n, slot) in col.iter_mut().enumerate().skip(q) {
        match g_closed(alpha, n, q, cfg)? {
            Some(v) => *slot = v,
            None => return Ok(master_column(alpha, q, n_end)),
        }
    }
    Ok(col)
}

/// Joint probability `P_tau(n, q)` of a uniformly chosen edge.
pub fn joint_pnq(tau: usize, alpha: f64, n: usize, q: usize) -> Result<f64> {
    joint_pnq_with(tau, alpha, n, q, &NumericsConfig::DEFAULT)
}

pub fn joint_pnq_with(tau: usize, alpha: f64, n: usize, q: usize, cfg: &NumericsConfig) -> Result<f64> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    if q > n || n >= tau {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return joint_pnq_er(tau, n, q);
    }
    if alpha == 1.0 {
        return Ok(if n == 0 && q == 0 { 1.0 } else { 0.0 });
    }
    Ok(prefactor(tau, alpha) * g_value(alpha, n, q, cfg)?)
}

/// Uniform-attachment limit of the joint law:
/// `((tau+1)/tau) sum_{k=q-1}^{n-1} c(n-1,k) binom(k,q-1) / (n+2)!` with unsigned
/// Stirling numbers `c`, and `(tau+1)/(2 tau)` at `n = q = 0`.
pub fn joint_pnq_er(tau: usize, n: usize, q: usize) -> Result<f64> {
    check_tau(tau)?;
    if q > n || n >= tau {
        return Ok(0.0);
    }
    let pref = (tau as f64 + 1.0) / tau as f64;
    if n == 0 {
        return Ok(pref / 2.0);
    }
    if q == 0 {
        return Ok(0.0);
    }
    if n - 1 <= 64 {
        let mut s = BigUint::zero();
        let mut binom = BigUint::one();
        for k in q - 1..n {
            if k > q - 1 {
                binom = binom * BigUint::from(k) / BigUint::from(k - q + 1);
            }
            s += specfun::stirling_first_unsigned(n - 1, k)? * &binom;
        }
        let fact: BigUint = (1..=n + 2).map(BigUint::from).product();
        let r = BigRational::new(BigInt::from(s), BigInt::from(fact));
        return Ok(pref * rational_to_f64(&r));
    }
    Ok(pref * master_rows(0.0, n + 1, q)[n][q])
}

/// Full finite-`tau` table from the closed form; entries whose alternating
/// sum cancels are taken from the master-equation recursion.
pub fn joint_table(tau: usize, alpha: f64) -> Result<DistTable> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    if tau > TABLE_MAX_TAU {
        return Err(Error::Size(format!("joint_table supports tau <= {TABLE_MAX_TAU}, got {tau}")));
    }
    if alpha == 0.0 || alpha == 1.0 {
        return joint_table_master(Some(tau), alpha, tau);
    }
    let cfg = NumericsConfig::DEFAULT;
    let pref = prefactor(tau, alpha);
    let mut table = DistTable::zeros(Some(tau), alpha, tau);
    let mut missing = Vec::new();
    let ln_fact: Vec<f64> = (0..=tau).map(|k| lgamma(k as f64 + 1.0)).collect();
    let mut terms = Vec::with_capacity(tau);
    for n in 0..tau {
        let poch: Vec<SignedLog> = (0..=n)
            .map(|k| specfun::pochhammer_signed(-alpha * k as f64, n as f64))
            .collect::<Result<_>>()?;
        let ln_den = lp(2.0 - alpha, n as f64 + 1.0);
        for q in 0..=n {
            terms.clear();
            for (k, pk) in poch.iter().enumerate().take(q + 1) {
                if pk.is_zero() {
                    continue;
                }
                let sign = if k % 2 == 1 { -pk.sign } else { pk.sign };
                terms.push(SignedLog { sign, ln_abs: pk.ln_abs - ln_fact[k] - ln_fact[q - k] });
            }
            let (sum, largest, scale) = signed_log_sum(&terms);
            if largest == 0.0 {
                continue;
            }
            if sum.abs() < cfg.d_cancellation_ratio * largest {
                missing.push((n, q));
                continue;
            }
            let ln_abs = sum.abs().ln() + scale + lp(1.0 / alpha - 1.0, q as f64) - ln_den;
            table.set(n, q, pref * sum.signum() * ln_abs.exp());
        }
    }
    if !missing.is_empty() {
        let q_max = missing.iter().map(|&(_, q)| q).max().unwrap_or(0);
        let g = master_rows(alpha, tau, q_max);
        for &(n, q) in &missing {
            table.set(n, q, pref * g[n][q]);
        }
        table.fallback_entries = missing.len();
    }
    Ok(table)
}

/// Joint law from the master-equation recursion alone: `n_len` rows of
/// `P_tau(n, q)` (or of the infinite-network law when `tau` is `None`).
pub fn joint_table_master(tau: Option<usize>, alpha: f64, n_len: usize) -> Result<DistTable> {
    check_alpha(alpha)?;
    if let Some(t) = tau {
        check_tau(t)?;
        if n_len > t {
            return Err(domain(format!("a tree with {t} edges has n < {t}, asked for {n_len} rows")));
        }
    }
    if n_len > TABLE_MAX_TAU {
        return Err(Error::Size(format!("dense tables support at most {TABLE_MAX_TAU} rows, got {n_len}")));
    }
    let pref = pref_opt(tau, alpha);
    let mut rows = master_rows(alpha, n_len, n_len);
    for v in rows.iter_mut().flatten() {
        *v *= pref;
    }
    Ok(DistTable { tau, alpha, rows, fallback_entries: 0 })
}

// --- marginals ---------------------------------------------------------------

/// `P_tau(n) = ((tau+1-alpha)/tau) (1-alpha) / ((n+1-alpha)(n+2-alpha))`.
pub fn marginal_n(tau: Option<usize>, alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if let Some(t) = tau {
        check_tau(t)?;
        if n >= t {
            return Ok(0.0);
        }
    }
    if alpha == 1.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    Ok(pref_opt(tau, alpha) * (1.0 - alpha) / ((nf + 1.0 - alpha) * (nf + 2.0 - alpha)))
}

/// In-degree marginal `P_tau(q)`.
pub fn marginal_q(tau: Option<usize>, alpha: f64, q: usize) -> Result<f64> {
    marginal_q_with(tau, alpha, q, &NumericsConfig::DEFAULT)
}

pub fn marginal_q_with(tau: Option<usize>, alpha: f64, q: usize, cfg: &NumericsConfig) -> Result<f64> {
    check_alpha(alpha)?;
    if let Some(t) = tau {
        check_tau(t)?;
        if q >= t {
            return Ok(0.0);
        }
    }
    if alpha == 1.0 {
        return Ok(if q == 0 { 1.0 } else { 0.0 });
    }
    if alpha == 0.0 {
        return Ok(match tau {
            None => 0.5f64.powi(q as i32 + 1),
            Some(t) => prefactor(t, 0.0) * master_column(0.0, q, t).iter().sum::<f64>(),
        });
    }
    let x = 1.0 / alpha;
    let pref = pref_opt(tau, alpha);
    let t1 = pref / alpha * (lp(x - 1.0, x) - lp(q as f64 + x - 1.0, x + 1.0)).exp();
    let Some(t) = tau else {
        return Ok(t1);
    };
    match AltSum::plain(q, t, &[TWO_MINUS_ALPHA]).eval(alpha, cfg)? {
        Some(s) => {
            let scale = SignedLog { sign: 1, ln_abs: lp(x - 1.0, q as f64) - lp(2.0 - alpha, t as f64) };
            Ok(t1 - pref * s.mul(scale).value())
        }
        None => Ok(pref * master_column(alpha, q, t).iter().sum::<f64>()),
    }
}

/// `P(cluster size >= n)`.
pub fn ccdf_n(tau: Option<usize>, alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    match tau {
        None => Ok((1.0 - alpha) / (nf + 1.0 - alpha)),
        Some(t) => {
            check_tau(t)?;
            if n >= t {
                return Ok(0.0);
            }
            Ok((1.0 - alpha) * (t - n) as f64 / (t as f64 * (nf + 1.0 - alpha)))
        }
    }
}

/// `P(in-degree >= q)`.
pub fn ccdf_q(tau: Option<usize>, alpha: f64, q: usize) -> Result<f64> {
    ccdf_q_with(tau, alpha, q, &NumericsConfig::DEFAULT)
}

pub fn ccdf_q_with(tau: Option<usize>, alpha: f64, q: usize, cfg: &NumericsConfig) -> Result<f64> {
    check_alpha(alpha)?;
    if q == 0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    if let Some(t) = tau {
        check_tau(t)?;
        if q >= t {
            return Ok(0.0);
        }
    }
    if alpha == 0.0 {
        return match tau {
            None => Ok(0.5f64.powi(q as i32)),
            Some(_) => {
                let below: f64 = (0..q).map(|qq| marginal_q_with(tau, 0.0, qq, cfg)).sum::<Result<f64>>()?;
                Ok(1.0 - below)
            }
        };
    }
    let x = 1.0 / alpha;
    let pref = pref_opt(tau, alpha);
    let head = pref * (lp(x - 1.0, x) - lp(q as f64 + x - 1.0, x)).exp();
    let Some(t) = tau else {
        return Ok(head);
    };
    let mut v = head - (1.0 - alpha) / t as f64;
    if q >= 2 {
        let denoms = [Lin::new(0, 1, 1, 0), Lin::new(0, 1, 2, 0)];
        let sum = AltSum { q: q - 2, k0: 0, n: t - 1, shift: (1, -1), denoms: &denoms };
        match sum.eval(alpha, cfg)? {
            Some(s) => {
                let scale = SignedLog {
                    sign: 1,
                    ln_abs: lp(x - 1.0, q as f64) - lp(2.0 - alpha, t as f64) + 2.0 * alpha.ln(),
                };
                v += pref * s.mul(scale).value();
            }
            None => {
                let rows = master_rows(alpha, t, t);
                let tail: f64 = rows.iter().map(|r| r.iter().skip(q).sum::<f64>()).sum();
                v = pref * tail;
            }
        }
    }
    Ok(v)
}

// --- conditional means ---------------------------------------------------------

/// `E[q | n]`, independent of `tau`.
pub fn cond_mean_q_given_n(alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        // psi(n+1) + gamma, i.e. the harmonic number H_n.
        return Ok(if n <= 100_000 {
            (1..=n).rev().map(|j| 1.0 / j as f64).sum()
        } else {
            psi(n as f64 + 1.0) + EULER_GAMMA
        });
    }
    if alpha == 1.0 {
        return Ok(n as f64);
    }
    // Gamma(2-alpha)/alpha (n+1-alpha)_alpha - 1/alpha + 1 = 1 + expm1(ln R)/alpha, where
    // R = Gamma(2-alpha) Gamma(n+1) / Gamma(n+1-alpha) = prod_{j=2}^{n} j/(j-alpha).
    let ln_r = match n {
        0 => (1.0 - alpha).ln(),
        1..=64 => (2..=n).map(|j| -(-alpha / j as f64).ln_1p()).sum(),
        _ => lgamma(2.0 - alpha) + lp(n as f64 + 1.0 - alpha, alpha),
    };
    Ok(1.0 + ln_r.exp_m1() / alpha)
}

/// Infinite-network `E[n | q]`.
fn cond_mean_n_infinite(alpha: f64, q: usize) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(2f64.powi(q as i32 + 1) - 2.0);
    }
    if alpha == 1.0 {
        return if q == 0 { Ok(0.0) } else { Err(domain("a star has no edge with q > 0")) };
    }
    let x = 1.0 / alpha;
    Ok((1.0 - alpha) * (lp(q as f64 + x, x) - lp(x - 1.0, x)).exp() - 2.0 + alpha)
}

/// `E[f(n) | q]` by summing the recursion column (finite tau).
fn direct_conditional(tau: usize, alpha: f64, q: usize, f: impl Fn(usize) -> f64) -> f64 {
    let col = master_column(alpha, q, tau);
    let (mut num, mut den) = (0.0, 0.0);
    for (n, g) in col.iter().enumerate().skip(q) {
        num += f(n) * g;
        den += g;
    }
    num / den
}

/// `E[n | q]`; the finite-`tau` form carries the factor `G_tau(q)`.
pub fn cond_mean_n_given_q(tau: Option<usize>, alpha: f64, q: usize) -> Result<f64> {
    cond_mean_n_given_q_with(tau, alpha, q, &NumericsConfig::DEFAULT)
}

pub fn cond_mean_n_given_q_with(tau: Option<usize>, alpha: f64, q: usize, cfg: &NumericsConfig) -> Result<f64> {
    check_alpha(alpha)?;
    let Some(t) = tau else {
        return cond_mean_n_infinite(alpha, q);
    };
    check_tau(t)?;
    if q >= t {
        return Err(domain(format!("E[n|q] needs q < tau, got q={q}, tau={t}")));
    }
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(direct_conditional(t, alpha, q, |n| n as f64));
    }
    match g_factor(t, alpha, q, cfg)? {
        Some(g) => Ok((cond_mean_n_infinite(alpha, q)? + 2.0 - alpha) * g - 2.0 + alpha),
        None => Ok(direct_conditional(t, alpha, q, |n| n as f64)),
    }
}

/// Finite-size factor `G_tau(q)`.
fn g_factor(tau: usize, alpha: f64, q: usize, cfg: &NumericsConfig) -> Result<Option<f64>> {
    let x = 1.0 / alpha;
    let num = AltSum::plain(q, tau, &[ONE_MINUS_ALPHA]).eval(alpha, cfg)?;
    let den = AltSum::plain(q, tau, &[TWO_MINUS_ALPHA]).eval(alpha, cfg)?;
    let (Some(num), Some(den)) = (num, den) else {
        return Ok(None);
    };
    let ln_alpha = alpha.ln();
    let qf = q as f64 + 1.0;
    let tf = tau as f64;
    let num = 1.0 - num.mul(SignedLog { sign: 1, ln_abs: lp(x - 1.0, qf) - lp(1.0 - alpha, tf) + ln_alpha }).value();
    let den = 1.0 - den.mul(SignedLog { sign: 1, ln_abs: lp(2.0 * x - 1.0, qf) - lp(2.0 - alpha, tf) + ln_alpha }).value();
    Ok(Some(num / den))
}

// --- betweenness -------------------------------------------------------------

/// Infinite-network CCDF of the rescaled betweenness `Lambda = n + 1` given `q`.
pub fn betweenness_ccdf_given_q(lambda: usize, q: usize, alpha: f64) -> Result<f64> {
    betweenness_ccdf_given_q_with(lambda, q, alpha, &NumericsConfig::DEFAULT)
}

pub fn betweenness_ccdf_given_q_with(lambda: usize, q: usize, alpha: f64, cfg: &NumericsConfig) -> Result<f64> {
    check_alpha(alpha)?;
    if lambda <= q {
        return Err(domain(format!("betweenness CCDF needs Lambda >= q + 1, got Lambda={lambda}, q={q}")));
    }
    if alpha == 1.0 {
        return if q == 0 { Ok(if lambda == 1 { 1.0 } else { 0.0 }) } else { Err(domain("a star has no edge with q > 0")) };
    }
    if alpha > 0.0 {
        let x = 1.0 / alpha;
        let sum = AltSum::plain(q, lambda - 1, &[TWO_MINUS_ALPHA]).eval(alpha, cfg)?;
        if let Some(s) = sum {
            let scale = SignedLog {
                sign: 1,
                ln_abs: lp(2.0 * x - 1.0, q as f64 + 1.0) - lp(2.0 - alpha, lambda as f64 - 1.0) + alpha.ln(),
            };
            return Ok(s.mul(scale).value());
        }
    }
    // 1 - sum_{n=q}^{Lambda-2} g(n,q) / P_inf(q)
    let pq = marginal_q_with(None, alpha, q, cfg)?;
    let col = master_column(alpha, q, lambda - 1);
    Ok(1.0 - col.iter().skip(q).sum::<f64>() / pq)
}

/// Leading large-`Lambda` term `alpha^2 (1-alpha) q^{2/alpha} / (2 Gamma(2/alpha-1) Lambda^2)`.
pub fn betweenness_ccdf_asymptotic(lambda: f64, q: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("asymptotic betweenness law needs 0 < alpha < 1, got {alpha}")));
    }
    let x = 2.0 / alpha;
    let ln = 2.0 * alpha.ln() + (1.0 - alpha).ln() + x * (q as f64).ln() - std::f64::consts::LN_2 - lgamma(x - 1.0);
    Ok(ln.exp() / (lambda * lambda))
}

/// Exact `Lambda^-2` coefficient of the conditional CCDF, from the `k = 1` term:
/// `alpha^2 (1-alpha)/2 (2/alpha-1)_{q+1} / (q-1)!`, divided by `Lambda^2`.
/// [`betweenness_ccdf_asymptotic`] is its large-`q` form.
pub fn betweenness_ccdf_leading(lambda: f64, q: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || q == 0 {
        return Err(domain(format!("leading betweenness term needs 0 < alpha < 1 and q >= 1, got alpha={alpha}, q={q}")));
    }
    let ln = 2.0 * alpha.ln() + (1.0 - alpha).ln() - std::f64::consts::LN_2 + lp(2.0 / alpha - 1.0, q as f64 + 1.0)
        - lgamma(q as f64);
    Ok(ln.exp() / (lambda * lambda))
}

/// Infinite-network `E[Lambda | q] = E[n | q] + 1`.
pub fn betweenness_mean_given_q(q: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(2f64.powi(q as i32 + 1) - 1.0);
    }
    Ok(cond_mean_n_infinite(alpha, q)? + 1.0)
}

/// `sum_{n=q}^{tau-1} D(n,q) / (2-alpha)_{n-1}` with the `k = 1` term split off.
pub fn second_moment_sum(tau: usize, alpha: f64, q: usize) -> Result<Option<f64>> {
    second_moment_sum_with(tau, alpha, q, &NumericsConfig::DEFAULT)
}

pub fn second_moment_sum_with(tau: usize, alpha: f64, q: usize, cfg: &NumericsConfig) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("second-moment sum needs 0 < alpha < 1, got {alpha}")));
    }
    check_tau(tau)?;
    if q >= tau {
        return Err(domain(format!("second-moment sum needs q < tau, got q={q}, tau={tau}")));
    }
    if q == 0 {
        // D(n,0) = (0)_n vanishes beyond n = 0, and (2-alpha)_{-1} = 1/(1-alpha).
        return Ok(Some(1.0 - alpha));
    }
    let tf = tau as f64;
    let head = (1.0 - alpha) / (lgamma(q as f64)).exp()
        * (alpha * psi(tf - alpha) - alpha * psi(1.0 - alpha) - psi(q as f64) - EULER_GAMMA);
    if q == 1 {
        return Ok(Some(head));
    }
    let sum = AltSum { q, k0: 2, n: tau, shift: (0, 0), denoms: &[Lin::new(1, 0, -1, 0)] };
    Ok(sum.eval(alpha, cfg)?.map(|s| {
        let scale = SignedLog { sign: 1, ln_abs: -alpha.ln() - lp(2.0 - alpha, tf - 2.0) };
        head - s.mul(scale).value()
    }))
}

/// Finite-`tau` `E[L | q] = tau E[n+1 | q] - E[(n+1) n | q]`.
pub fn betweenness_mean_given_q_finite(tau: usize, alpha: f64, q: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_tau(tau)?;
    if q >= tau {
        return Err(domain(format!("E[L|q] needs q < tau, got q={q}, tau={tau}")));
    }
    let tf = tau as f64;
    let direct = || direct_conditional(tau, alpha, q, |n| (n as f64 + 1.0) * (tf - n as f64));
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(direct());
    }
    let cfg = NumericsConfig::DEFAULT;
    let Some(s2) = second_moment_sum_with(tau, alpha, q, &cfg)? else {
        return Ok(direct());
    };
    let pq = marginal_q_with(Some(tau), alpha, q, &cfg)?;
    let shifted = prefactor(tau, alpha) * lp(1.0 / alpha - 1.0, q as f64).exp() * s2 / pq;
    let e1 = cond_mean_n_given_q_with(Some(tau), alpha, q, &cfg)?;
    let e_nn1 = shifted - (2.0 - 2.0 * alpha) * e1 - (2.0 - alpha) * (1.0 - alpha);
    Ok(tf * (e1 + 1.0) - e_nn1)
}

/// Real root `n_L = (tau-1)/2 - sqrt((tau+1)^2/4 - L)` of `L = (n+1)(tau-n)`.
pub fn cluster_for_load(tau: usize, l: f64) -> Result<f64> {
    check_tau(tau)?;
    let tf = tau as f64;
    let top = (tf + 1.0) * (tf + 1.0) / 4.0;
    if !(l >= tf && l <= top) {
        return Err(domain(format!("betweenness must lie in [{tf}, {top}] for tau={tau}, got {l}")));
    }
    Ok((tf - 1.0) / 2.0 - (top - l).sqrt())
}

/// CCDF of the edge betweenness over all edges.
pub fn unconditional_betweenness_ccdf(tau: usize, alpha: f64, l: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let nl = cluster_for_load(tau, l)?;
    let tf = tau as f64;
    if alpha == 1.0 {
        return Ok(if nl == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(prefactor(tau, alpha) * (1.0 - alpha) * (tf - 2.0 * nl) / ((nl + 1.0 - alpha) * (tf - nl + 1.0 - alpha)))
}

/// Point law `P_tau(L | q)`; non-zero only where `n_L` is an integer.
pub fn betweenness_pmf_given_q(tau: usize, alpha: f64, l: u64, q: usize) -> Result<f64> {
    let nl = cluster_for_load(tau, l as f64)?.round() as usize;
    if ((nl + 1) * (tau - nl)) as u64 != l {
        return Ok(0.0);
    }
    let pq = marginal_q(Some(tau), alpha, q)?;
    if pq == 0.0 {
        return Err(domain(format!("P_tau(q={q}) vanishes")));
    }
    let mirror = tau - 1 - nl;
    let mut p = joint_pnq(tau, alpha, nl, q)?;
    if mirror != nl {
        p += joint_pnq(tau, alpha, mirror, q)?;
    }
    Ok(p / pq)
}

/// Finite-`tau` `P(L >= Lambda (tau+1-Lambda) | q)`, i.e. both sides of the edge
/// hold at least `Lambda` vertices.
pub fn finite_betweenness_ccdf_given_q(tau: usize, alpha: f64, lambda: usize, q: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_tau(tau)?;
    if tau > FINITE_CCDF_MAX_TAU {
        return Err(Error::Size(format!("finite betweenness CCDF supports tau <= {FINITE_CCDF_MAX_TAU}, got {tau}")));
    }
    if lambda <= q || q >= tau {
        return Err(domain(format!("need q < Lambda and q < tau, got Lambda={lambda}, q={q}, tau={tau}")));
    }
    let col = g_column(alpha, q, tau, &NumericsConfig::DEFAULT)?;
    let total: f64 = col.iter().sum();
    if lambda > tau + 1 - lambda {
        return Ok(0.0);
    }
    let inside: f64 = col[lambda - 1..=tau - lambda].iter().sum();
    Ok(inside / total)
}

/// `F_tau(Lambda | q) - F_inf(Lambda | q)`; decays like `tau^-2` at fixed `Lambda`.
pub fn finite_size_correction_check(tau: usize, alpha: f64, lambda: usize, q: usize) -> Result<f64> {
    Ok(finite_betweenness_ccdf_given_q(tau, alpha, lambda, q)? - betweenness_ccdf_given_q(lambda, q, alpha)?)
}

// --- diagnostics -------------------------------------------------------------

/// Expected in-degree of the root after `tau` attachments.
pub fn root_in_degree_mean(tau: usize, alpha: f64) -> Result<f64> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    let mut e = 1.0;
    for t in 2..=tau {
        let tf = t as f64;
        e += (1.0 - alpha + alpha * e) / (tf - alpha);
    }
    Ok(e)
}

/// The closed value `2/|1-2 alpha|` quoted for `E_inf[(q-1)^2]`. Diagnostic only:
/// it is correct for `alpha < 1/2`, while the moment diverges for `alpha >= 1/2`.
pub fn q_second_moment_claim(alpha: f64) -> f64 {
    2.0 / (1.0 - 2.0 * alpha).abs()
}

/// `E_inf[(q-1)^2]` by direct summation with a power-law tail estimate.
pub fn q_second_moment(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha >= 0.5 {
        return Err(Error::Divergence(format!("E[(q-1)^2] diverges for alpha >= 1/2, got {alpha}")));
    }
    let mut s = 0.0;
    let mut last = 0.0;
    let q_end = 1_000_000usize;
    for q in 0..q_end {
        let p = marginal_q(None, alpha, q)?;
        last = (q as f64 - 1.0).powi(2) * p;
        s += last;
        if alpha == 0.0 && last < 1e-300 {
            return Ok(s);
        }
    }
    // term ~ C q^{1-1/alpha}: tail integral from q_end.
    let expo = 1.0 / alpha - 2.0;
    Ok(s + last * q_end as f64 / expo)
}
