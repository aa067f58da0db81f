//! Numerical thresholds shared by the analytic modules.

use serde::{Deserialize, Serialize};

/// Truncation and tolerance knobs. `Default` holds the values every test and
/// the CLI use unless told otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    /// Stop an infinite product once the factor deviates from 1 by less than this.
    pub product_tail: f64,
    /// Stop a series once |term| < series_rel_tol * |sum|.
    pub series_rel_tol: f64,
    /// Number of residues kept beyond h_0 (h_0..=h_K).
    pub residue_terms: usize,
    /// Relative tolerance for adaptive quadrature.
    pub quad_rel_tol: f64,
    /// Absolute tolerance for adaptive quadrature.
    pub quad_abs_tol: f64,
    /// Tail probability that defines the upper integration limit of a window law.
    pub tail_cut: f64,
    /// Hard cap on the number of levels of the finite-buffer recursion.
    pub finite_level_cap: usize,
    /// Levels are added until c^n x drops below this value.
    pub finite_level_floor: f64,
    /// Columns k > 3 of h_{n,k} are dropped below this fraction of |h_{n,0}|.
    pub column_drop_rel: f64,
    /// Control-parameter value where A(x) switches from the direct G sum to the series.
    pub a_series_switch: f64,
    /// Beyond this x the leading asymptotic e^{-x}/L(c) is used for A(x).
    pub a_asymptotic: f64,
    /// D(n,q) falls back to exact arithmetic when |D| < ratio * largest term.
    pub d_cancellation_ratio: f64,
    /// The exact fallback is attempted only for q up to this value.
    pub d_exact_max_q: usize,
    /// ... and only for n up to this value (exact products grow linearly in n).
    pub d_exact_max_n: usize,
    /// Relative stopping tolerance of the mean-field iteration.
    pub mean_field_rel_tol: f64,
    /// Iteration cap of the mean-field iteration.
    pub mean_field_max_iter: usize,
}

impl NumericsConfig {
    pub const DEFAULT: NumericsConfig = NumericsConfig {
        product_tail: 1e-18,
        series_rel_tol: 1e-16,
        residue_terms: 12,
        quad_rel_tol: 1e-12,
        quad_abs_tol: 1e-15,
        tail_cut: 1e-14,
        finite_level_cap: 64,
        finite_level_floor: 1e-13,
        column_drop_rel: 1e-14,
        a_series_switch: 30.0,
        a_asymptotic: 500.0,
        d_cancellation_ratio: 1e-3,
        d_exact_max_q: 20,
        d_exact_max_n: 4096,
        mean_field_rel_tol: 1e-10,
        mean_field_max_iter: 10_000,
    };
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}
