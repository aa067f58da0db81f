use fluidtcp::quad;
use fluidtcp::tcp_finite::{solve_finite_distribution, FiniteBufferParams};
use fluidtcp::tcp_infinite::{
    mean_field_fixed_point, wan_truncated_inverse_moment, window_moment, AnalyticWindowDistribution, TcpParams,
    Variant,
};
use fluidtcp::NumericsConfig;
use proptest::prelude::*;

const CFG: NumericsConfig = NumericsConfig::DEFAULT;

fn wan(p: f64, bdp: f64) -> AnalyticWindowDistribution {
    AnalyticWindowDistribution::wan_with_threshold(TcpParams::lan(p).unwrap(), bdp, CFG).unwrap()
}

#[test]
fn all_variants_normalize() {
    for p in [1e-4, 1e-3, 1e-2, 5e-2] {
        let params = TcpParams::lan(p).unwrap();
        for v in [Variant::Plain, Variant::Frfr] {
            let d = AnalyticWindowDistribution::new(params, v).unwrap();
            let mass = d.total_mass().unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{v:?} p={p}: {mass}");
        }
        for bdp in [0.0, 85.33, 170.67] {
            let mass = wan(p, bdp).total_mass().unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "wan p={p} bdp={bdp}: {mass}");
        }
    }
}

#[test]
fn plain_mean_by_quadrature() {
    let d = AnalyticWindowDistribution::new(TcpParams::lan(0.01).unwrap(), Variant::Plain).unwrap();
    let mean = quad::integrate(|w| w * d.pdf(w), 0.0, d.upper_limit(), 1e-14, 1e-13).unwrap().value;
    assert!((mean - 15.269).abs() < 1e-2);
    assert!((mean - window_moment(d.params(), 0.5).unwrap()).abs() < 1e-6);
}

#[test]
fn ccdf_matches_quadrature() {
    let d = AnalyticWindowDistribution::new(TcpParams::lan(0.01).unwrap(), Variant::Plain).unwrap();
    assert_eq!(d.ccdf(0.0).unwrap(), 1.0);
    assert!(d.ccdf(1e4).unwrap() < 1e-300);
    for w in [5.0, 15.0, 40.0] {
        let below = quad::integrate(|u| d.pdf(u), 0.0, w, 1e-15, 1e-13).unwrap().value;
        assert!((d.ccdf(w).unwrap() - (1.0 - below)).abs() < 1e-8, "w={w}");
    }
}

#[test]
fn variant_moments_match_quadrature() {
    for d in [
        AnalyticWindowDistribution::new(TcpParams::lan(1e-2).unwrap(), Variant::Frfr).unwrap(),
        wan(1e-3, 85.33),
        wan(1e-2, 170.67),
    ] {
        let pts = [0.0, d.threshold().max(1e-9).min(d.upper_limit()), d.upper_limit()];
        for k in [1.0, 2.0] {
            let q = quad::integrate_breaks(|w| w.powf(k) * d.pdf(w), &pts, 1e-14, 1e-13).unwrap().value;
            let m = d.moment(k).unwrap();
            assert!(((q - m) / m).abs() < 1e-8, "{:?} k={k}: {q} vs {m}", d.variant());
        }
    }
}

#[test]
fn wan_at_zero_delay_is_frfr() {
    let params = TcpParams::lan(3e-3).unwrap();
    let frfr = AnalyticWindowDistribution::new(params, Variant::Frfr).unwrap();
    let w0 = AnalyticWindowDistribution::new(params, Variant::Wan).unwrap();
    for w in [0.5, 3.0, 20.0, 40.0, 90.0] {
        assert!((frfr.pdf(w) - w0.pdf(w)).abs() <= 1e-15 * frfr.pdf(w).abs());
    }
}

#[test]
fn wan_ideal_limit() {
    let p = 1e-2;
    let plain = AnalyticWindowDistribution::new(TcpParams::lan(p).unwrap(), Variant::Plain).unwrap();
    let inv = plain.moment(-1.0).unwrap();
    let far = wan(p, 1e9);
    for w in [3.0, 10.0, 25.0] {
        let ideal = plain.pdf(w) / (w * inv);
        assert!(((far.pdf(w) - ideal) / ideal).abs() < 1e-6, "w={w}");
    }
}

#[test]
fn truncated_inverse_moment_oracle() {
    let params = TcpParams::lan(1e-3).unwrap();
    let plain = AnalyticWindowDistribution::new(params, Variant::Plain).unwrap();
    let t = 170.67;
    let oracle = quad::integrate(|w| plain.pdf(w) / w, 0.0, t, 1e-15, 1e-13).unwrap().value;
    let v = wan_truncated_inverse_moment(&params, t).unwrap();
    assert!(((v - oracle) / oracle).abs() < 1e-9, "{v} vs {oracle}");
    assert_eq!(wan_truncated_inverse_moment(&params, 0.0).unwrap(), 0.0);
    let full = plain.moment(-1.0).unwrap();
    assert!((wan_truncated_inverse_moment(&params, 1e6).unwrap() - full).abs() < 1e-14);
    assert!((wan_truncated_inverse_moment(&params, f64::INFINITY).unwrap() - full).abs() < 1e-15);
}

#[test]
fn wan_needs_finite_inverse_moment() {
    let m0 = TcpParams::new(0.0, 1.0, 0.5, 1e-2).unwrap();
    assert!(AnalyticWindowDistribution::wan_with_threshold(m0, 10.0, CFG).is_err());
    assert!(AnalyticWindowDistribution::wan_with_threshold(m0, 0.0, CFG).is_ok());
}

#[test]
fn mean_field_reference_points() {
    let link = |p| TcpParams::from_link(256_000.0, 12_000.0, 0.0, p, 1.0, 0.5).unwrap();
    let a = mean_field_fixed_point(&link(1e-3), 20).unwrap();
    assert!((a.total_window - 827.75).abs() < 1.0, "{}", a.total_window);
    let b = mean_field_fixed_point(&TcpParams::lan(5e-3).unwrap(), 2).unwrap();
    assert!((b.total_window - 36.55).abs() < 0.2, "{}", b.total_window);
}

#[test]
fn mean_field_single_flow_is_self_consistent() {
    let params = TcpParams::lan(1e-2).unwrap();
    let sol = mean_field_fixed_point(&params, 1).unwrap();
    let at = AnalyticWindowDistribution::wan_with_threshold(params, sol.total_window, CFG).unwrap();
    assert!(((at.mean().unwrap() - sol.total_window) / sol.total_window).abs() < 1e-9);
}

#[test]
fn table_ccdf_is_consistent() {
    let d = wan(1e-2, 20.0);
    let grid: Vec<f64> = (0..=40).map(|i| f64::from(i) * 2.0).collect();
    let rows = d.table(&grid).unwrap();
    assert_eq!(rows[0][2], 1.0);
    for r in rows.iter().skip(1).step_by(7) {
        assert!((r[2] - d.ccdf(r[0]).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn finite_approaches_infinite_buffer() {
    let p = 1e-3;
    let inf = AnalyticWindowDistribution::new(TcpParams::lan(p).unwrap(), Variant::Plain).unwrap();
    for limit in [1e3, 1e4] {
        let params = FiniteBufferParams::from_effective_limit(TcpParams::lan(p).unwrap(), limit).unwrap();
        let sol = solve_finite_distribution(&params).unwrap();
        let worst = (1..400).map(|i| f64::from(i) * 0.5).map(|w| (sol.pdf(w) - inf.pdf(w)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "B={limit}: {worst}");
    }
}

#[test]
fn finite_coefficients_approach_infinite_residues() {
    let params = FiniteBufferParams::from_effective_limit(TcpParams::lan(1e-3).unwrap(), 1e4).unwrap();
    let sol = solve_finite_distribution(&params).unwrap();
    let h = fluidtcp::tcp_infinite::compute_residues(0.25, 4).unwrap();
    let l_inv = h.h[0];
    // Levels with c^n x >> 1 are in the large-buffer regime.
    for n in 2..6 {
        for k in 0..=2.min(n) {
            assert!(((sol.h[n][k] - h.h[k]) / h.h[k]).abs() < 1e-6, "h[{n}][{k}]");
        }
        assert!((sol.i[n] - l_inv).abs() < 1e-6);
    }
}

#[test]
fn finite_law_collapses_on_control_parameter() {
    let a = FiniteBufferParams::from_effective_limit(TcpParams::lan(1e-3).unwrap(), 60.0).unwrap();
    let b = FiniteBufferParams::from_effective_limit(TcpParams::lan(4e-3).unwrap(), 30.0).unwrap();
    let (sa, sb) = (solve_finite_distribution(&a).unwrap(), solve_finite_distribution(&b).unwrap());
    assert!((sa.a - sb.a).abs() < 1e-12);
    for u in [0.05, 0.3, 0.55, 0.9] {
        let fa = 60.0 * sa.pdf(u * 60.0);
        let fb = 30.0 * sb.pdf(u * 30.0);
        assert!(((fa - fb) / fa).abs() < 1e-10, "u={u}");
    }
}

#[test]
fn finite_frfr_limit_is_infinite_frfr() {
    let p = 1e-2;
    let inf = AnalyticWindowDistribution::new(TcpParams::lan(p).unwrap(), Variant::Frfr).unwrap();
    let params = FiniteBufferParams::from_effective_limit(TcpParams::lan(p).unwrap(), 400.0).unwrap();
    let sol = solve_finite_distribution(&params).unwrap();
    let norm = sol.frfr_normalizer().unwrap();
    assert!(sol.frfr_pdf_with_normalizer(1.0, norm).point_mass_weight < 1e-12);
    for w in [2.0, 10.0, 30.0] {
        let f = sol.frfr_pdf_with_normalizer(w, norm).density;
        assert!((f - inf.pdf(w)).abs() < 1e-9, "w={w}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scale_invariance(p in 1e-4f64..5e-2, alpha in 0.1f64..50.0, w in 0.5f64..80.0, m in 0.5f64..2.0) {
        let base = TcpParams::new(m, alpha, 0.5, p * alpha).unwrap();
        let doubled = TcpParams::new(m, 2.0 * alpha, 0.5, 2.0 * p * alpha).unwrap();
        for v in [Variant::Plain, Variant::Frfr] {
            let a = AnalyticWindowDistribution::new(base, v).unwrap().pdf(w);
            let b = AnalyticWindowDistribution::new(doubled, v).unwrap().pdf(w);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn plain_ccdf_is_monotone(p in 1e-4f64..5e-2, w in 0.0f64..200.0, dw in 0.0f64..10.0) {
        let d = AnalyticWindowDistribution::new(TcpParams::lan(p).unwrap(), Variant::Plain).unwrap();
        let (a, b) = (d.ccdf(w).unwrap(), d.ccdf(w + dw).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn a_decreasing_and_paths_agree(x in 1e-3f64..50.0, dx in 1e-3f64..1.0, beta in 0.2f64..0.9) {
        let c = beta * beta;
        let a1 = fluidtcp::tcp_finite::buffer_loss_ratio_a(x, c).unwrap();
        let a2 = fluidtcp::tcp_finite::buffer_loss_ratio_a(x + dx, c).unwrap();
        prop_assert!(a2 < a1);
        let d = fluidtcp::tcp_finite::buffer_loss_ratio_a_direct(x, c).unwrap();
        let s = fluidtcp::tcp_finite::buffer_loss_ratio_a_series(x, c).unwrap();
        prop_assert!(((d - s) / s).abs() < 1e-10);
    }

    #[test]
    fn effective_loss_monotone(p in 1e-5f64..1e-2, limit in 5.0f64..200.0) {
        let at = |p: f64, l: f64| {
            let params = FiniteBufferParams::from_effective_limit(TcpParams::lan(p).unwrap(), l).unwrap();
            fluidtcp::tcp_finite::effective_loss(&params).unwrap()
        };
        let base = at(p, limit);
        let (up_p, up_b) = (at(p * 1.1, limit), at(p, limit * 0.9));
        prop_assert!(up_p > base);
        // Where A underflows relative to 1, lambda' equals lambda in floating point.
        let x = p * limit * limit / 2.0;
        if x < 30.0 {
            prop_assert!(up_b > base);
        } else {
            prop_assert!(up_b >= base);
        }
    }
}
