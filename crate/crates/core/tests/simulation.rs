use fluidtcp::tcp_finite::{buffer_loss_ratio_a, effective_loss, solve_finite_distribution, FiniteBufferParams};
use fluidtcp::tcp_infinite::{AnalyticWindowDistribution, TcpParams, Variant};
use fluidtcp::window_sim::{
    compare_histogram, expected_occupancy, ks_distance, simulate, simulate_streams, BinSpec, ClockMode, FiniteFrfrLaw, FiniteWindowLaw, SimConfig,
    SimResult, WindowLaw,
};
use fluidtcp::Result;

fn lan_limit(p: f64, limit: f64) -> FiniteBufferParams {
    FiniteBufferParams::from_effective_limit(TcpParams::lan(p).unwrap(), limit).unwrap()
}

#[test]
fn frfr_mean_within_three_sigma() {
    let tcp = TcpParams::lan(0.01).unwrap();
    let mut c = SimConfig::new(tcp, None, 200_000, 5);
    c.frfr = true;
    let r = simulate(&c).unwrap();
    let want = AnalyticWindowDistribution::new(tcp, Variant::Frfr).unwrap().mean().unwrap();
    let z = (r.mean_window() - want) / r.mean_window_error();
    assert!(z.abs() < 3.0, "mean {} vs {want} (z = {z})", r.mean_window());
}

#[test]
fn plain_variance_matches() {
    let tcp = TcpParams::lan(0.02).unwrap();
    let r = simulate(&SimConfig::new(tcp, None, 200_000, 9)).unwrap();
    let d = AnalyticWindowDistribution::new(tcp, Variant::Plain).unwrap();
    let sd = d.std_dev().unwrap();
    assert!((r.window_variance().sqrt() / sd - 1.0).abs() < 0.01);
}

#[test]
fn buffer_share_tracks_a() {
    for (x, limit) in [(1.0, 40.0), (3.5, 60.0)] {
        let p = 2.0 * x / (limit * limit);
        let r = simulate(&SimConfig::finite(&lan_limit(p, limit), 50_000, 21)).unwrap();
        let a = buffer_loss_ratio_a(x, 0.25).unwrap();
        assert!((r.buffer_loss_fraction() - a).abs() < 0.02, "x={x}: {} vs {a}", r.buffer_loss_fraction());
    }
}

#[test]
fn effective_loss_matches_measured_rate() {
    let params = lan_limit(8e-4, 52.5354);
    let r = simulate(&SimConfig::finite(&params, 100_000, 4)).unwrap();
    let want = effective_loss(&params).unwrap();
    assert!((r.loss_rate() / want - 1.0).abs() < 0.02, "{} vs {want}", r.loss_rate());
    let z = (r.loss_rate() - want) / r.loss_rate_error();
    assert!(z.abs() < 4.0, "z = {z}");
}

#[test]
fn clock_modes_agree() {
    let params = lan_limit(1e-3, 50.0);
    let mut resample = SimConfig::finite(&params, 100_000, 8);
    let mut residual = resample.clone();
    residual.clock = ClockMode::Residual;
    residual.seed = 9;
    resample.clock = ClockMode::Resample;
    let (a, b) = (simulate(&resample).unwrap(), simulate(&residual).unwrap());
    let se = a.loss_rate_error().hypot(b.loss_rate_error());
    assert!((a.loss_rate() - b.loss_rate()).abs() < 4.0 * se);
    let se = a.buffer_loss_fraction_error().hypot(b.buffer_loss_fraction_error());
    assert!((a.buffer_loss_fraction() - b.buffer_loss_fraction()).abs() < 4.0 * se);
}

#[test]
fn merged_streams_keep_bookkeeping() {
    let mut c = SimConfig::new(TcpParams::lan(0.01).unwrap(), Some(40.0), 2_000, 3);
    c.bins = Some(BinSpec::new(40.0, 40).unwrap());
    let merged = simulate_streams(&c, 3).unwrap();
    assert_eq!(merged.n_losses(), 6_000);
    assert_eq!(merged.batches.len(), 3 * 256);
    assert!((merged.occupancy().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut c2 = c.clone();
    c2.bins = Some(BinSpec::new(40.0, 20).unwrap());
    assert!(merged.merge(&simulate(&c2).unwrap()).is_err());
}

#[test]
fn finite_histogram_fits() {
    // pB~^2/2 = 2 at B~ = 60.
    let params = lan_limit(4.0 / 3600.0, 60.0);
    let sol = solve_finite_distribution(&params).unwrap();
    let mut c = SimConfig::finite(&params, 100_000, 12);
    c.bins = Some(BinSpec::new(60.0, 60).unwrap());
    let r = simulate(&c).unwrap();
    let g = compare_histogram(&r, &FiniteWindowLaw(&sol)).unwrap();
    assert!(g.p_value > 0.01, "{g:?}");
    c.frfr = true;
    let r = simulate(&c).unwrap();
    let g = compare_histogram(&r, &FiniteFrfrLaw::new(&sol).unwrap()).unwrap();
    assert!(g.p_value > 0.01, "{g:?}");
}

#[test]
fn wrong_law_is_rejected() {
    let tcp = TcpParams::lan(0.01).unwrap();
    let mut c = SimConfig::new(tcp, None, 100_000, 2);
    c.bins = Some(BinSpec::new(50.0, 50).unwrap());
    let r = simulate(&c).unwrap();
    let wrong = AnalyticWindowDistribution::new(TcpParams::lan(0.011).unwrap(), Variant::Plain).unwrap();
    assert!(compare_histogram(&r, &wrong).unwrap().p_value < 1e-6);
    let frfr = AnalyticWindowDistribution::new(tcp, Variant::Frfr).unwrap();
    assert!(compare_histogram(&r, &frfr).unwrap().p_value < 1e-6);
}

#[test]
fn self_consistency_ks() {
    let tcp = TcpParams::lan(0.01).unwrap();
    let mut c = SimConfig::new(tcp, None, 1_000_000, 77);
    c.bins = Some(BinSpec::new(50.0, 100).unwrap());
    let r = simulate(&c).unwrap();
    let law = AnalyticWindowDistribution::new(tcp, Variant::Plain).unwrap();
    assert!(compare_histogram(&r, &law).unwrap().ks < 0.01);
}

struct Exponential;

impl WindowLaw for Exponential {
    fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok((-lo).exp() - (-hi).exp())
    }
}

#[test]
fn uniform_histogram_against_exponential() {
    let n = 20;
    let edges: Vec<f64> = (0..=n).map(|i| 10.0 * f64::from(i) / f64::from(n)).collect();
    let mut bin_time = vec![1.0; n as usize];
    bin_time.push(0.0);
    let uniform = SimResult { edges, bin_time, ..simulate(&SimConfig::new(TcpParams::lan(0.01).unwrap(), None, 10, 1)).unwrap() };
    let exp = expected_occupancy(&uniform, &Exponential).unwrap();
    assert!(ks_distance(&uniform.occupancy(), &exp) > 0.3);
}
