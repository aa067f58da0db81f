use fluidtcp::aimd_net::{
    apply_congestion, assign_capacities, draw_losses, draw_losses_rejection, homogeneous_mean_tau, homogeneous_post_event_mean,
    next_congestion, propensity_for_rate, Estimate, run_simulation, sim_rng, CapacityStrategy, EdgeStats, FlowSet, FlowTemplate, FluidNetwork,
    SimOptions, Simulator, SyncModel, DEFAULT_WEIGHT_FLOOR,
};
use fluidtcp::tree_gen::{grow, TreeParams};
use proptest::prelude::*;
use rand::Rng;

fn random_tree_network(nodes: usize, seed: u64) -> (FluidNetwork, EdgeStats) {
    let tree = grow(&TreeParams::new(0.5, nodes - 1, seed).unwrap()).unwrap();
    let stats = EdgeStats::from_tree(&tree);
    let base = FluidNetwork::from_tree(&tree, 1.0).unwrap();
    (assign_capacities(&base, CapacityStrategy::MeanField, 1e4, &stats, DEFAULT_WEIGHT_FLOOR).unwrap(), stats)
}

#[test]
fn fast_path_matches_brute_force_scan() {
    let (net, _) = random_tree_network(50, 4);
    let mut rng = sim_rng(11, 1);
    let mut flows = FlowSet::uniform_pairs(&net, 100, FlowTemplate::default(), &mut rng).unwrap();
    let sync = SyncModel::Uniform(0.4);
    let mut sim = Simulator::new(&net, &flows, &sync, 5, 2).unwrap();
    let mut reference_rng = sim_rng(5, 2);
    for step in 0..2_000 {
        let (tau, edge) = next_congestion(&net, &flows).unwrap();
        let lost = apply_congestion(&net, &mut flows, tau, edge, &sync, &mut reference_rng).unwrap();
        let ev = sim.step().unwrap();
        assert_eq!(ev.edge, edge, "step {step}");
        assert!((ev.tau - tau).abs() <= 1e-9 * (1.0 + tau), "step {step}: {} vs {tau}", ev.tau);
        assert_eq!(ev.lost, lost);
        let x = sim.throughputs();
        for (a, b) in x.iter().zip(&flows.x) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        // Re-anchor the reference so float drift cannot accumulate between the two paths.
        flows.x.copy_from_slice(&x);
    }
}

#[test]
fn capacity_never_exceeded() {
    let (net, _) = random_tree_network(200, 8);
    let mut rng = sim_rng(3, 0);
    let flows = FlowSet::uniform_pairs(&net, 300, FlowTemplate::default(), &mut rng).unwrap();
    let mut sim = Simulator::new(&net, &flows, &SyncModel::Uniform(0.3), 1, 0).unwrap();
    let mut snapshot = flows.clone();
    for _ in 0..20_000 {
        let ev = sim.step().unwrap();
        snapshot.x = sim.throughputs();
        let load = snapshot.edge_load(&net);
        for (e, (l, c)) in load.iter().zip(net.capacity()).enumerate() {
            assert!(*l <= c * (1.0 + 1e-9), "edge {e}: {l} > {c}");
        }
        assert!(load[ev.edge] < net.capacity()[ev.edge]);
    }
}

#[test]
fn conditional_sampler_matches_rejection() {
    let members: Vec<usize> = (0..6).collect();
    let models = [SyncModel::Uniform(0.15), SyncModel::PerFlow(vec![0.05, 0.3, 0.1, 0.6, 0.02, 0.2])];
    for sync in &models {
        let draws = 200_000;
        let (mut fast, mut slow) = (vec![0u64; 6], vec![0u64; 6]);
        let (mut rng_a, mut rng_b) = (sim_rng(1, 0), sim_rng(2, 0));
        let mut out = Vec::new();
        for _ in 0..draws {
            draw_losses(&members, sync, &mut rng_a, &mut out);
            assert!(!out.is_empty());
            out.iter().for_each(|&i| fast[i] += 1);
            draw_losses_rejection(&members, sync, &mut rng_b, &mut out);
            out.iter().for_each(|&i| slow[i] += 1);
        }
        let none: f64 = members.iter().map(|&i| 1.0 - sync.pi(i)).product();
        for i in 0..6 {
            let r = sync.pi(i) / (1.0 - none);
            let sd = (r * (1.0 - r) / draws as f64).sqrt();
            for counts in [&fast, &slow] {
                let z = (counts[i] as f64 / draws as f64 - r) / sd;
                assert!(z.abs() < 5.0, "{sync:?} flow {i}: z = {z}");
            }
        }
    }
}

/// `|mean - target|` within `k` standard errors; exact agreement counts when the error is zero.
fn within(est: &Estimate, target: f64, k: f64) -> bool {
    (est.mean - target).abs() <= k * est.std_err + 1e-12 * target.abs()
}

#[test]
fn homogeneous_closed_forms() {
    let c = 1e5;
    let template = FlowTemplate::default();
    let net = FluidNetwork::single_link(c).unwrap();
    for n in [2usize, 10, 50] {
        for r in [0.2, 0.5, 1.0] {
            if r < 1.0 / n as f64 {
                continue;
            }
            let pi = propensity_for_rate(r, n).unwrap();
            let flows = FlowSet::homogeneous(n, template);
            let mut opts = SimOptions::new(2_000, 17 + n as u64);
            opts.warmup_epochs = 20;
            let rep = run_simulation(&net, &flows, &SyncModel::Uniform(pi), &opts).unwrap();
            let x = homogeneous_post_event_mean(c, n, template.beta, r);
            let tau = homogeneous_mean_tau(c, n, &template, r);
            assert!(within(&rep.post_event, x, 3.0), "n={n} r={r}: post {:?} vs {x}", rep.post_event);
            assert!(within(&rep.tau, tau, 3.0), "n={n} r={r}: tau {:?} vs {tau}", rep.tau);
            assert!(within(&rep.sync_rate, r, 4.0), "n={n} r={r}: realized {:?}", rep.sync_rate);
        }
    }
}

#[test]
fn full_synchronization_halves_everyone() {
    let c = 1e5;
    let net = FluidNetwork::single_link(c).unwrap();
    let flows = FlowSet::homogeneous(10, FlowTemplate::default());
    let mut sim = Simulator::new(&net, &flows, &SyncModel::Uniform(1.0), 1, 0).unwrap();
    for _ in 0..50 {
        let ev = sim.step().unwrap();
        assert_eq!(ev.lost.len(), 10);
        assert!((ev.post_mean - 0.5 * c / 10.0).abs() < 1e-9 * c);
    }
    for x in sim.throughputs() {
        assert!((x - 0.5 * c / 10.0).abs() < 1e-9 * c);
    }
}

#[test]
fn runs_are_deterministic() {
    let (net, _) = random_tree_network(100, 2);
    let mut rng = sim_rng(9, 0);
    let flows = FlowSet::uniform_pairs(&net, 80, FlowTemplate::default(), &mut rng).unwrap();
    let run = |seed| run_simulation(&net, &flows, &SyncModel::Uniform(0.5), &SimOptions::new(100, seed)).unwrap();
    assert_eq!(run(4), run(4));
    assert_ne!(run(4).q_per_flow, run(5).q_per_flow);
}

#[test]
fn heterogeneous_propensities_run() {
    let (net, _) = random_tree_network(60, 3);
    let mut rng = sim_rng(1, 0);
    let flows = FlowSet::uniform_pairs(&net, 40, FlowTemplate::default(), &mut rng).unwrap();
    let pis = (0..40).map(|_| rng.random_range(0.05..1.0)).collect();
    let rep = run_simulation(&net, &flows, &SyncModel::PerFlow(pis), &SimOptions::new(200, 1)).unwrap();
    assert!(rep.decreases >= 200 * 40);
    assert!(rep.q_per_flow.iter().all(|&q| q > 0.0));
    assert!(run_simulation(&net, &flows, &SyncModel::PerFlow(vec![0.5; 3]), &SimOptions::new(200, 1)).is_err());
    assert!(run_simulation(&net, &flows, &SyncModel::Uniform(0.5), &SimOptions::new(99, 1)).is_err());
}

#[test]
fn capacity_tails_by_strategy() {
    let tree = grow(&TreeParams::new(0.5, 9_999, 1).unwrap()).unwrap();
    let stats = EdgeStats::from_tree(&tree);
    let net = FluidNetwork::from_tree(&tree, 1.0).unwrap();
    let max_cap = |s| {
        let n = assign_capacities(&net, s, 1e5, &stats, DEFAULT_WEIGHT_FLOOR).unwrap();
        n.capacity().iter().cloned().fold(0.0, f64::max)
    };
    let (maximum, mean_field) = (max_cap(CapacityStrategy::Maximum), max_cap(CapacityStrategy::MeanField));
    // The maximum rule is cut off near 10^6 b/s; the load-proportional one reaches far beyond.
    assert!((3e5..3e6).contains(&maximum), "{maximum}");
    assert!(mean_field > 10.0 * maximum, "{mean_field}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescaling_preserves_mean(seed in 0u64..1000, nodes in 3usize..300, mean in 1.0f64..1e7, floor in 0.001f64..1.0) {
        let tree = grow(&TreeParams::new(0.5, nodes - 1, seed).unwrap()).unwrap();
        let stats = EdgeStats::from_tree(&tree);
        let net = FluidNetwork::from_tree(&tree, 1.0).unwrap();
        for s in CapacityStrategy::ALL {
            let c = assign_capacities(&net, s, mean, &stats, floor).unwrap();
            let m = c.capacity().iter().sum::<f64>() / c.edge_count() as f64;
            prop_assert!((m / mean - 1.0).abs() < 1e-12);
            prop_assert!(c.capacity().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn single_flow_always_loses(pi in 1e-9f64..1.0, seed in 0u64..100) {
        let mut rng = sim_rng(seed, 0);
        let mut out = Vec::new();
        draw_losses(&[0], &SyncModel::Uniform(pi), &mut rng, &mut out);
        prop_assert_eq!(out, vec![0]);
    }

    #[test]
    fn losses_are_sorted_members(m in 1usize..200, pi in 1e-6f64..1.0, seed in 0u64..100) {
        let members: Vec<usize> = (0..m).map(|i| 3 * i + 1).collect();
        let mut rng = sim_rng(seed, 0);
        let mut out = Vec::new();
        draw_losses(&members, &SyncModel::Uniform(pi), &mut rng, &mut out);
        prop_assert!(!out.is_empty());
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.iter().all(|i| members.contains(i)));
    }
}
