//! Structural invariants of the consensus matrices and their mixing
//! behaviour on randomly generated connected graphs.

use disbayes_core::graph::{
    consensus_deviation, metropolis_weights, regime_bound, static_deviation_bound, GraphSchedule,
    Topology,
};

#[test]
fn random_connected_matrices_satisfy_structural_invariants() {
    for m in 2..=8usize {
        for seed in 0..6u64 {
            let top = Topology::random_connected(m, 0.35, 1000 * m as u64 + seed).unwrap();
            assert!(top.is_connected());
            let a = metropolis_weights(&top).unwrap();
            for i in 0..m {
                let row: f64 = (0..m).map(|j| a.entry(i, j)).sum();
                let col: f64 = (0..m).map(|j| a.entry(j, i)).sum();
                assert!((row - 1.0).abs() <= 1e-12);
                assert!((col - 1.0).abs() <= 1e-12);
                assert!(a.entry(i, i) > 0.0);
                for j in 0..m {
                    assert_eq!(a.entry(i, j), a.entry(j, i));
                }
            }
            // support condition: positive weights only on edges or diagonal
            let edges: std::collections::BTreeSet<(usize, usize)> = top.edges().collect();
            for i in 0..m {
                for j in i + 1..m {
                    if a.entry(i, j) > 0.0 {
                        assert!(edges.contains(&(i, j)));
                    }
                }
            }
        }
    }
}

#[test]
fn row_power_l1_distance_within_geometric_envelope() {
    // || e_i' A^t - 1/m ||_1 <= m delta^t with delta = 1 - nu / (4 m^2),
    // checked for t = 1..200 on random connected graphs up to m = 8.
    for m in 2..=8usize {
        for seed in 0..4u64 {
            let top = Topology::random_connected(m, 0.3, 77 * m as u64 + seed).unwrap();
            let a = metropolis_weights(&top).unwrap();
            let delta = a.delta();
            let w = a.weights().clone();
            let mut power = w.clone();
            let inv_m = 1.0 / m as f64;
            for t in 1..=200u32 {
                let envelope = m as f64 * delta.powi(t as i32);
                for i in 0..m {
                    let dev: f64 = (0..m).map(|j| (power[(i, j)] - inv_m).abs()).sum();
                    assert!(
                        dev <= envelope + 1e-12,
                        "m = {m}, seed = {seed}, t = {t}: {dev} > {envelope}"
                    );
                }
                power = &power * &w;
            }
        }
    }
}

#[test]
fn deviation_monotone_and_bounded_on_static_families() {
    let families: Vec<(&str, fn(usize) -> Result<Topology, _>)> = vec![
        ("complete", Topology::complete),
        ("ring", Topology::ring),
        ("path", Topology::path),
        ("star", Topology::star),
    ];
    for (name, build) in families {
        for m in 2..=6usize {
            let a = metropolis_weights(&build(m).unwrap()).unwrap();
            let bound = static_deviation_bound(m, a.nu());
            let sched = GraphSchedule::new_static(a);
            let mut last = 0.0;
            for t in [1u64, 5, 25, 125, 400] {
                let d = consensus_deviation(&sched, 0, t).unwrap();
                assert!(d + 1e-12 >= last, "{name} m={m}: deviation not monotone");
                assert!(d <= bound, "{name} m={m} t={t}: {d} > {bound}");
                last = d;
            }
        }
    }
}

#[test]
fn bernoulli_switch_average_deviation_respects_regime_bounds() {
    let m = 5usize;
    let a = metropolis_weights(&Topology::ring(m).unwrap()).unwrap();
    let nu = a.nu();
    for lambda in [0.3f64, 0.7] {
        let mut total = 0.0;
        let draws = 100u64;
        for seed in 0..draws {
            let sched = GraphSchedule::bernoulli(a.clone(), lambda, 5000 + seed);
            total += consensus_deviation(&sched, 1, 300).unwrap();
        }
        let avg = total / draws as f64;
        let bound = regime_bound(m, lambda, nu).finite().unwrap();
        assert!(avg <= bound, "lambda = {lambda}: {avg} > {bound}");
    }
}
