//! Acceptance suite: one test per verification criterion, each printing a
//! pass/fail line. Tolerances are pinned in code.
//!
//! Criterion 4 (frequentist coverage of the step-scaled credible region)
//! is asserted exactly as stated and is expected to fail: the network
//! posterior aggregates all `m t` observations while keeping single-agent
//! tempering, so its regions over-cover by construction; the
//! total-evidence-scaled column reported alongside calibrates at the
//! nominal level. See the coverage summary's `coverage_mt` field.

use disbayes_cli::config::ExperimentConfig;
use disbayes_cli::experiments::simulate::{detection_run, logistic_run};
use disbayes_cli::runner::RunOptions;
use disbayes_cli::{run_command, Command as Cmd};
use disbayes_core::belief::{density_at, distributed_update, GaussianPrior, NetworkState};
use disbayes_core::diagnostics::{gamma_sq_bound, gamma_sq_mc, GaussianExperiment};
use disbayes_core::graph::{
    consensus_deviation, matrix_power_product, metropolis_weights, regime_bound,
    static_deviation_bound, GraphSchedule, Topology,
};
use disbayes_core::models::{
    gaussian_location_model, sample_observation, AgentModel, Observation, TrueDistribution,
};
use disbayes_core::numeric::{chi2_quantile, median, LN_SQRT_2PI};
use disbayes_core::rng::unit_uniform;
use nalgebra::DVector;

fn options(workers: usize) -> RunOptions {
    RunOptions {
        workers,
        resume: false,
    }
}

fn load_summary(dir: &std::path::Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

// -------------------------------------------------------------------
// 1. step recursion vs product-form posterior, 25 random graphs
// -------------------------------------------------------------------
#[test]
fn acceptance_01_recursion_definition_equivalence() {
    let mut worst: f64 = 0.0;
    for trial in 0..25u64 {
        let m = 2 + (trial % 4) as usize; // 2..=5
        let t = 5 + (unit_uniform(9000 + trial, 0) * 15.0) as u64; // 5..=20
        let top = Topology::random_connected(m, 0.4, 600 + trial).unwrap();
        let base = metropolis_weights(&top).unwrap();
        let schedule = GraphSchedule::new_static(base.clone());
        let sigmas: Vec<f64> = (0..m)
            .map(|i| 0.7 + 0.9 * unit_uniform(7000 + trial, i as u64))
            .collect();
        let models: Vec<AgentModel> = sigmas
            .iter()
            .map(|&s| AgentModel::Gaussian(gaussian_location_model(s).unwrap()))
            .collect();
        let prior = GaussianPrior { mean: 0.0, sd: 1.0 };
        let truth = TrueDistribution::correct(DVector::from_element(1, 0.3), 8000 + trial);

        let mut state = NetworkState::new_gaussian(models.clone(), &vec![prior; m]);
        let mut data: Vec<Vec<f64>> = Vec::new();
        for s in 0..t {
            let obs: Vec<Observation> = (0..m)
                .map(|j| sample_observation(&models[j], &truth, j, s + 1))
                .collect();
            data.push(obs.iter().map(|o| o.scalar()).collect());
            let matrix = schedule.matrix_at(s);
            distributed_update(&mut state, &obs, &matrix).unwrap();
        }

        // brute force: explicit matrix products weighting each
        // log-likelihood term, Gaussian normalizer in closed form
        for agent in 0..m {
            let mut precision = prior.precision();
            let mut linear = prior.u();
            for k in 1..=t {
                let product = matrix_power_product(&schedule, k, t).unwrap();
                for i in 0..m {
                    let w = if k == t {
                        (i == agent) as u64 as f64
                    } else {
                        product[(i, agent)]
                    };
                    if w == 0.0 {
                        continue;
                    }
                    let s2 = sigmas[i] * sigmas[i];
                    precision += w / s2;
                    linear += w * data[(k - 1) as usize][i] / s2;
                }
            }
            let mean = linear / precision;
            let var = 1.0 / precision;
            for g in 0..100 {
                let theta = -3.0 + 6.0 * g as f64 / 99.0;
                let z = (theta - mean) / var.sqrt();
                let def = -0.5 * z * z - 0.5 * var.ln() - LN_SQRT_2PI;
                let rec = density_at(&state, agent, &DVector::from_element(1, theta)).unwrap();
                let err = (rec - def).abs();
                worst = worst.max(err);
                assert!(
                    err < 1e-8,
                    "criterion 1: FAIL — trial {trial}, agent {agent}, theta {theta}: |{rec} - {def}| = {err}"
                );
            }
        }
    }
    println!("criterion 1: PASS — recursion matches the product form on 25 graphs (worst log-density gap {worst:.2e})");
}

// -------------------------------------------------------------------
// 2. consensus-deviation bounds, static and Bernoulli-switch
// -------------------------------------------------------------------
#[test]
fn acceptance_02_consensus_bounds() {
    // static families, m = 2..8, deviations at t = 500 (monotone in t)
    let families: Vec<(
        &str,
        fn(usize) -> Result<Topology, disbayes_core::graph::GraphError>,
    )> = vec![
        ("complete", Topology::complete),
        ("ring", Topology::ring),
        ("path", Topology::path),
        ("star", Topology::star),
    ];
    for (name, build) in &families {
        for m in 2..=8usize {
            let a = metropolis_weights(&build(m).unwrap()).unwrap();
            let bound = static_deviation_bound(m, a.nu());
            let sched = GraphSchedule::new_static(a);
            for agent in 0..m {
                let d = consensus_deviation(&sched, agent, 500).unwrap();
                assert!(
                    d <= bound,
                    "criterion 2: FAIL — static {name} m={m} agent={agent}: {d} > {bound}"
                );
            }
        }
    }

    // Bernoulli switch on the 8-ring: the average over 100 schedule draws
    // respects the per-regime bounds
    let a8 = metropolis_weights(&Topology::ring(8).unwrap()).unwrap();
    let nu = a8.nu();
    for lambda in [0.05f64, 0.25, 0.5, 1.0] {
        let mut total = 0.0;
        for draw in 0..100u64 {
            let sched = GraphSchedule::bernoulli(a8.clone(), lambda, 40_000 + draw);
            total += consensus_deviation(&sched, 0, 500).unwrap();
        }
        let avg = total / 100.0;
        let bound = regime_bound(8, lambda, nu).finite().unwrap();
        assert!(
            avg <= bound,
            "criterion 2: FAIL — lambda={lambda}: average deviation {avg} > {bound}"
        );
    }
    println!("criterion 2: PASS — deviations within the static and per-regime bounds");
}

// -------------------------------------------------------------------
// 3. Gaussian-limit total variation decays (well-specified network)
// -------------------------------------------------------------------
#[test]
fn acceptance_03_bvm_decay() {
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.0, 1.0, 1.0]

        [graph]
        family = "ring"
        m = 4

        [run]
        t_max = 1000
        checkpoints = [50, 1000]
        replications = 50
        seed = 11
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_command(Cmd::Bvm, &cfg, dir.path(), &options(4)).unwrap();
    let summary = load_summary(dir.path(), "bvm");
    let medians: Vec<f64> = summary["median_tv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let (early, late) = (medians[0], medians[1]);
    assert!(
        late < 0.05,
        "criterion 3: FAIL — median TV at t=1000 is {late} >= 0.05"
    );
    assert!(
        late < early,
        "criterion 3: FAIL — median TV did not decrease ({early} -> {late})"
    );
    println!("criterion 3: PASS — median TV {early:.4} at t=50 down to {late:.4} at t=1000");
}

// -------------------------------------------------------------------
// 4. frequentist coverage of the level-0.9 region (expected to fail;
//    see the module docs and the coverage summary's coverage_mt field)
// -------------------------------------------------------------------
#[test]
fn acceptance_04_coverage() {
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.0, 1.0, 1.0]

        [graph]
        family = "ring"
        m = 4

        [run]
        t_max = 500
        checkpoints = [500]
        replications = 500
        seed = 42

        [coverage]
        alpha = 0.1
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_command(Cmd::Coverage, &cfg, dir.path(), &options(4)).unwrap();
    let summary = load_summary(dir.path(), "coverage");
    let coverage = summary["coverage"].as_f64().unwrap();
    let coverage_mt = summary["coverage_mt"].as_f64().unwrap();
    assert!(
        (0.86..=0.94).contains(&coverage),
        "criterion 4: FAIL — empirical coverage {coverage:.4} outside [0.86, 0.94] \
         (the step-scaled region over-covers by construction: the posterior width is \
         sqrt(m) times the estimator's sampling spread; the total-evidence-scaled \
         region calibrates at {coverage_mt:.4})"
    );
    println!("criterion 4: PASS — coverage {coverage:.4} in [0.86, 0.94]");
}

// -------------------------------------------------------------------
// 5. contraction slope -1 and the misspecification plateau
// -------------------------------------------------------------------
#[test]
fn acceptance_05_contraction_slope_and_asymptote() {
    let base_cfg = r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.0, 1.0, 1.0]

        [graph]
        family = "ring"
        m = 4

        [run]
        t_max = 1600
        checkpoints = [1600]
        replications = 200
        seed = 21

        [contraction]
        t_grid = [100, 400, 1600]
        replications = 200
        misspecified = MISFLAG
    "#;

    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_str_validated(&base_cfg.replace("MISFLAG", "false")).unwrap();
    run_command(Cmd::Contraction, &cfg, dir.path(), &options(4)).unwrap();
    let summary = load_summary(dir.path(), "contraction");
    let slope = summary["slope"].as_f64().unwrap();
    assert!(
        (-1.15..=-0.85).contains(&slope),
        "criterion 5: FAIL — well-specified slope {slope} outside -1 \u{00b1} 0.15"
    );

    let dir2 = tempfile::tempdir().unwrap();
    let cfg2 = ExperimentConfig::from_str_validated(&base_cfg.replace("MISFLAG", "true")).unwrap();
    run_command(Cmd::Contraction, &cfg2, dir2.path(), &options(4)).unwrap();
    let mis = load_summary(dir2.path(), "contraction");
    let asymptote = mis["fitted_asymptote"].as_f64().unwrap();
    let baseline = mis["baseline_kl"].as_f64().unwrap();
    assert!(
        asymptote >= 0.5 * baseline && asymptote <= 2.0 * baseline,
        "criterion 5: FAIL — misspecified asymptote {asymptote} not within x2 of the \
         closed-form baseline {baseline}"
    );
    println!(
        "criterion 5: PASS — slope {slope:.3}; misspecified plateau {asymptote:.4} vs baseline {baseline:.4}"
    );
}

// -------------------------------------------------------------------
// 6. gamma^2 below its bound on every cell; frequency direction
// -------------------------------------------------------------------
#[test]
fn acceptance_06_gamma_sq_bound_and_direction() {
    // static cells (m, t)
    for (m, t) in [(2usize, 100u64), (2, 400), (4, 100), (4, 400)] {
        let base = metropolis_weights(&Topology::ring(m).unwrap()).unwrap();
        let exp = GaussianExperiment {
            sigmas: vec![1.0; m],
            prior: GaussianPrior { mean: 0.0, sd: 1.0 },
            theta0: 0.3,
            truth_sigma0: None,
            base: base.clone(),
            lambda: 1.0,
        };
        let (gamma, _se) = gamma_sq_mc(&exp, t, 200, 60_000 + m as u64 + t);
        let bound = gamma_sq_bound(
            m,
            base.nu(),
            1.0,
            t,
            exp.abs_expected_log_density(),
            exp.baseline_kl().1,
        );
        assert!(
            gamma <= bound,
            "criterion 6: FAIL — static m={m} t={t}: gamma^2 {gamma} > bound {bound}"
        );
    }

    // Bernoulli-switch sweep on the 8-ring via the harness
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]

        [graph]
        family = "ring"
        m = 8

        [run]
        t_max = 400
        checkpoints = [400]
        replications = 200
        seed = 31

        [timevary]
        lambdas = [0.05, 0.25, 0.5, 1.0]
        t = 400
        replications = 200
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_command(Cmd::Timevary, &cfg, dir.path(), &options(4)).unwrap();
    let summary = load_summary(dir.path(), "timevary");
    assert!(
        summary["all_below_bound"].as_bool().unwrap(),
        "criterion 6: FAIL — a sweep cell exceeded its regime bound: {summary}"
    );
    let cells = summary["cells"].as_array().unwrap();
    let g2t = |lambda: f64| -> f64 {
        cells
            .iter()
            .find(|c| (c["lambda"].as_f64().unwrap() - lambda).abs() < 1e-12)
            .unwrap()["mean_gamma_sq_t"]
            .as_f64()
            .unwrap()
    };
    let (slow, fast) = (g2t(0.05), g2t(0.5));
    assert!(
        slow > fast,
        "criterion 6: FAIL — gamma^2 t at lambda=0.05 ({slow}) not above lambda=0.5 ({fast})"
    );
    println!("criterion 6: PASS — all cells below bound; gamma^2 t {slow:.5} at lambda=0.05 vs {fast:.5} at lambda=0.5");
}

// -------------------------------------------------------------------
// 7. logistic rescaled-posterior quantiles match chi-square(2)
// -------------------------------------------------------------------
#[test]
fn acceptance_07_logistic_bvm_quantiles() {
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "logistic"
        theta0 = [0.5, -0.25]

        [grid]
        lo = [-0.1, -0.85]
        hi = [1.1, 0.35]
        resolution = 160

        [graph]
        family = "ring"
        m = 4

        [run]
        t_max = 2000
        checkpoints = [2000]
        replications = 1
        seed = 13
        "#,
    )
    .unwrap();
    let base = cfg.base_matrix().unwrap();
    let run = logistic_run(&cfg, &base, 0).unwrap();
    let t = 2000.0;
    let grid = &run.final_grid;
    let theta_hat = &run.final_theta;
    let v_hat = &run.final_fisher;

    // posterior distribution of the Mahalanobis statistic
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(grid.node_count());
    for idx in 0..grid.node_count() {
        let node = grid.node(idx);
        let d = &node - theta_hat;
        let q = t * (d.transpose() * v_hat * &d)[(0, 0)];
        pairs.push((q, grid.quad_weight(idx) * grid.logw[idx].exp()));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let quantile = |level: f64| -> f64 {
        let mut acc = 0.0;
        for (q, mass) in &pairs {
            acc += mass;
            if acc >= level {
                return *q;
            }
        }
        pairs.last().unwrap().0
    };
    for level in [0.5f64, 0.9] {
        let estimated = quantile(level);
        let analytic = chi2_quantile(2, level);
        let rel = (estimated - analytic).abs() / analytic;
        assert!(
            rel <= 0.1,
            "criterion 7: FAIL — {level}-quantile {estimated:.4} vs chi-square {analytic:.4} (rel err {rel:.3})"
        );
        println!(
            "criterion 7: quantile {level}: posterior {estimated:.4} vs chi-square {analytic:.4} (rel err {rel:.3})"
        );
    }
    println!("criterion 7: PASS — Mahalanobis quantiles match chi-square(2) within 10%");
}

// -------------------------------------------------------------------
// 8. detection consistency and the closed-form information match
// -------------------------------------------------------------------
#[test]
fn acceptance_08_detection_consistency() {
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "detection"
        theta0 = [0.55, 0.4]
        sensors = [[0.1, 0.1], [0.25, 0.05], [0.05, 0.25]]
        sensor_sigma = 0.1

        [graph]
        family = "ring"
        m = 3

        [run]
        t_max = 2000
        checkpoints = [2000]
        replications = 30
        seed = 8
        eps_mass = 0.05
        "#,
    )
    .unwrap();
    let base = cfg.base_matrix().unwrap();
    let theta0 = DVector::from_vec(vec![0.55, 0.4]);
    let sensors = [[0.1f64, 0.1], [0.25, 0.05], [0.05, 0.25]];
    let sigma = 0.1f64;
    let mut errors = Vec::new();
    let mut boundary_hits = 0usize;
    let mut worst_frob: f64 = 0.0;
    for rep in 0..30u64 {
        let run = detection_run(&cfg, &base, rep).unwrap();
        errors.push((&run.final_theta[0] - &theta0).norm());
        boundary_hits += run.final_boundary.iter().filter(|&&b| b).count();

        // independent oracle for the closed-form information matrix,
        // built directly from erf-based normal functions
        let th = &run.final_theta[0];
        let mut v = [[0.0f64; 2]; 2];
        for z in &sensors {
            let dx = th[0] - z[0];
            let dy = th[1] - z[1];
            let mu = (dx * dx + dy * dy).sqrt();
            let b = (z[0] * z[0] + z[1] * z[1]).sqrt() + 0.5;
            let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
            let hi = (b - mu) / sigma;
            let lo = -mu / sigma;
            let ratio = (phi(hi) - phi(lo)) / (cdf(hi) - cdf(lo));
            let scale = ratio * ratio / (sigma * sigma * sigma * sigma) / (mu * mu);
            v[0][0] += dx * dx * scale;
            v[0][1] += dx * dy * scale;
            v[1][0] += dy * dx * scale;
            v[1][1] += dy * dy * scale;
        }
        let m = sensors.len() as f64;
        let t = 2000.0;
        // invert the 2x2 and divide by t to get the oracle covariance
        let det = (v[0][0] * v[1][1] - v[0][1] * v[1][0]) / (m * m);
        let oracle = [
            [v[1][1] / m / det / t, -v[0][1] / m / det / t],
            [-v[1][0] / m / det / t, v[0][0] / m / det / t],
        ];
        let produced = &run.final_laplace_cov[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let d = produced[(i, j)] - oracle[i][j];
                num += d * d;
                den += oracle[i][j] * oracle[i][j];
            }
        }
        let frob_rel = (num / den).sqrt();
        worst_frob = worst_frob.max(frob_rel);
        assert!(
            frob_rel <= 0.05,
            "criterion 8: FAIL — replication {rep}: Laplace covariance off by {frob_rel:.4} in relative Frobenius norm"
        );
    }
    let med = median(&errors);
    assert!(
        med < 0.02,
        "criterion 8: FAIL — median |theta_hat - theta0| = {med}"
    );
    assert_eq!(
        boundary_hits, 0,
        "criterion 8: FAIL — {boundary_hits} boundary flags at the final checkpoint"
    );
    println!(
        "criterion 8: PASS — median error {med:.5}, no boundary flags, information match within {worst_frob:.2e}"
    );
}

// -------------------------------------------------------------------
// 9. consensus-weighted LLN and CLT
// -------------------------------------------------------------------
#[test]
fn acceptance_09_lln_clt() {
    let cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.0]
        sigmas = [1.0, 1.0, 1.0]

        [graph]
        family = "complete"
        m = 3

        [run]
        t_max = 10
        checkpoints = [10]
        replications = 1
        seed = 1

        [llnclt]
        means = [0.0, 1.0, 2.0]
        sds = [1.0, 1.0, 1.0]
        t_lln = 10000
        t_clt = 2000
        replications = 400
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_command(Cmd::LlnClt, &cfg, dir.path(), &options(1)).unwrap();
    let summary = load_summary(dir.path(), "llnclt");
    let max_err = summary["max_abs_error"].as_f64().unwrap();
    let ks = summary["ks_distance"].as_f64().unwrap();
    assert!(
        max_err < 0.05,
        "criterion 9: FAIL — mixed mean off the network mean by {max_err}"
    );
    assert!(ks < 0.08, "criterion 9: FAIL — KS distance {ks} >= 0.08");
    println!("criterion 9: PASS — LLN error {max_err:.5}, KS distance {ks:.4}");
}

// -------------------------------------------------------------------
// 10. byte-identical reruns for identical seeds
// -------------------------------------------------------------------
#[test]
fn acceptance_10_determinism() {
    let simulate_cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.1, 0.9, 1.2]

        [graph]
        family = "ring"
        m = 4
        lambda = 0.5

        [run]
        t_max = 120
        checkpoints = [30, 120]
        replications = 8
        seed = 2024
        gamma_sq = true
        "#,
    )
    .unwrap();
    let timevary_cfg = ExperimentConfig::from_str_validated(
        r#"
        [model]
        kind = "gaussian"
        theta0 = [0.3]
        sigmas = [1.0, 1.0, 1.0, 1.0]

        [graph]
        family = "ring"
        m = 4

        [run]
        t_max = 100
        checkpoints = [100]
        replications = 10
        seed = 5
        [timevary]
        lambdas = [0.3, 1.0]
        t = 100
        replications = 10
        "#,
    )
    .unwrap();
    for (cmd, cfg, name) in [
        (Cmd::Simulate, &simulate_cfg, "trajectory"),
        (Cmd::Timevary, &timevary_cfg, "timevary"),
    ] {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_command(cmd, cfg, d1.path(), &options(1)).unwrap();
        run_command(cmd, cfg, d2.path(), &options(4)).unwrap();
        let a = std::fs::read(d1.path().join(format!("{name}.csv"))).unwrap();
        let b = std::fs::read(d2.path().join(format!("{name}.csv"))).unwrap();
        assert_eq!(a, b, "criterion 10: FAIL — {name} reruns differ");
    }
    println!("criterion 10: PASS — byte-identical CSVs across reruns and worker counts");
}
