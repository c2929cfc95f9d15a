use rankfeedback::choice::{cell_weights, expected_choice, expected_value_table, ranking_free_values};
use rankfeedback::dynamics::{mean_dynamics_recursion, simulate_with_rng};
use rankfeedback::limits::{class_limit, theta};
use rankfeedback::rng::{replication, seeded};
use rankfeedback::*;

/// Class share of the clicks when the class weight is `g` and the other's `1 - g`.
fn share(g: f64, a: f64, b: f64) -> f64 {
    g * a / (g * a + (1.0 - g) * b)
}

/// Cell-by-cell expectation of the class-L clicking mass.
fn theta_oracle(x: f64, l: usize, m: usize, alpha: f64, mu: f64, gamma: f64, p: f64, majority: bool) -> f64 {
    let a = (x / l as f64).powf(alpha);
    let b = ((1.0 - x) / (m - l) as f64).powf(alpha);
    if majority {
        p * mu + p * (1.0 - mu) * share(gamma, a, b) + (1.0 - p) * mu * share(1.0 - gamma, a, b)
    } else {
        p * mu * share(gamma, a, b) + p * (1.0 - mu) + (1.0 - p) * (1.0 - mu) * share(1.0 - gamma, a, b)
    }
}

#[test]
fn theta_matches_cellwise_expectation() {
    let mut rng = seeded(11);
    use rand::Rng;
    for _ in 0..5000 {
        let m = rng.random_range(3..30usize);
        let l = rng.random_range(1..m);
        let majority = 2 * l > m || (2 * l == m && rng.random());
        let (alpha, mu, gamma, p) =
            (rng.random_range(0.0..3.0), rng.random_range(0.5..1.0), rng.random_range(0.01..0.99), rng.random_range(0.5..1.0));
        let x = rng.random_range(0.001..0.999);
        let branch = if majority { Branch::Majority } else { Branch::Minority };
        let tp = ThetaParams { l, m, alpha, mu, gamma, p, branch };
        let want = theta_oracle(x, l, m, alpha, mu, gamma, p, majority);
        assert!((theta(x, &tp) - want).abs() < 1e-13, "{tp:?} x={x}");
    }
}

#[test]
fn theta_matches_full_choice_at_symmetric_rankings() {
    let params = ModelParams { alpha: 0.7, ..ModelParams::default() };
    for l in [1, 4, 9, 11, 16, 19] {
        let real = fix_realization(true, l, 20).unwrap();
        let table = expected_value_table(&real, params.gamma, params.signal_model).unwrap();
        let branch = if 2 * l > 20 { Branch::Majority } else { Branch::Minority };
        let tp = ThetaParams::from_params(&params, l, branch);
        for x in [0.05, 0.3, 0.62, 0.97] {
            let r: Vec<f64> =
                (0..20).map(|i| if real.is_correct(i) { x / l as f64 } else { (1.0 - x) / (20 - l) as f64 }).collect();
            let rho = expected_choice(&Ranking::new(r).unwrap(), &table, &params).unwrap();
            assert!((rho.mass_on(real.correct_set()) - theta(x, &tp)).abs() < 1e-13);
        }
    }
}

#[test]
fn value_table_matches_sampled_signals() {
    let params = ModelParams::default();
    for (l, seed) in [(4, 21), (13, 22)] {
        let real = fix_realization(true, l, 20).unwrap();
        let table = expected_value_table(&real, params.gamma, params.signal_model).unwrap();
        let w = cell_weights(&params);
        let mut rng = seeded(seed);
        let draws = 100_000;
        let mut mean = vec![0.0; 20];
        for _ in 0..draws {
            let s = sample_agent_signals(&real, &params, &mut rng).unwrap();
            for (acc, v) in mean.iter_mut().zip(ranking_free_values(s, &real, params.gamma).0) {
                *acc += v / draws as f64;
            }
        }
        for (site, got) in mean.iter().enumerate() {
            let want: f64 = table.row(site).iter().zip(&w).map(|(v, c)| v * c).sum();
            assert!((got - want).abs() < 0.005, "L={l} site {site}: {got} vs {want}");
        }
    }
}

#[test]
fn mean_dynamics_reach_the_limit() {
    let params = ModelParams { p: 0.55, mu: 1.0, gamma: 0.5, ..ModelParams::default() };
    let real = fix_realization(true, 3, 20).unwrap();
    let rec = mean_dynamics_recursion(
        &params,
        &real,
        &Ranking::uniform(20),
        100_000,
        PersistenceSchedule::Constant(params.kappa as f64),
        Recording::Final,
    )
    .unwrap();
    let got = rec.final_ranking().mass_on(real.correct_set());
    assert!((got - class_limit(&params, 3).unwrap()).abs() < 1e-4);
}

#[test]
fn mean_dynamics_agree_with_limits_on_a_grid() {
    for &alpha in &[0.0, 0.3, 0.7, 1.0] {
        for &gamma in &[0.1, 0.33, 0.8] {
            for &(p, mu) in &[(0.55, 0.9), (0.7, 0.75), (0.6, 1.0)] {
                let params = ModelParams { p, mu, gamma, alpha, m: 12, ..ModelParams::default() };
                for l in [1, 4, 5, 7, 9, 11] {
                    let real = fix_realization(true, l, 12).unwrap();
                    let rec = mean_dynamics_recursion(
                        &params,
                        &real,
                        &Ranking::uniform(12),
                        4000,
                        PersistenceSchedule::Constant(1.0),
                        Recording::Final,
                    )
                    .unwrap();
                    let got = rec.final_ranking().mass_on(real.correct_set());
                    let want = class_limit(&params, l).unwrap();
                    assert!((got - want).abs() < 1e-6, "{params:?} L={l}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn stochastic_runs_center_on_mean_dynamics() {
    let params = ModelParams::default();
    let schedule = PersistenceSchedule::growing_default();
    let horizon = 3000;
    let reps = 200;
    for l in [5, 14] {
        let real = fix_realization(true, l, 20).unwrap();
        let r1 = Ranking::uniform(20);
        let cfg = SimConfig::new(horizon, schedule).with_recording(Recording::Final);
        let masses: Vec<f64> = (0..reps)
            .map(|k| {
                let mut rng = replication(0xD1CE, (l * reps + k) as u64);
                simulate_with_rng(&params, &real, &r1, &cfg, &mut rng).unwrap().final_ranking().mass_on(real.correct_set())
            })
            .collect();
        let mean = masses.iter().sum::<f64>() / reps as f64;
        let var = masses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let md = mean_dynamics_recursion(&params, &real, &r1, horizon, schedule, Recording::Final).unwrap();
        let want = md.final_ranking().mass_on(real.correct_set());
        assert!((mean - want).abs() < 3.0 * se, "L={l}: {mean} vs {want} (se {se})");
    }
}

fn descending_start(m: usize) -> Ranking {
    let r: Vec<f64> = (0..m).map(|i| 0.06 - 0.02 * i as f64 / (m - 1) as f64).collect();
    Ranking::from_scores(&r).unwrap()
}

#[test]
fn limits_forget_the_initial_ranking_without_convex_attention() {
    let real = fix_realization(true, 15, 20).unwrap();
    let skewed: Vec<f64> = (0..20).map(|i| if real.is_correct(i) { 0.01 } else { 0.17 }).collect();
    let skewed = Ranking::from_scores(&skewed).unwrap();
    let run = |params: &ModelParams, r1: &Ranking| {
        let rec = mean_dynamics_recursion(params, &real, r1, 5000, PersistenceSchedule::Constant(2.0), Recording::Final)
            .unwrap();
        rec.last().choice.as_ref().unwrap().mass_on(real.correct_set())
    };
    for alpha in [0.0, 0.5, 1.0] {
        let params = ModelParams { alpha, ..ModelParams::default() };
        let (a, b) = (run(&params, &descending_start(20)), run(&params, &skewed));
        assert!((a - b).abs() < 1e-6, "alpha={alpha}: {a} vs {b}");
    }
    let params = ModelParams { alpha: 1.25, ..ModelParams::default() };
    let (a, b) = (run(&params, &descending_start(20)), run(&params, &skewed));
    assert!((a - b).abs() > 1e-3, "{a} vs {b}");
}
