use proptest::prelude::*;
use rankfeedback::choice::{
    expected_choice, expected_value_table, ranking_free_values, weighted_choice, weighted_choice_scores,
};
use rankfeedback::dynamics::{
    mean_dynamics_personalized, mean_dynamics_recursion, simulate, simulate_personalized,
};
use rankfeedback::limits::{find_roots, solve_limit, theta, SolverOptions, Stability};
use rankfeedback::model::sample_realization;
use rankfeedback::rng::seeded;
use rankfeedback::variants::{bottom_ranked_positions, simulate_ordinal};
use rankfeedback::*;

fn on_simplex(v: &[f64]) -> bool {
    (v.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && v.iter().all(|&x| x >= 0.0)
}

fn signals_from_bits(bits: &[bool], omega: bool) -> InterimRealization {
    InterimRealization::new(omega, bits.to_vec()).unwrap()
}

prop_compose! {
    fn arb_params()(
        p in 0.5f64..=1.0,
        q in 0.5f64..=1.0,
        mu in 0.5f64..=1.0,
        gamma in 0.0f64..=1.0,
        m in 2usize..=16,
        alpha in 0.0f64..=3.0,
    ) -> ModelParams {
        ModelParams { p, q, mu, gamma, m, alpha, ..ModelParams::default() }
    }
}

prop_compose! {
    fn arb_case()(params in arb_params())(
        bits in proptest::collection::vec(any::<bool>(), params.m),
        scores in proptest::collection::vec(0.01f64..1.0, params.m),
        omega in any::<bool>(),
        tie in any::<bool>(),
        params in Just(params),
    ) -> (ModelParams, InterimRealization, Ranking) {
        let mut real = signals_from_bits(&bits, omega);
        if real.majority_signal() == MajoritySignal::Tie {
            real = real.with_tie_break(tie).unwrap();
        }
        (params, real, Ranking::from_scores(&scores).unwrap())
    }
}

fn class_totals(rho: &[f64], real: &InterimRealization) -> (f64, f64) {
    let mut t = (0.0, 0.0);
    for (i, &x) in rho.iter().enumerate() {
        if real.signal(i) {
            t.0 += x;
        } else {
            t.1 += x;
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn choices_lie_on_the_simplex((params, real, r) in arb_case(), x in any::<bool>(), z in any::<bool>()) {
        let v = ranking_free_values(AgentSignals { x, z }, &real, params.gamma);
        if v.total() > 0.0 {
            let rho = weighted_choice(&r, &v, params.alpha).unwrap();
            prop_assert!(on_simplex(rho.as_slice()));
        }
        let table = expected_value_table(&real, params.gamma, params.signal_model).unwrap();
        let rho_hat = expected_choice(&r, &table, &params);
        // Zero-value cells can only make the marginal fail when they carry positive weight.
        if let Ok(rho_hat) = rho_hat {
            prop_assert!(on_simplex(rho_hat.as_slice()));
        }
    }

    #[test]
    fn rescaling_scores_changes_nothing((params, real, r) in arb_case(), c in 1e-3f64..1e3, x in any::<bool>(), z in any::<bool>()) {
        let v = ranking_free_values(AgentSignals { x, z }, &real, params.gamma);
        prop_assume!(v.total() > 0.0);
        let base = weighted_choice(&r, &v, params.alpha).unwrap();
        let scaled: Vec<f64> = r.as_slice().iter().map(|s| s * c).collect();
        let other = weighted_choice_scores(&scaled, &v, params.alpha).unwrap();
        for (a, b) in base.as_slice().iter().zip(other.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn duplicating_a_site_keeps_class_totals(
        (params, real, _r) in arb_case(),
        site_pick in any::<prop::sample::Index>(),
        k in 2usize..5,
        x in any::<bool>(),
        z in any::<bool>(),
    ) {
        let m = real.num_sites();
        let site = site_pick.index(m);
        let mut bits = real.signals().to_vec();
        for _ in 1..k {
            bits.push(bits[site]);
        }
        let split = signals_from_bits(&bits, real.omega());
        let signals = AgentSignals { x, z };
        let v = ranking_free_values(signals, &real, params.gamma);
        let w = ranking_free_values(signals, &split, params.gamma);
        prop_assume!(v.total() > 0.0);
        // Ranking-free choices and uniform rankings of any attention weight.
        for alpha in [0.0, params.alpha] {
            let a = weighted_choice(&Ranking::uniform(m), &v, alpha).unwrap();
            let b = weighted_choice(&Ranking::uniform(m + k - 1), &w, alpha).unwrap();
            let (at, af) = class_totals(a.as_slice(), &real);
            let (bt, bf) = class_totals(b.as_slice(), &split);
            prop_assert!((at - bt).abs() < 1e-12 && (af - bf).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_attention_matches_uniform_ranking((params, real, r) in arb_case(), alpha in 0.0f64..4.0) {
        let table = expected_value_table(&real, params.gamma, params.signal_model).unwrap();
        let pop = expected_choice(&r, &table, &ModelParams { alpha: 0.0, ..params });
        let uni = expected_choice(&Ranking::uniform(real.num_sites()), &table, &ModelParams { alpha, ..params });
        if let (Ok(pop), Ok(uni)) = (pop, uni) {
            for (a, b) in pop.as_slice().iter().zip(uni.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn trajectories_stay_on_the_simplex((params, real, r) in arb_case(), seed in any::<u64>(), realized in any::<bool>()) {
        let params = ModelParams { kappa: 2, ..params };
        let mode = if realized { FeedbackMode::RealizedClick } else { FeedbackMode::ProbFeedback };
        let cfg = SimConfig::new(60, PersistenceSchedule::Constant(2.0)).with_mode(mode);
        let rec = simulate(&params, &real, &r, &cfg, seed).unwrap();
        for pt in &rec.points {
            prop_assert!(on_simplex(pt.ranking.as_slice()));
            prop_assert!(on_simplex(pt.choice.as_ref().unwrap().as_slice()));
        }
        if let Ok(md) = mean_dynamics_recursion(&params, &real, &r, 60, PersistenceSchedule::Constant(2.0), Recording::All) {
            for pt in &md.points {
                prop_assert!(on_simplex(pt.ranking.as_slice()));
            }
        }
        let group = GroupConfig::new(params.gamma, 1.0 - params.gamma, 0.4);
        let cfg = SimConfig::new(40, PersistenceSchedule::Constant(2.0));
        let (a, b) = simulate_personalized(&params, &group, &real, &r, &r, &cfg, seed).unwrap();
        for pt in a.points.iter().chain(&b.points) {
            prop_assert!(on_simplex(pt.ranking.as_slice()));
        }
        let ord = simulate_ordinal(&params, &real, &bottom_ranked_positions(&real), 40, 1.3, true, seed).unwrap();
        for pt in &ord.points {
            prop_assert!(on_simplex(pt.choice.as_slice()));
        }
    }

    #[test]
    fn identical_seeds_replay_exactly((params, real, r) in arb_case(), seed in any::<u64>()) {
        let cfg = SimConfig::new(30, PersistenceSchedule::growing_default()).with_mode(FeedbackMode::RealizedClick);
        prop_assert_eq!(simulate(&params, &real, &r, &cfg, seed).unwrap(), simulate(&params, &real, &r, &cfg, seed).unwrap());
        let (mut g1, mut g2) = (seeded(seed), seeded(seed));
        prop_assert_eq!(sample_realization(&params, &mut g1), sample_realization(&params, &mut g2));
    }

    #[test]
    fn uniform_start_keeps_classes_symmetric(params in arb_params(), l_frac in 0.0f64..1.0) {
        let m = params.m;
        let l = ((l_frac * (m - 1) as f64) as usize + 1).min(m - 1);
        prop_assume!(2 * l != m);
        let real = fix_realization(true, l, m).unwrap();
        let Ok(rec) = mean_dynamics_recursion(&params, &real, &Ranking::uniform(m), 200, PersistenceSchedule::Constant(3.0), Recording::Final) else {
            return Ok(());
        };
        let r = rec.final_ranking().as_slice();
        for i in 0..m {
            for j in 0..m {
                if real.signal(i) == real.signal(j) {
                    prop_assert!((r[i] - r[j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn roots_have_small_residuals(params in arb_params(), l_frac in 0.0f64..1.0) {
        let m = params.m;
        let l = ((l_frac * (m - 1) as f64) as usize + 1).min(m - 1);
        prop_assume!(2 * l != m);
        let branch = if 2 * l < m { Branch::Minority } else { Branch::Majority };
        let tp = ThetaParams::from_params(&params, l, branch);
        let roots = find_roots(&tp, SolverOptions::default());
        prop_assert!(roots.iter().any(|r| r.stability == Stability::Stable));
        for root in &roots {
            prop_assert!((theta(root.x, &tp) - root.x).abs() < 1e-10);
        }
        let lim = solve_limit(&tp, tp.default_x0()).unwrap();
        prop_assert!(lim.residual < 1e-10);
        prop_assert!((0.0..=1.0).contains(&lim.stable_root));
    }

    #[test]
    fn class_mass_falls_with_class_size(
        p in 0.5f64..1.0, mu in 0.5f64..1.0, gamma in 0.0f64..1.0, alpha in 0.0f64..=1.0, m in 3usize..=18,
    ) {
        let params = ModelParams { p, mu, gamma, m, alpha, ..ModelParams::default() };
        let profile: Vec<f64> = (1..m).filter(|&l| 2 * l != m).map(|l| limits::class_limit(&params, l).unwrap()).collect();
        let ls: Vec<usize> = (1..m).filter(|&l| 2 * l != m).collect();
        for (w, lw) in profile.windows(2).zip(ls.windows(2)) {
            if (2 * lw[0] < m) == (2 * lw[1] < m) {
                prop_assert!(w[1] <= w[0] + 1e-9, "L={} {} > {}", lw[1], w[1], w[0]);
            }
        }
    }

    #[test]
    fn majority_jumps_across_the_midpoint(
        p in 0.5f64..0.95, mu in 0.8f64..=1.0, gamma in 0.0f64..=1.0, alpha in 0.0f64..=1.0, half in 1usize..=10,
    ) {
        prop_assume!(mu > p);
        let m = 2 * half + 1;
        let params = ModelParams { p, mu, gamma, m, alpha, ..ModelParams::default() };
        let below = limits::class_limit(&params, half).unwrap();
        let above = limits::class_limit(&params, half + 1).unwrap();
        prop_assert!(above >= below - 1e-12, "{above} < {below}");
    }

    #[test]
    fn uninformative_signals_mirror_the_classes(
        mu in 0.5f64..1.0, gamma in 0.0f64..1.0, alpha in 0.0f64..=3.0, m in 3usize..=18, l_frac in 0.0f64..1.0,
    ) {
        let params = ModelParams { p: 0.5, mu, gamma, m, alpha, ..ModelParams::default() };
        let l = ((l_frac * (m - 1) as f64) as usize + 1).min(m - 1);
        prop_assume!(2 * l != m);
        let a = limits::class_limit(&params, l).unwrap();
        let b = limits::class_limit(&params, m - l).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-9, "{a} + {b}");
    }

    #[test]
    fn personalized_mean_dynamics_stay_interior((params, real, r) in arb_case(), lambda in 0.0f64..=1.0) {
        let group = GroupConfig::new(params.gamma, 0.5, lambda);
        if let Ok((a, b)) = mean_dynamics_personalized(&params, &group, &real, &r, &r, 50, PersistenceSchedule::Constant(4.0), Recording::All) {
            for pt in a.points.iter().chain(&b.points) {
                prop_assert!(on_simplex(pt.ranking.as_slice()) && pt.ranking.min() > 0.0);
            }
        }
    }
}

#[test]
fn incorrect_class_mass_complements_the_limit() {
    let params = ModelParams::default();
    for l in [3, 7, 13, 17] {
        let real = fix_realization(true, l, 20).unwrap();
        let sol = dynamics::integrate_ode(&params, &real, &Ranking::uniform(20), Default::default()).unwrap();
        let wrong: Vec<usize> = (0..20).filter(|&i| !real.is_correct(i)).collect();
        let lim = limits::class_limit(&params, l).unwrap();
        assert!((sol.state.mass_on(&wrong) + lim - 1.0).abs() < 1e-7, "L={l}");
    }
}

#[test]
fn majority_jump_needs_informative_majorities() {
    // Barely informative signals: the smaller class keeps the larger share.
    let params = ModelParams { p: 0.5, mu: 0.75, gamma: 0.9, m: 3, alpha: 1.0, ..ModelParams::default() };
    let below = limits::class_limit(&params, 1).unwrap();
    let above = limits::class_limit(&params, 2).unwrap();
    assert!(above < below);
}
