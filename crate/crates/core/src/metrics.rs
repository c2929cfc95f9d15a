//! Efficiency and polarization metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choice::{expected_choice, expected_value_table};
use crate::dynamics::{
    mean_dynamics_personalized, simulate_with_rng, FeedbackMode, PersistenceSchedule, Ranking, Recording, SimConfig,
};
use crate::error::{Error, Result};
use crate::limits::{class_limit, personalized_class_limit, random_class_limit, PersonalizedMethod};
use crate::model::{binomial_pmf, fix_realization, GroupConfig, InterimRealization, ModelParams};
use crate::rng::replication;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum RankingRegime {
    Popularity,
    Random,
    Personalized { group: GroupConfig, method: PersonalizedMethod },
}

impl RankingRegime {
    pub fn personalized(group: GroupConfig) -> Self {
        RankingRegime::Personalized { group, method: PersonalizedMethod::Coupled }
    }

    pub fn tag(&self) -> String {
        match self {
            RankingRegime::Popularity => "popularity".into(),
            RankingRegime::Random => "random".into(),
            RankingRegime::Personalized { group, method } => match method {
                PersonalizedMethod::Coupled => format!("personalized({})", group.lambda),
                PersonalizedMethod::EffectiveGamma => format!("personalized_effective({})", group.lambda),
            },
        }
    }
}

/// Short stable digest of a serializable parameter block.
pub fn params_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("parameters serialize");
    Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `P_L` for `L = 0..=M`.
pub fn interim_efficiency(params: &ModelParams, regime: &RankingRegime) -> Result<Vec<f64>> {
    params.check()?;
    (0..=params.m)
        .into_par_iter()
        .map(|l| match regime {
            RankingRegime::Popularity => class_limit(params, l),
            RankingRegime::Random => random_class_limit(params, l),
            RankingRegime::Personalized { group, method } => {
                Ok(personalized_class_limit(params, group, l, *method)?.mean_click())
            }
        })
        .collect()
}

/// Binomial(M, q) average of an interim profile.
pub fn ex_ante_efficiency(interim: &[f64], q: f64) -> f64 {
    let m = interim.len() - 1;
    binomial_pmf(m, q).iter().zip(interim).map(|(w, p)| w * p).sum()
}

/// Ex-ante efficiency with interior minority and majority levels replaced by
/// `P_ceil(M/4)` and `P_ceil(3M/4)`.
pub fn net_of_aof(interim: &[f64], q: f64) -> f64 {
    let m = interim.len() - 1;
    let minority = interim[m.div_ceil(4)];
    let majority = interim[(3 * m).div_ceil(4)];
    let pmf = binomial_pmf(m, q);
    let mut total = pmf[m];
    for (k, w) in pmf.iter().enumerate().take(m).skip(1) {
        total += w * match (2 * k).cmp(&m) {
            std::cmp::Ordering::Less => minority,
            std::cmp::Ordering::Greater => majority,
            std::cmp::Ordering::Equal => 0.5 * (minority + majority),
        };
    }
    total
}

/// Interim profile re-estimated from stochastic runs started at the uniform ranking.
///
/// Each entry averages the expected click mass at the terminal ranking on the correct class
/// over `reps` runs; run `k` of count `L` uses stream `L * reps + k`. The random
/// regime freezes the ranking, and personalized regimes are not supported.
pub fn monte_carlo_interim(
    params: &ModelParams,
    regime: &RankingRegime,
    horizon: usize,
    schedule: PersistenceSchedule,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.check()?;
    let mode = match regime {
        RankingRegime::Popularity => FeedbackMode::ProbFeedback,
        RankingRegime::Random => FeedbackMode::Frozen,
        RankingRegime::Personalized { .. } => {
            return Err(Error::Precondition("Monte Carlo profiles cover popularity and random ranking only".into()))
        }
    };
    if reps == 0 {
        return Err(Error::Precondition("need at least one replication".into()));
    }
    let m = params.m;
    let cfg = SimConfig::new(horizon, schedule).with_mode(mode).with_recording(Recording::Final);
    let r1 = Ranking::uniform(m);
    (0..=m)
        .map(|l| {
            if l == 0 || l == m {
                return Ok(if l == 0 { 0.0 } else { 1.0 });
            }
            let real = fix_realization(true, l, m)?;
            let masses = (0..reps)
                .into_par_iter()
                .map(|k| {
                    let mut rng = replication(seed, (l * reps + k) as u64);
                    let mut real = real.clone();
                    real.break_tie(&mut rng);
                    let rec = simulate_with_rng(params, &real, &r1, &cfg, &mut rng)?;
                    let table = expected_value_table(&real, params.gamma, params.signal_model)?;
                    Ok(expected_choice(rec.final_ranking(), &table, params)?.mass_on(real.correct_set()))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(masses.iter().sum::<f64>() / reps as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub interim: Vec<f64>,
    pub ex_ante: f64,
    pub ex_ante_net: f64,
    pub regime: String,
    pub params_hash: String,
}

pub fn efficiency_report(params: &ModelParams, regime: &RankingRegime) -> Result<EfficiencyReport> {
    let interim = interim_efficiency(params, regime)?;
    Ok(EfficiencyReport {
        ex_ante: ex_ante_efficiency(&interim, params.q),
        ex_ante_net: net_of_aof(&interim, params.q),
        interim,
        regime: regime.tag(),
        params_hash: params_hash(&(params, regime)),
    })
}

/// Ex-ante efficiency under popularity ranking minus under random ranking.
pub fn por(params: &ModelParams, q: f64) -> Result<f64> {
    let pop = interim_efficiency(params, &RankingRegime::Popularity)?;
    let rnd = interim_efficiency(params, &RankingRegime::Random)?;
    Ok(ex_ante_efficiency(&pop, q) - ex_ante_efficiency(&rnd, q))
}

/// Ex-ante efficiency under personalization `lambda` minus under `lambda = 0`.
pub fn per(params: &ModelParams, group: &GroupConfig, q: f64) -> Result<f64> {
    per_with(params, group, q, PersonalizedMethod::Coupled)
}

pub fn per_with(params: &ModelParams, group: &GroupConfig, q: f64, method: PersonalizedMethod) -> Result<f64> {
    let at = |lambda: f64| -> Result<f64> {
        let regime = RankingRegime::Personalized { group: group.with_lambda(lambda), method };
        Ok(ex_ante_efficiency(&interim_efficiency(params, &regime)?, q))
    };
    if group.lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(at(group.lambda)? - at(0.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolarizationRegime {
    Limit,
    Horizon { horizon: usize, schedule: PersistenceSchedule },
}

/// Gap between the groups' expected clicking mass on the majority class.
pub fn belief_polarization(
    params: &ModelParams,
    group: &GroupConfig,
    real: &InterimRealization,
    regime: PolarizationRegime,
) -> Result<f64> {
    match regime {
        PolarizationRegime::Limit => {
            Ok(personalized_class_limit(params, group, real.num_correct(), PersonalizedMethod::Coupled)?.click_gap())
        }
        PolarizationRegime::Horizon { horizon, schedule } => {
            let majority = real.effective_majority()?;
            let class: Vec<usize> = (0..real.num_sites()).filter(|&i| real.signal(i) == majority).collect();
            let r1 = Ranking::uniform(real.num_sites());
            let (a, b) =
                mean_dynamics_personalized(params, group, real, &r1, &r1, horizon, schedule, Recording::Final)?;
            let mass = |rec: &crate::dynamics::TrajectoryRecord| {
                rec.last().choice.as_ref().map(|c| c.mass_on(&class)).unwrap_or(0.0)
            };
            Ok((mass(&a) - mass(&b)).abs())
        }
    }
}

/// `P_{l_to} / P_{l_from}` for counts on the same side of `M/2`.
pub fn aof_amplification(params: &ModelParams, l_from: usize, l_to: usize) -> Result<f64> {
    let m = params.m;
    let side = |l: usize| (2 * l).cmp(&m);
    if side(l_from) != side(l_to) || side(l_from) == std::cmp::Ordering::Equal {
        return Err(Error::Precondition(format!(
            "L = {l_from} and L = {l_to} are not strictly on the same side of M/2"
        )));
    }
    let from = class_limit(params, l_from)?;
    if from == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(class_limit(params, l_to)? / from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ex_ante_binomial_expansion() {
        let (a, b) = (0.3, 0.6);
        let got = ex_ante_efficiency(&[0.0, a, b, 1.0], 0.7);
        let want = 0.027 * 0.0 + 3.0 * 0.063 * a + 3.0 * 0.147 * b + 0.343;
        assert!((got - want).abs() < 1e-15);
        assert!((ex_ante_efficiency(&[0.4; 6], 0.3) - 0.4).abs() < 1e-15);
        assert_eq!(ex_ante_efficiency(&[0.0, 0.2, 0.7, 1.0], 1.0), 1.0);
    }

    #[test]
    fn net_of_aof_flat_plateaus() {
        let m = 20;
        let mut interim = vec![0.3; m + 1];
        for (l, x) in interim.iter_mut().enumerate() {
            if 2 * l > m {
                *x = 0.8;
            } else if 2 * l == m {
                *x = 0.55;
            }
        }
        interim[0] = 0.0;
        interim[m] = 1.0;
        for q in [0.6, 0.7, 0.9] {
            assert!((net_of_aof(&interim, q) - ex_ante_efficiency(&interim, q)).abs() < 1e-14);
        }
        assert_eq!(net_of_aof(&interim, 1.0), 1.0);
    }

    #[test]
    fn report_consistency() {
        let params = ModelParams::default();
        let rep = efficiency_report(&params, &RankingRegime::Popularity).unwrap();
        assert_eq!(rep.interim[0], 0.0);
        assert_eq!(rep.interim[20], 1.0);
        assert!(rep.interim.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((rep.ex_ante - ex_ante_efficiency(&rep.interim, params.q)).abs() < 1e-12);
        assert_eq!(rep.params_hash.len(), 16);
    }

    #[test]
    fn random_regime_plateaus() {
        let params = ModelParams::default();
        let interim = interim_efficiency(&params, &RankingRegime::Random).unwrap();
        for (l, &x) in interim.iter().enumerate().take(20).skip(1) {
            let want = match (2 * l).cmp(&20) {
                std::cmp::Ordering::Less => 0.2485,
                std::cmp::Ordering::Greater => 0.7845,
                std::cmp::Ordering::Equal => 0.5 * (0.2485 + 0.7845),
            };
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_profile_tracks_limits() {
        let params = ModelParams { m: 6, ..ModelParams::default() };
        let sched = PersistenceSchedule::Constant(200.0);
        let mc = monte_carlo_interim(&params, &RankingRegime::Popularity, 10_000, sched, 40, 5).unwrap();
        let lim = interim_efficiency(&params, &RankingRegime::Popularity).unwrap();
        for l in [0, 1, 2, 4, 5, 6] {
            assert!((mc[l] - lim[l]).abs() < 0.01, "L={l}: {} vs {}", mc[l], lim[l]);
        }
        // The tie mixes two branches by coin, so its spread is wide.
        assert!((mc[3] - lim[3]).abs() < 0.2);
        let rnd = monte_carlo_interim(&params, &RankingRegime::Random, 50, sched, 400, 5).unwrap();
        let want = interim_efficiency(&params, &RankingRegime::Random).unwrap();
        // Frozen uniform ranking: only the tie coin varies across runs.
        for l in [1, 2, 4, 5] {
            assert!((rnd[l] - want[l]).abs() < 1e-12);
        }
        assert!((rnd[3] - want[3]).abs() < 0.1);
        let again = monte_carlo_interim(&params, &RankingRegime::Popularity, 10_000, sched, 40, 5).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn por_vanishes_without_noise_or_preference() {
        let params = ModelParams { gamma: 0.0, mu: 1.0, ..ModelParams::default() };
        assert!(por(&params, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn per_trivial_cases() {
        let params = ModelParams::default();
        assert_eq!(per(&params, &GroupConfig::new(0.0, 0.66, 0.0), 0.7).unwrap(), 0.0);
        let same = GroupConfig::new(0.33, 0.33, 1.0);
        assert!(per(&params, &same, 0.7).unwrap().abs() < 1e-9);
    }

    #[test]
    fn polarization_symmetric_groups() {
        let params = ModelParams::default();
        let real = crate::model::fix_realization(true, 14, 20).unwrap();
        for lambda in [0.0, 0.5, 1.0] {
            let g = GroupConfig::new(0.4, 0.4, lambda);
            assert!(belief_polarization(&params, &g, &real, PolarizationRegime::Limit).unwrap() < 1e-9);
        }
    }

    #[test]
    fn amplification_cases() {
        let params = ModelParams::default();
        assert_eq!(aof_amplification(&params, 3, 3).unwrap(), 1.0);
        assert!(aof_amplification(&params, 5, 15).is_err());
        assert!(aof_amplification(&params, 10, 9).is_err());
        for gamma in [0.0, 1.0] {
            let p = ModelParams { gamma, ..params };
            assert!((aof_amplification(&p, 2, 1).unwrap() - 1.0).abs() < 1e-9);
            assert!((aof_amplification(&p, 16, 15).unwrap() - 1.0).abs() < 1e-9);
        }
        let half = ModelParams { gamma: 0.5, ..params };
        let ratio = aof_amplification(&half, 2, 1).unwrap();
        assert!(ratio > 1.0 && ratio < 2.0, "{ratio}");
    }
}
