//! Ordinal ranked-list dynamics and merging-outlet sweeps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{
    apply_edge_fallback, cell_weights, expected_choice_into, expected_value_table, normalized_product_into,
    ranking_free_values_into, ChoiceDistribution,
};
use crate::error::{Error, Result};
use crate::limits::class_limit;
use crate::model::{fix_realization, sample_agent_signals, InterimRealization, ModelParams};
use crate::rng::replication;

/// Click counts and list positions (1 = top).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalState {
    click_counts: Vec<u64>,
    positions: Vec<usize>,
    order: Vec<usize>,
}

impl OrdinalState {
    pub fn new(positions: Vec<usize>) -> Result<Self> {
        let m = positions.len();
        let mut order = vec![usize::MAX; m];
        for (site, &pos) in positions.iter().enumerate() {
            if pos == 0 || pos > m || order[pos - 1] != usize::MAX {
                return Err(Error::Precondition(format!("positions must be a permutation of 1..={m}")));
            }
            order[pos - 1] = site;
        }
        Ok(OrdinalState { click_counts: vec![0; m], positions, order })
    }

    pub fn click_counts(&self) -> &[u64] {
        &self.click_counts
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Sites from top to bottom.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Adds a click and re-sorts by clicks, keeping the previous order among equal counts.
    pub fn record_click(&mut self, site: usize) {
        self.click_counts[site] += 1;
        let counts = &self.click_counts;
        // Stable sort of the previous order: ties keep the better previous position.
        self.order.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
        for (i, &s) in self.order.iter().enumerate() {
            self.positions[s] = i + 1;
        }
    }

    /// `beta^(M - position)`, divided by `beta^(M-1)` to stay in `(0, 1]`.
    pub fn weights_into(&self, beta: f64, out: &mut [f64]) {
        for (o, &pos) in out.iter_mut().zip(&self.positions) {
            *o = beta.powi(-((pos - 1) as i32));
        }
    }
}

/// Initial list with the correct websites in the bottom positions, in index order.
pub fn bottom_ranked_positions(real: &InterimRealization) -> Vec<usize> {
    let m = real.num_sites();
    let mut positions = vec![0; m];
    let mut next = 1;
    for site in (0..m).filter(|&s| !real.is_correct(s)) {
        positions[site] = next;
        next += 1;
    }
    for &site in real.correct_set() {
        positions[site] = next;
        next += 1;
    }
    positions
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPoint {
    pub step: usize,
    pub positions: Vec<usize>,
    pub choice: ChoiceDistribution,
    pub click: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalRecord {
    pub points: Vec<OrdinalPoint>,
    pub final_state: OrdinalState,
    pub fallback_steps: usize,
}

/// Agents click one site each; the list is re-sorted by cumulative clicks.
pub fn simulate_ordinal(
    params: &ModelParams,
    real: &InterimRealization,
    initial_positions: &[usize],
    horizon: usize,
    beta: f64,
    record: bool,
    seed: u64,
) -> Result<OrdinalRecord> {
    simulate_ordinal_with_rng(params, real, initial_positions, horizon, beta, record, &mut crate::rng::seeded(seed))
}

fn simulate_ordinal_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    real: &InterimRealization,
    initial_positions: &[usize],
    horizon: usize,
    beta: f64,
    record: bool,
    rng: &mut R,
) -> Result<OrdinalRecord> {
    params.check()?;
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::InvalidParams(vec![format!("beta >= 1 (got {beta})")]));
    }
    let m = real.num_sites();
    if initial_positions.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: initial_positions.len() });
    }
    let mut real = real.clone();
    real.break_tie(rng);
    let mut state = OrdinalState::new(initial_positions.to_vec())?;
    let (mut values, mut weights, mut rho) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut points = Vec::with_capacity(if record { horizon } else { 0 });
    let mut fallback_steps = 0;
    for t in 1..=horizon {
        let signals = sample_agent_signals(&real, params, rng)?;
        ranking_free_values_into(signals, &real, params.gamma, &mut values);
        if apply_edge_fallback(signals, &real, &mut values) {
            fallback_steps += 1;
        }
        state.weights_into(beta, &mut weights);
        normalized_product_into(&weights, &values, &mut rho)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut click = m - 1;
        for (i, &p) in rho.iter().enumerate() {
            acc += p;
            if u < acc {
                click = i;
                break;
            }
        }
        if record {
            points.push(OrdinalPoint {
                step: t,
                positions: state.positions.clone(),
                choice: ChoiceDistribution::from_raw(rho.clone()),
                click,
            });
        }
        state.record_click(click);
    }
    Ok(OrdinalRecord { points, final_state: state, fallback_steps })
}

/// Signal-marginalized clicking probabilities under list positions.
pub fn ordinal_expected_choice(
    state: &OrdinalState,
    real: &InterimRealization,
    params: &ModelParams,
    beta: f64,
) -> Result<ChoiceDistribution> {
    let m = real.num_sites();
    let table = expected_value_table(real, params.gamma, params.signal_model)?;
    let mut w = vec![0.0; m];
    state.weights_into(beta, &mut w);
    let (mut scratch, mut out) = (vec![0.0; m], vec![0.0; m]);
    expected_choice_into(&w, &table, cell_weights(params), &mut scratch, &mut out)?;
    Ok(ChoiceDistribution::from_raw(out))
}

/// Monte Carlo interim profile: mean terminal expected click mass on the correct class.
///
/// Replication `k` of count `L` uses stream `L * reps + k` of `seed`. Ties are
/// resolved by the coin of each replication.
pub fn ordinal_interim_profile(
    params: &ModelParams,
    horizon: usize,
    beta: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let m = params.m;
    (0..=m)
        .map(|l| {
            if l == 0 || l == m {
                return Ok(if l == 0 { 0.0 } else { 1.0 });
            }
            let real = fix_realization(true, l, m)?;
            let positions = bottom_ranked_positions(&real);
            let total: f64 = (0..reps)
                .into_par_iter()
                .map(|k| -> Result<f64> {
                    let mut rng = replication(seed, (l * reps + k) as u64);
                    let mut real = real.clone();
                    real.break_tie(&mut rng);
                    let rec = simulate_ordinal_with_rng(params, &real, &positions, horizon, beta, false, &mut rng)?;
                    Ok(ordinal_expected_choice(&rec.final_state, &real, params, beta)?.mass_on(real.correct_set()))
                })
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum();
            Ok(total / reps as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergePoint {
    pub l: usize,
    pub m: usize,
    pub p_l: f64,
}

/// Limit class mass with `j` incorrect and `l` correct websites, so `M = j + l`.
pub fn merging_sweep(
    params: &ModelParams,
    j: usize,
    l_range: impl IntoIterator<Item = usize>,
) -> Result<Vec<MergePoint>> {
    if j == 0 {
        return Err(Error::Precondition("need at least one incorrect website".into()));
    }
    l_range
        .into_iter()
        .map(|l| {
            let m = j + l;
            let local = ModelParams { m, ..*params };
            Ok(MergePoint { l, m, p_l: class_limit(&local, l)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{ranking_free_values, weighted_choice};
    use crate::dynamics::Ranking;
    use crate::model::AgentSignals;

    #[test]
    fn positions_follow_clicks_and_ties() {
        let mut s = OrdinalState::new(vec![3, 1, 2]).unwrap();
        assert_eq!(s.order(), &[1, 2, 0]);
        s.record_click(0);
        assert_eq!(s.positions(), &[1, 2, 3]);
        s.record_click(2);
        // Sites 0 and 2 tie at one click; 0 was higher.
        assert_eq!(s.positions(), &[1, 3, 2]);
        s.record_click(2);
        assert_eq!(s.positions(), &[2, 3, 1]);
        assert_eq!(s.click_counts().iter().sum::<u64>(), 3);
        assert!(OrdinalState::new(vec![1, 1, 2]).is_err());
    }

    #[test]
    fn bottom_ranking_layout() {
        let real = fix_realization(true, 3, 6).unwrap();
        assert_eq!(bottom_ranked_positions(&real), vec![4, 5, 6, 1, 2, 3]);
    }

    #[test]
    fn unit_base_ignores_positions() {
        let params = ModelParams::default();
        let real = fix_realization(true, 7, 20).unwrap();
        let rec = simulate_ordinal(&params, &real, &bottom_ranked_positions(&real), 50, 1.0, true, 3).unwrap();
        let u = Ranking::uniform(20);
        for pt in &rec.points {
            let full: Vec<f64> = pt.choice.as_slice().to_vec();
            let ok = [(true, true), (true, false), (false, true), (false, false)].iter().any(|&(x, z)| {
                let v = ranking_free_values(AgentSignals { x: x == real.omega(), z }, &real, params.gamma);
                let rho = weighted_choice(&u, &v, 1.0).unwrap();
                rho.as_slice().iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-14)
            });
            assert!(ok);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let params = ModelParams::default();
        let real = fix_realization(true, 12, 20).unwrap();
        let pos = bottom_ranked_positions(&real);
        let a = simulate_ordinal(&params, &real, &pos, 300, 1.5, true, 77).unwrap();
        let b = simulate_ordinal(&params, &real, &pos, 300, 1.5, true, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merging_endpoints_and_consistency() {
        let params = ModelParams::default();
        let sweep = merging_sweep(&params, 10, 0..=20).unwrap();
        assert_eq!(sweep[0].p_l, 0.0);
        assert_eq!(sweep[10].m, 20);
        assert!((sweep[10].p_l - class_limit(&params, 10).unwrap()).abs() < 1e-15);
        let flat = merging_sweep(&ModelParams { gamma: 0.0, ..params }, 10, 1..=9).unwrap();
        for w in flat.windows(2) {
            assert!((w[0].p_l - w[1].p_l).abs() < 1e-9);
        }
    }
}
