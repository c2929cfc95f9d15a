//! Stochastic ranking trajectories, mean dynamics and their ODE limit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choice::{
    apply_edge_fallback, attention_weights_into, cell_weights, check_simplex, expected_choice_into,
    expected_value_table, normalized_product_into, ranking_free_values_into, ChoiceDistribution,
    ExpectedValueTable,
};
use crate::error::{Error, Result};
use crate::model::{sample_agent_signals, Group, GroupConfig, InterimRealization, ModelParams};
use crate::rng::seeded;

/// Lower bound on mean-dynamics ranking entries.
pub const EPS_FLOOR: f64 = 1e-9;

/// A probability vector over websites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking(Vec<f64>);

impl Ranking {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(Ranking(probs))
    }

    /// Normalizes positive scores into a ranking.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0) || scores.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::NotOnSimplex { sum: total, min: f64::NAN });
        }
        Ok(Ranking(scores.iter().map(|s| s / total).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Ranking(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self) -> bool {
        self.min() > 0.0
    }

    pub fn mass_on(&self, sites: &[usize]) -> f64 {
        sites.iter().map(|&i| self.0[i]).sum()
    }

    fn require_interior(&self, m: usize) -> Result<()> {
        if self.len() != m {
            return Err(Error::LengthMismatch { expected: m, got: self.len() });
        }
        if !self.is_interior() {
            return Err(Error::NotInterior { min: self.min() });
        }
        Ok(())
    }
}

/// Ranking persistence `kappa_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceSchedule {
    Constant(f64),
    Growing { kappa0: f64, c: f64 },
}

impl Default for PersistenceSchedule {
    fn default() -> Self {
        PersistenceSchedule::Constant(100.0)
    }
}

impl PersistenceSchedule {
    pub fn growing_default() -> Self {
        PersistenceSchedule::Growing { kappa0: 100.0, c: 1.0 }
    }

    /// `kappa_t` for the update after agent `t` (1-based).
    pub fn kappa_at(&self, t: usize) -> f64 {
        match *self {
            PersistenceSchedule::Constant(k) => k,
            PersistenceSchedule::Growing { kappa0, c } => kappa0 + c * t as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PersistenceSchedule::Constant(k) => k >= 1.0,
            PersistenceSchedule::Growing { kappa0, c } => kappa0 >= 1.0 && c >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(vec![format!("persistence schedule needs kappa_t >= 1: {self:?}")]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// The full clicking distribution enters the ranking update.
    #[default]
    ProbFeedback,
    /// One sampled click enters the ranking update.
    RealizedClick,
    /// The ranking never moves (random ranking when started uniform).
    Frozen,
}

/// Which steps are stored in a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Recording {
    #[default]
    All,
    /// Every n-th step plus the last.
    Every(usize),
    /// Only the last step.
    Final,
}

impl Recording {
    fn keeps(&self, t: usize, horizon: usize) -> bool {
        t == horizon
            || match *self {
                Recording::All => true,
                Recording::Every(n) => n > 0 && t % n == 0,
                Recording::Final => false,
            }
    }
}

/// Horizon and update rule of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub schedule: PersistenceSchedule,
    pub mode: FeedbackMode,
    pub recording: Recording,
}

impl SimConfig {
    pub fn new(horizon: usize, schedule: PersistenceSchedule) -> Self {
        SimConfig { horizon, schedule, mode: FeedbackMode::ProbFeedback, recording: Recording::All }
    }

    pub fn with_mode(self, mode: FeedbackMode) -> Self {
        SimConfig { mode, ..self }
    }

    pub fn with_recording(self, recording: Recording) -> Self {
        SimConfig { recording, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        self.schedule.validate()
    }
}

/// State at one step: the ranking the agent saw and what it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub ranking: Ranking,
    /// Clicking distribution of this step's agent; `None` when the agent belongs to the other group.
    pub choice: Option<ChoiceDistribution>,
    pub click: Option<usize>,
    /// Group of the arriving agent in two-group runs.
    pub arrival: Option<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub group: Option<Group>,
    pub horizon: usize,
    pub points: Vec<TrajectoryPoint>,
    /// Steps at which the all-zero value fallback fired.
    pub fallback_steps: usize,
}

impl TrajectoryRecord {
    fn new(group: Option<Group>, horizon: usize, capacity: usize) -> Self {
        TrajectoryRecord { group, horizon, points: Vec::with_capacity(capacity), fallback_steps: 0 }
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least one point")
    }

    pub fn final_ranking(&self) -> &Ranking {
        &self.last().ranking
    }

    /// Mass on `sites` of each recorded ranking.
    pub fn ranking_mass(&self, sites: &[usize]) -> Vec<f64> {
        self.points.iter().map(|p| p.ranking.mass_on(sites)).collect()
    }

    /// Mass on `sites` of each recorded choice.
    pub fn choice_mass(&self, sites: &[usize]) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.choice.as_ref().map(|c| c.mass_on(sites))).collect()
    }
}

fn capacity(horizon: usize, rec: Recording) -> usize {
    match rec {
        Recording::All => horizon,
        Recording::Every(n) => horizon / n.max(1) + 1,
        Recording::Final => 1,
    }
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// In-place convex update with weights `(kappa, w)` on `(r, target)`.
fn blend_into(r: &mut [f64], target: &[f64], kappa: f64, w: f64) {
    if w == 0.0 {
        return;
    }
    let denom = kappa + w;
    for (x, &t) in r.iter_mut().zip(target) {
        *x = (kappa * *x + w * t) / denom;
    }
    renormalize(r);
}

fn blend_click(r: &mut [f64], click: usize, kappa: f64, w: f64) {
    if w == 0.0 {
        return;
    }
    let denom = kappa + w;
    for x in r.iter_mut() {
        *x = kappa * *x / denom;
    }
    r[click] += w / denom;
    renormalize(r);
}

fn floor_and_renormalize(r: &mut [f64]) {
    for x in r.iter_mut() {
        if *x < EPS_FLOOR {
            *x = EPS_FLOOR;
        }
    }
    renormalize(r);
}

/// `r_t = (kappa_t r_{t-1} + rho_{t-1}) / (kappa_t + 1)`.
pub fn step_ranking(r_prev: &Ranking, rho_prev: &ChoiceDistribution, kappa_t: f64) -> Ranking {
    let mut r = r_prev.0.clone();
    blend_into(&mut r, rho_prev.as_slice(), kappa_t, 1.0);
    Ranking(r)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Scratch space for one agent's choice.
struct ChoiceKernel {
    values: Vec<f64>,
    weights: Vec<f64>,
    rho: Vec<f64>,
}

impl ChoiceKernel {
    fn new(m: usize) -> Self {
        ChoiceKernel { values: vec![0.0; m], weights: vec![0.0; m], rho: vec![0.0; m] }
    }

    /// Draws signals and fills `rho`; returns whether the fallback fired.
    fn choose<R: Rng + ?Sized>(
        &mut self,
        ranking: &[f64],
        real: &InterimRealization,
        params: &ModelParams,
        gamma: f64,
        rng: &mut R,
    ) -> Result<bool> {
        let signals = sample_agent_signals(real, params, rng)?;
        ranking_free_values_into(signals, real, gamma, &mut self.values);
        let fired = apply_edge_fallback(signals, real, &mut self.values);
        attention_weights_into(ranking, params.alpha, &mut self.weights);
        normalized_product_into(&self.weights, &self.values, &mut self.rho)?;
        Ok(fired)
    }
}

fn prepare_realization<R: Rng + ?Sized>(real: &InterimRealization, rng: &mut R) -> InterimRealization {
    let mut real = real.clone();
    real.break_tie(rng);
    real
}

/// Sequential agents updating a single shared ranking.
///
/// A tied realization gets its majority bit drawn once from the run's stream.
pub fn simulate(
    params: &ModelParams,
    real: &InterimRealization,
    r1: &Ranking,
    cfg: &SimConfig,
    seed: u64,
) -> Result<TrajectoryRecord> {
    simulate_with_rng(params, real, r1, cfg, &mut seeded(seed))
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    real: &InterimRealization,
    r1: &Ranking,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    params.check()?;
    cfg.validate()?;
    let m = real.num_sites();
    r1.require_interior(m)?;
    let real = prepare_realization(real, rng);
    let mut kernel = ChoiceKernel::new(m);
    let mut r = r1.0.clone();
    let mut rec = TrajectoryRecord::new(None, cfg.horizon, capacity(cfg.horizon, cfg.recording));
    for t in 1..=cfg.horizon {
        if kernel.choose(&r, &real, params, params.gamma, rng)? {
            rec.fallback_steps += 1;
        }
        let click = match cfg.mode {
            FeedbackMode::RealizedClick => Some(sample_index(&kernel.rho, rng)),
            _ => None,
        };
        if cfg.recording.keeps(t, cfg.horizon) {
            rec.points.push(TrajectoryPoint {
                step: t,
                ranking: Ranking(r.clone()),
                choice: Some(ChoiceDistribution::from_raw(kernel.rho.clone())),
                click,
                arrival: None,
            });
        }
        let kappa = cfg.schedule.kappa_at(t);
        match (cfg.mode, click) {
            (FeedbackMode::Frozen, _) => {}
            (_, None) => blend_into(&mut r, &kernel.rho, kappa, 1.0),
            (_, Some(k)) => blend_click(&mut r, k, kappa, 1.0),
        }
    }
    Ok(rec)
}

/// Expected clicking field `x -> rho_hat(x)` for one realization.
pub struct ExpectedField {
    table: ExpectedValueTable,
    coeffs: [f64; 4],
    alpha: f64,
    weights: Vec<f64>,
    scratch: Vec<f64>,
}

impl ExpectedField {
    pub fn new(params: &ModelParams, real: &InterimRealization, gamma: f64) -> Result<Self> {
        let table = expected_value_table(real, gamma, params.signal_model)?;
        let m = real.num_sites();
        Ok(ExpectedField {
            table,
            coeffs: cell_weights(params),
            alpha: params.alpha,
            weights: vec![0.0; m],
            scratch: vec![0.0; m],
        })
    }

    pub fn eval(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        attention_weights_into(x, self.alpha, &mut self.weights);
        expected_choice_into(&self.weights, &self.table, self.coeffs, &mut self.scratch, out)
    }
}

/// Deterministic recursion with the expected choice in place of the sampled one.
pub fn mean_dynamics_recursion(
    params: &ModelParams,
    real: &InterimRealization,
    r1: &Ranking,
    horizon: usize,
    schedule: PersistenceSchedule,
    recording: Recording,
) -> Result<TrajectoryRecord> {
    params.check()?;
    SimConfig { horizon, schedule, mode: FeedbackMode::ProbFeedback, recording }.validate()?;
    let m = real.num_sites();
    r1.require_interior(m)?;
    let mut field = ExpectedField::new(params, real, params.gamma)?;
    let mut r = r1.0.clone();
    let mut rho = vec![0.0; m];
    let mut rec = TrajectoryRecord::new(None, horizon, capacity(horizon, recording));
    for t in 1..=horizon {
        field.eval(&r, &mut rho)?;
        if recording.keeps(t, horizon) {
            rec.points.push(TrajectoryPoint {
                step: t,
                ranking: Ranking(r.clone()),
                choice: Some(ChoiceDistribution::from_raw(rho.clone())),
                click: None,
                arrival: None,
            });
        }
        let gain = 1.0 / (1.0 + schedule.kappa_at(t));
        for (x, &target) in r.iter_mut().zip(&rho) {
            *x += gain * (target - *x);
        }
        floor_and_renormalize(&mut r);
    }
    Ok(rec)
}

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub h: f64,
    pub max_steps: usize,
    /// Stop once the step's velocity `|x_{k+1} - x_k|_inf / h` falls below this.
    pub tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { h: 0.01, max_steps: 1_000_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub state: Ranking,
    pub steps: usize,
    pub residual: f64,
}

/// Integrates `x' = rho_hat(x) - x` to a rest point.
pub fn integrate_ode(
    params: &ModelParams,
    real: &InterimRealization,
    x0: &Ranking,
    opts: OdeOptions,
) -> Result<OdeSolution> {
    params.check()?;
    let m = real.num_sites();
    x0.require_interior(m)?;
    let mut field = ExpectedField::new(params, real, params.gamma)?;
    let mut x = x0.0.clone();
    let h = opts.h;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    let mut prev = vec![0.0; m];
    let mut residual = f64::INFINITY;

    let g = |field: &mut ExpectedField, x: &[f64], out: &mut [f64]| -> Result<()> {
        field.eval(x, out)?;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o -= xi);
        Ok(())
    };

    for step in 1..=opts.max_steps {
        prev.copy_from_slice(&x);
        g(&mut field, &x, &mut k1)?;
        tmp.iter_mut().zip(&x).zip(&k1).for_each(|((t, xi), k)| *t = xi + 0.5 * h * k);
        g(&mut field, &tmp, &mut k2)?;
        tmp.iter_mut().zip(&x).zip(&k2).for_each(|((t, xi), k)| *t = xi + 0.5 * h * k);
        g(&mut field, &tmp, &mut k3)?;
        tmp.iter_mut().zip(&x).zip(&k3).for_each(|((t, xi), k)| *t = xi + h * k);
        g(&mut field, &tmp, &mut k4)?;
        for i in 0..m {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        floor_and_renormalize(&mut x);
        residual = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / h;
        if residual < opts.tol {
            return Ok(OdeSolution { state: Ranking(x), steps: step, residual });
        }
    }
    Err(Error::NonConvergence { steps: opts.max_steps, residual })
}

struct GroupState {
    rank: Vec<f64>,
    rec: TrajectoryRecord,
}

/// Two groups with personalized rankings sharing click feedback at weight `1 - lambda`.
pub fn simulate_personalized(
    params: &ModelParams,
    group: &GroupConfig,
    real: &InterimRealization,
    r1a: &Ranking,
    r1b: &Ranking,
    cfg: &SimConfig,
    seed: u64,
) -> Result<(TrajectoryRecord, TrajectoryRecord)> {
    params.check()?;
    group.validate()?;
    cfg.validate()?;
    let m = real.num_sites();
    r1a.require_interior(m)?;
    r1b.require_interior(m)?;
    let mut rng = seeded(seed);
    let real = prepare_realization(real, &mut rng);
    let cap = capacity(cfg.horizon, cfg.recording);
    let mut groups = [
        GroupState { rank: r1a.0.clone(), rec: TrajectoryRecord::new(Some(Group::A), cfg.horizon, cap) },
        GroupState { rank: r1b.0.clone(), rec: TrajectoryRecord::new(Some(Group::B), cfg.horizon, cap) },
    ];
    let mut kernel = ChoiceKernel::new(m);
    let cross = 1.0 - group.lambda;
    for t in 1..=cfg.horizon {
        let arrival = if rng.random_bool(group.share_a) { Group::A } else { Group::B };
        let own = arrival as usize;
        let other = arrival.other() as usize;
        if kernel.choose(&groups[own].rank, &real, params, group.gamma(arrival), &mut rng)? {
            groups[own].rec.fallback_steps += 1;
        }
        let click = match cfg.mode {
            FeedbackMode::RealizedClick => Some(sample_index(&kernel.rho, &mut rng)),
            _ => None,
        };
        if cfg.recording.keeps(t, cfg.horizon) {
            for (i, g) in groups.iter_mut().enumerate() {
                let mine = i == own;
                g.rec.points.push(TrajectoryPoint {
                    step: t,
                    ranking: Ranking(g.rank.clone()),
                    choice: mine.then(|| ChoiceDistribution::from_raw(kernel.rho.clone())),
                    click: if mine { click } else { None },
                    arrival: Some(arrival),
                });
            }
        }
        let kappa = cfg.schedule.kappa_at(t);
        if cfg.mode == FeedbackMode::Frozen {
            continue;
        }
        for (target, w) in [(own, 1.0), (other, cross)] {
            match click {
                None => blend_into(&mut groups[target].rank, &kernel.rho, kappa, w),
                Some(k) => blend_click(&mut groups[target].rank, k, kappa, w),
            }
        }
    }
    let [a, b] = groups;
    Ok((a.rec, b.rec))
}

/// Expected two-group recursion.
///
/// Each step adds the arrival-probability-weighted expected increments of both groups.
pub fn mean_dynamics_personalized(
    params: &ModelParams,
    group: &GroupConfig,
    real: &InterimRealization,
    r1a: &Ranking,
    r1b: &Ranking,
    horizon: usize,
    schedule: PersistenceSchedule,
    recording: Recording,
) -> Result<(TrajectoryRecord, TrajectoryRecord)> {
    params.check()?;
    group.validate()?;
    SimConfig { horizon, schedule, mode: FeedbackMode::ProbFeedback, recording }.validate()?;
    let m = real.num_sites();
    r1a.require_interior(m)?;
    r1b.require_interior(m)?;
    let mut fa = ExpectedField::new(params, real, group.gamma_a)?;
    let mut fb = ExpectedField::new(params, real, group.gamma_b)?;
    let (mut ra, mut rb) = (r1a.0.clone(), r1b.0.clone());
    let (mut rho_a, mut rho_b) = (vec![0.0; m], vec![0.0; m]);
    let cap = capacity(horizon, recording);
    let mut rec_a = TrajectoryRecord::new(Some(Group::A), horizon, cap);
    let mut rec_b = TrajectoryRecord::new(Some(Group::B), horizon, cap);
    let s = group.share_a;
    let cross = 1.0 - group.lambda;
    for t in 1..=horizon {
        fa.eval(&ra, &mut rho_a)?;
        fb.eval(&rb, &mut rho_b)?;
        if recording.keeps(t, horizon) {
            for (rec, r, rho) in [(&mut rec_a, &ra, &rho_a), (&mut rec_b, &rb, &rho_b)] {
                rec.points.push(TrajectoryPoint {
                    step: t,
                    ranking: Ranking(r.clone()),
                    choice: Some(ChoiceDistribution::from_raw(rho.clone())),
                    click: None,
                    arrival: None,
                });
            }
        }
        let kappa = schedule.kappa_at(t);
        let own_gain = 1.0 / (kappa + 1.0);
        let cross_gain = cross / (kappa + cross);
        for i in 0..m {
            let da = s * own_gain * (rho_a[i] - ra[i]) + (1.0 - s) * cross_gain * (rho_b[i] - ra[i]);
            let db = (1.0 - s) * own_gain * (rho_b[i] - rb[i]) + s * cross_gain * (rho_a[i] - rb[i]);
            ra[i] += da;
            rb[i] += db;
        }
        floor_and_renormalize(&mut ra);
        floor_and_renormalize(&mut rb);
    }
    Ok((rec_a, rec_b))
}

/// Ratios `rho_m / rho_m'` along a mean-dynamics trajectory.
pub fn rich_get_richer_ratio(
    traj: &TrajectoryRecord,
    real: &InterimRealization,
    m: usize,
    m_prime: usize,
) -> Result<Vec<f64>> {
    let n = real.num_sites();
    if m >= n || m_prime >= n {
        return Err(Error::Precondition(format!("site index out of range for M = {n}")));
    }
    if real.signal(m) != real.signal(m_prime) {
        return Err(Error::Precondition("sites must carry the same signal".into()));
    }
    let first = &traj.points.first().ok_or(Error::EmptyHorizon)?.ranking;
    let (a, b) = (first.as_slice()[m], first.as_slice()[m_prime]);
    if !(a > b && b > 0.0) {
        return Err(Error::Precondition(format!("need r1[m] > r1[m'] > 0 (got {a}, {b})")));
    }
    traj.points
        .iter()
        .filter_map(|p| p.choice.as_ref())
        .map(|c| {
            let den = c.as_slice()[m_prime];
            if den > 0.0 {
                Ok(c.as_slice()[m] / den)
            } else {
                Err(Error::ZeroDenominator)
            }
        })
        .collect()
}
