//! Parameters, interim realizations and signal sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied to every inequality boundary during validation.
pub const VALIDATION_TOL: f64 = 1e-12;

/// How the agent's second signal `z` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "signal_model", rename_all = "snake_case")]
pub enum SignalModel {
    /// `z` reports the websites' majority signal with accuracy `mu`.
    MajorityPerception,
    /// `z` reports the true state with accuracy `mu_hat`.
    Sophisticated { mu_hat: f64 },
}

/// Scalar parameters of a search environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha: f64,
    pub kappa: u32,
    #[serde(flatten)]
    pub signal_model: SignalModel,
}

impl Default for ModelParams {
    /// The baseline environment used throughout the figures.
    fn default() -> Self {
        ModelParams {
            p: 0.55,
            q: 0.7,
            mu: 0.9,
            gamma: 0.33,
            m: 20,
            alpha: 1.0,
            kappa: 100,
            signal_model: SignalModel::MajorityPerception,
        }
    }
}

impl ModelParams {
    /// Accuracy of the `z` signal about its reference bit.
    pub fn z_accuracy(&self) -> f64 {
        match self.signal_model {
            SignalModel::MajorityPerception => self.mu,
            SignalModel::Sophisticated { mu_hat } => mu_hat,
        }
    }

    pub fn is_sophisticated(&self) -> bool {
        matches!(self.signal_model, SignalModel::Sophisticated { .. })
    }

    /// Non-strict validation turned into a `Result`.
    pub fn check(&self) -> Result<()> {
        validate(self, false).into_result()
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    /// Violated constraints. Non-empty means invalid.
    pub violations: Vec<String>,
    /// Constraints of the analysed regime that fail without invalidating the parameters.
    pub outside_regime: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn in_regime(&self) -> bool {
        self.outside_regime.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(self.violations))
        }
    }
}

fn gt(a: f64, b: f64) -> bool {
    a > b + VALIDATION_TOL
}

fn in_closed(x: f64, lo: f64, hi: f64) -> bool {
    x.is_finite() && x >= lo - VALIDATION_TOL && x <= hi + VALIDATION_TOL
}

/// Checks parameter restrictions.
///
/// Hard domain limits always apply. The open intervals of the analysed regime
/// (`1/2 < p < 1`, `1/2 < q < 1`, `1/2 < mu`) are reported in
/// `outside_regime` unless `strict` is set, in which case they and the
/// informativeness ordering become violations.
pub fn validate(params: &ModelParams, strict: bool) -> Validation {
    let mut v = Validation::default();
    let mut regime = Vec::new();
    let ModelParams { p, q, mu, gamma, m, alpha, kappa, .. } = *params;

    for (name, x) in [("p", p), ("q", q), ("mu", mu)] {
        if !in_closed(x, 0.5, 1.0) {
            v.violations.push(format!("{name} in [1/2, 1] (got {x})"));
        }
    }
    if !in_closed(gamma, 0.0, 1.0) {
        v.violations.push(format!("gamma in [0, 1] (got {gamma})"));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        v.violations.push(format!("alpha >= 0 (got {alpha})"));
    }
    if m < 2 {
        v.violations.push(format!("M >= 2 (got {m})"));
    }
    if kappa < 1 {
        v.violations.push("kappa >= 1 (got 0)".to_string());
    }
    if let SignalModel::Sophisticated { mu_hat } = params.signal_model {
        if !in_closed(mu_hat, 0.5, 1.0) {
            v.violations.push(format!("mu_hat in [1/2, 1] (got {mu_hat})"));
        }
    }

    if !(gt(p, 0.5) && gt(1.0, p)) {
        regime.push(format!("1/2 < p < 1 (got {p})"));
    }
    if !(gt(q, 0.5) && gt(1.0, q)) {
        regime.push(format!("1/2 < q < 1 (got {q})"));
    }
    if !gt(mu, 0.5) {
        regime.push(format!("mu > 1/2 (got {mu})"));
    }

    if strict && v.violations.is_empty() {
        if !gt(mu * q, p) {
            regime.push(format!("mu·q > p ({} <= {p})", mu * q));
        }
        if !gt(q, p) {
            regime.push(format!("q > p ({q} <= {p})"));
        }
        let z = majority_signal_accuracy(mu, q, m);
        if !gt(z, p) {
            regime.push(format!("P(z = omega) > p ({z} <= {p})"));
        }
        if let SignalModel::Sophisticated { mu_hat } = params.signal_model {
            if !gt(mu_hat, mu * q) {
                regime.push(format!("mu_hat > mu·q ({mu_hat} <= {})", mu * q));
            }
        }
        v.violations.append(&mut regime);
    } else {
        v.outside_regime = regime;
    }
    v
}

/// Probability that a majority-perception `z` equals the true state.
///
/// An exact tie contributes with probability 1/2 (fair-coin tie break).
pub fn majority_signal_accuracy(mu: f64, q: f64, m: usize) -> f64 {
    let pmf = binomial_pmf(m, q);
    let mut correct_majority = 0.0;
    let mut tie = 0.0;
    for (k, w) in pmf.iter().enumerate() {
        match (2 * k).cmp(&m) {
            std::cmp::Ordering::Greater => correct_majority += w,
            std::cmp::Ordering::Equal => tie += w,
            std::cmp::Ordering::Less => {}
        }
    }
    let wrong_majority = 1.0 - correct_majority - tie;
    mu * correct_majority + (1.0 - mu) * wrong_majority + 0.5 * tie
}

/// Binomial(n, q) probabilities for k = 0..=n.
pub fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut c = 1.0_f64;
    for k in 0..=n {
        if k > 0 {
            c = c * (n - k + 1) as f64 / k as f64;
        }
        out.push(c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32));
    }
    out
}

/// Signal carried by more than half the websites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MajoritySignal {
    Bit(bool),
    Tie,
}

/// A fixed true state with fixed website signals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterimRealization {
    omega: bool,
    signals: Vec<bool>,
    correct: Vec<usize>,
    majority: MajoritySignal,
    tie_break: Option<bool>,
}

impl InterimRealization {
    pub fn new(omega: bool, signals: Vec<bool>) -> Result<Self> {
        let m = signals.len();
        if m < 2 {
            return Err(Error::InvalidParams(vec![format!("M >= 2 (got {m})")]));
        }
        let correct: Vec<usize> = (0..m).filter(|&i| signals[i] == omega).collect();
        let ones = signals.iter().filter(|&&s| s).count();
        let majority = match (2 * ones).cmp(&m) {
            std::cmp::Ordering::Greater => MajoritySignal::Bit(true),
            std::cmp::Ordering::Less => MajoritySignal::Bit(false),
            std::cmp::Ordering::Equal => MajoritySignal::Tie,
        };
        Ok(InterimRealization { omega, signals, correct, majority, tie_break: None })
    }

    pub fn omega(&self) -> bool {
        self.omega
    }

    pub fn signals(&self) -> &[bool] {
        &self.signals
    }

    pub fn signal(&self, site: usize) -> bool {
        self.signals[site]
    }

    pub fn num_sites(&self) -> usize {
        self.signals.len()
    }

    pub fn correct_set(&self) -> &[usize] {
        &self.correct
    }

    pub fn num_correct(&self) -> usize {
        self.correct.len()
    }

    pub fn is_correct(&self, site: usize) -> bool {
        self.signals[site] == self.omega
    }

    /// Number of websites carrying `bit`.
    pub fn class_size(&self, bit: bool) -> usize {
        if bit == self.omega {
            self.correct.len()
        } else {
            self.signals.len() - self.correct.len()
        }
    }

    pub fn majority_signal(&self) -> MajoritySignal {
        self.majority
    }

    pub fn tie_break(&self) -> Option<bool> {
        self.tie_break
    }

    /// Fixes the majority bit used at an exact tie.
    pub fn with_tie_break(mut self, bit: bool) -> Result<Self> {
        if self.majority != MajoritySignal::Tie {
            return Err(Error::Precondition("tie break on a realization without a tie".into()));
        }
        self.tie_break = Some(bit);
        Ok(self)
    }

    /// Draws the tie break by fair coin if the realization is tied and unresolved.
    pub fn break_tie<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.majority == MajoritySignal::Tie && self.tie_break.is_none() {
            self.tie_break = Some(rng.random_bool(0.5));
        }
    }

    /// The majority bit agents perceive, after any tie break.
    pub fn effective_majority(&self) -> Result<bool> {
        match (self.majority, self.tie_break) {
            (MajoritySignal::Bit(b), _) => Ok(b),
            (MajoritySignal::Tie, Some(b)) => Ok(b),
            (MajoritySignal::Tie, None) => Err(Error::UnresolvedTie),
        }
    }
}

/// Draws omega by fair coin and each website signal correct with probability `q`.
pub fn sample_realization<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> InterimRealization {
    let omega = rng.random_bool(0.5);
    let signals = (0..params.m)
        .map(|_| if rng.random_bool(params.q) { omega } else { !omega })
        .collect();
    InterimRealization::new(omega, signals).expect("M >= 2 for valid params")
}

/// The first `l` websites carry `omega`, the rest carry its complement.
pub fn fix_realization(omega: bool, l: usize, m: usize) -> Result<InterimRealization> {
    if l > m {
        return Err(Error::CountOutOfRange { l, m });
    }
    InterimRealization::new(omega, (0..m).map(|i| if i < l { omega } else { !omega }).collect())
}

/// An agent's private signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSignals {
    pub x: bool,
    pub z: bool,
}

/// Bit that `z` reports on when correct.
pub fn z_reference(real: &InterimRealization, params: &ModelParams) -> Result<bool> {
    if params.is_sophisticated() {
        Ok(real.omega())
    } else {
        real.effective_majority()
    }
}

pub fn sample_agent_signals<R: Rng + ?Sized>(
    real: &InterimRealization,
    params: &ModelParams,
    rng: &mut R,
) -> Result<AgentSignals> {
    let reference = z_reference(real, params)?;
    let x = if rng.random_bool(params.p) { real.omega() } else { !real.omega() };
    let z = if rng.random_bool(params.z_accuracy()) { reference } else { !reference };
    Ok(AgentSignals { x, z })
}

/// Two agent groups with separate preferences and personalized rankings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub share_a: f64,
    pub lambda: f64,
}

impl GroupConfig {
    pub fn new(gamma_a: f64, gamma_b: f64, lambda: f64) -> Self {
        GroupConfig { gamma_a, gamma_b, share_a: 0.5, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, x) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b), ("lambda", self.lambda)] {
            if !in_closed(x, 0.0, 1.0) {
                errs.push(format!("{name} in [0, 1] (got {x})"));
            }
        }
        if !(self.share_a > 0.0 && self.share_a < 1.0) {
            errs.push(format!("0 < share_a < 1 (got {})", self.share_a));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Limit computations are available only for equal group shares.
    pub fn require_equal_shares(&self) -> Result<()> {
        if (self.share_a - 0.5).abs() > VALIDATION_TOL {
            return Err(Error::Precondition(format!(
                "limit solver requires share_a = 1/2 (got {})",
                self.share_a
            )));
        }
        Ok(())
    }

    pub fn gamma(&self, group: Group) -> f64 {
        match group {
            Group::A => self.gamma_a,
            Group::B => self.gamma_b,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        GroupConfig { lambda, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn strict_validation_examples() {
        let base = ModelParams::default();
        assert!(validate(&base, true).is_ok());
        let low_q = ModelParams { q: 0.6, ..base };
        let v = validate(&low_q, true);
        assert!(v.violations.iter().any(|s| s.starts_with("mu·q > p")));
        let flat = ModelParams { p: 0.5, mu: 0.5, ..base };
        let v = validate(&flat, false);
        assert!(v.is_ok());
        assert!(!v.in_regime());
    }

    #[test]
    fn hard_domain_violations() {
        let bad = ModelParams { gamma: 1.5, m: 1, kappa: 0, alpha: -1.0, ..ModelParams::default() };
        let v = validate(&bad, false);
        assert_eq!(v.violations.len(), 4);
    }

    #[test]
    fn fixed_realizations() {
        let r = fix_realization(true, 0, 3).unwrap();
        assert_eq!(r.signals(), &[false, false, false]);
        assert_eq!(r.majority_signal(), MajoritySignal::Bit(false));
        let r = fix_realization(true, 3, 3).unwrap();
        assert_eq!(r.signals(), &[true, true, true]);
        assert_eq!(r.majority_signal(), MajoritySignal::Bit(true));
        let r = fix_realization(true, 10, 20).unwrap();
        assert_eq!(r.majority_signal(), MajoritySignal::Tie);
        assert_eq!(r.effective_majority(), Err(Error::UnresolvedTie));
        assert!(fix_realization(true, 4, 3).is_err());
    }

    #[test]
    fn majority_matches_omega_iff_correct_majority() {
        for m in 2..=21 {
            for l in 0..=m {
                for omega in [false, true] {
                    let r = fix_realization(omega, l, m).unwrap();
                    assert_eq!(r.num_correct(), l);
                    let maj_correct = r.majority_signal() == MajoritySignal::Bit(omega);
                    assert_eq!(maj_correct, 2 * l > m);
                }
            }
        }
    }

    #[test]
    fn perfect_accuracy_realization() {
        let params = ModelParams { q: 1.0, ..ModelParams::default() };
        let mut rng = seeded(7);
        for _ in 0..50 {
            let r = sample_realization(&params, &mut rng);
            assert_eq!(r.num_correct(), params.m);
            assert_eq!(r.majority_signal(), MajoritySignal::Bit(r.omega()));
        }
    }

    #[test]
    fn realization_is_reproducible() {
        let params = ModelParams::default();
        let a = sample_realization(&params, &mut seeded(11));
        let b = sample_realization(&params, &mut seeded(11));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_correct_count() {
        let params = ModelParams::default();
        let mut rng = seeded(2024);
        let n = 100_000;
        let total: usize = (0..n).map(|_| sample_realization(&params, &mut rng).num_correct()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 14.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn correct_count_is_binomial() {
        // Chi-square goodness of fit, cells with expected count < 5 pooled.
        let params = ModelParams::default();
        let mut rng = seeded(99);
        let n = 100_000;
        let mut counts = vec![0usize; params.m + 1];
        for _ in 0..n {
            counts[sample_realization(&params, &mut rng).num_correct()] += 1;
        }
        let pmf = binomial_pmf(params.m, params.q);
        let (mut chi2, mut cells) = (0.0, 0usize);
        let (mut pool_o, mut pool_e) = (0.0, 0.0);
        for (o, w) in counts.iter().zip(&pmf) {
            let e = w * n as f64;
            if e < 5.0 {
                pool_o += *o as f64;
                pool_e += e;
            } else {
                chi2 += (*o as f64 - e).powi(2) / e;
                cells += 1;
            }
        }
        if pool_e > 0.0 {
            chi2 += (pool_o - pool_e).powi(2) / pool_e;
            cells += 1;
        }
        // 0.99 quantile of chi-square with up to 15 degrees of freedom.
        let dof = cells - 1;
        assert!(dof <= 15);
        assert!(chi2 < 30.58, "chi2 {chi2} with {dof} dof");
    }

    #[test]
    fn agent_signal_frequencies() {
        let params = ModelParams::default();
        let real = fix_realization(true, 15, 20).unwrap();
        let mut rng = seeded(5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_agent_signals(&real, &params, &mut rng).unwrap().x == real.omega())
            .count();
        assert!((hits as f64 / n as f64 - 0.55).abs() < 0.005);
    }

    #[test]
    fn degenerate_agent_signals() {
        let params = ModelParams { p: 1.0, mu: 1.0, ..ModelParams::default() };
        let real = fix_realization(false, 5, 20).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            let s = sample_agent_signals(&real, &params, &mut rng).unwrap();
            assert_eq!(s, AgentSignals { x: false, z: true });
        }
        let soph = ModelParams {
            signal_model: SignalModel::Sophisticated { mu_hat: 1.0 },
            ..ModelParams::default()
        };
        for _ in 0..100 {
            assert!(!sample_agent_signals(&real, &soph, &mut rng).unwrap().z);
        }
    }

    #[test]
    fn tie_requires_break() {
        let params = ModelParams::default();
        let mut real = fix_realization(true, 10, 20).unwrap();
        assert!(sample_agent_signals(&real, &params, &mut seeded(0)).is_err());
        real.break_tie(&mut seeded(0));
        assert!(sample_agent_signals(&real, &params, &mut seeded(0)).is_ok());
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        for (n, q) in [(3, 0.7), (20, 0.9), (21, 0.5), (5, 1.0)] {
            let s: f64 = binomial_pmf(n, q).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let pmf = binomial_pmf(3, 0.7);
        for (a, b) in pmf.iter().zip([0.027, 0.189, 0.441, 0.343]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
