//! Ranking-free values, ranking-weighted choice and expected choice.

use serde::{Deserialize, Serialize};

use crate::dynamics::Ranking;
use crate::error::{Error, Result};
use crate::model::{z_reference, AgentSignals, InterimRealization, ModelParams, SignalModel};

/// Tolerance on the unit sum of probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Per-website values `v*` (or weighted values `v`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Clicking probabilities over websites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution(Vec<f64>);

impl ChoiceDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(ChoiceDistribution(probs))
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        ChoiceDistribution(probs)
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

    /// Total probability on a set of sites.
    pub fn mass_on(&self, sites: &[usize]) -> f64 {
        sites.iter().map(|&i| self.0[i]).sum()
    }
}

pub(crate) fn check_simplex(v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sum - 1.0).abs().le(&SIMPLEX_TOL) || !(min >= 0.0) {
        return Err(Error::NotOnSimplex { sum, min });
    }
    Ok(())
}

fn value_of(x: bool, y: bool, z: bool, gamma: f64, class: usize) -> f64 {
    let n = class as f64;
    match (x == y, y == z) {
        (true, true) => 1.0 / n,
        (true, false) => gamma / n,
        (false, true) => (1.0 - gamma) / n,
        (false, false) => 0.0,
    }
}

pub(crate) fn ranking_free_values_into(
    signals: AgentSignals,
    real: &InterimRealization,
    gamma: f64,
    out: &mut [f64],
) {
    let n_true = real.class_size(true);
    let n_false = real.class_size(false);
    for (o, &y) in out.iter_mut().zip(real.signals()) {
        let class = if y { n_true } else { n_false };
        *o = value_of(signals.x, y, signals.z, gamma, class);
    }
}

/// Values of selecting each website before ranking is taken into account.
pub fn ranking_free_values(signals: AgentSignals, real: &InterimRealization, gamma: f64) -> ValueVector {
    let mut out = vec![0.0; real.num_sites()];
    ranking_free_values_into(signals, real, gamma, &mut out);
    ValueVector(out)
}

/// Replaces an all-zero value vector by `1/[m]` on sites matching `x` or `z`.
///
/// Returns whether the fallback fired.
pub(crate) fn apply_edge_fallback(signals: AgentSignals, real: &InterimRealization, values: &mut [f64]) -> bool {
    if values.iter().any(|&v| v > 0.0) {
        return false;
    }
    let mut any = false;
    for (v, &y) in values.iter_mut().zip(real.signals()) {
        if y == signals.x || y == signals.z {
            *v = 1.0 / real.class_size(y) as f64;
            any = true;
        }
    }
    if !any {
        values.fill(1.0 / real.num_sites() as f64);
    }
    true
}

/// Ranking-free values with the all-zero fallback; the flag reports `edge_fallback`.
pub fn ranking_free_values_with_fallback(
    signals: AgentSignals,
    real: &InterimRealization,
    gamma: f64,
) -> (ValueVector, bool) {
    let mut out = vec![0.0; real.num_sites()];
    ranking_free_values_into(signals, real, gamma, &mut out);
    let fired = apply_edge_fallback(signals, real, &mut out);
    (ValueVector(out), fired)
}

/// Attention weights `r^alpha`, with `0^0 = 1`.
pub(crate) fn attention_weights_into(ranking: &[f64], alpha: f64, out: &mut [f64]) {
    if alpha == 0.0 {
        out.fill(1.0);
    } else if alpha == 1.0 {
        out.copy_from_slice(ranking);
    } else {
        for (o, &r) in out.iter_mut().zip(ranking) {
            *o = r.powf(alpha);
        }
    }
}

pub(crate) fn normalized_product_into(weights: &[f64], values: &[f64], out: &mut [f64]) -> Result<()> {
    let mut total = 0.0;
    for ((o, &w), &v) in out.iter_mut().zip(weights).zip(values) {
        *o = w * v;
        total += *o;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}

/// `rho_m = r_m^alpha v*_m / sum r^alpha v*`.
pub fn weighted_choice(ranking: &Ranking, vstar: &ValueVector, alpha: f64) -> Result<ChoiceDistribution> {
    let m = ranking.len();
    if vstar.0.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: vstar.0.len() });
    }
    let mut w = vec![0.0; m];
    attention_weights_into(ranking.as_slice(), alpha, &mut w);
    let mut out = vec![0.0; m];
    normalized_product_into(&w, vstar.as_slice(), &mut out)?;
    Ok(ChoiceDistribution(out))
}

/// As [`weighted_choice`] for unnormalized nonnegative scores.
pub fn weighted_choice_scores(scores: &[f64], vstar: &ValueVector, alpha: f64) -> Result<ChoiceDistribution> {
    if vstar.0.len() != scores.len() {
        return Err(Error::LengthMismatch { expected: scores.len(), got: vstar.0.len() });
    }
    let mut w = vec![0.0; scores.len()];
    attention_weights_into(scores, alpha, &mut w);
    let mut out = vec![0.0; scores.len()];
    normalized_product_into(&w, vstar.as_slice(), &mut out)?;
    Ok(ChoiceDistribution(out))
}

/// Expected ranking-free values for the four signal cells.
///
/// Cell `ij` has `x = omega` when `i = 0` and `z` equal to its reference bit
/// (the majority signal, or omega in sophisticated mode) when `j = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedValueTable {
    pub cells: [Vec<f64>; 4],
}

impl ExpectedValueTable {
    pub fn v00(&self) -> &[f64] {
        &self.cells[0]
    }
    pub fn v01(&self) -> &[f64] {
        &self.cells[1]
    }
    pub fn v10(&self) -> &[f64] {
        &self.cells[2]
    }
    pub fn v11(&self) -> &[f64] {
        &self.cells[3]
    }

    pub fn num_sites(&self) -> usize {
        self.cells[0].len()
    }

    /// Row `(v00, v01, v10, v11)` of one website.
    pub fn row(&self, site: usize) -> [f64; 4] {
        [self.cells[0][site], self.cells[1][site], self.cells[2][site], self.cells[3][site]]
    }
}

/// Builds the table from the per-site value rule applied to each signal cell.
///
/// With a single signal class (`L` in `{0, M}`) every cell is `1/M`.
pub fn expected_value_table(
    real: &InterimRealization,
    gamma: f64,
    signal_model: SignalModel,
) -> Result<ExpectedValueTable> {
    let m = real.num_sites();
    let probe = ModelParams { m, signal_model, ..ModelParams::default() };
    let reference = z_reference(real, &probe)?;
    let l = real.num_correct();
    if l == 0 || l == m {
        let flat = vec![1.0 / m as f64; m];
        return Ok(ExpectedValueTable { cells: [flat.clone(), flat.clone(), flat.clone(), flat] });
    }
    let omega = real.omega();
    let mk = |x: bool, z: bool| ranking_free_values(AgentSignals { x, z }, real, gamma).0;
    Ok(ExpectedValueTable {
        cells: [
            mk(omega, reference),
            mk(omega, !reference),
            mk(!omega, reference),
            mk(!omega, !reference),
        ],
    })
}

/// Probabilities of the four signal cells.
pub fn cell_weights(params: &ModelParams) -> [f64; 4] {
    let p = params.p;
    let mu = params.z_accuracy();
    [p * mu, p * (1.0 - mu), (1.0 - p) * mu, (1.0 - p) * (1.0 - mu)]
}

pub(crate) fn expected_choice_into(
    weights: &[f64],
    table: &ExpectedValueTable,
    coeffs: [f64; 4],
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    out.fill(0.0);
    for (cell, &c) in table.cells.iter().zip(&coeffs) {
        if c == 0.0 {
            continue;
        }
        normalized_product_into(weights, cell, scratch)?;
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += c * s;
        }
    }
    Ok(())
}

/// Signal-marginalized clicking probabilities at a given ranking.
pub fn expected_choice(
    ranking: &Ranking,
    table: &ExpectedValueTable,
    params: &ModelParams,
) -> Result<ChoiceDistribution> {
    let m = ranking.len();
    if table.num_sites() != m {
        return Err(Error::LengthMismatch { expected: m, got: table.num_sites() });
    }
    let mut w = vec![0.0; m];
    attention_weights_into(ranking.as_slice(), params.alpha, &mut w);
    let mut scratch = vec![0.0; m];
    let mut out = vec![0.0; m];
    expected_choice_into(&w, table, cell_weights(params), &mut scratch, &mut out)?;
    Ok(ChoiceDistribution(out))
}
