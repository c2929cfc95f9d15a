//! Limit clicking probabilities from the scalar fixed-point equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupConfig, InterimRealization, ModelParams, SignalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The class carries the minority signal among websites.
    Minority,
    /// The class carries the majority signal.
    Majority,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Minority => "minority",
            Branch::Majority => "majority",
        }
    }
}

/// Inputs of the scalar map for the class of `l` same-signal websites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub l: usize,
    pub m: usize,
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub p: f64,
    pub branch: Branch,
}

impl ThetaParams {
    /// Reads `p, mu, gamma, alpha, M` from `params`; `mu` becomes `mu_hat` in sophisticated mode.
    pub fn from_params(params: &ModelParams, l: usize, branch: Branch) -> Self {
        ThetaParams {
            l,
            m: params.m,
            alpha: params.alpha,
            mu: params.z_accuracy(),
            gamma: params.gamma,
            p: params.p,
            branch,
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        ThetaParams { gamma, ..self }
    }

    pub fn default_x0(&self) -> f64 {
        self.l as f64 / self.m as f64
    }
}

/// `w1 A / (w1 A + w2 B)`, extended continuously from the interior at 0/0.
fn share(w1: f64, a: f64, w2: f64, b: f64) -> f64 {
    let num = w1 * a;
    let den = num + w2 * b;
    if den > 0.0 {
        num / den
    } else if w1 == 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Clicking mass on the class as a function of its ranking mass `x`.
pub fn theta(x: f64, tp: &ThetaParams) -> f64 {
    let ThetaParams { l, m, alpha, mu, gamma, p, branch } = *tp;
    if l == 0 {
        return 0.0;
    }
    if l >= m {
        return 1.0;
    }
    let a = (x / l as f64).powf(alpha);
    let b = ((1.0 - x) / (m - l) as f64).powf(alpha);
    let like = share(gamma, a, 1.0 - gamma, b);
    let unlike = share(1.0 - gamma, a, gamma, b);
    match branch {
        Branch::Minority => p * (1.0 - mu) + p * mu * like + (1.0 - p) * (1.0 - mu) * unlike,
        Branch::Majority => p * mu + p * (1.0 - mu) * like + (1.0 - p) * mu * unlike,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub x: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub stable_root: f64,
    pub all_roots: Vec<Root>,
    pub selected_from: f64,
    pub residual: f64,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Number of scan intervals on `[0, 1]`.
    pub grid: usize,
    /// Values of `|theta(x) - x|` at or below this count as exact zeros at grid points.
    pub zero_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { grid: 10_000, zero_tol: 1e-13 }
    }
}

fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, h_lo: f64) -> f64 {
    let lo_positive = h_lo > 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return mid;
        }
        if (hm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (h(lo).abs(), h(hi).abs());
    if a <= b {
        lo
    } else {
        hi
    }
}

/// Uniform grid plus half-decade probes within one grid step of either end,
/// where roots of concave attention maps crowd against the boundary.
fn scan_points(n: usize) -> Vec<f64> {
    let step = 1.0 / n as f64;
    let mut xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut d = step / 10f64.sqrt();
    while d > 1e-15 {
        xs.push(d);
        xs.push(1.0 - d);
        d /= 10f64.sqrt();
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// All roots of `theta(x) - x` on `[0, 1]` with their stability.
pub fn find_roots(tp: &ThetaParams, opts: SolverOptions) -> Vec<Root> {
    let h = |x: f64| theta(x, tp) - x;
    let xs = scan_points(opts.grid.max(2));
    let n = xs.len() - 1;
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let zero = |v: f64| v.abs() <= opts.zero_tol;
    let sign = |v: f64| if zero(v) { 0 } else if v > 0.0 { 1 } else { -1 };
    let mut roots = Vec::new();

    let mut i = 0;
    while i <= n {
        if sign(hs[i]) == 0 {
            // A run of grid zeros counts as one root at its midpoint.
            let start = i;
            while i < n && sign(hs[i + 1]) == 0 {
                i += 1;
            }
            let left = (0..start).rev().map(|j| sign(hs[j])).find(|&s| s != 0);
            let right = (i + 1..=n).map(|j| sign(hs[j])).find(|&s| s != 0);
            let stability = match (left, right) {
                (Some(1), Some(-1)) | (None, Some(-1)) | (Some(1), None) => Stability::Stable,
                (Some(-1), Some(1)) | (None, Some(1)) | (Some(-1), None) => Stability::Unstable,
                _ => Stability::Marginal,
            };
            let x = match (start, i) {
                (0, _) => 0.0,
                (_, j) if j == n => 1.0,
                _ => 0.5 * (xs[start] + xs[i]),
            };
            roots.push(Root { x, stability });
        } else if i < n && sign(hs[i + 1]) != 0 && sign(hs[i]) != sign(hs[i + 1]) {
            let x = bisect(h, xs[i], xs[i + 1], hs[i]);
            let stability = if hs[i] > 0.0 { Stability::Stable } else { Stability::Unstable };
            roots.push(Root { x, stability });
        }
        i += 1;
    }
    roots
}

/// Stable limit reached from ranking mass `x0` under the flow `x' = theta(x) - x`.
pub fn solve_limit(tp: &ThetaParams, x0: f64) -> Result<LimitResult> {
    solve_limit_with(tp, x0, SolverOptions::default())
}

pub fn solve_limit_with(tp: &ThetaParams, x0: f64, opts: SolverOptions) -> Result<LimitResult> {
    if tp.l == 0 || tp.l >= tp.m {
        let x = if tp.l == 0 { 0.0 } else { 1.0 };
        return Ok(LimitResult {
            stable_root: x,
            all_roots: vec![Root { x, stability: Stability::Stable }],
            selected_from: x0,
            residual: 0.0,
            diagnostics: vec!["degenerate class".into()],
        });
    }
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Precondition(format!("x0 must lie in [0, 1] (got {x0})")));
    }
    let roots = find_roots(tp, opts);
    if roots.is_empty() {
        return Err(Error::NoRoot);
    }
    let mut diagnostics = Vec::new();
    for r in roots.iter().filter(|r| r.stability == Stability::Marginal) {
        diagnostics.push(format!("tangency at x = {:.12}, excluded from selection", r.x));
    }
    let hx0 = theta(x0, tp) - x0;
    let at_start = roots.iter().find(|r| (r.x - x0).abs() <= 1e-12);
    let selected = if let Some(r) = at_start.filter(|_| hx0.abs() <= opts.zero_tol) {
        if r.stability != Stability::Stable {
            return Err(Error::AmbiguousStart { x0 });
        }
        *r
    } else if hx0 > 0.0 {
        *roots
            .iter()
            .find(|r| r.x > x0 && r.stability == Stability::Stable)
            .ok_or(Error::NoRoot)?
    } else {
        *roots
            .iter()
            .rev()
            .find(|r| r.x < x0 && r.stability == Stability::Stable)
            .ok_or(Error::NoRoot)?
    };
    let residual = (theta(selected.x, tp) - selected.x).abs();
    Ok(LimitResult { stable_root: selected.x, all_roots: roots, selected_from: x0, residual, diagnostics })
}

/// Limit under random ranking (no attention to ranking).
pub fn alpha_zero_limit(branch: Branch, p: f64, mu: f64, gamma: f64) -> f64 {
    match branch {
        Branch::Minority => (1.0 - mu) * (1.0 - gamma) + gamma * p,
        Branch::Majority => mu * (1.0 - gamma) + gamma * p,
    }
}

fn branch_of(params: &ModelParams, l: usize) -> Vec<Branch> {
    if params.is_sophisticated() {
        return vec![Branch::Majority];
    }
    match (2 * l).cmp(&params.m) {
        std::cmp::Ordering::Less => vec![Branch::Minority],
        std::cmp::Ordering::Greater => vec![Branch::Majority],
        std::cmp::Ordering::Equal => vec![Branch::Minority, Branch::Majority],
    }
}

/// Limit clicking mass on the correct class for `l` correct websites.
///
/// Sophisticated agents always use the majority form with `mu_hat`; an exact
/// tie averages both branches.
pub fn class_limit(params: &ModelParams, l: usize) -> Result<f64> {
    class_limit_with(params, l, |tp| Ok(solve_limit(&tp, tp.default_x0())?.stable_root))
}

/// As [`class_limit`] under random ranking.
pub fn random_class_limit(params: &ModelParams, l: usize) -> Result<f64> {
    class_limit_with(params, l, |tp| Ok(alpha_zero_limit(tp.branch, tp.p, tp.mu, tp.gamma)))
}

fn class_limit_with(params: &ModelParams, l: usize, solve: impl Fn(ThetaParams) -> Result<f64>) -> Result<f64> {
    if l > params.m {
        return Err(Error::CountOutOfRange { l, m: params.m });
    }
    if l == 0 {
        return Ok(0.0);
    }
    if l == params.m {
        return Ok(1.0);
    }
    let branches = branch_of(params, l);
    let mut total = 0.0;
    for b in &branches {
        total += solve(ThetaParams::from_params(params, l, *b))?;
    }
    Ok(total / branches.len() as f64)
}

/// Piecewise closed form at `mu = 1`, `alpha = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub value: f64,
    /// The published expression, kept for comparison.
    pub as_printed: f64,
    pub solver: f64,
    /// `|as_printed - solver|` when it exceeds `1e-9`.
    pub discrepancy: Option<f64>,
}

pub fn closed_form_mu1_alpha1(tp: &ThetaParams) -> Result<ClosedForm> {
    if tp.mu != 1.0 || tp.alpha != 1.0 {
        return Err(Error::Precondition(format!(
            "closed form needs mu = 1 and alpha = 1 (got {}, {})",
            tp.mu, tp.alpha
        )));
    }
    let (l, m, g, p) = (tp.l as f64, tp.m as f64, tp.gamma, tp.p);
    let (value, as_printed) = match tp.branch {
        Branch::Majority => {
            let v = if l <= (1.0 - g) * m / (1.0 - g * p) { 1.0 } else { g * p * l / (l - (1.0 - g) * m) };
            (v, v)
        }
        Branch::Minority => {
            let derived = if l < g * p * m / (1.0 - g * (1.0 - p)) {
                (g * p * (m - l) - (1.0 - g) * l) / (g * m - l)
            } else {
                0.0
            };
            let printed = if l < g * p * m / (1.0 - (1.0 - g) * p) {
                ((1.0 - g) * l - g * p * (m - l)) / (g * m - l)
            } else {
                0.0
            };
            (derived, printed)
        }
    };
    let solver = solve_limit(tp, tp.default_x0())?.stable_root;
    let gap = (as_printed - solver).abs();
    Ok(ClosedForm { value, as_printed, solver, discrepancy: (gap > 1e-9).then_some(gap) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FakeNews {
    pub visit_probability: f64,
    /// The incorrect site carries more ranking mass than each correct site.
    pub top_ranked: bool,
}

/// Limit for a single incorrect site among `m` when `mu = 1`, `alpha = 1`.
pub fn fake_news_limit(m: usize, p: f64, gamma: f64) -> Result<FakeNews> {
    let mf = m as f64;
    let threshold = 1.0 / (p + (1.0 - p) * mf);
    if m < 2 || !(gamma > threshold && gamma <= 1.0) || !(p > 0.0 && p < 1.0) {
        return Err(Error::OutsideValidity(format!(
            "interior limit needs gamma > 1/(p + (1-p)M) = {threshold:.6} (got gamma {gamma}, M {m}, p {p})"
        )));
    }
    let visit_probability = 1.0 - gamma * p * (mf - 1.0) / (gamma * mf - 1.0);
    let top_ranked = gamma * mf * (1.0 - p) - 1.0 > 1e-12;
    Ok(FakeNews { visit_probability, top_ranked })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonalizedMethod {
    /// Solves the coupled two-group system.
    #[default]
    Coupled,
    /// Treats each group as a single group with an averaged preference weight.
    EffectiveGamma,
}

/// Limit of one group in the personalized system, on the correct class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLimit {
    pub ranking_mass: f64,
    pub click_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedLimit {
    pub a: GroupLimit,
    pub b: GroupLimit,
    pub method: PersonalizedMethod,
    /// Max-norm residual of the coupled equations at the returned masses.
    pub residual: f64,
    pub effective_gamma: (f64, f64),
}

impl PersonalizedLimit {
    /// Equal-share average of the groups' clicking masses.
    pub fn mean_click(&self) -> f64 {
        0.5 * (self.a.click_mass + self.b.click_mass)
    }

    /// Gap between the groups' clicking masses on any one class.
    pub fn click_gap(&self) -> f64 {
        (self.a.click_mass - self.b.click_mass).abs()
    }
}

/// `gamma_A / (2 - lambda) + (1 - lambda) gamma_B / (2 - lambda)` and its mirror.
pub fn effective_gammas(group: &GroupConfig) -> (f64, f64) {
    let l = group.lambda;
    (
        (group.gamma_a + (1.0 - l) * group.gamma_b) / (2.0 - l),
        (group.gamma_b + (1.0 - l) * group.gamma_a) / (2.0 - l),
    )
}

fn coupled_residual(tp_a: &ThetaParams, tp_b: &ThetaParams, lambda: f64, x: [f64; 2]) -> [f64; 2] {
    let ta = theta(x[0], tp_a);
    let tb = theta(x[1], tp_b);
    let cross = 1.0 - lambda;
    [(ta + cross * tb) / (2.0 - lambda) - x[0], (tb + cross * ta) / (2.0 - lambda) - x[1]]
}

fn solve_coupled(tp_a: &ThetaParams, tp_b: &ThetaParams, lambda: f64, x0: f64) -> Result<[f64; 2]> {
    let f = |x: [f64; 2]| coupled_residual(tp_a, tp_b, lambda, x);
    let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let mut x = [x0, x0];
    let h = 0.05;
    let max_steps = 2_000_000;
    let mut steps = 0;
    while norm(f(x)) > 1e-13 && steps < max_steps {
        let k1 = f(x);
        let k2 = f([clamp(x[0] + 0.5 * h * k1[0]), clamp(x[1] + 0.5 * h * k1[1])]);
        let k3 = f([clamp(x[0] + 0.5 * h * k2[0]), clamp(x[1] + 0.5 * h * k2[1])]);
        let k4 = f([clamp(x[0] + h * k3[0]), clamp(x[1] + h * k3[1])]);
        for i in 0..2 {
            x[i] = clamp(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        steps += 1;
    }
    // Newton polish on interior points.
    for _ in 0..8 {
        let r = f(x);
        if norm(r) < 1e-15 || x.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            break;
        }
        let d = 1e-7;
        let fa = f([x[0] + d, x[1]]);
        let fb = f([x[0], x[1] + d]);
        let j = [[(fa[0] - r[0]) / d, (fb[0] - r[0]) / d], [(fa[1] - r[1]) / d, (fb[1] - r[1]) / d]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            break;
        }
        let dx0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dx1 = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
        let cand = [clamp(x[0] - dx0), clamp(x[1] - dx1)];
        if norm(f(cand)) < norm(r) {
            x = cand;
        } else {
            break;
        }
    }
    let residual = norm(f(x));
    if residual >= 1e-9 {
        return Err(Error::NonConvergence { steps, residual });
    }
    Ok(x)
}

fn personalized_branch(
    params: &ModelParams,
    group: &GroupConfig,
    l: usize,
    branch: Branch,
    method: PersonalizedMethod,
) -> Result<PersonalizedLimit> {
    let base = ThetaParams::from_params(params, l, branch);
    let tp_a = base.with_gamma(group.gamma_a);
    let tp_b = base.with_gamma(group.gamma_b);
    let eff = effective_gammas(group);
    let x = match method {
        PersonalizedMethod::Coupled => solve_coupled(&tp_a, &tp_b, group.lambda, base.default_x0())?,
        PersonalizedMethod::EffectiveGamma => [
            solve_limit(&base.with_gamma(eff.0), base.default_x0())?.stable_root,
            solve_limit(&base.with_gamma(eff.1), base.default_x0())?.stable_root,
        ],
    };
    let r = coupled_residual(&tp_a, &tp_b, group.lambda, x);
    // Under the reduction each group clicks as if its weight were the effective one.
    let (click_a, click_b) = match method {
        PersonalizedMethod::Coupled => (theta(x[0], &tp_a), theta(x[1], &tp_b)),
        PersonalizedMethod::EffectiveGamma => (x[0], x[1]),
    };
    Ok(PersonalizedLimit {
        a: GroupLimit { ranking_mass: x[0], click_mass: click_a },
        b: GroupLimit { ranking_mass: x[1], click_mass: click_b },
        method,
        residual: r[0].abs().max(r[1].abs()),
        effective_gamma: eff,
    })
}

fn average(parts: &[PersonalizedLimit]) -> PersonalizedLimit {
    let n = parts.len() as f64;
    let avg = |f: &dyn Fn(&PersonalizedLimit) -> f64| parts.iter().map(f).sum::<f64>() / n;
    PersonalizedLimit {
        a: GroupLimit { ranking_mass: avg(&|p| p.a.ranking_mass), click_mass: avg(&|p| p.a.click_mass) },
        b: GroupLimit { ranking_mass: avg(&|p| p.b.ranking_mass), click_mass: avg(&|p| p.b.click_mass) },
        method: parts[0].method,
        residual: parts.iter().map(|p| p.residual).fold(0.0, f64::max),
        effective_gamma: parts[0].effective_gamma,
    }
}

/// Limits of both groups on the correct class for `l` correct websites.
pub fn personalized_class_limit(
    params: &ModelParams,
    group: &GroupConfig,
    l: usize,
    method: PersonalizedMethod,
) -> Result<PersonalizedLimit> {
    group.validate()?;
    group.require_equal_shares()?;
    if l > params.m {
        return Err(Error::CountOutOfRange { l, m: params.m });
    }
    if l == 0 || l == params.m {
        let v = if l == 0 { 0.0 } else { 1.0 };
        let g = GroupLimit { ranking_mass: v, click_mass: v };
        return Ok(PersonalizedLimit { a: g, b: g, method, residual: 0.0, effective_gamma: effective_gammas(group) });
    }
    let parts = branch_of(params, l)
        .into_iter()
        .map(|b| personalized_branch(params, group, l, b, method))
        .collect::<Result<Vec<_>>>()?;
    Ok(average(&parts))
}

/// Personalized limit on a realization, solved as the coupled system.
pub fn solve_personalized_limit(
    params: &ModelParams,
    group: &GroupConfig,
    real: &InterimRealization,
) -> Result<PersonalizedLimit> {
    personalized_class_limit(params, group, real.num_correct(), PersonalizedMethod::Coupled)
}

/// Single-group parameters with a different preference weight.
pub fn with_gamma(params: &ModelParams, gamma: f64) -> ModelParams {
    ModelParams { gamma, ..*params }
}

/// Majority-form parameters for sophisticated agents.
pub fn sophisticated(params: &ModelParams, mu_hat: f64) -> ModelParams {
    ModelParams { signal_model: SignalModel::Sophisticated { mu_hat }, ..*params }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(l: usize, branch: Branch) -> ThetaParams {
        ThetaParams { l, m: 20, alpha: 1.0, mu: 0.9, gamma: 0.33, p: 0.55, branch }
    }

    #[test]
    fn boundary_values() {
        let (p, mu) = (0.55, 0.9);
        let t = tp(5, Branch::Minority);
        assert!((theta(0.0, &t) - p * (1.0 - mu)).abs() < 1e-15);
        assert!((theta(1.0, &t) - (p + (1.0 - p) * (1.0 - mu))).abs() < 1e-15);
        let t = tp(15, Branch::Majority);
        assert!((theta(0.0, &t) - p * mu).abs() < 1e-15);
        assert!((theta(1.0, &t) - (p + (1.0 - p) * mu)).abs() < 1e-15);
    }

    #[test]
    fn root_hugging_the_boundary() {
        // Concave attention keeps a sliver of mass off the class; x = 1 itself is unstable.
        let params = ModelParams { p: 0.6, mu: 1.0, gamma: 0.1, alpha: 0.7, m: 12, ..ModelParams::default() };
        let tp = ThetaParams::from_params(&params, 7, Branch::Majority);
        let lim = solve_limit(&tp, tp.default_x0()).unwrap();
        let gap = 1.0 - lim.stable_root;
        assert!(gap > 1e-5 && gap < 1e-4, "{gap}");
        assert!(lim.residual < 1e-12);
        let end = lim.all_roots.last().unwrap();
        assert_eq!((end.x, end.stability), (1.0, Stability::Unstable));
    }

    #[test]
    fn fake_news_fixed_point() {
        let t = ThetaParams { l: 19, m: 20, alpha: 1.0, mu: 1.0, gamma: 0.5, p: 0.55, branch: Branch::Majority };
        let y = 0.5 * 0.55 * 19.0 / 9.0;
        assert!((theta(y, &t) - y).abs() < 1e-14);
        let res = solve_limit(&t, t.default_x0()).unwrap();
        assert!((res.stable_root - y).abs() < 1e-10);
        assert!(res.residual < 1e-10);
    }

    #[test]
    fn minority_root_hand_derivation() {
        let t = ThetaParams { l: 3, m: 20, alpha: 1.0, mu: 1.0, gamma: 0.33, p: 0.55, branch: Branch::Minority };
        let res = solve_limit(&t, 0.15).unwrap();
        assert!((res.stable_root - 1.0755 / 3.6).abs() < 1e-10, "{}", res.stable_root);
    }

    #[test]
    fn degenerate_bypass() {
        assert_eq!(solve_limit(&tp(0, Branch::Minority), 0.5).unwrap().stable_root, 0.0);
        assert_eq!(solve_limit(&tp(20, Branch::Majority), 0.5).unwrap().stable_root, 1.0);
    }

    #[test]
    fn alpha_zero_branches() {
        for (l, branch, want) in [(5, Branch::Minority, 0.2485), (15, Branch::Majority, 0.7845)] {
            let t = ThetaParams { alpha: 0.0, ..tp(l, branch) };
            let got = solve_limit(&t, t.default_x0()).unwrap().stable_root;
            assert!((got - want).abs() < 1e-12);
            assert!((alpha_zero_limit(branch, 0.55, 0.9, 0.33) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms() {
        let maj = ThetaParams { l: 19, m: 20, alpha: 1.0, mu: 1.0, gamma: 0.5, p: 0.55, branch: Branch::Majority };
        let cf = closed_form_mu1_alpha1(&maj).unwrap();
        assert!((cf.value - 0.580_555_555_555_6).abs() < 1e-12);
        assert!(cf.discrepancy.is_none());
        let cutoff: f64 = (1.0 - 0.33) * 20.0 / (1.0 - 0.33 * 0.55);
        assert!((cutoff - 16.371_411).abs() < 1e-6);
        let maj11 = ThetaParams { l: 11, gamma: 0.33, ..maj };
        let cf = closed_form_mu1_alpha1(&maj11).unwrap();
        assert_eq!(cf.value, 1.0);
        assert!((cf.solver - 1.0).abs() < 1e-10);
        let min5 = ThetaParams { l: 5, gamma: 0.33, branch: Branch::Minority, ..maj };
        let cf = closed_form_mu1_alpha1(&min5).unwrap();
        assert_eq!(cf.value, 0.0);
        assert!(cf.solver.abs() < 1e-10);
        let min3 = ThetaParams { l: 3, ..min5 };
        let cf = closed_form_mu1_alpha1(&min3).unwrap();
        assert!((cf.value - cf.solver).abs() < 1e-9);
        assert!(cf.discrepancy.is_some());
        assert!(closed_form_mu1_alpha1(&tp(3, Branch::Minority)).is_err());
    }

    #[test]
    fn fake_news_examples() {
        let f = fake_news_limit(20, 0.55, 0.5).unwrap();
        assert!((f.visit_probability - 0.419_444_444_4).abs() < 1e-9);
        assert!(f.top_ranked);
        let edge = fake_news_limit(20, 0.55, 1.0 / (20.0 * 0.45)).unwrap();
        assert!(!edge.top_ranked);
        let one = fake_news_limit(20, 0.55, 1.0).unwrap();
        assert!((one.visit_probability - 0.45).abs() < 1e-12);
        assert!(fake_news_limit(20, 0.55, 0.05).is_err());
    }

    #[test]
    fn multiple_roots_for_strong_attention() {
        let t = ThetaParams { alpha: 4.0, ..tp(15, Branch::Majority) };
        let roots = find_roots(&t, SolverOptions::default());
        assert!(roots.len() >= 3, "{roots:?}");
        for r in &roots {
            assert!((theta(r.x, &t) - r.x).abs() < 1e-10);
        }
        let low = solve_limit(&t, 0.01).unwrap().stable_root;
        let high = solve_limit(&t, 0.99).unwrap().stable_root;
        assert!(high > low);
    }

    #[test]
    fn personalized_extremes() {
        let params = ModelParams::default();
        let l = 15;
        let g0 = GroupConfig::new(0.0, 0.66, 0.0);
        let pl = personalized_class_limit(&params, &g0, l, PersonalizedMethod::Coupled).unwrap();
        assert!((pl.a.ranking_mass - pl.b.ranking_mass).abs() < 1e-12);
        assert!((pl.mean_click() - pl.a.ranking_mass).abs() < 1e-9);
        assert!(pl.residual < 1e-9);
        let g1 = g0.with_lambda(1.0);
        let pl = personalized_class_limit(&params, &g1, l, PersonalizedMethod::Coupled).unwrap();
        assert!((pl.a.ranking_mass - class_limit(&with_gamma(&params, 0.0), l).unwrap()).abs() < 1e-9);
        assert!((pl.b.ranking_mass - class_limit(&with_gamma(&params, 0.66), l).unwrap()).abs() < 1e-9);
        let same = GroupConfig::new(0.33, 0.33, 0.5);
        let pl = personalized_class_limit(&params, &same, l, PersonalizedMethod::Coupled).unwrap();
        assert!((pl.a.ranking_mass - class_limit(&params, l).unwrap()).abs() < 1e-9);
        assert!(personalized_class_limit(&params, &GroupConfig { share_a: 0.3, ..same }, l, PersonalizedMethod::Coupled)
            .is_err());
    }

    #[test]
    fn effective_gamma_exact_without_attention() {
        let params = ModelParams { alpha: 0.0, ..ModelParams::default() };
        for lambda in [0.0, 0.4, 1.0] {
            let g = GroupConfig::new(0.0, 0.66, lambda);
            let c = personalized_class_limit(&params, &g, 6, PersonalizedMethod::Coupled).unwrap();
            let e = personalized_class_limit(&params, &g, 6, PersonalizedMethod::EffectiveGamma).unwrap();
            assert!((c.a.ranking_mass - e.a.ranking_mass).abs() < 1e-9);
            assert!((c.b.ranking_mass - e.b.ranking_mass).abs() < 1e-9);
            assert!(e.residual < 1e-9);
        }
    }
}
