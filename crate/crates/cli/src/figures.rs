//! Figure reproduction driven by the embedded `data/figures.toml`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rankfeedback::dynamics::{mean_dynamics_recursion, simulate};
use rankfeedback::io::ParamFile;
use rankfeedback::limits::{sophisticated, theta, with_gamma};
use rankfeedback::metrics::{
    aof_amplification, ex_ante_efficiency, interim_efficiency, net_of_aof, params_hash,
};
use rankfeedback::model::binomial_pmf;
use rankfeedback::variants::{merging_sweep, ordinal_interim_profile};
use rankfeedback::{
    fix_realization, Branch, GroupConfig, ModelParams, PersistenceSchedule, Ranking, RankingRegime, Recording,
    SimConfig, ThetaParams,
};
use serde::{Deserialize, Serialize};

use crate::plot;
use crate::row;
use crate::table::Table;

const FIGURES_TOML: &str = include_str!("../data/figures.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Grid {
    /// `n` evenly spaced points including both ends, rounded to 12 decimals.
    pub fn points(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| {
                    let x = self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64;
                    (x * 1e12).round() / 1e12
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    InterimProfile,
    ExAnteByQ,
    ExAnteByGamma,
    PersonalizedByQ,
    SophisticatedProfile,
    ThetaCurves,
    AttentionProfile,
    PersonalizedProfile,
    Amplification,
    OrdinalProfile,
    Merging,
    MinorityPaths,
    RichGetRicher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub title: String,
    pub kind: FigureKind,
    pub params: ParamFile,
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub series: Vec<String>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub mus: Vec<f64>,
    #[serde(default)]
    pub mu_hats: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub ls: Vec<usize>,
    #[serde(default)]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default)]
    pub qs: Vec<f64>,
    #[serde(default)]
    pub regimes: Vec<String>,
    pub grid: Option<Grid>,
    pub horizon: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub j: Option<usize>,
    pub stride: Option<usize>,
}

/// Run-time overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

pub fn catalog() -> Result<BTreeMap<String, FigureSpec>> {
    toml::from_str(FIGURES_TOML).context("embedded figure definitions")
}

pub fn figure_ids() -> Vec<String> {
    const ORDER: [&str; 14] = [
        "fig1", "fig2", "fig3", "fig4", "fig5", "figB1", "figB2", "figB3", "figA1", "figA2", "figA3", "figA4",
        "figA5", "figA6",
    ];
    ORDER.iter().map(|s| s.to_string()).collect()
}

pub fn spec(id: &str) -> Result<FigureSpec> {
    catalog()?.remove(id).ok_or_else(|| anyhow!("unknown figure {id:?}; known: {}", figure_ids().join(", ")))
}

fn need<T: Copy>(x: Option<T>, what: &str) -> Result<T> {
    x.ok_or_else(|| anyhow!("figure definition lacks {what}"))
}

fn grid(spec: &FigureSpec) -> Result<Vec<f64>> {
    Ok(need(spec.grid, "grid")?.points())
}

fn regime(name: &str) -> Result<RankingRegime> {
    match name {
        "popularity" => Ok(RankingRegime::Popularity),
        "random" => Ok(RankingRegime::Random),
        other => bail!("unknown regime {other:?}"),
    }
}

fn group(spec: &FigureSpec) -> Result<GroupConfig> {
    spec.params.group_config()?.ok_or_else(|| anyhow!("figure needs gamma_a and gamma_b"))
}

/// Computes the figure's data table.
pub fn compute(spec: &FigureSpec, ov: Overrides) -> Result<Table> {
    let base = spec.params.model_params()?;
    base.check()?;
    let m = base.m;
    match spec.kind {
        FigureKind::InterimProfile => {
            let mut t = Table::new(&["L", "P_L", "gamma", "regime"]);
            for name in &spec.regimes {
                let reg = regime(name)?;
                for &g in &spec.gammas {
                    for (l, v) in interim_efficiency(&with_gamma(&base, g), &reg)?.into_iter().enumerate() {
                        t.push(row![l, v, g, name.as_str()]);
                    }
                }
            }
            Ok(t)
        }
        FigureKind::ExAnteByQ => {
            let pop = interim_efficiency(&base, &RankingRegime::Popularity)?;
            let rnd = interim_efficiency(&base, &RankingRegime::Random)?;
            let mut t = Table::new(&["q", "value", "metric", "regime"]);
            for q in grid(spec)? {
                t.push(row![q, ex_ante_efficiency(&pop, q), "P", "popularity"]);
                t.push(row![q, net_of_aof(&pop, q), "P_net", "popularity"]);
                t.push(row![q, ex_ante_efficiency(&rnd, q), "P", "random"]);
            }
            Ok(t)
        }
        FigureKind::ExAnteByGamma => {
            let q = base.q;
            let mut t = Table::new(&["gamma", "value", "metric", "regime"]);
            for g in grid(spec)? {
                let params = with_gamma(&base, g);
                let pop = interim_efficiency(&params, &RankingRegime::Popularity)?;
                let rnd = interim_efficiency(&params, &RankingRegime::Random)?;
                t.push(row![g, ex_ante_efficiency(&pop, q), "P", "popularity"]);
                t.push(row![g, net_of_aof(&pop, q), "P_net", "popularity"]);
                t.push(row![g, ex_ante_efficiency(&rnd, q), "P", "random"]);
            }
            Ok(t)
        }
        FigureKind::PersonalizedByQ => {
            let g = group(spec)?;
            let mut profiles = Vec::new();
            for &lambda in &spec.lambdas {
                let reg = RankingRegime::personalized(g.with_lambda(lambda));
                profiles.push((reg.tag(), interim_efficiency(&base, &reg)?));
            }
            let mean_gamma = 0.5 * (g.gamma_a + g.gamma_b);
            let reg = RankingRegime::Random;
            profiles.push((reg.tag(), interim_efficiency(&with_gamma(&base, mean_gamma), &reg)?));
            let mut t = Table::new(&["q", "value", "metric", "regime"]);
            for q in grid(spec)? {
                for (tag, prof) in &profiles {
                    t.push(row![q, ex_ante_efficiency(prof, q), "P", tag.as_str()]);
                    t.push(row![q, net_of_aof(prof, q), "P_net", tag.as_str()]);
                }
            }
            Ok(t)
        }
        FigureKind::SophisticatedProfile => {
            let mut t = Table::new(&["L", "P_L", "gamma", "mu_hat"]);
            for &mu_hat in &spec.mu_hats {
                for &g in &spec.gammas {
                    let params = sophisticated(&with_gamma(&base, g), mu_hat);
                    for (l, v) in interim_efficiency(&params, &RankingRegime::Popularity)?.into_iter().enumerate() {
                        t.push(row![l, v, g, mu_hat]);
                    }
                }
            }
            Ok(t)
        }
        FigureKind::ThetaCurves => {
            let ys = grid(spec)?;
            let mut t = Table::new(&["y", "theta", "L", "alpha"]);
            for &alpha in &spec.alphas {
                for &l in &spec.ls {
                    let tp = ThetaParams::from_params(&ModelParams { alpha, ..base }, l, Branch::Majority);
                    for &y in &ys {
                        t.push(row![y, theta(y, &tp), l, alpha]);
                    }
                }
            }
            Ok(t)
        }
        FigureKind::AttentionProfile => {
            let mut t = Table::new(&["L", "P_L", "alpha", "mu", "pmf"]);
            for (&mu, &q) in spec.mus.iter().zip(&spec.qs) {
                let pmf = binomial_pmf(m, q);
                for &alpha in &spec.alphas {
                    let params = ModelParams { alpha, mu, ..base };
                    for (l, v) in interim_efficiency(&params, &RankingRegime::Popularity)?.into_iter().enumerate() {
                        t.push(row![l, v, alpha, mu, pmf[l]]);
                    }
                }
            }
            Ok(t)
        }
        FigureKind::PersonalizedProfile => {
            let g = group(spec)?;
            let mut t = Table::new(&["L", "P_L", "lambda", "mu", "L_over_M", "pmf"]);
            for (&mu, &q) in spec.mus.iter().zip(&spec.qs) {
                let pmf = binomial_pmf(m, q);
                let params = ModelParams { mu, ..base };
                for &lambda in &spec.lambdas {
                    let reg = RankingRegime::personalized(g.with_lambda(lambda));
                    for (l, v) in interim_efficiency(&params, &reg)?.into_iter().enumerate() {
                        t.push(row![l, v, lambda, mu, l as f64 / m as f64, pmf[l]]);
                    }
                }
            }
            Ok(t)
        }
        FigureKind::Amplification => {
            let mut t = Table::new(&["gamma", "ratio", "from", "to"]);
            for &[from, to] in &spec.pairs {
                for g in grid(spec)? {
                    t.push(row![g, aof_amplification(&with_gamma(&base, g), from, to)?, from, to]);
                }
            }
            Ok(t)
        }
        FigureKind::OrdinalProfile => {
            let beta = need(spec.beta, "beta")?;
            let horizon = need(spec.horizon, "horizon")?;
            let reps = ov.reps.or(spec.reps).unwrap_or(100);
            let seed = ov.seed.or(spec.seed).unwrap_or(0);
            let mut t = Table::new(&["L", "P_L", "gamma", "fixed_point"]);
            for &g in &spec.gammas {
                let params = with_gamma(&base, g);
                let mc = ordinal_interim_profile(&params, horizon, beta, reps, seed)?;
                let fp = interim_efficiency(&params, &RankingRegime::Popularity)?;
                for (l, (v, f)) in mc.into_iter().zip(fp).enumerate() {
                    t.push(row![l, v, g, f]);
                }
            }
            Ok(t)
        }
        FigureKind::Merging => {
            let j = need(spec.j, "j")?;
            let mut t = Table::new(&["L", "M", "P_L", "gamma"]);
            for &g in &spec.gammas {
                for pt in merging_sweep(&with_gamma(&base, g), j, 0..=2 * j)? {
                    t.push(row![pt.l, pt.m, pt.p_l, g]);
                }
            }
            Ok(t)
        }
        FigureKind::MinorityPaths => minority_paths(spec, &base, ov),
        FigureKind::RichGetRicher => {
            let horizon = need(spec.horizon, "horizon")?;
            let l = *spec.ls.first().ok_or_else(|| anyhow!("figure definition lacks ls"))?;
            let real = fix_realization(true, l, m)?;
            let r1 = descending_ranking(m)?;
            let schedule = PersistenceSchedule::Constant(base.kappa as f64);
            let mut t = Table::new(&["site", "cum_click", "alpha", "gamma"]);
            for &g in &spec.gammas {
                for &alpha in &spec.alphas {
                    let params = ModelParams { alpha, gamma: g, ..base };
                    let rec = mean_dynamics_recursion(&params, &real, &r1, horizon, schedule, Recording::All)?;
                    let mut cum = vec![0.0; m];
                    for c in rec.points.iter().filter_map(|p| p.choice.as_ref()) {
                        cum.iter_mut().zip(c.as_slice()).for_each(|(a, x)| *a += x);
                    }
                    for (site, c) in cum.into_iter().enumerate() {
                        t.push(row![site, c / horizon as f64, alpha, g]);
                    }
                }
            }
            Ok(t)
        }
    }
}

/// Initial ranking proportional to scores falling linearly from 0.06 to 0.04.
pub fn descending_ranking(m: usize) -> rankfeedback::Result<Ranking> {
    let scores: Vec<f64> = (0..m).map(|i| 0.06 - 0.02 * i as f64 / (m - 1).max(1) as f64).collect();
    Ranking::from_scores(&scores)
}

fn minority_paths(spec: &FigureSpec, base: &ModelParams, ov: Overrides) -> Result<Table> {
    let m = base.m;
    let horizon = need(spec.horizon, "horizon")?;
    let stride = spec.stride.unwrap_or(1).max(1);
    let seed = ov.seed.or(spec.seed).unwrap_or(0);
    let schedule = PersistenceSchedule::Constant(base.kappa as f64);
    let r1 = Ranking::uniform(m);
    let keep = |step: usize| step == 1 || step % stride == 0;
    let mut t = Table::new(&["step", "mass", "series", "minority", "panel"]);
    let stochastic = spec.ls.get(spec.ls.len() / 2).copied();
    for (panel, correct) in [("correct", true), ("incorrect", false)] {
        for &k in &spec.ls {
            // `k` minority sites carry the correct signal, or the incorrect one.
            let l = if correct { k } else { m - k };
            let real = fix_realization(true, l, m)?;
            let sites: Vec<usize> = (0..m).filter(|&i| real.is_correct(i) == correct).collect();
            let md = mean_dynamics_recursion(base, &real, &r1, horizon, schedule, Recording::Every(stride))?;
            for pt in md.points.iter().filter(|p| keep(p.step)) {
                t.push(row![pt.step, pt.ranking.mass_on(&sites), "mean_dynamics", k, panel]);
            }
            if Some(k) == stochastic {
                let cfg = SimConfig::new(horizon, schedule).with_recording(Recording::Every(stride));
                let run = simulate(base, &real, &r1, &cfg, seed ^ correct as u64)?;
                for pt in run.points.iter().filter(|p| keep(p.step)) {
                    t.push(row![pt.step, pt.ranking.mass_on(&sites), "stochastic", k, panel]);
                }
            }
        }
    }
    Ok(t)
}

/// Metadata written next to the data.
#[derive(Debug, Serialize)]
pub struct FigureMeta<'a> {
    pub id: &'a str,
    pub spec: &'a FigureSpec,
    pub resolved_params: ModelParams,
    pub group: Option<GroupConfig>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub params_hash: String,
}

pub struct FigureOutput {
    pub table: Table,
    pub paths: Vec<PathBuf>,
    pub params_json: String,
}

/// Computes figure `id` and writes `<id>.csv`, `<id>.svg` and `<id>_params.json` into `out_dir`.
pub fn write_figure(id: &str, out_dir: &Path, ov: Overrides) -> Result<FigureOutput> {
    let spec = spec(id)?;
    let table = compute(&spec, ov)?;
    let resolved_params = spec.params.model_params()?;
    let uses_rng = matches!(spec.kind, FigureKind::OrdinalProfile | FigureKind::MinorityPaths);
    let meta = FigureMeta {
        id,
        spec: &spec,
        resolved_params,
        group: spec.params.group_config()?,
        seed: if uses_rng { ov.seed.or(spec.seed) } else { None },
        reps: if spec.kind == FigureKind::OrdinalProfile { ov.reps.or(spec.reps) } else { None },
        params_hash: params_hash(&(&spec, ov.seed, ov.reps)),
    };
    let params_json = serde_json::to_string_pretty(&meta)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{id}.csv"));
    let svg_path = out_dir.join(format!("{id}.svg"));
    let json_path = out_dir.join(format!("{id}_params.json"));
    fs::write(&csv_path, table.to_csv_string()).with_context(|| format!("writing {}", csv_path.display()))?;
    let svg = plot::line_plot(&spec.title, &table, &spec.x, &spec.y, &spec.series)?;
    fs::write(&svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;
    fs::write(&json_path, &params_json).with_context(|| format!("writing {}", json_path.display()))?;
    Ok(FigureOutput { table, paths: vec![csv_path, svg_path, json_path], params_json })
}
