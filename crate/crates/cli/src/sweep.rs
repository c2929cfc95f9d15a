//! Cartesian parameter sweeps from a config file.

use std::path::{Path, PathBuf};

use rankfeedback::dynamics::PersistenceSchedule;
use rankfeedback::io::ParamFile;
use rankfeedback::metrics::{
    belief_polarization, ex_ante_efficiency, interim_efficiency, monte_carlo_interim, net_of_aof, por, per,
    PolarizationRegime,
};
use rankfeedback::{fix_realization, GroupConfig, ModelParams, RankingRegime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::figures::Grid;
use crate::row;
use crate::table::Table;

/// Names a sweep axis may take.
pub const SWEEPABLE: [&str; 11] =
    ["p", "q", "mu", "gamma", "M", "alpha", "kappa", "lambda", "gamma_a", "gamma_b", "mu_hat"];

pub const METRICS: [&str; 7] = ["P", "P_net", "PoR", "PeR", "BP", "P_L", "P_mc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Option<Vec<f64>>,
    pub grid: Option<Grid>,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        match (&self.values, &self.grid) {
            (Some(v), _) => v.clone(),
            (None, Some(g)) => g.points(),
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    #[default]
    Popularity,
    Random,
    Personalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: ParamFile,
    #[serde(default)]
    pub axes: Vec<Axis>,
    pub metrics: Vec<String>,
    #[serde(default)]
    pub regime: RegimeName,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Correct-site count for `P_L` and `BP`.
    pub l: Option<usize>,
    /// Horizon of Monte Carlo metrics.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_reps() -> usize {
    100
}

fn default_horizon() -> usize {
    5000
}

/// Every problem found in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid sweep config:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub label: String,
    pub params: ModelParams,
    pub group: Option<GroupConfig>,
}

fn set(file: &mut ParamFile, name: &str, v: f64) -> Result<(), String> {
    let int = |v: f64| -> Result<usize, String> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(format!("{name} must be a nonnegative integer (got {v})"))
        }
    };
    match name {
        "p" => file.p = Some(v),
        "q" => file.q = Some(v),
        "mu" => file.mu = Some(v),
        "gamma" => file.gamma = Some(v),
        "M" => file.m = Some(int(v)?),
        "alpha" => file.alpha = Some(v),
        "kappa" => file.kappa = Some(int(v)? as u32),
        "lambda" => file.lambda = Some(v),
        "gamma_a" => file.gamma_a = Some(v),
        "gamma_b" => file.gamma_b = Some(v),
        "mu_hat" => {
            file.mu_hat = Some(v);
            file.signal_model = Some("sophisticated".into());
        }
        other => return Err(format!("unknown sweep variable {other:?}")),
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(s).map_err(|e| ConfigErrors(vec![e.to_string()]))
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ConfigErrors(vec![e.to_string()]))
        } else {
            Self::from_toml_str(&text)
        }
    }

    fn needs_group(&self) -> bool {
        self.regime == RegimeName::Personalized || self.metrics.iter().any(|m| m == "PeR" || m == "BP")
    }

    /// Expands the axes into grid points, the first axis outermost, or lists every problem.
    pub fn points(&self) -> Result<Vec<Point>, ConfigErrors> {
        let mut errs = Vec::new();
        if self.metrics.is_empty() {
            errs.push("metrics must not be empty".to_string());
        }
        for m in &self.metrics {
            if !METRICS.contains(&m.as_str()) {
                errs.push(format!("unknown metric {m:?}; known: {}", METRICS.join(", ")));
            }
        }
        if self.reps == 0 {
            errs.push("reps must be at least 1".into());
        }
        if self.horizon == 0 {
            errs.push("horizon must be at least 1".into());
        }
        let needs_l = self.metrics.iter().any(|m| m == "P_L" || m == "BP");
        if needs_l && self.l.is_none() {
            errs.push("metrics P_L and BP need l".into());
        }
        for (i, axis) in self.axes.iter().enumerate() {
            if !SWEEPABLE.contains(&axis.name.as_str()) {
                errs.push(format!("axis {i}: {:?} is not a parameter; sweepable: {}", axis.name, SWEEPABLE.join(", ")));
            }
            if axis.values.is_some() && axis.grid.is_some() {
                errs.push(format!("axis {:?}: give values or grid, not both", axis.name));
            }
            if axis.points().is_empty() {
                errs.push(format!("axis {:?}: empty grid", axis.name));
            }
            if self.axes[..i].iter().any(|a| a.name == axis.name) {
                errs.push(format!("axis {:?} appears twice", axis.name));
            }
        }
        if let Err(e) = self.params.model_params() {
            errs.push(e.to_string());
        }
        if !errs.is_empty() {
            return Err(ConfigErrors(errs));
        }

        let mut combos: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
        for (i, axis) in self.axes.iter().enumerate() {
            combos = combos
                .into_iter()
                .flat_map(|c| axis.points().into_iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((i, v));
                    c
                }))
                .collect();
        }

        let mut points = Vec::with_capacity(combos.len());
        for combo in combos {
            let mut file = self.params.clone();
            let mut label = Vec::new();
            let mut ok = true;
            for &(i, v) in &combo {
                let name = &self.axes[i].name;
                if let Err(e) = set(&mut file, name, v) {
                    errs.push(e);
                    ok = false;
                }
                label.push(format!("{name}={}", fmt_value(v)));
            }
            let label = label.join(";");
            if !ok {
                continue;
            }
            match file.resolve() {
                Ok((params, group)) => {
                    if self.needs_group() && group.is_none() {
                        errs.push("personalized regime, PeR and BP need gamma_a and gamma_b".into());
                    }
                    if let (Some(l), true) = (self.l, needs_l) {
                        if l > params.m {
                            errs.push(format!("{label}: l = {l} exceeds M = {}", params.m));
                        }
                    }
                    points.push(Point { label, params, group });
                }
                Err(e) => errs.push(if label.is_empty() { e.to_string() } else { format!("{label}: {e}") }),
            }
        }
        errs.dedup();
        let mut seen = std::collections::HashSet::new();
        errs.retain(|e| seen.insert(e.clone()));
        if errs.is_empty() {
            Ok(points)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    fn regime_for(&self, pt: &Point) -> RankingRegime {
        match (self.regime, pt.group) {
            (RegimeName::Popularity, _) => RankingRegime::Popularity,
            (RegimeName::Random, _) => RankingRegime::Random,
            (RegimeName::Personalized, Some(g)) => RankingRegime::personalized(g),
            (RegimeName::Personalized, None) => unreachable!("validated"),
        }
    }

    fn metric(&self, name: &str, pt: &Point) -> rankfeedback::Result<(f64, String)> {
        let params = &pt.params;
        let q = params.q;
        let regime = self.regime_for(pt);
        Ok(match name {
            "P" => (ex_ante_efficiency(&interim_efficiency(params, &regime)?, q), regime.tag()),
            "P_net" => (net_of_aof(&interim_efficiency(params, &regime)?, q), regime.tag()),
            "P_L" => (interim_efficiency(params, &regime)?[self.l.unwrap_or(0)], regime.tag()),
            "PoR" => (por(params, q)?, "popularity-random".into()),
            "PeR" => {
                let g = pt.group.expect("validated");
                (per(params, &g, q)?, RankingRegime::personalized(g).tag())
            }
            "BP" => {
                let g = pt.group.expect("validated");
                let real = fix_realization(true, self.l.unwrap_or(0), params.m)?;
                (belief_polarization(params, &g, &real, PolarizationRegime::Limit)?, RankingRegime::personalized(g).tag())
            }
            "P_mc" => {
                let prof = monte_carlo_interim(
                    params,
                    &regime,
                    self.horizon,
                    PersistenceSchedule::Constant(params.kappa as f64),
                    self.reps,
                    self.seed,
                )?;
                (ex_ante_efficiency(&prof, q), format!("{}_mc", regime.tag()))
            }
            _ => unreachable!("validated"),
        })
    }
}

/// Runs the sweep; rows are ordered by grid point, then by metric.
pub fn run_sweep(cfg: &ExperimentConfig) -> anyhow::Result<Table> {
    let points = cfg.points()?;
    let rows = points
        .par_iter()
        .map(|pt| {
            cfg.metrics
                .iter()
                .map(|m| cfg.metric(m, pt).map(|(v, regime)| row![pt.label.as_str(), v, m.as_str(), regime]))
                .collect::<rankfeedback::Result<Vec<_>>>()
                .map_err(|e| anyhow::anyhow!("{}: {e}", pt.label))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut t = Table::new(&["sweep_var", "value", "metric", "regime"]);
    rows.into_iter().flatten().for_each(|r| t.push(r));
    Ok(t)
}
