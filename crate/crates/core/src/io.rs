//! Config files and CSV exports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::ExpectedValueTable;
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::limits::{find_roots, Branch, SolverOptions, ThetaParams};
use crate::metrics::{params_hash, EfficiencyReport};
use crate::model::{validate, GroupConfig, ModelParams, SignalModel};
use crate::variants::OrdinalRecord;

/// Flat parameter block as it appears in TOML or JSON files.
///
/// Missing model keys take the baseline values of [`ModelParams::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
}

impl ParamFile {
    pub fn from_params(params: &ModelParams, group: Option<&GroupConfig>) -> Self {
        let (signal_model, mu_hat) = match params.signal_model {
            SignalModel::MajorityPerception => ("majority_perception".to_string(), None),
            SignalModel::Sophisticated { mu_hat } => ("sophisticated".to_string(), Some(mu_hat)),
        };
        ParamFile {
            p: Some(params.p),
            q: Some(params.q),
            mu: Some(params.mu),
            gamma: Some(params.gamma),
            m: Some(params.m),
            alpha: Some(params.alpha),
            kappa: Some(params.kappa),
            lambda: group.map(|g| g.lambda),
            gamma_a: group.map(|g| g.gamma_a),
            gamma_b: group.map(|g| g.gamma_b),
            share_a: group.map(|g| g.share_a),
            signal_model: Some(signal_model),
            mu_hat,
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let d = ModelParams::default();
        let signal_model = match self.signal_model.as_deref() {
            None | Some("majority_perception") => {
                if self.mu_hat.is_some() {
                    return Err(Error::Config("mu_hat requires signal_model = \"sophisticated\"".into()));
                }
                SignalModel::MajorityPerception
            }
            Some("sophisticated") => SignalModel::Sophisticated {
                mu_hat: self.mu_hat.ok_or_else(|| Error::Config("sophisticated signal_model needs mu_hat".into()))?,
            },
            Some(other) => return Err(Error::Config(format!("unknown signal_model {other:?}"))),
        };
        Ok(ModelParams {
            p: self.p.unwrap_or(d.p),
            q: self.q.unwrap_or(d.q),
            mu: self.mu.unwrap_or(d.mu),
            gamma: self.gamma.unwrap_or(d.gamma),
            m: self.m.unwrap_or(d.m),
            alpha: self.alpha.unwrap_or(d.alpha),
            kappa: self.kappa.unwrap_or(d.kappa),
            signal_model,
        })
    }

    /// Group settings if any group key is present; `share_a` defaults to 1/2, `lambda` to 0.
    pub fn group_config(&self) -> Result<Option<GroupConfig>> {
        if self.gamma_a.is_none() && self.gamma_b.is_none() && self.lambda.is_none() && self.share_a.is_none() {
            return Ok(None);
        }
        let (Some(gamma_a), Some(gamma_b)) = (self.gamma_a, self.gamma_b) else {
            return Err(Error::Config("group settings need both gamma_a and gamma_b".into()));
        };
        let g = GroupConfig {
            gamma_a,
            gamma_b,
            share_a: self.share_a.unwrap_or(0.5),
            lambda: self.lambda.unwrap_or(0.0),
        };
        g.validate()?;
        Ok(Some(g))
    }

    /// Parsed and validated parameters.
    pub fn resolve(&self) -> Result<(ModelParams, Option<GroupConfig>)> {
        let params = self.model_params()?;
        validate(&params, false).into_result()?;
        Ok((params, self.group_config()?))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads TOML, or JSON for a `.json` extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns `step, group, m, r, rho`; one row per site and recorded step.
pub fn write_trajectory_csv<W: Write>(records: &[&TrajectoryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "group", "m", "r", "rho"])?;
    for rec in records {
        let group = rec.group.map(|g| g.label()).unwrap_or("all");
        for pt in &rec.points {
            for (m, &r) in pt.ranking.as_slice().iter().enumerate() {
                let rho = pt.choice.as_ref().map(|c| c.as_slice()[m]);
                w.write_record([pt.step.to_string(), group.to_string(), m.to_string(), r.to_string(), opt(rho)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Trajectory columns plus `positions`; `r` is the normalized position weight.
pub fn write_ordinal_csv<W: Write>(rec: &OrdinalRecord, beta: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "group", "m", "r", "rho", "positions"])?;
    for pt in &rec.points {
        let weights: Vec<f64> = pt.positions.iter().map(|&p| beta.powi(-((p - 1) as i32))).collect();
        let total: f64 = weights.iter().sum();
        for (m, (&pos, wt)) in pt.positions.iter().zip(&weights).enumerate() {
            w.write_record([
                pt.step.to_string(),
                "all".to_string(),
                m.to_string(),
                (wt / total).to_string(),
                pt.choice.as_slice()[m].to_string(),
                pos.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `m, v00, v01, v10, v11`.
pub fn write_value_table_csv<W: Write>(table: &ExpectedValueTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "v00", "v01", "v10", "v11"])?;
    for m in 0..table.num_sites() {
        let row = table.row(m);
        w.write_record([m.to_string(), row[0].to_string(), row[1].to_string(), row[2].to_string(), row[3].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Every root for every `L` and branch. Columns `L, branch, root, stability, params_hash`.
pub fn write_limit_surface_csv<W: Write>(params: &ModelParams, out: W) -> Result<()> {
    let hash = params_hash(params);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["L", "branch", "root", "stability", "params_hash"])?;
    for l in 1..params.m {
        let branches: &[Branch] = if params.is_sophisticated() {
            &[Branch::Majority]
        } else {
            match (2 * l).cmp(&params.m) {
                std::cmp::Ordering::Less => &[Branch::Minority],
                std::cmp::Ordering::Greater => &[Branch::Majority],
                std::cmp::Ordering::Equal => &[Branch::Minority, Branch::Majority],
            }
        };
        for &b in branches {
            for root in find_roots(&ThetaParams::from_params(params, l, b), SolverOptions::default()) {
                w.write_record([
                    l.to_string(),
                    b.label().to_string(),
                    root.x.to_string(),
                    root.stability.label().to_string(),
                    hash.clone(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `metric, L, value, regime, params_hash`.
pub fn write_report_csv<W: Write>(report: &EfficiencyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "L", "value", "regime", "params_hash"])?;
    for (l, v) in report.interim.iter().enumerate() {
        w.write_record(["P_L", &l.to_string(), &v.to_string(), &report.regime, &report.params_hash])?;
    }
    w.write_record(["P", "", &report.ex_ante.to_string(), &report.regime, &report.params_hash])?;
    w.write_record(["P_net", "", &report.ex_ante_net.to_string(), &report.regime, &report.params_hash])?;
    w.flush()?;
    Ok(())
}
