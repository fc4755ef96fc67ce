//! Cross-seed comparison tables from metrics files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::Phase;
use crate::error::{HarnessError, Result};
use crate::metrics::{read_metrics, MetricsRecord};

/// Mean and sample standard deviation; the deviation is absent for one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        // offset by the first value so that identical values average exactly
        let mean = values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Summary { mean, std, n })
    }

    fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.3} ± {:.3}", self.mean, s),
            None => format!("{:.3}", self.mean),
        }
    }
}

/// One table row: a metric for one model label in one setting and robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub setting: String,
    pub env: String,
    pub metric: String,
    pub model: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<Row>,
}

type Key = (String, String, String, String);

fn push(groups: &mut BTreeMap<Key, Vec<f64>>, setting: &str, env: &str, metric: &str, model: &str, v: f64) {
    groups.entry((setting.into(), env.into(), metric.into(), model.into())).or_default().push(v);
}

/// Groups evaluation records by setting, robot, metric and model, one
/// value per record (one record per seed), plus the final training loss of
/// every file and the relative precision of action losses.
pub fn aggregate(files: &[Vec<MetricsRecord>]) -> Report {
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    // final action-regression loss per (setting, seed, model)
    let mut action_loss: BTreeMap<(String, u64, bool), Vec<f64>> = BTreeMap::new();
    for records in files {
        let mut last: BTreeMap<(String, String, String, String, u64), f64> = BTreeMap::new();
        for r in records {
            let setting = r.setting.clone().unwrap_or_default();
            let model = r.model.clone().unwrap_or_default();
            if r.phase == Phase::Eval.name() {
                for (env, rate) in &r.success_rate {
                    let metric = if r.success_length.is_some() { "chained_success_rate" } else { "success_rate" };
                    push(&mut groups, &setting, env, metric, &model, *rate);
                }
                if let Some(l) = r.success_length {
                    let env = r.env.clone().unwrap_or_default();
                    push(&mut groups, &setting, &env, "success_length", &model, l);
                }
            } else if let Some(loss) = r.loss {
                let env = r.env.clone().unwrap_or_else(|| "all".into());
                last.insert((setting, env, r.phase.clone(), model, r.seed), loss);
            }
            if let Some(p) = r.relative_precision {
                push(&mut groups, r.setting.as_deref().unwrap_or_default(), "all", "relative_precision", r.model.as_deref().unwrap_or_default(), p);
            }
        }
        for ((setting, env, phase, model, seed), loss) in last {
            push(&mut groups, &setting, &env, &format!("final_loss_{phase}"), &model, loss);
            if phase == Phase::HeadOnly.name() || phase == Phase::BctEndToEnd.name() {
                action_loss.entry((setting, seed, phase == Phase::BctEndToEnd.name())).or_default().push(loss);
            }
        }
    }
    // relative precision per seed: VKT head losses averaged over robots against the BCT loss
    let mut per_setting: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((setting, seed, is_bct), bct) in &action_loss {
        if !is_bct {
            continue;
        }
        if let Some(vkt) = action_loss.get(&(setting.clone(), *seed, false)) {
            let l_vkt = vkt.iter().sum::<f64>() / vkt.len() as f64;
            if let Ok(p) = vkchain_model::relative_precision(l_vkt, bct[0]) {
                per_setting.entry(setting.clone()).or_default().push(p);
            }
        }
    }
    for (setting, values) in per_setting {
        groups.insert((setting, "all".into(), "relative_precision".into(), "vkt vs bct".into()), values);
    }
    Report { rows: groups.into_iter().filter_map(|((setting, env, metric, model), v)| Summary::of(&v).map(|summary| Row { setting, env, metric, model, summary })).collect() }
}

pub fn load_report(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(HarnessError::Validation("report needs at least one metrics file".into()));
    }
    let files = paths.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&files))
}

impl Report {
    pub fn get(&self, setting: &str, env: &str, metric: &str, model: &str) -> Option<Summary> {
        self.rows.iter().find(|r| r.setting == setting && r.env == env && r.metric == metric && r.model == model).map(|r| r.summary)
    }

    /// Aligned text table; each metric lists every model side by side.
    pub fn text(&self) -> String {
        let mut models: Vec<&str> = self.rows.iter().map(|r| r.model.as_str()).collect();
        models.sort_unstable();
        models.dedup();
        let mut out = format!("{:<18} {:<8} {:<22}", "setting", "robot", "metric");
        for m in &models {
            let _ = write!(out, " {m:>20}");
        }
        out.push('\n');
        let mut seen: Vec<(&str, &str, &str)> = Vec::new();
        for r in &self.rows {
            let key = (r.setting.as_str(), r.env.as_str(), r.metric.as_str());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let _ = write!(out, "{:<18} {:<8} {:<22}", key.0, key.1, key.2);
            for m in &models {
                let cell = self.get(key.0, key.1, key.2, m).map_or_else(|| "-".to_string(), |s| s.cell());
                let _ = write!(out, " {cell:>20}");
            }
            out.push('\n');
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("setting,robot,metric,model,mean,std,n\n");
        for r in &self.rows {
            let std = r.summary.std.map_or_else(String::new, |s| s.to_string());
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.setting, r.env, r.metric, r.model, r.summary.mean, std, r.summary.n);
        }
        out
    }
}
