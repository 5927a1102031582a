//! Trajectory metrics (TAO, TIO, TEM, PEA) and step efficiency.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::args::ArgValue;
use crate::paths::normalize_relative;
use crate::registry::{normalize_value, ParamKind, ParamRole, ParamSpec, Registry};
use crate::sandbox::OutputProbe;
use crate::trajectory::{GoldToolchain, TaskSpec, Terminal, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("gold toolchain is empty")]
    EmptyGold,
    #[error("gold tool `{0}` is not registered")]
    UnknownTool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaoScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-level tool overlap. Duplicate names collapse.
pub fn tao<S: AsRef<str>, G: AsRef<str>>(pred: &[S], gold: &[G]) -> Result<TaoScore, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let g: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    let hit = p.intersection(&g).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { hit / p.len() as f64 };
    let recall = hit / g.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TaoScore { precision, recall, f1 })
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Length of the longest common prefix.
pub fn lcp_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn names<S: AsRef<str>>(xs: &[S]) -> Vec<&str> {
    xs.iter().map(AsRef::as_ref).collect()
}

pub fn tio<S: AsRef<str>, G: AsRef<str>>(pred: &[S], gold: &[G]) -> Result<f64, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    Ok(lcs_len(&names(pred), &names(gold)) as f64 / gold.len() as f64)
}

pub fn tem<S: AsRef<str>, G: AsRef<str>>(pred: &[S], gold: &[G]) -> Result<f64, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    Ok(lcp_len(&names(pred), &names(gold)) as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeaAlignment {
    /// (gold index, matched record step).
    pub pairs: Vec<(u32, Option<u32>)>,
    /// Gold output path → predicted output path.
    pub mapping: BTreeMap<String, String>,
    pub per_step_pass: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeaResult {
    pub score: f64,
    pub alignment: PeaAlignment,
}

/// Parameter execution accuracy with last-attempt alignment.
pub fn pea(
    trajectory: &Trajectory,
    gold: &GoldToolchain,
    registry: &Registry,
    probe: &dyn OutputProbe,
) -> Result<PeaResult, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    for step in &gold.steps {
        if registry.lookup(&step.tool).is_none() {
            return Err(MetricError::UnknownTool(step.tool.clone()));
        }
    }

    // Backward pass: last record of the same tool before the next match.
    let mut matched: Vec<Option<usize>> = vec![None; gold.len()];
    let mut bound = trajectory.records.len();
    for (gi, step) in gold.steps.iter().enumerate().rev() {
        if let Some(ri) = trajectory.records[..bound].iter().rposition(|r| r.tool == step.tool) {
            matched[gi] = Some(ri);
            bound = ri;
        }
    }

    // Forward pass.
    let mut mapping = BTreeMap::new();
    let mut pairs = Vec::with_capacity(gold.len());
    let mut per_step_pass = Vec::with_capacity(gold.len());
    for (gi, step) in gold.steps.iter().enumerate() {
        let Some(ri) = matched[gi] else {
            pairs.push((step.index, None));
            per_step_pass.push(false);
            continue;
        };
        let record = &trajectory.records[ri];
        pairs.push((step.index, Some(record.step)));
        let schema = registry.lookup(&step.tool).expect("checked above");

        for spec in schema.output_params() {
            let (Some(g), Some(p)) = (step.args.get(&spec.name), record.args.get(&spec.name)) else {
                continue;
            };
            for (gp, pp) in path_values(g).into_iter().zip(path_values(p)) {
                if gp != pp {
                    mapping.insert(gp, pp);
                }
            }
        }

        let params_ok = step.args.iter().all(|(name, gold_value)| {
            let spec = schema.get(name);
            if spec.is_some_and(|s| s.role == ParamRole::Stylistic) {
                return true;
            }
            match record.args.get(name) {
                Some(pred_value) => equivalent(spec, gold_value, pred_value, &mapping),
                None => false,
            }
        });
        let outputs_exist = schema
            .output_params()
            .filter_map(|spec| record.args.get(&spec.name))
            .flat_map(path_values)
            .all(|p| probe.output_exists(&p));
        per_step_pass.push(params_ok && outputs_exist);
    }

    let passed = per_step_pass.iter().filter(|&&b| b).count();
    Ok(PeaResult {
        score: passed as f64 / gold.len() as f64,
        alignment: PeaAlignment { pairs, mapping, per_step_pass },
    })
}

fn canonical_path(p: &str) -> String {
    normalize_relative(p).unwrap_or_else(|_| p.to_owned())
}

fn path_values(v: &ArgValue) -> Vec<String> {
    match v {
        ArgValue::Str(s) => vec![canonical_path(s)],
        ArgValue::List(items) => items.iter().filter_map(ArgValue::as_str).map(canonical_path).collect(),
        _ => Vec::new(),
    }
}

fn is_path_spec(spec: &ParamSpec) -> bool {
    spec.role.is_path() || spec.kind == ParamKind::Path || spec.item_kind == Some(ParamKind::Path)
}

fn equivalent(spec: Option<&ParamSpec>, gold: &ArgValue, pred: &ArgValue, mapping: &BTreeMap<String, String>) -> bool {
    let Some(spec) = spec else {
        return gold == pred;
    };
    let g = normalize_value(spec, gold);
    let p = normalize_value(spec, pred);
    if is_path_spec(spec) {
        let remap = |s: &str| {
            let c = canonical_path(s);
            mapping.get(&c).cloned().unwrap_or(c)
        };
        return match (&g, &p) {
            (ArgValue::Str(a), ArgValue::Str(b)) => remap(a) == canonical_path(b),
            (ArgValue::List(a), ArgValue::List(b)) => {
                let mut ga: Vec<String> = a.iter().filter_map(ArgValue::as_str).map(remap).collect();
                let mut pb: Vec<String> = b.iter().filter_map(ArgValue::as_str).map(canonical_path).collect();
                if spec.unordered {
                    ga.sort();
                    pb.sort();
                }
                ga.len() == a.len() && pb.len() == b.len() && ga == pb
            }
            _ => false,
        };
    }
    let tol = spec.tolerance_or_default();
    match (&g, &p) {
        (ArgValue::List(a), ArgValue::List(b)) => {
            if a.len() != b.len() {
                return false;
            }
            if spec.unordered {
                let mut used = vec![false; b.len()];
                a.iter().all(|x| {
                    let hit = b.iter().enumerate().position(|(j, y)| !used[j] && scalar_eq(x, y, tol));
                    hit.map(|j| used[j] = true).is_some()
                })
            } else {
                a.iter().zip(b).all(|(x, y)| scalar_eq(x, y, tol))
            }
        }
        _ => scalar_eq(&g, &p, tol),
    }
}

fn scalar_eq(a: &ArgValue, b: &ArgValue, tol: f64) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y || (x - y).abs() <= tol * x.abs().max(y.abs()),
        _ => a == b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub macro_avg: f64,
    pub micro: f64,
}

/// Per-task step efficiency `n_gt / max(n_gt, n_pred)`.
pub fn step_efficiency(n_gt: usize, n_pred: usize) -> f64 {
    n_gt as f64 / n_gt.max(n_pred).max(1) as f64
}

/// Macro and micro efficiency over successful tasks; `None` when empty.
pub fn efficiency(results: &[(usize, usize)]) -> Option<Efficiency> {
    if results.is_empty() {
        return None;
    }
    let macro_avg = results.iter().map(|&(g, p)| step_efficiency(g, p)).sum::<f64>() / results.len() as f64;
    let gt: usize = results.iter().map(|r| r.0).sum();
    let denom: usize = results.iter().map(|&(g, p)| g.max(p)).sum();
    Some(Efficiency { macro_avg, micro: gt as f64 / denom.max(1) as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub mean: f64,
    pub std: f64,
}

/// Scores for one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task_id: String,
    pub tao: TaoScore,
    pub tio: f64,
    pub tem: f64,
    pub pea: f64,
    pub judge: Option<JudgeSummary>,
    /// Step efficiency; absent for unsuccessful tasks.
    pub eff: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub success: bool,
}

/// Completed run whose result file exists.
pub fn task_succeeded(task: &TaskSpec, trajectory: &Trajectory, probe: &dyn OutputProbe) -> bool {
    trajectory.terminal == Terminal::Completed && probe.output_exists(&task.result_filename)
}

/// All trajectory metrics for one run. Judge scores are attached separately.
pub fn score_trajectory(
    task: &TaskSpec,
    trajectory: &Trajectory,
    registry: &Registry,
    probe: &dyn OutputProbe,
) -> Result<MetricReport, MetricError> {
    let gold_names = task.gold_toolchain.tool_names();
    let pred_names = trajectory.tool_names();
    let success = task_succeeded(task, trajectory, probe);
    let n_gt = task.gold_toolchain.len();
    let n_pred = trajectory.records.len();
    Ok(MetricReport {
        task_id: task.id.clone(),
        tao: tao(&pred_names, &gold_names)?,
        tio: tio(&pred_names, &gold_names)?,
        tem: tem(&pred_names, &gold_names)?,
        pea: pea(trajectory, &task.gold_toolchain, registry, probe)?.score,
        judge: None,
        eff: success.then(|| step_efficiency(n_gt, n_pred)),
        n_gt,
        n_pred,
        success,
    })
}
