//! Independent oracles and fixture generators shared by the integration
//! tests and the acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use geoharness::args::{ArgValue, Args};
use geoharness::sandbox::OutputProbe;
use geoharness::trajectory::{CallStatus, GoldStep, GoldToolchain, ToolCallRecord, Trajectory, Terminal};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn suite_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suite")
}

// ---- sequence oracles -------------------------------------------------------

/// Precision, recall and F1 over distinct names, counted by linear scans.
pub fn tao_oracle(pred: &[String], gold: &[String]) -> (f64, f64, f64) {
    let mut p: Vec<&String> = Vec::new();
    for x in pred {
        if !p.contains(&x) {
            p.push(x);
        }
    }
    let mut g: Vec<&String> = Vec::new();
    for x in gold {
        if !g.contains(&x) {
            g.push(x);
        }
    }
    let hit = p.iter().filter(|x| g.contains(x)).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { hit / p.len() as f64 };
    let recall = hit / g.len() as f64;
    let f1 = if hit == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (precision, recall, f1)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest subsequence of `gold` that is also a subsequence of `pred`, by
/// enumerating every subset of gold positions.
pub fn lcs_oracle(pred: &[String], gold: &[String]) -> usize {
    assert!(gold.len() <= 16, "exhaustive oracle is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << gold.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&String> = (0..gold.len()).filter(|i| mask & (1 << i) != 0).map(|i| &gold[i]).collect();
        if is_subsequence(&sub, pred) {
            best = len;
        }
    }
    best
}

pub fn tio_oracle(pred: &[String], gold: &[String]) -> f64 {
    lcs_oracle(pred, gold) as f64 / gold.len() as f64
}

/// Largest k such that the first k names agree, by trying every k.
pub fn tem_oracle(pred: &[String], gold: &[String]) -> f64 {
    let k = (0..=gold.len().min(pred.len())).filter(|&k| pred[..k] == gold[..k]).max().unwrap_or(0);
    k as f64 / gold.len() as f64
}

/// Random name sequence over an alphabet of `alphabet` letters.
pub fn random_seq<R: Rng>(rng: &mut R, alphabet: usize, min_len: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(min_len..=max_len);
    (0..len).map(|_| ((b'a' + rng.gen_range(0..alphabet) as u8) as char).to_string()).collect()
}

// ---- PEA fixtures -----------------------------------------------------------

pub const MAP_TOOL: &str = "render_map";
pub const RAMPS: [&str; 5] = ["OrRd", "Blues", "Greens", "Greys", "Viridis"];
const GENERIC_TOOLS: [&str; 7] =
    ["copy_layer", "reproject_layer", "buffer_features", "clip_layer", "filter_features", "calculate_area", "fix_geometry"];
const STAGED: [&str; 2] = ["in_a.geojson", "in_b.geojson"];

/// Existence oracle over an explicit set of paths.
#[derive(Debug, Clone, Default)]
pub struct SetProbe(pub BTreeSet<String>);

impl OutputProbe for SetProbe {
    fn output_exists(&self, rel: &str) -> bool {
        self.0.contains(rel)
    }
}

#[derive(Debug, Clone)]
pub struct PeaCase {
    pub gold: GoldToolchain,
    pub trajectory: Trajectory,
    pub probe: SetProbe,
}

impl PeaCase {
    pub fn n(&self) -> usize {
        self.gold.steps.len()
    }
}

fn output_name(tool: &str, k: usize) -> String {
    if tool == MAP_TOOL {
        format!("map{k}.png")
    } else {
        format!("step{k}.geojson")
    }
}

fn gold_args<R: Rng>(rng: &mut R, tool: &str, k: usize, available: &[String]) -> Args {
    let pick = |rng: &mut R| ArgValue::Str(available.choose(rng).expect("non-empty").clone());
    let mut a = Args::new();
    match tool {
        MAP_TOOL => {
            let n = rng.gen_range(1..=available.len().min(3));
            let layers = available.choose_multiple(rng, n).cloned().map(ArgValue::Str).collect();
            a.insert("layers".into(), ArgValue::List(layers));
            if rng.gen_bool(0.7) {
                a.insert("title".into(), ArgValue::Str(format!("Map {k}")));
            }
            if rng.gen_bool(0.7) {
                a.insert("color_ramp".into(), ArgValue::Str(RAMPS.choose(rng).unwrap().to_string()));
            }
            if rng.gen_bool(0.5) {
                a.insert("alpha".into(), ArgValue::Real(rng.gen_range(1..10) as f64 / 10.0));
            }
            if rng.gen_bool(0.3) {
                a.insert("width".into(), ArgValue::Int(rng.gen_range(64..512)));
            }
        }
        _ => {
            a.insert("input".into(), pick(rng));
            match tool {
                "reproject_layer" => {
                    let crs = if rng.gen_bool(0.5) { "EPSG:4326" } else { "EPSG:3857" };
                    a.insert("target_crs".into(), ArgValue::Str(crs.into()));
                }
                "buffer_features" => {
                    let d = rng.gen_range(10..1000);
                    let v = if rng.gen_bool(0.5) { ArgValue::Int(d) } else { ArgValue::Real(d as f64 + 0.5) };
                    a.insert("distance".into(), v);
                    if rng.gen_bool(0.3) {
                        a.insert("segments".into(), ArgValue::Int(rng.gen_range(4..64)));
                    }
                }
                "clip_layer" => {
                    a.insert("mask".into(), pick(rng));
                }
                "filter_features" => {
                    a.insert("expression".into(), ArgValue::Str(format!("pop > {}", rng.gen_range(0..5000))));
                }
                "calculate_area" if rng.gen_bool(0.5) => {
                    a.insert("field".into(), ArgValue::Str("area_m2".into()));
                }
                _ => {}
            }
        }
    }
    a.insert("output".into(), ArgValue::Str(output_name(tool, k)));
    a
}

/// Perturbs one non-stylistic scalar so the step fails equivalence.
fn corrupt(tool: &str, args: &mut Args) -> bool {
    match tool {
        "buffer_features" => {
            let d = args["distance"].as_f64().unwrap();
            args.insert("distance".into(), ArgValue::Real(d + 1.0));
        }
        "reproject_layer" => {
            let flipped = if args["target_crs"].as_str() == Some("EPSG:4326") { "EPSG:3857" } else { "EPSG:4326" };
            args.insert("target_crs".into(), ArgValue::Str(flipped.into()));
        }
        "filter_features" => {
            args.insert("expression".into(), ArgValue::Str("pop > -1".into()));
        }
        _ => return false,
    }
    true
}

pub fn record(step: u32, tool: &str, args: Args, status: CallStatus) -> ToolCallRecord {
    let outputs = match args.get("output") {
        Some(ArgValue::Str(s)) if status == CallStatus::Success => vec![s.clone()],
        _ => Vec::new(),
    };
    ToolCallRecord { step, tool: tool.into(), args, status, error: None, duration: 0.1, outputs_declared: outputs, summary: None }
}

/// Gold of 1..=max_len steps ending in a map step, with no two adjacent
/// steps sharing a tool, and a trajectory that replays it. With `corrupt_p`
/// > 0 some replayed steps carry a wrong non-stylistic parameter.
pub fn random_case<R: Rng>(rng: &mut R, max_len: usize, corrupt_p: f64) -> PeaCase {
    let n = rng.gen_range(1..=max_len);
    let mut tools: Vec<&str> = Vec::with_capacity(n);
    for k in 0..n {
        let tool = if k + 1 == n {
            MAP_TOOL
        } else {
            loop {
                let t = if rng.gen_bool(0.15) { MAP_TOOL } else { *GENERIC_TOOLS.choose(rng).unwrap() };
                if tools.last() != Some(&t) && !(k + 2 == n && t == MAP_TOOL) {
                    break t;
                }
            }
        };
        tools.push(tool);
    }
    let mut available: Vec<String> = STAGED.iter().map(|s| s.to_string()).collect();
    let mut steps = Vec::new();
    let mut records = Vec::new();
    let mut probe = SetProbe::default();
    for (k, tool) in tools.iter().enumerate() {
        let args = gold_args(rng, tool, k + 1, &available);
        let mut pred = args.clone();
        if rng.gen_bool(corrupt_p) {
            corrupt(tool, &mut pred);
        }
        let out = output_name(tool, k + 1);
        probe.0.insert(out.clone());
        if !out.ends_with(".png") {
            available.push(out);
        }
        steps.push(GoldStep { index: k as u32 + 1, tool: tool.to_string(), args });
        records.push(record(k as u32 + 1, tool, pred, CallStatus::Success));
    }
    let mut trajectory = Trajectory::new("generated");
    trajectory.records = records;
    trajectory.terminal = Terminal::Completed;
    PeaCase { gold: GoldToolchain { steps }, trajectory, probe }
}

fn renumber(records: &mut [ToolCallRecord]) {
    for (i, r) in records.iter_mut().enumerate() {
        r.step = i as u32 + 1;
    }
}

/// Inserts 0..=5 failed attempts of the same tool before every record.
pub fn with_failed_attempts<R: Rng>(case: &PeaCase, rng: &mut R) -> PeaCase {
    let mut out = case.clone();
    let mut records = Vec::new();
    for r in &case.trajectory.records {
        for _ in 0..rng.gen_range(0..=5) {
            let mut args = r.args.clone();
            match rng.gen_range(0..3) {
                0 => {
                    args.insert("distance".into(), ArgValue::Str("100m".into()));
                }
                1 => {
                    args.remove("output");
                }
                _ => {}
            }
            let status = if rng.gen_bool(0.8) { CallStatus::Error } else { CallStatus::Timeout };
            records.push(record(0, &r.tool, args, status));
        }
        records.push(r.clone());
    }
    renumber(&mut records);
    out.trajectory.records = records;
    out
}

fn rename_value(v: &mut ArgValue, map: &BTreeMap<String, String>) {
    match v {
        ArgValue::Str(s) => {
            if let Some(new) = map.get(s.as_str()) {
                *s = new.clone();
            }
        }
        ArgValue::List(items) => items.iter_mut().for_each(|x| rename_value(x, map)),
        _ => {}
    }
}

/// Renames every output except the final result, consistently across all
/// records and the probe.
pub fn rename_intermediates<R: Rng>(case: &PeaCase, rng: &mut R) -> PeaCase {
    let mut out = case.clone();
    let last = case.trajectory.records.len().saturating_sub(1);
    let salt: u32 = rng.gen();
    let map: BTreeMap<String, String> = case.trajectory.records[..last]
        .iter()
        .filter_map(|r| r.args.get("output").and_then(ArgValue::as_str))
        .enumerate()
        .map(|(i, p)| (p.to_owned(), format!("tmp/{salt:08x}_{i}_{p}")))
        .collect();
    for r in &mut out.trajectory.records {
        for v in r.args.values_mut() {
            rename_value(v, &map);
        }
        r.outputs_declared.iter_mut().for_each(|p| {
            if let Some(new) = map.get(p) {
                *p = new.clone();
            }
        });
    }
    out.probe.0 = case.probe.0.iter().map(|p| map.get(p).cloned().unwrap_or_else(|| p.clone())).collect();
    out
}

/// Removes the output of the `k`-th record from the probe.
pub fn delete_result(case: &PeaCase, k: usize) -> PeaCase {
    let mut out = case.clone();
    let path = case.trajectory.records[k].args["output"].as_str().unwrap().to_owned();
    out.probe.0.remove(&path);
    out
}

/// Rewrites, adds or drops the stylistic parameters of every map record.
pub fn perturb_style<R: Rng>(case: &PeaCase, rng: &mut R) -> PeaCase {
    let mut out = case.clone();
    for r in out.trajectory.records.iter_mut().filter(|r| r.tool == MAP_TOOL) {
        for key in ["title", "color_ramp", "alpha"] {
            match rng.gen_range(0..3) {
                0 => {
                    r.args.remove(key);
                }
                1 => {
                    let v = match key {
                        "title" => ArgValue::Str(format!("Restyled {}", rng.gen::<u16>())),
                        "color_ramp" => ArgValue::Str(RAMPS.choose(rng).unwrap().to_string()),
                        _ => ArgValue::Real(rng.gen_range(0.0..1.0)),
                    };
                    r.args.insert(key.into(), v);
                }
                _ => {}
            }
        }
    }
    out
}
