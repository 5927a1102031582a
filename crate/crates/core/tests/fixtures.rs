mod common;

use geoharness::harness::{load_registry, load_tasks};
use geoharness::tools::synthetic_registry;
use serde_json::Value;

#[test]
fn manifest_has_one_header_per_tool_plus_one_line_per_param() {
    let reg = synthetic_registry();
    let params: usize = reg.schemas().map(|s| s.params.len()).sum();
    let text = reg.render_manifest().unwrap();
    assert_eq!(text.lines().count(), reg.len() + params);
    assert_eq!(text.lines().filter(|l| l.starts_with("tool ")).count(), reg.len());

    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("ten.json");
    let names = ["copy_layer", "reproject_layer", "buffer_features", "clip_layer", "filter_features", "merge_layers",
        "fix_geometry", "check_geometry", "calculate_area", "zonal_summary"];
    let full: Value = serde_json::from_str(&serde_json::to_string(&reg.schemas().collect::<Vec<_>>()).unwrap()).unwrap();
    let ten: Vec<&Value> = full.as_array().unwrap().iter().filter(|t| names.contains(&t["name"].as_str().unwrap())).collect();
    std::fs::write(&path, serde_json::to_string(&ten).unwrap()).unwrap();
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let expected: usize = raw.as_array().unwrap().iter().map(|t| 1 + t["params"].as_array().unwrap().len()).sum();
    let loaded = load_registry(Some(&path)).unwrap();
    assert_eq!(loaded.len(), 10);
    assert_eq!(loaded.render_manifest().unwrap().lines().count(), expected);
}

#[test]
fn bundled_suite_documents() {
    let dir = common::suite_dir();
    let tasks = load_tasks(&dir.join("tasks")).unwrap();
    assert_eq!(tasks.len(), 5);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("tasks/buffer-and-map.json")).unwrap()).unwrap();
    assert_eq!(raw["toolchain"].as_array().unwrap().len(), 3);
    assert_eq!(raw["data_description"].as_array().unwrap().len(), 2);
    let t = tasks.iter().find(|t| t.id == "buffer-and-map").unwrap();
    assert_eq!(t.layers.len(), 2);
    assert_eq!(t.gold_toolchain.len(), 3);
    for t in &tasks {
        assert!(dir.join("scripts").join(format!("{}.json", t.id)).exists(), "{}", t.id);
        for input in &t.data_description {
            assert!(dir.join("data").join(&input.path).exists(), "{}", input.path);
        }
    }
}
