use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use geoharness::args;
use geoharness::harness::load_registry;
use geoharness::registry::Registry;
use geoharness::sandbox::worker::{read_frame, write_frame, WorkerRequest, WorkerResponse, WorkerStatus};
use geoharness::sandbox::{Clock, ErrorCategory, Limits, SandboxError, SimulatedClock, SystemClock, Workspace};
use geoharness::tools::synthetic_registry;
use geoharness::trajectory::{parse_task_spec, CallStatus, TaskSpec};
use tempfile::TempDir;

const LAYER: &str = r#"{"type":"FeatureCollection","crs":"EPSG:3857","features":[
  {"properties":{"pop":10},"geometry":{"type":"Point","coordinates":[10,10]}}]}"#;

fn fixture() -> (TempDir, PathBuf, TaskSpec) {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("pts.geojson"), LAYER).unwrap();
    let task = parse_task_spec(
        r#"{"id":"t","domain":"spatial_data_management","task_description":"copy",
            "data_description":[{"path":"pts.geojson"}],"toolchain_length":1,
            "toolchain":[{"tool":"copy_layer","args":{"input":"pts.geojson","output":"out.geojson"}}],
            "result":"out.geojson"}"#,
    )
    .unwrap();
    (dir, data, task)
}

fn workspace(dir: &TempDir, data: &Path, task: &TaskSpec, limits: Limits, clock: Arc<dyn Clock>) -> Workspace {
    Workspace::create(task, data, &dir.path().join("runs"), limits, clock).unwrap()
}

fn real() -> Arc<dyn Clock> {
    Arc::new(SystemClock::new())
}

#[test]
fn workspaces_are_isolated() {
    let (dir, data, task) = fixture();
    let reg = synthetic_registry();
    let mut a = workspace(&dir, &data, &task, Limits::default(), real());
    let b = workspace(&dir, &data, &task, Limits::default(), real());
    assert_ne!(a.root(), b.root());
    assert!(b.root().join("pts.geojson").exists());
    let r = a.execute(&reg, "copy_layer", &args! {"input" => "pts.geojson", "output" => "out.geojson"}).unwrap();
    assert_eq!(r.status, CallStatus::Success);
    assert!(a.root().join("out.geojson").exists());
    assert!(!b.root().join("out.geojson").exists());

    let r = a.execute(&reg, "copy_layer", &args! {"input" => "pts.geojson", "output" => "../escaped.geojson"}).unwrap();
    assert_ne!(r.status, CallStatus::Success);
    assert!(!a.root().parent().unwrap().join("escaped.geojson").exists());
    let r = a.execute(&reg, "copy_layer", &args! {"input" => "/etc/hostname", "output" => "h.geojson"}).unwrap();
    assert_ne!(r.status, CallStatus::Success);
}

#[test]
fn second_write_is_locked_until_granted() {
    let (dir, data, task) = fixture();
    let reg = synthetic_registry();
    let mut ws = workspace(&dir, &data, &task, Limits::default(), real());
    let call = args! {"input" => "pts.geojson", "output" => "out.geojson"};
    assert!(ws.execute(&reg, "copy_layer", &call).unwrap().is_success());
    let again = ws.execute(&reg, "copy_layer", &call).unwrap();
    assert_eq!(again.error.unwrap().category, ErrorCategory::FileLocked);
    let staged = ws.execute(&reg, "copy_layer", &args! {"input" => "out.geojson", "output" => "pts.geojson"}).unwrap();
    assert_eq!(staged.error.unwrap().category, ErrorCategory::FileLocked);
    let granted = args! {"input" => "pts.geojson", "output" => "out.geojson", "overwrite" => true};
    assert!(ws.execute(&reg, "copy_layer", &granted).unwrap().is_success());
}

#[test]
fn step_cap_refuses_the_call_past_the_limit() {
    let (dir, data, task) = fixture();
    let reg = synthetic_registry();
    let mut ws = workspace(&dir, &data, &task, Limits { max_steps: 3, call_timeout: 360.0 }, real());
    for _ in 0..3 {
        ws.execute(&reg, "check_geometry", &args! {"input" => "pts.geojson"}).unwrap();
    }
    let err = ws.execute(&reg, "check_geometry", &args! {"input" => "pts.geojson"}).unwrap_err();
    assert!(matches!(err, SandboxError::StepCapExceeded { max: 3 }));
}

#[test]
fn real_clock_timeout_stops_a_long_tool() {
    let (dir, data, task) = fixture();
    let reg = synthetic_registry();
    let mut ws = workspace(&dir, &data, &task, Limits { max_steps: 30, call_timeout: 1.0 }, real());
    let t0 = Instant::now();
    let r = ws.execute(&reg, "sleep_tool", &args! {"seconds" => 30.0}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    assert_eq!(r.status, CallStatus::Timeout);
    assert_eq!(r.error.unwrap().category, ErrorCategory::Timeout);
    assert!((1.0..1.6).contains(&wall), "wall {wall}");
}

#[test]
fn simulated_clock_timeout_lands_on_the_limit() {
    let (dir, data, task) = fixture();
    let reg = synthetic_registry();
    let clock = Arc::new(SimulatedClock::new());
    let mut ws = workspace(&dir, &data, &task, Limits::default(), clock.clone());
    let t0 = clock.now();
    let r = ws.execute(&reg, "sleep_tool", &args! {"seconds" => 400.0}).unwrap();
    assert_eq!(r.status, CallStatus::Timeout);
    assert!((360.0..=361.0).contains(&(clock.now() - t0)));
    assert!(ws.execute(&reg, "sleep_tool", &args! {"seconds" => 5.0}).unwrap().is_success());
}

// ---- out-of-process workers ----------------------------------------------

fn stub() -> String {
    env!("CARGO_BIN_EXE_harness-stub-worker").to_owned()
}

fn worker_registry(dir: &TempDir) -> Registry {
    let worker = serde_json::json!([stub()]);
    let manifest = serde_json::json!({"tools": [
        {"name": "touch", "description": "writes a file", "worker": worker,
         "params": [{"name": "path", "kind": "path", "role": "output_path", "required": true}]},
        {"name": "sleep", "description": "waits", "worker": worker, "params": [{"name": "seconds", "kind": "real"}]},
        {"name": "fail", "description": "fails", "worker": worker, "params": []},
        {"name": "crash", "description": "exits", "worker": worker, "params": []},
        {"name": "escape", "description": "lies about outputs", "worker": worker, "params": []},
        {"name": "garble", "description": "bad frame", "worker": worker, "params": []},
        {"name": "copy_layer", "description": "built-in",
         "params": [{"name": "input", "kind": "path", "role": "input_path", "required": true},
                    {"name": "output", "kind": "path", "role": "output_path", "required": true}]}
    ]});
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, manifest.to_string()).unwrap();
    load_registry(Some(&path)).unwrap()
}

#[test]
fn worker_tools_run_through_the_sandbox() {
    let (dir, data, task) = fixture();
    let reg = worker_registry(&dir);
    let mut ws = workspace(&dir, &data, &task, Limits { max_steps: 30, call_timeout: 1.0 }, real());
    let touch = |ws: &mut Workspace, p: &str| ws.execute(&reg, "touch", &args! {"path" => p}).unwrap();

    assert!(touch(&mut ws, "a.txt").is_success());
    assert!(ws.root().join("a.txt").exists());
    assert_eq!(touch(&mut ws, "a.txt").error.unwrap().category, ErrorCategory::FileLocked);

    let fail = ws.execute(&reg, "fail", &args! {}).unwrap();
    assert_eq!(fail.error.unwrap().category, ErrorCategory::BadParameter);

    let crash = ws.execute(&reg, "crash", &args! {}).unwrap();
    assert_eq!(crash.status, CallStatus::Error);
    assert!(touch(&mut ws, "after_crash.txt").is_success(), "worker respawns");

    let escape = ws.execute(&reg, "escape", &args! {}).unwrap();
    assert_eq!(escape.error.unwrap().category, ErrorCategory::Internal);

    let garble = ws.execute(&reg, "garble", &args! {}).unwrap();
    assert_eq!(garble.status, CallStatus::Error);
    assert!(touch(&mut ws, "after_garble.txt").is_success());

    let t0 = Instant::now();
    let slow = ws.execute(&reg, "sleep", &args! {"seconds" => 30.0}).unwrap();
    assert_eq!(slow.status, CallStatus::Timeout);
    assert!(t0.elapsed() < Duration::from_secs(3));
    assert!(touch(&mut ws, "after_timeout.txt").is_success());

    assert!(ws.execute(&reg, "copy_layer", &args! {"input" => "pts.geojson", "output" => "c.geojson"}).unwrap().is_success());
}

#[test]
fn manifest_without_executor_is_a_load_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"[{"name": "mystery", "description": "", "params": []}]"#).unwrap();
    assert!(load_registry(Some(&path)).is_err());
    assert!(load_registry(Some(&dir.path().join("missing.json"))).is_err());
}

#[test]
fn frames_pipeline_in_order() {
    let dir = TempDir::new().unwrap();
    let mut child = Command::new(stub())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let workspace = dir.path().to_string_lossy().into_owned();
    let mut batch = Vec::new();
    for i in 0..100 {
        let req = WorkerRequest { id: format!("req-{i}"), tool: "echo".into(), args: args! {}, workspace: workspace.clone() };
        write_frame(&mut batch, &serde_json::to_vec(&req).unwrap()).unwrap();
    }
    stdin.write_all(&batch).unwrap();
    drop(stdin);
    for i in 0..100 {
        let body = read_frame(&mut stdout).unwrap().expect("response frame");
        let resp: WorkerResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(resp.id, format!("req-{i}"));
        assert_eq!(resp.status, WorkerStatus::Ok);
    }
    assert!(read_frame(&mut stdout).unwrap().is_none(), "clean end of stream");
    assert!(child.wait().unwrap().success());
}

#[test]
fn frame_layout_is_big_endian_length_then_body() {
    let mut buf = Vec::new();
    write_frame(&mut buf, br#"{"id":"1"}"#).unwrap();
    assert_eq!(&buf[..4], &[0x00, 0x00, 0x00, 0x0a]);
    assert_eq!(&buf[4..], br#"{"id":"1"}"#);
    let truncated = [0u8, 0, 0, 9, b'{'];
    assert!(read_frame(&mut &truncated[..]).is_err());
    assert!(read_frame(&mut &[0u8, 0][..]).is_err());
}
