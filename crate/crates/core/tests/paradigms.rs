mod common;

use std::sync::Arc;

use geoharness::agents::{run_paradigm, AgentFailure, AgentRun, GoldFollower, ModelClient, ModelTurn, Paradigm, PlanStep, ScriptedModel, DEFAULT_RETRY_BUDGET};
use geoharness::args;
use geoharness::agents::scripted::ScriptEntry;
use geoharness::metrics::{score_trajectory, MetricReport};
use geoharness::sandbox::{ErrorCategory, Limits, SystemClock, Workspace};
use geoharness::tools::synthetic_registry;
use geoharness::trajectory::{parse_task_spec, CallStatus, TaskSpec, Terminal};
use tempfile::TempDir;

fn suite_task(id: &str) -> TaskSpec {
    parse_task_spec(&std::fs::read_to_string(common::suite_dir().join(format!("tasks/{id}.json"))).unwrap()).unwrap()
}

fn suite_script(id: &str) -> ScriptedModel {
    ScriptedModel::from_json(&std::fs::read_to_string(common::suite_dir().join(format!("scripts/{id}.json"))).unwrap()).unwrap()
}

fn run_with(task: &TaskSpec, paradigm: Paradigm, model: &dyn ModelClient, limits: Limits) -> (AgentRun, MetricReport) {
    let tmp = TempDir::new().unwrap();
    let reg = synthetic_registry();
    let mut ws = Workspace::create(task, &common::suite_dir().join("data"), tmp.path(), limits, Arc::new(SystemClock::new())).unwrap();
    let run = run_paradigm(paradigm, task, &reg, &mut ws, model, DEFAULT_RETRY_BUDGET).unwrap();
    let report = score_trajectory(task, &run.trajectory, &reg, &ws).unwrap();
    (run, report)
}

fn run(task_id: &str, paradigm: Paradigm) -> (AgentRun, MetricReport) {
    run_with(&suite_task(task_id), paradigm, &suite_script(task_id), Limits::default())
}

fn statuses(run: &AgentRun) -> Vec<(String, CallStatus)> {
    run.trajectory.records.iter().map(|r| (r.tool.clone(), r.status)).collect()
}

#[test]
fn recovery_fixture_separates_plan_paradigms() {
    let (ps, ps_m) = run("parcel-repair", Paradigm::PlanSolve);
    assert_eq!(ps.trajectory.records.len(), 2);
    assert_eq!(ps.trajectory.terminal, Terminal::Completed);
    assert_eq!(ps.trajectory.records[0].error.as_ref().unwrap().category, ErrorCategory::FileLocked);
    assert_eq!((ps_m.eff, ps_m.pea), (Some(1.0), 0.5));

    let (pr, pr_m) = run("parcel-repair", Paradigm::PlanReact);
    assert_eq!(pr.trajectory.records.len(), 3);
    assert_eq!(pr.trajectory.terminal, Terminal::Completed);
    assert_eq!(pr_m.pea, 1.0);
    assert_eq!(pr_m.eff, Some(2.0 / 3.0));
    assert!(pr.spans.iter().all(|s| s.succeeded));
}

#[test]
fn react_corrects_a_bad_parameter_from_feedback() {
    let (run, m) = run("buffer-and-map", Paradigm::React);
    let buffers: Vec<CallStatus> =
        run.trajectory.records.iter().filter(|r| r.tool == "buffer_features").map(|r| r.status).collect();
    assert_eq!(buffers, vec![CallStatus::Rejected, CallStatus::Success]);
    assert_eq!(run.trajectory.records[1].error.as_ref().unwrap().category, ErrorCategory::BadParameter);
    assert_eq!(run.trajectory.terminal, Terminal::Completed);
    assert_eq!(m.pea, 1.0);
}

#[test]
fn plan_solve_never_corrects_but_keeps_going() {
    let (run, m) = run("buffer-and-map", Paradigm::PlanSolve);
    let s = statuses(&run);
    assert_eq!(s.len(), 3);
    assert_eq!(s[1], ("buffer_features".into(), CallStatus::Rejected));
    assert_eq!(s[2].0, "render_map", "later steps still run");
    assert_eq!(run.trajectory.terminal, Terminal::Completed);
    assert!(m.pea < 1.0);
    assert!(!m.success);
    let corrected = run.trajectory.records.iter().filter(|r| r.tool == "buffer_features").count();
    assert_eq!(corrected, 1);

    let (pr, _) = self::run("buffer-and-map", Paradigm::PlanReact);
    assert_eq!(pr.trajectory.records.iter().filter(|r| r.tool == "buffer_features").count(), 2);
}

#[test]
fn rigid_plan_records_a_crs_failure_mid_run() {
    let task = suite_task("wells-in-districts");
    let model = ScriptedModel::new(vec![
        ModelTurn::plan(vec![
            PlanStep { description: "copy wells".into(), suggested_tool: Some("copy_layer".into()) },
            PlanStep { description: "clip".into(), suggested_tool: Some("clip_layer".into()) },
            PlanStep { description: "map".into(), suggested_tool: Some("render_map".into()) },
        ])
        .into(),
        ModelTurn::tool_call("copy_layer", args! {"input" => "wells.geojson", "output" => "w.geojson"}).into(),
        ModelTurn::tool_call("clip_layer", args! {"input" => "w.geojson", "mask" => "districts.geojson", "output" => "c.geojson"}).into(),
        ModelTurn::tool_call("render_map", args! {"layers" => vec!["districts.geojson"], "output" => "wells_inside.png"}).into(),
    ]);
    let (run, m) = run_with(&task, Paradigm::PlanSolve, &model, Limits::default());
    let s = statuses(&run);
    assert_eq!(s.iter().map(|x| x.1).collect::<Vec<_>>(), vec![CallStatus::Success, CallStatus::Error, CallStatus::Success]);
    assert_eq!(run.trajectory.records[1].error.as_ref().unwrap().category, ErrorCategory::CrsMismatch);
    assert_eq!(run.trajectory.terminal, Terminal::Completed);
    assert!(m.pea < 1.0);
}

fn drift_model() -> ScriptedModel {
    let think = |t: ModelTurn| ScriptEntry::Turn(t.with_thought("go"));
    ScriptedModel::new(vec![
        think(ModelTurn::tool_call("render_map", args! {"layers" => vec!["districts.geojson"], "output" => "early.png"})),
        think(ModelTurn::tool_call("reproject_layer", args! {"input" => "wells.geojson", "target_crs" => "EPSG:3857", "output" => "w.geojson"})),
        think(ModelTurn::tool_call("clip_layer", args! {"input" => "w.geojson", "mask" => "districts.geojson", "output" => "in.geojson"})),
        think(ModelTurn::tool_call("render_map", args! {"layers" => vec!["districts.geojson", "in.geojson"], "output" => "wells_inside.png"})),
    ])
    .react(
        "Respond with a plan turn",
        ModelTurn::plan(
            ["reproject_layer", "clip_layer", "render_map"]
                .iter()
                .map(|t| PlanStep { description: t.to_string(), suggested_tool: Some(t.to_string()) })
                .collect(),
        ),
    )
}

#[test]
fn plan_react_holds_plan_order_under_goal_drift() {
    let task = suite_task("wells-in-districts");
    let (react, _) = run_with(&task, Paradigm::React, &drift_model(), Limits::default());
    assert_eq!(react.trajectory.tool_names(), vec!["render_map", "reproject_layer", "clip_layer", "render_map"]);
    let (pr, m) = run_with(&task, Paradigm::PlanReact, &drift_model(), Limits::default());
    assert_eq!(pr.trajectory.tool_names(), vec!["reproject_layer", "clip_layer", "render_map"]);
    assert_eq!(pr.spans[0].attempts, 2, "refusal counts as an attempt");
    assert_eq!((m.tem, m.pea), (1.0, 1.0));
}

#[test]
fn immediate_final_answer_scores_zero_order() {
    let task = suite_task("school-density");
    let model = ScriptedModel::new(vec![ModelTurn::final_answer("nothing to do").into()]);
    let (run, m) = run_with(&task, Paradigm::Base, &model, Limits::default());
    assert_eq!(run.trajectory.terminal, Terminal::Completed);
    assert!(run.trajectory.records.is_empty());
    assert_eq!((m.tio, m.tem, m.pea, m.eff), (0.0, 0.0, 0.0, None));
}

#[test]
fn repeated_malformed_turns_abort() {
    let task = suite_task("school-density");
    let model = ScriptedModel::new(vec![ScriptEntry::Raw("I think we should buffer".into()), ScriptEntry::Raw("{\"kind\":\"dance\"}".into())]);
    let (run, _) = run_with(&task, Paradigm::React, &model, Limits::default());
    assert_eq!(run.trajectory.terminal, Terminal::Aborted);
    assert!(matches!(run.failure, Some(AgentFailure::ModelProtocolViolation { .. })));

    let (ps, _) = run_with(&task, Paradigm::PlanSolve, &ScriptedModel::new(vec![]), Limits::default());
    assert!(matches!(ps.failure, Some(AgentFailure::MissingPlan { .. })));
}

#[test]
fn one_corrective_reprompt_is_allowed() {
    let task = suite_task("school-density");
    let gold = task.gold_toolchain.steps.clone();
    let model = ScriptedModel::new(vec![
        ScriptEntry::Raw("```json\nnot json\n```".into()),
        ModelTurn::tool_call(&gold[0].tool, gold[0].args.clone()).into(),
        ModelTurn::tool_call(&gold[1].tool, gold[1].args.clone()).into(),
        ModelTurn::final_answer("done").into(),
    ]);
    let (run, m) = run_with(&task, Paradigm::Base, &model, Limits::default());
    assert_eq!(run.trajectory.terminal, Terminal::Completed);
    assert_eq!(m.pea, 1.0);
}

#[test]
fn runaway_loop_hits_the_step_cap() {
    let task = suite_task("school-density");
    let call = ModelTurn::tool_call("check_geometry", args! {"input" => "districts.geojson"}).with_thought("again");
    let model = ScriptedModel::new(vec![]).react(".", call);
    let (run, m) = run_with(&task, Paradigm::React, &model, Limits { max_steps: 30, call_timeout: 360.0 });
    assert_eq!(run.trajectory.terminal, Terminal::StepCapExceeded);
    assert_eq!(run.trajectory.records.len(), 30);
    assert_eq!(m.eff, None);
}

#[test]
fn gold_follower_is_ideal_under_every_paradigm() {
    for id in ["buffer-and-map", "parcel-repair", "school-density", "flood-area", "wells-in-districts"] {
        let task = suite_task(id);
        for p in Paradigm::ALL {
            let (run, m) = run_with(&task, p, &GoldFollower::new(task.gold_toolchain.steps.clone()), Limits::default());
            assert_eq!(run.trajectory.terminal, Terminal::Completed, "{id} {p}");
            assert_eq!((m.tem, m.pea, m.eff), (1.0, 1.0, Some(1.0)), "{id} {p}");
        }
    }
}
