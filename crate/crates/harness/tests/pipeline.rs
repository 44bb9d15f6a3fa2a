use std::fs;
use std::path::PathBuf;

use unisched::{QueueState, Trace};
use unisched_harness::experiment::{evaluate, run_experiment, running_objective, sweep_v, Status};
use unisched_harness::output::{emit_outputs, read_report, read_trace, trace_header, write_report, write_sweep, write_trace, REPORT_FILE, TRACE_FILE};
use unisched_harness::scenario::{load_scenario, load_with, Overrides, System};

const EXAMPLES: [&str; 5] = ["idle", "on_off_queue", "slack", "internet_triangle", "multihop_line"];

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn initial_of(s: &unisched_harness::Scenario) -> QueueState {
    match &s.system {
        System::General { initial, .. } => initial.clone(),
        System::Internet { model, .. } => QueueState::zeros(0, model.num_links(), model.sessions.len()),
        System::Multihop { model, .. } => QueueState::zeros(model.n * model.n, 0, model.sessions.len()),
    }
}

#[test]
fn idle_scenario_has_no_failing_verdict() {
    let s = load_scenario(&scenario_path("idle")).unwrap();
    let (report, trace) = run_experiment(&s).unwrap();
    assert_eq!(trace.len(), 3);
    assert_eq!(report.cost, 0.0);
    assert!(report.verdicts.iter().all(|v| v.status == Status::Holds), "{:?}", report.verdicts);
}

#[test]
fn every_example_scenario_holds() {
    for name in EXAMPLES {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let (report, _) = run_experiment(&s).unwrap();
        assert!(report.all_hold(), "{name}: {:?}", report.verdicts);
        assert!(report.verdicts.iter().any(|v| v.status == Status::Holds), "{name}");
    }
}

#[test]
fn trace_csv_replays_to_the_same_report() {
    for name in EXAMPLES {
        let s = load_scenario(&scenario_path(name)).unwrap();
        let (report, trace) = run_experiment(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(dir.path(), &report, &trace, &running_objective(&s, &trace)).unwrap();
        let back = read_trace(&dir.path().join(TRACE_FILE), &initial_of(&s)).unwrap();
        assert_eq!(back, trace, "{name}");
        assert_eq!(evaluate(&s, &back).unwrap(), report, "{name}");
        assert_eq!(read_report(&dir.path().join(REPORT_FILE)).unwrap(), report, "{name}");
    }
}

#[test]
fn reruns_write_byte_identical_traces() {
    let s = load_scenario(&scenario_path("multihop_line")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let (_, trace) = run_experiment(&s).unwrap();
        let p = dir.path().join(format!("t{i}.csv"));
        write_trace(&p, &trace).unwrap();
        bytes.push(fs::read(p).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn empty_trace_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    let initial = QueueState::zeros(2, 1, 1);
    write_trace(&p, &Trace { initial: initial.clone(), records: Vec::new() }).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text, trace_header(2, 1, 1).join(",") + "\n");
    assert_eq!(read_trace(&p, &initial).unwrap().len(), 0);
}

#[test]
fn ten_slots_give_ten_rows_of_fixed_width() {
    let over = Overrides { seed: Some(3), ..Overrides::default() };
    let mut s = load_with(&scenario_path("on_off_queue"), &over).unwrap();
    s.event_ids.truncate(10);
    let (_, trace) = run_experiment(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_trace(&p, &trace).unwrap();
    let text = fs::read_to_string(p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    let width = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == width));
}

#[test]
fn single_v_sweep_matches_a_direct_run() {
    let s = load_scenario(&scenario_path("on_off_queue")).unwrap();
    let (report, _) = run_experiment(&s).unwrap();
    let rows = sweep_v(&s, &[s.file.v]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "ok");
    assert_eq!(rows[0].cost, Some(report.cost));
    assert_eq!(rows[0].all_hold, Some(report.all_hold()));
    assert!(sweep_v(&s, &[]).is_empty());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sweep.csv");
    write_sweep(&p, &[]).unwrap();
    assert_eq!(fs::read_to_string(p).unwrap().lines().count(), 1);
}

#[test]
fn internet_ceiling_grows_linearly_in_v_and_is_respected() {
    let s = load_scenario(&scenario_path("internet_triangle")).unwrap();
    let rows = sweep_v(&s, &[1.0, 2.0, 4.0, 8.0]);
    let c: Vec<f64> = rows.iter().map(|r| r.queue_ceiling.unwrap()).collect();
    for w in c.windows(3) {
        assert!(((w[2] - w[1]) - 2.0 * (w[1] - w[0])).abs() < 1e-9, "{c:?}");
    }
    for r in &rows {
        assert!(r.max_queue.unwrap() <= r.queue_ceiling.unwrap() + 1e-9);
        assert_eq!(r.all_hold, Some(true));
    }
}

#[test]
fn report_json_round_trips_losslessly() {
    let s = load_scenario(&scenario_path("slack")).unwrap();
    let (report, _) = run_experiment(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    write_report(&p, &report).unwrap();
    let back = read_report(&p).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.cost.to_bits(), report.cost.to_bits());
}

#[test]
fn approximate_decisions_keep_their_bounds() {
    let s = load_scenario(&scenario_path("slack")).unwrap();
    let (report, trace) = run_experiment(&s).unwrap();
    assert!(trace.records.iter().any(|r| r.decision_gap > 0.0) || report.constants.c > 0.0);
    assert!(report.all_hold(), "{:?}", report.verdicts);
}

#[test]
fn small_budget_skips_the_frame_cost_check() {
    let over = Overrides { budget: Some(1), ..Overrides::default() };
    let s = load_with(&scenario_path("on_off_queue"), &over).unwrap();
    let (report, _) = run_experiment(&s).unwrap();
    let v = report.verdicts.iter().find(|v| v.name == "frame_cost").unwrap();
    assert_eq!(v.status, Status::Skipped);
    assert!(report.all_hold());
}
