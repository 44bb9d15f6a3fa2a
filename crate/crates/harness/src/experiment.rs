//! Runs a scenario, checks every applicable bound and collects the verdicts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unisched::accounting::{achieved_cost, average_constraint_bounds, first_residual_violation, time_averages, TimeAverages};
use unisched::bounds::{
    bound_report, constant_b, constant_d, max_slot_terms, model_c0, multihop_c, network_b_d, queue_bound_at, slater_constants,
    BoundReport, SlotCheck,
};
use unisched::internet::{self, run_internet, AllocMode, DelaySpec, InternetModel, InternetState};
use unisched::multihop::{self, run_multihop, verify_capprox, MultihopModel, MultihopPolicy, MultihopState, OptionRule, TransmitMode};
use unisched::oracle::{capped_guarantee, frame_benchmark, frame_guarantee, frame_solutions, verify_slack_guarantee, CostCheck, FrameSolution};
use unisched::{lyapunov, run, ApproximationPolicy, Error, EventSample, SystemModel, Trace};

use crate::scenario::{slater_inputs, FrameSpec, Scenario, System};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// Bound minus observed value at the tightest point.
    pub slack: Option<f64>,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, holds: bool, slack: f64, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            status: if holds { Status::Holds } else { Status::Fails },
            slack: slack.is_finite().then_some(slack),
            detail: detail.into(),
        }
    }

    fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Verdict { name: name.into(), status: Status::Skipped, slack: None, detail: reason.into() }
    }

    fn from_slots(name: &str, check: &SlotCheck, what: &str) -> Self {
        let detail = format!("{what}; max observed {:.6e}, tightest at slot {}", check.max_observed, check.worst_slot);
        Verdict::new(name, check.holds, check.min_slack, detail)
    }

    fn from_cost(name: &str, check: &CostCheck) -> Self {
        let detail = format!("achieved {:.6e}, benchmark {:.6e}, bound {:.6e}", check.lhs, check.benchmark, check.rhs);
        Verdict::new(name, check.holds, check.slack, detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub b: f64,
    pub d: f64,
    pub c: f64,
    /// Analytic ceiling on every queue at the horizon, when one applies.
    pub queue_ceiling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueMaxima {
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    /// Largest `|H_m|`.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    #[serde(rename = "V")]
    pub v: f64,
    pub horizon: usize,
    pub averages: TimeAverages,
    /// `y0 + f(x)` over the horizon. For network models this is minus the
    /// utility.
    pub cost: f64,
    pub utility: Option<f64>,
    pub frame: Option<FrameSpec>,
    pub frame_benchmark: Option<f64>,
    pub constants: Constants,
    pub bounds: Option<BoundReport>,
    pub max_queues: QueueMaxima,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    /// True when no verdict fails. Skipped checks do not count against it.
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fails)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("run failed: {0}")]
    Model(#[from] Error),
    #[error("trace does not fit the scenario: {0}")]
    Trace(String),
}

/// Runs the scenario and returns the general-form trace: network runs are
/// written with their links or node-commodity pairs as queues. `event_id`
/// is the scenario event index; for network models `action` is the chosen
/// option.
pub fn simulate(s: &Scenario) -> Result<Trace, ExperimentError> {
    let v = s.file.v;
    let mut trace = match &s.system {
        System::General { model, initial } => {
            let events = EventSample::sequence(&s.event_ids);
            run(model, &events, v, &s.file.approximation, initial)?
        }
        System::Internet { model, events, delay, alloc } => {
            let tr = run_internet(model, events, v, delay, *alloc, &InternetState::zeros(model))?;
            let mut general = internet::to_general_trace(&tr, model);
            for (g, r) in general.records.iter_mut().zip(&tr.records) {
                g.action = r.option.unwrap_or(0);
            }
            general
        }
        System::Multihop { model, events, policy } => {
            let tr = run_multihop(model, events, v, policy, &MultihopState::zeros(model))?;
            let mut general = multihop::to_general_trace(&tr, model);
            for (g, r) in general.records.iter_mut().zip(&tr.records) {
                g.action = r.transmission.option;
            }
            general
        }
    };
    for (rec, &id) in trace.records.iter_mut().zip(&s.event_ids) {
        rec.event_id = id;
    }
    Ok(trace)
}

/// Simulates and evaluates.
pub fn run_experiment(s: &Scenario) -> Result<(ExperimentReport, Trace), ExperimentError> {
    let trace = simulate(s)?;
    let report = evaluate(s, &trace)?;
    Ok((report, trace))
}

fn maxima(trace: &Trace) -> QueueMaxima {
    let s = &trace.initial;
    let mut m = QueueMaxima { z: s.z.clone(), q: s.q.clone(), h: s.h.iter().map(|h| h.abs()).collect() };
    for r in &trace.records {
        let a = &r.queues_after;
        m.z.iter_mut().zip(&a.z).for_each(|(m, v)| *m = m.max(*v));
        m.q.iter_mut().zip(&a.q).for_each(|(m, v)| *m = m.max(*v));
        m.h.iter_mut().zip(&a.h).for_each(|(m, v)| *m = m.max(v.abs()));
    }
    m
}

fn check_shape(trace: &Trace, horizon: usize, k: usize, l: usize, m: usize) -> Result<(), ExperimentError> {
    if trace.len() != horizon {
        return Err(ExperimentError::Trace(format!("{} slots for a horizon of {horizon}", trace.len())));
    }
    let bad = |s: &unisched::QueueState| s.z.len() != l || s.q.len() != k || s.h.len() != m;
    if bad(&trace.initial)
        || trace.records.iter().any(|r| {
            bad(&r.queues_after) || r.eval.y.len() != l + 1 || r.eval.a.len() != k || r.eval.b.len() != k || r.eval.x.len() != m || r.gamma.len() != m
        })
    {
        return Err(ExperimentError::Trace(format!("dimensions differ from K = {k}, L = {l}, M = {m}")));
    }
    Ok(())
}

fn residual_verdict(trace: &Trace, model: &SystemModel) -> Verdict {
    match first_residual_violation(trace, model) {
        None => Verdict::new("residual_bounds", true, f64::NAN, "every constraint residual within its queue bound at every prefix"),
        Some(r) => Verdict::new("residual_bounds", false, f64::NAN, format!("first violated over slots 0..{}", r.t_end)),
    }
}

fn slot_constants_verdict(model: &SystemModel, trace: &Trace, b: f64, d: f64) -> Verdict {
    let (sb, sd) = max_slot_terms(model, trace);
    let holds = sb <= b + TOL && sd <= d + TOL;
    Verdict::new("slot_constants", holds, (b - sb).min(d - sd), format!("largest slot terms {sb:.6e} <= B = {b:.6e}, {sd:.6e} <= D = {d:.6e}"))
}

fn h_band_verdict(trace: &Trace, band: impl Fn(usize) -> (f64, f64)) -> Verdict {
    let mut slack = f64::INFINITY;
    let mut worst = 0;
    for (t, r) in trace.records.iter().enumerate() {
        for (m, h) in r.queues_after.h.iter().enumerate() {
            let (lo, hi) = band(m);
            let s = (h - lo).min(hi - h);
            if s < slack {
                slack = s;
                worst = t + 1;
            }
        }
    }
    Verdict::new("h_band", slack >= -TOL, slack, format!("-A_max <= H <= V nu + A_max, tightest at slot {worst}"))
}

fn ceiling_verdict(name: &str, trace: &Trace, ceiling: f64, what: &str) -> Verdict {
    let mut check = unisched::bounds::check_constant_bound(trace, ceiling);
    if trace.is_empty() {
        check.min_slack = ceiling;
    }
    Verdict::from_slots(name, &check, &format!("{what} <= {ceiling:.6e}"))
}

fn benchmark_or_skip(
    model: &SystemModel,
    events: &[EventSample],
    frame: FrameSpec,
    budget: u128,
) -> Result<f64, String> {
    match frame_benchmark(model, events, frame.t, frame.r, budget) {
        Ok(b) => Ok(b),
        Err(e @ Error::BudgetExceeded { .. }) => Err(e.to_string()),
        Err(e) => Err(format!("benchmark unavailable: {e}")),
    }
}

/// Recomputes every verdict from the scenario and a general-form trace.
pub fn evaluate(s: &Scenario, trace: &Trace) -> Result<ExperimentReport, ExperimentError> {
    let horizon = s.horizon();
    let frame = s.file.frame;
    let (mut report, verdicts) = match &s.system {
        System::General { model, initial } => {
            check_shape(trace, horizon, model.k, model.l, model.m)?;
            if trace.initial != *initial || trace.records.iter().zip(&s.event_ids).any(|(r, id)| r.event_id != *id) {
                return Err(ExperimentError::Trace("initial state or event sequence differs from the scenario".into()));
            }
            evaluate_general(s, model, trace)?
        }
        System::Internet { model, events, delay, alloc } => {
            check_shape(trace, horizon, 0, model.num_links(), model.sessions.len())?;
            evaluate_internet(s, model, events, delay, *alloc, trace)?
        }
        System::Multihop { model, events, policy } => {
            check_shape(trace, horizon, model.n * model.n, 0, model.sessions.len())?;
            evaluate_multihop(s, model, events, policy, trace)?
        }
    };
    report.verdicts = verdicts;
    report.frame = frame;
    report.max_queues = maxima(trace);
    Ok(report)
}

fn base_report(s: &Scenario, averages: TimeAverages, cost: f64, constants: Constants) -> ExperimentReport {
    ExperimentReport {
        name: s.file.name.clone(),
        kind: s.file.model.kind().into(),
        v: s.file.v,
        horizon: s.horizon(),
        averages,
        cost,
        utility: None,
        frame: None,
        frame_benchmark: None,
        constants,
        bounds: None,
        max_queues: QueueMaxima { z: vec![], q: vec![], h: vec![] },
        verdicts: vec![],
    }
}

fn evaluate_general(s: &Scenario, model: &SystemModel, trace: &Trace) -> Result<(ExperimentReport, Vec<Verdict>), ExperimentError> {
    let (v, n) = (s.file.v, s.horizon());
    let approx = &s.file.approximation;
    let (b, d, c) = (constant_b(model), constant_d(model), approx.c());
    let constant_error = match approx {
        ApproximationPolicy::Exact => true,
        ApproximationPolicy::Approximate { eps_v, eps_z, eps_q, eps_h, .. } => [eps_v, eps_z, eps_q, eps_h].iter().all(|e| **e == 0.0),
    };
    let empty_start = lyapunov(&trace.initial) == 0.0;
    let slater = slater_inputs(&s.file);
    let bounds = bound_report(model, trace, v, approx, s.file.frame.map(|f| f.t), slater)?;
    let c0 = model_c0(model, b, c, v)?;
    let mut verdicts = Vec::new();

    verdicts.push(if constant_error {
        Verdict::from_slots("queue_growth", &bounds.growth, "every queue <= sqrt(t V C0^2 + 2 L0)")
    } else {
        Verdict::skipped("queue_growth", "decision error grows with the queues; the slack bounds apply instead")
    });
    verdicts.push(Verdict::from_slots("slot_drift", &bounds.drift, "one-slot drift <= B + C(t) + V (y0 range + f range)"));
    verdicts.push(slot_constants_verdict(model, trace, b, d));
    verdicts.push(residual_verdict(trace, model));
    verdicts.push(if constant_error && empty_start {
        let r = average_constraint_bounds(trace, model, v, c0, n)?;
        let scale = c0 * (v / n as f64).sqrt();
        let slack = r
            .z
            .iter()
            .chain(&r.q)
            .map(|x| x.bound - x.residual)
            .chain(r.epsilon.iter().map(|e| scale - e.abs()))
            .fold(f64::INFINITY, f64::min);
        Verdict::new("average_constraints", r.all_ok(), slack, format!("time-average residuals within C0 sqrt(V / t_end) = {scale:.6e} terms"))
    } else {
        Verdict::skipped("average_constraints", "needs empty initial queues and a constant decision error")
    });

    let events = EventSample::sequence(&s.event_ids);
    let mut benchmark = None;
    if let Some(f) = s.file.frame {
        match benchmark_or_skip(model, &events, f, s.budget()) {
            Ok(bench) => {
                benchmark = Some(bench);
                verdicts.push(if constant_error {
                    Verdict::from_cost("frame_cost", &frame_guarantee(trace, model, f.t, f.r, v, b, c, d, bench)?)
                } else {
                    Verdict::skipped("frame_cost", "decision error grows with the queues; see slack_cost")
                });
            }
            Err(reason) => verdicts.push(Verdict::skipped("frame_cost", reason)),
        }
    }
    if let Some(inputs) = slater {
        let constants = slater_constants(model, inputs, v, b, c, d)?;
        verdicts.push(match (&bounds.slater_queues, empty_start) {
            (Some(check), true) => Verdict::from_slots("slack_queue_bound", check, "every queue <= V C3 / theta"),
            _ => Verdict::skipped("slack_queue_bound", "needs empty initial queues"),
        });
        if let Some(f) = s.file.frame {
            verdicts.push(match verify_slack_guarantee(trace, model, f.t, f.r, v, c, &constants, s.budget()) {
                Ok(check) => Verdict::from_cost("slack_cost", &check),
                Err(e @ Error::BudgetExceeded { .. }) => Verdict::skipped("slack_cost", e.to_string()),
                Err(e) => return Err(e.into()),
            });
        }
    }

    let ceiling = constant_error.then(|| queue_bound_at(n, v, c0, lyapunov(&trace.initial)));
    let mut report = base_report(s, time_averages(trace, n)?, achieved_cost(trace, model, n)?, Constants { b, d, c, queue_ceiling: ceiling });
    report.frame_benchmark = benchmark;
    report.bounds = Some(bounds);
    Ok((report, verdicts))
}

fn evaluate_internet(
    s: &Scenario,
    model: &InternetModel,
    events: &[unisched::internet::InternetEvent],
    delay: &DelaySpec,
    alloc: AllocMode,
    trace: &Trace,
) -> Result<(ExperimentReport, Vec<Verdict>), ExperimentError> {
    let (v, n) = (s.file.v, s.horizon());
    let bd = model.constant_b_d();
    let mut verdicts = Vec::new();
    let lifted = internet::lift(model, events, 1);
    let tau = delay.tau_max();
    let ceiling = model.z_bound(v) + (tau * model.sessions.len()) as f64 * model.a_max();
    let what = if tau == 0 {
        "every link weight Z <= V nu_max + (M + 1) A_max".to_string()
    } else {
        format!("every link weight Z <= V nu_max + (M + 1) A_max + tau_max M A_max with tau_max = {tau}")
    };

    match &lifted {
        Ok((sys, _)) => {
            verdicts.push(residual_verdict(trace, sys));
            verdicts.push(slot_constants_verdict(sys, trace, bd, bd));
        }
        Err(e) => {
            verdicts.push(Verdict::skipped("residual_bounds", e.to_string()));
            verdicts.push(Verdict::skipped("slot_constants", e.to_string()));
        }
    }
    verdicts.push(h_band_verdict(trace, |m| model.h_band(v, m)));
    verdicts.push(ceiling_verdict("z_ceiling", trace, ceiling, &what));

    let mut benchmark = None;
    if let Some(f) = s.file.frame {
        let verdict = match (&lifted, delay, alloc) {
            (Err(e), _, _) => Verdict::skipped("frame_utility", e.to_string()),
            (_, d, _) if *d != DelaySpec::None => Verdict::skipped("frame_utility", "no utility guarantee is checked under stale link weights"),
            (_, _, AllocMode::Multiplicative { .. }) => {
                Verdict::skipped("frame_utility", "multiplicative allocation is compared with a reduced-capacity benchmark, not checked")
            }
            (Ok((sys, samples)), _, AllocMode::Exact) => match benchmark_or_skip(sys, samples, f, s.budget()) {
                Ok(bench) => {
                    benchmark = Some(bench);
                    let caps: Vec<f64> = (0..model.sessions.len()).map(|m| model.h_band(v, m).1).collect();
                    Verdict::from_cost("frame_utility", &capped_guarantee(trace, sys, f.t, f.r, v, bd, 0.0, bd, bench, &caps)?)
                }
                Err(reason) => Verdict::skipped("frame_utility", reason),
            },
        };
        verdicts.push(verdict);
    }

    let averages = time_averages(trace, n)?;
    let utility = internet::utility(model, &averages.x);
    let mut report = base_report(s, averages, -utility, Constants { b: bd, d: bd, c: 0.0, queue_ceiling: Some(ceiling) });
    report.utility = Some(utility);
    report.frame_benchmark = benchmark.map(|b| -b);
    Ok((report, verdicts))
}

fn evaluate_multihop(
    s: &Scenario,
    model: &MultihopModel,
    events: &[unisched::multihop::TopologyEvent],
    policy: &MultihopPolicy,
    trace: &Trace,
) -> Result<(ExperimentReport, Vec<Verdict>), ExperimentError> {
    let (v, n, nodes) = (s.file.v, s.horizon(), model.n);
    let (b, d) = network_b_d(&model.describe(events));
    let bias = model.bias(&policy.bias)?;
    let qmax = model.qmax(v);
    let capprox = policy.mode == TransmitMode::Capprox;
    let c = if capprox { multihop_c(model.c_sum(events), model.beta_max(), bias.theta_diff()) } else { 0.0 };
    let lifted = multihop::lift(model, events);
    let mut verdicts = Vec::new();

    match &lifted {
        Ok((sys, _)) => {
            verdicts.push(residual_verdict(trace, sys));
            verdicts.push(slot_constants_verdict(sys, trace, b, d));
        }
        Err(e) => {
            verdicts.push(Verdict::skipped("residual_bounds", e.to_string()));
            verdicts.push(Verdict::skipped("slot_constants", e.to_string()));
        }
    }
    verdicts.push(h_band_verdict(trace, |m| model.h_band(v, m)));
    if capprox {
        let mut peak = 0.0f64;
        let mut gap_slack = f64::INFINITY;
        let mut gap_holds = true;
        let mut worst = 0;
        for (t, ev) in events.iter().enumerate() {
            let flat = &trace.state_at(t).q;
            let q: Vec<Vec<f64>> = flat.chunks(nodes).map(|r| r.to_vec()).collect();
            let check = verify_capprox(&q, &ev.options, &bias, qmax, &model.beta, c)?;
            gap_holds &= check.holds;
            let slack = (c - check.gap).min(c / 2.0 - check.intermediate);
            if slack < gap_slack {
                gap_slack = slack;
                worst = t;
            }
            peak = trace.state_at(t + 1).q.iter().cloned().fold(peak, f64::max);
        }
        verdicts.push(Verdict::new(
            "q_ceiling",
            peak <= qmax + TOL,
            qmax - peak,
            format!("every Q <= Qmax = V nu_max + A_max + beta_max = {qmax:.6e}; max observed {peak:.6e}"),
        ));
        verdicts.push(Verdict::new(
            "capprox_gap",
            gap_holds,
            gap_slack,
            format!("gated max-weight within C = {c:.6e} of exact at every slot, tightest at slot {worst}"),
        ));
    } else {
        verdicts.push(Verdict::skipped("q_ceiling", "the ceiling holds for the gated policy only"));
        verdicts.push(Verdict::skipped("capprox_gap", "exact max-weight in use"));
    }

    let mut benchmark = None;
    if let Some(f) = s.file.frame {
        let verdict = match &lifted {
            Err(e) => Verdict::skipped("frame_utility", e.to_string()),
            Ok(_) if !matches!(policy.rule, OptionRule::MaxWeight) => {
                Verdict::skipped("frame_utility", "the option rule is not an approximate max-weight choice")
            }
            Ok((sys, samples)) => match benchmark_or_skip(sys, samples, f, s.budget()) {
                Ok(bench) => {
                    benchmark = Some(bench);
                    let caps: Vec<f64> = (0..model.sessions.len()).map(|m| model.h_band(v, m).1).collect();
                    Verdict::from_cost("frame_utility", &capped_guarantee(trace, sys, f.t, f.r, v, b, c, d, bench, &caps)?)
                }
                Err(reason) => Verdict::skipped("frame_utility", reason),
            },
        };
        verdicts.push(verdict);
    }

    let averages = time_averages(trace, n)?;
    let utility = multihop::utility(model, &averages.x);
    let ceiling = capprox.then_some(qmax);
    let mut report = base_report(s, averages, -utility, Constants { b, d, c, queue_ceiling: ceiling });
    report.utility = Some(utility);
    report.frame_benchmark = benchmark.map(|b| -b);
    Ok((report, verdicts))
}

/// One row of a V sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "V")]
    pub v: f64,
    /// `ok`, or the error that stopped this row.
    pub status: String,
    pub cost: Option<f64>,
    pub utility: Option<f64>,
    pub frame_benchmark: Option<f64>,
    pub max_queue: Option<f64>,
    pub queue_ceiling: Option<f64>,
    pub all_hold: Option<bool>,
}

/// Runs the scenario once per `V`, concurrently. Rows keep the input order.
pub fn sweep_v(s: &Scenario, vs: &[f64]) -> Vec<SweepRow> {
    vs.par_iter()
        .map(|&v| {
            let mut file = s.file.clone();
            file.v = v;
            let row = crate::scenario::build(file)
                .map_err(|e| e.to_string())
                .and_then(|sc| run_experiment(&sc).map_err(|e| e.to_string()));
            match row {
                Ok((r, _)) => SweepRow {
                    v,
                    status: "ok".into(),
                    cost: Some(r.cost),
                    utility: r.utility,
                    frame_benchmark: r.frame_benchmark,
                    max_queue: Some(r.max_queues.z.iter().chain(&r.max_queues.q).chain(&r.max_queues.h).cloned().fold(0.0, f64::max)),
                    queue_ceiling: r.constants.queue_ceiling,
                    all_hold: Some(r.all_hold()),
                },
                Err(e) => SweepRow {
                    v,
                    status: e,
                    cost: None,
                    utility: None,
                    frame_benchmark: None,
                    max_queue: None,
                    queue_ceiling: None,
                    all_hold: None,
                },
            }
        })
        .collect()
}

/// Objective over each prefix `0..t`: the cost `y0 + f(x)` for general
/// models, the utility for network models.
pub fn running_objective(s: &Scenario, trace: &Trace) -> Vec<f64> {
    let m = trace.initial.h.len();
    let mut x = vec![0.0; m];
    let mut y0 = 0.0;
    let mut out = Vec::with_capacity(trace.len());
    for (i, r) in trace.records.iter().enumerate() {
        x.iter_mut().zip(&r.eval.x).for_each(|(s, v)| *s += v);
        y0 += r.eval.y[0];
        let n = (i + 1) as f64;
        let mean: Vec<f64> = x.iter().map(|s| s / n).collect();
        out.push(match &s.system {
            System::General { model, .. } => y0 / n + model.cost.f.eval(&mean),
            System::Internet { model, .. } => internet::utility(model, &mean),
            System::Multihop { model, .. } => multihop::utility(model, &mean),
        });
    }
    out
}

/// Per-frame optimal solutions. Network models are solved on their lifted
/// form, so `f_star` is minus the frame utility there.
pub fn frame_table(s: &Scenario) -> Result<Vec<FrameSolution>, ExperimentError> {
    let f = s.file.frame.ok_or_else(|| Error::Precondition("the oracle needs a frame (T and R)".into()))?;
    let sols = match &s.system {
        System::General { model, .. } => frame_solutions(model, &EventSample::sequence(&s.event_ids), f.t, f.r, s.budget())?,
        System::Internet { model, events, .. } => {
            let (sys, samples) = internet::lift(model, events, 1)?;
            frame_solutions(&sys, &samples, f.t, f.r, s.budget())?
        }
        System::Multihop { model, events, .. } => {
            let (sys, samples) = multihop::lift(model, events)?;
            frame_solutions(&sys, &samples, f.t, f.r, s.budget())?
        }
    };
    Ok(sols)
}
