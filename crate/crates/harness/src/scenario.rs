//! Scenario files: JSON schema, overrides and validation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unisched::bounds::SlaterInputs;
use unisched::internet::{AllocMode, DelaySpec, FlowNetwork, InternetEvent, InternetModel, Session};
use unisched::model::AttributeBounds;
use unisched::multihop::{MultihopModel, MultihopPolicy, MultihopSession, RateMatrix, TopologyEvent, TransmitMode};
use unisched::oracle::{MarkovSpec, DEFAULT_BUDGET};
use unisched::rng::CounterRng;
use unisched::{ApproximationPolicy, CatalogEntry, CostConfig, Error, QueueState, SystemModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("assumption A1 (bounded attributes) violated: {0}")]
    Boundedness(String),
    #[error("assumption A2 (a feasible action for every event) violated: event {event} has no action meeting every constraint")]
    Feasibility { event: usize },
    #[error("assumption A3 (uniform slack {delta}) violated: event {event} has no action with that margin")]
    Slack { event: usize, delta: f64 },
}

fn invalid(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    /// Frame length.
    pub t: usize,
    /// Number of frames.
    pub r: usize,
}

/// Where the per-slot event indices come from. For network models the index
/// points into the scenario's `states` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSource {
    Explicit { ids: Vec<usize> },
    /// Independent draws; uniform when `weights` is absent.
    Iid {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Markov { transition: Vec<Vec<f64>>, initial: usize, seed: u64 },
}

impl EventSource {
    fn set_seed(&mut self, new: u64) {
        match self {
            EventSource::Explicit { .. } => {}
            EventSource::Iid { seed, .. } | EventSource::Markov { seed, .. } => *seed = new,
        }
    }

    fn sample(&self, catalog_len: usize, horizon: usize) -> Result<Vec<usize>, ScenarioError> {
        match self {
            EventSource::Explicit { ids } => {
                if let Some(bad) = ids.iter().find(|&&id| id >= catalog_len) {
                    return Err(invalid(format!("event id {bad} but only {catalog_len} events are defined")));
                }
                Ok(ids[..horizon].to_vec())
            }
            EventSource::Iid { seed, weights } => {
                let rng = CounterRng::new(*seed);
                match weights {
                    None => Ok((0..horizon).map(|t| rng.index_at(0, t as u64, catalog_len)).collect()),
                    Some(w) => {
                        if w.len() != catalog_len || w.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || w.iter().sum::<f64>() <= 0.0 {
                            return Err(invalid(format!("event weights must be {catalog_len} non-negative numbers with a positive sum")));
                        }
                        Ok((0..horizon).map(|t| rng.weighted_at(0, t as u64, w)).collect())
                    }
                }
            }
            EventSource::Markov { transition, initial, seed } => {
                let chain = MarkovSpec { transition: transition.clone(), initial: *initial, seed: *seed };
                chain.validate(catalog_len).map_err(invalid)?;
                Ok(chain.sample(horizon).into_iter().map(|e| e.event_id).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    General {
        catalog: Vec<CatalogEntry>,
        #[serde(default)]
        cost: CostConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<AttributeBounds>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<QueueState>,
    },
    Internet {
        network: FlowNetwork,
        sessions: Vec<Session>,
        states: Vec<InternetEvent>,
        #[serde(default)]
        delay: DelaySpec,
        #[serde(default)]
        alloc: AllocMode,
    },
    Multihop {
        mu_max: RateMatrix,
        sessions: Vec<MultihopSession>,
        states: Vec<TopologyEvent>,
        #[serde(default)]
        policy: MultihopPolicy,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::General { .. } => "general",
            ModelSpec::Internet { .. } => "internet",
            ModelSpec::Multihop { .. } => "multihop",
        }
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub events: EventSource,
    /// Number of slots. Defaults to `R T` with a frame, or to the explicit
    /// list length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u128>,
    /// Decision error of the general algorithm.
    #[serde(default)]
    pub approximation: ApproximationPolicy,
    /// Uniform slack `delta` claimed for every event (general models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
    }

    pub fn budget(&self) -> u128 {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }
}

/// Decision mode chosen on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Capprox,
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub v: Option<f64>,
    pub t: Option<usize>,
    pub r: Option<usize>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub budget: Option<u128>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) -> Result<(), ScenarioError> {
        if let Some(v) = self.v {
            file.v = v;
        }
        if self.t.is_some() || self.r.is_some() {
            let old = file.frame;
            let t = self.t.or(old.map(|f| f.t)).ok_or_else(|| invalid("--R needs a frame length from --T or the scenario"))?;
            let r = self.r.or(old.map(|f| f.r)).ok_or_else(|| invalid("--T needs a frame count from --R or the scenario"))?;
            file.frame = Some(FrameSpec { t, r });
            if !matches!(file.events, EventSource::Explicit { .. }) {
                file.horizon = None;
            }
        }
        if let Some(seed) = self.seed {
            file.events.set_seed(seed);
        }
        if let Some(b) = self.budget {
            file.budget = Some(b);
        }
        match (self.mode, &mut file.model) {
            (Some(Mode::Exact), ModelSpec::General { .. }) => file.approximation = ApproximationPolicy::Exact,
            (Some(Mode::Exact), ModelSpec::Multihop { policy, .. }) => policy.mode = TransmitMode::Exact,
            (Some(Mode::Capprox), ModelSpec::Multihop { policy, .. }) => policy.mode = TransmitMode::Capprox,
            (Some(Mode::Exact), ModelSpec::Internet { alloc, .. }) => *alloc = AllocMode::Exact,
            _ => {}
        }
        Ok(())
    }
}

/// A built and validated model.
#[derive(Debug, Clone)]
pub enum System {
    General { model: SystemModel, initial: QueueState },
    Internet { model: InternetModel, events: Vec<InternetEvent>, delay: DelaySpec, alloc: AllocMode },
    Multihop { model: MultihopModel, events: Vec<TopologyEvent>, policy: MultihopPolicy },
}

/// A validated scenario with its realized event sequence.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub system: System,
    /// Per-slot index into the catalog (general) or the state list.
    pub event_ids: Vec<usize>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.event_ids.len()
    }

    pub fn budget(&self) -> u128 {
        self.file.budget()
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    build(ScenarioFile::read(path)?)
}

/// Like [`load_scenario`], with command-line overrides applied first.
pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut file = ScenarioFile::read(path)?;
    overrides.apply(&mut file)?;
    build(file)
}

fn horizon_of(file: &ScenarioFile) -> Result<usize, ScenarioError> {
    let framed = file.frame.map(|f| f.t * f.r);
    if let Some(f) = file.frame {
        if f.t == 0 || f.r == 0 {
            return Err(invalid("frame T and R must be positive"));
        }
    }
    let listed = match &file.events {
        EventSource::Explicit { ids } => Some(ids.len()),
        _ => None,
    };
    let horizon = file
        .horizon
        .or(framed)
        .or(listed)
        .ok_or_else(|| invalid("horizon is required for generated events without a frame"))?;
    if horizon == 0 {
        return Err(invalid("horizon must be at least one slot"));
    }
    if let Some(n) = framed {
        if n != horizon {
            return Err(invalid(format!("horizon {horizon} differs from R T = {n}")));
        }
    }
    if let Some(n) = listed {
        if n < horizon {
            return Err(invalid(format!("{n} explicit events for a horizon of {horizon}")));
        }
    }
    Ok(horizon)
}

fn model_error(e: Error) -> ScenarioError {
    match e {
        Error::NoFeasibleAction { event } => ScenarioError::Feasibility { event },
        Error::NoSlackAction { event, delta } => ScenarioError::Slack { event, delta },
        Error::ModelInvariant(s) | Error::Domain(s) => ScenarioError::Boundedness(s),
        other => invalid(other),
    }
}

/// Validates a parsed file: dimensions, boundedness, per-event feasibility
/// and, when a slack is claimed, the slack condition.
pub fn build(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::SchemaVersion(file.schema_version));
    }
    if !(file.v > 0.0) || !file.v.is_finite() {
        return Err(invalid(format!("V must be positive and finite, got {}", file.v)));
    }
    let horizon = horizon_of(&file)?;
    let (system, catalog_len) = match &file.model {
        ModelSpec::General { catalog, cost, bounds, initial } => {
            let model = SystemModel::new(catalog.clone(), cost.clone(), bounds.clone()).map_err(model_error)?;
            if let Some(delta) = file.slack {
                model.verify_slater(delta).map_err(model_error)?;
            }
            let initial = initial.clone().unwrap_or_else(|| QueueState::for_model(&model));
            initial.validate().map_err(invalid)?;
            if initial.slot != 0 || initial.z.len() != model.l || initial.q.len() != model.k || initial.h.len() != model.m {
                return Err(invalid("initial queue state does not match the model dimensions"));
            }
            if initial.z.iter().chain(&initial.q).any(|v| *v < 0.0) {
                return Err(invalid("initial Z and Q must be non-negative"));
            }
            let len = model.catalog.len();
            (System::General { model, initial }, len)
        }
        ModelSpec::Internet { network, sessions, states, delay, alloc } => {
            if file.slack.is_some() {
                return Err(invalid("a slack claim applies to general models only"));
            }
            let model = InternetModel::new(network.clone(), sessions.clone()).map_err(model_error)?;
            for s in states {
                model.validate_event(s).map_err(model_error)?;
            }
            delay.validate(model.num_links()).map_err(invalid)?;
            if let AllocMode::Multiplicative { theta } = alloc {
                if !(*theta > 0.0 && *theta <= 1.0) {
                    return Err(invalid(format!("allocation factor theta must be in (0, 1], got {theta}")));
                }
            }
            let sys = System::Internet { model, events: Vec::new(), delay: delay.clone(), alloc: *alloc };
            (sys, states.len())
        }
        ModelSpec::Multihop { mu_max, sessions, states, policy } => {
            if file.slack.is_some() {
                return Err(invalid("a slack claim applies to general models only"));
            }
            let model = MultihopModel::new(mu_max.clone(), sessions.clone()).map_err(model_error)?;
            for s in states {
                model.validate_event(s).map_err(model_error)?;
            }
            model.bias(&policy.bias).map_err(invalid)?;
            (System::Multihop { model, events: Vec::new(), policy: policy.clone() }, states.len())
        }
    };
    if catalog_len == 0 {
        return Err(invalid("no events are defined"));
    }
    let event_ids = file.events.sample(catalog_len, horizon)?;
    let system = match (system, &file.model) {
        (System::Internet { model, delay, alloc, .. }, ModelSpec::Internet { states, .. }) => {
            let events = event_ids.iter().map(|&i| states[i].clone()).collect();
            System::Internet { model, events, delay, alloc }
        }
        (System::Multihop { model, policy, .. }, ModelSpec::Multihop { states, .. }) => {
            let events = event_ids.iter().map(|&i| states[i].clone()).collect();
            System::Multihop { model, events, policy }
        }
        (s, _) => s,
    };
    Ok(Scenario { file, system, event_ids })
}

/// Slack inputs for the general model: the claimed `delta` with the error
/// rates of the approximation policy.
pub fn slater_inputs(file: &ScenarioFile) -> Option<SlaterInputs> {
    let delta = file.slack?;
    let (eps_v, eps_z, eps_q, eps_h) = match file.approximation {
        ApproximationPolicy::Exact => (0.0, 0.0, 0.0, 0.0),
        ApproximationPolicy::Approximate { eps_v, eps_z, eps_q, eps_h, .. } => (eps_v, eps_z, eps_q, eps_h),
    };
    Some(SlaterInputs { delta, eps_v, eps_z, eps_q, eps_h })
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDLE: &str = r#"{
        "schema_version": 1,
        "model": { "kind": "general", "catalog": [ { "actions": [ { "a": [], "b": [], "x": [], "y": [0.0] } ] } ] },
        "events": { "kind": "explicit", "ids": [0] },
        "V": 1.0
    }"#;

    #[test]
    fn idle_file_builds() {
        let s = build(ScenarioFile::parse(IDLE).unwrap()).unwrap();
        assert_eq!(s.horizon(), 1);
        match &s.system {
            System::General { model, .. } => assert_eq!((model.catalog.len(), model.max_actions()), (1, 1)),
            _ => panic!("expected a general model"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ScenarioFile::parse("{\n  \"schema_version\": 1,\n  \"V\": true\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }), "{err}");
        let err = ScenarioFile::parse(&IDLE.replace("\"V\"", "\"Vee\"")).unwrap_err();
        assert!(err.to_string().contains("Vee"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let f = ScenarioFile::parse(&IDLE.replace("\"schema_version\": 1", "\"schema_version\": 7")).unwrap();
        assert!(matches!(build(f), Err(ScenarioError::SchemaVersion(7))));
    }

    #[test]
    fn infeasible_event_names_a2() {
        let text = IDLE.replace(r#""a": [], "b": [], "x": [], "y": [0.0]"#, r#""a": [1.0], "b": [0.0], "x": [], "y": [0.0]"#);
        let err = build(ScenarioFile::parse(&text).unwrap()).unwrap_err();
        assert!(matches!(err, ScenarioError::Feasibility { event: 0 }));
        assert!(err.to_string().contains("A2"));
    }

    #[test]
    fn missing_slack_names_a3() {
        let text = IDLE
            .replace(r#""a": [], "b": [], "x": [], "y": [0.0]"#, r#""a": [1.0], "b": [1.0], "x": [], "y": [0.0]"#)
            .replace(r#""V": 1.0"#, r#""V": 1.0, "slack": 0.5"#);
        let err = build(ScenarioFile::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("A3"), "{err}");
    }

    #[test]
    fn non_finite_attribute_names_a1() {
        let mut f = ScenarioFile::parse(IDLE).unwrap();
        if let ModelSpec::General { catalog, .. } = &mut f.model {
            catalog[0].actions[0].y[0] = f64::INFINITY;
        }
        let err = build(f).unwrap_err();
        assert!(err.to_string().contains("A1"), "{err}");
    }

    #[test]
    fn horizon_must_match_frames() {
        let text = IDLE.replace(r#""V": 1.0"#, r#""V": 1.0, "horizon": 1, "frame": { "t": 2, "r": 2 }"#);
        assert!(matches!(build(ScenarioFile::parse(&text).unwrap()), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn generated_events_are_reproducible() {
        let text = IDLE.replace(r#"{ "kind": "explicit", "ids": [0] }"#, r#"{ "kind": "iid", "seed": 9 }"#).replace(r#""V": 1.0"#, r#""V": 1.0, "horizon": 40"#);
        let a = build(ScenarioFile::parse(&text).unwrap()).unwrap();
        let b = build(ScenarioFile::parse(&text).unwrap()).unwrap();
        assert_eq!(a.event_ids, b.event_ids);
        assert_eq!(a.file, b.file);
    }

    #[test]
    fn overrides_replace_fields() {
        let mut f = ScenarioFile::parse(IDLE).unwrap();
        f.events = EventSource::Iid { seed: 1, weights: None };
        let o = Overrides { v: Some(3.0), t: Some(2), r: Some(5), seed: Some(4), ..Overrides::default() };
        o.apply(&mut f).unwrap();
        assert_eq!(f.v, 3.0);
        assert_eq!(f.frame, Some(FrameSpec { t: 2, r: 5 }));
        assert_eq!(f.events, EventSource::Iid { seed: 4, weights: None });
        assert_eq!(build(f).unwrap().horizon(), 10);
    }
}
