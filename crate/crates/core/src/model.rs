//! Problem instances, queue state and per-slot records.

use serde::{Deserialize, Serialize};

use crate::cost::{AuxHook, CostFn, CostSpec, Interval};
use crate::error::{ensure_finite, Error, Result};

/// Slack used by every feasibility and bound comparison.
pub const TOL: f64 = 1e-9;

/// The random event observed on one slot. Model-specific payloads live in the
/// catalog entry the id points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSample {
    pub slot: usize,
    pub event_id: usize,
}

impl EventSample {
    /// Numbers a sequence of catalog ids by slot.
    pub fn sequence(ids: &[usize]) -> Vec<EventSample> {
        ids.iter().enumerate().map(|(slot, &event_id)| EventSample { slot, event_id }).collect()
    }
}

/// Attribute values of one action under one event. `y[0]` is the cost term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEvaluation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AttributeEvaluation {
    pub fn idle(k: usize, l: usize, m: usize) -> Self {
        AttributeEvaluation { a: vec![0.0; k], b: vec![0.0; k], x: vec![0.0; m], y: vec![0.0; l + 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub actions: Vec<AttributeEvaluation>,
}

/// Cost functions as written in a scenario, before the box is known.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(default)]
    pub f: CostFn,
    #[serde(default)]
    pub g: Vec<CostFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_set: Option<Vec<Interval>>,
}

/// Boundedness constants for the attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBounds {
    pub a_max: Vec<f64>,
    pub b_max: Vec<f64>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    /// Length `L + 1`.
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
}

impl AttributeBounds {
    /// The tightest bounds containing every catalog value. Empty ranges in
    /// `x` are kept degenerate.
    pub fn from_catalog(catalog: &[CatalogEntry]) -> Result<Self> {
        let first = catalog
            .iter()
            .flat_map(|e| e.actions.first())
            .next()
            .ok_or_else(|| Error::ModelInvariant("catalog has no actions".into()))?;
        let (k, m, l1) = (first.a.len(), first.x.len(), first.y.len());
        let mut bounds = AttributeBounds {
            a_max: vec![0.0; k],
            b_max: vec![0.0; k],
            x_min: vec![f64::INFINITY; m],
            x_max: vec![f64::NEG_INFINITY; m],
            y_min: vec![f64::INFINITY; l1],
            y_max: vec![f64::NEG_INFINITY; l1],
        };
        for ev in catalog.iter().flat_map(|e| &e.actions) {
            check_dims(ev, k, l1, m)?;
            for i in 0..k {
                bounds.a_max[i] = bounds.a_max[i].max(ev.a[i]);
                bounds.b_max[i] = bounds.b_max[i].max(ev.b[i]);
            }
            for i in 0..m {
                bounds.x_min[i] = bounds.x_min[i].min(ev.x[i]);
                bounds.x_max[i] = bounds.x_max[i].max(ev.x[i]);
            }
            for i in 0..l1 {
                bounds.y_min[i] = bounds.y_min[i].min(ev.y[i]);
                bounds.y_max[i] = bounds.y_max[i].max(ev.y[i]);
            }
        }
        Ok(bounds)
    }

    fn contains(&self, ev: &AttributeEvaluation) -> bool {
        let inside = |v: f64, lo: f64, hi: f64| v >= lo - TOL && v <= hi + TOL;
        (0..ev.a.len()).all(|i| inside(ev.a[i], 0.0, self.a_max[i]) && inside(ev.b[i], 0.0, self.b_max[i]))
            && (0..ev.x.len()).all(|i| inside(ev.x[i], self.x_min[i], self.x_max[i]))
            && (0..ev.y.len()).all(|i| inside(ev.y[i], self.y_min[i], self.y_max[i]))
    }
}

fn check_dims(ev: &AttributeEvaluation, k: usize, l1: usize, m: usize) -> Result<()> {
    if ev.a.len() != k || ev.b.len() != k || ev.x.len() != m || ev.y.len() != l1 {
        return Err(Error::Config(format!(
            "attribute dimensions (a {}, b {}, x {}, y {}) do not match K = {k}, M = {m}, L + 1 = {l1}",
            ev.a.len(),
            ev.b.len(),
            ev.x.len(),
            ev.y.len()
        )));
    }
    ensure_finite("attribute", &ev.a)?;
    ensure_finite("attribute", &ev.b)?;
    ensure_finite("attribute", &ev.x)?;
    ensure_finite("attribute", &ev.y)?;
    if ev.a.iter().chain(&ev.b).any(|v| *v < 0.0) {
        return Err(Error::ModelInvariant("arrivals and services must be non-negative".into()));
    }
    Ok(())
}

/// One problem instance: finite action lists per event, attribute values,
/// cost functions and boundedness constants.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub catalog: Vec<CatalogEntry>,
    pub cost: CostSpec,
    pub bounds: AttributeBounds,
}

impl SystemModel {
    /// Builds and validates a model. When `bounds` is `None` the tightest
    /// bounds are derived from the catalog; explicit bounds may be wider.
    /// Fails if some event has no action meeting every constraint on its own.
    pub fn new(catalog: Vec<CatalogEntry>, cost: CostConfig, bounds: Option<AttributeBounds>) -> Result<Self> {
        if catalog.is_empty() {
            return Err(Error::ModelInvariant("event catalog is empty".into()));
        }
        if let Some(i) = catalog.iter().position(|e| e.actions.is_empty()) {
            return Err(Error::ModelInvariant(format!("event {i} has no actions")));
        }
        let derived = AttributeBounds::from_catalog(&catalog)?;
        let bounds = match bounds {
            None => derived,
            Some(b) => {
                let (k, m, l1) = (derived.a_max.len(), derived.x_min.len(), derived.y_min.len());
                if b.a_max.len() != k
                    || b.b_max.len() != k
                    || b.x_min.len() != m
                    || b.x_max.len() != m
                    || b.y_min.len() != l1
                    || b.y_max.len() != l1
                {
                    return Err(Error::Config("bound vectors do not match catalog dimensions".into()));
                }
                for v in [&b.a_max, &b.b_max, &b.x_min, &b.x_max, &b.y_min, &b.y_max] {
                    ensure_finite("bound", v)?;
                }
                for (i, e) in catalog.iter().enumerate() {
                    if let Some(j) = e.actions.iter().position(|ev| !b.contains(ev)) {
                        return Err(Error::ModelInvariant(format!(
                            "event {i} action {j} lies outside the declared attribute bounds"
                        )));
                    }
                }
                b
            }
        };
        let (k, m, l) = (bounds.a_max.len(), bounds.x_min.len(), bounds.y_min.len() - 1);
        if cost.g.len() != l {
            return Err(Error::Config(format!("{} constraint functions for L = {l}", cost.g.len())));
        }
        let boxes = bounds.x_min.iter().zip(&bounds.x_max).map(|(lo, hi)| Interval::new(*lo, *hi)).collect();
        let cost = CostSpec::new(cost.f, cost.g, boxes, cost.x_set)?;
        let model = SystemModel { k, l, m, catalog, cost, bounds };
        for id in 0..model.catalog.len() {
            if model.feasible_action(id).is_none() {
                return Err(Error::NoFeasibleAction { event: id });
            }
        }
        Ok(model)
    }

    pub fn with_aux_hook(mut self, hook: AuxHook) -> Self {
        self.cost.minimizer = Some(hook);
        self
    }

    pub fn actions(&self, event_id: usize) -> Result<&[AttributeEvaluation]> {
        self.catalog
            .get(event_id)
            .map(|e| e.actions.as_slice())
            .ok_or_else(|| Error::OutOfRange(format!("event id {event_id} (catalog has {})", self.catalog.len())))
    }

    pub fn eval(&self, event_id: usize, action: usize) -> Result<&AttributeEvaluation> {
        self.actions(event_id)?
            .get(action)
            .ok_or_else(|| Error::OutOfRange(format!("action {action} for event {event_id}")))
    }

    /// Lowest-index action that satisfies every constraint on its own.
    pub fn feasible_action(&self, event_id: usize) -> Option<usize> {
        self.slack_action(event_id, 0.0)
    }

    /// Lowest-index action meeting every constraint with margin `delta`,
    /// including `x +- delta` staying inside the feasible set and the box.
    pub fn slack_action(&self, event_id: usize, delta: f64) -> Option<usize> {
        let feas = self.cost.feasible_box();
        self.catalog[event_id].actions.iter().position(|ev| {
            let g = self.cost.g_eval(&ev.x);
            (0..self.l).all(|l| ev.y[l + 1] + g[l] <= -delta + TOL)
                && (0..self.k).all(|k| ev.a[k] <= ev.b[k] - delta + TOL)
                && if delta == 0.0 {
                    self.cost.in_x_set(&ev.x, TOL)
                } else {
                    (0..self.m).all(|m| ev.x[m] - delta >= feas[m].lo - TOL && ev.x[m] + delta <= feas[m].hi + TOL)
                }
        })
    }

    /// Checks the uniform-slack condition for every catalog event.
    pub fn verify_slater(&self, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Err(Error::Precondition("slack delta must be positive".into()));
        }
        match (0..self.catalog.len()).find(|&id| self.slack_action(id, delta).is_none()) {
            Some(event) => Err(Error::NoSlackAction { event, delta }),
            None => Ok(()),
        }
    }

    /// Largest `delta` such that every event has an action with slack
    /// `delta`, found by enumeration. Non-positive when there is none.
    pub fn max_slack(&self) -> f64 {
        let feas = self.cost.feasible_box();
        let slack = |ev: &AttributeEvaluation| {
            let g = self.cost.g_eval(&ev.x);
            let mut s = f64::INFINITY;
            for l in 0..self.l {
                s = s.min(-(ev.y[l + 1] + g[l]));
            }
            for k in 0..self.k {
                s = s.min(ev.b[k] - ev.a[k]);
            }
            for m in 0..self.m {
                s = s.min(ev.x[m] - feas[m].lo).min(feas[m].hi - ev.x[m]);
            }
            s
        };
        self.catalog
            .iter()
            .map(|e| e.actions.iter().map(slack).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_actions(&self) -> usize {
        self.catalog.iter().map(|e| e.actions.len()).max().unwrap_or(0)
    }
}

/// The algorithm's whole mutable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    pub slot: usize,
}

impl QueueState {
    pub fn zeros(k: usize, l: usize, m: usize) -> Self {
        QueueState { z: vec![0.0; l], q: vec![0.0; k], h: vec![0.0; m], slot: 0 }
    }

    pub fn for_model(model: &SystemModel) -> Self {
        Self::zeros(model.k, model.l, model.m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("queue", &self.z)?;
        ensure_finite("queue", &self.q)?;
        ensure_finite("queue", &self.h)?;
        if self.z.iter().chain(&self.q).any(|v| *v < 0.0) {
            return Err(Error::Domain("Z and Q must be non-negative".into()));
        }
        Ok(())
    }

    /// Largest of `Z_l`, `Q_k` and `|H_m|`.
    pub fn max_abs(&self) -> f64 {
        self.z.iter().chain(&self.q).chain(&self.h).fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub event_id: usize,
    pub action: usize,
    pub gamma: Vec<f64>,
    pub eval: AttributeEvaluation,
    pub queues_after: QueueState,
    /// `V y0 + V f(gamma)`.
    pub objective_term: f64,
    /// Score of the chosen action minus the minimum score; zero under exact
    /// decisions.
    pub decision_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub initial: QueueState,
    pub records: Vec<SlotRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Queue state at the start of slot `t` (`t` may equal the length).
    pub fn state_at(&self, t: usize) -> &QueueState {
        if t == 0 {
            &self.initial
        } else {
            &self.records[t - 1].queues_after
        }
    }

    pub fn final_state(&self) -> &QueueState {
        self.state_at(self.len())
    }

    pub fn max_queue(&self) -> f64 {
        self.records.iter().map(|r| r.queues_after.max_abs()).fold(self.initial.max_abs(), f64::max)
    }
}
