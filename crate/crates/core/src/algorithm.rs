//! Queue dynamics and the per-slot drift-plus-penalty decision rule.

use serde::{Deserialize, Serialize};

use crate::cost::AuxProblem;
use crate::error::{ensure_finite, Error, Result};
use crate::model::{EventSample, QueueState, SlotRecord, SystemModel, Trace, AttributeEvaluation, TOL};
use crate::rng::CounterRng;

/// `max(q - b, 0) + a`.
pub fn update_actual_queue(q: f64, b: f64, a: f64) -> Result<f64> {
    ensure_finite("queue update input", &[q, b, a])?;
    if q < 0.0 || b < 0.0 || a < 0.0 {
        return Err(Error::Domain(format!("actual queue update needs q, b, a >= 0, got ({q}, {b}, {a})")));
    }
    Ok((q - b).max(0.0) + a)
}

/// `max(z + y + g, 0)`.
pub fn update_virtual_z(z: f64, y: f64, g_val: f64) -> Result<f64> {
    ensure_finite("virtual queue input", &[z, y, g_val])?;
    if z < 0.0 {
        return Err(Error::Domain(format!("Z must be non-negative, got {z}")));
    }
    Ok((z + y + g_val).max(0.0))
}

/// `h + gamma - x`.
pub fn update_virtual_h(h: f64, gamma: f64, x: f64) -> Result<f64> {
    ensure_finite("virtual queue input", &[h, gamma, x])?;
    Ok(h + gamma - x)
}

pub fn lyapunov(state: &QueueState) -> f64 {
    0.5 * state.z.iter().chain(&state.q).chain(&state.h).map(|v| v * v).sum::<f64>()
}

/// How the action is picked once the scores are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApproximationPolicy {
    #[default]
    Exact,
    /// Any action whose score is within
    /// `c + V eps_v + eps_z sum Z + eps_q sum Q + eps_h sum |H|` of the minimum
    /// is admissible. A counter RNG keyed on the slot picks one uniformly, or
    /// the worst admissible one when `adversarial` is set.
    Approximate {
        #[serde(default)]
        c: f64,
        #[serde(default)]
        eps_v: f64,
        #[serde(default)]
        eps_z: f64,
        #[serde(default)]
        eps_q: f64,
        #[serde(default)]
        eps_h: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        adversarial: bool,
    },
}

impl ApproximationPolicy {
    pub fn constant(c: f64, seed: u64) -> Self {
        ApproximationPolicy::Approximate { c, eps_v: 0.0, eps_z: 0.0, eps_q: 0.0, eps_h: 0.0, seed, adversarial: false }
    }

    /// The constant part `C` of the allowed error.
    pub fn c(&self) -> f64 {
        match self {
            ApproximationPolicy::Exact => 0.0,
            ApproximationPolicy::Approximate { c, .. } => *c,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, ApproximationPolicy::Exact)
    }

    /// Allowed score error on a slot with queue state `state`.
    pub fn budget(&self, state: &QueueState, v: f64) -> f64 {
        match *self {
            ApproximationPolicy::Exact => 0.0,
            ApproximationPolicy::Approximate { c, eps_v, eps_z, eps_q, eps_h, .. } => {
                c + v * eps_v
                    + eps_z * state.z.iter().sum::<f64>()
                    + eps_q * state.q.iter().sum::<f64>()
                    + eps_h * state.h.iter().map(|h| h.abs()).sum::<f64>()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let ApproximationPolicy::Approximate { c, eps_v, eps_z, eps_q, eps_h, .. } = *self {
            let all = [c, eps_v, eps_z, eps_q, eps_h];
            ensure_finite("approximation constant", &all)?;
            if all.iter().any(|v| *v < 0.0) {
                return Err(Error::Config("approximation constants must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// The action-dependent part of the score:
/// `V y0 + sum Z y_l - sum H x_m + sum Q (a - b)`.
pub fn action_score(ev: &AttributeEvaluation, state: &QueueState, v: f64) -> f64 {
    v * ev.y[0]
        + state.z.iter().zip(&ev.y[1..]).map(|(z, y)| z * y).sum::<f64>()
        - state.h.iter().zip(&ev.x).map(|(h, x)| h * x).sum::<f64>()
        + state.q.iter().zip(ev.a.iter().zip(&ev.b)).map(|(q, (a, b))| q * (a - b)).sum::<f64>()
}

/// Right-hand side of the one-slot drift bound without the constant `B`.
pub fn drift_penalty_score(
    model: &SystemModel,
    event_id: usize,
    action: usize,
    gamma: &[f64],
    state: &QueueState,
    v: f64,
) -> Result<f64> {
    let ev = model.eval(event_id, action)?;
    check_gamma(model, gamma)?;
    let g = model.cost.g_eval(gamma);
    Ok(v * ev.y[0]
        + v * model.cost.f.eval(gamma)
        + state.z.iter().enumerate().map(|(l, z)| z * (ev.y[l + 1] + g[l])).sum::<f64>()
        + state.q.iter().enumerate().map(|(k, q)| q * (ev.a[k] - ev.b[k])).sum::<f64>()
        + state.h.iter().enumerate().map(|(m, h)| h * (gamma[m] - ev.x[m])).sum::<f64>())
}

fn check_gamma(model: &SystemModel, gamma: &[f64]) -> Result<()> {
    if gamma.len() != model.m {
        return Err(Error::Precondition(format!("gamma has {} entries, M = {}", gamma.len(), model.m)));
    }
    ensure_finite("gamma", gamma)?;
    let feas = model.cost.feasible_box();
    if let Some(m) = (0..model.m).find(|&m| !feas[m].contains(gamma[m], TOL)) {
        return Err(Error::Precondition(format!(
            "gamma[{m}] = {} outside [{}, {}]",
            gamma[m], feas[m].lo, feas[m].hi
        )));
    }
    Ok(())
}

/// Minimizes `V f(gamma) + sum Z_l g_l(gamma) + sum H_m gamma_m` over the
/// feasible box.
pub fn choose_aux(model: &SystemModel, state: &QueueState, v: f64) -> Result<Vec<f64>> {
    if model.m == 0 {
        return Ok(Vec::new());
    }
    let cost = &model.cost;
    if let Some(hook) = &cost.minimizer {
        let feasible = cost.feasible_box();
        let problem = AuxProblem { cost, v, z: &state.z, h: &state.h, feasible: &feasible };
        let gamma = (hook.0)(&problem);
        check_gamma(model, &gamma)?;
        return Ok(gamma.iter().zip(&feasible).map(|(g, iv)| iv.clamp(*g)).collect());
    }
    if !cost.separable() {
        return Err(Error::Unsupported("non-separable cost needs an auxiliary minimizer hook".into()));
    }
    Ok(cost.minimize_separable(v, &state.z, &state.h))
}

/// Picks the action index. Returns the index and its score gap to the
/// minimum.
pub fn choose_action_with_gap(
    model: &SystemModel,
    event_id: usize,
    state: &QueueState,
    v: f64,
    approx: &ApproximationPolicy,
) -> Result<(usize, f64)> {
    let actions = model.actions(event_id)?;
    if actions.is_empty() {
        return Err(Error::ModelInvariant(format!("event {event_id} has no actions")));
    }
    let scores: Vec<f64> = actions.iter().map(|ev| action_score(ev, state, v)).collect();
    let (best, min) = scores
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bs), (i, s)| if *s < bs { (i, *s) } else { (bi, bs) });
    let chosen = match *approx {
        ApproximationPolicy::Exact => best,
        ApproximationPolicy::Approximate { seed, adversarial, .. } => {
            let limit = min + approx.budget(state, v);
            let admissible: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] <= limit).collect();
            if adversarial {
                admissible.iter().copied().fold(best, |w, i| if scores[i] > scores[w] { i } else { w })
            } else {
                let rng = CounterRng::new(seed);
                admissible[rng.index_at(0, state.slot as u64, admissible.len())]
            }
        }
    };
    Ok((chosen, scores[chosen] - min))
}

/// Minimizes the action-dependent score; lowest index wins ties.
pub fn choose_action(
    model: &SystemModel,
    event_id: usize,
    gamma: &[f64],
    state: &QueueState,
    v: f64,
    approx: &ApproximationPolicy,
) -> Result<usize> {
    check_gamma(model, gamma)?;
    choose_action_with_gap(model, event_id, state, v, approx).map(|(i, _)| i)
}

/// Queue updates for a fixed decision.
pub fn advance(model: &SystemModel, state: &QueueState, ev: &AttributeEvaluation, gamma: &[f64]) -> Result<QueueState> {
    let g = model.cost.g_eval(gamma);
    Ok(QueueState {
        z: (0..model.l).map(|l| update_virtual_z(state.z[l], ev.y[l + 1], g[l])).collect::<Result<_>>()?,
        q: (0..model.k).map(|k| update_actual_queue(state.q[k], ev.b[k], ev.a[k])).collect::<Result<_>>()?,
        h: (0..model.m).map(|m| update_virtual_h(state.h[m], gamma[m], ev.x[m])).collect::<Result<_>>()?,
        slot: state.slot + 1,
    })
}

pub fn step(
    model: &SystemModel,
    state: &QueueState,
    event: EventSample,
    v: f64,
    approx: &ApproximationPolicy,
) -> Result<(QueueState, SlotRecord)> {
    if state.slot != event.slot {
        return Err(Error::Precondition(format!("state is at slot {} but event is for slot {}", state.slot, event.slot)));
    }
    let gamma = choose_aux(model, state, v)?;
    let (action, decision_gap) = choose_action_with_gap(model, event.event_id, state, v, approx)?;
    let ev = model.eval(event.event_id, action)?;
    let next = advance(model, state, ev, &gamma)?;
    let record = SlotRecord {
        slot: event.slot,
        event_id: event.event_id,
        action,
        objective_term: v * ev.y[0] + v * model.cost.f.eval(&gamma),
        gamma,
        eval: ev.clone(),
        queues_after: next.clone(),
        decision_gap,
    };
    Ok((next, record))
}

pub fn run(
    model: &SystemModel,
    events: &[EventSample],
    v: f64,
    approx: &ApproximationPolicy,
    initial: &QueueState,
) -> Result<Trace> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("V must be finite and non-negative, got {v}")));
    }
    approx.validate()?;
    initial.validate()?;
    if initial.slot != 0 {
        return Err(Error::Precondition("initial state must be at slot 0".into()));
    }
    if initial.z.len() != model.l || initial.q.len() != model.k || initial.h.len() != model.m {
        return Err(Error::Precondition("initial state dimensions do not match the model".into()));
    }
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(events.len());
    for ev in events {
        let (next, rec) = step(model, &state, *ev, v, approx)?;
        records.push(rec);
        state = next;
    }
    Ok(Trace { initial: initial.clone(), records })
}
