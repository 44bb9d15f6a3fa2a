//! Analytic performance-bound constants and their empirical checks.

use serde::{Deserialize, Serialize};

use crate::algorithm::{lyapunov, ApproximationPolicy};
use crate::error::{Error, Result};
use crate::model::{AttributeEvaluation, SystemModel, Trace, TOL};

/// Largest one-slot change of each queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffConstants {
    pub z_diff: Vec<f64>,
    pub q_diff: Vec<f64>,
    pub h_diff: Vec<f64>,
    pub z_max: f64,
}

impl DiffConstants {
    pub fn new(z_diff: Vec<f64>, q_diff: Vec<f64>, h_diff: Vec<f64>) -> Self {
        let z_max = z_diff.iter().chain(&q_diff).chain(&h_diff).fold(0.0, |a: f64, v| a.max(*v));
        DiffConstants { z_diff, q_diff, h_diff, z_max }
    }
}

pub fn diff_constants(model: &SystemModel) -> DiffConstants {
    let b = &model.bounds;
    let c = &model.cost;
    let z_diff = (0..model.l)
        .map(|l| (b.y_max[l + 1] + c.g_max[l]).abs().max((b.y_min[l + 1] + c.g_min[l]).abs()))
        .collect();
    let q_diff = (0..model.k).map(|k| b.b_max[k].max(b.a_max[k])).collect();
    let h_diff = (0..model.m).map(|m| (b.x_max[m] - b.x_min[m]).abs()).collect();
    DiffConstants::new(z_diff, q_diff, h_diff)
}

fn half_sum_sq(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|x| x * x).fold(0.0, |s, x| s + x)
}

/// `B` dominating the one-slot quadratic terms of the drift.
pub fn constant_b(model: &SystemModel) -> f64 {
    let d = diff_constants(model);
    half_sum_sq(&d.z_diff) + half_sum_sq(&d.h_diff) + half_sum_sq(&model.bounds.b_max) + half_sum_sq(&model.bounds.a_max)
}

/// `D` dominating the within-frame drift terms.
pub fn constant_d(model: &SystemModel) -> f64 {
    let d = diff_constants(model);
    half_sum_sq(&d.z_diff) + half_sum_sq(&d.h_diff) + half_sum_sq(&d.q_diff)
}

/// `sqrt(2[(B + C)/V + y0 range + f range])`.
pub fn constant_c0(b: f64, c: f64, v: f64, y0_range: f64, f_range: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("V must be positive, got {v}")));
    }
    Ok((2.0 * ((b + c) / v + y0_range + f_range)).sqrt())
}

/// Queue bound at slot `t`: `sqrt(t V C0^2 + 2 L0)`.
pub fn queue_bound_at(t: usize, v: f64, c0: f64, l0: f64) -> f64 {
    (t as f64 * v * c0 * c0 + 2.0 * l0).sqrt()
}

/// `C1 = (B + C - D)/T + D`.
pub fn constant_c1(b: f64, c: f64, d: f64, t: usize) -> f64 {
    (b + c - d) / t as f64 + d
}

/// `C2 = C0 sum nu`.
pub fn constant_c2(c0: f64, nu: &[f64]) -> f64 {
    c0 * nu.iter().fold(0.0, |s, x| s + x)
}

pub fn y0_range(model: &SystemModel) -> f64 {
    model.bounds.y_max[0] - model.bounds.y_min[0]
}

pub fn f_range(model: &SystemModel) -> f64 {
    model.cost.f_max - model.cost.f_min
}

/// `C0` for a model and approximation constant.
pub fn model_c0(model: &SystemModel, b: f64, c: f64, v: f64) -> Result<f64> {
    constant_c0(b, c, v, y0_range(model), f_range(model))
}

/// One-slot quadratic term that `B` must dominate.
pub fn slot_b_term(model: &SystemModel, ev: &AttributeEvaluation, gamma: &[f64]) -> f64 {
    let g = model.cost.g_eval(gamma);
    0.5 * (0..model.l).map(|l| (ev.y[l + 1] + g[l]).powi(2)).fold(0.0, |s, x| s + x)
        + 0.5 * (0..model.k).map(|k| ev.b[k].powi(2) + ev.a[k].powi(2)).fold(0.0, |s, x| s + x)
        + 0.5 * (0..model.m).map(|m| (gamma[m] - ev.x[m]).powi(2)).fold(0.0, |s, x| s + x)
}

/// One-slot weighted term that `D` must dominate.
pub fn slot_d_term(model: &SystemModel, diff: &DiffConstants, ev: &AttributeEvaluation, gamma: &[f64]) -> f64 {
    let g = model.cost.g_eval(gamma);
    0.5 * (0..model.l).map(|l| diff.z_diff[l] * (ev.y[l + 1] + g[l]).abs()).fold(0.0, |s, x| s + x)
        + 0.5 * (0..model.m).map(|m| diff.h_diff[m] * (ev.x[m] - gamma[m]).abs()).fold(0.0, |s, x| s + x)
        + 0.5 * (0..model.k).map(|k| diff.q_diff[k] * ev.b[k].max(ev.a[k])).fold(0.0, |s, x| s + x)
}

/// Largest per-slot `B` and `D` terms seen on a trace.
pub fn max_slot_terms(model: &SystemModel, trace: &Trace) -> (f64, f64) {
    let diff = diff_constants(model);
    trace.records.iter().fold((0.0, 0.0), |(b, d), r| {
        (b.max(slot_b_term(model, &r.eval, &r.gamma)), d.max(slot_d_term(model, &diff, &r.eval, &r.gamma)))
    })
}

/// Outcome of checking a bound on every slot of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotCheck {
    pub holds: bool,
    /// Smallest `bound - observed` over all slots.
    pub min_slack: f64,
    pub worst_slot: usize,
    pub max_observed: f64,
}

impl SlotCheck {
    fn empty() -> Self {
        SlotCheck { holds: true, min_slack: f64::INFINITY, worst_slot: 0, max_observed: 0.0 }
    }

    fn observe(&mut self, slot: usize, observed: f64, bound: f64) {
        let slack = bound - observed;
        if slack < self.min_slack {
            self.min_slack = slack;
            self.worst_slot = slot;
        }
        self.max_observed = self.max_observed.max(observed);
        if observed > bound + TOL {
            self.holds = false;
        }
    }
}

/// Every queue at every slot `t >= 1` against `sqrt(t V C0^2 + 2 L0)`.
pub fn check_growth_bound(trace: &Trace, v: f64, c0: f64) -> SlotCheck {
    let l0 = lyapunov(&trace.initial);
    let mut check = SlotCheck::empty();
    for (i, r) in trace.records.iter().enumerate() {
        check.observe(i + 1, r.queues_after.max_abs(), queue_bound_at(i + 1, v, c0, l0));
    }
    check
}

/// One-slot Lyapunov drift against `B + C(t) + V (y0 range + f range)`.
pub fn check_slot_drift(model: &SystemModel, trace: &Trace, v: f64, b: f64, approx: &ApproximationPolicy) -> SlotCheck {
    let slack = v * (y0_range(model) + f_range(model));
    let mut check = SlotCheck::empty();
    for (i, r) in trace.records.iter().enumerate() {
        let before = trace.state_at(i);
        let drift = lyapunov(&r.queues_after) - lyapunov(before);
        check.observe(i, drift, b + approx.budget(before, v) + slack);
    }
    check
}

/// Every queue on every slot against a constant ceiling.
pub fn check_constant_bound(trace: &Trace, bound: f64) -> SlotCheck {
    let mut check = SlotCheck::empty();
    for (i, r) in trace.records.iter().enumerate() {
        check.observe(i + 1, r.queues_after.max_abs(), bound);
    }
    check
}

/// `2 C_sum (beta_max + theta_diff)`.
pub fn multihop_c(c_sum: f64, beta_max: f64, theta_diff: f64) -> f64 {
    2.0 * c_sum * (beta_max + theta_diff)
}

/// Per-node rate limits of a multi-hop network, enough to state `B` and `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescription {
    /// Largest total rate into plus out of each node in one slot.
    pub mu_sum_max: Vec<f64>,
    /// Largest total rate into each node in one slot.
    pub mu_in_max: Vec<f64>,
    /// `x_max[n][c]`: largest exogenous commodity-`c` arrival at node `n`.
    pub x_max: Vec<Vec<f64>>,
    /// `e[n] = max_c max(b_max, a_max)` for the queues at node `n`.
    pub e: Vec<f64>,
    pub session_a_max: Vec<f64>,
}

impl NetworkDescription {
    /// Unit packets, at most one packet sent or received per node per slot
    /// (never both), at most one unit-rate source per node.
    pub fn wireless_unit_packet(n: usize, source_nodes: &[usize], destinations: &[usize]) -> Result<Self> {
        if source_nodes.len() != destinations.len() {
            return Err(Error::Config("one destination per source".into()));
        }
        let mut x_max = vec![vec![0.0; n]; n];
        let mut e = vec![1.0; n];
        for (&s, &c) in source_nodes.iter().zip(destinations) {
            if s >= n || c >= n {
                return Err(Error::OutOfRange(format!("node {s} or {c} with N = {n}")));
            }
            if e[s] == 2.0 {
                return Err(Error::Config(format!("node {s} hosts two sources")));
            }
            x_max[s][c] = 1.0;
            e[s] = 2.0;
        }
        Ok(NetworkDescription {
            mu_sum_max: vec![1.0; n],
            mu_in_max: vec![1.0; n],
            x_max,
            e,
            session_a_max: vec![1.0; source_nodes.len()],
        })
    }
}

/// `B` and `D` exploiting per-node rate structure.
pub fn network_b_d(desc: &NetworkDescription) -> (f64, f64) {
    let a = half_sum_sq(&desc.session_a_max);
    let n = desc.mu_sum_max.len();
    let mut b = a;
    let mut d = a;
    for i in 0..n {
        let xs = &desc.x_max[i];
        let x_sq: f64 = xs.iter().map(|x| x * x).sum();
        let x_sum: f64 = xs.iter().sum();
        let x_top = xs.iter().cloned().fold(0.0, f64::max);
        b += 0.5 * (desc.mu_sum_max[i].powi(2) + x_sq) + desc.mu_in_max[i] * x_top;
        d += 0.5 * desc.e[i] * (desc.mu_sum_max[i] + x_sum);
    }
    (b, d)
}

/// Scenario-supplied slack and approximation rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SlaterInputs {
    pub delta: f64,
    #[serde(default)]
    pub eps_v: f64,
    #[serde(default)]
    pub eps_z: f64,
    #[serde(default)]
    pub eps_q: f64,
    #[serde(default)]
    pub eps_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterConstants {
    pub inputs: SlaterInputs,
    pub beta_sum: f64,
    pub theta: f64,
    pub p: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub c3: f64,
    pub d_tilde: f64,
    /// `V C3 / theta`.
    pub queue_bound: f64,
}

/// Constants of the uniform-slack guarantees.
pub fn slater_constants(
    model: &SystemModel,
    inputs: SlaterInputs,
    v: f64,
    b: f64,
    c: f64,
    d: f64,
) -> Result<SlaterConstants> {
    let SlaterInputs { delta, eps_v, eps_z, eps_q, eps_h } = inputs;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("V must be positive, got {v}")));
    }
    if !(delta > 0.0) || [eps_v, eps_z, eps_q, eps_h].iter().any(|e| *e < 0.0 || !e.is_finite()) {
        return Err(Error::Precondition("need delta > 0 and non-negative finite epsilons".into()));
    }
    if !(eps_q < delta) {
        return Err(Error::Precondition(format!("eps_Q < delta fails: {eps_q} >= {delta}")));
    }
    if !(eps_h < delta) {
        return Err(Error::Precondition(format!("eps_H < delta fails: {eps_h} >= {delta}")));
    }
    for l in 0..model.l {
        let bs = model.cost.beta_sum(l);
        if !(eps_z + eps_h * bs < delta) {
            return Err(Error::Precondition(format!(
                "eps_Z + eps_H * sum_m beta[{l}][m] < delta fails: {eps_z} + {eps_h} * {bs} >= {delta}"
            )));
        }
    }
    let beta_sum = (0..model.l).map(|l| model.cost.beta_sum(l)).fold(0.0, f64::max);
    let theta = (delta - eps_q).min(delta - eps_h).min((delta - eps_z - eps_h * beta_sum) / (1.0 + beta_sum));
    let p = (eps_z / (delta - (eps_h + theta) * beta_sum)).max(eps_q / delta).max(eps_h / (eps_h + theta));
    let diff = diff_constants(model);
    let d1 = ((b + c) / v + y0_range(model) + f_range(model) + eps_v).powi(2);
    let d2 = 2.0 * d * theta * theta / (v * v);
    let d3 = 2.0 * diff.z_max * theta / v * d1.sqrt();
    let c3 = (d1 + d2 + d3).sqrt();
    let d_tilde = d
        + 0.5 * diff.z_diff.iter().fold(0.0, |s, x| s + x) * eps_z
        + 0.5 * diff.q_diff.iter().fold(0.0, |s, x| s + x) * eps_q
        + 0.5 * diff.h_diff.iter().fold(0.0, |s, x| s + x) * eps_h;
    Ok(SlaterConstants { inputs, beta_sum, theta, p, d1, d2, d3, c3, d_tilde, queue_bound: v * c3 / theta })
}

/// Analytic constants of one run next to the queue maxima they bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub b: f64,
    pub d: f64,
    pub c: f64,
    pub c0: f64,
    pub c1: Option<f64>,
    pub c2: f64,
    pub diff: DiffConstants,
    pub slater: Option<SlaterConstants>,
    pub growth: SlotCheck,
    pub drift: SlotCheck,
    pub max_slot_b: f64,
    pub max_slot_d: f64,
    pub slater_queues: Option<SlotCheck>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.growth.holds
            && self.drift.holds
            && self.max_slot_b <= self.b + TOL
            && self.max_slot_d <= self.d + TOL
            && self.slater_queues.as_ref().map_or(true, |c| c.holds)
    }
}

/// Computes every general-framework constant and checks them on `trace`.
pub fn bound_report(
    model: &SystemModel,
    trace: &Trace,
    v: f64,
    approx: &ApproximationPolicy,
    frame: Option<usize>,
    slater: Option<SlaterInputs>,
) -> Result<BoundReport> {
    let b = constant_b(model);
    let d = constant_d(model);
    let c = approx.c();
    let c0 = model_c0(model, b, c, v)?;
    let slater = slater.map(|s| slater_constants(model, s, v, b, c, d)).transpose()?;
    let (max_slot_b, max_slot_d) = max_slot_terms(model, trace);
    Ok(BoundReport {
        b,
        d,
        c,
        c0,
        c1: frame.map(|t| constant_c1(b, c, d, t)),
        c2: constant_c2(c0, &model.cost.nu),
        diff: diff_constants(model),
        growth: check_growth_bound(trace, v, c0),
        drift: check_slot_drift(model, trace, v, b, approx),
        max_slot_b,
        max_slot_d,
        slater_queues: slater.as_ref().map(|s| check_constant_bound(trace, s.queue_bound)),
        slater,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostFn, ScalarConvex};
    use crate::model::{AttributeBounds, CatalogEntry, CostConfig};

    fn bare(k: usize, a_max: f64, b_max: f64) -> SystemModel {
        let ev = AttributeEvaluation { a: vec![0.0; k], b: vec![0.0; k], x: vec![], y: vec![0.0] };
        let bounds = AttributeBounds {
            a_max: vec![a_max; k],
            b_max: vec![b_max; k],
            x_min: vec![],
            x_max: vec![],
            y_min: vec![0.0],
            y_max: vec![0.0],
        };
        SystemModel::new(vec![CatalogEntry { actions: vec![ev] }], CostConfig::default(), Some(bounds)).unwrap()
    }

    #[test]
    fn b_and_d_substitutions() {
        assert_eq!(constant_b(&bare(1, 1.0, 1.0)), 1.0);
        assert_eq!(constant_b(&bare(0, 0.0, 0.0)), 0.0);
        assert_eq!(constant_d(&bare(0, 0.0, 0.0)), 0.0);
        assert_eq!(constant_d(&bare(1, 2.0, 1.0)), 2.0);

        // L = 1 with z_diff = 2 and M = 1 with h_diff = 1.
        let ev = |x: f64, y1: f64| AttributeEvaluation { a: vec![], b: vec![], x: vec![x], y: vec![0.0, y1] };
        let cat = vec![CatalogEntry { actions: vec![ev(0.0, -2.0), ev(1.0, 0.0)] }];
        let model = SystemModel::new(cat, CostConfig { g: vec![CostFn::zero()], ..Default::default() }, None).unwrap();
        assert_eq!(diff_constants(&model).z_diff, vec![2.0]);
        assert_eq!(constant_b(&model), 2.5);
    }

    #[test]
    fn c0_and_queue_bound() {
        assert!((constant_c0(2.0, 0.0, 1.0, 1.0, 1.0).unwrap() - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(constant_c0(0.0, 0.0, 1.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((constant_c0(2.0, 2.0, 4.0, 0.0, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(constant_c0(1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!((queue_bound_at(100, 1.0, 8f64.sqrt(), 0.0) - 800f64.sqrt()).abs() < 1e-12);
        assert_eq!(queue_bound_at(0, 3.0, 2.0, 0.0), 0.0);
        assert!((queue_bound_at(1, 1.0, 1.0, 0.5) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn multihop_c_substitutions() {
        assert_eq!(multihop_c(5.0, 1.0, 0.0), 10.0);
        assert_eq!(multihop_c(0.0, 7.0, 3.0), 0.0);
        assert_eq!(multihop_c(3.0, 1.0, 2.0), 18.0);
    }

    #[test]
    fn wireless_constants() {
        let desc = NetworkDescription::wireless_unit_packet(10, &[0, 1, 2], &[9, 8, 7]).unwrap();
        assert_eq!(network_b_d(&desc), (11.0, 11.0));
        let desc = NetworkDescription::wireless_unit_packet(4, &[], &[]).unwrap();
        assert_eq!(network_b_d(&desc), (2.0, 2.0));
    }

    fn slater_model(beta: f64) -> SystemModel {
        let ev = AttributeEvaluation { a: vec![0.0], b: vec![1.0], x: vec![0.5], y: vec![0.0, -1.0] };
        let g = CostFn::separable(vec![ScalarConvex::Affine { slope: beta, offset: 0.0 }]);
        let bounds = AttributeBounds {
            a_max: vec![1.0],
            b_max: vec![1.0],
            x_min: vec![0.0],
            x_max: vec![1.0],
            y_min: vec![-1.0, -1.0],
            y_max: vec![0.0, 0.0],
        };
        SystemModel::new(vec![CatalogEntry { actions: vec![ev] }], CostConfig { f: CostFn::zero(), g: vec![g], x_set: None }, Some(bounds))
            .unwrap()
    }

    #[test]
    fn slater_theta_and_p() {
        let m = slater_model(1.0);
        let s = slater_constants(&m, SlaterInputs { delta: 0.5, ..Default::default() }, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(s.theta, 0.25);
        assert_eq!(s.p, 0.0);
        let m0 = slater_model(0.0);
        let s = slater_constants(&m0, SlaterInputs { delta: 0.5, eps_q: 0.1, ..Default::default() }, 1.0, 1.0, 0.0, 1.0)
            .unwrap();
        assert!((s.theta - 0.4).abs() < 1e-15);
        let err = slater_constants(&m, SlaterInputs { delta: 0.5, eps_h: 0.5, ..Default::default() }, 1.0, 1.0, 0.0, 1.0);
        assert!(matches!(err, Err(Error::Precondition(ref s)) if s.contains("eps_H")));
    }
}
