//! Time averages and the queue-derived constraint residual bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SystemModel, Trace, TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAverages {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Running sums over a trace prefix.
#[derive(Debug, Clone)]
struct Sums {
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    gamma: Vec<f64>,
}

impl Sums {
    fn new(k: usize, l1: usize, m: usize) -> Self {
        Sums { n: 0, x: vec![0.0; m], y: vec![0.0; l1], a: vec![0.0; k], b: vec![0.0; k], gamma: vec![0.0; m] }
    }

    fn push(&mut self, rec: &crate::model::SlotRecord) {
        let add = |acc: &mut Vec<f64>, v: &[f64]| acc.iter_mut().zip(v).for_each(|(s, v)| *s += v);
        add(&mut self.x, &rec.eval.x);
        add(&mut self.y, &rec.eval.y);
        add(&mut self.a, &rec.eval.a);
        add(&mut self.b, &rec.eval.b);
        add(&mut self.gamma, &rec.gamma);
        self.n += 1;
    }

    fn averages(&self) -> TimeAverages {
        let n = self.n as f64;
        let div = |v: &[f64]| v.iter().map(|s| s / n).collect();
        TimeAverages { x: div(&self.x), y: div(&self.y), a: div(&self.a), b: div(&self.b), gamma: div(&self.gamma) }
    }
}

fn sums_for(trace: &Trace) -> Sums {
    let s = &trace.initial;
    let l1 = trace.records.first().map(|r| r.eval.y.len()).unwrap_or(s.z.len() + 1);
    Sums::new(s.q.len(), l1, s.h.len())
}

/// Means of every attribute over slots `0..t`.
pub fn time_averages(trace: &Trace, t: usize) -> Result<TimeAverages> {
    if t == 0 || t > trace.len() {
        return Err(Error::OutOfRange(format!("averaging window {t} for a trace of length {}", trace.len())));
    }
    let mut sums = sums_for(trace);
    trace.records[..t].iter().for_each(|r| sums.push(r));
    Ok(sums.averages())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub residual: f64,
    pub bound: f64,
    pub ok: bool,
}

impl Residual {
    fn new(residual: f64, bound: f64) -> Self {
        Residual { residual, bound, ok: residual <= bound + TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t_end: usize,
    /// `y_l + g_l(x)` averages against the queue-derived bound, per `l`.
    pub z: Vec<Residual>,
    /// `a_k - b_k` averages against `(Q_k(t) - Q_k(0)) / t`, per `k`.
    pub q: Vec<Residual>,
    /// `gamma_m - x_m` averages; magnitude equals `|H_m(t) - H_m(0)| / t`.
    pub epsilon: Vec<f64>,
    /// `x + epsilon` lies in the feasible set and `|epsilon_m|` matches the
    /// H displacement.
    pub x_ok: bool,
}

impl ResidualReport {
    pub fn all_ok(&self) -> bool {
        self.x_ok && self.z.iter().chain(&self.q).all(|r| r.ok)
    }
}

fn report_from(sums: &Sums, trace: &Trace, model: &SystemModel) -> ResidualReport {
    let t = sums.n;
    let tf = t as f64;
    let avg = sums.averages();
    let (s0, st) = (&trace.initial, trace.state_at(t));
    let dh: Vec<f64> = (0..model.m).map(|m| (st.h[m] - s0.h[m]).abs() / tf).collect();
    let g = model.cost.g_eval(&avg.x);
    let z = (0..model.l)
        .map(|l| {
            let bound = (st.z[l] - s0.z[l]) / tf + model.cost.beta[l].iter().zip(&dh).map(|(b, d)| b * d).sum::<f64>();
            Residual::new(avg.y[l + 1] + g[l], bound)
        })
        .collect();
    let q = (0..model.k).map(|k| Residual::new(avg.a[k] - avg.b[k], (st.q[k] - s0.q[k]) / tf)).collect();
    let epsilon: Vec<f64> = (0..model.m).map(|m| avg.gamma[m] - avg.x[m]).collect();
    let x_ok = (0..model.m).all(|m| (epsilon[m].abs() - dh[m]).abs() <= TOL * (1.0 + dh[m]))
        && model.cost.in_x_set(&avg.gamma, TOL);
    ResidualReport { t_end: t, z, q, epsilon, x_ok }
}

/// Residuals of every time-average constraint over the first `t_end` slots
/// and their queue-derived bounds.
pub fn constraint_residuals(trace: &Trace, model: &SystemModel, t_end: usize) -> Result<ResidualReport> {
    if t_end == 0 || t_end > trace.len() {
        return Err(Error::OutOfRange(format!("t_end {t_end} for a trace of length {}", trace.len())));
    }
    let mut sums = sums_for(trace);
    trace.records[..t_end].iter().for_each(|r| sums.push(r));
    Ok(report_from(&sums, trace, model))
}

/// Checks the residual bounds at every prefix length. Returns the first
/// failing prefix report, if any.
pub fn first_residual_violation(trace: &Trace, model: &SystemModel) -> Option<ResidualReport> {
    let mut sums = sums_for(trace);
    for rec in &trace.records {
        sums.push(rec);
        let report = report_from(&sums, trace, model);
        if !report.all_ok() {
            return Some(report);
        }
    }
    None
}

/// Time-average constraint residuals over `0..t_end` against the
/// `C0 sqrt(V / t_end)` bounds that hold from empty queues.
pub fn average_constraint_bounds(trace: &Trace, model: &SystemModel, v: f64, c0: f64, t_end: usize) -> Result<ResidualReport> {
    if t_end == 0 || t_end > trace.len() {
        return Err(Error::OutOfRange(format!("t_end {t_end} for a trace of length {}", trace.len())));
    }
    let avg = time_averages(trace, t_end)?;
    let scale = c0 * (v / t_end as f64).sqrt();
    let g = model.cost.g_eval(&avg.x);
    let z = (0..model.l)
        .map(|l| Residual::new(avg.y[l + 1] + g[l], scale * (1.0 + model.cost.beta[l].iter().sum::<f64>())))
        .collect();
    let q = (0..model.k).map(|k| Residual::new(avg.a[k] - avg.b[k], scale)).collect();
    let epsilon: Vec<f64> = (0..model.m).map(|m| avg.gamma[m] - avg.x[m]).collect();
    let x_ok = epsilon.iter().all(|e| e.abs() <= scale + TOL) && model.cost.in_x_set(&avg.gamma, TOL);
    Ok(ResidualReport { t_end, z, q, epsilon, x_ok })
}

/// Average of `f(gamma(t))` over the first `t` slots, for Jensen checks.
pub fn mean_f_of_gamma(trace: &Trace, model: &SystemModel, t: usize) -> f64 {
    trace.records[..t].iter().map(|r| model.cost.f.eval(&r.gamma)).sum::<f64>() / t as f64
}

/// `y0 + f(x)` over the first `t` slots: the cost the guarantees talk about.
pub fn achieved_cost(trace: &Trace, model: &SystemModel, t: usize) -> Result<f64> {
    let avg = time_averages(trace, t)?;
    Ok(avg.y[0] + model.cost.f.eval(&avg.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{run, ApproximationPolicy};
    use crate::model::{AttributeEvaluation, CatalogEntry, CostConfig, EventSample, QueueState};

    fn model() -> SystemModel {
        let mk = |a: f64, b: f64, y0: f64| AttributeEvaluation { a: vec![a], b: vec![b], x: vec![], y: vec![y0] };
        let cat = vec![
            CatalogEntry { actions: vec![mk(0.0, 0.0, 0.0), mk(1.0, 0.0, -1.0)] },
            CatalogEntry { actions: vec![mk(0.0, 1.0, 0.5), mk(0.0, 0.0, 0.0)] },
        ];
        SystemModel::new(cat, CostConfig::default(), None).unwrap()
    }

    #[test]
    fn averages_of_simple_trace() {
        let m = model();
        let trace = run(&m, &EventSample::sequence(&[0, 1]), 1.0, &ApproximationPolicy::Exact, &QueueState::for_model(&m)).unwrap();
        let one = time_averages(&trace, 1).unwrap();
        assert_eq!(one.a, trace.records[0].eval.a);
        let two = time_averages(&trace, 2).unwrap();
        assert_eq!(two.a[0], 0.5);
        assert!(time_averages(&trace, 0).is_err());
        assert!(time_averages(&trace, 3).is_err());
    }

    #[test]
    fn residuals_respect_bounds_on_every_prefix() {
        let m = model();
        let ids: Vec<usize> = (0..50).map(|i| (i * 7 + 3) % 2).collect();
        let trace = run(&m, &EventSample::sequence(&ids), 2.0, &ApproximationPolicy::Exact, &QueueState::for_model(&m)).unwrap();
        assert!(first_residual_violation(&trace, &m).is_none());
        let r = constraint_residuals(&trace, &m, 1).unwrap();
        assert_eq!(r.q[0].residual, trace.records[0].eval.a[0] - trace.records[0].eval.b[0]);
        assert_eq!(r.q[0].bound, trace.records[0].queues_after.q[0]);
    }
    #[test]
    fn averages_meet_the_sqrt_bounds_from_empty_queues() {
        let m = model();
        let ids: Vec<usize> = (0..60).map(|i| (i * 5 + 1) % 2).collect();
        let v = 2.0;
        let trace = run(&m, &EventSample::sequence(&ids), v, &ApproximationPolicy::Exact, &QueueState::for_model(&m)).unwrap();
        // B = 1, y0 range = 1.5, so C0 = sqrt(2 (1/2 + 3/2)) = 2.
        let c0 = crate::bounds::model_c0(&m, crate::bounds::constant_b(&m), 0.0, v).unwrap();
        assert_eq!(c0, 2.0);
        let first = average_constraint_bounds(&trace, &m, v, c0, 1).unwrap();
        assert_eq!(first.q[0].bound, 2.0 * 2f64.sqrt());
        assert!((1..=60).all(|t| average_constraint_bounds(&trace, &m, v, c0, t).unwrap().all_ok()));
    }
}
