//! Exhaustive T-slot lookahead optimum, frame benchmarks and the guarantee
//! checks that compare a trace against them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{achieved_cost, time_averages};
use crate::algorithm::{lyapunov, run, ApproximationPolicy};
use crate::bounds::{constant_b, constant_d, SlaterConstants};
use crate::error::{Error, Result};
use crate::model::{EventSample, QueueState, SystemModel, Trace, TOL};
use crate::rng::CounterRng;

/// Default cap on action sequences enumerated per frame.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSolution {
    pub r: usize,
    pub t: usize,
    pub f_star: f64,
    pub argmin: Vec<usize>,
    /// Frame average of `x` under the minimizer.
    pub gamma_frame: Vec<f64>,
    pub feasible: bool,
}

struct Search<'a> {
    model: &'a SystemModel,
    ids: &'a [usize],
    // Per-depth running sums of x, y and a - b.
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    net: Vec<Vec<f64>>,
    seq: Vec<usize>,
    best: Option<(f64, Vec<usize>, Vec<f64>)>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        let t = self.ids.len();
        if depth == t {
            self.leaf();
            return;
        }
        let actions = &self.model.catalog[self.ids[depth]].actions;
        for (i, ev) in actions.iter().enumerate() {
            self.seq[depth] = i;
            for m in 0..self.model.m {
                self.x[depth + 1][m] = self.x[depth][m] + ev.x[m];
            }
            for l in 0..=self.model.l {
                self.y[depth + 1][l] = self.y[depth][l] + ev.y[l];
            }
            for k in 0..self.model.k {
                self.net[depth + 1][k] = self.net[depth][k] + ev.a[k] - ev.b[k];
            }
            self.descend(depth + 1);
        }
    }

    fn leaf(&mut self) {
        let t = self.ids.len();
        let tf = t as f64;
        if self.net[t].iter().any(|s| s / tf > TOL) {
            return;
        }
        let gamma: Vec<f64> = self.x[t].iter().map(|s| s / tf).collect();
        let cost = &self.model.cost;
        if !cost.in_x_set(&gamma, TOL) {
            return;
        }
        let g = cost.g_eval(&gamma);
        if (0..self.model.l).any(|l| self.y[t][l + 1] / tf + g[l] > TOL) {
            return;
        }
        let value = self.y[t][0] / tf + cost.f.eval(&gamma);
        if self.best.as_ref().map_or(true, |(b, _, _)| value < *b) {
            self.best = Some((value, self.seq.clone(), gamma));
        }
    }
}

/// Number of action sequences over a frame.
pub fn sequence_count(model: &SystemModel, ids: &[usize]) -> u128 {
    ids.iter().fold(1u128, |acc, &id| acc.saturating_mul(model.catalog[id].actions.len() as u128))
}

/// Minimum of `h0 + f(gamma)` over action sequences whose frame averages meet
/// every constraint. Ties go to the lexicographically smallest sequence.
pub fn frame_optimum(model: &SystemModel, events: &[EventSample], r: usize, budget: u128) -> Result<FrameSolution> {
    let ids: Vec<usize> = events.iter().map(|e| e.event_id).collect();
    solve_ids(model, &ids, r, budget)
}

fn solve_ids(model: &SystemModel, ids: &[usize], r: usize, budget: u128) -> Result<FrameSolution> {
    let t = ids.len();
    if t == 0 {
        return Err(Error::Precondition("frame length must be at least 1".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= model.catalog.len()) {
        return Err(Error::OutOfRange(format!("event id {bad}")));
    }
    let required = sequence_count(model, ids);
    if required > budget {
        return Err(Error::BudgetExceeded { required, cap: budget });
    }
    let mut search = Search {
        model,
        ids,
        x: vec![vec![0.0; model.m]; t + 1],
        y: vec![vec![0.0; model.l + 1]; t + 1],
        net: vec![vec![0.0; model.k]; t + 1],
        seq: vec![0; t],
        best: None,
    };
    search.descend(0);
    match search.best {
        Some((f_star, argmin, gamma_frame)) => Ok(FrameSolution { r, t, f_star, argmin, gamma_frame, feasible: true }),
        None => Err(Error::FrameInfeasible { frame: r }),
    }
}

/// Optimal solutions of frames `0..R`, each of length `T`. Frames with the
/// same event sequence are solved once.
pub fn frame_solutions(
    model: &SystemModel,
    events: &[EventSample],
    t: usize,
    r: usize,
    budget: u128,
) -> Result<Vec<FrameSolution>> {
    if t == 0 || r == 0 {
        return Err(Error::Precondition("T and R must be positive".into()));
    }
    if events.len() < r * t {
        return Err(Error::Precondition(format!("{} events for R T = {}", events.len(), r * t)));
    }
    let keys: Vec<Vec<usize>> = (0..r).map(|i| events[i * t..(i + 1) * t].iter().map(|e| e.event_id).collect()).collect();
    let mut distinct: BTreeMap<&[usize], usize> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        distinct.entry(k.as_slice()).or_insert(i);
    }
    let solved: Vec<(&[usize], Result<FrameSolution>)> =
        distinct.into_par_iter().map(|(k, first)| (k, solve_ids(model, k, first, budget))).collect();
    let table: BTreeMap<&[usize], Result<FrameSolution>> = solved.into_iter().collect();
    // Report the earliest failing frame.
    let mut out = Vec::with_capacity(r);
    for (i, k) in keys.iter().enumerate() {
        match &table[k.as_slice()] {
            Ok(sol) => out.push(FrameSolution { r: i, ..sol.clone() }),
            Err(Error::FrameInfeasible { .. }) => return Err(Error::FrameInfeasible { frame: i }),
            Err(e) => return Err(e.clone()),
        }
    }
    Ok(out)
}

/// `(1/R) sum_r F_r*`.
pub fn frame_benchmark(model: &SystemModel, events: &[EventSample], t: usize, r: usize, budget: u128) -> Result<f64> {
    let sols = frame_solutions(model, events, t, r, budget)?;
    Ok(sols.iter().map(|s| s.f_star).sum::<f64>() / r as f64)
}

/// Optimum over the whole horizon with constraints on full-horizon averages.
pub fn horizon_optimum(model: &SystemModel, events: &[EventSample], budget: u128) -> Result<f64> {
    frame_optimum(model, events, 0, budget).map(|s| s.f_star)
}

/// Left- and right-hand sides of a cost guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCheck {
    pub lhs: f64,
    pub benchmark: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl CostCheck {
    pub fn new(lhs: f64, benchmark: f64, rhs: f64) -> Self {
        CostCheck { lhs, benchmark, rhs, slack: rhs - lhs, holds: lhs <= rhs + TOL }
    }
}

/// Frame-lookahead guarantee with explicit `B`, `D` and benchmark:
/// `y0 + f(x) <= benchmark + (B + C)/V + D (T - 1)/V + L0/(V R T)
///  + sum nu_m |H_m(RT) - H_m(0)| / (RT)`.
#[allow(clippy::too_many_arguments)]
pub fn frame_guarantee(
    trace: &Trace,
    model: &SystemModel,
    t: usize,
    r: usize,
    v: f64,
    b: f64,
    c: f64,
    d: f64,
    benchmark: f64,
) -> Result<CostCheck> {
    let n = r * t;
    if trace.len() != n {
        return Err(Error::Precondition(format!("trace has {} slots, R T = {n}", trace.len())));
    }
    if !(v > 0.0) {
        return Err(Error::Domain("V must be positive".into()));
    }
    let lhs = achieved_cost(trace, model, n)?;
    let (h0, hn) = (&trace.initial.h, &trace.final_state().h);
    let h_term: f64 = (0..model.m).map(|m| model.cost.nu[m] * (hn[m] - h0[m]).abs()).sum::<f64>() / n as f64;
    let rhs = benchmark
        + (b + c) / v
        + d * (t as f64 - 1.0) / v
        + lyapunov(&trace.initial) / (v * n as f64)
        + h_term;
    Ok(CostCheck::new(lhs, benchmark, rhs))
}

/// The frame guarantee with `|H_m(RT)|` replaced by a cap `h_cap[m]`, as
/// when `H` is known to stay in a band.
#[allow(clippy::too_many_arguments)]
pub fn capped_guarantee(
    trace: &Trace,
    model: &SystemModel,
    t: usize,
    r: usize,
    v: f64,
    b: f64,
    c: f64,
    d: f64,
    benchmark: f64,
    h_cap: &[f64],
) -> Result<CostCheck> {
    let n = r * t;
    if trace.len() != n {
        return Err(Error::Precondition(format!("trace has {} slots, R T = {n}", trace.len())));
    }
    if !(v > 0.0) {
        return Err(Error::Domain("V must be positive".into()));
    }
    if h_cap.len() != model.m {
        return Err(Error::Precondition(format!("{} caps for {} sessions", h_cap.len(), model.m)));
    }
    let lhs = achieved_cost(trace, model, n)?;
    let h_term: f64 = (0..model.m).map(|m| model.cost.nu[m] * h_cap[m]).sum::<f64>() / n as f64;
    let rhs = benchmark + (b + c) / v + d * (t as f64 - 1.0) / v + lyapunov(&trace.initial) / (v * n as f64) + h_term;
    Ok(CostCheck::new(lhs, benchmark, rhs))
}

/// The frame-lookahead guarantee with the general `B` and `D`, the benchmark
/// computed by enumeration.
pub fn verify_frame_cost_bound(
    trace: &Trace,
    model: &SystemModel,
    t: usize,
    r: usize,
    v: f64,
    c: f64,
    budget: u128,
) -> Result<CostCheck> {
    let events: Vec<EventSample> = trace.records.iter().map(|rec| EventSample { slot: rec.slot, event_id: rec.event_id }).collect();
    let benchmark = frame_benchmark(model, &events, t, r, budget)?;
    frame_guarantee(trace, model, t, r, v, constant_b(model), c, constant_d(model), benchmark)
}

/// Frame-lookahead guarantee under uniform slack:
/// `y0 + f(x) <= (1 - p) benchmark + eps_V + p (y0_max + f_max)
///  + (B + C + D~ (T - 1))/V + sum nu_m V C3 / (theta R T)`.
pub fn verify_slack_guarantee(
    trace: &Trace,
    model: &SystemModel,
    t: usize,
    r: usize,
    v: f64,
    c: f64,
    slater: &SlaterConstants,
    budget: u128,
) -> Result<CostCheck> {
    let n = r * t;
    if trace.len() != n {
        return Err(Error::Precondition(format!("trace has {} slots, R T = {n}", trace.len())));
    }
    let events: Vec<EventSample> = trace.records.iter().map(|rec| EventSample { slot: rec.slot, event_id: rec.event_id }).collect();
    let benchmark = frame_benchmark(model, &events, t, r, budget)?;
    let lhs = achieved_cost(trace, model, n)?;
    let p = slater.p;
    let nu_sum: f64 = model.cost.nu.iter().sum();
    let rhs = (1.0 - p) * benchmark
        + slater.inputs.eps_v
        + p * (model.bounds.y_max[0] + model.cost.f_max)
        + (constant_b(model) + c + slater.d_tilde * (t as f64 - 1.0)) / v
        + nu_sum * v * slater.c3 / (slater.theta * n as f64);
    Ok(CostCheck::new(lhs, benchmark, rhs))
}

/// Finite-state Markov chain over catalog event ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    /// Row-stochastic matrix; state `i` emits event id `i`.
    pub transition: Vec<Vec<f64>>,
    pub initial: usize,
    pub seed: u64,
}

impl MarkovSpec {
    pub fn validate(&self, catalog_len: usize) -> Result<()> {
        let n = self.transition.len();
        if n == 0 || n > catalog_len {
            return Err(Error::Config(format!("chain has {n} states, catalog has {catalog_len} events")));
        }
        if self.initial >= n {
            return Err(Error::Config(format!("initial state {} of {n}", self.initial)));
        }
        for (i, row) in self.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} is not a probability vector")));
            }
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let p = if forward { self.transition[i][j] } else { self.transition[j][i] };
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        if !(reach(true) && reach(false)) {
            return Err(Error::Config("Markov chain is reducible".into()));
        }
        Ok(())
    }

    /// A sample path of `len` slots. Step `t` draws from counter `t`.
    pub fn sample(&self, len: usize) -> Vec<EventSample> {
        let rng = CounterRng::new(self.seed);
        let mut state = self.initial;
        (0..len)
            .map(|slot| {
                let ev = EventSample { slot, event_id: state };
                state = rng.weighted_at(1, slot as u64, &self.transition[state]);
                ev
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicRow {
    pub t: usize,
    pub frames: usize,
    pub mean_f_star: f64,
    pub achieved: f64,
    /// `achieved - mean F* - (B + C)/V - D (T - 1)/V`.
    pub gap: f64,
}

/// Runs the algorithm on a Markov sample path and compares the achieved
/// cost with the mean frame optimum for each lookahead `T`.
pub fn ergodic_reference(
    model: &SystemModel,
    chain: &MarkovSpec,
    t_list: &[usize],
    horizon: usize,
    v: f64,
    approx: &ApproximationPolicy,
    budget: u128,
) -> Result<(Vec<ErgodicRow>, Trace)> {
    chain.validate(model.catalog.len())?;
    let events = chain.sample(horizon);
    let trace = run(model, &events, v, approx, &QueueState::for_model(model))?;
    let (b, d, c) = (constant_b(model), constant_d(model), approx.c());
    let rows = t_list
        .iter()
        .map(|&t| {
            let frames = horizon / t;
            if frames == 0 {
                return Err(Error::Precondition(format!("horizon {horizon} shorter than T = {t}")));
            }
            let mean_f_star = frame_benchmark(model, &events, t, frames, budget)?;
            let avg = time_averages(&trace, frames * t)?;
            let achieved = avg.y[0] + model.cost.f.eval(&avg.x);
            let gap = achieved - mean_f_star - (b + c) / v - d * (t as f64 - 1.0) / v;
            Ok(ErgodicRow { t, frames, mean_f_star, achieved, gap })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, trace))
}
