//! Multi-hop queueing network: per-commodity queues, threshold flow control
//! and max-weight transmission, plus the receiver-gated variant that keeps
//! every queue under a fixed ceiling.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bounds::NetworkDescription;
use crate::cost::CostFn;
use crate::error::{ensure_finite, Error, Result};
use crate::internet::{aux_update, Utility};
use crate::model::{
    AttributeBounds, AttributeEvaluation, CatalogEntry, CostConfig, EventSample, QueueState, SlotRecord, SystemModel,
    Trace, TOL,
};
use crate::rng::CounterRng;

/// Largest lifted catalog entry the oracle will build for one event.
const LIFT_ACTION_CAP: usize = 1 << 16;

/// `rates[i][j]`: rate offered by link `(i, j)`.
pub type RateMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultihopSession {
    pub source: usize,
    pub dest: usize,
    pub a_max: f64,
    pub utility: Utility,
}

/// Arrivals and the resource options available in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEvent {
    #[serde(default)]
    pub state: usize,
    pub arrivals: Vec<f64>,
    pub options: Vec<RateMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasWeights {
    /// `theta[i][c]`: estimated distance from node `i` to destination `c`.
    pub theta: Vec<Vec<f64>>,
}

impl BiasWeights {
    pub fn zero(n: usize) -> Self {
        BiasWeights { theta: vec![vec![0.0; n]; n] }
    }

    /// Hop counts in the graph of links with positive peak rate, times
    /// `scale`. Unreachable pairs count as `n` hops.
    pub fn hop_count(mu_max: &[Vec<f64>], scale: f64) -> Self {
        let n = mu_max.len();
        let mut theta = vec![vec![0.0; n]; n];
        for c in 0..n {
            let mut hops = vec![usize::MAX; n];
            hops[c] = 0;
            let mut queue = VecDeque::from([c]);
            while let Some(u) = queue.pop_front() {
                for i in 0..n {
                    if mu_max[i][u] > 0.0 && hops[i] == usize::MAX {
                        hops[i] = hops[u] + 1;
                        queue.push_back(i);
                    }
                }
            }
            for i in 0..n {
                theta[i][c] = scale * hops[i].min(n) as f64;
            }
        }
        BiasWeights { theta }
    }

    pub fn theta_diff(&self) -> f64 {
        let n = self.theta.len();
        let mut diff: f64 = 0.0;
        for c in 0..n {
            let (lo, hi) = self.theta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| (lo.min(row[c]), hi.max(row[c])));
            diff = diff.max(hi - lo);
        }
        diff
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.theta.len() != n || self.theta.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("bias weights must be {n} x {n}")));
        }
        if self.theta.iter().flatten().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Config("bias weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasSpec {
    #[default]
    Zero,
    HopCount {
        scale: f64,
    },
    Explicit {
        theta: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct MultihopModel {
    pub n: usize,
    /// Peak rate per link; every option must stay below it.
    pub mu_max: RateMatrix,
    pub sessions: Vec<MultihopSession>,
    /// `x_max[n][c]`: largest exogenous commodity-`c` arrival at node `n`.
    pub x_max: Vec<Vec<f64>>,
    /// Largest one-slot inflow of any single commodity to each node.
    pub beta: Vec<f64>,
}

impl MultihopModel {
    pub fn new(mu_max: RateMatrix, sessions: Vec<MultihopSession>) -> Result<Self> {
        let n = mu_max.len();
        if n == 0 || mu_max.iter().any(|r| r.len() != n) {
            return Err(Error::Config("peak rate matrix must be square and non-empty".into()));
        }
        for i in 0..n {
            ensure_finite("peak rate", &mu_max[i])?;
            if mu_max[i].iter().any(|r| *r < 0.0) || mu_max[i][i] != 0.0 {
                return Err(Error::Config(format!("peak rates out of node {i} must be non-negative with no self-link")));
            }
        }
        let mut x_max = vec![vec![0.0; n]; n];
        for (m, s) in sessions.iter().enumerate() {
            if s.source >= n || s.dest >= n || s.source == s.dest {
                return Err(Error::Config(format!("session {m} has bad endpoints")));
            }
            if !(s.a_max >= 0.0) || !s.a_max.is_finite() {
                return Err(Error::Config(format!("session {m} needs a finite non-negative A_max")));
            }
            s.utility.validate()?;
            x_max[s.source][s.dest] += s.a_max;
        }
        let beta = (0..n)
            .map(|j| {
                let inflow: f64 = (0..n).map(|i| mu_max[i][j]).sum();
                inflow + (0..n).filter(|&c| c != j).map(|c| x_max[j][c]).fold(0.0, f64::max)
            })
            .collect();
        Ok(MultihopModel { n, mu_max, sessions, x_max, beta })
    }

    pub fn nu_max(&self) -> f64 {
        self.sessions.iter().map(|s| s.utility.nu()).fold(0.0, f64::max)
    }

    pub fn a_max(&self) -> f64 {
        self.sessions.iter().map(|s| s.a_max).fold(0.0, f64::max)
    }

    pub fn beta_max(&self) -> f64 {
        self.beta.iter().cloned().fold(0.0, f64::max)
    }

    pub fn qmax(&self, v: f64) -> f64 {
        compute_qmax(v, self.nu_max(), self.a_max(), self.beta_max())
    }

    pub fn h_band(&self, v: f64, m: usize) -> (f64, f64) {
        let s = &self.sessions[m];
        (-s.a_max, v * s.utility.nu() + s.a_max)
    }

    pub fn bias(&self, spec: &BiasSpec) -> Result<BiasWeights> {
        let w = match spec {
            BiasSpec::Zero => BiasWeights::zero(self.n),
            BiasSpec::HopCount { scale } => {
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(Error::Config("hop-count scale must be finite and non-negative".into()));
                }
                BiasWeights::hop_count(&self.mu_max, *scale)
            }
            BiasSpec::Explicit { theta } => BiasWeights { theta: theta.clone() },
        };
        w.validate(self.n)?;
        Ok(w)
    }

    /// Largest total rate over the options of `events`, or of the peak rates
    /// when no events are given.
    pub fn c_sum(&self, events: &[TopologyEvent]) -> f64 {
        let sum = |r: &RateMatrix| r.iter().flatten().sum::<f64>();
        if events.is_empty() {
            sum(&self.mu_max)
        } else {
            events.iter().flat_map(|e| &e.options).map(sum).fold(0.0, f64::max)
        }
    }

    /// Per-node rate limits for the network `B` and `D`, taken over the
    /// options of `events` (or the peak rates when none are given).
    pub fn describe(&self, events: &[TopologyEvent]) -> NetworkDescription {
        let n = self.n;
        let peak = [self.mu_max.clone()];
        let opts: Vec<&RateMatrix> =
            if events.is_empty() { peak.iter().collect() } else { events.iter().flat_map(|e| &e.options).collect() };
        let (mut mu_in, mut mu_out, mut mu_sum) = (vec![0.0f64; n], vec![0.0f64; n], vec![0.0f64; n]);
        for r in opts {
            for k in 0..n {
                let i: f64 = (0..n).map(|j| r[j][k]).sum();
                let o: f64 = r[k].iter().sum();
                mu_in[k] = mu_in[k].max(i);
                mu_out[k] = mu_out[k].max(o);
                mu_sum[k] = mu_sum[k].max(i + o);
            }
        }
        let e = (0..n)
            .map(|k| (0..n).filter(|&c| c != k).map(|c| mu_out[k].max(mu_in[k] + self.x_max[k][c])).fold(0.0, f64::max))
            .collect();
        NetworkDescription {
            mu_sum_max: mu_sum,
            mu_in_max: mu_in,
            x_max: self.x_max.clone(),
            e,
            session_a_max: self.sessions.iter().map(|s| s.a_max).collect(),
        }
    }

    pub fn validate_event(&self, ev: &TopologyEvent) -> Result<()> {
        if ev.arrivals.len() != self.sessions.len() {
            return Err(Error::Config(format!("{} arrivals for {} sessions", ev.arrivals.len(), self.sessions.len())));
        }
        ensure_finite("arrival", &ev.arrivals)?;
        for (m, a) in ev.arrivals.iter().enumerate() {
            if *a < 0.0 || *a > self.sessions[m].a_max + TOL {
                return Err(Error::ModelInvariant(format!("arrival {a} for session {m} outside [0, A_max]")));
            }
        }
        if ev.options.is_empty() {
            return Err(Error::Config(format!("topology state {} offers no resource option", ev.state)));
        }
        for (k, r) in ev.options.iter().enumerate() {
            if r.len() != self.n || r.iter().any(|row| row.len() != self.n) {
                return Err(Error::Config(format!("option {k} is not {} x {}", self.n, self.n)));
            }
            for i in 0..self.n {
                ensure_finite("rate", &r[i])?;
                for j in 0..self.n {
                    if r[i][j] < 0.0 || r[i][j] > self.mu_max[i][j] + TOL || (i == j && r[i][j] != 0.0) {
                        return Err(Error::ModelInvariant(format!("option {k} rate {} on ({i}, {j}) outside [0, peak]", r[i][j])));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Admit everything when the source queue is at most `H`.
pub fn flow_control(arrivals: f64, h: f64, q_source: f64) -> f64 {
    if q_source <= h {
        arrivals
    } else {
        0.0
    }
}

/// `V nu_max + A_max + beta_max`.
pub fn compute_qmax(v: f64, nu_max: f64, a_max: f64, beta_max: f64) -> f64 {
    v * nu_max + a_max + beta_max
}

/// Weight of link `(i, j)` and the commodity achieving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkWeight {
    pub weight: f64,
    pub commodity: Option<usize>,
}

/// Receiver gating for the bounded-queue weights.
#[derive(Debug, Clone, Copy)]
pub struct Gate<'a> {
    pub bias: &'a BiasWeights,
    pub qmax: f64,
    pub beta: &'a [f64],
}

/// Per-commodity weight: the differential backlog, or the gated biased
/// version when `gate` is given.
pub fn commodity_weight(q: &[Vec<f64>], i: usize, j: usize, c: usize, gate: Option<Gate>) -> f64 {
    let w = q[i][c] - q[j][c];
    match gate {
        None => w,
        Some(g) if q[j][c] <= g.qmax - g.beta[j] => w + g.bias.theta[i][c] - g.bias.theta[j][c],
        Some(_) => -1.0,
    }
}

/// `max_c max(weight_c, 0)` per link, with the lowest maximizing commodity.
/// Commodity `i` never leaves node `i`.
pub fn link_weights(q: &[Vec<f64>], gate: Option<Gate>) -> Vec<Vec<LinkWeight>> {
    let n = q.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut best = LinkWeight { weight: 0.0, commodity: None };
                    if i != j {
                        let mut top = f64::NEG_INFINITY;
                        for c in (0..n).filter(|&c| c != i) {
                            let w = commodity_weight(q, i, j, c, gate);
                            if w > top {
                                top = w;
                                best.commodity = Some(c);
                            }
                        }
                        best.weight = top.max(0.0);
                    }
                    best
                })
                .collect()
        })
        .collect()
}

fn option_score(rates: &RateMatrix, w: &[Vec<LinkWeight>]) -> f64 {
    rates.iter().zip(w).map(|(r, w)| r.iter().zip(w).map(|(c, w)| c * w.weight).sum::<f64>()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptionRule {
    /// Highest score, lowest index on ties.
    #[default]
    MaxWeight,
    /// Uniform among all options, by slot.
    Random { seed: u64 },
    Fixed { index: usize },
    /// The lowest-scoring option among those within a factor `theta` of the
    /// best.
    Multiplicative { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransmitMode {
    #[default]
    Exact,
    Capprox,
}

/// Commodity-`commodity` data offered over `(from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub from: usize,
    pub to: usize,
    pub commodity: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub option: usize,
    pub flows: Vec<Flow>,
    /// Score of the chosen option under the weights used for the decision.
    pub score: f64,
}

fn select_option(options: &[RateMatrix], w: &[Vec<LinkWeight>], rule: OptionRule, slot: usize) -> Result<usize> {
    if options.is_empty() {
        return Err(Error::Config("no resource option to choose from".into()));
    }
    let scores: Vec<f64> = options.iter().map(|r| option_score(r, w)).collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    match rule {
        OptionRule::MaxWeight => Ok(best),
        OptionRule::Random { seed } => Ok(CounterRng::new(seed).index_at(2, slot as u64, options.len())),
        OptionRule::Fixed { index } => {
            if index < options.len() {
                Ok(index)
            } else {
                Err(Error::OutOfRange(format!("option {index} of {}", options.len())))
            }
        }
        OptionRule::Multiplicative { theta } => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::Config(format!("theta must lie in (0, 1], got {theta}")));
            }
            let floor = theta * scores[best];
            Ok((0..scores.len()).filter(|&i| scores[i] >= floor).fold(best, |w, i| if scores[i] < scores[w] { i } else { w }))
        }
    }
}

/// Offers each link's full rate to its best commodity when that weight is
/// strictly positive. With zero weight nothing is sent, so empty networks
/// stay empty.
fn flows_for(rates: &RateMatrix, w: &[Vec<LinkWeight>]) -> Vec<Flow> {
    let mut flows = Vec::new();
    for (i, row) in rates.iter().enumerate() {
        for (j, &rate) in row.iter().enumerate() {
            if let Some(c) = w[i][j].commodity {
                if rate > 0.0 && w[i][j].weight > 0.0 {
                    flows.push(Flow { from: i, to: j, commodity: c, rate });
                }
            }
        }
    }
    flows
}

fn transmit(q: &[Vec<f64>], options: &[RateMatrix], gate: Option<Gate>, rule: OptionRule, slot: usize) -> Result<Transmission> {
    let w = link_weights(q, gate);
    let option = select_option(options, &w, rule, slot)?;
    Ok(Transmission { option, flows: flows_for(&options[option], &w), score: option_score(&options[option], &w) })
}

/// Max-weight allocation on differential backlogs.
pub fn maxweight_transmit(q: &[Vec<f64>], options: &[RateMatrix]) -> Result<Transmission> {
    transmit(q, options, None, OptionRule::MaxWeight, 0)
}

/// Max-weight on the receiver-gated biased weights.
pub fn capprox_transmit(q: &[Vec<f64>], options: &[RateMatrix], bias: &BiasWeights, qmax: f64, beta: &[f64]) -> Result<Transmission> {
    transmit(q, options, Some(Gate { bias, qmax, beta }), OptionRule::MaxWeight, 0)
}

/// `max(Q - out, 0) + in + exogenous`, destinations emptied.
pub fn commodity_queue_update(q: &[Vec<f64>], flows: &[Flow], exogenous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let mut out = vec![vec![0.0; n]; n];
    let mut inflow = vec![vec![0.0; n]; n];
    for f in flows {
        out[f.from][f.commodity] += f.rate;
        inflow[f.to][f.commodity] += f.rate;
    }
    (0..n)
        .map(|k| (0..n).map(|c| if k == c { 0.0 } else { (q[k][c] - out[k][c]).max(0.0) + inflow[k][c] + exogenous[k][c] }).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapproxCheck {
    /// Best `sum C_ij W_ij` over the options.
    pub exact: f64,
    /// `sum C_ij W_ij` at the option chosen on gated weights.
    pub achieved: f64,
    /// `sum mu W` of the flows actually offered, one commodity per link.
    pub achieved_flows: f64,
    pub gap: f64,
    /// `|sum C_ij (W_ij - W^_ij)|` at the chosen option.
    pub intermediate: f64,
    pub holds: bool,
}

/// Compares the gated policy against exact max-weight on one state.
pub fn verify_capprox(
    q: &[Vec<f64>],
    options: &[RateMatrix],
    bias: &BiasWeights,
    qmax: f64,
    beta: &[f64],
    c: f64,
) -> Result<CapproxCheck> {
    let w = link_weights(q, None);
    let exact = options.iter().map(|r| option_score(r, &w)).fold(f64::NEG_INFINITY, f64::max);
    let gate = Gate { bias, qmax, beta };
    let hat = link_weights(q, Some(gate));
    let chosen = select_option(options, &hat, OptionRule::MaxWeight, 0)?;
    let rates = &options[chosen];
    let achieved = option_score(rates, &w);
    let achieved_flows = flows_for(rates, &hat).iter().map(|f| f.rate * (q[f.from][f.commodity] - q[f.to][f.commodity])).sum();
    let intermediate = (option_score(rates, &w) - option_score(rates, &hat)).abs();
    let gap = exact - achieved;
    let holds = gap <= c + 1e-9 && intermediate <= c / 2.0 + 1e-9;
    Ok(CapproxCheck { exact, achieved, achieved_flows, gap, intermediate, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MultihopPolicy {
    #[serde(default)]
    pub mode: TransmitMode,
    #[serde(default)]
    pub rule: OptionRule,
    #[serde(default)]
    pub bias: BiasSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultihopState {
    /// `q[n][c]`: commodity-`c` backlog at node `n`.
    pub q: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub slot: usize,
}

impl MultihopState {
    pub fn zeros(model: &MultihopModel) -> Self {
        MultihopState { q: vec![vec![0.0; model.n]; model.n], h: vec![0.0; model.sessions.len()], slot: 0 }
    }

    pub fn max_q(&self) -> f64 {
        self.q.iter().flatten().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultihopRecord {
    pub slot: usize,
    pub gamma: Vec<f64>,
    pub x: Vec<f64>,
    pub transmission: Transmission,
    pub state_after: MultihopState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultihopTrace {
    pub initial: MultihopState,
    pub records: Vec<MultihopRecord>,
}

impl MultihopTrace {
    pub fn state_at(&self, t: usize) -> &MultihopState {
        if t == 0 {
            &self.initial
        } else {
            &self.records[t - 1].state_after
        }
    }
}

pub fn multihop_step(
    model: &MultihopModel,
    state: &MultihopState,
    event: &TopologyEvent,
    v: f64,
    policy: &MultihopPolicy,
    bias: &BiasWeights,
) -> Result<MultihopRecord> {
    model.validate_event(event)?;
    let mm = model.sessions.len();
    let gamma: Vec<f64> = (0..mm).map(|m| aux_update(state.h[m], v, &model.sessions[m].utility, model.sessions[m].a_max)).collect();
    let x: Vec<f64> = (0..mm)
        .map(|m| {
            let s = &model.sessions[m];
            flow_control(event.arrivals[m], state.h[m], state.q[s.source][s.dest])
        })
        .collect();
    let qmax = model.qmax(v);
    let gate = match policy.mode {
        TransmitMode::Exact => None,
        TransmitMode::Capprox => Some(Gate { bias, qmax, beta: &model.beta }),
    };
    let transmission = transmit(&state.q, &event.options, gate, policy.rule, state.slot)?;
    let mut exogenous = vec![vec![0.0; model.n]; model.n];
    for (m, s) in model.sessions.iter().enumerate() {
        exogenous[s.source][s.dest] += x[m];
    }
    let q = commodity_queue_update(&state.q, &transmission.flows, &exogenous);
    let h = (0..mm).map(|m| state.h[m] + gamma[m] - x[m]).collect();
    Ok(MultihopRecord { slot: state.slot, gamma, x, transmission, state_after: MultihopState { q, h, slot: state.slot + 1 } })
}

pub fn run_multihop(
    model: &MultihopModel,
    events: &[TopologyEvent],
    v: f64,
    policy: &MultihopPolicy,
    initial: &MultihopState,
) -> Result<MultihopTrace> {
    let n = model.n;
    if initial.q.len() != n || initial.q.iter().any(|r| r.len() != n) || initial.h.len() != model.sessions.len() || initial.slot != 0 {
        return Err(Error::Precondition("initial state does not match the model".into()));
    }
    let bias = model.bias(&policy.bias)?;
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(events.len());
    for ev in events {
        let rec = multihop_step(model, &state, ev, v, policy, &bias)?;
        state = rec.state_after.clone();
        records.push(rec);
    }
    Ok(MultihopTrace { initial: initial.clone(), records })
}

/// Queue `(n, c)` as a flat index.
fn flat(n_nodes: usize, n: usize, c: usize) -> usize {
    n * n_nodes + c
}

fn evaluation(model: &MultihopModel, flows: &[Flow], x: &[f64]) -> AttributeEvaluation {
    let n = model.n;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for f in flows {
        b[flat(n, f.from, f.commodity)] += f.rate;
        if f.to != f.commodity {
            a[flat(n, f.to, f.commodity)] += f.rate;
        }
    }
    for (m, s) in model.sessions.iter().enumerate() {
        a[flat(n, s.source, s.dest)] += x[m];
    }
    AttributeEvaluation { a, b, x: x.to_vec(), y: vec![0.0] }
}

/// The model in general form. Each action picks, per session, dropping or
/// admitting all arrivals, a resource option, and per active link either
/// silence or one commodity at the full rate. Returns the model and the
/// event sequence on its catalog.
pub fn lift(model: &MultihopModel, events: &[TopologyEvent]) -> Result<(SystemModel, Vec<EventSample>)> {
    let (n, mm) = (model.n, model.sessions.len());
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut catalog: Vec<CatalogEntry> = Vec::new();
    let mut samples = Vec::with_capacity(events.len());
    for (t, ev) in events.iter().enumerate() {
        model.validate_event(ev)?;
        let key: Vec<u64> = ev.arrivals.iter().chain(ev.options.iter().flatten().flatten()).map(|v| v.to_bits()).collect();
        let id = match index.get(&key) {
            Some(&id) => id,
            None => {
                let mut seen = BTreeSet::new();
                let mut actions = Vec::new();
                let admit: Vec<Vec<f64>> =
                    ev.arrivals.iter().map(|&a| if a > 0.0 { vec![0.0, a] } else { vec![0.0] }).collect();
                for rates in &ev.options {
                    let links: Vec<(usize, usize)> =
                        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| rates[i][j] > 0.0).collect();
                    // Per link: silent, or one commodity other than the sender.
                    let choices: Vec<Vec<Option<usize>>> = links
                        .iter()
                        .map(|&(i, _)| std::iter::once(None).chain((0..n).filter(|&c| c != i).map(Some)).collect())
                        .collect();
                    let mut li = vec![0usize; links.len()];
                    loop {
                        let flows: Vec<Flow> = links
                            .iter()
                            .enumerate()
                            .filter_map(|(k, &(i, j))| choices[k][li[k]].map(|c| Flow { from: i, to: j, commodity: c, rate: rates[i][j] }))
                            .collect();
                        let mut xi = vec![0usize; mm];
                        loop {
                            let x: Vec<f64> = (0..mm).map(|m| admit[m][xi[m]]).collect();
                            let ev = evaluation(model, &flows, &x);
                            let bits: Vec<u64> = ev.a.iter().chain(&ev.b).chain(&ev.x).map(|v| v.to_bits()).collect();
                            if seen.insert(bits) {
                                actions.push(ev);
                                if actions.len() > LIFT_ACTION_CAP {
                                    return Err(Error::Unsupported(format!("event at slot {t} lifts to more than {LIFT_ACTION_CAP} actions")));
                                }
                            }
                            if !advance_odometer(&mut xi, |m| admit[m].len()) {
                                break;
                            }
                        }
                        if !advance_odometer(&mut li, |k| choices[k].len()) {
                            break;
                        }
                    }
                }
                catalog.push(CatalogEntry { actions });
                index.insert(key, catalog.len() - 1);
                catalog.len() - 1
            }
        };
        samples.push(EventSample { slot: t, event_id: id });
    }
    if catalog.is_empty() {
        catalog.push(CatalogEntry { actions: vec![AttributeEvaluation::idle(n * n, 0, mm)] });
    }
    let mut a_max = vec![0.0; n * n];
    let mut b_max = vec![0.0; n * n];
    for k in 0..n {
        let out: f64 = model.mu_max[k].iter().sum();
        let inflow: f64 = (0..n).map(|i| model.mu_max[i][k]).sum();
        for c in (0..n).filter(|&c| c != k) {
            b_max[flat(n, k, c)] = out;
            a_max[flat(n, k, c)] = inflow + model.x_max[k][c];
        }
    }
    let bounds = AttributeBounds {
        a_max,
        b_max,
        x_min: vec![0.0; mm],
        x_max: model.sessions.iter().map(|s| s.a_max).collect(),
        y_min: vec![0.0],
        y_max: vec![0.0],
    };
    let cost = CostConfig {
        f: CostFn::separable(model.sessions.iter().map(|s| s.utility.as_cost()).collect()),
        g: vec![],
        x_set: None,
    };
    Ok((SystemModel::new(catalog, cost, Some(bounds))?, samples))
}

/// Increments a mixed-radix counter; false once it wraps to zero.
fn advance_odometer(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for p in (0..idx.len()).rev() {
        idx[p] += 1;
        if idx[p] < radix(p) {
            return true;
        }
        idx[p] = 0;
    }
    false
}

/// The run as a general trace with queues indexed `n * N + c`.
pub fn to_general_trace(trace: &MultihopTrace, model: &MultihopModel) -> Trace {
    let conv = |s: &MultihopState| QueueState { z: vec![], q: s.q.iter().flatten().copied().collect(), h: s.h.clone(), slot: s.slot };
    let records = trace
        .records
        .iter()
        .map(|r| SlotRecord {
            slot: r.slot,
            event_id: 0,
            action: 0,
            gamma: r.gamma.clone(),
            eval: evaluation(model, &r.transmission.flows, &r.x),
            queues_after: conv(&r.state_after),
            objective_term: 0.0,
            decision_gap: 0.0,
        })
        .collect();
    Trace { initial: conv(&trace.initial), records }
}

pub fn utility(model: &MultihopModel, x: &[f64]) -> f64 {
    model.sessions.iter().zip(x).map(|(s, v)| s.utility.eval(*v)).sum()
}
