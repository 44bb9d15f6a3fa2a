//! Flow-based network: per-session admission and single-path routing over
//! congestion-weighted shortest paths, using only virtual queues.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cost::{minimize_scalar, CostFn, Interval, ScalarConvex};
use crate::error::{ensure_finite, Error, Result};
use crate::model::{
    AttributeBounds, AttributeEvaluation, CatalogEntry, CostConfig, EventSample, QueueState, SlotRecord, SystemModel,
    Trace, TOL,
};

/// Cap on simple paths enumerated when deriving link membership or lifting
/// to the general form.
const PATH_ENUM_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub c_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub n: usize,
    pub links: Vec<Link>,
}

impl FlowNetwork {
    /// Outgoing links per node, ordered by head node then link index.
    fn out_links(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (i, l) in self.links.iter().enumerate() {
            out[l.from].push(i);
        }
        for adj in &mut out {
            adj.sort_by_key(|&i| (self.links[i].to, i));
        }
        out
    }

    /// Node sequence visited by a link path starting at `src`.
    pub fn nodes_of(&self, src: usize, path: &[usize]) -> Vec<usize> {
        std::iter::once(src).chain(path.iter().map(|&l| self.links[l].to)).collect()
    }

    fn check_path(&self, src: usize, dst: usize, path: &[usize]) -> Result<()> {
        let mut at = src;
        let mut seen = BTreeSet::from([src]);
        for &l in path {
            let link = self.links.get(l).ok_or_else(|| Error::Config(format!("path uses unknown link {l}")))?;
            if link.from != at || !seen.insert(link.to) {
                return Err(Error::Config(format!("path {path:?} is not a simple path from {src}")));
            }
            at = link.to;
        }
        if at != dst || path.is_empty() {
            return Err(Error::Config(format!("path {path:?} does not end at {dst}")));
        }
        Ok(())
    }

    /// Simple paths from `src` to `dst` in lexicographic node order, up to
    /// `cap` of them. Returns `None` when the cap is hit.
    pub fn simple_paths(&self, src: usize, dst: usize, cap: usize) -> Option<Vec<Vec<usize>>> {
        let out = self.out_links();
        let mut paths = Vec::new();
        let mut visited = vec![false; self.n];
        let mut stack = Vec::new();
        fn go(
            net: &FlowNetwork,
            out: &[Vec<usize>],
            at: usize,
            dst: usize,
            visited: &mut [bool],
            stack: &mut Vec<usize>,
            paths: &mut Vec<Vec<usize>>,
            cap: usize,
        ) -> bool {
            if at == dst {
                paths.push(stack.clone());
                return paths.len() <= cap;
            }
            visited[at] = true;
            for &l in &out[at] {
                let next = net.links[l].to;
                if !visited[next] {
                    stack.push(l);
                    let ok = go(net, out, next, dst, visited, stack, paths, cap);
                    stack.pop();
                    if !ok {
                        return false;
                    }
                }
            }
            visited[at] = false;
            true
        }
        if src == dst || !go(self, &out, src, dst, &mut visited, &mut stack, &mut paths, cap) {
            return None;
        }
        Some(paths)
    }

    fn reach(&self, from: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            for l in &self.links {
                let (a, b) = if forward { (l.from, l.to) } else { (l.to, l.from) };
                if a == u && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }
}

/// Concave non-decreasing session utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// `weight * x`.
    Linear { weight: f64 },
    /// `weight * ln(shift + x)`.
    Log { weight: f64, shift: f64 },
}

impl Utility {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear { weight } => weight * x,
            Utility::Log { weight, shift } => weight * (shift + x).ln(),
        }
    }

    /// Largest right derivative on `[0, inf)`.
    pub fn nu(&self) -> f64 {
        match *self {
            Utility::Linear { weight } => weight,
            Utility::Log { weight, shift } => weight / shift,
        }
    }

    /// The negated utility as a convex cost term.
    pub fn as_cost(&self) -> ScalarConvex {
        match *self {
            Utility::Linear { weight } => ScalarConvex::Affine { slope: -weight, offset: 0.0 },
            Utility::Log { weight, shift } => ScalarConvex::NegLog { weight, shift },
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = match *self {
            Utility::Linear { weight } => weight >= 0.0 && weight.is_finite(),
            Utility::Log { weight, shift } => weight >= 0.0 && weight.is_finite() && shift > 0.0 && shift.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{self:?} is not a finite concave non-decreasing utility")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathPolicy {
    /// Any simple path from source to destination.
    #[default]
    AllSimple,
    /// A fixed list of link-index paths.
    Explicit { paths: Vec<Vec<usize>> },
    /// Slot `t` may use the list at position `t mod len`.
    PerSlot { lists: Vec<Vec<Vec<usize>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub source: usize,
    pub dest: usize,
    pub a_max: f64,
    pub utility: Utility,
    #[serde(default)]
    pub paths: PathPolicy,
}

/// Capacities and arrivals of one slot. When `options` is present the link
/// capacities are chosen among them by the allocation rule and `capacities`
/// is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternetEvent {
    #[serde(default)]
    pub capacities: Vec<f64>,
    pub arrivals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct InternetModel {
    pub network: FlowNetwork,
    pub sessions: Vec<Session>,
    /// `membership[l][m]`: link `l` can carry session `m`.
    pub membership: Vec<Vec<bool>>,
}

impl InternetModel {
    pub fn new(network: FlowNetwork, sessions: Vec<Session>) -> Result<Self> {
        for (i, l) in network.links.iter().enumerate() {
            if l.from >= network.n || l.to >= network.n || l.from == l.to {
                return Err(Error::Config(format!("link {i} has bad endpoints ({}, {})", l.from, l.to)));
            }
            if !(l.c_max >= 0.0) || !l.c_max.is_finite() {
                return Err(Error::Config(format!("link {i} needs a finite non-negative capacity")));
            }
        }
        let mut membership = vec![vec![false; sessions.len()]; network.links.len()];
        for (m, s) in sessions.iter().enumerate() {
            if s.source >= network.n || s.dest >= network.n || s.source == s.dest {
                return Err(Error::Config(format!("session {m} has bad endpoints")));
            }
            if !(s.a_max >= 0.0) || !s.a_max.is_finite() {
                return Err(Error::Config(format!("session {m} needs a finite non-negative A_max")));
            }
            s.utility.validate()?;
            let lists: Vec<&Vec<usize>> = match &s.paths {
                PathPolicy::AllSimple => Vec::new(),
                PathPolicy::Explicit { paths } => paths.iter().collect(),
                PathPolicy::PerSlot { lists } => {
                    if lists.is_empty() {
                        return Err(Error::Config(format!("session {m} has an empty per-slot schedule")));
                    }
                    lists.iter().flatten().collect()
                }
            };
            for p in &lists {
                network.check_path(s.source, s.dest, p)?;
                for &l in p.iter() {
                    membership[l][m] = true;
                }
            }
            if matches!(s.paths, PathPolicy::AllSimple) {
                match network.simple_paths(s.source, s.dest, PATH_ENUM_CAP) {
                    Some(paths) => paths.iter().flatten().for_each(|&l| membership[l][m] = true),
                    None => {
                        // Too many paths to list: fall back to a superset.
                        let fwd = network.reach(s.source, true);
                        let back = network.reach(s.dest, false);
                        for (l, link) in network.links.iter().enumerate() {
                            membership[l][m] = fwd[link.from] && back[link.to];
                        }
                    }
                }
            }
        }
        Ok(InternetModel { network, sessions, membership })
    }

    pub fn num_links(&self) -> usize {
        self.network.links.len()
    }

    pub fn nu_max(&self) -> f64 {
        self.sessions.iter().map(|s| s.utility.nu()).fold(0.0, f64::max)
    }

    pub fn a_max(&self) -> f64 {
        self.sessions.iter().map(|s| s.a_max).fold(0.0, f64::max)
    }

    /// `V nu_max + (M + 1) A_max`.
    pub fn z_bound(&self, v: f64) -> f64 {
        v * self.nu_max() + (self.sessions.len() as f64 + 1.0) * self.a_max()
    }

    /// `(-A_m_max, V nu_m + A_m_max)`.
    pub fn h_band(&self, v: f64, m: usize) -> (f64, f64) {
        let s = &self.sessions[m];
        (-s.a_max, v * s.utility.nu() + s.a_max)
    }

    pub fn z_diff(&self) -> Vec<f64> {
        self.network
            .links
            .iter()
            .enumerate()
            .map(|(l, link)| {
                let carried: f64 = (0..self.sessions.len()).filter(|&m| self.membership[l][m]).map(|m| self.sessions[m].a_max).sum();
                link.c_max.max(carried)
            })
            .collect()
    }

    /// `B = D = 1/2 sum z_diff^2 + 1/2 sum A_max^2`.
    pub fn constant_b_d(&self) -> f64 {
        0.5 * self.z_diff().iter().map(|z| z * z).sum::<f64>() + 0.5 * self.sessions.iter().map(|s| s.a_max * s.a_max).sum::<f64>()
    }

    fn slot_paths(&self, m: usize, slot: usize) -> Option<&[Vec<usize>]> {
        match &self.sessions[m].paths {
            PathPolicy::AllSimple => None,
            PathPolicy::Explicit { paths } => Some(paths),
            PathPolicy::PerSlot { lists } => Some(&lists[slot % lists.len()]),
        }
    }

    pub fn validate_event(&self, ev: &InternetEvent) -> Result<()> {
        if ev.arrivals.len() != self.sessions.len() {
            return Err(Error::Config(format!("{} arrivals for {} sessions", ev.arrivals.len(), self.sessions.len())));
        }
        ensure_finite("arrival", &ev.arrivals)?;
        for (m, a) in ev.arrivals.iter().enumerate() {
            if *a < 0.0 || *a > self.sessions[m].a_max + TOL {
                return Err(Error::ModelInvariant(format!("arrival {a} for session {m} outside [0, A_max]")));
            }
        }
        let check_caps = |caps: &[f64]| -> Result<()> {
            if caps.len() != self.num_links() {
                return Err(Error::Config(format!("{} capacities for {} links", caps.len(), self.num_links())));
            }
            ensure_finite("capacity", caps)?;
            for (l, c) in caps.iter().enumerate() {
                if *c < 0.0 || *c > self.network.links[l].c_max + TOL {
                    return Err(Error::ModelInvariant(format!("capacity {c} on link {l} outside [0, C_max]")));
                }
            }
            Ok(())
        };
        match &ev.options {
            Some(opts) if opts.is_empty() => Err(Error::Config("empty capacity option list".into())),
            Some(opts) => opts.iter().try_for_each(|o| check_caps(o)),
            None => check_caps(&ev.capacities),
        }
    }
}

/// `argmax V phi(gamma) - H gamma` over `[0, A_max]`.
pub fn aux_update(h: f64, v: f64, utility: &Utility, a_max: f64) -> f64 {
    let term = utility.as_cost();
    minimize_scalar(&[(v, &term)], h, &Interval::new(0.0, a_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub x: f64,
    /// Link indices of the chosen path when data is admitted.
    pub path: Option<Vec<usize>>,
    /// Weight of the shortest path found.
    pub weight: f64,
}

fn path_weight(path: &[usize], z: &[f64]) -> f64 {
    path.iter().map(|&l| z[l]).sum()
}

/// Minimum-weight simple path, ties to the lexicographically smallest node
/// sequence. Dijkstra distances to the destination prune a depth-first search
/// that visits paths in lexicographic order.
pub fn shortest_path(network: &FlowNetwork, src: usize, dst: usize, z: &[f64]) -> Option<(Vec<usize>, f64)> {
    let n = network.n;
    // Reverse Dijkstra: distance from every node to dst.
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[dst] = 0.0;
    for _ in 0..n {
        let u = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
        done[u] = true;
        for (l, link) in network.links.iter().enumerate() {
            if link.to == u && dist[u] + z[l] < dist[link.from] {
                dist[link.from] = dist[u] + z[l];
            }
        }
        if done[src] {
            break;
        }
    }
    if !dist[src].is_finite() {
        return None;
    }
    let out = network.out_links();
    let slack = |w: f64| 1e-12 * (1.0 + w.abs());
    struct Dfs<'a> {
        net: &'a FlowNetwork,
        out: &'a [Vec<usize>],
        z: &'a [f64],
        dist: &'a [f64],
        dst: usize,
        visited: Vec<bool>,
        stack: Vec<usize>,
        best: Option<(Vec<usize>, f64)>,
        target: f64,
    }
    impl Dfs<'_> {
        fn go(&mut self, at: usize, w: f64, slack: &dyn Fn(f64) -> f64) {
            if at == self.dst {
                if self.best.as_ref().map_or(true, |(_, b)| w < *b) {
                    self.best = Some((self.stack.clone(), w));
                }
                return;
            }
            let bound = self.best.as_ref().map_or(self.target, |(_, b)| *b);
            if w + self.dist[at] > bound + slack(bound) {
                return;
            }
            self.visited[at] = true;
            for i in 0..self.out[at].len() {
                let l = self.out[at][i];
                let next = self.net.links[l].to;
                if !self.visited[next] && self.dist[next].is_finite() {
                    self.stack.push(l);
                    self.go(next, w + self.z[l], slack);
                    self.stack.pop();
                }
            }
            self.visited[at] = false;
        }
    }
    let mut dfs = Dfs {
        net: network,
        out: &out,
        z,
        dist: &dist,
        dst,
        visited: vec![false; n],
        stack: Vec::new(),
        best: None,
        target: dist[src],
    };
    dfs.go(src, 0.0, &slack);
    dfs.best
}

/// Admits all arrivals on the lightest allowed path when its weight is at
/// most `H`, otherwise drops them.
pub fn route_and_admit(
    model: &InternetModel,
    m: usize,
    arrivals: f64,
    h: f64,
    z: &[f64],
    slot: usize,
) -> Result<Admission> {
    let s = &model.sessions[m];
    let found = match model.slot_paths(m, slot) {
        None => shortest_path(&model.network, s.source, s.dest, z),
        Some(paths) => paths
            .iter()
            .map(|p| (p.clone(), path_weight(p, z)))
            .min_by(|(pa, wa), (pb, wb)| {
                wa.total_cmp(wb)
                    .then_with(|| model.network.nodes_of(s.source, pa).cmp(&model.network.nodes_of(s.source, pb)))
            }),
    };
    let (path, weight) = found.ok_or(Error::NoPath { session: m })?;
    Ok(if weight <= h {
        Admission { x: arrivals, path: Some(path), weight }
    } else {
        Admission { x: 0.0, path: None, weight }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocMode {
    #[default]
    Exact,
    /// Accepts any option scoring at least `theta` times the best; the
    /// lowest-scoring acceptable option is taken.
    Multiplicative { theta: f64 },
}

/// Picks the capacity option maximizing `sum C_l Z_l`.
pub fn wireless_capacity_alloc(options: &[Vec<f64>], z: &[f64], mode: AllocMode) -> Result<usize> {
    if options.is_empty() {
        return Err(Error::Config("empty capacity option list".into()));
    }
    let scores: Vec<f64> = options.iter().map(|o| o.iter().zip(z).map(|(c, z)| c * z).sum()).collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    Ok(match mode {
        AllocMode::Exact => best,
        AllocMode::Multiplicative { theta } => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::Config(format!("theta must lie in (0, 1], got {theta}")));
            }
            let floor = theta * scores[best];
            (0..scores.len()).filter(|&i| scores[i] >= floor).fold(best, |w, i| if scores[i] < scores[w] { i } else { w })
        }
    })
}

/// How stale the link weights used for routing are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelaySpec {
    #[default]
    None,
    Constant { tau: usize },
    PerLink { tau: Vec<usize> },
    /// Slot `t` uses row `t mod len`, one delay per link.
    Schedule { rows: Vec<Vec<usize>> },
}

impl DelaySpec {
    pub fn tau(&self, l: usize, slot: usize) -> usize {
        match self {
            DelaySpec::None => 0,
            DelaySpec::Constant { tau } => *tau,
            DelaySpec::PerLink { tau } => tau[l],
            DelaySpec::Schedule { rows } => rows[slot % rows.len()][l],
        }
    }

    pub fn tau_max(&self) -> usize {
        match self {
            DelaySpec::None => 0,
            DelaySpec::Constant { tau } => *tau,
            DelaySpec::PerLink { tau } => tau.iter().copied().max().unwrap_or(0),
            DelaySpec::Schedule { rows } => rows.iter().flatten().copied().max().unwrap_or(0),
        }
    }

    pub fn validate(&self, links: usize) -> Result<()> {
        match self {
            DelaySpec::PerLink { tau } if tau.len() != links => {
                Err(Error::Config(format!("{} delays for {links} links", tau.len())))
            }
            DelaySpec::Schedule { rows } if rows.is_empty() || rows.iter().any(|r| r.len() != links) => {
                Err(Error::Config("delay schedule rows must list one delay per link".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `Z_l(t - tau_l)` from a history where `history[s]` holds `Z(s)` for
/// `s <= t`; times before zero read as zero.
pub fn delayed_queue_view(history: &[Vec<f64>], t: usize, spec: &DelaySpec) -> Vec<f64> {
    let links = history.last().map_or(0, |z| z.len());
    (0..links)
        .map(|l| {
            let tau = spec.tau(l, t);
            if tau > t {
                0.0
            } else {
                history[t - tau][l]
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternetState {
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub slot: usize,
}

impl InternetState {
    pub fn zeros(model: &InternetModel) -> Self {
        InternetState { z: vec![0.0; model.num_links()], h: vec![0.0; model.sessions.len()], slot: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternetRecord {
    pub slot: usize,
    pub gamma: Vec<f64>,
    pub x: Vec<f64>,
    pub paths: Vec<Option<Vec<usize>>>,
    /// Capacities in force (the chosen option when options are offered).
    pub capacities: Vec<f64>,
    pub option: Option<usize>,
    /// Link weights used for routing.
    pub z_view: Vec<f64>,
    pub state_after: InternetState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternetTrace {
    pub initial: InternetState,
    pub records: Vec<InternetRecord>,
}

impl InternetTrace {
    pub fn state_at(&self, t: usize) -> &InternetState {
        if t == 0 {
            &self.initial
        } else {
            &self.records[t - 1].state_after
        }
    }
}

/// One slot given the link weights used for routing (`z_view`, possibly
/// stale).
pub fn internet_step(
    model: &InternetModel,
    state: &InternetState,
    event: &InternetEvent,
    z_view: &[f64],
    v: f64,
    alloc: AllocMode,
) -> Result<InternetRecord> {
    model.validate_event(event)?;
    let mm = model.sessions.len();
    let gamma: Vec<f64> = (0..mm).map(|m| aux_update(state.h[m], v, &model.sessions[m].utility, model.sessions[m].a_max)).collect();
    let mut x = vec![0.0; mm];
    let mut paths = vec![None; mm];
    for m in 0..mm {
        match route_and_admit(model, m, event.arrivals[m], state.h[m], z_view, state.slot) {
            Ok(adm) => {
                x[m] = adm.x;
                paths[m] = adm.path;
            }
            Err(Error::NoPath { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let (capacities, option) = match &event.options {
        Some(opts) => {
            let i = wireless_capacity_alloc(opts, z_view, alloc)?;
            (opts[i].clone(), Some(i))
        }
        None => (event.capacities.clone(), None),
    };
    let mut inflow = vec![0.0; model.num_links()];
    for m in 0..mm {
        if let Some(p) = &paths[m] {
            for &l in p {
                inflow[l] += x[m];
            }
        }
    }
    let z = (0..model.num_links()).map(|l| (state.z[l] + inflow[l] - capacities[l]).max(0.0)).collect();
    let h = (0..mm).map(|m| state.h[m] + gamma[m] - x[m]).collect();
    Ok(InternetRecord {
        slot: state.slot,
        gamma,
        x,
        paths,
        capacities,
        option,
        z_view: z_view.to_vec(),
        state_after: InternetState { z, h, slot: state.slot + 1 },
    })
}

pub fn run_internet(
    model: &InternetModel,
    events: &[InternetEvent],
    v: f64,
    delay: &DelaySpec,
    alloc: AllocMode,
    initial: &InternetState,
) -> Result<InternetTrace> {
    delay.validate(model.num_links())?;
    if initial.z.len() != model.num_links() || initial.h.len() != model.sessions.len() || initial.slot != 0 {
        return Err(Error::Precondition("initial state does not match the model".into()));
    }
    let mut history = vec![initial.z.clone()];
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(events.len());
    for (t, ev) in events.iter().enumerate() {
        let view = delayed_queue_view(&history, t, delay);
        let rec = internet_step(model, &state, ev, &view, v, alloc)?;
        state = rec.state_after.clone();
        history.push(state.z.clone());
        records.push(rec);
    }
    Ok(InternetTrace { initial: initial.clone(), records })
}

/// The model in general form: one action per combination of per-session
/// choices (drop, or admit `j/grid` of the arrivals on an allowed path) and
/// capacity option. Returns the model and the event sequence on its catalog.
pub fn lift(model: &InternetModel, events: &[InternetEvent], grid: usize) -> Result<(SystemModel, Vec<EventSample>)> {
    if grid == 0 {
        return Err(Error::Config("admission grid must be at least 1".into()));
    }
    let (nl, mm) = (model.num_links(), model.sessions.len());
    let mut index: BTreeMap<(Vec<u64>, usize), usize> = BTreeMap::new();
    let mut catalog = Vec::new();
    let mut samples = Vec::with_capacity(events.len());
    for (t, ev) in events.iter().enumerate() {
        model.validate_event(ev)?;
        let key_period = model
            .sessions
            .iter()
            .filter_map(|s| match &s.paths {
                PathPolicy::PerSlot { lists } => Some(lists.len()),
                _ => None,
            })
            .fold(1usize, |a, b| a * b / gcd(a, b));
        let bits: Vec<u64> = ev
            .arrivals
            .iter()
            .chain(&ev.capacities)
            .chain(ev.options.iter().flatten().flatten())
            .map(|v| v.to_bits())
            .chain(std::iter::once(ev.options.as_ref().map_or(0, |o| o.len() as u64 + 1)))
            .collect();
        let key = (bits, t % key_period);
        let id = match index.get(&key) {
            Some(&id) => id,
            None => {
                let mut choices: Vec<Vec<(f64, Option<Vec<usize>>)>> = Vec::with_capacity(mm);
                for m in 0..mm {
                    let s = &model.sessions[m];
                    let allowed: Vec<Vec<usize>> = match model.slot_paths(m, t) {
                        Some(p) => p.to_vec(),
                        None => model
                            .network
                            .simple_paths(s.source, s.dest, PATH_ENUM_CAP)
                            .ok_or_else(|| Error::Unsupported("too many simple paths to lift".into()))?,
                    };
                    let mut opts = vec![(0.0, None)];
                    if ev.arrivals[m] > 0.0 {
                        for p in allowed {
                            for j in 1..=grid {
                                opts.push((ev.arrivals[m] * j as f64 / grid as f64, Some(p.clone())));
                            }
                        }
                    }
                    choices.push(opts);
                }
                let caps: Vec<Vec<f64>> = match &ev.options {
                    Some(o) => o.clone(),
                    None => vec![ev.capacities.clone()],
                };
                let mut actions = Vec::new();
                let mut idx = vec![0usize; mm];
                'outer: loop {
                    for c in &caps {
                        let mut y = vec![0.0; nl + 1];
                        for l in 0..nl {
                            y[l + 1] = -c[l];
                        }
                        let mut x = vec![0.0; mm];
                        for m in 0..mm {
                            let (amt, path) = &choices[m][idx[m]];
                            x[m] = *amt;
                            if let Some(p) = path {
                                for &l in p {
                                    y[l + 1] += amt;
                                }
                            }
                        }
                        actions.push(AttributeEvaluation { a: vec![], b: vec![], x, y });
                    }
                    for m in (0..mm).rev() {
                        idx[m] += 1;
                        if idx[m] < choices[m].len() {
                            continue 'outer;
                        }
                        idx[m] = 0;
                    }
                    break;
                }
                catalog.push(CatalogEntry { actions });
                index.insert(key, catalog.len() - 1);
                catalog.len() - 1
            }
        };
        samples.push(EventSample { slot: t, event_id: id });
    }
    let z_carried: Vec<f64> = (0..nl)
        .map(|l| (0..mm).filter(|&m| model.membership[l][m]).map(|m| model.sessions[m].a_max).sum())
        .collect();
    let bounds = AttributeBounds {
        a_max: vec![],
        b_max: vec![],
        x_min: vec![0.0; mm],
        x_max: model.sessions.iter().map(|s| s.a_max).collect(),
        y_min: std::iter::once(0.0).chain(model.network.links.iter().map(|l| -l.c_max)).collect(),
        y_max: std::iter::once(0.0).chain(z_carried).collect(),
    };
    let cost = CostConfig {
        f: CostFn::separable(model.sessions.iter().map(|s| s.utility.as_cost()).collect()),
        g: vec![CostFn::zero(); nl],
        x_set: None,
    };
    if catalog.is_empty() {
        catalog.push(CatalogEntry { actions: vec![AttributeEvaluation::idle(0, nl, mm)] });
    }
    Ok((SystemModel::new(catalog, cost, Some(bounds))?, samples))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The run expressed as a general trace over a lifted catalog: each slot's
/// action is matched by its attribute values.
pub fn to_general_trace(trace: &InternetTrace, model: &InternetModel) -> Trace {
    let nl = model.num_links();
    let conv = |s: &InternetState| QueueState { z: s.z.clone(), q: vec![], h: s.h.clone(), slot: s.slot };
    let records = trace
        .records
        .iter()
        .map(|r| {
            let mut y = vec![0.0; nl + 1];
            for l in 0..nl {
                y[l + 1] = -r.capacities[l];
            }
            for (m, p) in r.paths.iter().enumerate() {
                if let Some(p) = p {
                    for &l in p {
                        y[l + 1] += r.x[m];
                    }
                }
            }
            SlotRecord {
                slot: r.slot,
                event_id: 0,
                action: 0,
                gamma: r.gamma.clone(),
                eval: AttributeEvaluation { a: vec![], b: vec![], x: r.x.clone(), y },
                queues_after: conv(&r.state_after),
                objective_term: 0.0,
                decision_gap: 0.0,
            }
        })
        .collect();
    Trace { initial: conv(&trace.initial), records }
}

/// Total utility `sum_m phi_m(x_m)`.
pub fn utility(model: &InternetModel, x: &[f64]) -> f64 {
    model.sessions.iter().zip(x).map(|(s, v)| s.utility.eval(*v)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> FlowNetwork {
        // 0 -> 1 -> 2 and the direct link 0 -> 2.
        FlowNetwork {
            n: 3,
            links: vec![
                Link { from: 0, to: 1, c_max: 1.0 },
                Link { from: 1, to: 2, c_max: 1.0 },
                Link { from: 0, to: 2, c_max: 1.0 },
            ],
        }
    }

    fn session() -> Session {
        Session { source: 0, dest: 2, a_max: 1.0, utility: Utility::Linear { weight: 1.0 }, paths: PathPolicy::AllSimple }
    }

    #[test]
    fn aux_update_extremes() {
        let log = Utility::Log { weight: 1.0, shift: 1.0 };
        assert_eq!(aux_update(-0.5, 10.0, &log, 10.0), 10.0);
        assert_eq!(aux_update(10.5, 10.0, &log, 10.0), 0.0);
        assert_eq!(aux_update(2.0, 10.0, &log, 10.0), 4.0);
        let lin = Utility::Linear { weight: 2.0 };
        assert_eq!(aux_update(-1.0, 1.0, &lin, 3.0), 3.0);
        assert_eq!(aux_update(2.5, 1.0, &lin, 3.0), 0.0);
    }

    #[test]
    fn shortest_path_admission() {
        let model = InternetModel::new(triangle(), vec![session()]).unwrap();
        let z = [1.0, 1.0, 3.0];
        let adm = route_and_admit(&model, 0, 0.7, 2.5, &z, 0).unwrap();
        assert_eq!(adm.x, 0.7);
        assert_eq!(adm.path, Some(vec![0, 1]));
        let adm = route_and_admit(&model, 0, 0.7, 1.5, &z, 0).unwrap();
        assert_eq!(adm.x, 0.0);
        assert_eq!(adm.path, None);
    }

    #[test]
    fn zero_weight_boundary_admits() {
        let net = FlowNetwork { n: 2, links: vec![Link { from: 0, to: 1, c_max: 1.0 }] };
        let s = Session { dest: 1, ..session() };
        let model = InternetModel::new(net, vec![s]).unwrap();
        assert_eq!(route_and_admit(&model, 0, 1.0, 0.0, &[0.0], 0).unwrap().x, 1.0);
    }

    #[test]
    fn ties_go_to_smallest_node_sequence() {
        let model = InternetModel::new(triangle(), vec![session()]).unwrap();
        // Both paths weigh 2; 0-1-2 precedes 0-2.
        let adm = route_and_admit(&model, 0, 1.0, 5.0, &[1.0, 1.0, 2.0], 0).unwrap();
        assert_eq!(adm.path, Some(vec![0, 1]));
    }

    #[test]
    fn unreachable_destination() {
        let net = FlowNetwork { n: 3, links: vec![Link { from: 0, to: 1, c_max: 1.0 }] };
        let model = InternetModel::new(net, vec![session()]).unwrap();
        assert_eq!(route_and_admit(&model, 0, 1.0, 5.0, &[0.0], 0), Err(Error::NoPath { session: 0 }));
    }

    #[test]
    fn capacity_allocation() {
        let opts = vec![vec![2.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(wireless_capacity_alloc(&opts, &[1.0, 3.0], AllocMode::Exact).unwrap(), 1);
        assert_eq!(wireless_capacity_alloc(&opts, &[0.0, 0.0], AllocMode::Exact).unwrap(), 0);
        let opts = vec![vec![4.0], vec![2.5]];
        assert_eq!(wireless_capacity_alloc(&opts, &[1.0], AllocMode::Exact).unwrap(), 0);
        assert_eq!(wireless_capacity_alloc(&opts, &[1.0], AllocMode::Multiplicative { theta: 0.5 }).unwrap(), 1);
        assert!(wireless_capacity_alloc(&[], &[1.0], AllocMode::Exact).is_err());
    }

    #[test]
    fn delayed_view() {
        let hist = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(delayed_queue_view(&hist, 2, &DelaySpec::None), vec![3.0]);
        assert_eq!(delayed_queue_view(&hist, 2, &DelaySpec::Constant { tau: 1 }), vec![1.0]);
        assert_eq!(delayed_queue_view(&hist, 2, &DelaySpec::Constant { tau: 5 }), vec![0.0]);
        let flat = vec![vec![2.0]; 4];
        assert_eq!(delayed_queue_view(&flat, 3, &DelaySpec::Constant { tau: 1 }), vec![2.0]);
    }

    #[test]
    fn idle_network_is_a_fixed_point() {
        let model = InternetModel::new(triangle(), vec![session()]).unwrap();
        let ev = InternetEvent { capacities: vec![1.0; 3], arrivals: vec![0.0], options: None };
        let mut s = InternetState::zeros(&model);
        s.h = vec![0.0];
        let tr = run_internet(&model, &vec![ev; 5], 1.0, &DelaySpec::None, AllocMode::Exact, &s).unwrap();
        // H grows with gamma while nothing arrives, Z stays empty.
        assert!(tr.records.iter().all(|r| r.state_after.z.iter().all(|z| *z == 0.0)));
    }

    #[test]
    fn stale_weights_can_exceed_the_current_weight_ceiling() {
        // One link that never serves; routing sees weights three slots old.
        let net = FlowNetwork { n: 2, links: vec![Link { from: 0, to: 1, c_max: 1.0 }] };
        let s = Session { dest: 1, ..session() };
        let model = InternetModel::new(net, vec![s]).unwrap();
        let ev = InternetEvent { capacities: vec![0.0], arrivals: vec![1.0], options: None };
        let delay = DelaySpec::Constant { tau: 3 };
        let tr = run_internet(&model, &vec![ev; 6], 1.0, &delay, AllocMode::Exact, &InternetState::zeros(&model)).unwrap();
        let peak = tr.records.iter().map(|r| r.state_after.z[0]).fold(0.0, f64::max);
        assert_eq!(model.z_bound(1.0), 3.0);
        assert_eq!(peak, 4.0);
        // Ceiling widened by tau_max * M * A_max.
        assert!(peak <= model.z_bound(1.0) + 3.0 * 1.0 * model.a_max());
        assert!(tr.records.iter().all(|r| r.state_after.h[0] <= model.h_band(1.0, 0).1));
    }

    #[test]
    fn membership_and_constants() {
        let net = FlowNetwork {
            n: 4,
            links: vec![
                Link { from: 0, to: 1, c_max: 2.0 },
                Link { from: 1, to: 2, c_max: 0.5 },
                Link { from: 2, to: 3, c_max: 1.0 },
            ],
        };
        let model = InternetModel::new(net, vec![Session { dest: 2, a_max: 1.0, ..session() }]).unwrap();
        assert_eq!(model.membership, vec![vec![true], vec![true], vec![false]]);
        assert_eq!(model.z_diff(), vec![2.0, 1.0, 1.0]);
        assert_eq!(model.constant_b_d(), 0.5 * (4.0 + 1.0 + 1.0) + 0.5);
    }

    #[test]
    fn lifted_constants_match() {
        let model = InternetModel::new(triangle(), vec![session()]).unwrap();
        let ev = InternetEvent { capacities: vec![1.0, 0.5, 0.0], arrivals: vec![1.0], options: None };
        let (general, samples) = lift(&model, &[ev.clone(), ev], 1).unwrap();
        assert_eq!(samples.iter().map(|s| s.event_id).collect::<Vec<_>>(), vec![0, 0]);
        // Drop, path 0-1-2, path 0-2.
        assert_eq!(general.catalog[0].actions.len(), 3);
        assert_eq!(crate::bounds::constant_b(&general), model.constant_b_d());
        assert_eq!(crate::bounds::constant_d(&general), model.constant_b_d());
    }
}
