//! Seeded random instances of all three models, small enough for the
//! enumeration oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostFn, Interval, ScalarConvex};
use crate::error::Result;
use crate::internet::{DelaySpec, FlowNetwork, InternetEvent, InternetModel, Link, PathPolicy, Session, Utility};
use crate::model::{AttributeBounds, AttributeEvaluation, CatalogEntry, CostConfig, EventSample, SystemModel};
use crate::multihop::{MultihopModel, MultihopSession, RateMatrix, TopologyEvent};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the grid `lo, lo + step, ..., hi`.
fn grid(r: &mut ChaCha8Rng, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as i64;
    lo + step * r.gen_range(0..=n) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralParams {
    pub k_max: usize,
    pub l_max: usize,
    pub m_max: usize,
    pub events: usize,
    /// Largest number of actions per event.
    pub actions: usize,
    /// Probability of a restricting feasible set for `x`.
    pub x_set_prob: f64,
    /// When positive, every event gets an action with this uniform slack.
    pub slack: f64,
}

impl Default for GeneralParams {
    fn default() -> Self {
        GeneralParams { k_max: 3, l_max: 3, m_max: 3, events: 3, actions: 4, x_set_prob: 0.3, slack: 0.0 }
    }
}

fn random_term(r: &mut ChaCha8Rng) -> ScalarConvex {
    match r.gen_range(0..5) {
        0 => ScalarConvex::Quadratic { a: grid(r, 0.25, 1.0, 0.25), b: grid(r, -1.0, 1.0, 0.25), c: 0.0 },
        1 => ScalarConvex::NegLog { weight: grid(r, 0.25, 1.0, 0.25), shift: grid(r, 0.5, 2.0, 0.5) },
        2 => ScalarConvex::Abs { weight: grid(r, 0.25, 1.0, 0.25), center: grid(r, 0.0, 2.0, 0.25) },
        3 => ScalarConvex::Hinge { weight: grid(r, 0.25, 1.0, 0.25), threshold: grid(r, 0.0, 2.0, 0.25) },
        _ => ScalarConvex::Affine { slope: grid(r, -1.0, 1.0, 0.25), offset: 0.0 },
    }
}

fn constraint_term(r: &mut ChaCha8Rng) -> ScalarConvex {
    match r.gen_range(0..4) {
        0 => ScalarConvex::Zero,
        1 => ScalarConvex::Affine { slope: grid(r, -0.5, 0.5, 0.25), offset: 0.0 },
        2 => ScalarConvex::Quadratic { a: grid(r, 0.0, 0.25, 0.125), b: grid(r, -0.5, 0.5, 0.25), c: 0.0 },
        _ => ScalarConvex::Hinge { weight: grid(r, 0.25, 0.5, 0.25), threshold: grid(r, 0.5, 1.5, 0.5) },
    }
}

/// A random general model. The first action of every event meets every
/// constraint on its own (with margin `params.slack` when positive); the
/// others are arbitrary.
pub fn random_general(seed: u64, params: &GeneralParams) -> Result<SystemModel> {
    let mut r = rng(seed);
    let k = r.gen_range(0..=params.k_max);
    let l = r.gen_range(0..=params.l_max);
    let m = r.gen_range(0..=params.m_max);
    let f = CostFn::separable((0..m).map(|_| random_term(&mut r)).collect());
    let g: Vec<CostFn> = (0..l).map(|_| CostFn::separable((0..m).map(|_| constraint_term(&mut r)).collect())).collect();
    let delta = params.slack;
    let x_set: Option<Vec<Interval>> = (m > 0 && delta == 0.0 && r.gen_bool(params.x_set_prob))
        .then(|| (0..m).map(|_| Interval::new(grid(&mut r, 0.0, 0.75, 0.25), grid(&mut r, 1.25, 2.0, 0.25))).collect());
    let cost = CostConfig { f, g, x_set };
    let g_of = |x: &[f64]| -> Vec<f64> { cost.g.iter().map(|g| g.eval(x)).collect() };
    let events = params.events.max(1);
    let mut catalog = Vec::with_capacity(events);
    for _ in 0..events {
        let n_actions = r.gen_range(1..=params.actions.max(1));
        let mut actions = Vec::with_capacity(n_actions);
        for j in 0..n_actions {
            let ev = if j == 0 {
                let x: Vec<f64> = (0..m)
                    .map(|i| match &cost.x_set {
                        Some(s) => grid(&mut r, s[i].lo, s[i].hi, 0.25),
                        None => grid(&mut r, 0.5, 1.5, 0.25),
                    })
                    .collect();
                let gx = g_of(&x);
                let b: Vec<f64> = (0..k).map(|_| grid(&mut r, delta.max(0.5), 2.0, 0.25)).collect();
                let a = b.iter().map(|b| grid(&mut r, 0.0, b - delta, 0.25).min(b - delta)).collect();
                let y = std::iter::once(grid(&mut r, -1.0, 2.0, 0.25))
                    .chain(gx.iter().map(|g| -g - delta - grid(&mut r, 0.0, 1.0, 0.25)))
                    .collect();
                AttributeEvaluation { a, b, x, y }
            } else {
                AttributeEvaluation {
                    a: (0..k).map(|_| grid(&mut r, 0.0, 2.0, 0.25)).collect(),
                    b: (0..k).map(|_| grid(&mut r, 0.0, 2.0, 0.25)).collect(),
                    x: (0..m).map(|_| grid(&mut r, 0.0, 2.0, 0.25)).collect(),
                    y: std::iter::once(grid(&mut r, -1.0, 2.0, 0.25)).chain((0..l).map(|_| grid(&mut r, -2.0, 2.0, 0.25))).collect(),
                }
            };
            actions.push(ev);
        }
        actions.shuffle(&mut r);
        catalog.push(CatalogEntry { actions });
    }
    // The attribute box for x is [0, 2] whatever the catalog holds, so a
    // slack action sits strictly inside it.
    let mut bounds = AttributeBounds::from_catalog(&catalog)?;
    bounds.x_min = vec![0.0; m];
    bounds.x_max = vec![2.0; m];
    SystemModel::new(catalog, cost, Some(bounds))
}

/// `len` event ids drawn uniformly from the catalog.
pub fn random_events(seed: u64, catalog_len: usize, len: usize) -> Vec<EventSample> {
    let mut r = rng(seed ^ 0x5EED_0F_E7E7);
    (0..len).map(|slot| EventSample { slot, event_id: r.gen_range(0..catalog_len) }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternetParams {
    pub n_max: usize,
    pub l_max: usize,
    pub m_max: usize,
    pub tau_max: usize,
}

impl Default for InternetParams {
    fn default() -> Self {
        InternetParams { n_max: 6, l_max: 10, m_max: 3, tau_max: 3 }
    }
}

fn random_utility(r: &mut ChaCha8Rng) -> Utility {
    if r.gen_bool(0.5) {
        Utility::Linear { weight: grid(r, 0.25, 2.0, 0.25) }
    } else {
        Utility::Log { weight: grid(r, 0.25, 2.0, 0.25), shift: grid(r, 0.5, 2.0, 0.5) }
    }
}

/// A random flow network with sessions between connected node pairs and a
/// random delay pattern.
pub fn random_internet(seed: u64, p: &InternetParams) -> Result<(InternetModel, DelaySpec)> {
    let mut r = rng(seed);
    let n = r.gen_range(2..=p.n_max.max(2));
    let mut links = Vec::new();
    // A random chain keeps the graph connected one way.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    for w in order.windows(2) {
        links.push(Link { from: w[0], to: w[1], c_max: grid(&mut r, 0.5, 3.0, 0.5) });
    }
    let target = r.gen_range(links.len()..=p.l_max.max(links.len()));
    while links.len() < target {
        let from = r.gen_range(0..n);
        let to = r.gen_range(0..n);
        if from != to {
            links.push(Link { from, to, c_max: grid(&mut r, 0.5, 3.0, 0.5) });
        }
    }
    let net = FlowNetwork { n, links };
    let m = r.gen_range(1..=p.m_max.max(1));
    let mut sessions = Vec::with_capacity(m);
    for _ in 0..m {
        // Any later node on the chain is reachable.
        let i = r.gen_range(0..n - 1);
        let j = r.gen_range(i + 1..n);
        let (source, dest) = (order[i], order[j]);
        let paths = match r.gen_range(0..4) {
            0 => match net.simple_paths(source, dest, 64) {
                Some(mut all) if !all.is_empty() => {
                    all.shuffle(&mut r);
                    all.truncate(r.gen_range(1..=all.len().min(3)));
                    PathPolicy::Explicit { paths: all }
                }
                _ => PathPolicy::AllSimple,
            },
            _ => PathPolicy::AllSimple,
        };
        sessions.push(Session { source, dest, a_max: grid(&mut r, 0.5, 2.0, 0.5), utility: random_utility(&mut r), paths });
    }
    let nl = net.links.len();
    let tau_max = p.tau_max;
    let delay = match r.gen_range(0..4) {
        0 => DelaySpec::None,
        1 => DelaySpec::Constant { tau: r.gen_range(0..=tau_max) },
        2 => DelaySpec::PerLink { tau: (0..nl).map(|_| r.gen_range(0..=tau_max)).collect() },
        _ => DelaySpec::Schedule {
            rows: (0..r.gen_range(1..=4)).map(|_| (0..nl).map(|_| r.gen_range(0..=tau_max)).collect()).collect(),
        },
    };
    Ok((InternetModel::new(net, sessions)?, delay))
}

pub fn random_internet_events(model: &InternetModel, seed: u64, len: usize, wireless: bool) -> Vec<InternetEvent> {
    let mut r = rng(seed ^ 0x1A7E_12E7);
    let caps = |r: &mut ChaCha8Rng| -> Vec<f64> {
        model.network.links.iter().map(|l| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.0..=l.c_max) }).collect()
    };
    (0..len)
        .map(|_| {
            let arrivals = model.sessions.iter().map(|s| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.0..=s.a_max) }).collect();
            if wireless {
                let k = r.gen_range(1..=3);
                InternetEvent { capacities: vec![], arrivals, options: Some((0..k).map(|_| caps(&mut r)).collect()) }
            } else {
                InternetEvent { capacities: caps(&mut r), arrivals, options: None }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultihopParams {
    pub n_max: usize,
    pub m_max: usize,
    pub options_max: usize,
}

impl Default for MultihopParams {
    fn default() -> Self {
        MultihopParams { n_max: 5, m_max: 3, options_max: 3 }
    }
}

pub fn random_multihop(seed: u64, p: &MultihopParams) -> Result<MultihopModel> {
    let mut r = rng(seed);
    let n = r.gen_range(2..=p.n_max.max(2));
    let mut mu_max = vec![vec![0.0; n]; n];
    for (i, row) in mu_max.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j && r.gen_bool(0.5) {
                *v = grid(&mut r, 0.5, 2.0, 0.5);
            }
        }
    }
    let m = r.gen_range(1..=p.m_max.max(1));
    let sessions = (0..m)
        .map(|_| {
            let source = r.gen_range(0..n);
            let dest = (source + r.gen_range(1..n)) % n;
            MultihopSession { source, dest, a_max: grid(&mut r, 0.5, 2.0, 0.5), utility: random_utility(&mut r) }
        })
        .collect();
    MultihopModel::new(mu_max, sessions)
}

/// Random options: every link independently off, at a random rate, or at
/// its peak.
pub fn random_topology_events(model: &MultihopModel, seed: u64, len: usize, options_max: usize) -> Vec<TopologyEvent> {
    let mut r = rng(seed ^ 0x70B0_1067);
    let n = model.n;
    (0..len)
        .map(|t| {
            let k = r.gen_range(1..=options_max.max(1));
            let options: Vec<RateMatrix> = (0..k)
                .map(|_| {
                    (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| match r.gen_range(0..3) {
                                    0 => 0.0,
                                    1 => r.gen_range(0.0..=model.mu_max[i][j]),
                                    _ => model.mu_max[i][j],
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let arrivals = model.sessions.iter().map(|s| if r.gen_bool(0.25) { 0.0 } else { r.gen_range(0.0..=s.a_max) }).collect();
            TopologyEvent { state: t, arrivals, options }
        })
        .collect()
}
