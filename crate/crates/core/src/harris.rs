//! Graphical construction of the exclusion process.
//!
//! Every edge `b` carries a Poisson clock of rate `b_n c_n(b)`. At each ring
//! the occupancies of the two endpoints are exchanged; a single tagged
//! particle following the same rings is the random walk with generator
//! `L_n`, which gives the duality coupling pathwise.
//!
//! Clocks are generated as one superposed Poisson stream of total rate
//! `sum_b lambda(b)`, each ring assigned to an edge with probability
//! `lambda(b) / sum_b lambda(b)`. The stream is a pure function of the seed and
//! is already time ordered, so a log truncated at `t` is a prefix of a log
//! sampled to any later horizon.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::GraphInstance;
use crate::seeding::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    /// Edge rank in the graph's canonical order.
    pub edge: u32,
}

/// Occupancy configuration `eta in {0,1}^V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Occupancy(Vec<bool>);

impl Occupancy {
    pub fn empty(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        let mut occ = Self::empty(n);
        occ.0[x] = true;
        occ
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: usize) -> bool {
        self.0[x]
    }

    pub fn particle_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Occupancies as `0.0 / 1.0`.
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn particles(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(x, _)| x)
    }
}

/// Per-edge clock rates of a graph and the sampler for their superposition.
#[derive(Debug, Clone)]
pub struct ClockSampler {
    endpoints: Vec<(u32, u32)>,
    rates: Vec<f64>,
    total_rate: f64,
    picker: EdgePicker,
    num_vertices: usize,
}

#[derive(Debug, Clone)]
enum EdgePicker {
    None,
    Uniform(u32),
    Alias(WeightedAliasIndex<f64>),
}

impl ClockSampler {
    pub fn new(g: &GraphInstance) -> Result<Self> {
        let c = g.conductances()?;
        let rates: Vec<f64> = c.iter().map(|c| g.time_scale() * c).collect();
        let total_rate = rates.iter().sum();
        let picker = if rates.is_empty() {
            EdgePicker::None
        } else if rates.iter().all(|&r| r == rates[0]) {
            EdgePicker::Uniform(rates.len() as u32)
        } else {
            EdgePicker::Alias(
                WeightedAliasIndex::new(rates.clone())
                    .map_err(|e| Error::InvalidField(format!("edge rates rejected: {e}")))?,
            )
        };
        let endpoints = g
            .edges()
            .iter()
            .map(|&(u, v)| (u as u32, v as u32))
            .collect();
        Ok(Self {
            endpoints,
            rates,
            total_rate,
            picker,
            num_vertices: g.num_vertices(),
        })
    }

    /// `lambda(b) = b_n c_n(b)` by edge rank.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Ring times up to `horizon` for the given seed, in time order.
    pub fn stream(&self, seed: u64, horizon: f64) -> ClockStream<'_> {
        ClockStream {
            sampler: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            horizon,
        }
    }

    /// `eta(t)` driven by the clocks of `seed`, without storing the log.
    pub fn evolve_exclusion(&self, eta0: &Occupancy, seed: u64, t: f64) -> Occupancy {
        let mut bits = eta0.0.clone();
        swap_along(&mut bits, &self.endpoints, self.stream(seed, t));
        Occupancy(bits)
    }
}

/// Iterator over the superposed ring times of a [`ClockSampler`].
#[derive(Debug)]
pub struct ClockStream<'a> {
    sampler: &'a ClockSampler,
    rng: ChaCha8Rng,
    time: f64,
    horizon: f64,
}

impl Iterator for ClockStream<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if self.sampler.total_rate <= 0.0 {
            return None;
        }
        let gap: f64 = Exp1.sample(&mut self.rng);
        self.time += gap / self.sampler.total_rate;
        if self.time > self.horizon {
            self.time = f64::INFINITY;
            return None;
        }
        let edge = match &self.sampler.picker {
            EdgePicker::None => return None,
            EdgePicker::Uniform(m) => self.rng.random_range(0..*m),
            EdgePicker::Alias(alias) => alias.sample(&mut self.rng) as u32,
        };
        Some(Event {
            time: self.time,
            edge,
        })
    }
}

fn swap_along(bits: &mut [bool], endpoints: &[(u32, u32)], events: impl Iterator<Item = Event>) {
    for e in events {
        let (u, v) = endpoints[e.edge as usize];
        bits.swap(u as usize, v as usize);
    }
}

/// Materialised ring times on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    horizon: f64,
    events: Vec<Event>,
    rates: Vec<f64>,
    endpoints: Vec<(u32, u32)>,
    num_vertices: usize,
    seed: u64,
}

/// Samples the edge clocks of `g` on `[0, horizon]`.
pub fn sample_clocks(g: &GraphInstance, horizon: f64, seed: u64) -> Result<EventLog> {
    ClockSampler::new(g)?.sample_log(horizon, seed)
}

impl ClockSampler {
    pub fn sample_log(&self, horizon: f64, seed: u64) -> Result<EventLog> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidHorizon(horizon));
        }
        Ok(EventLog {
            horizon,
            events: self.stream(seed, horizon).collect(),
            rates: self.rates.clone(),
            endpoints: self.endpoints.clone(),
            num_vertices: self.num_vertices,
            seed,
        })
    }
}

impl EventLog {
    /// Builds a log from explicit events; they are sorted by time, ties by edge rank.
    pub fn from_events(g: &GraphInstance, horizon: f64, mut events: Vec<Event>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidHorizon(horizon));
        }
        let m = g.edges().len();
        if let Some(e) = events
            .iter()
            .find(|e| e.edge as usize >= m || !(0.0..=horizon).contains(&e.time))
        {
            return Err(Error::InvalidSize(format!(
                "event {e:?} is outside the graph or horizon"
            )));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.edge.cmp(&b.edge)));
        let rates = match g.conductances() {
            Ok(c) => c.iter().map(|c| g.time_scale() * c).collect(),
            Err(_) => vec![f64::NAN; m],
        };
        Ok(Self {
            horizon,
            events,
            rates,
            endpoints: g
                .edges()
                .iter()
                .map(|&(u, v)| (u as u32, v as u32))
                .collect(),
            num_vertices: g.num_vertices(),
            seed: 0,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn endpoints(&self, edge: u32) -> (usize, usize) {
        let (u, v) = self.endpoints[edge as usize];
        (u as usize, v as usize)
    }

    /// Number of rings per edge rank.
    pub fn edge_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.endpoints.len()];
        for e in &self.events {
            counts[e.edge as usize] += 1;
        }
        counts
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.horizon {
            return Err(Error::HorizonExceeded {
                requested: t,
                horizon: self.horizon,
            });
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidHorizon(t));
        }
        Ok(())
    }

    /// Events with ring time at most `t`.
    pub fn until(&self, t: f64) -> &[Event] {
        let end = self.events.partition_point(|e| e.time <= t);
        &self.events[..end]
    }
}

/// `eta(t)`: swap the endpoint occupancies at every ring up to `t`.
pub fn evolve_exclusion(eta0: &Occupancy, log: &EventLog, t: f64) -> Result<Occupancy> {
    log.check_time(t)?;
    let mut bits = eta0.0.clone();
    swap_along(&mut bits, &log.endpoints, log.until(t).iter().copied());
    Ok(Occupancy(bits))
}

/// Snapshots of `eta` at each of the (ascending) `times`.
pub fn exclusion_trajectory(
    eta0: &Occupancy,
    log: &EventLog,
    times: &[f64],
) -> Result<Vec<Occupancy>> {
    let mut bits = eta0.0.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut cursor = 0;
    let mut last = 0.0;
    for &t in times {
        log.check_time(t)?;
        if t < last {
            return Err(Error::InvalidHorizon(t));
        }
        last = t;
        let end = log.events.partition_point(|e| e.time <= t);
        swap_along(
            &mut bits,
            &log.endpoints,
            log.events[cursor..end].iter().copied(),
        );
        cursor = end;
        out.push(Occupancy(bits.clone()));
    }
    Ok(out)
}

/// Position at time `t` of a walker started at `x0` that crosses every ringing edge it sits on.
pub fn evolve_walker(x0: usize, log: &EventLog, t: f64) -> Result<usize> {
    log.check_time(t)?;
    let mut x = x0 as u32;
    for e in log.until(t) {
        let (u, v) = log.endpoints[e.edge as usize];
        if x == u {
            x = v;
        } else if x == v {
            x = u;
        }
    }
    Ok(x as usize)
}

/// Sizes of connected components of the windowed ring graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentStats {
    pub windows: usize,
    pub max_size: usize,
    /// Index of the first window attaining `max_size`.
    pub worst_window: usize,
    /// `size -> count` for the components of the worst window.
    pub histogram: BTreeMap<usize, usize>,
}

struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
    touched: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            touched: Vec::new(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        self.touched.extend([a, b]);
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }

    /// Histogram of the current partition, then reset touched vertices.
    fn drain_histogram(&mut self, n: usize) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        self.touched.sort_unstable();
        self.touched.dedup();
        let touched = std::mem::take(&mut self.touched);
        for &x in &touched {
            if self.find(x) == x {
                *hist.entry(self.size[x as usize] as usize).or_insert(0) += 1;
            }
        }
        if n > touched.len() {
            *hist.entry(1).or_insert(0) += n - touched.len();
        }
        for &x in &touched {
            self.parent[x as usize] = x;
            self.size[x as usize] = 1;
        }
        hist
    }
}

/// Splits `[0, T]` into windows of length `window` and reports the largest
/// connected component of the graph of edges ringing inside a window.
pub fn component_statistics(log: &EventLog, window: f64) -> Result<ComponentStats> {
    if !(window > 0.0 && window <= log.horizon) {
        return Err(Error::InvalidHorizon(window));
    }
    let n = log.num_vertices;
    let windows = ((log.horizon / window).ceil() as usize).max(1);
    let mut sets = DisjointSets::new(n);
    let mut best = ComponentStats {
        windows,
        max_size: 0,
        worst_window: 0,
        histogram: BTreeMap::new(),
    };
    let mut cursor = 0;
    for k in 0..windows {
        let end_time = (k + 1) as f64 * window;
        while cursor < log.events.len() && (log.events[cursor].time < end_time || k + 1 == windows)
        {
            let (u, v) = log.endpoints[log.events[cursor].edge as usize];
            sets.union(u, v);
            cursor += 1;
        }
        let hist = sets.drain_histogram(n);
        let largest = hist.keys().next_back().copied().unwrap_or(0);
        if largest > best.max_size {
            best.max_size = largest;
            best.worst_window = k;
            best.histogram = hist;
        }
    }
    Ok(best)
}

/// Independent Bernoulli occupancies with means `rho(pos x)`.
pub fn sample_product_measure(
    g: &GraphInstance,
    rho: impl Fn(&[f64]) -> f64,
    seed: u64,
) -> Result<Occupancy> {
    let bits = (0..g.num_vertices())
        .map(|x| {
            let p = rho(g.position(x));
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProfile(format!(
                    "density {p} at vertex {x} is outside [0, 1]"
                )));
            }
            let u = seeding::unit_f64(seeding::derive(
                seed,
                Stream::InitialConfiguration,
                &[x as u64],
            ));
            Ok(u < p)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Occupancy(bits))
}
