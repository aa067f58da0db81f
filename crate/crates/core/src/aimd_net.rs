//! AIMD fluid model on a network of zero-buffer links.
//!
//! Every flow grows its throughput linearly at `alpha P / R` until some link on
//! its route saturates; the flows crossing the saturated link then lose packets
//! according to a [`SyncModel`] and cut their rate by `beta`.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tree_gen::GrowingTree;

const NONE: usize = usize::MAX;

/// Undirected capacitated network. Vertex ids are `0..vertex_count`, edge ids
/// index `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidNetwork {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    capacity: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
    // Breadth-first spanning tree from vertex 0, used for routing on trees.
    bfs_parent_edge: Vec<usize>,
    depth: Vec<usize>,
}

impl FluidNetwork {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>, capacity: Vec<f64>) -> Result<FluidNetwork> {
        if vertex_count < 2 || edges.is_empty() {
            return Err(invalid("a network needs at least two vertices and one edge"));
        }
        if capacity.len() != edges.len() {
            return Err(invalid(format!("{} capacities for {} edges", capacity.len(), edges.len())));
        }
        if let Some(c) = capacity.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid(format!("capacities must be positive and finite, got {c}")));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a >= vertex_count || b >= vertex_count || a == b {
                return Err(invalid(format!("edge {e} = ({a}, {b}) is not a link between distinct vertices")));
            }
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        let mut bfs_parent_edge = vec![NONE; vertex_count];
        let mut depth = vec![NONE; vertex_count];
        depth[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &(w, e) in &adjacency[v] {
                if depth[w] == NONE {
                    depth[w] = depth[v] + 1;
                    bfs_parent_edge[w] = e;
                    queue.push_back(w);
                }
            }
        }
        if depth.contains(&NONE) {
            return Err(invalid("network is not connected"));
        }
        Ok(FluidNetwork { vertex_count, edges, capacity, adjacency, bfs_parent_edge, depth })
    }

    /// Network on the edges of a grown tree; edge `e` joins vertex `e + 1` to its parent.
    pub fn from_tree(tree: &GrowingTree, capacity: f64) -> Result<FluidNetwork> {
        let edges = tree.edges();
        let n = edges.len();
        FluidNetwork::new(tree.vertex_count(), edges, vec![capacity; n])
    }

    /// Two vertices joined by one link of capacity `capacity`.
    pub fn single_link(capacity: f64) -> Result<FluidNetwork> {
        FluidNetwork::new(2, vec![(0, 1)], vec![capacity])
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn capacity(&self) -> &[f64] {
        &self.capacity
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.vertex_count
    }

    pub fn with_capacities(&self, capacity: Vec<f64>) -> Result<FluidNetwork> {
        FluidNetwork::new(self.vertex_count, self.edges.clone(), capacity)
    }

    /// Edge sequence of a shortest path from `src` to `dst`; the unique path on a tree.
    pub fn route(&self, src: usize, dst: usize) -> Result<Vec<usize>> {
        if src >= self.vertex_count || dst >= self.vertex_count {
            return Err(invalid(format!("route endpoints ({src}, {dst}) out of range")));
        }
        if self.is_tree() {
            return Ok(self.tree_route(src, dst));
        }
        let mut via = vec![NONE; self.vertex_count];
        let mut seen = vec![false; self.vertex_count];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            if v == dst {
                break;
            }
            for &(w, e) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    via[w] = e;
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut v = dst;
        while v != src {
            let e = via[v];
            path.push(e);
            v = self.other_end(e, v);
        }
        path.reverse();
        Ok(path)
    }

    fn other_end(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.edges[e];
        if a == v {
            b
        } else {
            a
        }
    }

    fn tree_route(&self, src: usize, dst: usize) -> Vec<usize> {
        let (mut a, mut b) = (src, dst);
        let (mut up, mut down) = (Vec::new(), Vec::new());
        while self.depth[a] > self.depth[b] {
            up.push(self.bfs_parent_edge[a]);
            a = self.other_end(self.bfs_parent_edge[a], a);
        }
        while self.depth[b] > self.depth[a] {
            down.push(self.bfs_parent_edge[b]);
            b = self.other_end(self.bfs_parent_edge[b], b);
        }
        while a != b {
            up.push(self.bfs_parent_edge[a]);
            a = self.other_end(self.bfs_parent_edge[a], a);
            down.push(self.bfs_parent_edge[b]);
            b = self.other_end(self.bfs_parent_edge[b], b);
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Checks that `route` is a walk of distinct edges that visits no vertex twice.
    fn check_route(&self, route: &[usize]) -> Result<()> {
        let Some(&first) = route.first() else {
            return Err(invalid("empty route"));
        };
        if route.iter().any(|&e| e >= self.edges.len()) {
            return Err(invalid("route uses an unknown edge"));
        }
        let walk = |start: usize| -> Option<Vec<usize>> {
            let mut seen = vec![start];
            let mut v = start;
            for &e in route {
                let (a, b) = self.edges[e];
                v = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    return None;
                };
                if seen.contains(&v) {
                    return None;
                }
                seen.push(v);
            }
            Some(seen)
        };
        let (a, b) = self.edges[first];
        if walk(a).is_none() && walk(b).is_none() {
            return Err(invalid(format!("route {route:?} is not a simple path")));
        }
        Ok(())
    }
}

/// One TCP-like flow: route and AIMD constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub route: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub rtt: f64,
    pub packet_size: f64,
}

impl Flow {
    /// Throughput growth rate `alpha P / R`.
    pub fn growth(&self) -> f64 {
        self.alpha * self.packet_size / self.rtt
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("flow alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("flow beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.rtt > 0.0 && self.rtt.is_finite()) || !(self.packet_size > 0.0 && self.packet_size.is_finite()) {
            return Err(invalid("flow rtt and packet size must be positive"));
        }
        Ok(())
    }
}

/// AIMD constants shared by a population of flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowTemplate {
    pub alpha: f64,
    pub beta: f64,
    pub rtt: f64,
    pub packet_size: f64,
}

impl Default for FlowTemplate {
    /// One packet of 1500 bytes per RTT of 100 ms, halving on loss; throughput in b/s.
    fn default() -> Self {
        FlowTemplate { alpha: 1.0, beta: 0.5, rtt: 0.1, packet_size: 12_000.0 }
    }
}

impl FlowTemplate {
    pub fn flow(&self, route: Vec<usize>) -> Flow {
        Flow { route, alpha: self.alpha, beta: self.beta, rtt: self.rtt, packet_size: self.packet_size }
    }
}

/// Flows and their current throughputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    pub flows: Vec<Flow>,
    pub x: Vec<f64>,
}

impl FlowSet {
    /// Flows starting from zero throughput.
    pub fn new(flows: Vec<Flow>) -> FlowSet {
        let x = vec![0.0; flows.len()];
        FlowSet { flows, x }
    }

    /// `count` flows between uniformly drawn distinct vertex pairs.
    pub fn uniform_pairs(network: &FluidNetwork, count: usize, template: FlowTemplate, rng: &mut impl Rng) -> Result<FlowSet> {
        let mut flows = Vec::with_capacity(count);
        for _ in 0..count {
            let pair = index::sample(rng, network.vertex_count(), 2);
            flows.push(template.flow(network.route(pair.index(0), pair.index(1))?));
        }
        Ok(FlowSet::new(flows))
    }

    /// `n` identical flows sharing the single link of `network`.
    pub fn homogeneous(n: usize, template: FlowTemplate) -> FlowSet {
        FlowSet::new((0..n).map(|_| template.flow(vec![0])).collect())
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn validate(&self, network: &FluidNetwork) -> Result<()> {
        if self.flows.is_empty() {
            return Err(invalid("no flows"));
        }
        if self.x.len() != self.flows.len() {
            return Err(invalid("throughput vector length differs from the flow count"));
        }
        for (f, &x) in self.flows.iter().zip(&self.x) {
            f.validate()?;
            network.check_route(&f.route)?;
            if !(x >= 0.0 && x.is_finite()) {
                return Err(invalid(format!("throughputs must be non-negative, got {x}")));
            }
        }
        let load = self.edge_load(network);
        if let Some(e) = (0..network.edge_count()).find(|&e| load[e] > network.capacity[e] * (1.0 + 1e-12)) {
            return Err(invalid(format!("edge {e} carries {} above its capacity {}", load[e], network.capacity[e])));
        }
        Ok(())
    }

    /// Total throughput per edge.
    pub fn edge_load(&self, network: &FluidNetwork) -> Vec<f64> {
        let mut load = vec![0.0; network.edge_count()];
        for (f, &x) in self.flows.iter().zip(&self.x) {
            for &e in &f.route {
                load[e] += x;
            }
        }
        load
    }

    /// Flows crossing each edge, in increasing flow id.
    pub fn edge_members(&self, network: &FluidNetwork) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); network.edge_count()];
        for (i, f) in self.flows.iter().enumerate() {
            for &e in &f.route {
                members[e].push(i);
            }
        }
        members
    }
}

/// Per-flow loss propensities `pi`. Losses are drawn independently and the
/// draw is conditioned on at least one loss among the flows of the congested link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncModel {
    Uniform(f64),
    PerFlow(Vec<f64>),
}

impl SyncModel {
    pub fn pi(&self, flow: usize) -> f64 {
        match self {
            SyncModel::Uniform(p) => *p,
            SyncModel::PerFlow(p) => p[flow],
        }
    }

    pub fn validate(&self, flows: usize) -> Result<()> {
        let ok = |p: f64| p > 0.0 && p <= 1.0;
        match self {
            SyncModel::Uniform(p) if !ok(*p) => Err(invalid(format!("loss propensity must lie in (0, 1], got {p}"))),
            SyncModel::PerFlow(p) if p.len() != flows => Err(invalid(format!("{} propensities for {flows} flows", p.len()))),
            SyncModel::PerFlow(p) if !p.iter().all(|&v| ok(v)) => Err(invalid("loss propensities must lie in (0, 1]")),
            _ => Ok(()),
        }
    }
}

/// Synchronization rate `r = pi / (1 - (1 - pi)^n)` of `n` flows with common propensity `pi`.
pub fn sync_rate(pi: f64, n: usize) -> Result<f64> {
    if !(pi > 0.0 && pi <= 1.0) || n == 0 {
        return Err(invalid(format!("sync rate needs 0 < pi <= 1 and n >= 1, got pi={pi}, n={n}")));
    }
    Ok(pi / -(n as f64 * (-pi).ln_1p()).exp_m1())
}

/// Smallest propensity reported for `r = 1/n`, where the exact answer is the `pi -> 0` limit.
pub const PI_FLOOR: f64 = 1e-12;

/// Inverts [`sync_rate`] by bisection. `r = 1/n` maps to [`PI_FLOOR`].
pub fn propensity_for_rate(r: f64, n: usize) -> Result<f64> {
    if n == 0 || !(r <= 1.0) || r < 1.0 / n as f64 * (1.0 - 1e-12) {
        return Err(invalid(format!("sync rate {r} is outside [1/{n}, 1]")));
    }
    if r == 1.0 {
        return Ok(1.0);
    }
    if r <= sync_rate(PI_FLOOR, n)? {
        return Ok(PI_FLOOR);
    }
    let (mut lo, mut hi) = (PI_FLOOR, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sync_rate(mid, n)? < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws the losing flows among `members` conditioned on at least one loss.
///
/// Equal in law to [`draw_losses_rejection`]. Uniform propensities use geometric
/// skips, so the cost is proportional to the number of losses.
pub fn draw_losses(members: &[usize], sync: &SyncModel, rng: &mut impl Rng, out: &mut Vec<usize>) {
    out.clear();
    let m = members.len();
    if m == 0 {
        return;
    }
    match sync {
        SyncModel::Uniform(pi) if *pi >= 1.0 => out.extend_from_slice(members),
        SyncModel::Uniform(pi) => {
            let lq = (-pi).ln_1p();
            let none = -(m as f64 * lq).exp_m1();
            // First loss from the truncated geometric law, then independent skips.
            let u: f64 = rng.random();
            let mut j = ((-u * none).ln_1p() / lq).floor().min((m - 1) as f64) as usize;
            loop {
                out.push(members[j]);
                let u: f64 = rng.random();
                let skip = (-u).ln_1p() / lq;
                if skip >= (m - j - 1) as f64 {
                    break;
                }
                j += 1 + skip as usize;
            }
        }
        SyncModel::PerFlow(p) => {
            // Suffix probabilities of no loss among members[i..].
            let mut none = vec![1.0; m + 1];
            for i in (0..m).rev() {
                none[i] = none[i + 1] * (1.0 - p[members[i]]);
            }
            let mut hit = false;
            for i in 0..m {
                let pi = p[members[i]];
                let prob = if hit { pi } else { pi / (1.0 - none[i]) };
                if rng.random::<f64>() < prob {
                    out.push(members[i]);
                    hit = true;
                }
            }
        }
    }
}

/// Reference sampler: independent draws repeated until at least one flow loses.
pub fn draw_losses_rejection(members: &[usize], sync: &SyncModel, rng: &mut impl Rng, out: &mut Vec<usize>) {
    out.clear();
    if members.is_empty() {
        return;
    }
    while out.is_empty() {
        out.extend(members.iter().copied().filter(|&i| rng.random::<f64>() < sync.pi(i)));
    }
}

/// Time to the next saturation and the saturating edge, by scanning every edge.
/// Ties go to the lowest edge id.
pub fn next_congestion(network: &FluidNetwork, flows: &FlowSet) -> Result<(f64, usize)> {
    let mut load = vec![0.0; network.edge_count()];
    let mut growth = vec![0.0; network.edge_count()];
    for (f, &x) in flows.flows.iter().zip(&flows.x) {
        let g = f.growth();
        for &e in &f.route {
            load[e] += x;
            growth[e] += g;
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for e in 0..network.edge_count() {
        if growth[e] <= 0.0 {
            continue;
        }
        let tau = ((network.capacity[e] - load[e]) / growth[e]).max(0.0);
        if best.is_none_or(|(t, _)| tau < t) {
            best = Some((tau, e));
        }
    }
    let (tau, edge) = best.ok_or_else(|| Error::Stagnation("no edge carries a growing flow".into()))?;
    if tau == 0.0 && load.iter().zip(&network.capacity).zip(&growth).all(|((l, c), g)| *g <= 0.0 || l >= c) {
        return Err(Error::Stagnation("every loaded edge is already saturated".into()));
    }
    Ok((tau, edge))
}

/// Advances all flows by `tau`, then applies multiplicative decrease to the
/// losing flows of `edge`. Returns the losing flow ids.
pub fn apply_congestion(
    network: &FluidNetwork,
    flows: &mut FlowSet,
    tau: f64,
    edge: usize,
    sync: &SyncModel,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if edge >= network.edge_count() {
        return Err(invalid(format!("edge {edge} out of range")));
    }
    for (f, x) in flows.flows.iter().zip(flows.x.iter_mut()) {
        *x += f.growth() * tau;
    }
    let members: Vec<usize> = (0..flows.len()).filter(|&i| flows.flows[i].route.contains(&edge)).collect();
    let mut lost = Vec::new();
    draw_losses(&members, sync, rng, &mut lost);
    for &i in &lost {
        flows.x[i] *= flows.flows[i].beta;
    }
    Ok(lost)
}

/// Random generator used by the simulator for a given seed and stream.
pub fn sim_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Binary min-heap over edge ids with updatable keys.
#[derive(Debug, Clone)]
struct IndexedHeap {
    heap: Vec<usize>,
    pos: Vec<usize>,
    key: Vec<f64>,
}

impl IndexedHeap {
    fn new(key: Vec<f64>) -> IndexedHeap {
        let n = key.len();
        let mut h = IndexedHeap { heap: (0..n).collect(), pos: (0..n).collect(), key };
        for i in (0..n / 2).rev() {
            h.down(i);
        }
        h
    }

    fn k(&self, i: usize) -> Key {
        let e = self.heap[i];
        Key(self.key[e], e)
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i]] = i;
        self.pos[self.heap[j]] = j;
    }

    fn up(&mut self, mut i: usize) {
        while i > 0 {
            let p = (i - 1) / 2;
            if self.k(i) >= self.k(p) {
                break;
            }
            self.swap(i, p);
            i = p;
        }
    }

    fn down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < n && self.k(l) < self.k(m) {
                m = l;
            }
            if r < n && self.k(r) < self.k(m) {
                m = r;
            }
            if m == i {
                break;
            }
            self.swap(i, m);
            i = m;
        }
    }

    fn update(&mut self, e: usize, key: f64) {
        let old = self.key[e];
        self.key[e] = key;
        if key < old {
            self.up(self.pos[e]);
        } else {
            self.down(self.pos[e]);
        }
    }

    fn min(&self) -> (f64, usize) {
        let e = self.heap[0];
        (self.key[e], e)
    }
}

/// One congestion event.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionEvent {
    pub time: f64,
    pub tau: f64,
    pub edge: usize,
    pub lost: Vec<usize>,
    /// Flows crossing the congested edge.
    pub members: usize,
    /// Mean throughput of those flows just after the decrease.
    pub post_mean: f64,
}

/// Event-driven simulator. Each flow's throughput is stored at its last decrease
/// and each edge's load at its last change, so an event touches only the edges
/// on the routes of the flows that lose.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    network: &'a FluidNetwork,
    flows: Vec<Flow>,
    sync: SyncModel,
    rng: ChaCha8Rng,
    growth: Vec<f64>,
    members: Vec<Vec<usize>>,
    now: f64,
    x: Vec<f64>,
    t_x: Vec<f64>,
    area: Vec<f64>,
    load: Vec<f64>,
    t_load: Vec<f64>,
    edge_growth: Vec<f64>,
    heap: IndexedHeap,
    lost: Vec<usize>,
    events: u64,
}

/// Events between exact recomputations of the edge loads.
const RESYNC_EVERY: u64 = 1 << 14;

impl<'a> Simulator<'a> {
    pub fn new(network: &'a FluidNetwork, flows: &FlowSet, sync: &SyncModel, seed: u64, stream: u64) -> Result<Simulator<'a>> {
        flows.validate(network)?;
        sync.validate(flows.len())?;
        let members = flows.edge_members(network);
        let growth: Vec<f64> = flows.flows.iter().map(Flow::growth).collect();
        let mut edge_growth = vec![0.0; network.edge_count()];
        for (f, g) in flows.flows.iter().zip(&growth) {
            for &e in &f.route {
                edge_growth[e] += g;
            }
        }
        let n = flows.len();
        let mut sim = Simulator {
            network,
            flows: flows.flows.clone(),
            sync: sync.clone(),
            rng: sim_rng(seed, stream),
            growth,
            members,
            now: 0.0,
            x: flows.x.clone(),
            t_x: vec![0.0; n],
            area: vec![0.0; n],
            load: flows.edge_load(network),
            t_load: vec![0.0; network.edge_count()],
            edge_growth,
            heap: IndexedHeap::new(Vec::new()),
            lost: Vec::new(),
            events: 0,
        };
        let keys = (0..network.edge_count()).map(|e| sim.saturation_time(e)).collect();
        sim.heap = IndexedHeap::new(keys);
        Ok(sim)
    }

    fn saturation_time(&self, e: usize) -> f64 {
        if self.edge_growth[e] <= 0.0 {
            return f64::INFINITY;
        }
        self.t_load[e] + (self.network.capacity[e] - self.load[e]).max(0.0) / self.edge_growth[e]
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Current throughputs.
    pub fn throughputs(&self) -> Vec<f64> {
        (0..self.x.len()).map(|i| self.x[i] + self.growth[i] * (self.now - self.t_x[i])).collect()
    }

    /// Time integral of each throughput since the last [`Simulator::reset_integrals`].
    pub fn integrals(&self) -> Vec<f64> {
        (0..self.x.len())
            .map(|i| {
                let dt = self.now - self.t_x[i];
                self.area[i] + self.x[i] * dt + 0.5 * self.growth[i] * dt * dt
            })
            .collect()
    }

    pub fn reset_integrals(&mut self) {
        for i in 0..self.x.len() {
            self.x[i] += self.growth[i] * (self.now - self.t_x[i]);
            self.t_x[i] = self.now;
            self.area[i] = 0.0;
        }
    }

    fn resync(&mut self) {
        let x = self.throughputs();
        self.load.iter_mut().for_each(|l| *l = 0.0);
        for (f, xi) in self.flows.iter().zip(&x) {
            for &e in &f.route {
                self.load[e] += xi;
            }
        }
        self.t_load.iter_mut().for_each(|t| *t = self.now);
        for e in 0..self.load.len() {
            let key = self.saturation_time(e);
            self.heap.update(e, key);
        }
    }

    pub fn step(&mut self) -> Result<CongestionEvent> {
        let (t, edge) = self.heap.min();
        if !t.is_finite() {
            return Err(Error::Stagnation("no edge carries a growing flow".into()));
        }
        let t = t.max(self.now);
        let tau = t - self.now;
        self.now = t;
        let mut lost = std::mem::take(&mut self.lost);
        draw_losses(&self.members[edge], &self.sync, &mut self.rng, &mut lost);
        let mut dropped = 0.0;
        for &i in &lost {
            let dt = t - self.t_x[i];
            let xi = self.x[i] + self.growth[i] * dt;
            self.area[i] += self.x[i] * dt + 0.5 * self.growth[i] * dt * dt;
            self.t_x[i] = t;
            let d = (1.0 - self.flows[i].beta) * xi;
            self.x[i] = xi - d;
            if self.flows[i].route.contains(&edge) {
                dropped += d;
            }
            for &e in &self.flows[i].route {
                self.load[e] += self.edge_growth[e] * (t - self.t_load[e]) - d;
                self.t_load[e] = t;
                let key = self.saturation_time(e);
                self.heap.update(e, key);
            }
        }
        self.events += 1;
        if self.events % RESYNC_EVERY == 0 {
            self.resync();
        }
        let members = self.members[edge].len();
        let event = CongestionEvent {
            time: t,
            tau,
            edge,
            lost: lost.clone(),
            members,
            post_mean: (self.network.capacity[edge] - dropped) / members as f64,
        };
        self.lost = lost;
        Ok(event)
    }
}

/// Run length and warm-up, both in congestion epochs per flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub epochs: u64,
    #[serde(default)]
    pub warmup_epochs: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Batches for the batch-means error estimates.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    50
}

impl SimOptions {
    pub fn new(epochs: u64, seed: u64) -> SimOptions {
        SimOptions { epochs, warmup_epochs: 0, seed, stream: 0, batches: default_batches() }
    }
}

/// Sample mean with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    fn batch_means(values: &[f64], batches: usize) -> Estimate {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let b = batches.min(n / 2).max(2);
        let size = n / b;
        if size == 0 {
            return Estimate { mean, std_err: f64::NAN };
        }
        let means: Vec<f64> = (0..b).map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        Estimate { mean, std_err: (var / b as f64).sqrt() }
    }

    /// Distance from `target` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Time-average throughput of each flow.
    pub q_per_flow: Vec<f64>,
    /// Mean of `q_per_flow`.
    pub q_mean: f64,
    pub events: u64,
    pub decreases: u64,
    pub duration: f64,
    /// Time between consecutive congestion events.
    pub tau: Estimate,
    /// Mean throughput of the congested edge's flows just after each event.
    pub post_event: Estimate,
    /// Realized fraction of the congested edge's flows that lose, per event.
    pub sync_rate: Estimate,
}

/// Runs until the flows have seen `epochs` decreases each on average, after a
/// warm-up of `warmup_epochs`.
pub fn run_simulation(network: &FluidNetwork, flows: &FlowSet, sync: &SyncModel, options: &SimOptions) -> Result<PerformanceReport> {
    if options.epochs < 100 {
        return Err(invalid(format!("runs need at least 100 epochs per flow, got {}", options.epochs)));
    }
    let mut sim = Simulator::new(network, flows, sync, options.seed, options.stream)?;
    let n = flows.len() as u64;
    let mut decreases = 0u64;
    while decreases < options.warmup_epochs * n {
        decreases += sim.step()?.lost.len() as u64;
    }
    sim.reset_integrals();
    let start = sim.now();
    let (mut taus, mut post, mut rates) = (Vec::new(), Vec::new(), Vec::new());
    let mut decreases = 0u64;
    while decreases < options.epochs * n {
        let ev = sim.step()?;
        decreases += ev.lost.len() as u64;
        taus.push(ev.tau);
        post.push(ev.post_mean);
        rates.push(ev.lost.len() as f64 / ev.members as f64);
    }
    let duration = sim.now() - start;
    let q_per_flow: Vec<f64> = sim.integrals().into_iter().map(|a| a / duration).collect();
    let q_mean = q_per_flow.iter().sum::<f64>() / q_per_flow.len() as f64;
    Ok(PerformanceReport {
        q_per_flow,
        q_mean,
        events: taus.len() as u64,
        decreases,
        duration,
        tau: Estimate::batch_means(&taus, options.batches),
        post_event: Estimate::batch_means(&post, options.batches),
        sync_rate: Estimate::batch_means(&rates, options.batches),
    })
}

/// Homogeneous single-link prediction `E[X] = [1 - (1 - beta) r] C / N` just after an event.
pub fn homogeneous_post_event_mean(capacity: f64, n: usize, beta: f64, r: f64) -> f64 {
    (1.0 - (1.0 - beta) * r) * capacity / n as f64
}

/// Homogeneous single-link prediction `E[tau] = (1 - beta) C R r / (alpha N P)`.
pub fn homogeneous_mean_tau(capacity: f64, n: usize, flow: &FlowTemplate, r: f64) -> f64 {
    (1.0 - flow.beta) * capacity * flow.rtt * r / (flow.alpha * n as f64 * flow.packet_size)
}

/// Capacity allocation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityStrategy {
    Uniform,
    Maximum,
    Minimum,
    Product,
    MeanField,
}

impl CapacityStrategy {
    pub const ALL: [CapacityStrategy; 5] = [
        CapacityStrategy::Uniform,
        CapacityStrategy::Maximum,
        CapacityStrategy::Minimum,
        CapacityStrategy::Product,
        CapacityStrategy::MeanField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CapacityStrategy::Uniform => "uniform",
            CapacityStrategy::Maximum => "maximum",
            CapacityStrategy::Minimum => "minimum",
            CapacityStrategy::Product => "product",
            CapacityStrategy::MeanField => "mean_field",
        }
    }
}

impl fmt::Display for CapacityStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CapacityStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CapacityStrategy::ALL
            .into_iter()
            .find(|c| c.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown capacity strategy {s:?}")))
    }
}

/// Per-edge structural inputs of the allocation rules.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub q_a: Vec<usize>,
    pub q_b: Vec<usize>,
    pub load: Vec<f64>,
}

impl EdgeStats {
    /// In-degrees of both endpoints and exact betweenness of every tree edge.
    pub fn from_tree(tree: &GrowingTree) -> EdgeStats {
        let q = tree.in_degree();
        let edges = tree.edges();
        EdgeStats {
            q_a: edges.iter().map(|&(v, _)| q[v]).collect(),
            q_b: edges.iter().map(|&(_, p)| q[p]).collect(),
            load: tree.betweenness().iter().map(|&l| l as f64).collect(),
        }
    }

    /// Same quantities for a tree network rooted at vertex 0.
    pub fn from_network(network: &FluidNetwork) -> Result<EdgeStats> {
        if !network.is_tree() {
            return Err(invalid("edge statistics need a tree network"));
        }
        let nv = network.vertex_count;
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by_key(|&v| network.depth[v]);
        let mut children = vec![0usize; nv];
        let mut size = vec![1usize; nv];
        for &v in order.iter().rev().filter(|&&v| v != 0) {
            let p = network.other_end(network.bfs_parent_edge[v], v);
            children[p] += 1;
            size[p] += size[v];
        }
        let mut stats = EdgeStats { q_a: Vec::new(), q_b: Vec::new(), load: Vec::new() };
        for &(a, b) in &network.edges {
            let (child, parent) = if network.depth[a] > network.depth[b] { (a, b) } else { (b, a) };
            stats.q_a.push(children[child]);
            stats.q_b.push(children[parent]);
            stats.load.push((size[child] * (nv - size[child])) as f64);
        }
        Ok(stats)
    }

    fn weight(&self, e: usize, strategy: CapacityStrategy) -> f64 {
        let (a, b) = (self.q_a[e] as f64, self.q_b[e] as f64);
        match strategy {
            CapacityStrategy::Uniform => 1.0,
            CapacityStrategy::Maximum => a.max(b),
            CapacityStrategy::Minimum => a.min(b),
            CapacityStrategy::Product => a * b,
            CapacityStrategy::MeanField => self.load[e],
        }
    }
}

/// Default floor for zero allocation weights, as a fraction of the mean weight.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.1;

/// Capacities proportional to the strategy weight, rescaled to mean `mean_capacity`.
/// Zero weights are raised to `floor` times the mean raw weight first.
pub fn assign_capacities(
    network: &FluidNetwork,
    strategy: CapacityStrategy,
    mean_capacity: f64,
    stats: &EdgeStats,
    floor: f64,
) -> Result<FluidNetwork> {
    let m = network.edge_count();
    if stats.q_a.len() != m || stats.q_b.len() != m || stats.load.len() != m {
        return Err(invalid("edge statistics do not match the network"));
    }
    if !(mean_capacity > 0.0 && mean_capacity.is_finite()) || !(floor > 0.0 && floor <= 1.0) {
        return Err(invalid(format!("need mean capacity > 0 and floor in (0, 1], got {mean_capacity}, {floor}")));
    }
    let mut w: Vec<f64> = (0..m).map(|e| stats.weight(e, strategy)).collect();
    let raw_mean = w.iter().sum::<f64>() / m as f64;
    let fill = if raw_mean > 0.0 { floor * raw_mean } else { 1.0 };
    w.iter_mut().filter(|v| **v <= 0.0).for_each(|v| *v = fill);
    let scale = mean_capacity * m as f64 / w.iter().sum::<f64>();
    network.with_capacities(w.into_iter().map(|v| v * scale).collect())
}

/// Strategy comparison on a grown tree with uniformly placed flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetsimConfig {
    pub nodes: usize,
    /// Tree tuning parameter `1 / (1 + a)`.
    pub tree_alpha: f64,
    pub mean_capacity: f64,
    pub flows: usize,
    pub epochs: u64,
    pub warmup_epochs: u64,
    pub seed: u64,
    /// Loss propensity shared by all flows.
    pub pi: f64,
    /// Zero-weight floor passed to [`assign_capacities`].
    pub floor: f64,
    pub flow: FlowTemplate,
}

impl Default for NetsimConfig {
    fn default() -> Self {
        NetsimConfig {
            nodes: 10_000,
            tree_alpha: 0.5,
            mean_capacity: 1e5,
            flows: 10_000,
            epochs: 100,
            warmup_epochs: 0,
            seed: 1,
            pi: 0.5,
            floor: DEFAULT_WEIGHT_FLOOR,
            flow: FlowTemplate::default(),
        }
    }
}

/// Tree, routes and edge statistics shared by every strategy of one comparison.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: NetsimConfig,
    pub tree: GrowingTree,
    pub network: FluidNetwork,
    pub stats: EdgeStats,
    pub flows: FlowSet,
}

/// Strategies from best to worst in the reference comparison.
pub const EXPECTED_ORDER: [CapacityStrategy; 5] = [
    CapacityStrategy::MeanField,
    CapacityStrategy::Minimum,
    CapacityStrategy::Product,
    CapacityStrategy::Maximum,
    CapacityStrategy::Uniform,
];

impl NetsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.flows == 0 {
            return Err(Error::Config("need at least two nodes and one flow".into()));
        }
        if self.epochs < 100 {
            return Err(Error::Config(format!("epochs must be at least 100, got {}", self.epochs)));
        }
        SyncModel::Uniform(self.pi).validate(self.flows)?;
        self.flow.flow(vec![0]).validate()
    }

    /// Grows the tree (stream 0) and draws the flow endpoints (stream 1).
    pub fn prepare(&self) -> Result<Experiment> {
        self.validate()?;
        let tree = crate::tree_gen::grow(&crate::tree_gen::TreeParams::new(self.tree_alpha, self.nodes - 1, self.seed)?)?;
        let network = FluidNetwork::from_tree(&tree, self.mean_capacity)?;
        let stats = EdgeStats::from_tree(&tree);
        let flows = FlowSet::uniform_pairs(&network, self.flows, self.flow, &mut sim_rng(self.seed, 1))?;
        Ok(Experiment { config: self.clone(), tree, network, stats, flows })
    }
}

impl Experiment {
    pub fn capacities(&self, strategy: CapacityStrategy) -> Result<FluidNetwork> {
        assign_capacities(&self.network, strategy, self.config.mean_capacity, &self.stats, self.config.floor)
    }

    /// Simulates one strategy; loss draws use stream 2 of the configured seed.
    pub fn run(&self, strategy: CapacityStrategy) -> Result<PerformanceReport> {
        let c = &self.config;
        let network = self.capacities(strategy)?;
        let options = SimOptions { epochs: c.epochs, warmup_epochs: c.warmup_epochs, seed: c.seed, stream: 2, batches: default_batches() };
        run_simulation(&network, &self.flows, &SyncModel::Uniform(c.pi), &options)
    }
}

/// True when the mean performances follow [`EXPECTED_ORDER`] strictly.
pub fn ordering_holds(results: &[(CapacityStrategy, f64)]) -> bool {
    let q = |s: CapacityStrategy| results.iter().find(|r| r.0 == s).map(|r| r.1);
    EXPECTED_ORDER.windows(2).all(|w| matches!((q(w[0]), q(w[1])), (Some(a), Some(b)) if a > b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_flow(route: Vec<usize>) -> Flow {
        Flow { route, alpha: 1.0, beta: 0.5, rtt: 1.0, packet_size: 1.0 }
    }

    #[test]
    fn single_link_single_flow() {
        let net = FluidNetwork::single_link(10.0).unwrap();
        let flows = FlowSet::new(vec![unit_flow(vec![0])]);
        assert_eq!(next_congestion(&net, &flows).unwrap(), (10.0, 0));
    }

    #[test]
    fn smaller_slack_wins() {
        let net = FluidNetwork::new(3, vec![(0, 1), (1, 2)], vec![4.0, 6.0]).unwrap();
        let flows = FlowSet::new(vec![unit_flow(vec![0, 1])]);
        assert_eq!(next_congestion(&net, &flows).unwrap(), (4.0, 0));
        let tie = FluidNetwork::new(3, vec![(0, 1), (1, 2)], vec![5.0, 5.0]).unwrap();
        assert_eq!(next_congestion(&tie, &flows).unwrap(), (5.0, 0));
    }

    #[test]
    fn saturated_network_stagnates() {
        let net = FluidNetwork::single_link(1.0).unwrap();
        let mut flows = FlowSet::new(vec![unit_flow(vec![0])]);
        flows.x[0] = 1.0;
        assert!(matches!(next_congestion(&net, &flows), Err(Error::Stagnation(_))));
        let empty = FluidNetwork::new(3, vec![(0, 1), (1, 2)], vec![1.0, 1.0]).unwrap();
        let flows = FlowSet::new(vec![unit_flow(vec![0])]);
        assert_eq!(next_congestion(&empty, &flows).unwrap().1, 0);
    }

    #[test]
    fn lone_flow_always_loses() {
        let mut rng = sim_rng(1, 0);
        let mut out = Vec::new();
        for _ in 0..100 {
            draw_losses(&[3], &SyncModel::Uniform(1e-6), &mut rng, &mut out);
            assert_eq!(out, vec![3]);
        }
    }

    #[test]
    fn rate_inversion() {
        for n in [2, 10, 50] {
            for r in [0.2, 0.5, 0.9, 1.0] {
                if r < 1.0 / n as f64 {
                    assert!(propensity_for_rate(r, n).is_err());
                    continue;
                }
                let pi = propensity_for_rate(r, n).unwrap();
                assert!((sync_rate(pi, n).unwrap() - r).abs() < 1e-12, "n={n} r={r}");
            }
        }
        assert_eq!(propensity_for_rate(0.5, 2).unwrap(), PI_FLOOR);
    }

    #[test]
    fn tree_routes() {
        let tree = GrowingTree::from_parents(vec![0, 0, 1, 1, 2]).unwrap();
        let net = FluidNetwork::from_tree(&tree, 1.0).unwrap();
        // Vertex 4 hangs off 1, vertex 5 off 2; edge e joins e + 1 to its parent.
        assert_eq!(net.route(4, 5).unwrap(), vec![3, 0, 1, 4]);
        assert_eq!(net.route(5, 4).unwrap(), vec![4, 1, 0, 3]);
        assert_eq!(net.route(3, 1).unwrap(), vec![2]);
        let cycle = FluidNetwork::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![1.0; 4]).unwrap();
        assert_eq!(cycle.route(0, 3).unwrap(), vec![3]);
        assert!(cycle.check_route(&[0, 1, 2, 3]).is_err());
        assert!(net.check_route(&[0, 4]).is_err());
    }

    #[test]
    fn network_stats_match_tree_stats() {
        let tree = GrowingTree::from_parents(vec![0, 0, 1, 1, 2, 5, 0]).unwrap();
        let net = FluidNetwork::from_tree(&tree, 1.0).unwrap();
        assert_eq!(EdgeStats::from_network(&net).unwrap(), EdgeStats::from_tree(&tree));
    }

    #[test]
    fn path_mean_field_profile() {
        let tau = 9;
        let tree = GrowingTree::path(tau).unwrap();
        let net = FluidNetwork::from_tree(&tree, 1.0).unwrap();
        let stats = EdgeStats::from_tree(&tree);
        let c = assign_capacities(&net, CapacityStrategy::MeanField, 100.0, &stats, DEFAULT_WEIGHT_FLOOR).unwrap();
        // Edge e cuts off the last tau - e vertices.
        let profile: Vec<f64> = (0..tau).map(|e| ((tau - e) * (e + 1)) as f64).collect();
        for e in 0..tau {
            assert!((c.capacity()[e] / c.capacity()[0] - profile[e] / profile[0]).abs() < 1e-12);
        }
        let u = assign_capacities(&net, CapacityStrategy::Uniform, 100.0, &stats, DEFAULT_WEIGHT_FLOOR).unwrap();
        assert!(u.capacity().iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in CapacityStrategy::ALL {
            assert_eq!(s.name().parse::<CapacityStrategy>().unwrap(), s);
        }
        assert_eq!("mean-field".parse::<CapacityStrategy>().unwrap(), CapacityStrategy::MeanField);
        assert!("median".parse::<CapacityStrategy>().is_err());
    }

    #[test]
    fn sawtooth_average() {
        let net = FluidNetwork::single_link(1e5).unwrap();
        let flows = FlowSet::homogeneous(1, FlowTemplate::default());
        let mut opts = SimOptions::new(100, 3);
        opts.warmup_epochs = 5;
        let rep = run_simulation(&net, &flows, &SyncModel::Uniform(0.3), &opts).unwrap();
        assert!((rep.q_mean / 0.75e5 - 1.0).abs() < 1e-12, "{}", rep.q_mean);
        assert_eq!(rep.sync_rate.mean, 1.0);
    }
}
