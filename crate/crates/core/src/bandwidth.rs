//! Interconnection bandwidth (IBW) between node pairs.
//!
//! Single-path IBW is the widest (maximum-bottleneck) path; multi-path IBW
//! is the undirected s-t max-flow where every node relays and only link
//! capacities bind. Class-wide minima and component averages are computed
//! from all-pairs structures: a maximum spanning forest for bottlenecks and
//! a Gusfield flow-equivalent tree for max-flows, so an exact all-pairs
//! answer costs `n - 1` flow computations.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::PairClass;
use crate::topology::{NodeId, Topology};

/// Residual capacities at or below this are treated as saturated.
const EPS: f64 = 1e-12;

/// Link capacities (Gbps) and node liveness over a topology.
#[derive(Debug, Clone)]
pub struct CapacityView<'a> {
    topo: &'a Topology,
    capacity: Cow<'a, [f64]>,
    alive: Cow<'a, [bool]>,
}

impl<'a> CapacityView<'a> {
    /// Every node alive, every link at nominal capacity.
    pub fn nominal(topo: &'a Topology) -> Self {
        CapacityView {
            topo,
            capacity: Cow::Owned(topo.links().iter().map(|l| l.nominal_gbps()).collect()),
            alive: Cow::Owned(vec![true; topo.num_nodes()]),
        }
    }

    /// Nominal capacities with some nodes dead; their links carry nothing.
    pub fn with_alive(topo: &'a Topology, alive: Vec<bool>) -> Result<Self> {
        let capacity = topo
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| {
                let [a, b] = topo.endpoints(l);
                if alive.get(a).copied().unwrap_or(false) && alive.get(b).copied().unwrap_or(false) {
                    link.nominal_gbps()
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(topo, capacity, alive)
    }

    /// Checks `0 <= capacity <= nominal` and that links of dead nodes are at 0.
    pub fn new(topo: &'a Topology, capacity: Vec<f64>, alive: Vec<bool>) -> Result<Self> {
        if capacity.len() != topo.links().len() {
            return Err(Error::param("capacity", "one entry per link required"));
        }
        if alive.len() != topo.num_nodes() {
            return Err(Error::param("alive", "one entry per node required"));
        }
        for (l, &c) in capacity.iter().enumerate() {
            let nominal = topo.links()[l].nominal_gbps();
            if !(0.0..=nominal).contains(&c) {
                return Err(Error::param(
                    "capacity",
                    format!("link {l}: {c} Gbps outside [0, {nominal}]"),
                ));
            }
            let [a, b] = topo.endpoints(l);
            if c > 0.0 && !(alive[a] && alive[b]) {
                return Err(Error::param("capacity", format!("link {l} touches a dead node")));
            }
        }
        Ok(CapacityView {
            topo,
            capacity: Cow::Owned(capacity),
            alive: Cow::Owned(alive),
        })
    }

    pub(crate) fn from_parts_unchecked(topo: &'a Topology, capacity: &'a [f64], alive: &'a [bool]) -> Self {
        CapacityView {
            topo,
            capacity: Cow::Borrowed(capacity),
            alive: Cow::Borrowed(alive),
        }
    }

    /// Every capacity multiplied by `factor`. The result may exceed nominal
    /// capacities, so it bypasses the bound check of [`CapacityView::new`].
    pub fn scaled(&self, factor: f64) -> CapacityView<'a> {
        assert!(factor >= 0.0 && factor.is_finite());
        CapacityView {
            topo: self.topo,
            capacity: Cow::Owned(self.capacity.iter().map(|c| c * factor).collect()),
            alive: self.alive.clone(),
        }
    }

    pub fn topology(&self) -> &'a Topology {
        self.topo
    }

    pub fn capacity(&self, link: usize) -> f64 {
        self.capacity[link]
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacity
    }

    pub fn is_alive(&self, node: usize) -> bool {
        self.alive[node]
    }

    /// Link carries traffic: positive capacity between live nodes.
    pub fn usable(&self, link: usize) -> bool {
        let [a, b] = self.topo.endpoints(link);
        self.capacity[link] > 0.0 && self.alive[a] && self.alive[b]
    }

    pub fn alive_nodes(&self) -> Vec<usize> {
        (0..self.topo.num_nodes()).filter(|&n| self.alive[n]).collect()
    }

    fn endpoint(&self, id: &NodeId) -> Result<usize> {
        match self.topo.node_index(id) {
            Some(n) if self.alive[n] => Ok(n),
            _ => Err(Error::NodeUnavailable(*id)),
        }
    }

    fn endpoints_of(&self, u: &NodeId, v: &NodeId) -> Result<(usize, usize)> {
        let a = self.endpoint(u)?;
        let b = self.endpoint(v)?;
        if a == b {
            return Err(Error::SameEndpoint(*u));
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoutingMode {
    #[serde(rename = "single-path")]
    SinglePath,
    #[serde(rename = "multi-path")]
    MultiPath,
}

impl RoutingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoutingMode::SinglePath => "single-path",
            RoutingMode::MultiPath => "multi-path",
        }
    }
}

impl std::fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "single" | "single-path" | "singlepath" => Ok(RoutingMode::SinglePath),
            "multi" | "multi-path" | "multipath" => Ok(RoutingMode::MultiPath),
            other => Err(Error::param("mode", format!("unknown routing mode `{other}`"))),
        }
    }
}

/// Undirected capacitated multigraph with a Dinic max-flow solver.
///
/// Each undirected edge is a pair of opposing arcs that both start with the
/// full capacity, so the net flow across the edge is bounded by it in
/// either direction.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    head: Vec<usize>,
    cap: Vec<f64>,
    residual: Vec<f64>,
    level: Vec<i32>,
    next_arc: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            head: Vec::new(),
            cap: Vec::new(),
            residual: Vec::new(),
            level: vec![0; nodes],
            next_arc: vec![0; nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, u: usize, v: usize, capacity: f64) {
        assert!(u != v, "self-loop");
        assert!(capacity >= 0.0, "negative capacity");
        let e = self.head.len();
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
        self.head.extend([v, u]);
        self.cap.extend([capacity, capacity]);
        self.residual.extend([capacity, capacity]);
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.head[e];
                if self.level[v] < 0 && self.residual[e] > EPS {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while self.next_arc[u] < self.adj[u].len() {
            let e = self.adj[u][self.next_arc[u]];
            let v = self.head[e];
            if self.level[v] == self.level[u] + 1 && self.residual[e] > EPS {
                let got = self.dfs(v, t, pushed.min(self.residual[e]));
                if got > EPS {
                    self.residual[e] -= got;
                    self.residual[e ^ 1] += got;
                    return got;
                }
            }
            self.next_arc[u] += 1;
        }
        0.0
    }

    /// Max-flow value from `s` to `t`. Residuals are reset first, and are
    /// left in place afterwards for [`FlowNetwork::source_side`].
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        assert!(s != t, "source equals sink");
        self.residual.copy_from_slice(&self.cap);
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.next_arc.fill(0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= EPS {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph of the last flow:
    /// the source side of a minimum cut.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.head[e];
                if !seen[v] && self.residual[e] > EPS {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// Flow network over the usable links of `view` induced on `nodes`, plus
/// the map from dense topology index to local index.
fn induced_network(view: &CapacityView<'_>, nodes: &[usize]) -> (FlowNetwork, Vec<usize>) {
    let topo = view.topology();
    let mut local = vec![usize::MAX; topo.num_nodes()];
    for (i, &n) in nodes.iter().enumerate() {
        local[n] = i;
    }
    let mut net = FlowNetwork::new(nodes.len());
    for l in 0..topo.links().len() {
        if !view.usable(l) {
            continue;
        }
        let [a, b] = topo.endpoints(l);
        if local[a] != usize::MAX && local[b] != usize::MAX {
            net.add_edge(local[a], local[b], view.capacity(l));
        }
    }
    (net, local)
}

/// Gusfield flow-equivalent tree: the max-flow between any two nodes is
/// the smallest edge weight on their tree path.
#[derive(Debug, Clone)]
pub struct FlowTree {
    nodes: Vec<usize>,
    parent: Vec<usize>,
    weight: Vec<f64>,
}

impl FlowTree {
    /// Builds the tree over `nodes`, which must be a union of connected
    /// components of the view (or the flows are those of the induced
    /// subgraph).
    pub fn build(view: &CapacityView<'_>, nodes: &[usize]) -> Self {
        let (mut net, _) = induced_network(view, nodes);
        let n = nodes.len();
        let mut parent = vec![0usize; n];
        let mut weight = vec![f64::INFINITY; n];
        for s in 1..n {
            let t = parent[s];
            weight[s] = net.max_flow(s, t);
            let side = net.source_side(s);
            for i in s + 1..n {
                if side[i] && parent[i] == t {
                    parent[i] = s;
                }
            }
        }
        FlowTree {
            nodes: nodes.to_vec(),
            parent,
            weight,
        }
    }

    /// All-pairs max-flow matrix indexed by position in the node list.
    pub fn all_pairs(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let mut tree = vec![Vec::new(); n];
        for s in 1..n {
            tree[s].push((self.parent[s], self.weight[s]));
            tree[self.parent[s]].push((s, self.weight[s]));
        }
        (0..n).map(|src| bottlenecks_from(&tree, src)).collect()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
}

/// Minimum edge weight on the path from `src` to every node of a forest;
/// `0` for nodes in another tree, `+inf` for `src` itself.
fn bottlenecks_from(tree: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let mut best = vec![f64::NAN; tree.len()];
    best[src] = f64::INFINITY;
    let mut stack = vec![src];
    while let Some(u) = stack.pop() {
        for &(v, w) in &tree[u] {
            if best[v].is_nan() {
                best[v] = best[u].min(w);
                stack.push(v);
            }
        }
    }
    for b in &mut best {
        if b.is_nan() {
            *b = 0.0;
        }
    }
    best
}

/// All-pairs widest-path values over `nodes` from a maximum spanning forest.
pub(crate) fn widest_all_pairs(view: &CapacityView<'_>, nodes: &[usize]) -> Vec<Vec<f64>> {
    let topo = view.topology();
    let mut local = vec![usize::MAX; topo.num_nodes()];
    for (i, &n) in nodes.iter().enumerate() {
        local[n] = i;
    }
    let mut edges: Vec<(f64, usize, usize)> = (0..topo.links().len())
        .filter(|&l| view.usable(l))
        .filter_map(|l| {
            let [a, b] = topo.endpoints(l);
            (local[a] != usize::MAX && local[b] != usize::MAX).then(|| (view.capacity(l), local[a], local[b]))
        })
        .collect();
    edges.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut uf = UnionFind::new(nodes.len());
    let mut tree = vec![Vec::new(); nodes.len()];
    for (w, a, b) in edges {
        if uf.union(a, b) {
            tree[a].push((b, w));
            tree[b].push((a, w));
        }
    }
    (0..nodes.len()).map(|s| bottlenecks_from(&tree, s)).collect()
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(PartialEq)]
struct Widest(f64, usize);

impl Eq for Widest {}

impl PartialOrd for Widest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Widest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Largest bottleneck capacity over all `u`-`v` paths; `0` when disconnected.
pub fn widest_path(view: &CapacityView<'_>, u: &NodeId, v: &NodeId) -> Result<f64> {
    let (s, t) = view.endpoints_of(u, v)?;
    let topo = view.topology();
    let mut best = vec![0.0f64; topo.num_nodes()];
    let mut done = vec![false; topo.num_nodes()];
    best[s] = f64::INFINITY;
    let mut heap = BinaryHeap::from([Widest(f64::INFINITY, s)]);
    while let Some(Widest(w, x)) = heap.pop() {
        if done[x] {
            continue;
        }
        if x == t {
            return Ok(w);
        }
        done[x] = true;
        for &l in topo.incident(x) {
            if !view.usable(l) {
                continue;
            }
            let [a, b] = topo.endpoints(l);
            let y = if a == x { b } else { a };
            let cand = w.min(view.capacity(l));
            if !done[y] && cand > best[y] {
                best[y] = cand;
                heap.push(Widest(cand, y));
            }
        }
    }
    Ok(0.0)
}

/// Undirected max-flow between `u` and `v`; `0` when disconnected.
pub fn max_flow(view: &CapacityView<'_>, u: &NodeId, v: &NodeId) -> Result<f64> {
    let (s, t) = view.endpoints_of(u, v)?;
    let nodes = view.alive_nodes();
    let (mut net, local) = induced_network(view, &nodes);
    Ok(net.max_flow(local[s], local[t]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbwExtreme {
    pub value_gbps: f64,
    pub witness: (NodeId, NodeId),
}

/// Minimum over all live pairs of `class` of the pair's IBW under `mode`.
pub fn min_max_ibw(view: &CapacityView<'_>, class: PairClass, mode: RoutingMode) -> Result<IbwExtreme> {
    min_max_ibw_within(view, &view.alive_nodes(), class, mode)
}

/// As [`min_max_ibw`], over the pairs drawn from `nodes` (a union of
/// connected components). Ties go to the lexicographically smallest pair.
pub fn min_max_ibw_within(
    view: &CapacityView<'_>,
    nodes: &[usize],
    class: PairClass,
    mode: RoutingMode,
) -> Result<IbwExtreme> {
    let mut nodes = nodes.to_vec();
    nodes.sort_unstable();
    let pairs = class.pairs(view, &nodes);
    if pairs.is_empty() {
        return Err(Error::EmptyClass(class));
    }
    let matrix = match mode {
        RoutingMode::SinglePath => widest_all_pairs(view, &nodes),
        RoutingMode::MultiPath => FlowTree::build(view, &nodes).all_pairs(),
    };
    let topo = view.topology();
    let mut pos = vec![usize::MAX; topo.num_nodes()];
    for (i, &n) in nodes.iter().enumerate() {
        pos[n] = i;
    }
    let values: Vec<f64> = pairs.iter().map(|&(a, b)| matrix[pos[a]][pos[b]]).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min.abs().max(1.0);
    let (a, b) = pairs
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= min + tol)
        .map(|(&(a, b), _)| (topo.node_id(a), topo.node_id(b)))
        .min()
        .expect("non-empty pair list");
    Ok(IbwExtreme {
        value_gbps: min,
        witness: (a, b),
    })
}

/// How many server pairs [`avg_component_ibw`] may evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub enum PairBudget {
    All,
    Limit(usize),
}

impl Default for PairBudget {
    fn default() -> Self {
        PairBudget::Limit(2000)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<BudgetRepr> for PairBudget {
    type Error = String;

    fn try_from(r: BudgetRepr) -> std::result::Result<Self, String> {
        match r {
            BudgetRepr::Count(0) => Err("pair budget must be positive".into()),
            BudgetRepr::Count(n) => Ok(PairBudget::Limit(n)),
            BudgetRepr::Word(w) if w.eq_ignore_ascii_case("all") => Ok(PairBudget::All),
            BudgetRepr::Word(w) => Err(format!("expected a pair count or \"all\", got `{w}`")),
        }
    }
}

impl From<PairBudget> for BudgetRepr {
    fn from(b: PairBudget) -> Self {
        match b {
            PairBudget::All => BudgetRepr::Word("all".into()),
            PairBudget::Limit(n) => BudgetRepr::Count(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvgIbw {
    pub mean_gbps: f64,
    pub pairs_evaluated: usize,
    pub total_pairs: usize,
    pub sampled: bool,
}

/// Mean multi-path IBW over the unordered server pairs of `component`.
///
/// Exact when the pair count fits the budget; otherwise a uniform sample of
/// distinct pairs drawn with `seed`, each solved by its own max-flow.
pub fn avg_component_ibw(
    view: &CapacityView<'_>,
    component: &[usize],
    budget: PairBudget,
    seed: u64,
) -> Result<AvgIbw> {
    let topo = view.topology();
    let mut nodes = component.to_vec();
    nodes.sort_unstable();
    let servers: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&n| topo.node_id(n).is_server())
        .collect();
    if servers.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "average IBW needs at least 2 servers, component has {}",
            servers.len()
        )));
    }
    let k = servers.len();
    let total = k * (k - 1) / 2;
    let limit = match budget {
        PairBudget::All => total,
        PairBudget::Limit(n) => n.min(total),
    };
    if limit == total {
        let tree = FlowTree::build(view, &nodes);
        let matrix = tree.all_pairs();
        let pos: Vec<usize> = servers
            .iter()
            .map(|s| nodes.binary_search(s).expect("server in component"))
            .collect();
        let mut sum = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                sum += matrix[pos[i]][pos[j]];
            }
        }
        return Ok(AvgIbw {
            mean_gbps: sum / total as f64,
            pairs_evaluated: total,
            total_pairs: total,
            sampled: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, total, limit);
    let (mut net, local) = induced_network(view, &nodes);
    let mut sum = 0.0;
    for p in picks.iter() {
        let (i, j) = unrank_pair(p, k);
        sum += net.max_flow(local[servers[i]], local[servers[j]]);
    }
    Ok(AvgIbw {
        mean_gbps: sum / limit as f64,
        pairs_evaluated: limit,
        total_pairs: total,
        sampled: true,
    })
}

/// Maps `0..k(k-1)/2` onto pairs `(i, j)` with `i < j < k`, row by row.
fn unrank_pair(mut rank: usize, k: usize) -> (usize, usize) {
    let mut i = 0;
    while rank >= k - 1 - i {
        rank -= k - 1 - i;
        i += 1;
    }
    (i, i + 1 + rank)
}
