//! Hop-count analytics: longest shortest paths per node-pair class and
//! exact shortest-path-length histograms.
//!
//! Hops count traversals between distinct nodes, so parallel links collapse
//! into one adjacency and capacities are ignored (only usable links count).

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::CapacityView;
use crate::error::{Error, Result};
use crate::topology::{NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairClass {
    #[serde(rename = "srv-srv")]
    SrvSrv,
    #[serde(rename = "swc-swc")]
    SwcSwc,
    #[serde(rename = "srv-swc")]
    SrvSwc,
}

impl PairClass {
    pub const ALL: [PairClass; 3] = [PairClass::SrvSrv, PairClass::SwcSwc, PairClass::SrvSwc];

    pub fn name(self) -> &'static str {
        match self {
            PairClass::SrvSrv => "srv-srv",
            PairClass::SwcSwc => "swc-swc",
            PairClass::SrvSwc => "srv-swc",
        }
    }

    /// Kind of the first and second member of a pair.
    pub fn kinds(self) -> (NodeKind, NodeKind) {
        match self {
            PairClass::SrvSrv => (NodeKind::Server, NodeKind::Server),
            PairClass::SwcSwc => (NodeKind::Switch, NodeKind::Switch),
            PairClass::SrvSwc => (NodeKind::Server, NodeKind::Switch),
        }
    }

    /// Enumerates the pairs of this class over `nodes` (dense indices,
    /// ascending). Same-kind pairs are unordered and emitted with `u < v`.
    pub fn pairs(self, view: &CapacityView<'_>, nodes: &[usize]) -> Vec<(usize, usize)> {
        let (ka, kb) = self.kinds();
        let topo = view.topology();
        let firsts: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&n| topo.node_id(n).kind == ka)
            .collect();
        let seconds: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&n| topo.node_id(n).kind == kb)
            .collect();
        let mut out = Vec::new();
        for &u in &firsts {
            for &v in &seconds {
                if ka != kb || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PairClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "srv-srv" | "srvsrv" => Ok(PairClass::SrvSrv),
            "swc-swc" | "swcswc" => Ok(PairClass::SwcSwc),
            "srv-swc" | "srvswc" => Ok(PairClass::SrvSwc),
            other => Err(Error::param("class", format!("unknown pair class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LongestPath {
    pub hops: u32,
    pub witness: (NodeId, NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EccentricityReport {
    pub per_class: BTreeMap<PairClass, LongestPath>,
}

/// Simple adjacency over usable links between live nodes.
pub(crate) fn hop_adjacency(view: &CapacityView<'_>) -> Vec<Vec<usize>> {
    let topo = view.topology();
    let mut adj = vec![Vec::new(); topo.num_nodes()];
    for l in 0..topo.links().len() {
        if !view.usable(l) {
            continue;
        }
        let [a, b] = topo.endpoints(l);
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

fn class_nodes(view: &CapacityView<'_>, kind: NodeKind) -> Vec<usize> {
    let topo = view.topology();
    (0..topo.num_nodes())
        .filter(|&n| view.is_alive(n) && topo.node_id(n).kind == kind)
        .collect()
}

fn disconnected(view: &CapacityView<'_>, adj: &[Vec<usize>], nodes: &[usize]) -> Error {
    let mut comp = vec![usize::MAX; adj.len()];
    let mut count = 0;
    for &start in nodes {
        if comp[start] != usize::MAX {
            continue;
        }
        let dist = bfs(adj, start);
        for (n, d) in dist.iter().enumerate() {
            if *d != u32::MAX {
                comp[n] = count;
            }
        }
        count += 1;
    }
    Error::Disconnected {
        component_of: nodes
            .iter()
            .map(|&n| (view.topology().node_id(n), comp[n]))
            .collect(),
        components: count,
    }
}

/// Runs BFS from every first-kind node and folds the distances to the
/// second-kind nodes of `class` into `fold`. Errors when any pair is
/// unreachable.
fn per_source<T, F>(view: &CapacityView<'_>, class: PairClass, fold: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[u32], &[usize]) -> T + Sync,
{
    let (ka, kb) = class.kinds();
    let firsts = class_nodes(view, ka);
    let seconds = class_nodes(view, kb);
    let has_pair = if ka == kb {
        firsts.len() >= 2
    } else {
        !firsts.is_empty() && !seconds.is_empty()
    };
    if !has_pair {
        return Err(Error::EmptyClass(class));
    }
    let adj = hop_adjacency(view);
    let results: Vec<Option<T>> = firsts
        .par_iter()
        .map(|&u| {
            let dist = bfs(&adj, u);
            let targets: Vec<usize> = seconds
                .iter()
                .copied()
                .filter(|&v| ka != kb || v > u)
                .collect();
            if targets.iter().any(|&v| dist[v] == u32::MAX) {
                None
            } else {
                Some(fold(u, &dist, &targets))
            }
        })
        .collect();
    if results.iter().any(Option::is_none) {
        let mut all = firsts.clone();
        all.extend(&seconds);
        all.sort_unstable();
        all.dedup();
        return Err(disconnected(view, &adj, &all));
    }
    Ok(results.into_iter().flatten().collect())
}

/// Longest shortest path over all pairs of `class` among live nodes, with
/// the lexicographically smallest pair attaining it.
pub fn longest_shortest_path(view: &CapacityView<'_>, class: PairClass) -> Result<LongestPath> {
    let per = per_source(view, class, |u, dist, targets| {
        // targets ascend, so the first maximum is the smallest witness
        let mut best: Option<(u32, usize)> = None;
        for &v in targets {
            if best.is_none_or(|(h, _)| dist[v] > h) {
                best = Some((dist[v], v));
            }
        }
        best.map(|(h, v)| (h, u, v))
    })?;
    let topo = view.topology();
    let (hops, u, v) = per
        .into_iter()
        .flatten()
        // sources ascend too; keep the first strict maximum
        .fold(None::<(u32, usize, usize)>, |acc, x| match acc {
            Some(a) if a.0 >= x.0 => Some(a),
            _ => Some(x),
        })
        .ok_or(Error::EmptyClass(class))?;
    Ok(LongestPath {
        hops,
        witness: (topo.node_id(u), topo.node_id(v)),
    })
}

/// Exact histogram of shortest-path lengths over all pairs of `class`.
pub fn hop_histogram(view: &CapacityView<'_>, class: PairClass) -> Result<BTreeMap<u32, u64>> {
    let per = per_source(view, class, |_, dist, targets| {
        let mut h = BTreeMap::new();
        for &v in targets {
            *h.entry(dist[v]).or_insert(0u64) += 1;
        }
        h
    })?;
    let mut total = BTreeMap::new();
    for h in per {
        for (k, c) in h {
            *total.entry(k).or_insert(0) += c;
        }
    }
    Ok(total)
}

pub fn eccentricity_report(view: &CapacityView<'_>) -> Result<EccentricityReport> {
    let mut per_class = BTreeMap::new();
    for class in PairClass::ALL {
        per_class.insert(class, longest_shortest_path(view, class)?);
    }
    Ok(EccentricityReport { per_class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Topology, TopologyParams};

    fn lsp(p: TopologyParams, c: PairClass) -> LongestPath {
        let t = Topology::build(&p).unwrap();
        longest_shortest_path(&CapacityView::nominal(&t), c).unwrap()
    }

    #[test]
    fn classic_level_one() {
        let p = TopologyParams::classic(2, 4);
        assert_eq!(lsp(p, PairClass::SrvSrv).hops, 4);
        assert_eq!(lsp(p, PairClass::SwcSwc).hops, 4);
        let r = lsp(p, PairClass::SrvSwc);
        assert_eq!(r.hops, 3);
        assert_eq!(r.witness, (NodeId::server(0), NodeId::switch(0, 1)));
    }

    #[test]
    fn witness_is_smallest_pair() {
        // srv0 = (0,0) and srv5 = (1,1) is the first pair differing in both digits
        let r = lsp(TopologyParams::classic(2, 4), PairClass::SrvSrv);
        assert_eq!(r.witness, (NodeId::server(0), NodeId::server(5)));
    }

    #[test]
    fn histogram_small_cases() {
        let t = Topology::build(&TopologyParams::classic(1, 2)).unwrap();
        let h = hop_histogram(&CapacityView::nominal(&t), PairClass::SrvSrv).unwrap();
        assert_eq!(h, BTreeMap::from([(2, 1)]));

        let t = Topology::build(&TopologyParams::classic(2, 4)).unwrap();
        let h = hop_histogram(&CapacityView::nominal(&t), PairClass::SrvSrv).unwrap();
        // 4-digit neighbours: 16 * 6 / 2 = 48 at 2 hops, the rest at 4
        assert_eq!(h, BTreeMap::from([(2, 48), (4, 72)]));
        assert_eq!(h.values().sum::<u64>(), 120);
    }

    #[test]
    fn empty_class() {
        let t = Topology::build(&TopologyParams::classic(1, 4)).unwrap();
        let v = CapacityView::nominal(&t);
        assert!(matches!(
            longest_shortest_path(&v, PairClass::SwcSwc),
            Err(Error::EmptyClass(PairClass::SwcSwc))
        ));
    }

    #[test]
    fn disconnected_reports_components() {
        let t = Topology::build(&TopologyParams::classic(2, 2)).unwrap();
        let mut alive = vec![true; t.num_nodes()];
        for n in t.num_servers()..t.num_nodes() {
            alive[n] = false;
        }
        let v = CapacityView::with_alive(&t, alive).unwrap();
        match longest_shortest_path(&v, PairClass::SrvSrv) {
            Err(Error::Disconnected { components, component_of }) => {
                assert_eq!(components, 4);
                assert_eq!(component_of.len(), 4);
            }
            other => panic!("expected disconnected, got {other:?}"),
        }
    }

    #[test]
    fn class_parse() {
        assert_eq!("srv-swc".parse::<PairClass>().unwrap(), PairClass::SrvSwc);
        assert_eq!("SWC_SWC".parse::<PairClass>().unwrap(), PairClass::SwcSwc);
        assert!("x".parse::<PairClass>().is_err());
    }
}
