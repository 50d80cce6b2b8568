//! Classic and modified BCube topologies as explicit multigraphs.
//!
//! A BCube with `k_s` server ports and `k_1g`-port switches has `k_1g^k_s`
//! servers, each addressed by a `k_s`-digit base-`k_1g` string, and `k_s`
//! switch layers of `m = k_1g^(k_s-1)` switches each. The level-`j` switch
//! with index `w` connects to the `k_1g` servers whose address equals `w`
//! once digit `j` is removed.
//!
//! The modified variants spend the switches' 10G ports on extra
//! switch-to-switch links:
//!
//! * Horizontal: circulant wiring inside each layer (offsets ±1, ±2, ...).
//! * Vertical: each column (switches sharing the same in-layer index) is
//!   wired as a ring across layers, or a bundle of parallel links when there
//!   are only two layers.
//! * Hybrid: both, with the 10G ports split between the two patterns.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capacity of a 1G link, in Gbps.
pub const B_1G: f64 = 1.0;
/// Capacity of a 10G link, in Gbps.
pub const B_10G: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Server,
    Switch,
}

impl NodeKind {
    pub fn short(self) -> &'static str {
        match self {
            NodeKind::Server => "srv",
            NodeKind::Switch => "swc",
        }
    }
}

/// Identity of a server or switch. Servers always live on layer 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub layer: u32,
    pub index: u32,
}

impl NodeId {
    pub fn server(index: u32) -> Self {
        NodeId {
            kind: NodeKind::Server,
            layer: 0,
            index,
        }
    }

    pub fn switch(layer: u32, index: u32) -> Self {
        NodeId {
            kind: NodeKind::Switch,
            layer,
            index,
        }
    }

    pub fn is_server(&self) -> bool {
        self.kind == NodeKind::Server
    }

    pub fn is_switch(&self) -> bool {
        self.kind == NodeKind::Switch
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Server => write!(f, "srv{}", self.index),
            NodeKind::Switch => write!(f, "swc{}.{}", self.layer, self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CapacityClass {
    #[serde(rename = "1G")]
    OneG,
    #[serde(rename = "10G")]
    TenG,
}

impl CapacityClass {
    pub fn nominal_gbps(self) -> f64 {
        match self {
            CapacityClass::OneG => B_1G,
            CapacityClass::TenG => B_10G,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CapacityClass::OneG => "1G",
            CapacityClass::TenG => "10G",
        }
    }
}

/// An undirected link. `parallel_index` tells apart links joining the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub class: CapacityClass,
    pub parallel_index: u32,
}

impl Link {
    pub fn nominal_gbps(&self) -> f64 {
        self.class.nominal_gbps()
    }

    /// A 10G link joining two switches of the same layer.
    pub fn is_horizontal(&self) -> bool {
        self.class == CapacityClass::TenG && self.a.layer == self.b.layer
    }

    pub fn is_vertical(&self) -> bool {
        self.class == CapacityClass::TenG && self.a.layer != self.b.layer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Classic,
    Horizontal,
    Vertical,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Classic,
        Variant::Horizontal,
        Variant::Vertical,
        Variant::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::Horizontal => "horizontal",
            Variant::Vertical => "vertical",
            Variant::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classic" => Ok(Variant::Classic),
            "horizontal" => Ok(Variant::Horizontal),
            "vertical" => Ok(Variant::Vertical),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(Error::param("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Generation parameters. `k_s` is the number of server ports (= switch
/// layers), `k_1g` the number of 1G ports per switch, `k_10g` the number of
/// 10G ports per switch split into `k_10g_h` horizontal and `k_10g_v`
/// vertical ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyParams {
    pub variant: Variant,
    pub k_s: u32,
    pub k_1g: u32,
    #[serde(default)]
    pub k_10g: u32,
    #[serde(default)]
    pub k_10g_h: u32,
    #[serde(default)]
    pub k_10g_v: u32,
}

impl TopologyParams {
    pub fn classic(k_s: u32, k_1g: u32) -> Self {
        TopologyParams {
            variant: Variant::Classic,
            k_s,
            k_1g,
            k_10g: 0,
            k_10g_h: 0,
            k_10g_v: 0,
        }
    }

    pub fn horizontal(k_s: u32, k_1g: u32, k_10g: u32) -> Self {
        TopologyParams {
            variant: Variant::Horizontal,
            k_s,
            k_1g,
            k_10g,
            k_10g_h: k_10g,
            k_10g_v: 0,
        }
    }

    pub fn vertical(k_s: u32, k_1g: u32, k_10g: u32) -> Self {
        TopologyParams {
            variant: Variant::Vertical,
            k_s,
            k_1g,
            k_10g,
            k_10g_h: 0,
            k_10g_v: k_10g,
        }
    }

    pub fn hybrid(k_s: u32, k_1g: u32, k_10g_h: u32, k_10g_v: u32) -> Self {
        TopologyParams {
            variant: Variant::Hybrid,
            k_s,
            k_1g,
            k_10g: k_10g_h + k_10g_v,
            k_10g_h,
            k_10g_v,
        }
    }

    /// Same `(k_s, k_1g)` and 10G port count under another variant. Hybrid
    /// splits the ports evenly, with the odd port (if any) going horizontal.
    pub fn with_variant(&self, variant: Variant, k_10g: u32) -> Self {
        match variant {
            Variant::Classic => Self::classic(self.k_s, self.k_1g),
            Variant::Horizontal => Self::horizontal(self.k_s, self.k_1g, k_10g),
            Variant::Vertical => Self::vertical(self.k_s, self.k_1g, k_10g),
            Variant::Hybrid => Self::hybrid(self.k_s, self.k_1g, k_10g - k_10g / 2, k_10g / 2),
        }
    }

    /// Fills the port split implied by the variant and checks the basic
    /// ranges. Wiring feasibility is checked by the builders.
    pub fn normalized(&self) -> Result<Self> {
        if self.k_s < 1 {
            return Err(Error::param("k_s", "must be at least 1"));
        }
        if self.k_1g < 2 {
            return Err(Error::param("k_1g", "must be at least 2"));
        }
        let mut p = *self;
        match p.variant {
            Variant::Classic => {
                p.k_10g = 0;
                p.k_10g_h = 0;
                p.k_10g_v = 0;
            }
            Variant::Horizontal => {
                if p.k_10g_v != 0 {
                    return Err(Error::param("k_10g_v", "must be 0 for the horizontal variant"));
                }
                if p.k_10g_h != 0 && p.k_10g_h != p.k_10g {
                    return Err(Error::param("k_10g_h", "must equal k_10g for the horizontal variant"));
                }
                p.k_10g_h = p.k_10g;
            }
            Variant::Vertical => {
                if p.k_10g_h != 0 {
                    return Err(Error::param("k_10g_h", "must be 0 for the vertical variant"));
                }
                if p.k_10g_v != 0 && p.k_10g_v != p.k_10g {
                    return Err(Error::param("k_10g_v", "must equal k_10g for the vertical variant"));
                }
                p.k_10g_v = p.k_10g;
            }
            Variant::Hybrid => {
                if p.k_10g_h + p.k_10g_v != p.k_10g {
                    return Err(Error::param(
                        "k_10g",
                        format!(
                            "hybrid split {} + {} does not add up to k_10g = {}",
                            p.k_10g_h, p.k_10g_v, p.k_10g
                        ),
                    ));
                }
            }
        }
        // keep node counts addressable with u32 indices
        let servers = (p.k_1g as u64).checked_pow(p.k_s);
        match servers {
            Some(n) if n <= u32::MAX as u64 / 2 => {}
            _ => return Err(Error::param("k_s", "topology too large")),
        }
        Ok(p)
    }

    pub fn num_servers(&self) -> usize {
        (self.k_1g as usize).pow(self.k_s)
    }

    /// Switches per layer, `k_1g^(k_s - 1)`.
    pub fn switches_per_layer(&self) -> usize {
        (self.k_1g as usize).pow(self.k_s - 1)
    }

    pub fn num_switches(&self) -> usize {
        self.k_s as usize * self.switches_per_layer()
    }
}

impl fmt::Display for TopologyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(k_s={}, k_1g={}", self.variant, self.k_s, self.k_1g)?;
        match self.variant {
            Variant::Classic => write!(f, ")"),
            Variant::Horizontal | Variant::Vertical => write!(f, ", k_10g={})", self.k_10g),
            Variant::Hybrid => write!(
                f,
                ", k_10g={}, h={}, v={})",
                self.k_10g, self.k_10g_h, self.k_10g_v
            ),
        }
    }
}

/// Counts of links by class. 10G links are horizontal when both ends sit
/// on the same layer, vertical otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LinkCensus {
    pub one_g: usize,
    pub ten_g_horizontal: usize,
    pub ten_g_vertical: usize,
}

/// Immutable BCube multigraph.
///
/// Nodes are stored densely: servers `0..N` first, then switches
/// layer-major. Links keep their construction order, which is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    params: TopologyParams,
    links: Vec<Link>,
    endpoints: Vec<[usize; 2]>,
    incidence: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds any variant, dispatching on `params.variant`.
    pub fn build(params: &TopologyParams) -> Result<Self> {
        match params.variant {
            Variant::Classic => build_classic(params),
            Variant::Horizontal => build_horizontal(params),
            Variant::Vertical => build_vertical(params),
            Variant::Hybrid => build_hybrid(params),
        }
    }

    /// Assembles a topology from an explicit link list, checking link
    /// invariants. Port budgets are not enforced, so this accepts
    /// hand-made or externally edited wirings.
    pub fn from_parts(params: TopologyParams, links: Vec<Link>) -> Result<Self> {
        let params = params.normalized()?;
        let mut topo = Topology {
            params,
            links: Vec::with_capacity(links.len()),
            endpoints: Vec::with_capacity(links.len()),
            incidence: vec![Vec::new(); params.num_servers() + params.num_switches()],
        };
        let mut seen = std::collections::HashSet::new();
        for (i, link) in links.into_iter().enumerate() {
            let bad = |reason: &str| Error::InvalidLink {
                index: i,
                reason: reason.to_string(),
            };
            let ua = topo.node_index(&link.a).ok_or_else(|| bad("unknown endpoint a"))?;
            let ub = topo.node_index(&link.b).ok_or_else(|| bad("unknown endpoint b"))?;
            if ua == ub {
                return Err(bad("self-loop"));
            }
            let ok = match link.class {
                CapacityClass::OneG => link.a.is_server() != link.b.is_server(),
                CapacityClass::TenG => link.a.is_switch() && link.b.is_switch(),
            };
            if !ok {
                return Err(bad("endpoint kinds do not match the capacity class"));
            }
            if !seen.insert((ua.min(ub), ua.max(ub), link.parallel_index)) {
                return Err(bad("duplicate (endpoints, parallel_index)"));
            }
            topo.push(link, ua, ub);
        }
        Ok(topo)
    }

    fn empty(params: TopologyParams) -> Self {
        let n = params.num_servers() + params.num_switches();
        Topology {
            params,
            links: Vec::new(),
            endpoints: Vec::new(),
            incidence: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, link: Link, ua: usize, ub: usize) {
        let id = self.links.len();
        self.links.push(link);
        self.endpoints.push([ua, ub]);
        self.incidence[ua].push(id);
        self.incidence[ub].push(id);
    }

    pub fn params(&self) -> &TopologyParams {
        &self.params
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_nodes(&self) -> usize {
        self.incidence.len()
    }

    pub fn num_servers(&self) -> usize {
        self.params.num_servers()
    }

    pub fn num_switches(&self) -> usize {
        self.params.num_switches()
    }

    /// Dense index of a node, or `None` when the id is out of range.
    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        let p = &self.params;
        match id.kind {
            NodeKind::Server => {
                (id.layer == 0 && (id.index as usize) < p.num_servers()).then_some(id.index as usize)
            }
            NodeKind::Switch => {
                let m = p.switches_per_layer();
                (id.layer < p.k_s && (id.index as usize) < m)
                    .then(|| p.num_servers() + id.layer as usize * m + id.index as usize)
            }
        }
    }

    /// Inverse of [`Topology::node_index`]. Panics on an out-of-range index.
    pub fn node_id(&self, idx: usize) -> NodeId {
        let n = self.params.num_servers();
        assert!(idx < self.num_nodes(), "node index {idx} out of range");
        if idx < n {
            NodeId::server(idx as u32)
        } else {
            let m = self.params.switches_per_layer();
            let s = idx - n;
            NodeId::switch((s / m) as u32, (s % m) as u32)
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes()).map(|i| self.node_id(i))
    }

    /// Dense endpoint indices of link `link`.
    pub fn endpoints(&self, link: usize) -> [usize; 2] {
        self.endpoints[link]
    }

    /// Link ids incident to the node with dense index `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incidence[node]
    }

    pub fn link_census(&self) -> LinkCensus {
        let mut c = LinkCensus::default();
        for l in &self.links {
            match l.class {
                CapacityClass::OneG => c.one_g += 1,
                CapacityClass::TenG if l.is_horizontal() => c.ten_g_horizontal += 1,
                CapacityClass::TenG => c.ten_g_vertical += 1,
            }
        }
        c
    }

    /// Incident link count of `node` restricted to `class`.
    pub fn degree(&self, node: usize, class: CapacityClass) -> usize {
        self.incidence[node]
            .iter()
            .filter(|&&l| self.links[l].class == class)
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TopologyDoc {
            params: self.params,
            nodes: self.node_ids().collect(),
            links: self.links.iter().map(LinkDoc::from).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads the JSON document written by [`Topology::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyDoc = serde_json::from_str(text)?;
        let topo = Topology::from_parts(doc.params, doc.links.into_iter().map(Link::from).collect())?;
        if doc.nodes.len() != topo.num_nodes()
            || doc.nodes.iter().any(|n| topo.node_index(n).is_none())
        {
            return Err(Error::Parse("node list does not match the parameters".into()));
        }
        Ok(topo)
    }

    /// One link per line: `kindA layerA idxA kindB layerB idxB class`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.links.len() * 24);
        for l in &self.links {
            out.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                l.a.kind.short(),
                l.a.layer,
                l.a.index,
                l.b.kind.short(),
                l.b.layer,
                l.b.index,
                l.class.label()
            ));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    params: TopologyParams,
    nodes: Vec<NodeId>,
    links: Vec<LinkDoc>,
}

#[derive(Serialize, Deserialize)]
struct LinkDoc {
    a: NodeId,
    b: NodeId,
    class: CapacityClass,
    capacity_gbps: f64,
    parallel_index: u32,
}

impl From<&Link> for LinkDoc {
    fn from(l: &Link) -> Self {
        LinkDoc {
            a: l.a,
            b: l.b,
            class: l.class,
            capacity_gbps: l.nominal_gbps(),
            parallel_index: l.parallel_index,
        }
    }
}

impl From<LinkDoc> for Link {
    fn from(d: LinkDoc) -> Self {
        Link {
            a: d.a,
            b: d.b,
            class: d.class,
            parallel_index: d.parallel_index,
        }
    }
}

/// Incremental builder that hands out parallel indices.
struct Wiring {
    topo: Topology,
    multiplicity: HashMap<(usize, usize), u32>,
}

impl Wiring {
    fn classic(params: TopologyParams) -> Self {
        let mut w = Wiring {
            topo: Topology::empty(params),
            multiplicity: HashMap::new(),
        };
        let k = params.k_1g as usize;
        let m = params.switches_per_layer();
        for layer in 0..params.k_s {
            let stride = k.pow(layer);
            for sw in 0..m {
                // reinsert the free digit at position `layer`
                let low = sw % stride;
                let high = sw / stride;
                for digit in 0..k {
                    let server = high * stride * k + digit * stride + low;
                    w.connect(
                        NodeId::server(server as u32),
                        NodeId::switch(layer, sw as u32),
                        CapacityClass::OneG,
                    );
                }
            }
        }
        w
    }

    fn connect(&mut self, a: NodeId, b: NodeId, class: CapacityClass) {
        let (a, b) = if class == CapacityClass::TenG && b < a {
            (b, a)
        } else {
            (a, b)
        };
        let ua = self.topo.node_index(&a).expect("builder node in range");
        let ub = self.topo.node_index(&b).expect("builder node in range");
        let slot = self.multiplicity.entry((ua.min(ub), ua.max(ub))).or_insert(0);
        let link = Link {
            a,
            b,
            class,
            parallel_index: *slot,
        };
        *slot += 1;
        self.topo.push(link, ua, ub);
    }

    /// Circulant wiring inside every layer using `ports` 10G ports per switch.
    fn horizontal(&mut self, ports: u32) -> Result<()> {
        if ports == 0 {
            return Ok(());
        }
        let p = self.topo.params;
        let m = p.switches_per_layer();
        if m < 2 {
            return Err(Error::NoPeer { per_layer: m });
        }
        if (m * ports as usize) % 2 == 1 {
            return Err(Error::WiringInfeasible(format!(
                "{m} switches per layer with {ports} horizontal ports each leaves a port unpaired"
            )));
        }
        for layer in 0..p.k_s {
            let mut remaining = ports;
            while remaining > 0 {
                // offsets with i+d != i-d cost two ports per switch
                for d in 1..=(m - 1) / 2 {
                    if remaining < 2 {
                        break;
                    }
                    for i in 0..m {
                        self.connect(
                            NodeId::switch(layer, i as u32),
                            NodeId::switch(layer, ((i + d) % m) as u32),
                            CapacityClass::TenG,
                        );
                    }
                    remaining -= 2;
                }
                // the antipodal offset costs one port per switch
                if m % 2 == 0 && remaining >= 1 {
                    for i in 0..m / 2 {
                        self.connect(
                            NodeId::switch(layer, i as u32),
                            NodeId::switch(layer, (i + m / 2) as u32),
                            CapacityClass::TenG,
                        );
                    }
                    remaining -= 1;
                }
            }
        }
        Ok(())
    }

    /// Column wiring across layers using `ports` 10G ports per switch.
    fn vertical(&mut self, ports: u32) -> Result<()> {
        if ports == 0 {
            return Ok(());
        }
        let p = self.topo.params;
        if p.k_s < 2 {
            return Err(Error::NoOverheadLayer);
        }
        let m = p.switches_per_layer() as u32;
        if p.k_s == 2 {
            for c in 0..m {
                for _ in 0..ports {
                    self.connect(NodeId::switch(0, c), NodeId::switch(1, c), CapacityClass::TenG);
                }
            }
            return Ok(());
        }
        if ports % 2 == 1 {
            return Err(Error::WiringInfeasible(format!(
                "{ports} vertical ports cannot be split evenly between the two ring neighbours of a {}-layer column",
                p.k_s
            )));
        }
        for c in 0..m {
            for layer in 0..p.k_s {
                let next = (layer + 1) % p.k_s;
                for _ in 0..ports / 2 {
                    self.connect(
                        NodeId::switch(layer, c),
                        NodeId::switch(next, c),
                        CapacityClass::TenG,
                    );
                }
            }
        }
        Ok(())
    }
}

fn expect_variant(params: &TopologyParams, variant: Variant) -> Result<TopologyParams> {
    if params.variant != variant {
        return Err(Error::param(
            "variant",
            format!("expected {variant}, got {}", params.variant),
        ));
    }
    params.normalized()
}

pub fn build_classic(params: &TopologyParams) -> Result<Topology> {
    let p = expect_variant(params, Variant::Classic)?;
    Ok(Wiring::classic(p).topo)
}

pub fn build_horizontal(params: &TopologyParams) -> Result<Topology> {
    let p = expect_variant(params, Variant::Horizontal)?;
    let mut w = Wiring::classic(p);
    w.horizontal(p.k_10g_h)?;
    Ok(w.topo)
}

pub fn build_vertical(params: &TopologyParams) -> Result<Topology> {
    let p = expect_variant(params, Variant::Vertical)?;
    let mut w = Wiring::classic(p);
    w.vertical(p.k_10g_v)?;
    Ok(w.topo)
}

pub fn build_hybrid(params: &TopologyParams) -> Result<Topology> {
    let p = expect_variant(params, Variant::Hybrid)?;
    let mut w = Wiring::classic(p);
    w.horizontal(p.k_10g_h)?;
    w.vertical(p.k_10g_v)?;
    Ok(w.topo)
}
