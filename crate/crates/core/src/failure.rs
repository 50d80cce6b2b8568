//! Degraded snapshots of a topology under component failures (no repair)
//! and per-link congestion, plus the connectivity metrics computed on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandwidth::{CapacityView, UnionFind};
use crate::error::{Error, Result};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifetimeLaw {
    #[default]
    Exponential,
}

/// Lifetime parameters per component class, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FailureModel {
    pub mttf_server_h: f64,
    pub mttf_switch_h: f64,
    pub mttf_link_h: f64,
    pub distribution: LifetimeLaw,
}

impl Default for FailureModel {
    fn default() -> Self {
        FailureModel {
            mttf_server_h: 5000.0,
            mttf_switch_h: 20000.0,
            mttf_link_h: 50000.0,
            distribution: LifetimeLaw::Exponential,
        }
    }
}

impl FailureModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mttf_server_h", self.mttf_server_h),
            ("mttf_switch_h", self.mttf_switch_h),
            ("mttf_link_h", self.mttf_link_h),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Probability that a component with the given MTTF is still up at `time_h`.
    pub fn survival(&self, mttf_h: f64, time_h: f64) -> f64 {
        match self.distribution {
            LifetimeLaw::Exponential => (-time_h / mttf_h).exp(),
        }
    }
}

/// Normal(mean, sd²) conditioned on `[lo, hi]`, sampled by inverse CDF.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    cdf_hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::param("sigma", format!("must be finite and positive, got {sd}")));
        }
        if !(lo < hi) {
            return Err(Error::param("truncation", "empty interval"));
        }
        let std = Normal::standard();
        let cdf_lo = std.cdf((lo - mean) / sd);
        let cdf_hi = std.cdf((hi - mean) / sd);
        if !(cdf_hi > cdf_lo) {
            return Err(Error::param("truncation", "interval carries no probability mass"));
        }
        Ok(TruncatedNormal {
            mean,
            sd,
            lo,
            hi,
            cdf_lo,
            cdf_hi,
        })
    }

    /// Quantile at `u` in `(0, 1)`; nondecreasing in both `u` and the mean.
    pub fn quantile(&self, u: f64) -> f64 {
        let p = self.cdf_lo + u * (self.cdf_hi - self.cdf_lo);
        let z = Normal::standard().inverse_cdf(p);
        // rounding guard only; the mass outside [lo, hi] is already removed
        (self.mean + self.sd * z).clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open_unit(rng))
    }
}

/// Uniform on the open interval (0, 1), keeping quantiles finite.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Network-wide congestion degree `gamma` in `[0, 1]`; each link draws its
/// own degree from a Normal(gamma, sigma²) truncated to `[0, 1]`.
/// `gamma = 0` is an idle network: every degree is exactly 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionModel {
    pub gamma: f64,
    pub sigma: f64,
}

impl CongestionModel {
    pub const DEFAULT_SIGMA: f64 = 0.1;

    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        let m = CongestionModel { gamma, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("{} outside [0, 1]", self.gamma)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be finite and positive, got {}", self.sigma)));
        }
        Ok(())
    }

    fn degree_law(&self) -> Result<Option<TruncatedNormal>> {
        if self.gamma == 0.0 {
            return Ok(None);
        }
        TruncatedNormal::new(self.gamma, self.sigma, 0.0, 1.0).map(Some)
    }
}

/// One stochastic realization of the network at `time_h`.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    base: &'a Topology,
    time_h: f64,
    seed: u64,
    alive: Vec<bool>,
    link_up: Vec<bool>,
    congestion: Vec<f64>,
    capacity: Vec<f64>,
}

/// Draws a snapshot. Every node consumes one uniform (survival) and every
/// link two (survival, congestion), in canonical order, so topologies that
/// share a prefix of nodes and links see the same draws on that prefix.
pub fn draw_snapshot<'a>(
    topo: &'a Topology,
    failure: &FailureModel,
    congestion: &CongestionModel,
    time_h: f64,
    seed: u64,
) -> Result<Snapshot<'a>> {
    failure.validate()?;
    congestion.validate()?;
    if !(time_h.is_finite() && time_h >= 0.0) {
        return Err(Error::param("time_h", format!("must be finite and >= 0, got {time_h}")));
    }
    let law = congestion.degree_law()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_server = failure.survival(failure.mttf_server_h, time_h);
    let p_switch = failure.survival(failure.mttf_switch_h, time_h);
    let p_link = failure.survival(failure.mttf_link_h, time_h);

    let alive: Vec<bool> = (0..topo.num_nodes())
        .map(|n| {
            let p = if n < topo.num_servers() { p_server } else { p_switch };
            rng.random::<f64>() < p
        })
        .collect();

    let mut link_up = Vec::with_capacity(topo.links().len());
    let mut degrees = Vec::with_capacity(topo.links().len());
    let mut capacity = Vec::with_capacity(topo.links().len());
    for (l, link) in topo.links().iter().enumerate() {
        let up = rng.random::<f64>() < p_link;
        let u = open_unit(&mut rng);
        let degree = law.map_or(0.0, |d| d.quantile(u));
        let [a, b] = topo.endpoints(l);
        let carries = up && alive[a] && alive[b];
        link_up.push(up);
        degrees.push(degree);
        capacity.push(if carries {
            link.nominal_gbps() * (1.0 - degree)
        } else {
            0.0
        });
    }
    Ok(Snapshot {
        base: topo,
        time_h,
        seed,
        alive,
        link_up,
        congestion: degrees,
        capacity,
    })
}

impl<'a> Snapshot<'a> {
    pub fn topology(&self) -> &'a Topology {
        self.base
    }

    pub fn time_h(&self) -> f64 {
        self.time_h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_alive(&self, node: usize) -> bool {
        self.alive[node]
    }

    pub fn alive(&self) -> &[bool] {
        &self.alive
    }

    /// Whether the link itself survived, regardless of its endpoints.
    pub fn link_up(&self, link: usize) -> bool {
        self.link_up[link]
    }

    pub fn congestion_degree(&self, link: usize) -> f64 {
        self.congestion[link]
    }

    pub fn effective_capacity(&self, link: usize) -> f64 {
        self.capacity[link]
    }

    pub fn view(&self) -> CapacityView<'_> {
        CapacityView::from_parts_unchecked(self.base, &self.capacity, &self.alive)
    }

    pub fn alive_servers(&self) -> usize {
        self.alive[..self.base.num_servers()].iter().filter(|&&a| a).count()
    }

    pub fn components(&self) -> Vec<Component> {
        connected_components(&self.view())
    }

    pub fn rs_max(&self) -> Result<f64> {
        rs_max(&self.components())
    }

    pub fn ars_max(&self, initial_servers: usize) -> Result<f64> {
        ars_max(&self.components(), initial_servers)
    }

    /// Debug dump of the snapshot state.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'s> {
            time_h: f64,
            seed: u64,
            alive: &'s [bool],
            link_up: &'s [bool],
            congestion: &'s [f64],
            capacity_gbps: &'s [f64],
        }
        Ok(serde_json::to_string(&Dump {
            time_h: self.time_h,
            seed: self.seed,
            alive: &self.alive,
            link_up: &self.link_up,
            congestion: &self.congestion,
            capacity_gbps: &self.capacity,
        })?)
    }
}

/// Connected set of live nodes (dense indices, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub nodes: Vec<usize>,
    pub servers: usize,
}

/// Components over live nodes joined by usable links, ordered by their
/// smallest node.
pub fn connected_components(view: &CapacityView<'_>) -> Vec<Component> {
    let topo = view.topology();
    let n = topo.num_nodes();
    let mut uf = UnionFind::new(n);
    for l in 0..topo.links().len() {
        if view.usable(l) {
            let [a, b] = topo.endpoints(l);
            uf.union(a, b);
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut comps: Vec<Component> = Vec::new();
    for node in 0..n {
        if !view.is_alive(node) {
            continue;
        }
        let root = uf.find(node);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Component {
                nodes: Vec::new(),
                servers: 0,
            });
        }
        let c = &mut comps[slot[root]];
        c.nodes.push(node);
        if node < topo.num_servers() {
            c.servers += 1;
        }
    }
    comps
}

/// Component with the most servers; ties go to the earliest one.
/// `None` when no live server exists.
pub fn largest_component(components: &[Component]) -> Option<&Component> {
    components
        .iter()
        .filter(|c| c.servers > 0)
        .fold(None, |best: Option<&Component>, c| match best {
            Some(b) if b.servers >= c.servers => Some(b),
            _ => Some(c),
        })
}

/// Largest component's share of the currently live servers.
pub fn rs_max(components: &[Component]) -> Result<f64> {
    let total: usize = components.iter().map(|c| c.servers).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("RS_max with no live server".into()));
    }
    let max = components.iter().map(|c| c.servers).max().unwrap_or(0);
    Ok(max as f64 / total as f64)
}

/// Largest component's share of the initial server count.
pub fn ars_max(components: &[Component], initial_servers: usize) -> Result<f64> {
    if initial_servers == 0 {
        return Err(Error::param("initial_servers", "must be positive"));
    }
    let max = components.iter().map(|c| c.servers).max().unwrap_or(0);
    Ok(max as f64 / initial_servers as f64)
}
