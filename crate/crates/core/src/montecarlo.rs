//! Snapshot-based Monte-Carlo experiments over topologies, congestion
//! levels and a time grid, with per-cell aggregation.
//!
//! Every (topology, gamma, time, trial) cell draws its snapshot from a seed
//! derived from `(master_seed, time, trial)` only. Cells that differ only in
//! topology or gamma therefore share their random draws (common random
//! numbers): component fates line up on the shared classic part, and the
//! congestion quantiles line up across gamma values.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{avg_component_ibw, min_max_ibw_within, PairBudget, RoutingMode};
use crate::error::{Error, Result};
use crate::failure::{ars_max, draw_snapshot, largest_component, rs_max, CongestionModel, FailureModel};
use crate::structure::PairClass;
use crate::topology::{Topology, TopologyParams, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ArsMax,
    RsMax,
    AvgIbw,
    ComponentCount,
    MinMaxIbw,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ArsMax => "ars_max",
            Metric::RsMax => "rs_max",
            Metric::AvgIbw => "avg_ibw",
            Metric::ComponentCount => "component_count",
            Metric::MinMaxIbw => "min_max_ibw",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ars_max" => Ok(Metric::ArsMax),
            "rs_max" => Ok(Metric::RsMax),
            "avg_ibw" => Ok(Metric::AvgIbw),
            "component_count" => Ok(Metric::ComponentCount),
            "min_max_ibw" => Ok(Metric::MinMaxIbw),
            other => Err(Error::param("metric", format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub topologies: Vec<TopologyParams>,
    pub gammas: Vec<f64>,
    pub time_grid: Vec<f64>,
    pub trials_per_cell: u32,
    pub master_seed: u64,
    pub metrics: Vec<Metric>,
    pub pair_sample_budget: PairBudget,
    pub failure: FailureModel,
    pub sigma: f64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.topologies.is_empty() {
            return Err(Error::config("plan.topologies", "at least one topology required"));
        }
        if self.gammas.is_empty() {
            return Err(Error::config("plan.gammas", "at least one gamma required"));
        }
        for g in &self.gammas {
            if !(0.0..=1.0).contains(g) {
                return Err(Error::config("plan.gammas", format!("gamma {g} outside [0, 1]")));
            }
        }
        if self.time_grid.first() != Some(&0.0) {
            return Err(Error::config("plan.time_grid", "must start at 0"));
        }
        if self.time_grid.windows(2).any(|w| !(w[1] > w[0])) || self.time_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("plan.time_grid", "must be finite and strictly increasing"));
        }
        if self.trials_per_cell < 1 {
            return Err(Error::config("plan.trials_per_cell", "must be at least 1"));
        }
        if self.metrics.is_empty() {
            return Err(Error::config("plan.metrics", "at least one metric required"));
        }
        self.failure
            .validate()
            .map_err(|e| Error::config("failure", e.to_string()))?;
        CongestionModel::new(0.5, self.sigma).map_err(|e| Error::config("congestion.sigma", e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub params: TopologyParams,
    pub gamma: f64,
    pub time_h: f64,
    pub trial: u32,
    pub metric: Metric,
    /// `None` when the metric is undefined for the snapshot.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub params: TopologyParams,
    pub gamma: f64,
    pub time_h: f64,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedTopology {
    pub params: TopologyParams,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub skipped: Vec<SkippedTopology>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// RNG seed of the snapshot drawn at `time_h` in trial `trial`.
pub fn cell_seed(master_seed: u64, time_h: f64, trial: u32) -> u64 {
    splitmix(splitmix(splitmix(master_seed) ^ time_h.to_bits()) ^ trial as u64)
}

struct Cell<'t> {
    params: TopologyParams,
    topo: &'t Topology,
    gamma: f64,
    time_h: f64,
    trial: u32,
}

fn evaluate(cell: &Cell<'_>, plan: &ExperimentPlan) -> Result<Vec<Row>> {
    let seed = cell_seed(plan.master_seed, cell.time_h, cell.trial);
    let congestion = CongestionModel::new(cell.gamma, plan.sigma)?;
    let snap = draw_snapshot(cell.topo, &plan.failure, &congestion, cell.time_h, seed)?;
    let comps = snap.components();
    let largest = largest_component(&comps);
    let view = snap.view();
    let mut rows = Vec::with_capacity(plan.metrics.len());
    for &metric in &plan.metrics {
        let value = match metric {
            Metric::ArsMax => ars_max(&comps, cell.topo.num_servers()).ok(),
            Metric::RsMax => rs_max(&comps).ok(),
            Metric::ComponentCount => Some(comps.len() as f64),
            Metric::AvgIbw => largest.and_then(|c| {
                avg_component_ibw(&view, &c.nodes, plan.pair_sample_budget, splitmix(seed ^ 0xa5a5))
                    .ok()
                    .map(|a| a.mean_gbps)
            }),
            Metric::MinMaxIbw => largest.and_then(|c| {
                min_max_ibw_within(&view, &c.nodes, PairClass::SrvSrv, RoutingMode::MultiPath)
                    .ok()
                    .map(|r| r.value_gbps)
            }),
        };
        rows.push(Row {
            params: cell.params,
            gamma: cell.gamma,
            time_h: cell.time_h,
            trial: cell.trial,
            metric,
            value,
        });
    }
    Ok(rows)
}

/// Runs every cell of `plan` on up to `workers` threads (all cores when
/// `None`). Output is identical for any worker count.
pub fn run_experiment(plan: &ExperimentPlan, workers: Option<usize>) -> Result<ExperimentResult> {
    plan.validate()?;
    let mut skipped = Vec::new();
    let mut built: Vec<(TopologyParams, Topology)> = Vec::new();
    let mut cache: HashMap<TopologyParams, usize> = HashMap::new();
    let mut order = Vec::new();
    for p in &plan.topologies {
        if let Some(&i) = cache.get(p) {
            order.push(i);
            continue;
        }
        match Topology::build(p) {
            Ok(t) => {
                cache.insert(*p, built.len());
                order.push(built.len());
                built.push((*p, t));
            }
            Err(e) => skipped.push(SkippedTopology {
                params: *p,
                reason: e.to_string(),
            }),
        }
    }
    let mut cells = Vec::new();
    for &i in &order {
        let (params, topo) = (&built[i].0, &built[i].1);
        for &gamma in &plan.gammas {
            for &time_h in &plan.time_grid {
                for trial in 0..plan.trials_per_cell {
                    cells.push(Cell {
                        params: *params,
                        topo,
                        gamma,
                        time_h,
                        trial,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;
    let per_cell: Vec<Result<Vec<Row>>> =
        pool.install(|| cells.par_iter().map(|c| evaluate(c, plan)).collect());
    let mut rows = Vec::with_capacity(cells.len() * plan.metrics.len());
    for r in per_cell {
        rows.extend(r?);
    }
    let aggregates = aggregate(&rows);
    Ok(ExperimentResult {
        rows,
        aggregates,
        skipped,
    })
}

/// Groups rows by (params, gamma, time, metric) in first-appearance order
/// and summarizes the defined values of each group.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    type Key = (TopologyParams, u64, u64, Metric);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<(Key, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.params, r.gamma.to_bits(), r.time_h.to_bits(), r.metric);
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        if let Some(v) = r.value {
            groups[slot].1.push(v);
        }
    }
    groups
        .into_iter()
        .map(|((params, g, t, metric), values)| {
            let n = values.len();
            let (mean, stddev, ci95) = if n == 0 {
                (None, None, None)
            } else {
                let mean = values.iter().sum::<f64>() / n as f64;
                let sd = if n > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (Some(mean), Some(sd), Some(1.96 * sd / (n as f64).sqrt()))
            };
            Aggregate {
                params,
                gamma: f64::from_bits(g),
                time_h: f64::from_bits(t),
                metric,
                mean,
                stddev,
                ci95,
                n,
            }
        })
        .collect()
}

/// First time at which the mean falls to half its value at `t = 0`, linearly
/// interpolated between grid points; `+inf` when it never does. Points with
/// an undefined mean are skipped.
pub fn half_life(series: &[(f64, Option<f64>)]) -> Result<f64> {
    let initial = match series.first() {
        Some(&(0.0, Some(m))) => m,
        _ => return Err(Error::UndefinedMetric("series has no defined value at t = 0".into())),
    };
    if !(initial > 0.0) {
        return Err(Error::UndefinedMetric(format!("initial value {initial} is not positive")));
    }
    let half = 0.5 * initial;
    let mut prev = (0.0, initial);
    for &(t, m) in &series[1..] {
        let Some(m) = m else { continue };
        if m <= half {
            let (t0, m0) = prev;
            return Ok(t0 + (m0 - half) / (m0 - m) * (t - t0));
        }
        prev = (t, m);
    }
    Ok(f64::INFINITY)
}

/// Time-ordered mean series of one (params, gamma, metric) combination.
pub fn series(aggregates: &[Aggregate], params: &TopologyParams, gamma: f64, metric: Metric) -> Vec<(f64, Option<f64>)> {
    let mut s: Vec<(f64, Option<f64>)> = aggregates
        .iter()
        .filter(|a| a.params == *params && a.gamma == gamma && a.metric == metric)
        .map(|a| (a.time_h, a.mean))
        .collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    s
}

pub fn half_life_time(aggregates: &[Aggregate], params: &TopologyParams, gamma: f64, metric: Metric) -> Result<f64> {
    half_life(&series(aggregates, params, gamma, metric))
}

/// Half-life of every series of `variant` for `metric`, one entry per
/// (params, gamma) combination in first-appearance order.
pub fn half_lives_for_variant(
    aggregates: &[Aggregate],
    variant: Variant,
    metric: Metric,
) -> Vec<(TopologyParams, f64, Result<f64>)> {
    let mut keys: Vec<(TopologyParams, f64)> = Vec::new();
    for a in aggregates {
        if a.params.variant == variant && a.metric == metric && !keys.contains(&(a.params, a.gamma)) {
            keys.push((a.params, a.gamma));
        }
    }
    keys.into_iter()
        .map(|(p, g)| (p, g, half_life_time(aggregates, &p, g, metric)))
        .collect()
}

const PARAM_COLUMNS: [&str; 6] = ["variant", "kS", "k1G", "k10G", "k10GH", "k10GV"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn param_fields(p: &TopologyParams) -> [String; 6] {
    [
        p.variant.name().to_string(),
        p.k_s.to_string(),
        p.k_1g.to_string(),
        p.k_10g.to_string(),
        p.k_10g_h.to_string(),
        p.k_10g_v.to_string(),
    ]
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// `variant,kS,k1G,k10G,k10GH,k10GV,gamma,time_h,trial,metric,value`;
/// undefined values are written as empty fields.
pub fn write_rows_csv<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header: Vec<&str> = PARAM_COLUMNS.to_vec();
    header.extend(["gamma", "time_h", "trial", "metric", "value"]);
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = param_fields(&r.params).to_vec();
        rec.extend([
            r.gamma.to_string(),
            r.time_h.to_string(),
            r.trial.to_string(),
            r.metric.name().to_string(),
            fmt_opt(r.value),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `variant,kS,k1G,k10G,k10GH,k10GV,gamma,time_h,metric,mean,stddev,ci95,n`.
pub fn write_agg_csv<W: Write>(aggs: &[Aggregate], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header: Vec<&str> = PARAM_COLUMNS.to_vec();
    header.extend(["gamma", "time_h", "metric", "mean", "stddev", "ci95", "n"]);
    out.write_record(&header)?;
    for a in aggs {
        let mut rec: Vec<String> = param_fields(&a.params).to_vec();
        rec.extend([
            a.gamma.to_string(),
            a.time_h.to_string(),
            a.metric.name().to_string(),
            fmt_opt(a.mean),
            fmt_opt(a.stddev),
            fmt_opt(a.ci95),
            a.n.to_string(),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad `{name}` field in line {:?}", rec.position().map(|p| p.line()))))
}

fn parse_opt(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => parse_field(rec, i, name).map(Some),
    }
}

/// Reads an `agg.csv` written by [`write_agg_csv`].
pub fn read_agg_csv<R: Read>(r: R) -> Result<Vec<Aggregate>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected = [
        "variant", "kS", "k1G", "k10G", "k10GH", "k10GV", "gamma", "time_h", "metric", "mean", "stddev", "ci95", "n",
    ];
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("unexpected agg.csv header: {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let variant: Variant = rec.get(0).unwrap_or_default().parse()?;
        let params = TopologyParams {
            variant,
            k_s: parse_field(&rec, 1, "kS")?,
            k_1g: parse_field(&rec, 2, "k1G")?,
            k_10g: parse_field(&rec, 3, "k10G")?,
            k_10g_h: parse_field(&rec, 4, "k10GH")?,
            k_10g_v: parse_field(&rec, 5, "k10GV")?,
        };
        out.push(Aggregate {
            params,
            gamma: parse_field(&rec, 6, "gamma")?,
            time_h: parse_field(&rec, 7, "time_h")?,
            metric: rec.get(8).unwrap_or_default().parse()?,
            mean: parse_opt(&rec, 9, "mean")?,
            stddev: parse_opt(&rec, 10, "stddev")?,
            ci95: parse_opt(&rec, 11, "ci95")?,
            n: parse_field(&rec, 12, "n")?,
        });
    }
    Ok(out)
}
