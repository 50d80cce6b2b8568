//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! `cargo test -p bcube-acceptance --test acceptance`

use std::collections::HashMap;
use std::time::{Duration, Instant};

use bcube::bandwidth::{min_max_ibw, widest_path, CapacityView, FlowNetwork, RoutingMode};
use bcube::config::ExperimentConfig;
use bcube::failure::{draw_snapshot, CongestionModel, FailureModel, TruncatedNormal};
use bcube::montecarlo::{half_life_time, run_experiment, write_rows_csv, ExperimentResult, Metric};
use bcube::structure::{longest_shortest_path, PairClass};
use bcube::topology::{NodeId, Topology, TopologyParams, Variant};
use bcube::verify::{verify, Status, VerifyGrid};
use bcube_acceptance::{mean_se, Report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z95: f64 = 1.96;

fn main() {
    let mut report = Report::new();
    table1(&mut report);
    table2(&mut report);
    table3(&mut report);
    table4(&mut report);
    max_flow_oracle(&mut report);
    calibration(&mut report);
    let sim = trends(&mut report);
    determinism(&mut report, &sim);
    println!("-- supplementary properties");
    half_life_in_k_s(&mut report, &sim);
    println!("{}", report.summary());
    if !report.failed().is_empty() {
        std::process::exit(1);
    }
}

/// Parameter points of every variant, hybrid split evenly; infeasible
/// points are returned separately.
fn grid(variants: &[Variant], k_s: &[u32], k_1g: &[u32], k_10g: &[u32]) -> (Vec<Topology>, Vec<String>) {
    let mut built = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = Vec::new();
    for &v in variants {
        for &s in k_s {
            for &k in k_1g {
                for &t in k_10g {
                    let p = TopologyParams::classic(s, k).with_variant(v, t);
                    if seen.contains(&p) {
                        continue;
                    }
                    seen.push(p);
                    match Topology::build(&p) {
                        Ok(topo) => built.push(topo),
                        Err(e) => skipped.push(format!("{p}: {e}")),
                    }
                }
            }
        }
    }
    (built, skipped)
}

fn table1(report: &mut Report) {
    let start = Instant::now();
    let mut bad = Vec::new();
    let variants = [Variant::Horizontal, Variant::Vertical, Variant::Hybrid];
    let (topos, skipped) = grid(&variants, &[2], &[2, 4, 8], &[2, 4]);
    bad.extend(skipped);
    for topo in &topos {
        let p = topo.params();
        let (k_s, k_1g) = (p.k_s as usize, p.k_1g as usize);
        let m = k_1g.pow(p.k_s - 1);
        let expected = match p.variant {
            Variant::Horizontal => (k_s * (k_1g * p.k_10g as usize / 2), 0),
            // port conservation: every switch spends k_10g ports on vertical links
            Variant::Vertical => (0, m * k_s * p.k_10g as usize / 2),
            Variant::Hybrid => (k_s * (k_1g * p.k_10g_h as usize / 2), k_1g * (k_s * p.k_10g_v as usize / 2)),
            Variant::Classic => (0, 0),
        };
        let c = topo.link_census();
        if (c.ten_g_horizontal, c.ten_g_vertical) != expected {
            bad.push(format!("{p}: census ({}, {}) expected {expected:?}", c.ten_g_horizontal, c.ten_g_vertical));
        }
    }
    let vgrid = VerifyGrid {
        variants: vec![Variant::Vertical],
        k_s: vec![2],
        k_1g: vec![2, 4, 8],
        k_10g: vec![2, 4],
    };
    let vreport = verify(&vgrid);
    let flagged = vreport
        .checks
        .iter()
        .filter(|c| c.table == 1 && c.item.starts_with("vertical") && c.status == Status::Deviation)
        .count();
    // the published and port-conserving forms differ exactly when k_1g != k_s
    let expected_flags = 4;
    if flagged != expected_flags || !vreport.to_text().contains("does not conserve ports") {
        bad.push(format!("verifier flagged {flagged} vertical Table 1 entries, expected {expected_flags}"));
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(1);
    let detail = format!("{} grid points, {flagged} vertical-entry discrepancies flagged", topos.len());
    report.record("Table 1 link census", pass, elapsed, &detail, &bad);
}

fn table2(report: &mut Report) {
    let start = Instant::now();
    let (topos, skipped) = grid(&Variant::ALL, &[2, 3], &[2, 4], &[2, 4]);
    let mut bad = Vec::new();
    for topo in &topos {
        let p = topo.params();
        let view = CapacityView::nominal(topo);
        for class in PairClass::ALL {
            let want = match (class, p.variant) {
                (PairClass::SrvSrv, _) => 4,
                (PairClass::SrvSwc, _) => 3,
                (PairClass::SwcSwc, Variant::Vertical | Variant::Hybrid) if p.k_s < 4 => 3,
                (PairClass::SwcSwc, _) => 4,
            };
            let got = longest_shortest_path(&view, class).expect("intact topology");
            if got.hops != want {
                bad.push(format!("{p} {class}: {} hops, expected {want} ({} to {})", got.hops, got.witness.0, got.witness.1));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(10);
    let detail = format!(
        "{} points, {} mismatches, {} infeasible points skipped",
        topos.len(),
        bad.len(),
        skipped.len()
    );
    report.record("Table 2 longest shortest path", pass, elapsed, &detail, &bad);
}

fn table3(report: &mut Report) {
    let start = Instant::now();
    let (topos, _) = grid(&Variant::ALL, &[2, 3], &[2, 4], &[2, 4]);
    let mut bad = Vec::new();
    let mut favorable = 0usize;
    for topo in &topos {
        let p = topo.params();
        let view = CapacityView::nominal(topo);
        for class in [PairClass::SrvSrv, PairClass::SrvSwc] {
            let r = min_max_ibw(&view, class, RoutingMode::SinglePath).expect("intact topology");
            if r.value_gbps != 1.0 {
                bad.push(format!("{p} {class}: {} Gbps, expected 1", r.value_gbps));
            }
        }
        let same_layer = matches!(p.variant, Variant::Horizontal | Variant::Hybrid);
        let same_column = matches!(p.variant, Variant::Vertical | Variant::Hybrid);
        let switches: Vec<NodeId> = topo.node_ids().filter(|n| n.is_switch()).collect();
        let mut worst: HashMap<&str, (f64, NodeId, NodeId)> = HashMap::new();
        for (i, a) in switches.iter().enumerate() {
            for b in &switches[i + 1..] {
                let group = if same_layer && a.layer == b.layer {
                    "same-layer"
                } else if same_column && a.index == b.index {
                    "same-column"
                } else {
                    continue;
                };
                favorable += 1;
                let w = widest_path(&view, a, b).expect("switch pair");
                let e = worst.entry(group).or_insert((w, *a, *b));
                if w < e.0 {
                    *e = (w, *a, *b);
                }
            }
        }
        let mut groups: Vec<_> = worst.into_iter().collect();
        groups.sort_by_key(|g| g.0);
        for (group, (w, a, b)) in groups {
            if w != 10.0 {
                bad.push(format!("{p} {group} switches: {w} Gbps at ({a}, {b}), expected 10"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(10);
    let detail = format!("{} points, {favorable} favorable switch pairs", topos.len());
    report.record("Table 3 single-path IBW", pass, elapsed, &detail, &bad);
}

/// Published multi-path expression for switch pairs.
fn table4_switch_pairs(p: &TopologyParams) -> f64 {
    let (k_s, k_1g, k_10g) = (p.k_s as f64, p.k_1g as f64, p.k_10g as f64);
    match p.variant {
        Variant::Classic => k_1g,
        Variant::Horizontal => 10.0 * k_10g + k_1g,
        Variant::Vertical => 10.0 * k_10g + (k_s - 1.0) * (k_1g - 1.0),
        Variant::Hybrid => 10.0 * k_10g + k_1g + (k_s - 1.0) * (k_1g - 1.0),
    }
}

fn table4(report: &mut Report) {
    let start = Instant::now();
    let (topos, skipped) = grid(&Variant::ALL, &[2, 3], &[2, 4], &[2, 4]);
    let mut bad = Vec::new();
    for topo in &topos {
        let p = topo.params();
        let view = CapacityView::nominal(topo);
        for class in PairClass::ALL {
            let want = match class {
                PairClass::SrvSrv | PairClass::SrvSwc => p.k_s as f64,
                PairClass::SwcSwc => table4_switch_pairs(p),
            };
            let r = min_max_ibw(&view, class, RoutingMode::MultiPath).expect("intact topology");
            if (r.value_gbps - want).abs() > 1e-9 {
                let (a, b) = r.witness;
                bad.push(format!("{p} {class}: {} Gbps at ({a}, {b}), expected {want}", r.value_gbps));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(120);
    let detail = format!(
        "{} points, {} disagreements, {} infeasible points skipped",
        topos.len(),
        bad.len(),
        skipped.len()
    );
    report.record("Table 4 multi-path IBW", pass, elapsed, &detail, &bad);
}

/// Minimum s-t cut over all vertex bipartitions.
fn brute_min_cut(n: usize, edges: &[(usize, usize, f64)], s: usize, t: usize) -> f64 {
    let mut best = f64::INFINITY;
    for mask in 0u32..1 << n {
        if mask & 1 << s == 0 || mask & 1 << t != 0 {
            continue;
        }
        let cut: f64 = edges
            .iter()
            .filter(|&&(u, v, _)| (mask >> u & 1) != (mask >> v & 1))
            .map(|e| e.2)
            .sum();
        best = best.min(cut);
    }
    best
}

fn max_flow_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_7866);
    let mut bad = Vec::new();
    for g in 0..100 {
        let n = rng.random_range(2..=8);
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.random_range(0..v), v, rng.random_range(1..=40) as f64 / 4.0));
        }
        for _ in 0..rng.random_range(0..=12) {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            if u != v {
                edges.push((u, v, rng.random_range(1..=40) as f64 / 4.0));
            }
        }
        let mut net = FlowNetwork::new(n);
        for &(u, v, c) in &edges {
            net.add_edge(u, v, c);
        }
        for s in 0..n {
            for t in s + 1..n {
                let (f, c) = (net.max_flow(s, t), brute_min_cut(n, &edges, s, t));
                if f != c {
                    bad.push(format!("graph {g} ({n} nodes) {s}->{t}: flow {f}, min cut {c}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(30);
    report.record("Max-flow equals brute-force min cut", pass, elapsed, "100 random multigraphs, all pairs", &bad);
}

fn calibration(report: &mut Report) {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    let topo = Topology::build(&TopologyParams::classic(2, 8)).unwrap();
    let failure = FailureModel::default();
    let idle = CongestionModel::new(0.0, 0.1).unwrap();
    for t in [1000.0, 5000.0, 10000.0] {
        let mut counts = [(0usize, 0usize); 3];
        for trial in 0..200u64 {
            let snap = draw_snapshot(&topo, &failure, &idle, t, trial * 7919 + t as u64).unwrap();
            for n in 0..topo.num_nodes() {
                let k = if n < topo.num_servers() { 0 } else { 1 };
                counts[k].0 += snap.is_alive(n) as usize;
                counts[k].1 += 1;
            }
            for l in 0..topo.links().len() {
                counts[2].0 += snap.link_up(l) as usize;
                counts[2].1 += 1;
            }
        }
        let mttf = [failure.mttf_server_h, failure.mttf_switch_h, failure.mttf_link_h];
        for (k, name) in ["server", "switch", "link"].into_iter().enumerate() {
            let (hit, n) = counts[k];
            let p = (-t / mttf[k]).exp();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let frac = hit as f64 / n as f64;
            let line = format!("t={t} {name}: {frac:.4} vs {p:.4} over {n} draws ({:+.2} SE)", (frac - p) / se);
            if (frac - p).abs() > 3.0 * se || n < 3200 {
                bad.push(line);
            } else {
                lines.push(line);
            }
        }
    }
    let law = TruncatedNormal::new(0.5, 0.1, 0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x746e);
    let samples: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
    let outside = samples.iter().filter(|x| !(0.0..=1.0).contains(*x)).count();
    let (mean, _) = mean_se(&samples);
    if outside > 0 || (mean - 0.5).abs() > 0.01 {
        bad.push(format!("truncated normal: {outside} samples outside [0, 1], mean {mean:.5}"));
    }
    let elapsed = start.elapsed();
    let detail = format!("survival within 3 SE; 1e5 congestion samples in [0, 1], mean {mean:.5}");
    lines.extend(bad.iter().cloned());
    report.record("Stochastic model calibration", bad.is_empty(), elapsed, &detail, &lines);
}

/// Per-trial values of one cell, indexed by trial.
type Cells = HashMap<(Variant, u64, u64), Vec<Option<f64>>>;

fn cells(result: &ExperimentResult, metric: Metric, trials: usize) -> Cells {
    let mut out: Cells = HashMap::new();
    for r in result.rows.iter().filter(|r| r.metric == metric) {
        let v = out
            .entry((r.params.variant, r.gamma.to_bits(), r.time_h.to_bits()))
            .or_insert_with(|| vec![None; trials]);
        v[r.trial as usize] = r.value;
    }
    out
}

fn defined(xs: &[Option<f64>]) -> Vec<f64> {
    xs.iter().flatten().copied().collect()
}

const TREND_CONFIG: &str = r#"
schema_version = 1

[[plan.topologies]]
variant = "classic"
k_s = 2
k_1g = 4

[[plan.topologies]]
variant = "horizontal"
k_s = 2
k_1g = 4
k_10g = 4

[[plan.topologies]]
variant = "vertical"
k_s = 2
k_1g = 4
k_10g = 4

[[plan.topologies]]
variant = "hybrid"
k_s = 2
k_1g = 4
k_10g = 4
"#;

struct Simulation {
    config: ExperimentConfig,
    result: ExperimentResult,
    rows_csv: Vec<u8>,
}

fn trends(report: &mut Report) -> Simulation {
    let start = Instant::now();
    let config = ExperimentConfig::from_toml(TREND_CONFIG).unwrap();
    let plan = config.plan();
    let result = run_experiment(&plan, None).unwrap();
    let trials = plan.trials_per_cell as usize;
    let ibw = cells(&result, Metric::AvgIbw, trials);
    let hot = 0.95f64.to_bits();
    let times: Vec<u64> = plan.time_grid.iter().map(|t| t.to_bits()).collect();
    let mut bad = Vec::new();
    let mut info = Vec::new();

    // (a) ordering: per trial, variants share every failure and congestion
    // draw, so differences are paired; the ordering fails when it is reversed
    // at 95% confidence
    for (hi, lo) in [(Variant::Hybrid, Variant::Horizontal), (Variant::Horizontal, Variant::Classic)] {
        let mut worst = f64::INFINITY;
        for &t in &times[1..] {
            let (a, b) = (&ibw[&(hi, hot, t)], &ibw[&(lo, hot, t)]);
            let d: Vec<f64> = a.iter().zip(b).filter_map(|(x, y)| Some((*x)? - (*y)?)).collect();
            let (m, se) = mean_se(&d);
            worst = worst.min(m + Z95 * se);
            if m + Z95 * se < 0.0 {
                bad.push(format!(
                    "(a) {hi} < {lo} at t={}: paired diff {m:.4} +/- {:.4}",
                    f64::from_bits(t),
                    Z95 * se
                ));
            }
        }
        info.push(format!("(a) {hi} >= {lo}: smallest upper 95% bound of the paired difference {worst:.4}"));
    }

    // (b) decrease along the grid: no step rises significantly and the last
    // point lies significantly below t = 0
    for v in Variant::ALL {
        let stats: Vec<(f64, f64)> = times.iter().map(|&t| mean_se(&defined(&ibw[&(v, hot, t)]))).collect();
        for (i, w) in stats.windows(2).enumerate() {
            let rise = w[1].0 - w[0].0;
            if rise > Z95 * w[0].1.hypot(w[1].1) {
                bad.push(format!(
                    "(b) {v} mean rises {rise:.4} from t={} to t={}",
                    plan.time_grid[i],
                    plan.time_grid[i + 1]
                ));
            }
        }
        let (first, last) = (stats[0], stats[stats.len() - 1]);
        if first.0 - last.0 <= Z95 * first.1.hypot(last.1) {
            bad.push(format!("(b) {v} final mean {:.4} not below initial {:.4}", last.0, first.0));
        }
        let curve: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.0)).collect();
        info.push(format!("(b) {v} gamma=0.95 mean AvgIBW: {}", curve.join(" ")));
    }

    // (c) gamma dominance of the mean curves
    for v in Variant::ALL {
        for (i, &t) in times.iter().enumerate() {
            let means: Vec<f64> = plan
                .gammas
                .iter()
                .map(|g| mean_se(&defined(&ibw[&(v, g.to_bits(), t)])).0)
                .collect();
            if means.windows(2).any(|w| w[0] < w[1]) {
                bad.push(format!("(c) {v} at t={}: means by gamma {means:?}", plan.time_grid[i]));
            }
        }
    }

    // half-life direction
    let classic = &plan.topologies[0];
    let hybrid = &plan.topologies[3];
    let hc = half_life_time(&result.aggregates, classic, 0.95, Metric::AvgIbw);
    let hh = half_life_time(&result.aggregates, hybrid, 0.95, Metric::AvgIbw);
    match (&hc, &hh) {
        (Ok(c), Ok(h)) if h >= c => info.push(format!("half-life at gamma=0.95: hybrid {h} h, classic {c} h")),
        _ => bad.push(format!("half-life at gamma=0.95: hybrid {hh:?}, classic {hc:?}")),
    }

    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(600);
    let detail = format!("{} trials per cell, {} rows", trials, result.rows.len());
    info.extend(bad.iter().cloned());
    report.record("Resilience trends (ordering, decrease, gamma, half-life)", pass, elapsed, &detail, &info);

    let mut rows_csv = Vec::new();
    write_rows_csv(&result.rows, &mut rows_csv).unwrap();
    Simulation { config, result, rows_csv }
}

fn determinism(report: &mut Report, sim: &Simulation) {
    let start = Instant::now();
    // replay from the effective config, as `simulate` writes it
    let effective = ExperimentConfig::from_json(&sim.config.to_json().unwrap()).unwrap();
    let result = run_experiment(&effective.plan(), Some(2)).unwrap();
    let mut rows_csv = Vec::new();
    write_rows_csv(&result.rows, &mut rows_csv).unwrap();
    let pass = rows_csv == sim.rows_csv;
    let detail = format!("{} bytes of rows.csv, rerun with 2 workers", rows_csv.len());
    report.record("Deterministic rows from the effective config", pass, start.elapsed(), &detail, &[]);
}

/// Half-life of mean AvgIBW must not shrink when a server layer is added.
/// The two-layer curves come from the trend run; cell seeds ignore the
/// topology, so the three-layer run sees the same draws.
fn half_life_in_k_s(report: &mut Report, sim: &Simulation) {
    let start = Instant::now();
    let mut config = sim.config.clone();
    let two = [TopologyParams::horizontal(2, 4, 4), TopologyParams::hybrid(2, 4, 2, 2)];
    let three = [TopologyParams::horizontal(3, 4, 4), TopologyParams::hybrid(3, 4, 2, 2)];
    config.plan.topologies = three.to_vec();
    config.plan.gammas = vec![0.95];
    config.plan.metrics = vec![Metric::AvgIbw];
    let result = run_experiment(&config.plan(), None).unwrap();
    let mut bad = Vec::new();
    let mut info = Vec::new();
    for (a, b) in two.iter().zip(&three) {
        let ha = half_life_time(&sim.result.aggregates, a, 0.95, Metric::AvgIbw).unwrap();
        let hb = half_life_time(&result.aggregates, b, 0.95, Metric::AvgIbw).unwrap();
        let line = format!("{}: k_s=2 {ha:.0} h, k_s=3 {hb:.0} h", a.variant);
        if hb >= ha {
            info.push(line);
        } else {
            bad.push(line);
        }
    }
    info.extend(bad.iter().cloned());
    let detail = "gamma=0.95, k_1g=4, k_10g=4, 200 trials";
    report.record("Half-life nondecreasing in k_s", bad.is_empty(), start.elapsed(), detail, &info);
}
