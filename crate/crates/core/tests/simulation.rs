use std::collections::{HashMap, HashSet};

use bcube::bandwidth::PairBudget;
use bcube::failure::{connected_components, draw_snapshot, CongestionModel, FailureModel};
use bcube::montecarlo::{aggregate, run_experiment, write_rows_csv, ExperimentPlan, Metric, Row};
use bcube::topology::{Topology, TopologyParams};
use proptest::prelude::*;

fn small_plan() -> ExperimentPlan {
    ExperimentPlan {
        topologies: vec![
            TopologyParams::classic(2, 4),
            TopologyParams::hybrid(2, 4, 2, 2),
            TopologyParams::horizontal(2, 4, 4),
        ],
        gammas: vec![0.05, 0.95],
        time_grid: vec![0.0, 2000.0, 6000.0],
        trials_per_cell: 12,
        master_seed: 7,
        metrics: vec![Metric::AvgIbw, Metric::ArsMax, Metric::RsMax, Metric::ComponentCount],
        pair_sample_budget: PairBudget::Limit(40),
        failure: FailureModel::default(),
        sigma: 0.1,
    }
}

fn csv_bytes(rows: &[Row]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows_csv(rows, &mut buf).unwrap();
    buf
}

#[test]
fn worker_count_does_not_change_rows() {
    let plan = small_plan();
    let one = run_experiment(&plan, Some(1)).unwrap();
    let four = run_experiment(&plan, Some(4)).unwrap();
    assert_eq!(csv_bytes(&one.rows), csv_bytes(&four.rows));
    assert_eq!(one.aggregates, four.aggregates);
}

#[test]
fn cells_are_independent_of_the_rest_of_the_plan() {
    let plan = small_plan();
    let full = run_experiment(&plan, None).unwrap();
    let mut sub = plan.clone();
    sub.topologies = vec![TopologyParams::hybrid(2, 4, 2, 2)];
    sub.gammas = vec![0.95];
    sub.time_grid = vec![0.0, 6000.0];
    let part = run_experiment(&sub, None).unwrap();
    let expected: Vec<&Row> = full
        .rows
        .iter()
        .filter(|r| r.params == sub.topologies[0] && r.gamma == 0.95 && r.time_h != 2000.0)
        .collect();
    assert_eq!(part.rows.iter().collect::<Vec<_>>(), expected);
}

#[test]
fn aggregates_recompute_from_rows() {
    let result = run_experiment(&small_plan(), None).unwrap();
    let mut groups: HashMap<String, Vec<f64>> = HashMap::new();
    for r in &result.rows {
        let key = format!("{}|{}|{}|{}", r.params, r.gamma, r.time_h, r.metric);
        let values = groups.entry(key).or_default();
        values.extend(r.value);
    }
    assert_eq!(groups.len(), result.aggregates.len());
    for a in &result.aggregates {
        let key = format!("{}|{}|{}|{}", a.params, a.gamma, a.time_h, a.metric);
        let v = &groups[&key];
        assert_eq!(a.n, v.len());
        if v.is_empty() {
            assert!(a.mean.is_none());
            continue;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1e-300);
        assert!(close(a.mean.unwrap(), mean), "{key}");
        assert!(close(a.stddev.unwrap(), var.sqrt()) || var == 0.0, "{key}");
        assert!(close(a.ci95.unwrap(), 1.96 * var.sqrt() / n.sqrt()) || var == 0.0);
    }
    assert_eq!(aggregate(&result.rows), result.aggregates);
}

#[test]
fn congestion_means_are_ordered_by_gamma() {
    let result = run_experiment(&small_plan(), None).unwrap();
    for a in result.aggregates.iter().filter(|a| a.metric == Metric::AvgIbw && a.gamma == 0.05) {
        let high = result
            .aggregates
            .iter()
            .find(|b| b.params == a.params && b.time_h == a.time_h && b.metric == a.metric && b.gamma == 0.95)
            .unwrap();
        assert!(a.mean.unwrap() > high.mean.unwrap(), "{} at {}", a.params, a.time_h);
    }
}

#[test]
fn connectivity_metrics_ignore_congestion_level() {
    // failures come from the same draws for every gamma
    let result = run_experiment(&small_plan(), None).unwrap();
    let key = |r: &Row| (r.params, r.time_h.to_bits(), r.trial, r.metric);
    let low: HashMap<_, _> = result
        .rows
        .iter()
        .filter(|r| r.gamma == 0.05 && r.metric == Metric::ArsMax)
        .map(|r| (key(r), r.value))
        .collect();
    for r in result.rows.iter().filter(|r| r.gamma == 0.95 && r.metric == Metric::ArsMax) {
        assert_eq!(low[&key(r)], r.value);
    }
}

/// Components from a DFS over the explicit list of carrying links.
fn naive_components(topo: &Topology, alive: &[bool], carrying: &[bool]) -> HashSet<Vec<usize>> {
    let mut adj = vec![Vec::new(); topo.num_nodes()];
    for l in 0..topo.links().len() {
        if carrying[l] {
            let [a, b] = topo.endpoints(l);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; topo.num_nodes()];
    let mut out = HashSet::new();
    for s in 0..topo.num_nodes() {
        if !alive[s] || seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshot_components_and_ratios(seed in any::<u64>(), time in 0.0f64..20000.0, gamma in 0.0f64..=1.0, variant in 0usize..3) {
        let p = [TopologyParams::classic(2, 4), TopologyParams::vertical(2, 4, 2), TopologyParams::hybrid(2, 4, 2, 2)][variant];
        let topo = Topology::build(&p).unwrap();
        let cm = CongestionModel::new(gamma, 0.1).unwrap();
        let snap = draw_snapshot(&topo, &FailureModel::default(), &cm, time, seed).unwrap();
        let view = snap.view();
        let carrying: Vec<bool> = (0..topo.links().len()).map(|l| snap.effective_capacity(l) > 0.0).collect();
        let comps = connected_components(&view);
        let got: HashSet<Vec<usize>> = comps.iter().map(|c| c.nodes.clone()).collect();
        prop_assert_eq!(got, naive_components(&topo, snap.alive(), &carrying));
        for l in 0..topo.links().len() {
            let c = snap.effective_capacity(l);
            prop_assert!(c >= 0.0 && c <= topo.links()[l].nominal_gbps());
            let d = snap.congestion_degree(l);
            prop_assert!((0.0..=1.0).contains(&d));
        }
        if snap.alive_servers() > 0 {
            let rs = snap.rs_max().unwrap();
            let ars = snap.ars_max(topo.num_servers()).unwrap();
            prop_assert!(ars <= rs + 1e-15);
            let max = comps.iter().map(|c| c.servers).max().unwrap() as f64;
            prop_assert_eq!(rs, max / snap.alive_servers() as f64);
            prop_assert_eq!(ars, max / topo.num_servers() as f64);
            prop_assert!(rs > 0.0 && rs <= 1.0);
        } else {
            prop_assert!(snap.rs_max().is_err());
        }
    }

    #[test]
    fn snapshots_are_reproducible(seed in any::<u64>(), time in 0.0f64..20000.0) {
        let topo = Topology::build(&TopologyParams::hybrid(2, 2, 1, 1)).unwrap();
        let cm = CongestionModel::new(0.5, 0.1).unwrap();
        let a = draw_snapshot(&topo, &FailureModel::default(), &cm, time, seed).unwrap();
        let b = draw_snapshot(&topo, &FailureModel::default(), &cm, time, seed).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}

fn default_plan(topologies: Vec<TopologyParams>) -> ExperimentPlan {
    ExperimentPlan {
        topologies,
        gammas: vec![0.05, 0.5, 0.95],
        time_grid: (0..=10).map(|i| i as f64 * 1000.0).collect(),
        trials_per_cell: 200,
        master_seed: 1,
        metrics: vec![Metric::AvgIbw],
        pair_sample_budget: PairBudget::default(),
        failure: FailureModel::default(),
        sigma: 0.1,
    }
}

#[test]
fn hybrid_outlasts_classic_under_heavy_congestion() {
    // paired by trial: both topologies see the same failure draws
    let classic = TopologyParams::classic(2, 4);
    let hybrid = TopologyParams::hybrid(2, 4, 2, 2);
    let mut plan = default_plan(vec![classic, hybrid]);
    plan.gammas = vec![0.95];
    let r = run_experiment(&plan, None).unwrap();
    for &t in &plan.time_grid[1..] {
        let values = |p: TopologyParams| -> Vec<Option<f64>> {
            r.rows.iter().filter(|x| x.params == p && x.time_h == t).map(|x| x.value).collect()
        };
        let d: Vec<f64> = values(classic)
            .iter()
            .zip(values(hybrid))
            .filter_map(|(c, h)| Some(h? - (*c)?))
            .collect();
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(m - 1.96 * sd / n.sqrt() > 0.0, "t={t}: hybrid - classic = {m} +/- {}", 1.96 * sd / n.sqrt());
    }
}
