use std::cmp::Ordering;
use std::time::{Duration, Instant};

use super::search::{
    constrained_shortest_path, distances, minimax_bottleneck, PathResult, SearchLimits,
};
use super::{build_graph, AssignmentGraph, GraphOptions, SINK};
use crate::costmodel::{pipeline_factor, total_latency, CostModel, LatencyReport};
use crate::error::{Error, Result};
use crate::relaxation;
use crate::scenario::SplitPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// One capped search per distinct bottleneck value, skipping values
    /// already dominated by a found path.
    #[default]
    DistinctCaps,
    /// One search per edge, forced through that edge.
    PerEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundKind {
    /// Unconstrained shortest path sum.
    #[default]
    Fast,
    /// Linear relaxation with product terms, never below the fast bound.
    Rlt,
}

#[derive(Debug, Clone, Default)]
pub struct MspOptions {
    pub mode: SearchMode,
    pub bound: BoundKind,
    /// Stop once the lower bound on the remaining caps cannot beat the incumbent.
    pub prune: bool,
    pub graph: GraphOptions,
    pub limits: SearchLimits,
}

impl MspOptions {
    pub fn pruned() -> Self {
        MspOptions {
            prune: true,
            ..MspOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MspSolution {
    pub plan: SplitPlan,
    pub report: LatencyReport,
    pub subgraphs_searched: usize,
    pub subgraphs_pruned: usize,
    pub wall_time: Duration,
    /// Lower bound on `T_f` over all plans at this micro-batch.
    pub lower_bound: f64,
    pub vertices: usize,
    pub edges: usize,
}

/// Total order used to break ties between equally good plans: latency,
/// interval, fewer submodels, then placement and cuts lexicographically.
pub fn compare_candidates(a: (&SplitPlan, f64, f64), b: (&SplitPlan, f64, f64)) -> Ordering {
    let (pa, la, ia) = a;
    let (pb, lb, ib) = b;
    la.total_cmp(&lb)
        .then(ia.total_cmp(&ib))
        .then(pa.effective_count().cmp(&pb.effective_count()))
        .then_with(|| pa.placement().cmp(pb.placement()))
        .then_with(|| pa.cuts().cmp(pb.cuts()))
}

struct Best {
    plan: SplitPlan,
    l_t: f64,
    t_i: f64,
}

impl Best {
    fn offer(
        slot: &mut Option<Best>,
        g: &AssignmentGraph,
        cm: &CostModel,
        xi: u32,
        r: &PathResult,
    ) {
        let plan = g.path_plan(cm, &r.path);
        let l_t = r.cost + xi as f64 * r.bottleneck;
        let take = match slot {
            None => true,
            Some(b) => {
                compare_candidates((&plan, l_t, r.bottleneck), (&b.plan, b.l_t, b.t_i))
                    == Ordering::Less
            }
        };
        if take {
            *slot = Some(Best {
                plan,
                l_t,
                t_i: r.bottleneck,
            });
        }
    }
}

/// Lower bound on the path sum (`T_f`) of every plan in the graph.
pub fn graph_lower_bound(g: &AssignmentGraph, kind: BoundKind) -> Result<f64> {
    let fast = relaxation::combinatorial_bound(g);
    match kind {
        BoundKind::Fast => Ok(fast),
        BoundKind::Rlt => Ok(relaxation::rlt_bound(g)?.max(fast)),
    }
}

/// Names the constraint that leaves the graph without a complete path.
fn diagnose(cm: &CostModel, g: &AssignmentGraph) -> String {
    let b = g.micro_batch;
    if !g.vertices.iter().any(|v| v.k == 1) {
        return format!("client memory: no client submodel fits at micro-batch {b}");
    }
    if g.dropped_for_memory > 0 {
        return format!(
            "server memory: {} layer ranges exceed their host's capacity at micro-batch {b} and no complete plan remains",
            g.dropped_for_memory
        );
    }
    if cm.scenario().num_servers() == 0 {
        return "no servers".to_string();
    }
    "connectivity: no route links the clients to a server chain that finishes the model".to_string()
}

/// Optimal split and placement at micro-batch `b`.
pub fn solve_msp(cm: &CostModel, b: u32, opts: &MspOptions) -> Result<MspSolution> {
    let scn = cm.scenario();
    if b < 1 || b > scn.minibatch {
        return Err(Error::Validation(format!(
            "micro-batch {b} outside 1..={}",
            scn.minibatch
        )));
    }
    let start = Instant::now();
    let g = build_graph(cm, b, &opts.graph);
    let xi = pipeline_factor(scn.minibatch, b);
    let base = distances(&g, f64::INFINITY);
    if base.forward[SINK] == f64::INFINITY {
        return Err(Error::Infeasible(diagnose(cm, &g)));
    }
    let lower_bound = graph_lower_bound(&g, opts.bound)?;
    let floor = minimax_bottleneck(&g);

    let mut best: Option<Best> = None;
    let mut searched = 0;
    let mut pruned = 0;
    match opts.mode {
        SearchMode::DistinctCaps => {
            let mut caps: Vec<f64> = g.edges.iter().map(|e| e.bottleneck).collect();
            caps.sort_by(|a, b| b.total_cmp(a));
            caps.dedup();
            let mut i = 0;
            // any path still to be found has at least this path sum
            let mut sum_floor = lower_bound;
            while i < caps.len() {
                let cap = caps[i];
                if opts.prune {
                    if let Some(inc) = &best {
                        if sum_floor + xi as f64 * floor > inc.l_t {
                            pruned += caps.len() - i;
                            break;
                        }
                        // paths whose bottleneck is exactly `cap` cannot win
                        if sum_floor + xi as f64 * cap > inc.l_t {
                            pruned += 1;
                            i += 1;
                            continue;
                        }
                    }
                }
                searched += 1;
                let Some(r) = constrained_shortest_path(&g, cap, None, &opts.limits)? else {
                    pruned += caps.len() - i - 1;
                    break;
                };
                Best::offer(&mut best, &g, cm, xi, &r);
                sum_floor = sum_floor.max(r.cost);
                // every path with bottleneck in [r.bottleneck, cap] is dominated
                let before = i;
                while i < caps.len() && caps[i] >= r.bottleneck {
                    i += 1;
                }
                pruned += i - before - 1;
            }
        }
        SearchMode::PerEdge => {
            let mut order: Vec<usize> = (0..g.num_edges()).collect();
            order.sort_by(|&a, &b| {
                g.edges[b]
                    .bottleneck
                    .total_cmp(&g.edges[a].bottleneck)
                    .then(a.cmp(&b))
            });
            for e in order {
                let cap = g.edges[e].bottleneck;
                if opts.prune {
                    if let Some(inc) = &best {
                        if lower_bound + xi as f64 * cap > inc.l_t {
                            pruned += 1;
                            continue;
                        }
                    }
                }
                searched += 1;
                if let Some(r) = constrained_shortest_path(&g, cap, Some(e), &opts.limits)? {
                    Best::offer(&mut best, &g, cm, xi, &r);
                }
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "server memory: no plan at micro-batch {b} satisfies the per-node memory limits"
        ))
    })?;
    let report = cm.report(&best.plan, b);
    debug_assert_eq!(
        report.l_t,
        total_latency(report.t_f, report.t_i, scn.minibatch, b)
    );
    Ok(MspSolution {
        plan: best.plan,
        report,
        subgraphs_searched: searched,
        subgraphs_pruned: pruned,
        wall_time: start.elapsed(),
        lower_bound,
        vertices: g.num_vertices(),
        edges: g.num_edges(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mspgraph::Restriction;
    use crate::scenario::{generate_scenario, GeneratorSpec, Topology};
    use crate::testing::toy_scenario;

    /// Best plan at `b` by listing every plan in the graph.
    fn exhaustive(cm: &CostModel, b: u32, reuse: bool) -> Option<(SplitPlan, f64)> {
        let scn = cm.scenario();
        let layers = scn.num_layers();
        let servers: Vec<usize> = scn.servers().collect();
        let mut best: Option<(SplitPlan, f64, f64)> = None;
        let kmax = scn.max_submodels.min(layers);
        for k_eff in 2..=kmax {
            let mut cuts = Vec::new();
            let mut place = Vec::new();
            fn choose_cuts(
                layers: usize,
                need: usize,
                from: usize,
                cuts: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
            ) {
                if need == 0 {
                    out.push(cuts.clone());
                    return;
                }
                for c in from..layers {
                    cuts.push(c);
                    choose_cuts(layers, need - 1, c + 1, cuts, out);
                    cuts.pop();
                }
            }
            choose_cuts(layers, k_eff - 1, 1, &mut cuts, &mut place);
            for cuts in place {
                let mut stack = vec![Vec::new()];
                while let Some(p) = stack.pop() {
                    if p.len() == k_eff - 1 {
                        let Ok(plan) = SplitPlan::new(scn, cuts.clone(), p) else {
                            continue;
                        };
                        if !reuse && !plan.has_distinct_servers() {
                            continue;
                        }
                        if let Ok(r) = cm.evaluate(&plan, b) {
                            let better = best.as_ref().is_none_or(|(bp, bl, bi)| {
                                compare_candidates((&plan, r.l_t, r.t_i), (bp, *bl, *bi))
                                    == Ordering::Less
                            });
                            if better {
                                best = Some((plan, r.l_t, r.t_i));
                            }
                        }
                        continue;
                    }
                    for &n in &servers {
                        let mut q = p.clone();
                        q.push(n);
                        stack.push(q);
                    }
                }
            }
        }
        best.map(|(p, l, _)| (p, l))
    }

    fn generated(seed: u64, servers: usize, topology: Topology) -> crate::Scenario {
        let spec = GeneratorSpec {
            servers,
            clients: 2,
            topology,
            max_submodels: 4,
            ..GeneratorSpec::default()
        };
        let mut s = generate_scenario(seed, &spec).unwrap();
        // keep the brute force small: first six layers only
        s.layers.truncate(6);
        s
    }

    #[test]
    fn matches_exhaustive_plans() {
        for seed in 0..6 {
            let s = generated(seed, 4, Topology::Mesh);
            let cm = CostModel::new(&s);
            for b in [1, 8, 33, 100] {
                let got = solve_msp(&cm, b, &MspOptions::pruned());
                let want = exhaustive(&cm, b, false);
                match (got, want) {
                    (Ok(sol), Some((plan, l_t))) => {
                        assert_eq!(sol.report.l_t, l_t, "seed {seed} b {b}");
                        assert_eq!(sol.plan, plan, "seed {seed} b {b}");
                    }
                    (Err(e), None) => assert!(e.is_infeasible()),
                    (got, want) => panic!("seed {seed} b {b}: {got:?} vs {want:?}"),
                }
            }
        }
    }

    #[test]
    fn reuse_mode_matches_exhaustive_plans() {
        for seed in 0..4 {
            let s = generated(seed, 3, Topology::Line);
            let cm = CostModel::new(&s);
            let opts = MspOptions {
                prune: true,
                graph: GraphOptions {
                    allow_node_reuse: true,
                    ..GraphOptions::default()
                },
                ..MspOptions::default()
            };
            for b in [4, 64] {
                let sol = solve_msp(&cm, b, &opts).unwrap();
                let (plan, l_t) = exhaustive(&cm, b, true).unwrap();
                assert_eq!(sol.report.l_t, l_t);
                assert_eq!(sol.plan, plan);
            }
        }
    }

    #[test]
    fn modes_and_pruning_agree() {
        for seed in 10..14 {
            let s = generated(seed, 3, Topology::Mesh);
            let cm = CostModel::new(&s);
            for b in [2, 40] {
                let a = solve_msp(&cm, b, &MspOptions::default()).unwrap();
                let p = solve_msp(&cm, b, &MspOptions::pruned()).unwrap();
                let e = solve_msp(
                    &cm,
                    b,
                    &MspOptions {
                        mode: SearchMode::PerEdge,
                        ..MspOptions::default()
                    },
                )
                .unwrap();
                assert_eq!(a.report.l_t, p.report.l_t);
                assert_eq!(a.report.l_t, e.report.l_t);
                assert!(p.subgraphs_searched <= a.subgraphs_searched);
                assert!(a.lower_bound <= a.report.t_f);
            }
        }
    }

    #[test]
    fn single_server_matches_cut_scan() {
        let s = toy_scenario(6, 2, 1, 4);
        let cm = CostModel::new(&s);
        let server = s.servers().next().unwrap();
        for b in [1, 16, 64] {
            let sol = solve_msp(&cm, b, &MspOptions::pruned()).unwrap();
            let best = (1..6)
                .map(|c| {
                    cm.evaluate(&SplitPlan::new(&s, vec![c], vec![server]).unwrap(), b)
                        .unwrap()
                        .l_t
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(sol.report.l_t, best);
            assert_eq!(sol.plan.effective_count(), 2);
        }
    }

    #[test]
    fn restriction_limits_the_search() {
        let s = generated(3, 4, Topology::Mesh);
        let cm = CostModel::new(&s);
        let opts = MspOptions {
            graph: GraphOptions {
                restriction: Restriction {
                    cuts: Some(vec![2, 4]),
                    nodes: None,
                },
                ..GraphOptions::default()
            },
            ..MspOptions::default()
        };
        let sol = solve_msp(&cm, 16, &opts).unwrap();
        assert_eq!(sol.plan.cuts(), &[2, 4]);
        let free = solve_msp(&cm, 16, &MspOptions::default()).unwrap();
        assert!(free.report.l_t <= sol.report.l_t);
    }

    #[test]
    fn infeasible_names_the_binding_constraint() {
        let mut s = toy_scenario(4, 1, 2, 3);
        for n in s.nodes.iter_mut().skip(1) {
            n.memory = 1.0;
        }
        let cm = CostModel::new(&s);
        let err = solve_msp(&cm, 8, &MspOptions::default()).unwrap_err();
        assert!(err.to_string().contains("server memory"), "{err}");

        let mut s = toy_scenario(4, 1, 2, 3);
        s.nodes[0].memory = 1.0;
        let cm = CostModel::new(&s);
        let err = solve_msp(&cm, 8, &MspOptions::default()).unwrap_err();
        assert!(err.to_string().contains("client memory"), "{err}");
    }

    #[test]
    fn relabeling_servers_keeps_the_objective() {
        let s = generated(5, 4, Topology::Mesh);
        let n = s.nodes.len();
        // reverse the server block, clients stay in front
        let perm: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { n + 1 - i }).collect();
        let mut moved = s.clone();
        for (old, &new) in perm.iter().enumerate() {
            moved.nodes[new] = s.nodes[old].clone();
        }
        for l in &mut moved.links {
            l.from = perm[l.from];
            l.to = perm[l.to];
        }
        let a = solve_msp(&CostModel::new(&s), 16, &MspOptions::pruned()).unwrap();
        let b = solve_msp(&CostModel::new(&moved), 16, &MspOptions::pruned()).unwrap();
        assert_eq!(a.report.l_t, b.report.l_t);
    }
}
