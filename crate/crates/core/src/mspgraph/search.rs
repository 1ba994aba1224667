use super::{AssignmentGraph, Host, SINK, SOURCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    /// Vertex expansions allowed in one branch-and-bound search.
    pub max_expansions: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_expansions: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Vertex ids from the source to the sink.
    pub path: Vec<usize>,
    /// Path sum accumulated in path order.
    pub cost: f64,
    pub bottleneck: f64,
}

/// Shortest distances restricted to edges with bottleneck at most `cap`.
#[derive(Debug, Clone)]
pub(crate) struct Distances {
    pub forward: Vec<f64>,
    pub pred: Vec<usize>,
    pub backward: Vec<f64>,
}

/// Vertex ids in topological order: the source, then all inner vertices
/// (they are created submodel by submodel), then the sink.
fn topo(g: &AssignmentGraph) -> impl DoubleEndedIterator<Item = usize> {
    std::iter::once(SOURCE)
        .chain(2..g.num_vertices())
        .chain(std::iter::once(SINK))
}

pub(crate) fn distances(g: &AssignmentGraph, cap: f64) -> Distances {
    let n = g.num_vertices();
    let mut forward = vec![f64::INFINITY; n];
    let mut forward_max = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    forward[SOURCE] = 0.0;
    forward_max[SOURCE] = 0.0;
    for u in topo(g) {
        let du = forward[u];
        if du == f64::INFINITY {
            continue;
        }
        for e in g.out_edges(u) {
            let edge = &g.edges[e];
            if edge.bottleneck > cap {
                continue;
            }
            let d = du + edge.cost;
            let m = forward_max[u].max(edge.bottleneck);
            let v = edge.to;
            if d < forward[v] || (d == forward[v] && m < forward_max[v]) {
                forward[v] = d;
                forward_max[v] = m;
                pred[v] = u;
            }
        }
    }
    let mut backward = vec![f64::INFINITY; n];
    backward[SINK] = 0.0;
    for u in topo(g).rev() {
        for e in g.out_edges(u) {
            let edge = &g.edges[e];
            if edge.bottleneck > cap {
                continue;
            }
            let d = edge.cost + backward[edge.to];
            if d < backward[u] {
                backward[u] = d;
            }
        }
    }
    Distances {
        forward,
        pred,
        backward,
    }
}

/// Smallest achievable path bottleneck over all source-to-sink paths.
pub(crate) fn minimax_bottleneck(g: &AssignmentGraph) -> f64 {
    let mut best = vec![f64::INFINITY; g.num_vertices()];
    best[SOURCE] = 0.0;
    for u in topo(g) {
        if best[u] == f64::INFINITY {
            continue;
        }
        for e in g.out_edges(u) {
            let edge = &g.edges[e];
            let m = best[u].max(edge.bottleneck);
            if m < best[edge.to] {
                best[edge.to] = m;
            }
        }
    }
    best[SINK]
}

/// Recomputes a path's sum in path order and its bottleneck.
fn finish(g: &AssignmentGraph, path: Vec<usize>) -> PathResult {
    let (cost, bottleneck) = g.path_cost(&path);
    PathResult {
        path,
        cost,
        bottleneck,
    }
}

fn walk_back(pred: &[usize], to: usize) -> Vec<usize> {
    let mut path = vec![to];
    let mut v = to;
    while v != SOURCE {
        v = pred[v];
        path.push(v);
    }
    path.reverse();
    path
}

/// Whether a complete path satisfies the path-level constraints: distinct
/// servers without reuse, aggregate memory per server with reuse.
pub(crate) fn path_is_admissible(g: &AssignmentGraph, path: &[usize]) -> bool {
    let mut used = vec![0.0; g.servers.len()];
    let mut seen = vec![false; g.servers.len()];
    for &v in path {
        let vx = &g.vertices[v];
        if let Host::Server(n) = vx.host {
            if vx.k < 2 {
                continue;
            }
            let i = g.server_slot(n);
            if seen[i] && !g.allow_node_reuse {
                return false;
            }
            seen[i] = true;
            used[i] += vx.demand;
            if used[i] > g.capacity[i] {
                return false;
            }
        }
    }
    true
}

/// Cheapest admissible source-to-sink path using only edges whose
/// bottleneck is at most `cap` and, when `required` is set, passing through
/// that edge. Among equal sums the smaller bottleneck wins.
pub fn constrained_shortest_path(
    g: &AssignmentGraph,
    cap: f64,
    required: Option<usize>,
    limits: &SearchLimits,
) -> Result<Option<PathResult>> {
    let d = distances(g, cap);
    let quick = match required {
        None => {
            if d.forward[SINK] == f64::INFINITY {
                return Ok(None);
            }
            walk_back(&d.pred, SINK)
        }
        Some(e) => {
            let edge = &g.edges[e];
            if edge.bottleneck > cap
                || d.forward[edge.from] == f64::INFINITY
                || d.backward[edge.to] == f64::INFINITY
            {
                return Ok(None);
            }
            let mut path = walk_back(&d.pred, edge.from);
            let mut v = edge.to;
            path.push(v);
            // follow a shortest continuation to the sink
            while v != SINK {
                let next = g
                    .out_edges(v)
                    .filter(|&x| g.edges[x].bottleneck <= cap)
                    .min_by(|&a, &b| {
                        let ea = &g.edges[a];
                        let eb = &g.edges[b];
                        (ea.cost + d.backward[ea.to]).total_cmp(&(eb.cost + d.backward[eb.to]))
                    })
                    .expect("finite backward distance has a successor");
                v = g.edges[next].to;
                path.push(v);
            }
            path
        }
    };
    if path_is_admissible(g, &quick) {
        return Ok(Some(finish(g, quick)));
    }
    branch_and_bound(g, cap, required, &d.backward, limits, None)
}

struct Dfs<'a> {
    g: &'a AssignmentGraph,
    cap: f64,
    required: Option<usize>,
    required_k: usize,
    h: &'a [f64],
    limit: u64,
    expansions: u64,
    used: Vec<f64>,
    seen: Vec<bool>,
    path: Vec<usize>,
    best: Option<PathResult>,
}

fn slack(x: f64) -> f64 {
    x + x.abs() * 1e-12
}

impl Dfs<'_> {
    fn better(&self, cost: f64, bottleneck: f64) -> bool {
        match &self.best {
            None => true,
            Some(b) => cost < b.cost || (cost == b.cost && bottleneck < b.bottleneck),
        }
    }

    fn visit(&mut self, u: usize, g_cost: f64, g_max: f64, passed: bool) -> Result<()> {
        self.expansions += 1;
        if self.expansions > self.limit {
            return Err(Error::IterationLimit(self.limit as usize));
        }
        if u == SINK {
            if passed && self.better(g_cost, g_max) {
                self.best = Some(PathResult {
                    path: self.path.clone(),
                    cost: g_cost,
                    bottleneck: g_max,
                });
            }
            return Ok(());
        }
        let mut succ: Vec<(f64, usize)> = Vec::new();
        for e in self.g.out_edges(u) {
            let edge = &self.g.edges[e];
            if edge.bottleneck > self.cap || self.h[edge.to] == f64::INFINITY {
                continue;
            }
            let through = passed || self.required == Some(e);
            if !through {
                if let Some(r) = self.required {
                    let vk = self.g.vertices[edge.to].k;
                    let rf = self.g.edges[r].from;
                    // past the required edge's tail layer without taking it
                    if edge.to == SINK
                        || vk > self.required_k
                        || (vk == self.required_k && edge.to != rf)
                    {
                        continue;
                    }
                }
            }
            succ.push((edge.cost + self.h[edge.to], e));
        }
        succ.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (est, e) in succ {
            if let Some(b) = &self.best {
                if g_cost + est > slack(b.cost) {
                    break;
                }
            }
            let edge = self.g.edges[e];
            let v = edge.to;
            let vx = self.g.vertices[v];
            let mut slot = None;
            if let (Host::Server(n), true) = (vx.host, vx.k >= 2) {
                let i = self.g.server_slot(n);
                if self.seen[i] && !self.g.allow_node_reuse {
                    continue;
                }
                if self.used[i] + vx.demand > self.g.capacity[i] {
                    continue;
                }
                slot = Some((i, self.seen[i]));
                self.seen[i] = true;
                self.used[i] += vx.demand;
            }
            self.path.push(v);
            let through = passed || self.required == Some(e);
            let r = self.visit(v, g_cost + edge.cost, g_max.max(edge.bottleneck), through);
            self.path.pop();
            if let Some((i, was)) = slot {
                self.seen[i] = was;
                self.used[i] -= vx.demand;
            }
            r?;
        }
        Ok(())
    }
}

fn branch_and_bound(
    g: &AssignmentGraph,
    cap: f64,
    required: Option<usize>,
    h: &[f64],
    limits: &SearchLimits,
    seed: Option<PathResult>,
) -> Result<Option<PathResult>> {
    let required_k = required.map_or(0, |e| g.vertices[g.edges[e].from].k);
    let mut dfs = Dfs {
        g,
        cap,
        required,
        required_k,
        h,
        limit: limits.max_expansions,
        expansions: 0,
        used: vec![0.0; g.servers.len()],
        seen: vec![false; g.servers.len()],
        path: vec![SOURCE],
        best: seed,
    };
    dfs.visit(SOURCE, 0.0, 0.0, required.is_none())?;
    Ok(dfs.best.map(|b| finish(g, b.path)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostModel;
    use crate::mspgraph::{build_graph, GraphOptions};
    use crate::testing::toy_scenario;

    /// Every source-to-sink path, by exhaustive walk.
    fn all_paths(g: &AssignmentGraph) -> Vec<Vec<usize>> {
        fn rec(g: &AssignmentGraph, u: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if u == SINK {
                out.push(path.clone());
                return;
            }
            for e in g.out_edges(u) {
                let v = g.edges[e].to;
                path.push(v);
                rec(g, v, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        rec(g, SOURCE, &mut vec![SOURCE], &mut out);
        out
    }

    fn brute(g: &AssignmentGraph, cap: f64, required: Option<usize>) -> Option<(f64, f64)> {
        all_paths(g)
            .into_iter()
            .filter(|p| path_is_admissible(g, p))
            .filter(|p| {
                p.windows(2)
                    .all(|w| g.edges[g.find_edge(w[0], w[1]).unwrap()].bottleneck <= cap)
            })
            .filter(|p| {
                required.is_none_or(|e| {
                    p.windows(2)
                        .any(|w| (w[0], w[1]) == (g.edges[e].from, g.edges[e].to))
                })
            })
            .map(|p| g.path_cost(&p))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
    }

    #[test]
    fn unbounded_cap_matches_exhaustive_paths() {
        for reuse in [false, true] {
            let s = toy_scenario(5, 2, 3, 4);
            let cm = CostModel::new(&s);
            let opts = GraphOptions {
                allow_node_reuse: reuse,
                ..GraphOptions::default()
            };
            let g = build_graph(&cm, 16, &opts);
            let got = constrained_shortest_path(&g, f64::INFINITY, None, &SearchLimits::default())
                .unwrap()
                .unwrap();
            let want = brute(&g, f64::INFINITY, None).unwrap();
            assert_eq!((got.cost, got.bottleneck), want);
            assert!(path_is_admissible(&g, &got.path));
        }
    }

    #[test]
    fn capped_and_required_searches_match_exhaustive_paths() {
        let s = toy_scenario(4, 1, 3, 4);
        let cm = CostModel::new(&s);
        let g = build_graph(&cm, 8, &GraphOptions::default());
        let mut caps: Vec<f64> = g.edges.iter().map(|e| e.bottleneck).collect();
        caps.sort_by(f64::total_cmp);
        caps.dedup();
        for &cap in &caps {
            let got = constrained_shortest_path(&g, cap, None, &SearchLimits::default()).unwrap();
            assert_eq!(
                got.map(|r| (r.cost, r.bottleneck)),
                brute(&g, cap, None),
                "cap {cap}"
            );
        }
        for e in 0..g.num_edges() {
            let cap = g.edges[e].bottleneck;
            let got =
                constrained_shortest_path(&g, cap, Some(e), &SearchLimits::default()).unwrap();
            assert_eq!(
                got.map(|r| (r.cost, r.bottleneck)),
                brute(&g, cap, Some(e)),
                "edge {e}"
            );
        }
    }

    #[test]
    fn repeated_server_is_avoided_without_reuse() {
        // server 1 is far faster than the others, so the unconstrained best
        // path would alternate onto it
        let mut s = toy_scenario(6, 1, 3, 5);
        s.nodes[1].compute = 1e16;
        for l in &mut s.links {
            if l.from != 0 && l.to != 0 {
                l.fixed_rate = Some(1e13);
            }
        }
        let cm = CostModel::new(&s);
        let g = build_graph(&cm, 32, &GraphOptions::default());
        let r = constrained_shortest_path(&g, f64::INFINITY, None, &SearchLimits::default())
            .unwrap()
            .unwrap();
        let plan = g.path_plan(&cm, &r.path);
        assert!(plan.has_distinct_servers());
        assert_eq!(Some((r.cost, r.bottleneck)), brute(&g, f64::INFINITY, None));
    }

    #[test]
    fn expansion_limit_is_reported() {
        let mut s = toy_scenario(6, 1, 3, 5);
        s.nodes[1].compute = 1e16;
        let cm = CostModel::new(&s);
        let g = build_graph(&cm, 32, &GraphOptions::default());
        let d = distances(&g, f64::INFINITY);
        let err = branch_and_bound(
            &g,
            f64::INFINITY,
            None,
            &d.backward,
            &SearchLimits { max_expansions: 3 },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::IterationLimit(3)));
    }
}
