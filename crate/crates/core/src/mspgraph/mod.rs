//! Assignment graph for the joint split/placement problem at a fixed
//! micro-batch, and its exact bottleneck-aware shortest-path solver.
//!
//! A vertex assigns a contiguous layer range of submodel `k` to a host (the
//! client pool for `k = 1`, a server otherwise). A source-to-sink path is a
//! plan; each edge carries the sum of its stage times and the largest of
//! them, so that the path sum is `T_f` and the path maximum is `T_i`.

mod search;
mod solve;

use std::fmt;

use crate::costmodel::{CostModel, StageKind};
use crate::scenario::SplitPlan;

pub use search::{constrained_shortest_path, PathResult, SearchLimits};
pub use solve::{compare_candidates, solve_msp, BoundKind, MspOptions, MspSolution, SearchMode};

/// Forward shortest distances from the source with no cap.
pub(crate) fn search_distances(g: &AssignmentGraph) -> Vec<f64> {
    search::distances(g, f64::INFINITY).forward
}

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Host {
    ClientPool,
    Server(usize),
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Host::ClientPool => f.write_str("clients"),
            Host::Server(n) => write!(f, "node {n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    /// Submodel index, 1-based; 0 for the source and sink.
    pub k: usize,
    pub host: Host,
    pub first: usize,
    pub last: usize,
    /// Forward and backward compute time of a server vertex at this `b`.
    pub server_fp: f64,
    pub server_bp: f64,
    /// Memory demand in bits of a server vertex at this `b`.
    pub demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Source,
    Client,
    Middle,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    /// Sum of the edge's stage times.
    pub cost: f64,
    /// Largest stage time that counts toward the pipeline interval.
    pub bottleneck: f64,
    /// Client forward/backward stage, or link forward/backward stage.
    pub fwd: f64,
    pub bwd: f64,
}

/// Restricts the vertex set, used by the random-cut and random-placement
/// baselines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Restriction {
    /// Fixed cut layers (fixes the submodel count).
    pub cuts: Option<Vec<usize>>,
    /// Fixed server sequence for submodels `2..` (fixes the submodel count).
    pub nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphOptions {
    pub allow_node_reuse: bool,
    pub restriction: Restriction,
}

/// Layered decision graph at one micro-batch size.
#[derive(Debug, Clone)]
pub struct AssignmentGraph {
    pub micro_batch: u32,
    pub num_layers: usize,
    pub max_submodels: usize,
    pub allow_node_reuse: bool,
    /// Servers in scenario order; bit `i` of a server mask refers to `servers[i]`.
    pub servers: Vec<usize>,
    /// Memory capacity of `servers[i]`.
    pub capacity: Vec<f64>,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    out_start: Vec<usize>,
    in_edges: Vec<Vec<usize>>,
    /// Per-vertex memory feasibility report for diagnostics.
    pub dropped_for_memory: usize,
    pub strict_ti: bool,
}

impl AssignmentGraph {
    pub fn out_edges(&self, v: usize) -> std::ops::Range<usize> {
        self.out_start[v]..self.out_start[v + 1]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Position of a server node in `servers`.
    pub fn server_slot(&self, node: usize) -> usize {
        self.servers.binary_search(&node).expect("server node")
    }

    /// Component stages of an edge, in pipeline terms.
    pub fn edge_stages(&self, e: usize) -> Vec<(StageKind, f64)> {
        let edge = &self.edges[e];
        let tail = &self.vertices[edge.from];
        match edge.kind {
            EdgeKind::Source => Vec::new(),
            EdgeKind::Client => vec![
                (StageKind::ClientFpTx, edge.fwd),
                (StageKind::ClientBpRx, edge.bwd),
            ],
            EdgeKind::Middle => vec![
                (StageKind::LinkFp, edge.fwd),
                (StageKind::LinkBp, edge.bwd),
                (StageKind::ServerFp, tail.server_fp),
                (StageKind::ServerBp, tail.server_bp),
            ],
            EdgeKind::Terminal => vec![
                (StageKind::ServerFp, tail.server_fp),
                (StageKind::ServerBp, tail.server_bp),
            ],
        }
    }

    /// Converts a source-to-sink vertex path into a plan.
    pub fn path_plan(&self, cm: &CostModel, path: &[usize]) -> SplitPlan {
        let inner = &path[1..path.len() - 1];
        let cuts: Vec<usize> = inner[..inner.len() - 1]
            .iter()
            .map(|&v| self.vertices[v].last)
            .collect();
        let placement: Vec<usize> = inner[1..]
            .iter()
            .map(|&v| match self.vertices[v].host {
                Host::Server(n) => n,
                Host::ClientPool => unreachable!("client vertex after the first"),
            })
            .collect();
        SplitPlan::new(cm.scenario(), cuts, placement).expect("graph paths are canonical plans")
    }

    /// Edge index of `u -> v`.
    pub fn find_edge(&self, u: usize, v: usize) -> Option<usize> {
        self.out_edges(u).find(|&e| self.edges[e].to == v)
    }

    /// Vertex path of a plan, if all its vertices and edges exist.
    pub fn plan_path(&self, plan: &SplitPlan) -> Option<Vec<usize>> {
        let k_eff = plan.effective_count();
        let mut path = vec![SOURCE];
        for k in 1..=k_eff {
            let (first, last) = plan.range(k, self.num_layers);
            let host = if k == 1 {
                Host::ClientPool
            } else {
                Host::Server(plan.host(k))
            };
            let v = self
                .vertices
                .iter()
                .position(|x| x.k == k && x.host == host && x.first == first && x.last == last)?;
            path.push(v);
        }
        path.push(SINK);
        for w in path.windows(2) {
            self.find_edge(w[0], w[1])?;
        }
        Some(path)
    }

    /// Path sum in source-to-sink order and path bottleneck.
    pub fn path_cost(&self, path: &[usize]) -> (f64, f64) {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for w in path.windows(2) {
            let e = &self.edges[self.find_edge(w[0], w[1]).expect("edge on path")];
            sum += e.cost;
            max = max.max(e.bottleneck);
        }
        (sum, max)
    }
}

fn vertex_allowed(
    r: &Restriction,
    layers: usize,
    k: usize,
    host: Host,
    first: usize,
    last: usize,
) -> bool {
    if let Some(cuts) = &r.cuts {
        let k_eff = cuts.len() + 1;
        if k > k_eff {
            return false;
        }
        let f = if k == 1 { 1 } else { cuts[k - 2] + 1 };
        let l = if k == k_eff { layers } else { cuts[k - 1] };
        if first != f || last != l {
            return false;
        }
    }
    if let (Some(nodes), Host::Server(n)) = (&r.nodes, host) {
        let k_eff = nodes.len() + 1;
        if k > k_eff || nodes[k - 2] != n {
            return false;
        }
        if k == k_eff && last != layers {
            return false;
        }
    }
    true
}

/// Builds the assignment graph at micro-batch `b`. Vertices whose own memory
/// demand exceeds the host's capacity are left out, as are edges between
/// hosts with no route.
pub fn build_graph(cm: &CostModel, b: u32, opts: &GraphOptions) -> AssignmentGraph {
    let scn = cm.scenario();
    let layers = scn.num_layers();
    let kmax = scn.max_submodels.min(layers);
    let servers: Vec<usize> = scn.servers().collect();
    assert!(servers.len() <= 64, "at most 64 servers are supported");
    let shards = cm.shards(b);
    let delays = cm.delays();
    let r = &opts.restriction;
    let fixed_k = r
        .cuts
        .as_ref()
        .map(|c| c.len() + 1)
        .or_else(|| r.nodes.as_ref().map(|n| n.len() + 1));

    let blank = Vertex {
        k: 0,
        host: Host::ClientPool,
        first: 0,
        last: 0,
        server_fp: 0.0,
        server_bp: 0.0,
        demand: 0.0,
    };
    let mut vertices = vec![blank, blank];
    let mut dropped = 0;
    // group[k][first] = vertex ids of submodel k starting at `first`
    let mut group: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); layers + 2]; kmax + 1];

    let client_mem_ok = |last: usize| {
        let per = cm.memory_per_sample(1, last);
        cm.clients()
            .iter()
            .zip(&shards)
            .all(|(&c, &bm)| bm as f64 * per <= scn.nodes[c].memory)
    };
    for last in 1..layers {
        if !vertex_allowed(r, layers, 1, Host::ClientPool, 1, last) {
            continue;
        }
        if !client_mem_ok(last) {
            dropped += 1;
            continue;
        }
        group[1][1].push(vertices.len());
        vertices.push(Vertex {
            k: 1,
            host: Host::ClientPool,
            first: 1,
            last,
            ..blank
        });
    }
    for k in 2..=kmax {
        for &n in &servers {
            for first in k..=layers {
                for last in first..=layers {
                    let host = Host::Server(n);
                    if !vertex_allowed(r, layers, k, host, first, last) {
                        continue;
                    }
                    // a vertex that cannot finish the model within K submodels is useless
                    if last < layers && k == kmax {
                        continue;
                    }
                    let demand = b as f64 * cm.memory_per_sample(first, last);
                    if demand > scn.nodes[n].memory {
                        dropped += 1;
                        continue;
                    }
                    group[k][first].push(vertices.len());
                    vertices.push(Vertex {
                        k,
                        host,
                        first,
                        last,
                        server_fp: cm.server_fp(n, first, last, b),
                        server_bp: cm.server_bp(n, first, last, b),
                        demand,
                    });
                }
            }
        }
    }

    let strict = cm.strict_ti();
    let mut edges = Vec::new();
    let mut out_start = vec![0; vertices.len() + 1];
    // the source has out-edges to every client vertex; the sink has none
    for &v in &group[1][1] {
        edges.push(Edge {
            from: SOURCE,
            to: v,
            kind: EdgeKind::Source,
            cost: 0.0,
            bottleneck: 0.0,
            fwd: 0.0,
            bwd: 0.0,
        });
    }
    out_start[1] = edges.len();
    out_start[2] = edges.len();
    for u in 2..vertices.len() {
        let vu = vertices[u];
        if vu.k == 1 {
            let cut = vu.last;
            for &v in &group[2][cut + 1] {
                let Host::Server(head) = vertices[v].host else {
                    unreachable!()
                };
                let ok = cm
                    .clients()
                    .iter()
                    .all(|&c| delays.is_reachable(c, head) && delays.is_reachable(head, c));
                if !ok {
                    continue;
                }
                let fwd = cm.client_fp(cut, head, &shards);
                let bwd = cm.client_bp(cut, head, &shards);
                edges.push(Edge {
                    from: u,
                    to: v,
                    kind: EdgeKind::Client,
                    cost: fwd + bwd,
                    bottleneck: fwd.max(bwd),
                    fwd,
                    bwd,
                });
            }
        } else {
            let Host::Server(n) = vu.host else {
                unreachable!()
            };
            if vu.last == layers {
                if fixed_k.is_none_or(|kk| kk == vu.k) {
                    let bottleneck = if strict {
                        0.0
                    } else {
                        vu.server_fp.max(vu.server_bp)
                    };
                    edges.push(Edge {
                        from: u,
                        to: SINK,
                        kind: EdgeKind::Terminal,
                        cost: vu.server_fp + vu.server_bp,
                        bottleneck,
                        fwd: 0.0,
                        bwd: 0.0,
                    });
                }
            } else if vu.k < kmax {
                for &v in &group[vu.k + 1][vu.last + 1] {
                    let Host::Server(m) = vertices[v].host else {
                        unreachable!()
                    };
                    if m == n || !delays.is_reachable(n, m) || !delays.is_reachable(m, n) {
                        continue;
                    }
                    let fwd = cm.link_fp(n, m, vu.last, b);
                    let bwd = cm.link_bp(n, m, vu.last, b);
                    edges.push(Edge {
                        from: u,
                        to: v,
                        kind: EdgeKind::Middle,
                        cost: ((fwd + bwd) + vu.server_fp) + vu.server_bp,
                        bottleneck: fwd.max(bwd).max(vu.server_fp).max(vu.server_bp),
                        fwd,
                        bwd,
                    });
                }
            }
        }
        out_start[u + 1] = edges.len();
    }
    let mut in_edges = vec![Vec::new(); vertices.len()];
    for (i, e) in edges.iter().enumerate() {
        in_edges[e.to].push(i);
    }
    AssignmentGraph {
        micro_batch: b,
        num_layers: layers,
        max_submodels: kmax,
        allow_node_reuse: opts.allow_node_reuse,
        capacity: servers.iter().map(|&n| scn.nodes[n].memory).collect(),
        servers,
        vertices,
        edges,
        out_start,
        in_edges,
        dropped_for_memory: dropped,
        strict_ti: strict,
    }
}
