//! Lower bounds on the path sum `T_f` at a fixed micro-batch: the
//! unconstrained shortest path, and a linear relaxation over vertex and
//! edge selection variables solved by a bundled dense simplex.

mod lp;
mod simplex;

pub use lp::{Constraint, LinearProgram, Sense};
pub use simplex::{simplex_solve, LpOutcome, LpSolution, SimplexOptions};

use crate::error::{Error, Result};
use crate::mspgraph::{AssignmentGraph, Host, SINK, SOURCE};

/// Tableau cells above which the relaxation is skipped in favor of the
/// combinatorial bound.
pub const MAX_TABLEAU_CELLS: usize = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundProvider {
    Combinatorial,
    Rlt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    pub provider: BoundProvider,
    pub certificate: Option<LpSolution>,
}

/// Shortest source-to-sink path sum ignoring caps and path-level memory.
pub fn combinatorial_bound(g: &AssignmentGraph) -> f64 {
    crate::mspgraph::search_distances(g)[SINK]
}

/// Variable layout of the relaxation built from a graph.
#[derive(Debug, Clone)]
pub struct RltLayout {
    /// Variable of each inner vertex (`usize::MAX` for source and sink).
    pub vertex_var: Vec<usize>,
    /// Variable of each edge.
    pub edge_var: Vec<usize>,
}

/// Linear relaxation of the split/placement choice at the graph's
/// micro-batch. Vertex variables select a layer range on a host, edge
/// variables stand for products of consecutive vertex selections and carry
/// the stage costs.
pub fn build_rlt_lp(g: &AssignmentGraph) -> (LinearProgram, RltLayout) {
    let mut lp = LinearProgram::default();
    let nv = g.num_vertices();
    let mut vertex_var = vec![usize::MAX; nv];
    for (v, vx) in g.vertices.iter().enumerate().skip(2) {
        let host = match vx.host {
            Host::ClientPool => "c".to_string(),
            Host::Server(n) => format!("n{n}"),
        };
        vertex_var[v] = lp.add_var(
            format!("mu_{}_{}_{}_{}", vx.k, host, vx.first, vx.last),
            0.0,
            1.0,
        );
    }
    // flow conservation and the single-client row already cap these at 1
    let edge_var: Vec<usize> = g
        .edges
        .iter()
        .map(|e| lp.add_var(format!("zeta_{}_{}", e.from, e.to), e.cost, f64::INFINITY))
        .collect();

    let clients: Vec<(usize, f64)> = (2..nv)
        .filter(|&v| g.vertices[v].k == 1)
        .map(|v| (vertex_var[v], 1.0))
        .collect();
    lp.add_row("assign", clients, Sense::Eq, 1.0);
    for v in 2..nv {
        let mut inflow: Vec<(usize, f64)> =
            g.in_edges(v).iter().map(|&e| (edge_var[e], 1.0)).collect();
        inflow.push((vertex_var[v], -1.0));
        lp.add_row(format!("in_{v}"), inflow, Sense::Eq, 0.0);
        let mut outflow: Vec<(usize, f64)> = g.out_edges(v).map(|e| (edge_var[e], 1.0)).collect();
        outflow.push((vertex_var[v], -1.0));
        lp.add_row(format!("out_{v}"), outflow, Sense::Eq, 0.0);
    }
    for (i, &n) in g.servers.iter().enumerate() {
        let on: Vec<usize> = (2..nv)
            .filter(|&v| g.vertices[v].k >= 2 && g.vertices[v].host == Host::Server(n))
            .collect();
        if on.is_empty() {
            continue;
        }
        let mem: Vec<(usize, f64)> = on
            .iter()
            .map(|&v| (vertex_var[v], g.vertices[v].demand / g.capacity[i]))
            .collect();
        lp.add_row(format!("mem_{n}"), mem, Sense::Le, 1.0);
        if !g.allow_node_reuse {
            lp.add_row(
                format!("once_{n}"),
                on.iter().map(|&v| (vertex_var[v], 1.0)).collect(),
                Sense::Le,
                1.0,
            );
        }
    }
    (
        lp,
        RltLayout {
            vertex_var,
            edge_var,
        },
    )
}

/// Integral point of the relaxation selecting exactly `path`.
pub fn plan_point(g: &AssignmentGraph, layout: &RltLayout, path: &[usize]) -> Vec<f64> {
    let mut x = vec![
        0.0;
        layout
            .vertex_var
            .iter()
            .filter(|&&v| v != usize::MAX)
            .count()
            + layout.edge_var.len()
    ];
    for &v in path {
        if v != SOURCE && v != SINK {
            x[layout.vertex_var[v]] = 1.0;
        }
    }
    for w in path.windows(2) {
        let e = g.find_edge(w[0], w[1]).expect("edge on path");
        x[layout.edge_var[e]] = 1.0;
    }
    x
}

/// Solves the relaxation; `None` when it is too large for the dense solver.
pub fn solve_rlt(g: &AssignmentGraph) -> Result<Option<(LinearProgram, LpSolution)>> {
    let (lp, _) = build_rlt_lp(g);
    let bounded = lp.upper.iter().filter(|u| u.is_finite()).count();
    let rows = lp.rows.len() + bounded;
    let cells = rows * (lp.num_vars() + 2 * rows);
    if cells > MAX_TABLEAU_CELLS {
        log::warn!(
            "relaxation with {} rows and {} variables is too large; using the combinatorial bound",
            rows,
            lp.num_vars()
        );
        return Ok(None);
    }
    match simplex_solve(&lp, &SimplexOptions::default())? {
        LpOutcome::Optimal(s) => Ok(Some((lp, s))),
        LpOutcome::Infeasible => Err(Error::Infeasible("relaxation has no feasible point".into())),
        LpOutcome::Unbounded => Err(Error::Internal("relaxation is unbounded".into())),
    }
}

/// Relaxation value, shaved by a relative tolerance so that solver rounding
/// cannot push it above the true optimum. Falls back to the combinatorial
/// bound when the relaxation is too large.
pub fn rlt_bound(g: &AssignmentGraph) -> Result<f64> {
    Ok(match solve_rlt(g)? {
        Some((_, s)) => s.value - 1e-9 * s.value.abs(),
        None => combinatorial_bound(g),
    })
}

pub fn lower_bound(g: &AssignmentGraph, provider: BoundProvider) -> Result<LowerBound> {
    match provider {
        BoundProvider::Combinatorial => Ok(LowerBound {
            value: combinatorial_bound(g),
            provider,
            certificate: None,
        }),
        BoundProvider::Rlt => {
            let fast = combinatorial_bound(g);
            Ok(match solve_rlt(g)? {
                Some((_, s)) => LowerBound {
                    value: (s.value - 1e-9 * s.value.abs()).max(fast),
                    provider,
                    certificate: Some(s),
                },
                None => LowerBound {
                    value: fast,
                    provider: BoundProvider::Combinatorial,
                    certificate: None,
                },
            })
        }
    }
}
