//! Small hand-sized fixtures shared by unit and integration tests.

use crate::scenario::{
    accumulate_layers, LayerCost, LinkProfile, NodeKind, NodeProfile, Scenario, Topology,
};

/// Layer `i` (0-based) of the toy profile.
pub fn toy_layer(i: usize) -> LayerCost {
    let f = (i + 1) as f64;
    LayerCost {
        fp_flops: 1e9 * f,
        bp_flops: 2e9 * f,
        act_bits: 1e6 / f,
        grad_bits: 1e6 / f,
        opt_state_bits: 1e5,
        param_bits: 1e5 * f,
    }
}

/// Mesh of `clients` clients and `servers` servers with fixed-rate links
/// (client links 1e8 bit/s, server links 1e9 bit/s), generous memory and
/// distinct server speeds.
pub fn toy_scenario(
    layers: usize,
    clients: usize,
    servers: usize,
    max_submodels: usize,
) -> Scenario {
    let mut nodes = Vec::new();
    let node = |id: String, kind, compute: f64| NodeProfile {
        id,
        kind,
        compute,
        intensity: 1.0,
        memory: 1e15,
        tx_power: 0.2,
        position: (0.0, 0.0),
        init_fp: 0.001,
        init_bp: 0.001,
        bp_threshold: 32,
    };
    for c in 0..clients {
        nodes.push(node(
            format!("c{c}"),
            NodeKind::Client,
            1e11 * (c + 1) as f64,
        ));
    }
    for s in 0..servers {
        nodes.push(node(
            format!("s{s}"),
            NodeKind::Server,
            1e12 * (s + 1) as f64,
        ));
    }
    let mut links = Vec::new();
    for a in 0..nodes.len() {
        for b in 0..nodes.len() {
            let client_pair = a < clients || b < clients;
            if a == b || (a < clients && b < clients) {
                continue;
            }
            links.push(LinkProfile {
                from: a,
                to: b,
                bandwidth: 0.0,
                fixed_rate: Some(if client_pair { 1e8 } else { 1e9 }),
                distance: None,
            });
        }
    }
    let costs: Vec<LayerCost> = (0..layers).map(toy_layer).collect();
    Scenario {
        layers: accumulate_layers(&costs),
        nodes,
        links,
        topology: Topology::Explicit,
        minibatch: 64,
        max_submodels,
        pathloss: 3.5,
        noise_density: 4e-21,
    }
}
