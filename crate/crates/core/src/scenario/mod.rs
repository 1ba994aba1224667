//! Problem instances: layer profiles, nodes, links and global parameters.
//!
//! Every quantity stored here is in canonical units (seconds, bits, FLOPs,
//! FLOP/s, watts, hertz, meters). Conversion from human units happens once,
//! when a scenario file is loaded.

mod file;
mod generate;
mod plan;
mod rates;
pub mod units;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{
    load_plan, load_scenario, parse_plan, parse_scenario, save_plan, save_scenario,
    scenario_to_string, PlanFile,
};
pub use generate::{
    generate_scenario, reference_layers, BandwidthRegime, GeneratorSpec, ProfileScale,
};
pub use plan::SplitPlan;
pub use rates::{effective_rate_matrix, shannon_rate, DelayMatrix};

/// Cost profile of one layer. `index` is 1-based; the `*_cum` fields
/// accumulate over layers `1..=index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub index: usize,
    /// Forward work per sample for layers 1..=i (FLOPs).
    pub fp_work_cum: f64,
    /// Backward work per sample for layers 1..=i (FLOPs).
    pub bp_work_cum: f64,
    /// Output activation size of this layer (bits per sample).
    pub act_size: f64,
    /// Activation-gradient size at this layer (bits per sample).
    pub grad_size: f64,
    pub act_size_cum: f64,
    pub grad_size_cum: f64,
    pub opt_state_cum: f64,
    pub param_cum: f64,
}

impl LayerProfile {
    /// Sum of the cumulative memory terms that scale with the batch.
    pub fn memory_cum(&self) -> f64 {
        self.act_size_cum + self.grad_size_cum + self.opt_state_cum + self.param_cum
    }
}

/// Per-layer (non-cumulative) costs, the form used in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerCost {
    pub fp_flops: f64,
    pub bp_flops: f64,
    pub act_bits: f64,
    pub grad_bits: f64,
    pub opt_state_bits: f64,
    pub param_bits: f64,
}

/// Builds cumulative profiles from per-layer costs.
pub fn accumulate_layers(costs: &[LayerCost]) -> Vec<LayerProfile> {
    let mut out = Vec::with_capacity(costs.len());
    let mut acc = LayerCost::default();
    for (i, c) in costs.iter().enumerate() {
        acc.fp_flops += c.fp_flops;
        acc.bp_flops += c.bp_flops;
        acc.act_bits += c.act_bits;
        acc.grad_bits += c.grad_bits;
        acc.opt_state_bits += c.opt_state_bits;
        acc.param_bits += c.param_bits;
        out.push(LayerProfile {
            index: i + 1,
            fp_work_cum: acc.fp_flops,
            bp_work_cum: acc.bp_flops,
            act_size: c.act_bits,
            grad_size: c.grad_bits,
            act_size_cum: acc.act_bits,
            grad_size_cum: acc.grad_bits,
            opt_state_cum: acc.opt_state_bits,
            param_cum: acc.param_bits,
        });
    }
    out
}

/// Inverse of [`accumulate_layers`].
pub fn per_layer_costs(layers: &[LayerProfile]) -> Vec<LayerCost> {
    let mut prev: Option<&LayerProfile> = None;
    layers
        .iter()
        .map(|l| {
            let p = |f: fn(&LayerProfile) -> f64| prev.map_or(0.0, f);
            let c = LayerCost {
                fp_flops: l.fp_work_cum - p(|x| x.fp_work_cum),
                bp_flops: l.bp_work_cum - p(|x| x.bp_work_cum),
                act_bits: l.act_size,
                grad_bits: l.grad_size,
                opt_state_bits: l.opt_state_cum - p(|x| x.opt_state_cum),
                param_bits: l.param_cum - p(|x| x.param_cum),
            };
            prev = Some(l);
            c
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub id: String,
    pub kind: NodeKind,
    /// FLOP/s.
    pub compute: f64,
    /// Dimensionless work-to-time scaling.
    pub intensity: f64,
    /// Bits.
    pub memory: f64,
    /// Watts.
    pub tx_power: f64,
    /// Meters.
    pub position: (f64, f64),
    /// Forward initialization latency (s).
    pub init_fp: f64,
    /// Backward initialization latency (s).
    pub init_bp: f64,
    /// Samples; backward time is flat up to this batch size.
    pub bp_threshold: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub from: usize,
    pub to: usize,
    /// Hz.
    pub bandwidth: f64,
    /// bits/s; overrides the Shannon rate when present.
    pub fixed_rate: Option<f64>,
    /// Meters; overrides the distance derived from positions.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Mesh,
    Line,
    Star,
    Tree,
    Explicit,
}

impl Topology {
    pub const ALL: [Topology; 5] = [
        Topology::Mesh,
        Topology::Line,
        Topology::Star,
        Topology::Tree,
        Topology::Explicit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Mesh => "mesh",
            Topology::Line => "line",
            Topology::Star => "star",
            Topology::Tree => "tree",
            Topology::Explicit => "explicit",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTopology(s.to_string()))
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub layers: Vec<LayerProfile>,
    pub nodes: Vec<NodeProfile>,
    pub links: Vec<LinkProfile>,
    pub topology: Topology,
    /// Mini-batch size B (samples).
    pub minibatch: u32,
    /// Maximum number of submodels K.
    pub max_submodels: usize,
    /// Path-loss exponent.
    pub pathloss: f64,
    /// Noise spectral density (W/Hz).
    pub noise_density: f64,
}

impl Scenario {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer `i` (1-based).
    pub fn layer(&self, i: usize) -> &LayerProfile {
        &self.layers[i - 1]
    }

    pub fn clients(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes_of(NodeKind::Client)
    }

    pub fn servers(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes_of(NodeKind::Server)
    }

    fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| i)
    }

    pub fn num_clients(&self) -> usize {
        self.clients().count()
    }

    pub fn num_servers(&self) -> usize {
        self.servers().count()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Euclidean distance between two nodes, honoring a per-link override.
    pub fn distance(&self, from: usize, to: usize) -> f64 {
        let (ax, ay) = self.nodes[from].position;
        let (bx, by) = self.nodes[to].position;
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Checks every structural invariant; the returned error names the first
    /// violated one.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        let i = self.layers.len();
        if i < 2 {
            return fail(format!("a model needs at least 2 layers, got {i}"));
        }
        for (pos, l) in self.layers.iter().enumerate() {
            if l.index != pos + 1 {
                return fail(format!(
                    "layer at position {} has index {}",
                    pos + 1,
                    l.index
                ));
            }
            let vals = [
                l.fp_work_cum,
                l.bp_work_cum,
                l.act_size,
                l.grad_size,
                l.act_size_cum,
                l.grad_size_cum,
                l.opt_state_cum,
                l.param_cum,
            ];
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return fail(format!(
                    "layer {} has a negative or non-finite value",
                    l.index
                ));
            }
        }
        let (mut act, mut grad) = (0.0, 0.0);
        for l in &self.layers {
            act += l.act_size;
            grad += l.grad_size;
            if l.act_size_cum != act || l.grad_size_cum != grad {
                return fail(format!(
                    "layer {} cumulative activation or gradient size differs from the running sum",
                    l.index
                ));
            }
        }
        for w in self.layers.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let mono = b.fp_work_cum >= a.fp_work_cum
                && b.bp_work_cum >= a.bp_work_cum
                && b.act_size_cum >= a.act_size_cum
                && b.grad_size_cum >= a.grad_size_cum
                && b.opt_state_cum >= a.opt_state_cum
                && b.param_cum >= a.param_cum;
            if !mono {
                return fail(format!("cumulative terms decrease at layer {}", b.index));
            }
        }
        let m = self.num_clients();
        let n = self.num_servers();
        if m < 1 {
            return fail("at least one client is required".into());
        }
        if n < 1 {
            return fail("at least one server is required".into());
        }
        let mut seen = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(prev) = seen.insert(node.id.as_str(), idx) {
                return fail(format!(
                    "duplicate node id `{}` (positions {prev} and {idx})",
                    node.id
                ));
            }
            let ok = node.compute > 0.0
                && node.compute.is_finite()
                && node.memory > 0.0
                && node.intensity >= 0.0
                && node.intensity.is_finite()
                && node.tx_power >= 0.0
                && node.bp_threshold >= 1
                && node.init_fp >= 0.0
                && node.init_bp >= 0.0;
            if !ok {
                return fail(format!(
                    "node `{}` violates f>0, M>0, b_th>=1, t0,t1>=0",
                    node.id
                ));
            }
        }
        for l in &self.links {
            if l.from >= self.nodes.len() || l.to >= self.nodes.len() {
                return fail(format!(
                    "link {}->{} references an unknown node",
                    l.from, l.to
                ));
            }
            if l.from == l.to {
                return fail(format!("self-link on node `{}`", self.nodes[l.from].id));
            }
            match l.fixed_rate {
                Some(r) if !(r > 0.0) => {
                    return fail(format!(
                        "link {}->{} has a non-positive fixed rate",
                        self.nodes[l.from].id, self.nodes[l.to].id
                    ))
                }
                None if !(l.bandwidth > 0.0) => {
                    return fail(format!(
                        "link {}->{} needs a positive bandwidth",
                        self.nodes[l.from].id, self.nodes[l.to].id
                    ))
                }
                _ => {}
            }
        }
        if self.minibatch < 1 {
            return fail("mini-batch B must be at least 1".into());
        }
        if self.max_submodels < 2 || self.max_submodels > i {
            return fail(format!(
                "max_submodels K={} must satisfy 2 <= K <= I={i}",
                self.max_submodels
            ));
        }
        if !(self.noise_density > 0.0) || !self.pathloss.is_finite() {
            return fail("noise density must be positive and path loss finite".into());
        }
        self.check_reachability()
    }

    fn check_reachability(&self) -> Result<()> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            adj[l.from].push(l.to);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = self.clients().collect();
        for &c in &queue {
            seen[c] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match self.servers().find(|&s| !seen[s]) {
            Some(s) => Err(Error::Validation(format!(
                "server `{}` is unreachable from the clients",
                self.nodes[s].id
            ))),
            None => Ok(()),
        }
    }

    /// Returns a copy with every node's compute multiplied by `factor(node)`
    /// and every link pinned to `rate_factor(link) * nominal rate`.
    pub fn perturbed(
        &self,
        mut compute_factor: impl FnMut(usize) -> f64,
        mut rate_factor: impl FnMut(usize) -> f64,
    ) -> Scenario {
        let mut out = self.clone();
        for (i, n) in out.nodes.iter_mut().enumerate() {
            n.compute *= compute_factor(i);
        }
        for (i, l) in out.links.iter_mut().enumerate() {
            let nominal = rates::link_rate(self, &self.links[i]);
            l.fixed_rate = Some(nominal * rate_factor(i));
        }
        out
    }
}
