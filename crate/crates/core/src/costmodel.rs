//! Analytic per-stage latency, memory demand and feasibility of a plan.
//!
//! Stage model: the client pool runs submodel 1 and each client's forward
//! compute plus uplink is one sequential stage (likewise backward compute
//! plus downlink); every server submodel contributes a forward and a backward
//! compute stage; every server-to-server boundary contributes a forward and a
//! backward transfer stage.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{effective_rate_matrix, DelayMatrix, NodeProfile, Scenario, SplitPlan};

/// Per-client sample counts: `floor(b/M)` each, the remainder on the last client.
pub fn shard_sizes(b: u32, clients: usize) -> Vec<u32> {
    assert!(clients >= 1, "at least one client");
    let m = clients as u32;
    let base = b / m;
    let mut out = vec![base; clients];
    out[clients - 1] = b - (m - 1) * base;
    out
}

/// Number of pipelined intervals after the first micro-batch, `ceil((B-b)/b)`.
pub fn pipeline_factor(minibatch: u32, b: u32) -> u32 {
    (minibatch - b).div_ceil(b)
}

/// Forward compute time of `work` FLOPs per sample over `batch` samples.
pub fn fp_time(node: &NodeProfile, batch: u32, work: f64) -> f64 {
    batch as f64 * node.intensity * work / node.compute + node.init_fp
}

/// Backward compute time; flat up to the node's batch threshold.
pub fn bp_time(node: &NodeProfile, batch: u32, work: f64) -> f64 {
    if batch <= node.bp_threshold {
        node.init_bp
    } else {
        (batch - node.bp_threshold) as f64 * node.intensity * work / node.compute + node.init_bp
    }
}

/// Per-stage times of one (plan, b). Server vectors are indexed by
/// `k - 2` for submodels `k = 2..=K_eff`; link vectors by `k - 2` for the
/// server boundaries `k -> k+1`, `k = 2..K_eff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTimes {
    pub client_fp_plus_uplink: f64,
    pub client_bp_plus_downlink: f64,
    pub client_fp_each: Vec<f64>,
    pub client_bp_each: Vec<f64>,
    pub server_fp: Vec<f64>,
    pub server_bp: Vec<f64>,
    pub link_fp: Vec<f64>,
    pub link_bp: Vec<f64>,
}

impl StageTimes {
    /// Stage times in pipeline order: client forward, then alternating
    /// server forward and forward links, then the backward chain in reverse,
    /// ending with the client backward stage.
    pub fn chain(&self) -> Vec<(StageKind, usize, f64)> {
        let k_eff = self.server_fp.len() + 1;
        let mut out = vec![(StageKind::ClientFpTx, 1, self.client_fp_plus_uplink)];
        for k in 2..=k_eff {
            out.push((StageKind::ServerFp, k, self.server_fp[k - 2]));
            if k < k_eff {
                out.push((StageKind::LinkFp, k, self.link_fp[k - 2]));
            }
        }
        for k in (2..=k_eff).rev() {
            if k < k_eff {
                out.push((StageKind::LinkBp, k, self.link_bp[k - 2]));
            }
            out.push((StageKind::ServerBp, k, self.server_bp[k - 2]));
        }
        out.push((StageKind::ClientBpRx, 1, self.client_bp_plus_downlink));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    ClientFpTx,
    ServerFp,
    LinkFp,
    LinkBp,
    ServerBp,
    ClientBpRx,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::ClientFpTx => "client_fp_tx",
            StageKind::ServerFp => "server_fp",
            StageKind::LinkFp => "link_fp",
            StageKind::LinkBp => "link_bp",
            StageKind::ServerBp => "server_bp",
            StageKind::ClientBpRx => "client_bp_rx",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub t_f: f64,
    pub t_i: f64,
    pub l_t: f64,
    pub micro_batch: u32,
    /// `ceil(B / b)`.
    pub num_micro_batches: u32,
    pub stages: StageTimes,
}

/// A violated constraint found by [`CostModel::check_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MicroBatch {
        b: u32,
        minibatch: u32,
    },
    CutOrder(String),
    SubmodelCount {
        count: usize,
        max: usize,
    },
    Placement(String),
    Adjacent {
        k: usize,
        node: String,
    },
    Memory {
        node: String,
        demand: f64,
        capacity: f64,
    },
    Unreachable {
        from: String,
        to: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MicroBatch { b, minibatch } => {
                write!(f, "micro-batch {b} outside 1..={minibatch}")
            }
            Violation::CutOrder(m) => write!(f, "cut order: {m}"),
            Violation::SubmodelCount { count, max } => {
                write!(f, "{count} submodels exceed K={max}")
            }
            Violation::Placement(m) => write!(f, "placement: {m}"),
            Violation::Adjacent { k, node } => {
                write!(f, "submodels {k} and {} both run on `{node}`", k + 1)
            }
            Violation::Memory {
                node,
                demand,
                capacity,
            } => write!(
                f,
                "memory on `{node}`: demand {demand:.6e} bits exceeds capacity {capacity:.6e} bits"
            ),
            Violation::Unreachable { from, to } => write!(f, "no route from `{from}` to `{to}`"),
        }
    }
}

/// Cost evaluation for one scenario; holds the effective delay matrix.
#[derive(Debug, Clone)]
pub struct CostModel<'a> {
    scn: &'a Scenario,
    delays: DelayMatrix,
    clients: Vec<usize>,
    strict_ti: bool,
}

impl<'a> CostModel<'a> {
    pub fn new(scn: &'a Scenario) -> Self {
        CostModel {
            scn,
            delays: effective_rate_matrix(scn),
            clients: scn.clients().collect(),
            strict_ti: false,
        }
    }

    /// Drops the last submodel's compute from `T_i` (it still counts in `T_f`).
    pub fn with_strict_ti(mut self, strict: bool) -> Self {
        self.strict_ti = strict;
        self
    }

    pub fn strict_ti(&self) -> bool {
        self.strict_ti
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scn
    }

    pub fn delays(&self) -> &DelayMatrix {
        &self.delays
    }

    pub fn clients(&self) -> &[usize] {
        &self.clients
    }

    pub fn shards(&self, b: u32) -> Vec<u32> {
        shard_sizes(b, self.clients.len())
    }

    /// Forward work per sample of layers `first..=last`.
    pub fn fp_work(&self, first: usize, last: usize) -> f64 {
        let hi = self.scn.layer(last).fp_work_cum;
        if first == 1 {
            hi
        } else {
            hi - self.scn.layer(first - 1).fp_work_cum
        }
    }

    pub fn bp_work(&self, first: usize, last: usize) -> f64 {
        let hi = self.scn.layer(last).bp_work_cum;
        if first == 1 {
            hi
        } else {
            hi - self.scn.layer(first - 1).bp_work_cum
        }
    }

    /// Memory bits per sample of layers `first..=last`.
    pub fn memory_per_sample(&self, first: usize, last: usize) -> f64 {
        let hi = self.scn.layer(last).memory_cum();
        if first == 1 {
            hi
        } else {
            hi - self.scn.layer(first - 1).memory_cum()
        }
    }

    /// Activation bits per sample leaving cut layer `cut`.
    pub fn act_per_sample(&self, cut: usize) -> f64 {
        self.scn.layer(cut).act_size
    }

    /// Gradient bits per sample entering cut layer `cut` from above.
    pub fn grad_per_sample(&self, cut: usize) -> f64 {
        self.scn.layer(cut + 1).grad_size
    }

    /// Per-client forward compute plus uplink to `head`, for submodel 1
    /// ending at `cut`.
    pub fn client_fp_each(&self, cut: usize, head: usize, shards: &[u32]) -> Vec<f64> {
        let work = self.fp_work(1, cut);
        let act = self.act_per_sample(cut);
        self.clients
            .iter()
            .zip(shards)
            .map(|(&c, &bm)| {
                fp_time(&self.scn.nodes[c], bm, work) + bm as f64 * act * self.delays.delay(c, head)
            })
            .collect()
    }

    /// Per-client backward compute plus downlink from `head`.
    pub fn client_bp_each(&self, cut: usize, head: usize, shards: &[u32]) -> Vec<f64> {
        let work = self.bp_work(1, cut);
        let grad = self.grad_per_sample(cut);
        self.clients
            .iter()
            .zip(shards)
            .map(|(&c, &bm)| {
                bp_time(&self.scn.nodes[c], bm, work)
                    + bm as f64 * grad * self.delays.delay(head, c)
            })
            .collect()
    }

    pub fn client_fp(&self, cut: usize, head: usize, shards: &[u32]) -> f64 {
        max_of(&self.client_fp_each(cut, head, shards))
    }

    pub fn client_bp(&self, cut: usize, head: usize, shards: &[u32]) -> f64 {
        max_of(&self.client_bp_each(cut, head, shards))
    }

    pub fn server_fp(&self, node: usize, first: usize, last: usize, b: u32) -> f64 {
        fp_time(&self.scn.nodes[node], b, self.fp_work(first, last))
    }

    pub fn server_bp(&self, node: usize, first: usize, last: usize, b: u32) -> f64 {
        bp_time(&self.scn.nodes[node], b, self.bp_work(first, last))
    }

    /// Forward transfer of activations at `cut` from `from` to `to`.
    pub fn link_fp(&self, from: usize, to: usize, cut: usize, b: u32) -> f64 {
        b as f64 * self.act_per_sample(cut) * self.delays.delay(from, to)
    }

    /// Backward transfer of gradients at `cut`, sent from `to` back to `from`.
    pub fn link_bp(&self, from: usize, to: usize, cut: usize, b: u32) -> f64 {
        b as f64 * self.grad_per_sample(cut) * self.delays.delay(to, from)
    }

    /// All stage times of a plan; no feasibility checks.
    pub fn stages(&self, plan: &SplitPlan, b: u32) -> StageTimes {
        let layers = self.scn.num_layers();
        let shards = self.shards(b);
        let k_eff = plan.effective_count();
        let head = plan.host(2);
        let c1 = plan.cut(1);
        let client_fp_each = self.client_fp_each(c1, head, &shards);
        let client_bp_each = self.client_bp_each(c1, head, &shards);
        let mut st = StageTimes {
            client_fp_plus_uplink: max_of(&client_fp_each),
            client_bp_plus_downlink: max_of(&client_bp_each),
            client_fp_each,
            client_bp_each,
            server_fp: Vec::with_capacity(k_eff - 1),
            server_bp: Vec::with_capacity(k_eff - 1),
            link_fp: Vec::with_capacity(k_eff.saturating_sub(2)),
            link_bp: Vec::with_capacity(k_eff.saturating_sub(2)),
        };
        for k in 2..=k_eff {
            let (first, last) = plan.range(k, layers);
            let n = plan.host(k);
            st.server_fp.push(self.server_fp(n, first, last, b));
            st.server_bp.push(self.server_bp(n, first, last, b));
            if k < k_eff {
                let next = plan.host(k + 1);
                st.link_fp.push(self.link_fp(n, next, last, b));
                st.link_bp.push(self.link_bp(n, next, last, b));
            }
        }
        st
    }

    /// `T_f` accumulated edge by edge in path order, so that graph path
    /// sums reproduce it bit for bit.
    pub fn first_latency(&self, st: &StageTimes) -> f64 {
        let k_eff = st.server_fp.len() + 1;
        let mut t = 0.0 + (st.client_fp_plus_uplink + st.client_bp_plus_downlink);
        for k in 2..k_eff {
            let i = k - 2;
            t += ((st.link_fp[i] + st.link_bp[i]) + st.server_fp[i]) + st.server_bp[i];
        }
        let last = k_eff - 2;
        t + (st.server_fp[last] + st.server_bp[last])
    }

    /// Bottleneck stage time.
    pub fn interval(&self, st: &StageTimes) -> f64 {
        let mut t = st.client_fp_plus_uplink.max(st.client_bp_plus_downlink);
        let k_eff = st.server_fp.len() + 1;
        let compute_upto = if self.strict_ti { k_eff - 1 } else { k_eff };
        for k in 2..=compute_upto {
            t = t.max(st.server_fp[k - 2]).max(st.server_bp[k - 2]);
        }
        for (f, b) in st.link_fp.iter().zip(&st.link_bp) {
            t = t.max(*f).max(*b);
        }
        t
    }

    /// Latency report without feasibility checks.
    pub fn report(&self, plan: &SplitPlan, b: u32) -> LatencyReport {
        let stages = self.stages(plan, b);
        let t_f = self.first_latency(&stages);
        let t_i = self.interval(&stages);
        let minibatch = self.scn.minibatch;
        LatencyReport {
            t_f,
            t_i,
            l_t: total_latency(t_f, t_i, minibatch, b),
            micro_batch: b,
            num_micro_batches: minibatch.div_ceil(b),
            stages,
        }
    }

    /// Latency report of a feasible (plan, b); infeasible inputs are errors
    /// naming every violated constraint.
    pub fn evaluate(&self, plan: &SplitPlan, b: u32) -> Result<LatencyReport> {
        let v = self.plan_violations(plan, b);
        if !v.is_empty() {
            let msg: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Error::Infeasible(msg.join("; ")));
        }
        Ok(self.report(plan, b))
    }

    /// Memory demand of submodel `k` in bits: one entry per client for
    /// `k = 1`, a single entry otherwise.
    pub fn memory_bits(&self, plan: &SplitPlan, k: usize, b: u32) -> Vec<f64> {
        let layers = self.scn.num_layers();
        let (first, last) = plan.range(k, layers);
        let per = self.memory_per_sample(first, last);
        if k == 1 {
            self.shards(b).iter().map(|&bm| bm as f64 * per).collect()
        } else {
            vec![b as f64 * per]
        }
    }

    pub fn plan_violations(&self, plan: &SplitPlan, b: u32) -> Vec<Violation> {
        self.check_feasibility(plan.cuts(), plan.placement(), b)
    }

    /// Checks cut order, submodel count, placement, adjacency, aggregate
    /// memory per node, reachability and the micro-batch range.
    pub fn check_feasibility(&self, cuts: &[usize], placement: &[usize], b: u32) -> Vec<Violation> {
        let scn = self.scn;
        let layers = scn.num_layers();
        let mut out = Vec::new();
        if b < 1 || b > scn.minibatch {
            out.push(Violation::MicroBatch {
                b,
                minibatch: scn.minibatch,
            });
        }
        if cuts.is_empty() || cuts.len() != placement.len() {
            out.push(Violation::Placement(format!(
                "{} cuts for {} placed submodels",
                cuts.len(),
                placement.len()
            )));
            return out;
        }
        if cuts.len() + 1 > scn.max_submodels {
            out.push(Violation::SubmodelCount {
                count: cuts.len() + 1,
                max: scn.max_submodels,
            });
        }
        if cuts[0] < 1 || *cuts.last().unwrap() >= layers || cuts.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation::CutOrder(format!(
                "cuts {cuts:?} must increase strictly within 1..{layers}"
            )));
            return out;
        }
        let servers: Vec<bool> = scn
            .nodes
            .iter()
            .map(|n| n.kind == crate::scenario::NodeKind::Server)
            .collect();
        if let Some(&n) = placement
            .iter()
            .find(|&&n| n >= servers.len() || !servers[n])
        {
            out.push(Violation::Placement(format!("node {n} is not a server")));
            return out;
        }
        for (i, w) in placement.windows(2).enumerate() {
            if w[0] == w[1] {
                out.push(Violation::Adjacent {
                    k: i + 2,
                    node: scn.nodes[w[0]].id.clone(),
                });
            }
        }
        let b = b.clamp(1, scn.minibatch);
        let shards = self.shards(b);
        let per_client = self.memory_per_sample(1, cuts[0]);
        for (&c, &bm) in self.clients.iter().zip(&shards) {
            let demand = bm as f64 * per_client;
            if demand > scn.nodes[c].memory {
                out.push(Violation::Memory {
                    node: scn.nodes[c].id.clone(),
                    demand,
                    capacity: scn.nodes[c].memory,
                });
            }
        }
        let mut demand = vec![0.0; scn.nodes.len()];
        for (k, &n) in placement.iter().enumerate() {
            let first = cuts[k] + 1;
            let last = cuts.get(k + 1).copied().unwrap_or(layers);
            demand[n] += b as f64 * self.memory_per_sample(first, last);
        }
        for (n, &d) in demand.iter().enumerate() {
            if d > scn.nodes[n].memory {
                out.push(Violation::Memory {
                    node: scn.nodes[n].id.clone(),
                    demand: d,
                    capacity: scn.nodes[n].memory,
                });
            }
        }
        let mut unreachable = |a: usize, z: usize| {
            if !self.delays.is_reachable(a, z) {
                out.push(Violation::Unreachable {
                    from: scn.nodes[a].id.clone(),
                    to: scn.nodes[z].id.clone(),
                });
            }
        };
        for &c in &self.clients {
            unreachable(c, placement[0]);
            unreachable(placement[0], c);
        }
        for w in placement.windows(2) {
            unreachable(w[0], w[1]);
            unreachable(w[1], w[0]);
        }
        out
    }
}

/// `T_f + ceil((B-b)/b) * T_i`.
pub fn total_latency(t_f: f64, t_i: f64, minibatch: u32, b: u32) -> f64 {
    t_f + pipeline_factor(minibatch, b) as f64 * t_i
}

pub(crate) fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// One-shot evaluation helper.
pub fn evaluate(scn: &Scenario, plan: &SplitPlan, b: u32) -> Result<LatencyReport> {
    CostModel::new(scn).evaluate(plan, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{accumulate_layers, LayerCost, NodeKind};
    use crate::testing::toy_scenario;
    use proptest::prelude::*;

    fn server(f: f64) -> NodeProfile {
        NodeProfile {
            id: "s".into(),
            kind: NodeKind::Server,
            compute: f,
            intensity: 1.0,
            memory: 1e12,
            tx_power: 0.1,
            position: (0.0, 0.0),
            init_fp: 0.001,
            init_bp: 0.001,
            bp_threshold: 32,
        }
    }

    #[test]
    fn shards_follow_the_floor_rule() {
        assert_eq!(shard_sizes(10, 1), vec![10]);
        assert_eq!(shard_sizes(10, 3), vec![3, 3, 4]);
        assert_eq!(shard_sizes(6, 3), vec![2, 2, 2]);
        assert_eq!(shard_sizes(2, 3), vec![0, 0, 2]);
    }

    #[test]
    fn compute_times_by_hand() {
        let s = server(1e12);
        assert!((fp_time(&s, 32, 1e9) - 0.033).abs() < 1e-15);
        assert_eq!(bp_time(&s, 16, 1e9), 0.001);
        assert_eq!(bp_time(&s, 32, 1e9), 0.001);
        assert!((bp_time(&s, 64, 1e9) - 0.033).abs() < 1e-15);
    }

    #[test]
    fn pipeline_factor_examples() {
        assert_eq!(pipeline_factor(512, 20), 25);
        assert_eq!(pipeline_factor(512, 512), 0);
        assert_eq!(pipeline_factor(512, 1), 511);
        assert_eq!(pipeline_factor(10, 3), 3);
    }

    #[test]
    fn unit_rate_transfer() {
        assert_eq!(1e6 * (1.0 / 1e6), 1.0);
    }

    #[test]
    fn single_server_interval_is_the_max_of_four_stages() {
        let s = toy_scenario(4, 1, 1, 2);
        let cm = CostModel::new(&s);
        let plan = SplitPlan::new(&s, vec![2], vec![1]).unwrap();
        let r = cm.evaluate(&plan, 40).unwrap();
        let st = &r.stages;
        assert!(st.link_fp.is_empty());
        let expect = st
            .client_fp_plus_uplink
            .max(st.server_fp[0])
            .max(st.server_bp[0])
            .max(st.client_bp_plus_downlink);
        assert_eq!(r.t_i, expect);
        // hand computation of the client stage: 40 samples, 3e9 FLOPs at 1e11
        let fp = 40.0 * 3e9 / 1e11 + 0.001 + 40.0 * 0.5e6 * 1e-8;
        assert!((st.client_fp_plus_uplink - fp).abs() < 1e-12);
        let full = cm.evaluate(&plan, 64).unwrap();
        assert_eq!(full.l_t, full.t_f);
        assert_eq!(full.num_micro_batches, 1);
    }

    #[test]
    fn two_client_activation_shards() {
        let s = toy_scenario(3, 2, 2, 3);
        let cm = CostModel::new(&s);
        let shards = cm.shards(10);
        assert_eq!(shards, vec![5, 5]);
        // client stage = compute + 5 * phi_c1 bits over the 1e8 bit/s uplink
        let each = cm.client_fp_each(1, 2, &shards);
        let c0 = 5.0 * 1e9 / 1e11 + 0.001 + 5.0 * 1e6 * 1e-8;
        assert!((each[0] - c0).abs() < 1e-12);
        assert_eq!(cm.grad_per_sample(2), s.layer(3).grad_size);
    }

    #[test]
    fn memory_matches_layer_sums() {
        let s = toy_scenario(3, 1, 2, 3);
        let cm = CostModel::new(&s);
        let plan = SplitPlan::new(&s, vec![1, 2], vec![1, 2]).unwrap();
        let costs: Vec<LayerCost> = (0..3).map(crate::testing::toy_layer).collect();
        let layer_mem = |i: usize| {
            // cumulative act/grad at layer i plus cumulative state
            let cum = accumulate_layers(&costs);
            cum[i].memory_cum() - if i == 0 { 0.0 } else { cum[i - 1].memory_cum() }
        };
        assert!((cm.memory_bits(&plan, 1, 4)[0] - 4.0 * layer_mem(0)).abs() < 1e-6);
        assert!((cm.memory_bits(&plan, 2, 4)[0] - 4.0 * layer_mem(1)).abs() < 1e-6);
        assert!((cm.memory_bits(&plan, 3, 4)[0] - 4.0 * layer_mem(2)).abs() < 1e-6);
    }

    #[test]
    fn zero_profile_has_zero_memory() {
        let mut s = toy_scenario(3, 1, 2, 3);
        s.layers = accumulate_layers(&[LayerCost::default(); 3]);
        let cm = CostModel::new(&s);
        let plan = SplitPlan::new(&s, vec![1], vec![1]).unwrap();
        assert_eq!(cm.memory_bits(&plan, 2, 8), vec![0.0]);
        assert_eq!(cm.memory_bits(&plan, 1, 8), vec![0.0]);
    }

    #[test]
    fn feasibility_boundaries() {
        let mut s = toy_scenario(4, 1, 2, 3);
        let cm = CostModel::new(&s);
        assert!(cm.check_feasibility(&[2], &[1], 8).is_empty());
        let v = cm.check_feasibility(&[1, 2], &[1, 1], 8);
        assert!(matches!(v[..], [Violation::Adjacent { k: 2, .. }]), "{v:?}");
        assert!(!cm.check_feasibility(&[2], &[1], 0).is_empty());
        assert!(!cm.check_feasibility(&[2], &[1], 65).is_empty());
        assert!(!cm.check_feasibility(&[3, 2], &[1, 2], 8).is_empty());
        assert!(!cm.check_feasibility(&[2], &[0], 8).is_empty());

        // memory exactly equal to demand is allowed
        let plan = SplitPlan::new(&s, vec![2], vec![1]).unwrap();
        let need = cm.memory_bits(&plan, 2, 8)[0];
        s.nodes[1].memory = need;
        let cm = CostModel::new(&s);
        assert!(cm.plan_violations(&plan, 8).is_empty());
        s.nodes[1].memory = need.next_down();
        let cm = CostModel::new(&s);
        assert!(matches!(
            cm.plan_violations(&plan, 8)[..],
            [Violation::Memory { .. }]
        ));
        assert!(cm.evaluate(&plan, 8).unwrap_err().is_infeasible());
    }

    #[test]
    fn strict_interval_drops_last_compute() {
        let s = toy_scenario(4, 1, 2, 3);
        let plan = SplitPlan::new(&s, vec![1, 2], vec![1, 2]).unwrap();
        let loose = CostModel::new(&s).report(&plan, 64);
        let strict = CostModel::new(&s).with_strict_ti(true).report(&plan, 64);
        assert_eq!(loose.t_f, strict.t_f);
        assert!(strict.t_i <= loose.t_i);
        let st = &loose.stages;
        let expect = st
            .client_fp_plus_uplink
            .max(st.client_bp_plus_downlink)
            .max(st.server_fp[0])
            .max(st.server_bp[0])
            .max(st.link_fp[0])
            .max(st.link_bp[0]);
        assert_eq!(strict.t_i, expect);
    }

    fn random_plan(s: &Scenario, cuts_seed: u64, k: usize) -> SplitPlan {
        let layers = s.num_layers();
        let servers: Vec<usize> = s.servers().collect();
        let k = k.min(layers).min(servers.len() + 1).max(2);
        let mut cuts: Vec<usize> = (1..layers).collect();
        let mut x = cuts_seed;
        while cuts.len() > k - 1 {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            cuts.remove((x >> 33) as usize % cuts.len());
        }
        let placement = servers[..k - 1].to_vec();
        SplitPlan::new(s, cuts, placement).unwrap()
    }

    proptest! {
        #[test]
        fn interval_never_exceeds_first_latency(
            layers in 2usize..9, clients in 1usize..3, servers in 1usize..4,
            seed in any::<u64>(), k in 2usize..5, b in 1u32..=64,
        ) {
            let s = toy_scenario(layers, clients, servers, layers.clamp(2, 5));
            let plan = random_plan(&s, seed, k.min(s.max_submodels));
            let r = CostModel::new(&s).report(&plan, b);
            prop_assert!(r.t_i <= r.t_f);
            prop_assert_eq!(r.l_t, r.t_f + pipeline_factor(64, b) as f64 * r.t_i);
        }

        #[test]
        fn faster_nodes_and_links_never_hurt(
            layers in 2usize..8, seed in any::<u64>(), b in 1u32..=64,
            which in 0usize..4, factor in 1.0f64..4.0,
        ) {
            let s = toy_scenario(layers, 2, 3, layers.min(4));
            let plan = random_plan(&s, seed, 4.min(s.max_submodels));
            let base = CostModel::new(&s).report(&plan, b);
            let mut fast = s.clone();
            if which < 3 {
                fast.nodes[2 + which].compute *= factor;
            } else {
                for l in &mut fast.links {
                    l.fixed_rate = l.fixed_rate.map(|r| r * factor);
                }
            }
            let r = CostModel::new(&fast).report(&plan, b);
            prop_assert!(r.t_f <= base.t_f);
            prop_assert!(r.t_i <= base.t_i);
            prop_assert!(r.l_t <= base.l_t);
        }

        #[test]
        fn doubling_speeds_halves_latency(
            layers in 2usize..8, seed in any::<u64>(), b in 1u32..=64,
        ) {
            let mut s = toy_scenario(layers, 2, 3, layers.min(4));
            for n in &mut s.nodes {
                n.bp_threshold = 0;
                n.init_fp = 0.0;
                n.init_bp = 0.0;
            }
            let plan = random_plan(&s, seed, 4.min(s.max_submodels));
            let base = CostModel::new(&s).report(&plan, b);
            let mut fast = s.clone();
            for n in &mut fast.nodes {
                n.compute *= 2.0;
            }
            for l in &mut fast.links {
                l.fixed_rate = l.fixed_rate.map(|r| r * 2.0);
            }
            let r = CostModel::new(&fast).report(&plan, b);
            prop_assert!((r.t_f - base.t_f / 2.0).abs() <= 1e-12 * base.t_f);
            prop_assert!((r.t_i - base.t_i / 2.0).abs() <= 1e-12 * base.t_i);
        }
    }
}
