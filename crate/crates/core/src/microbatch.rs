//! Micro-batch size for a fixed plan.
//!
//! Within a run of `M` consecutive sizes starting at `ceil(B/j)` the
//! pipeline factor is constant, and stepping `b` by the client count `M`
//! grows every client shard by one, so every stage time, memory demand and
//! `T_f` is non-decreasing along `b, b+M, b+2M, ...`. The best size in each
//! run of constant pipeline factor therefore lies in its first `M` values,
//! which makes the candidate set below exact. The closed-form stationary
//! point and the constraint boundaries are added for reporting.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::costmodel::{pipeline_factor, CostModel, LatencyReport};
use crate::error::{Error, Result};
use crate::scenario::SplitPlan;

/// Which side of the backward batch thresholds a micro-batch falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    BothBelow,
    BothAbove,
    /// Clients below their threshold, servers above.
    ClientBelow,
    /// Servers below their threshold, clients above.
    ServerBelow,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::BothBelow,
        Region::BothAbove,
        Region::ClientBelow,
        Region::ServerBelow,
    ];

    fn clients_above(self) -> bool {
        matches!(self, Region::BothAbove | Region::ServerBelow)
    }

    fn servers_above(self) -> bool {
        matches!(self, Region::BothAbove | Region::ClientBelow)
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::BothBelow => "both_below",
            Region::BothAbove => "both_above",
            Region::ClientBelow => "client_below",
            Region::ServerBelow => "server_below",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MicrobatchSolution {
    pub b_star: u32,
    pub region: Region,
    /// Stationary point of the continuous objective in `region`.
    pub b_tilde: f64,
    /// Largest micro-batch all capacity and interval limits allow in `region`.
    pub b_v: u32,
    pub objective: f64,
    pub report: LatencyReport,
}

/// How the pipelined part is priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    /// `T_f(b) + ceil((B-b)/b) * T_1` subject to `T_i(b) <= T_1`.
    Fixed(f64),
    /// `T_f(b) + ceil((B-b)/b) * T_i(b)`, the plan's own latency.
    Realized,
}

pub fn region_of(cm: &CostModel, plan: &SplitPlan, b: u32) -> Region {
    let scn = cm.scenario();
    let clients_above = cm
        .clients()
        .iter()
        .zip(cm.shards(b))
        .any(|(&c, bm)| bm > scn.nodes[c].bp_threshold);
    let servers_above = plan
        .placement()
        .iter()
        .any(|&n| b > scn.nodes[n].bp_threshold);
    match (clients_above, servers_above) {
        (false, false) => Region::BothBelow,
        (true, true) => Region::BothAbove,
        (false, true) => Region::ClientBelow,
        (true, false) => Region::ServerBelow,
    }
}

/// Per-sample growth rate of `T_f` in `region`, with client shards taken as
/// `b/M`. Exact when `M = 1` or `b` is a multiple of `M`.
pub fn slope_of_tf(cm: &CostModel, plan: &SplitPlan, region: Region) -> f64 {
    let scn = cm.scenario();
    let layers = scn.num_layers();
    let d = cm.delays();
    let k_eff = plan.effective_count();
    let mut a = 0.0;
    for k in 2..=k_eff {
        let n = plan.host(k);
        let node = &scn.nodes[n];
        let (first, last) = plan.range(k, layers);
        a += node.intensity * cm.fp_work(first, last) / node.compute;
        if region.servers_above() {
            a += node.intensity * cm.bp_work(first, last) / node.compute;
        }
        if k < k_eff {
            let m = plan.host(k + 1);
            a += cm.act_per_sample(last) * d.delay(n, m) + cm.grad_per_sample(last) * d.delay(m, n);
        }
    }
    let c1 = plan.cut(1);
    let head = plan.host(2);
    let clients = cm.clients().len() as f64;
    let (fw, bw) = (cm.fp_work(1, c1), cm.bp_work(1, c1));
    let (act, grad) = (cm.act_per_sample(c1), cm.grad_per_sample(c1));
    let mut up = f64::NEG_INFINITY;
    let mut down = f64::NEG_INFINITY;
    for &c in cm.clients() {
        let node = &scn.nodes[c];
        up = up.max(node.intensity * fw / node.compute + act * d.delay(c, head));
        let comp = if region.clients_above() {
            node.intensity * bw / node.compute
        } else {
            0.0
        };
        down = down.max(comp + grad * d.delay(head, c));
    }
    a + (up + down) / clients
}

/// Stationary point `sqrt(B * T_1 / A)` of `A*b + T_1*B/b`.
pub fn b_tilde(minibatch: u32, t1: f64, slope: f64) -> f64 {
    (minibatch as f64 * t1 / slope).sqrt()
}

fn floor_cap(x: f64) -> u64 {
    if x.is_nan() || x < 0.0 {
        0
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x.floor() as u64
    }
}

/// Cap from `b * per + init <= t1` (`per` may be zero).
fn linear_cap(t1: f64, init: f64, per: f64) -> u64 {
    if t1 < init {
        0
    } else if per <= 0.0 {
        u64::MAX
    } else {
        floor_cap((t1 - init) / per)
    }
}

/// Backward cap: flat at `init` up to `threshold`, then linear.
fn threshold_cap(t1: f64, init: f64, per: f64, threshold: u32, extra: f64, above: bool) -> u64 {
    if !above {
        // flat region: only the transfer part grows
        return linear_cap(t1, init, extra);
    }
    // (b - th) * per + init + b * extra <= t1
    let denom = per + extra;
    if t1 < init {
        0
    } else if denom <= 0.0 {
        u64::MAX
    } else {
        floor_cap((t1 - init + threshold as f64 * per) / denom)
    }
}

/// Largest `b` allowed by every memory, compute and transfer limit when the
/// interval is capped at `t1`, with the backward-threshold side fixed by
/// `region`. Client limits are on shards and are scaled by `M`.
pub fn boundary_bv(cm: &CostModel, plan: &SplitPlan, t1: f64, region: Region) -> u32 {
    let scn = cm.scenario();
    let layers = scn.num_layers();
    let d = cm.delays();
    let k_eff = plan.effective_count();
    let mut cap = u64::MAX;
    let mut demand = vec![0.0; scn.nodes.len()];
    for k in 2..=k_eff {
        let n = plan.host(k);
        let node = &scn.nodes[n];
        let (first, last) = plan.range(k, layers);
        demand[n] += cm.memory_per_sample(first, last);
        let rate = node.intensity / node.compute;
        cap = cap.min(linear_cap(t1, node.init_fp, rate * cm.fp_work(first, last)));
        if !cm.strict_ti() || k < k_eff {
            cap = cap.min(threshold_cap(
                t1,
                node.init_bp,
                rate * cm.bp_work(first, last),
                node.bp_threshold,
                0.0,
                region.servers_above(),
            ));
        }
        if k < k_eff {
            let m = plan.host(k + 1);
            cap = cap.min(linear_cap(t1, 0.0, cm.act_per_sample(last) * d.delay(n, m)));
            cap = cap.min(linear_cap(
                t1,
                0.0,
                cm.grad_per_sample(last) * d.delay(m, n),
            ));
        }
    }
    for (n, &per) in demand.iter().enumerate() {
        if per > 0.0 {
            cap = cap.min(floor_cap(scn.nodes[n].memory / per));
        }
    }
    let c1 = plan.cut(1);
    let head = plan.host(2);
    let m = cm.clients().len() as u64;
    let mem1 = cm.memory_per_sample(1, c1);
    for &c in cm.clients() {
        let node = &scn.nodes[c];
        let rate = node.intensity / node.compute;
        let mut shard = u64::MAX;
        if mem1 > 0.0 {
            shard = shard.min(floor_cap(node.memory / mem1));
        }
        let up = rate * cm.fp_work(1, c1) + cm.act_per_sample(c1) * d.delay(c, head);
        shard = shard.min(linear_cap(t1, node.init_fp, up));
        shard = shard.min(threshold_cap(
            t1,
            node.init_bp,
            rate * cm.bp_work(1, c1),
            node.bp_threshold,
            cm.grad_per_sample(c1) * d.delay(head, c),
            region.clients_above(),
        ));
        cap = cap.min(shard.saturating_mul(m));
    }
    cap.min(u32::MAX as u64) as u32
}

/// Objective and report at `b`, or `None` when `b` is infeasible.
pub fn objective_at(
    cm: &CostModel,
    plan: &SplitPlan,
    b: u32,
    interval: Interval,
) -> Option<(f64, LatencyReport)> {
    let scn = cm.scenario();
    if b < 1 || b > scn.minibatch || !cm.plan_violations(plan, b).is_empty() {
        return None;
    }
    let report = cm.report(plan, b);
    let xi = pipeline_factor(scn.minibatch, b) as f64;
    match interval {
        Interval::Realized => Some((report.l_t, report)),
        Interval::Fixed(t1) => (report.t_i <= t1).then_some((report.t_f + xi * t1, report)),
    }
}

/// Candidate classes, kept apart so tests can drop one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateClass {
    /// First `M` sizes of every run with a constant pipeline factor.
    RunStarts,
    /// Floor and ceiling of each region's stationary point.
    Stationary,
    /// `b_v`, thresholds and the ends `1` and `B`.
    Boundaries,
}

pub fn candidates(
    cm: &CostModel,
    plan: &SplitPlan,
    interval: Interval,
    classes: &[CandidateClass],
) -> Vec<u32> {
    let scn = cm.scenario();
    let big_b = scn.minibatch;
    let m = cm.clients().len() as u32;
    let mut set = BTreeSet::new();
    let mut push = |b: u64| {
        if b >= 1 && b <= big_b as u64 {
            set.insert(b as u32);
        }
    };
    let t1 = match interval {
        Interval::Fixed(t) => t,
        Interval::Realized => f64::INFINITY,
    };
    for class in classes {
        match class {
            CandidateClass::RunStarts => {
                let mut j = 1;
                while j <= big_b {
                    let start = big_b.div_ceil(j);
                    for r in 0..m {
                        push(start as u64 + r as u64);
                    }
                    // next j with a different ceil(B/j)
                    j = if start == 1 {
                        big_b + 1
                    } else {
                        big_b.div_ceil(start - 1)
                    };
                }
            }
            CandidateClass::Stationary => {
                if t1.is_finite() {
                    for region in Region::ALL {
                        let bt = b_tilde(big_b, t1, slope_of_tf(cm, plan, region));
                        if bt.is_finite() {
                            push(floor_cap(bt));
                            push(floor_cap(bt) + 1);
                        }
                    }
                }
            }
            CandidateClass::Boundaries => {
                push(1);
                push(big_b as u64);
                for region in Region::ALL {
                    push(boundary_bv(cm, plan, t1, region) as u64);
                }
                for &n in plan.placement() {
                    let th = scn.nodes[n].bp_threshold as u64;
                    push(th);
                    push(th + 1);
                }
                for &c in cm.clients() {
                    let th = scn.nodes[c].bp_threshold as u64 * m as u64;
                    push(th);
                    push(th + 1);
                }
            }
        }
    }
    set.into_iter().collect()
}

const ALL_CLASSES: [CandidateClass; 3] = [
    CandidateClass::RunStarts,
    CandidateClass::Stationary,
    CandidateClass::Boundaries,
];

fn best_of(
    cm: &CostModel,
    plan: &SplitPlan,
    interval: Interval,
    bs: impl IntoIterator<Item = u32>,
) -> Result<MicrobatchSolution> {
    let mut best: Option<(u32, f64, LatencyReport)> = None;
    for b in bs {
        if let Some((obj, rep)) = objective_at(cm, plan, b, interval) {
            // strict comparison keeps the smallest b among ties
            if best.as_ref().is_none_or(|(_, o, _)| obj < *o) {
                best = Some((b, obj, rep));
            }
        }
    }
    let (b_star, objective, report) = best.ok_or_else(|| {
        let why = match interval {
            Interval::Fixed(t1) => {
                format!("no micro-batch meets the memory limits with interval at most {t1:e} s")
            }
            Interval::Realized => "no micro-batch meets the memory limits".to_string(),
        };
        Error::Infeasible(why)
    })?;
    let region = region_of(cm, plan, b_star);
    let t1 = match interval {
        Interval::Fixed(t) => t,
        Interval::Realized => report.t_i,
    };
    Ok(MicrobatchSolution {
        b_star,
        region,
        b_tilde: b_tilde(cm.scenario().minibatch, t1, slope_of_tf(cm, plan, region)),
        b_v: boundary_bv(cm, plan, t1, region),
        objective,
        report,
    })
}

/// Closed-form selection read literally: the stationary point of the
/// region, rounded and clamped to `[1, min(b_v, B)]`, keeping only choices
/// that land in their own region.
pub fn theorem_choice(cm: &CostModel, plan: &SplitPlan, t1: f64) -> Option<u32> {
    let big_b = cm.scenario().minibatch;
    let mut best: Option<(u32, f64)> = None;
    for region in Region::ALL {
        let bt = b_tilde(big_b, t1, slope_of_tf(cm, plan, region));
        let top = boundary_bv(cm, plan, t1, region).min(big_b);
        if top < 1 || !bt.is_finite() {
            continue;
        }
        let lo = floor_cap(bt).clamp(1, top as u64) as u32;
        let hi = (floor_cap(bt) + 1).clamp(1, top as u64) as u32;
        for b in [lo, hi] {
            if region_of(cm, plan, b) != region {
                continue;
            }
            if let Some((obj, _)) = objective_at(cm, plan, b, Interval::Fixed(t1)) {
                if best.is_none_or(|(_, o)| obj < o) {
                    best = Some((b, obj));
                }
            }
        }
    }
    best.map(|(b, _)| b)
}

/// Exact best micro-batch for `plan` with the interval capped at `t1`.
pub fn optimal_microbatch(cm: &CostModel, plan: &SplitPlan, t1: f64) -> Result<MicrobatchSolution> {
    let interval = Interval::Fixed(t1);
    let sol = best_of(
        cm,
        plan,
        interval,
        candidates(cm, plan, interval, &ALL_CLASSES),
    )?;
    if let Some(b) = theorem_choice(cm, plan, t1) {
        if b != sol.b_star {
            log::debug!(
                "closed-form choice b={b} differs from exact b={} ({})",
                sol.b_star,
                sol.region.name()
            );
        }
    }
    Ok(sol)
}

/// Exact best micro-batch for `plan` minimizing its own `L_t`.
pub fn plan_optimal_microbatch(cm: &CostModel, plan: &SplitPlan) -> Result<MicrobatchSolution> {
    best_of(
        cm,
        plan,
        Interval::Realized,
        candidates(cm, plan, Interval::Realized, &ALL_CLASSES),
    )
}

/// Ground truth by evaluating every `b` in `1..=B`.
pub fn scan_microbatch(
    cm: &CostModel,
    plan: &SplitPlan,
    interval: Interval,
) -> Result<MicrobatchSolution> {
    best_of(cm, plan, interval, 1..=cm.scenario().minibatch)
}

/// Best micro-batch restricted to the given candidate classes.
pub fn microbatch_from(
    cm: &CostModel,
    plan: &SplitPlan,
    interval: Interval,
    classes: &[CandidateClass],
) -> Result<MicrobatchSolution> {
    best_of(cm, plan, interval, candidates(cm, plan, interval, classes))
}
