//! Discrete-event simulation of one training round: micro-batches flow
//! through the stage chain of a plan, each stage serving one micro-batch at
//! a time in arrival order with unbounded buffers in between.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::costmodel::{CostModel, StageKind};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, SplitPlan};

/// Smallest multiplier a perturbation may apply.
pub const MIN_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SimMode {
    /// Stage times straight from the cost model.
    #[default]
    Nominal,
    /// Every node's compute and every link's rate scaled by an independent
    /// `max(MIN_FACTOR, 1 + N(0, cv^2))` draw for the run.
    Perturbed {
        cv_compute: f64,
        cv_rate: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub mode: SimMode,
    /// Make the last micro-batch hold only the remaining samples instead of
    /// a full `b`.
    pub ragged_last: bool,
    pub record_events: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrive,
    Start,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub event: EventKind,
    pub time: f64,
    pub stage: usize,
    pub stage_kind: StageKind,
    pub submodel: usize,
    pub micro_batch: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub kind: StageKind,
    pub submodel: usize,
    pub service_time: f64,
    pub busy: f64,
    pub idle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub makespan: f64,
    pub micro_batches: u32,
    pub stages: Vec<StageStats>,
    pub events: Option<Vec<SimEvent>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Completion {
    time: f64,
    stage: usize,
    mb: u32,
}

impl Eq for Completion {}

impl Ord for Completion {
    // reversed for a min-heap on (time, stage, micro-batch)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.stage.cmp(&self.stage))
            .then(other.mb.cmp(&self.mb))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Chain<'a> {
    kinds: &'a [(StageKind, usize)],
    service: &'a [Vec<f64>],
    queues: Vec<VecDeque<u32>>,
    idle: Vec<bool>,
    busy: Vec<f64>,
    heap: BinaryHeap<Completion>,
    log: Option<Vec<SimEvent>>,
}

impl Chain<'_> {
    fn note(&mut self, event: EventKind, time: f64, stage: usize, mb: u32) {
        if let Some(l) = &mut self.log {
            l.push(SimEvent {
                event,
                time,
                stage,
                stage_kind: self.kinds[stage].0,
                submodel: self.kinds[stage].1,
                micro_batch: mb,
            });
        }
    }

    fn arrive(&mut self, stage: usize, mb: u32, now: f64) {
        self.note(EventKind::Arrive, now, stage, mb);
        self.queues[stage].push_back(mb);
    }

    /// Starts the next queued micro-batch if the stage is idle.
    fn pull(&mut self, stage: usize, now: f64) {
        if !self.idle[stage] {
            return;
        }
        let Some(mb) = self.queues[stage].pop_front() else {
            return;
        };
        let d = self.service[mb as usize][stage];
        self.idle[stage] = false;
        self.busy[stage] += d;
        self.note(EventKind::Start, now, stage, mb);
        self.heap.push(Completion {
            time: now + d,
            stage,
            mb,
        });
    }
}

/// Runs `service[mb][stage]` through a chain of unit-capacity FIFO stages.
/// All micro-batches are ready at time zero.
fn run_chain(
    kinds: &[(StageKind, usize)],
    service: &[Vec<f64>],
    record: bool,
) -> (f64, Vec<f64>, Option<Vec<SimEvent>>) {
    let stages = kinds.len();
    let mut c = Chain {
        kinds,
        service,
        queues: vec![VecDeque::new(); stages],
        idle: vec![true; stages],
        busy: vec![0.0; stages],
        heap: BinaryHeap::new(),
        log: record.then(Vec::new),
    };
    let mut makespan = 0.0f64;
    for mb in 0..service.len() as u32 {
        c.arrive(0, mb, 0.0);
    }
    c.pull(0, 0.0);
    while let Some(Completion { time, stage, mb }) = c.heap.pop() {
        c.note(EventKind::Finish, time, stage, mb);
        c.idle[stage] = true;
        if stage + 1 < stages {
            c.arrive(stage + 1, mb, time);
            c.pull(stage + 1, time);
        } else {
            makespan = makespan.max(time);
        }
        c.pull(stage, time);
    }
    (makespan, c.busy, c.log)
}

/// Scenario with compute and link rates scaled by one random draw each.
pub fn perturb(scn: &Scenario, cv_compute: f64, cv_rate: f64, seed: u64) -> Result<Scenario> {
    let bad = |cv: f64| !(cv.is_finite() && cv >= 0.0);
    if bad(cv_compute) || bad(cv_rate) {
        return Err(Error::Validation(format!(
            "coefficients of variation must be finite and non-negative (got {cv_compute}, {cv_rate})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |cv: f64| {
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
        (1.0 + cv * z).max(MIN_FACTOR)
    };
    let compute: Vec<f64> = (0..scn.nodes.len()).map(|_| draw(cv_compute)).collect();
    let rate: Vec<f64> = (0..scn.links.len()).map(|_| draw(cv_rate)).collect();
    Ok(scn.perturbed(|i| compute[i], |i| rate[i]))
}

/// Simulates one round of `plan` at micro-batch `b`.
pub fn simulate(scn: &Scenario, plan: &SplitPlan, b: u32, opts: &SimOptions) -> Result<SimResult> {
    let nominal = CostModel::new(scn);
    let violations = nominal.plan_violations(plan, b);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Infeasible(msg.join("; ")));
    }
    let perturbed;
    let world = match opts.mode {
        SimMode::Nominal => scn,
        SimMode::Perturbed {
            cv_compute,
            cv_rate,
            seed,
        } => {
            perturbed = perturb(scn, cv_compute, cv_rate, seed)?;
            &perturbed
        }
    };
    let cm = CostModel::new(world);
    let minibatch = scn.minibatch;
    let count = minibatch.div_ceil(b);
    let full = cm.stages(plan, b).chain();
    let kinds: Vec<(StageKind, usize)> = full.iter().map(|&(k, s, _)| (k, s)).collect();
    let times: Vec<f64> = full.iter().map(|&(_, _, t)| t).collect();
    let mut service = vec![times.clone(); count as usize];
    let last = minibatch - (count - 1) * b;
    if opts.ragged_last && last != b {
        service[count as usize - 1] = cm
            .stages(plan, last)
            .chain()
            .iter()
            .map(|&(_, _, t)| t)
            .collect();
    }

    let (makespan, busy, events) = run_chain(&kinds, &service, opts.record_events);
    let stages = kinds
        .iter()
        .zip(&times)
        .zip(&busy)
        .map(|((&(kind, submodel), &service_time), &busy)| StageStats {
            kind,
            submodel,
            service_time,
            busy,
            idle: makespan - busy,
        })
        .collect();
    Ok(SimResult {
        makespan,
        micro_batches: count,
        stages,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorSpec};
    use crate::testing::toy_scenario;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn single_micro_batch_takes_first_latency() {
        let s = toy_scenario(5, 2, 3, 4);
        let cm = CostModel::new(&s);
        let plan = SplitPlan::new(&s, vec![1, 3], vec![2, 4]).unwrap();
        let r = simulate(&s, &plan, s.minibatch, &SimOptions::default()).unwrap();
        assert_eq!(r.micro_batches, 1);
        let rep = cm.evaluate(&plan, s.minibatch).unwrap();
        assert!(close(r.makespan, rep.t_f));
        assert!(close(r.makespan, rep.l_t));
    }

    #[test]
    fn hand_checked_three_stage_chain() {
        let chain = [
            (StageKind::ClientFpTx, 1),
            (StageKind::ServerFp, 2),
            (StageKind::ClientBpRx, 1),
        ];
        let service = vec![vec![1.0, 3.0, 2.0]; 3];
        let (makespan, busy, log) = run_chain(&chain, &service, true);
        // 1 + 3 + 2 for the first, then two more slots of the 3 s stage
        assert_eq!(makespan, 12.0);
        assert_eq!(busy, vec![3.0, 9.0, 6.0]);
        let log = log.unwrap();
        assert_eq!(
            log.iter().filter(|e| e.event == EventKind::Finish).count(),
            9
        );
        let order: Vec<u32> = log
            .iter()
            .filter(|e| e.event == EventKind::Finish && e.stage == 2)
            .map(|e| e.micro_batch)
            .collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn zero_noise_matches_nominal() {
        let s = generate_scenario(3, &GeneratorSpec::default()).unwrap();
        let plan = SplitPlan::new(&s, vec![4, 12], vec![2, 4]).unwrap();
        let nominal = simulate(&s, &plan, 32, &SimOptions::default()).unwrap();
        let quiet = SimOptions {
            mode: SimMode::Perturbed {
                cv_compute: 0.0,
                cv_rate: 0.0,
                seed: 9,
            },
            ..SimOptions::default()
        };
        let r = simulate(&s, &plan, 32, &quiet).unwrap();
        assert!((r.makespan - nominal.makespan).abs() <= 1e-12 * nominal.makespan);
    }

    #[test]
    fn noise_is_seeded() {
        let s = toy_scenario(5, 1, 3, 4);
        let plan = SplitPlan::new(&s, vec![2], vec![3]).unwrap();
        let opts = |seed| SimOptions {
            mode: SimMode::Perturbed {
                cv_compute: 0.3,
                cv_rate: 0.3,
                seed,
            },
            ..SimOptions::default()
        };
        let a = simulate(&s, &plan, 8, &opts(1)).unwrap();
        assert_eq!(a, simulate(&s, &plan, 8, &opts(1)).unwrap());
        assert_ne!(
            a.makespan,
            simulate(&s, &plan, 8, &opts(2)).unwrap().makespan
        );
    }

    #[test]
    fn negative_spread_is_rejected() {
        let s = toy_scenario(3, 1, 2, 3);
        assert!(matches!(
            perturb(&s, -0.1, 0.0, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn infeasible_plan_is_refused() {
        let mut s = toy_scenario(4, 1, 2, 3);
        s.nodes[2].memory = 1.0;
        let plan = SplitPlan::new(&s, vec![2], vec![2]).unwrap();
        assert!(matches!(
            simulate(&s, &plan, 4, &SimOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn ragged_last_batch_is_never_slower() {
        let s = toy_scenario(5, 2, 3, 4);
        let plan = SplitPlan::new(&s, vec![1, 3], vec![2, 4]).unwrap();
        let full = simulate(&s, &plan, 10, &SimOptions::default()).unwrap();
        let ragged = SimOptions {
            ragged_last: true,
            ..SimOptions::default()
        };
        let r = simulate(&s, &plan, 10, &ragged).unwrap();
        assert_eq!(r.micro_batches, full.micro_batches);
        assert!(r.makespan <= full.makespan);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn nominal_makespan_is_total_latency(
            seed in 0u64..1000,
            servers in 1usize..6,
            b in 1u32..=512,
            cut_seed in 0usize..1000,
        ) {
            let spec = GeneratorSpec { servers, clients: 1 + seed as usize % 3, ..GeneratorSpec::default() };
            let s = generate_scenario(seed, &spec).unwrap();
            let cm = CostModel::new(&s);
            let k_eff = 2 + cut_seed % servers.min(4);
            let cuts: Vec<usize> = (1..k_eff).map(|i| i * 15 / k_eff).collect();
            let servers: Vec<usize> = s.servers().collect();
            let placement: Vec<usize> = (0..k_eff - 1).map(|i| servers[(cut_seed + i) % servers.len()]).collect();
            let plan = SplitPlan::new(&s, cuts, placement).unwrap();
            let Ok(rep) = cm.evaluate(&plan, b) else { return Ok(()) };
            let opts = SimOptions { record_events: false, ..SimOptions::default() };
            let r = simulate(&s, &plan, b, &opts).unwrap();
            prop_assert!((r.makespan - rep.l_t).abs() < 1e-9, "{} vs {}", r.makespan, rep.l_t);
            prop_assert!(r.makespan >= rep.t_f - 1e-12);
            let total: f64 = r.stages.iter().map(|st| st.service_time).sum();
            let busy: f64 = r.stages.iter().map(|st| st.busy).sum();
            prop_assert!((busy - r.micro_batches as f64 * total).abs() <= 1e-9 * busy.max(1.0));
        }
    }
}
