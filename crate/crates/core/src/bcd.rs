//! Alternating optimization of (split, placement) and micro-batch size, and
//! the comparison schemes built on the same machinery.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::microbatch::{optimal_microbatch, plan_optimal_microbatch};
use crate::mspgraph::{solve_msp, MspOptions, MspSolution, Restriction};
use crate::scenario::SplitPlan;

/// How the micro-batch half-step prices the pipelined part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MicroStep {
    /// Minimize the plan's own `L_t` over `b`.
    #[default]
    PlanOptimal,
    /// Minimize `T_f(b) + ceil((B-b)/b) * T_1` with `T_1` frozen at the
    /// interval of the current plan and `b`.
    FixedInterval,
}

#[derive(Debug, Clone)]
pub struct BcdOptions {
    /// Stop when `L_t` changes by less than this many seconds.
    pub tolerance: f64,
    pub initial_b: u32,
    pub max_iters: usize,
    pub micro_step: MicroStep,
    pub msp: MspOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            tolerance: 0.01,
            initial_b: 20,
            max_iters: 50,
            micro_step: MicroStep::default(),
            msp: MspOptions::pruned(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BcdIteration {
    pub plan: SplitPlan,
    pub b: u32,
    pub t_1: f64,
    pub l_t: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct BcdTrace {
    pub iterations: Vec<BcdIteration>,
    pub converged: bool,
    pub solution: MspSolution,
    pub b: u32,
}

impl BcdTrace {
    pub fn l_t(&self) -> f64 {
        self.solution.report.l_t
    }
}

fn msp_with_fallback(cm: &CostModel, b: u32, opts: &MspOptions) -> Result<(MspSolution, u32)> {
    match solve_msp(cm, b, opts) {
        Ok(s) => Ok((s, b)),
        // memory scales with b: the smallest micro-batch is the last resort
        Err(e) if e.is_infeasible() && b > 1 => match solve_msp(cm, 1, opts) {
            Ok(s) => Ok((s, 1)),
            Err(_) => Err(e),
        },
        Err(e) => Err(e),
    }
}

/// Alternates the placement search at fixed `b` with the micro-batch step at
/// fixed plan until `L_t` settles.
pub fn solve_joint(cm: &CostModel, opts: &BcdOptions) -> Result<BcdTrace> {
    let scn = cm.scenario();
    let b0 = opts.initial_b.clamp(1, scn.minibatch);
    let start = Instant::now();
    let (mut sol, mut b) = msp_with_fallback(cm, b0, &opts.msp)?;
    let mut iterations = vec![BcdIteration {
        plan: sol.plan.clone(),
        b,
        t_1: sol.report.t_i,
        l_t: sol.report.l_t,
        wall_time: start.elapsed(),
    }];
    let mut converged = false;
    while iterations.len() < opts.max_iters {
        let next_b = match opts.micro_step {
            MicroStep::PlanOptimal => plan_optimal_microbatch(cm, &sol.plan)?.b_star,
            MicroStep::FixedInterval => optimal_microbatch(cm, &sol.plan, sol.report.t_i)?.b_star,
        };
        if next_b == b {
            converged = true;
            break;
        }
        let next = solve_msp(cm, next_b, &opts.msp)?;
        let prev = sol.report.l_t;
        log::debug!("b {b} -> {next_b}: L_t {prev:e} -> {:e}", next.report.l_t);
        sol = next;
        b = next_b;
        iterations.push(BcdIteration {
            plan: sol.plan.clone(),
            b,
            t_1: sol.report.t_i,
            l_t: sol.report.l_t,
            wall_time: start.elapsed(),
        });
        if (prev - sol.report.l_t).abs() < opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(BcdTrace {
        iterations,
        converged,
        solution: sol,
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Bcd,
    RcOp,
    RpOc,
    NoPipeline,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Bcd, Scheme::RcOp, Scheme::RpOc, Scheme::NoPipeline];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bcd => "bcd",
            Scheme::RcOp => "rc_op",
            Scheme::RpOc => "rp_oc",
            Scheme::NoPipeline => "no_pipeline",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown scheme `{s}` (expected bcd, rc_op, rp_oc or no_pipeline)"
                ))
            })
    }
}

const MAX_DRAWS: usize = 1000;

fn max_parts(cm: &CostModel) -> usize {
    let scn = cm.scenario();
    scn.max_submodels
        .min(scn.num_layers())
        .min(scn.num_servers() + 1)
}

fn random_cuts(rng: &mut ChaCha8Rng, layers: usize, parts: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = sample(rng, layers - 1, parts - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    cuts
}

/// Runs one scheme. Random schemes redraw their fixed half until the rest
/// of the problem is feasible.
pub fn solve_scheme(
    cm: &CostModel,
    scheme: Scheme,
    seed: u64,
    opts: &BcdOptions,
) -> Result<BcdTrace> {
    let scn = cm.scenario();
    match scheme {
        Scheme::Bcd => solve_joint(cm, opts),
        Scheme::NoPipeline => {
            let start = Instant::now();
            let sol = solve_msp(cm, scn.minibatch, &opts.msp)?;
            Ok(BcdTrace {
                iterations: vec![BcdIteration {
                    plan: sol.plan.clone(),
                    b: scn.minibatch,
                    t_1: sol.report.t_i,
                    l_t: sol.report.l_t,
                    wall_time: start.elapsed(),
                }],
                converged: true,
                solution: sol,
                b: scn.minibatch,
            })
        }
        Scheme::RcOp | Scheme::RpOc => {
            let top = max_parts(cm);
            if top < 2 {
                return Err(Error::Infeasible(
                    "the model cannot be split across any server".into(),
                ));
            }
            let servers: Vec<usize> = scn.servers().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut last_err = None;
            for _ in 0..MAX_DRAWS {
                let parts = rng.random_range(2..=top);
                let restriction = if scheme == Scheme::RcOp {
                    Restriction {
                        cuts: Some(random_cuts(&mut rng, scn.num_layers(), parts)),
                        nodes: None,
                    }
                } else {
                    let pick = sample(&mut rng, servers.len(), parts - 1);
                    Restriction {
                        cuts: None,
                        nodes: Some(pick.into_iter().map(|i| servers[i]).collect()),
                    }
                };
                let mut o = opts.clone();
                o.msp.graph.restriction = restriction;
                match solve_joint(cm, &o) {
                    Ok(t) => return Ok(t),
                    Err(e) if e.is_infeasible() => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Infeasible(format!(
                "{} found no feasible random draw in {MAX_DRAWS} attempts (last: {})",
                scheme.name(),
                last_err.map(|e| e.to_string()).unwrap_or_default()
            )))
        }
    }
}
