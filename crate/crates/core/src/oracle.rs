//! Brute-force ground truth for small instances: every (cuts, placement)
//! pair at a fixed micro-batch, or every pair at every micro-batch.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::costmodel::{CostModel, LatencyReport};
use crate::error::{Error, Result};
use crate::mspgraph::compare_candidates;
use crate::scenario::{Scenario, SplitPlan};

pub const DEFAULT_MAX_EVALUATIONS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Largest number of (plan, b) evaluations attempted.
    pub max_evaluations: u128,
    pub allow_node_reuse: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            allow_node_reuse: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub plan: SplitPlan,
    pub b: u32,
    pub report: LatencyReport,
    /// Number of (plan, b) pairs evaluated.
    pub evaluated: u128,
    /// How many of those were feasible.
    pub feasible: u128,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn falling(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i))
}

/// Option count of the joint problem for `layers` layers on `nodes` hosts:
/// `sum_{k=2..=nodes} B * C(I-1, k-1) * k! * C(nodes, k)`.
pub fn option_count_estimate(minibatch: u32, layers: usize, nodes: usize) -> u128 {
    let (i, n) = (layers as u128, nodes as u128);
    (2..=n)
        .map(|k| {
            (minibatch as u128)
                .saturating_mul(binomial(i.saturating_sub(1), k - 1))
                .saturating_mul(falling(k, k))
                .saturating_mul(binomial(n, k))
        })
        .fold(0u128, u128::saturating_add)
}

/// Exact number of plans [`enumerate_plans`] yields.
pub fn plan_count(scn: &Scenario, allow_node_reuse: bool) -> u128 {
    let layers = scn.num_layers() as u128;
    let n = scn.servers().count() as u128;
    let kmax = (scn.max_submodels as u128).min(layers);
    (2..=kmax)
        .map(|k| {
            let placements = if allow_node_reuse {
                n.saturating_mul((n.saturating_sub(1)).saturating_pow((k - 2) as u32))
            } else {
                falling(n, k - 1)
            };
            binomial(layers - 1, k - 1).saturating_mul(placements)
        })
        .fold(0u128, u128::saturating_add)
}

/// All plans: strictly increasing cuts, and server sequences that are fully
/// distinct, or only consecutively distinct when reuse is allowed.
pub fn enumerate_plans(scn: &Scenario, allow_node_reuse: bool) -> Vec<SplitPlan> {
    let layers = scn.num_layers();
    let servers: Vec<usize> = scn.servers().collect();
    let kmax = scn.max_submodels.min(layers);
    let mut out = Vec::new();

    fn cut_sets(
        layers: usize,
        need: usize,
        from: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if need == 0 {
            out.push(cur.clone());
            return;
        }
        for c in from..=layers - need {
            cur.push(c);
            cut_sets(layers, need - 1, c + 1, cur, out);
            cur.pop();
        }
    }
    fn placements(
        servers: &[usize],
        need: usize,
        reuse: bool,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == need {
            out.push(cur.clone());
            return;
        }
        for &n in servers {
            let clash = if reuse {
                cur.last() == Some(&n)
            } else {
                cur.contains(&n)
            };
            if !clash {
                cur.push(n);
                placements(servers, need, reuse, cur, out);
                cur.pop();
            }
        }
    }

    for k in 2..=kmax {
        let mut cuts = Vec::new();
        cut_sets(layers, k - 1, 1, &mut Vec::new(), &mut cuts);
        let mut places = Vec::new();
        placements(
            &servers,
            k - 1,
            allow_node_reuse,
            &mut Vec::new(),
            &mut places,
        );
        for c in &cuts {
            for p in &places {
                out.push(
                    SplitPlan::new(scn, c.clone(), p.clone())
                        .expect("enumerated plan is canonical"),
                );
            }
        }
    }
    out
}

fn check_limit(estimated: u128, limits: &OracleLimits) -> Result<()> {
    if estimated > limits.max_evaluations {
        return Err(Error::EnumerationLimit {
            estimated,
            limit: limits.max_evaluations,
        });
    }
    Ok(())
}

struct Found {
    plan: SplitPlan,
    report: LatencyReport,
    feasible: u128,
}

fn best_at(cm: &CostModel, plans: &[SplitPlan], b: u32) -> Option<Found> {
    let mut best: Option<(usize, LatencyReport)> = None;
    let mut feasible = 0;
    for (i, plan) in plans.iter().enumerate() {
        let Ok(r) = cm.evaluate(plan, b) else {
            continue;
        };
        feasible += 1;
        let better = best.as_ref().is_none_or(|(j, br)| {
            compare_candidates((plan, r.l_t, r.t_i), (&plans[*j], br.l_t, br.t_i)) == Ordering::Less
        });
        if better {
            best = Some((i, r));
        }
    }
    best.map(|(i, report)| Found {
        plan: plans[i].clone(),
        report,
        feasible,
    })
}

/// Best plan at micro-batch `b` under the planner's tie-break.
pub fn enumerate_msp(cm: &CostModel, b: u32, limits: &OracleLimits) -> Result<OracleResult> {
    let scn = cm.scenario();
    if b < 1 || b > scn.minibatch {
        return Err(Error::Validation(format!(
            "micro-batch {b} outside 1..={}",
            scn.minibatch
        )));
    }
    let count = plan_count(scn, limits.allow_node_reuse);
    check_limit(count, limits)?;
    let plans = enumerate_plans(scn, limits.allow_node_reuse);
    match best_at(cm, &plans, b) {
        Some(f) => Ok(OracleResult {
            plan: f.plan,
            b,
            report: f.report,
            evaluated: plans.len() as u128,
            feasible: f.feasible,
        }),
        None => Err(Error::Infeasible(format!(
            "no plan is feasible at micro-batch {b}"
        ))),
    }
}

/// Best (plan, b) over every micro-batch in `1..=B`. Ties go to the smaller
/// micro-batch.
pub fn enumerate_joint(cm: &CostModel, limits: &OracleLimits) -> Result<OracleResult> {
    let scn = cm.scenario();
    let count = plan_count(scn, limits.allow_node_reuse);
    check_limit(count.saturating_mul(scn.minibatch as u128), limits)?;
    let plans = enumerate_plans(scn, limits.allow_node_reuse);
    let per_b: Vec<(u32, Option<Found>)> = (1..=scn.minibatch)
        .into_par_iter()
        .map(|b| (b, best_at(cm, &plans, b)))
        .collect();
    let feasible: u128 = per_b
        .iter()
        .filter_map(|(_, f)| f.as_ref())
        .map(|f| f.feasible)
        .sum();
    let mut best: Option<(u32, Found)> = None;
    for (b, f) in per_b {
        let Some(f) = f else { continue };
        let better = best
            .as_ref()
            .is_none_or(|(_, cur)| f.report.l_t.total_cmp(&cur.report.l_t) == Ordering::Less);
        if better {
            best = Some((b, f));
        }
    }
    match best {
        Some((b, f)) => Ok(OracleResult {
            plan: f.plan,
            b,
            report: f.report,
            evaluated: plans.len() as u128 * scn.minibatch as u128,
            feasible,
        }),
        None => Err(Error::Infeasible(
            "no plan is feasible at any micro-batch".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcd::{solve_joint, BcdOptions};
    use crate::mspgraph::{solve_msp, MspOptions};
    use crate::testing::toy_scenario;

    #[test]
    fn estimate_matches_the_worked_example() {
        // 16 layers on at most five hosts at B = 256
        assert_eq!(option_count_estimate(256, 16, 5), 57_600_000);
    }

    #[test]
    fn three_layers_two_servers_count() {
        let mut s = toy_scenario(3, 1, 2, 2);
        s.minibatch = 8;
        assert_eq!(plan_count(&s, false) * 8, option_count_estimate(8, 3, 2));
        assert_eq!(enumerate_plans(&s, false).len(), 4);
    }

    #[test]
    fn counts_match_enumeration() {
        for (layers, servers, k) in [(4, 3, 3), (6, 4, 4), (5, 2, 5), (8, 4, 4)] {
            let s = toy_scenario(layers, 1, servers, k);
            for reuse in [false, true] {
                let plans = enumerate_plans(&s, reuse);
                assert_eq!(plans.len() as u128, plan_count(&s, reuse));
                let mut sorted = plans.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), plans.len());
                assert!(reuse || plans.iter().all(|p| p.has_distinct_servers()));
            }
        }
    }

    #[test]
    fn single_plan_scenario_returns_it() {
        let s = toy_scenario(2, 1, 1, 2);
        let cm = CostModel::new(&s);
        let r = enumerate_msp(&cm, 4, &OracleLimits::default()).unwrap();
        assert_eq!(r.plan, SplitPlan::new(&s, vec![1], vec![1]).unwrap());
        assert_eq!(r.evaluated, 1);
        assert_eq!(r.report, cm.evaluate(&r.plan, 4).unwrap());
    }

    #[test]
    fn agrees_with_the_planner() {
        let s = toy_scenario(6, 2, 3, 4);
        let cm = CostModel::new(&s);
        for b in [1, 7, 32, 64] {
            let o = enumerate_msp(&cm, b, &OracleLimits::default()).unwrap();
            let p = solve_msp(&cm, b, &MspOptions::default()).unwrap();
            assert_eq!(o.report.l_t, p.report.l_t);
            assert_eq!(o.plan, p.plan);
        }
    }

    #[test]
    fn unit_minibatch_joint_is_the_fixed_b_optimum() {
        let mut s = toy_scenario(5, 1, 3, 3);
        s.minibatch = 1;
        let cm = CostModel::new(&s);
        let j = enumerate_joint(&cm, &OracleLimits::default()).unwrap();
        let m = enumerate_msp(&cm, 1, &OracleLimits::default()).unwrap();
        assert_eq!((j.plan, j.b, j.report.l_t), (m.plan, 1, m.report.l_t));
    }

    #[test]
    fn joint_optimum_is_no_worse_than_bcd() {
        for servers in 2..=4 {
            let mut s = toy_scenario(6, 1, servers, 4);
            s.minibatch = 48;
            let cm = CostModel::new(&s);
            let j = enumerate_joint(&cm, &OracleLimits::default()).unwrap();
            let t = solve_joint(&cm, &BcdOptions::default()).unwrap();
            assert!(j.report.l_t <= t.l_t());
            let best_per_b = (1..=48)
                .filter_map(|b| solve_msp(&cm, b, &MspOptions::default()).ok())
                .map(|s| s.report.l_t)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(j.report.l_t, best_per_b);
        }
    }

    #[test]
    fn refuses_oversized_enumerations() {
        let s = toy_scenario(8, 1, 4, 4);
        let cm = CostModel::new(&s);
        let limits = OracleLimits {
            max_evaluations: 100,
            ..OracleLimits::default()
        };
        match enumerate_joint(&cm, &limits) {
            Err(Error::EnumerationLimit { estimated, limit }) => {
                assert_eq!(limit, 100);
                assert_eq!(estimated, plan_count(&s, false) * s.minibatch as u128);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reuse_admits_more_plans_and_never_worse() {
        let s = toy_scenario(6, 1, 3, 4);
        let cm = CostModel::new(&s);
        let strict = enumerate_msp(&cm, 16, &OracleLimits::default()).unwrap();
        let reuse = enumerate_msp(
            &cm,
            16,
            &OracleLimits {
                allow_node_reuse: true,
                ..OracleLimits::default()
            },
        )
        .unwrap();
        assert!(reuse.evaluated > strict.evaluated);
        assert!(reuse.report.l_t <= strict.report.l_t);
    }
}
