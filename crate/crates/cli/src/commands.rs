use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pipesl::bcd::{solve_joint, solve_scheme, BcdOptions, BcdTrace};
use pipesl::costmodel::{CostModel, LatencyReport};
use pipesl::mspgraph::{build_graph, solve_msp, BoundKind, GraphOptions};
use pipesl::oracle::{enumerate_joint, enumerate_msp, OracleLimits};
use pipesl::pipesim::{simulate as run_sim, SimMode, SimOptions};
use pipesl::relaxation::build_rlt_lp;
use pipesl::scenario::{
    generate_scenario, load_plan, load_scenario, save_plan, scenario_to_string, GeneratorSpec,
    PlanFile,
};
use pipesl::{Error, Scenario, SplitPlan};

use crate::{
    BoundArg, GenerateArgs, GeneratorArgs, OptimizeArgs, OracleArgs, PlanArgs, SimulateArgs,
};

/// Bad command-line input found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 usage, 2 validation, 3 infeasible, 4 internal.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::Field { .. }
                | Error::Validation(_)
                | Error::UnknownTopology(_)
                | Error::Disconnected { .. }
                | Error::EnumerationLimit { .. } => 2,
                Error::Infeasible(_) => 3,
                Error::IterationLimit(_) | Error::Internal(_) => 4,
            };
        }
        if cause.is::<io::Error>() || cause.is::<csv::Error>() {
            return 2;
        }
    }
    4
}

pub fn generator_spec(g: &GeneratorArgs) -> Result<GeneratorSpec> {
    Ok(GeneratorSpec {
        servers: g.servers,
        clients: g.clients,
        topology: g.topology.parse()?,
        bandwidth_regime: g.bandwidth_regime.parse()?,
        minibatch: g.minibatch,
        ..GeneratorSpec::default()
    })
}

pub fn bcd_options(p: &PlanArgs) -> BcdOptions {
    let mut opts = BcdOptions::default();
    opts.msp.bound = match p.bound {
        BoundArg::Fast => BoundKind::Fast,
        BoundArg::Rlt => BoundKind::Rlt,
    };
    opts.msp.graph.allow_node_reuse = p.allow_node_reuse;
    opts
}

/// Applies `--K` to a loaded or generated scenario.
pub fn apply_plan_args(scn: &mut Scenario, p: &PlanArgs) -> Result<()> {
    if let Some(k) = p.max_submodels {
        scn.max_submodels = k;
        scn.validate()?;
    }
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut spec = generator_spec(&a.generator)?;
    spec.max_submodels = a.max_submodels;
    spec.bandwidth = a.bandwidth.map(|mhz| mhz * 1e6);
    spec.compute = a.compute;
    spec.memory = a.memory.map(|gb| gb * 8e9);
    let scn = generate_scenario(a.seed, &spec)?;
    let mut text = scenario_to_string(&scn)?;
    text.push('\n');
    write_output(a.out.as_deref(), &text)
}

fn print_report(scn: &Scenario, plan: &SplitPlan, r: &LatencyReport) {
    let hosts: Vec<&str> = plan
        .placement()
        .iter()
        .map(|&n| scn.nodes[n].id.as_str())
        .collect();
    println!("cuts: {:?}", plan.cuts());
    println!("placement: {:?}", hosts);
    println!("micro_batch: {}", r.micro_batch);
    println!("micro_batches: {}", r.num_micro_batches);
    println!("T_f: {:.9}", r.t_f);
    println!("T_i: {:.9}", r.t_i);
    println!("L_t: {:.9}", r.l_t);
}

pub fn optimize(a: OptimizeArgs) -> Result<()> {
    let mut scn = load_scenario(&a.scenario)?;
    apply_plan_args(&mut scn, &a.plan)?;
    let cm = CostModel::new(&scn).with_strict_ti(a.plan.strict_ti);
    let opts = bcd_options(&a.plan);
    let trace = solve_scheme(&cm, a.scheme.scheme(), a.seed, &opts)?;
    let sol = &trace.solution;
    if a.json {
        let doc = serde_json::json!({
            "scheme": a.scheme.scheme().name(),
            "plan": PlanFile::from_plan(&scn, &sol.plan, trace.b),
            "report": sol.report,
            "iterations": trace.iterations,
            "converged": trace.converged,
            "lower_bound_t_f": sol.lower_bound,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("scheme: {}", a.scheme.scheme().name());
        print_report(&scn, &sol.plan, &sol.report);
        println!("iterations: {}", trace.iterations.len());
        println!("converged: {}", trace.converged);
        println!("graph: {} vertices, {} edges", sol.vertices, sol.edges);
    }
    if let Some(path) = &a.out {
        save_plan(&PlanFile::from_plan(&scn, &sol.plan, trace.b), path)?;
    }
    if let Some(path) = &a.lp_dump {
        let graph = build_graph(
            &cm,
            trace.b,
            &GraphOptions {
                allow_node_reuse: a.plan.allow_node_reuse,
                ..GraphOptions::default()
            },
        );
        let (lp, _) = build_rlt_lp(&graph);
        fs::write(path, lp.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let scn = load_scenario(&a.scenario)?;
    let (plan, b) = load_plan(&a.plan)?.resolve(&scn)?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let analytic = CostModel::new(&scn).evaluate(&plan, b)?;
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record([
        "run",
        "seed",
        "cv",
        "micro_batch",
        "micro_batches",
        "makespan",
        "L_t",
    ])?;
    let runs: Vec<Option<u64>> = match a.cv {
        None => vec![None],
        Some(_) => (0..a.seeds).map(|i| Some(a.seed + i)).collect(),
    };
    for (i, seed) in runs.into_iter().enumerate() {
        let mode = match (a.cv, seed) {
            (Some(cv), Some(seed)) => SimMode::Perturbed {
                cv_compute: cv,
                cv_rate: cv,
                seed,
            },
            _ => SimMode::Nominal,
        };
        let opts = SimOptions {
            mode,
            ragged_last: a.ragged_last,
            record_events: i == 0 && a.events.is_some(),
        };
        let r = run_sim(&scn, &plan, b, &opts)?;
        if let (Some(events), Some(path)) = (&r.events, &a.events) {
            let mut ew = csv::Writer::from_path(path)
                .with_context(|| format!("writing {}", path.display()))?;
            for e in events {
                ew.serialize(e)?;
            }
            ew.flush()?;
        }
        w.write_record([
            i.to_string(),
            seed.map(|s| s.to_string()).unwrap_or_default(),
            a.cv.unwrap_or(0.0).to_string(),
            b.to_string(),
            r.micro_batches.to_string(),
            format!("{:.12}", r.makespan),
            format!("{:.12}", analytic.l_t),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn print_trace_summary(label: &str, trace: &BcdTrace) {
    println!(
        "{label}: L_t {:.9} at b = {} ({})",
        trace.l_t(),
        trace.b,
        trace.solution.plan
    );
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let mut scn = load_scenario(&a.scenario)?;
    apply_plan_args(&mut scn, &a.plan)?;
    let cm = CostModel::new(&scn).with_strict_ti(a.plan.strict_ti);
    let limits = OracleLimits {
        max_evaluations: a.limit,
        allow_node_reuse: a.plan.allow_node_reuse,
    };
    let opts = bcd_options(&a.plan);
    let (best, planner_l_t) = match a.b {
        Some(b) => {
            let o = enumerate_msp(&cm, b, &limits)?;
            let p = solve_msp(&cm, b, &opts.msp)?;
            println!("planner: L_t {:.9} at b = {b} ({})", p.report.l_t, p.plan);
            (o, p.report.l_t)
        }
        None => {
            let o = enumerate_joint(&cm, &limits)?;
            let t = solve_joint(&cm, &opts)?;
            print_trace_summary("planner", &t);
            (o, t.l_t())
        }
    };
    println!(
        "exhaustive: L_t {:.9} at b = {} ({}) over {} evaluations, {} feasible",
        best.report.l_t, best.b, best.plan, best.evaluated, best.feasible
    );
    if planner_l_t < best.report.l_t * (1.0 - 1e-12) {
        bail!(Error::Internal(format!(
            "planner result {planner_l_t} is below the exhaustive optimum {}",
            best.report.l_t
        )));
    }
    println!("gap: {:.4}%", 100.0 * (planner_l_t / best.report.l_t - 1.0));
    Ok(())
}
