use std::fs::File;
use std::io::{self, Write};
use std::time::Instant;

use anyhow::{Context, Result};
use pipesl::bcd::solve_scheme;
use pipesl::costmodel::CostModel;
use pipesl::scenario::{generate_scenario, GeneratorSpec};
use pipesl::Topology;
use rayon::prelude::*;

use crate::commands::{apply_plan_args, bcd_options, generator_spec, usage};
use crate::{SweepArgs, SweepParam};

/// Expands `a,b,c`, `lo..hi` and `lo..hi:step` (inclusive) into values.
pub fn expand_values(spec: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((lo, rest)) = part.split_once("..") else {
            out.push(part.to_string());
            continue;
        };
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, step),
            None => (rest, "1"),
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("`{s}` in range `{part}` is not a number")))
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(usage(format!(
                "range `{part}` needs lo <= hi and a positive step"
            )));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        for i in 0..=count {
            out.push(format!("{}", lo + i as f64 * step));
        }
    }
    if out.is_empty() {
        return Err(usage("--values is empty"));
    }
    Ok(out)
}

fn apply(param: SweepParam, value: &str, spec: &mut GeneratorSpec) -> Result<()> {
    let num = || {
        value
            .parse::<f64>()
            .map_err(|_| usage(format!("sweep value `{value}` is not a number")))
    };
    match param {
        SweepParam::Servers => {
            spec.servers = value
                .parse()
                .map_err(|_| usage(format!("server count `{value}` is not a whole number")))?
        }
        SweepParam::Bandwidth => spec.bandwidth = Some(num()? * 1e6),
        SweepParam::Compute => spec.compute = Some(num()?),
        SweepParam::Memory => spec.memory = Some(num()? * 8e9),
        SweepParam::Topology => spec.topology = value.parse::<Topology>()?,
    }
    Ok(())
}

struct Row {
    value: usize,
    trial: u64,
    scheme: usize,
    fields: [String; 8],
}

pub fn run(a: SweepArgs) -> Result<()> {
    let values = expand_values(&a.values)?;
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let base = generator_spec(&a.generator)?;
    let specs = values
        .iter()
        .map(|v| {
            let mut s = base.clone();
            apply(a.param, v, &mut s)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = bcd_options(&a.plan);

    let cells: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|v| (0..a.trials).map(move |t| (v, t)))
        .collect();
    let rows: Vec<Row> = cells
        .into_par_iter()
        .map(|(vi, trial)| -> Result<Vec<Row>> {
            let seed = a.seed + trial;
            let mut scn = generate_scenario(seed, &specs[vi])?;
            apply_plan_args(&mut scn, &a.plan)?;
            let cm = CostModel::new(&scn).with_strict_ti(a.plan.strict_ti);
            let mut out = Vec::new();
            for (si, scheme) in a.schemes.iter().enumerate() {
                let start = Instant::now();
                let res = solve_scheme(&cm, scheme.scheme(), seed, &opts);
                let ms = start.elapsed().as_secs_f64() * 1e3;
                let (l_t, t_f, t_i, b) = match res {
                    Ok(t) => {
                        let r = &t.solution.report;
                        (
                            format!("{:.9}", r.l_t),
                            format!("{:.9}", r.t_f),
                            format!("{:.9}", r.t_i),
                            t.b.to_string(),
                        )
                    }
                    Err(e) if e.is_infeasible() => {
                        log::info!(
                            "{} trial {trial} {}: {e}",
                            values[vi],
                            scheme.scheme().name()
                        );
                        Default::default()
                    }
                    Err(e) => return Err(e.into()),
                };
                out.push(Row {
                    value: vi,
                    trial,
                    scheme: si,
                    fields: [
                        values[vi].clone(),
                        trial.to_string(),
                        scheme.scheme().name().to_string(),
                        l_t,
                        t_f,
                        t_i,
                        b,
                        format!("{ms:.3}"),
                    ],
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<Row>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut rows = rows;
    rows.sort_by_key(|r| (r.value, r.trial, r.scheme));

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("writing {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "param_value",
        "trial",
        "scheme",
        "L_t",
        "T_f",
        "T_i",
        "b",
        "runtime_ms",
    ])?;
    for r in &rows {
        w.write_record(&r.fields)?;
    }
    w.flush()?;
    Ok(())
}
