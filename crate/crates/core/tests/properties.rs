use pipesl::bcd::{solve_joint, solve_scheme, BcdOptions, Scheme};
use pipesl::costmodel::CostModel;
use pipesl::mspgraph::{solve_msp, MspOptions};
use pipesl::pipesim::{simulate, SimOptions, MIN_FACTOR};
use pipesl::scenario::{generate_scenario, GeneratorSpec};
use pipesl::{Scenario, SplitPlan, Topology};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

// Paired draws z and -z keep the sample median of each factor at exactly 1, so the
// comparison sees the shift in the distribution rather than the skew of one sample.
fn antithetic_median(s: &Scenario, plan: &SplitPlan, b: u32, cv: f64, draws: &[Vec<f64>]) -> f64 {
    let n = s.nodes.len();
    let mut runs: Vec<f64> = draws
        .iter()
        .flat_map(|z| [1.0, -1.0].map(|sign| (z, sign)))
        .map(|(z, sign)| {
            let f = |i: usize| (1.0 + sign * cv * z[i]).max(MIN_FACTOR);
            let world = s.perturbed(f, |i| f(n + i));
            simulate(&world, plan, b, &SimOptions::default())
                .unwrap()
                .makespan
        })
        .collect();
    runs.sort_by(f64::total_cmp);
    let mid = runs.len() / 2;
    0.5 * (runs[mid - 1] + runs[mid])
}

#[test]
fn median_makespan_grows_with_noise() {
    (0..10u64).into_par_iter().for_each(|scenario_seed| {
        let s = generate_scenario(scenario_seed, &GeneratorSpec::default()).unwrap();
        let t = solve_joint(&CostModel::new(&s), &BcdOptions::default()).unwrap();
        let draws: Vec<Vec<f64>> = (0..100u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..s.nodes.len() + s.links.len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let mut last = 0.0;
        for cv in [0.0, 0.1, 0.2, 0.3] {
            let median = antithetic_median(&s, &t.solution.plan, t.b, cv, &draws);
            assert!(
                median >= last,
                "scenario {scenario_seed}, cv {cv}: median {median} below {last}"
            );
            last = median;
        }
    });
}

#[test]
fn traces_are_monotone_on_random_scenarios() {
    let bad: Vec<u64> = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let spec = GeneratorSpec {
                servers: 2 + seed as usize % 7,
                clients: 1 + seed as usize % 3,
                topology: [
                    Topology::Mesh,
                    Topology::Line,
                    Topology::Star,
                    Topology::Tree,
                ][seed as usize % 4],
                ..GeneratorSpec::default()
            };
            let s = generate_scenario(seed, &spec).unwrap();
            let Ok(t) = solve_joint(&CostModel::new(&s), &BcdOptions::default()) else {
                return false;
            };
            t.iterations.windows(2).any(|w| w[1].l_t > w[0].l_t)
        })
        .collect();
    assert!(bad.is_empty(), "non-monotone traces for seeds {bad:?}");
}

#[test]
fn identical_inputs_give_identical_traces() {
    let s = generate_scenario(4, &GeneratorSpec::default()).unwrap();
    let cm = CostModel::new(&s);
    for scheme in Scheme::ALL {
        let a = solve_scheme(&cm, scheme, 17, &BcdOptions::default()).unwrap();
        let b = solve_scheme(&cm, scheme, 17, &BcdOptions::default()).unwrap();
        let key = |t: &pipesl::bcd::BcdTrace| {
            t.iterations
                .iter()
                .map(|i| (i.plan.clone(), i.b, i.l_t.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b), "{}", scheme.name());
    }
}

#[test]
fn joint_search_beats_random_halves_on_average() {
    let spec = GeneratorSpec::default();
    let mean = |scheme: Scheme| {
        let v: Vec<f64> = (0..30u64)
            .into_par_iter()
            .map(|seed| {
                let s = generate_scenario(seed, &spec).unwrap();
                solve_scheme(&CostModel::new(&s), scheme, seed, &BcdOptions::default())
                    .unwrap()
                    .l_t()
            })
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let ours = mean(Scheme::Bcd);
    assert!(ours <= mean(Scheme::RcOp));
    assert!(ours <= mean(Scheme::RpOc));
}

#[test]
fn ten_server_mesh_is_close_to_the_joint_optimum() {
    let spec = GeneratorSpec {
        servers: 10,
        ..GeneratorSpec::default()
    };
    for seed in 0..3 {
        let s = generate_scenario(seed, &spec).unwrap();
        let cm = CostModel::new(&s);
        let ours = solve_joint(&cm, &BcdOptions::default()).unwrap().l_t();
        let best = (1..=s.minibatch)
            .into_par_iter()
            .filter_map(|b| solve_msp(&cm, b, &MspOptions::pruned()).ok())
            .map(|sol| sol.report.l_t)
            .reduce(|| f64::INFINITY, f64::min);
        assert!(best <= ours);
        assert!(ours <= 1.05 * best, "seed {seed}: {ours} vs {best}");
    }
}
