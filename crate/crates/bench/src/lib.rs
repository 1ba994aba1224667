//! Fixtures shared by the benchmarks.

use pipesl::scenario::{generate_scenario, GeneratorSpec};
use pipesl::Scenario;

/// Default generated scenario with `servers` servers.
pub fn scenario(servers: usize, seed: u64) -> Scenario {
    let spec = GeneratorSpec {
        servers,
        ..GeneratorSpec::default()
    };
    generate_scenario(seed, &spec).expect("generator accepts the defaults")
}
