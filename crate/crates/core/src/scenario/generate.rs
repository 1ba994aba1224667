//! Randomized scenarios over the Table-I style parameter ranges.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accumulate_layers, LayerCost, LinkProfile, NodeKind, NodeProfile, Scenario, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRegime {
    /// 10 to 50 MHz per link.
    Sub6,
    /// 100 to 200 MHz per link.
    MmWave,
}

impl BandwidthRegime {
    pub fn range(self) -> (f64, f64) {
        match self {
            BandwidthRegime::Sub6 => (10e6, 50e6),
            BandwidthRegime::MmWave => (100e6, 200e6),
        }
    }
}

impl std::str::FromStr for BandwidthRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sub6" | "sub-6" => Ok(BandwidthRegime::Sub6),
            "mmwave" => Ok(BandwidthRegime::MmWave),
            _ => Err(Error::field(
                "bandwidth_regime",
                format!("unknown regime `{s}`"),
            )),
        }
    }
}

/// Multipliers applied to the built-in 16-layer convolutional profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileScale {
    /// Forward and backward FLOPs.
    pub work: f64,
    /// Activation and gradient sizes.
    pub activation: f64,
    /// Parameter and optimizer-state sizes. Memory demand charges these per
    /// sample, so the default scales them down.
    pub state: f64,
}

impl Default for ProfileScale {
    fn default() -> Self {
        ProfileScale {
            work: 1.0,
            activation: 1.0,
            state: 0.125,
        }
    }
}

/// Knobs for [`generate_scenario`]. Overrides replace the sampled value on
/// every node or link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub servers: usize,
    pub clients: usize,
    pub topology: Topology,
    pub bandwidth_regime: BandwidthRegime,
    pub max_submodels: usize,
    pub minibatch: u32,
    pub profile: ProfileScale,
    /// Side of the deployment square (m).
    pub area: f64,
    pub bandwidth: Option<f64>,
    pub compute: Option<f64>,
    pub memory: Option<f64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            servers: 6,
            clients: 1,
            topology: Topology::Mesh,
            bandwidth_regime: BandwidthRegime::Sub6,
            max_submodels: 5,
            minibatch: 512,
            profile: ProfileScale::default(),
            area: 500.0,
            bandwidth: None,
            compute: None,
            memory: None,
        }
    }
}

const TAG_CLIENT: u64 = 1;
const TAG_SERVER: u64 = 2;
const TAG_PAIR: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream per entity, so growing N keeps existing draws intact.
fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let k = splitmix(splitmix(splitmix(seed) ^ tag) ^ a.wrapping_mul(0x1000_0000_01b3)) ^ b;
    ChaCha8Rng::seed_from_u64(splitmix(k))
}

/// Stable key for a node regardless of how many others exist.
fn node_key(kind: NodeKind, idx: usize) -> u64 {
    let tag = match kind {
        NodeKind::Client => TAG_CLIENT,
        NodeKind::Server => TAG_SERVER,
    };
    (tag << 32) | idx as u64
}

/// Per-layer costs of a 16-layer VGG-style network on 32x32x3 inputs
/// (13 convolutions with five pooling stages, then three dense layers),
/// 32-bit values, Adam-style optimizer state of two words per parameter.
pub fn reference_layers(scale: ProfileScale) -> Vec<LayerCost> {
    // (input side, in channels, out channels, pooled after)
    const CONV: [(f64, f64, f64, bool); 13] = [
        (32.0, 3.0, 64.0, false),
        (32.0, 64.0, 64.0, true),
        (16.0, 64.0, 128.0, false),
        (16.0, 128.0, 128.0, true),
        (8.0, 128.0, 256.0, false),
        (8.0, 256.0, 256.0, false),
        (8.0, 256.0, 256.0, true),
        (4.0, 256.0, 512.0, false),
        (4.0, 512.0, 512.0, false),
        (4.0, 512.0, 512.0, true),
        (2.0, 512.0, 512.0, false),
        (2.0, 512.0, 512.0, false),
        (2.0, 512.0, 512.0, true),
    ];
    const DENSE: [(f64, f64); 3] = [(512.0, 4096.0), (4096.0, 4096.0), (4096.0, 10.0)];
    const WORD: f64 = 32.0;

    let mut out = Vec::with_capacity(16);
    let mut push = |flops: f64, act: f64, params: f64| {
        out.push(LayerCost {
            fp_flops: flops * scale.work,
            bp_flops: 2.0 * flops * scale.work,
            act_bits: act * WORD * scale.activation,
            grad_bits: act * WORD * scale.activation,
            opt_state_bits: 2.0 * params * WORD * scale.state,
            param_bits: params * WORD * scale.state,
        });
    };
    for (side, cin, cout, pool) in CONV {
        let flops = 2.0 * side * side * cin * cout * 9.0;
        let out_side = if pool { side / 2.0 } else { side };
        push(flops, out_side * out_side * cout, 9.0 * cin * cout + cout);
    }
    for (fin, fout) in DENSE {
        push(2.0 * fin * fout, fout, fin * fout + fout);
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..=hi)
}

fn draw_node(seed: u64, kind: NodeKind, idx: usize, spec: &GeneratorSpec) -> NodeProfile {
    let key = node_key(kind, idx);
    let mut rng = stream(seed, key >> 32, key & 0xffff_ffff, 0);
    let compute = uniform(&mut rng, 1e12, 10e12);
    let tx_power = uniform(&mut rng, 0.1, 0.5);
    let memory = uniform(&mut rng, 2.0 * 8e9, 16.0 * 8e9);
    // uniform point in the disk inscribed in the square, so every pair is
    // at most `area` apart
    let r = 0.5 * spec.area * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    let c = 0.5 * spec.area;
    let prefix = match kind {
        NodeKind::Client => "c",
        NodeKind::Server => "s",
    };
    NodeProfile {
        id: format!("{prefix}{idx}"),
        kind,
        compute: spec.compute.unwrap_or(compute),
        intensity: 1.0 / 32.0,
        memory: spec.memory.unwrap_or(memory),
        tx_power,
        position: (c + r * theta.cos(), c + r * theta.sin()),
        init_fp: 0.001,
        init_bp: 0.001,
        bp_threshold: 32,
    }
}

/// Builds a deterministic scenario for `seed`. Nodes are listed clients
/// first (`c0`, `c1`, ...) then servers (`s0`, ...); links are directed and
/// added in both directions.
pub fn generate_scenario(seed: u64, spec: &GeneratorSpec) -> Result<Scenario> {
    if spec.servers < 1 {
        return Err(Error::Validation(
            "a generated scenario needs N >= 1 servers".into(),
        ));
    }
    if spec.clients < 1 {
        return Err(Error::Validation(
            "a generated scenario needs at least one client".into(),
        ));
    }
    if spec.topology == Topology::Explicit {
        return Err(Error::Validation(
            "the generator builds mesh, line, star or tree topologies only".into(),
        ));
    }
    let m = spec.clients;
    let mut nodes = Vec::with_capacity(m + spec.servers);
    for i in 0..m {
        nodes.push(draw_node(seed, NodeKind::Client, i, spec));
    }
    for j in 0..spec.servers {
        nodes.push(draw_node(seed, NodeKind::Server, j, spec));
    }
    let server = |j: usize| m + j;

    let mut pairs = Vec::new();
    match spec.topology {
        Topology::Mesh => {
            for a in 0..spec.servers {
                for b in a + 1..spec.servers {
                    pairs.push((server(a), server(b)));
                }
            }
            for c in 0..m {
                for s in 0..spec.servers {
                    pairs.push((c, server(s)));
                }
            }
        }
        Topology::Line => {
            for a in 1..spec.servers {
                pairs.push((server(a - 1), server(a)));
            }
        }
        Topology::Star => {
            for a in 1..spec.servers {
                pairs.push((server(0), server(a)));
            }
        }
        Topology::Tree => {
            for a in 1..spec.servers {
                pairs.push((server((a - 1) / 2), server(a)));
            }
        }
        Topology::Explicit => unreachable!(),
    }
    if spec.topology != Topology::Mesh {
        for c in 0..m {
            pairs.push((c, server(0)));
        }
    }

    let (lo, hi) = spec.bandwidth_regime.range();
    let key = |n: usize| {
        if n < m {
            node_key(NodeKind::Client, n)
        } else {
            node_key(NodeKind::Server, n - m)
        }
    };
    let mut links = Vec::with_capacity(2 * pairs.len());
    for (a, b) in pairs {
        let (ka, kb) = (key(a).min(key(b)), key(a).max(key(b)));
        let mut rng = stream(seed, TAG_PAIR, ka, kb);
        let bandwidth = spec.bandwidth.unwrap_or_else(|| uniform(&mut rng, lo, hi));
        for (from, to) in [(a, b), (b, a)] {
            links.push(LinkProfile {
                from,
                to,
                bandwidth,
                fixed_rate: None,
                distance: None,
            });
        }
    }

    let layers = accumulate_layers(&reference_layers(spec.profile));
    let scn = Scenario {
        max_submodels: spec.max_submodels.min(layers.len()),
        layers,
        nodes,
        links,
        topology: spec.topology,
        minibatch: spec.minibatch,
        pathloss: 3.5,
        noise_density: 10f64.powf(-174.0 / 10.0) * 1e-3,
    };
    scn.validate()?;
    Ok(scn)
}
