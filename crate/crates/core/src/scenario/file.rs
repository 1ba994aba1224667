//! JSON scenario and plan files.
//!
//! Scenario layout (all numeric fields also accept unit strings such as
//! `"16 GB"`, `"20 MHz"` or `"-174 dBm/Hz"`; bare numbers are canonical units):
//!
//! ```json
//! {
//!   "layers": [{"fp_work": 1e9, "bp_work": 2e9, "act_size": "64 KB",
//!               "grad_size": "64 KB", "opt_state_size": 0, "param_size": "1 MB"}],
//!   "nodes": [{"id": "c0", "kind": "client", "compute": "2 TFLOPS",
//!              "memory": "8 GB", "tx_power": "200 mW", "position": [0, 0]}],
//!   "links": [{"from": "c0", "to": "s0", "bandwidth": "20 MHz", "symmetric": true}],
//!   "params": {"minibatch": 512, "max_submodels": 5, "topology": "mesh"},
//!   "plan": {"cuts": [3], "placement": ["s0"], "micro_batch": 32}
//! }
//! ```
//!
//! Layer records hold per-layer values; cumulative sums are formed on load.
//! Node fields `intensity`, `init_fp`, `init_bp`, `bp_threshold` and every
//! `params` entry are optional, defaulting to 1/32, 1 ms, 1 ms, 32 and
//! B = 512, K = 5, path loss 3.5, noise -174 dBm/Hz, topology `explicit`.
//! Unknown fields are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::units::{Dimension, Quantity};
use super::{
    accumulate_layers, per_layer_costs, LayerCost, LinkProfile, NodeKind, NodeProfile, Scenario,
    SplitPlan, Topology,
};
use crate::error::{Error, Result};

const DEFAULT_INTENSITY: f64 = 1.0 / 32.0;
const DEFAULT_INIT: f64 = 0.001;
const DEFAULT_THRESHOLD: u32 = 32;
const DEFAULT_MINIBATCH: u32 = 512;
const DEFAULT_MAX_SUBMODELS: usize = 5;
const DEFAULT_PATHLOSS: f64 = 3.5;
const DEFAULT_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    layers: Vec<LayerDoc>,
    nodes: Vec<NodeDoc>,
    links: Vec<LinkDoc>,
    #[serde(default)]
    params: ParamsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plan: Option<PlanFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    fp_work: Quantity,
    bp_work: Quantity,
    act_size: Quantity,
    grad_size: Quantity,
    #[serde(default = "zero")]
    opt_state_size: Quantity,
    #[serde(default = "zero")]
    param_size: Quantity,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    kind: NodeKind,
    compute: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intensity: Option<f64>,
    memory: Quantity,
    tx_power: Quantity,
    #[serde(default)]
    position: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_fp: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_bp: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bp_threshold: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_rate: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<Quantity>,
    /// Adds the reverse link with the same attributes.
    #[serde(default, skip_serializing_if = "is_false")]
    symmetric: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minibatch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_submodels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pathloss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_density: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topology: Option<String>,
}

/// On-disk plan: cut layers, placement by node id and the micro-batch size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub cuts: Vec<usize>,
    pub placement: Vec<String>,
    pub micro_batch: u32,
}

impl PlanFile {
    pub fn from_plan(scn: &Scenario, plan: &SplitPlan, micro_batch: u32) -> Self {
        PlanFile {
            cuts: plan.cuts().to_vec(),
            placement: plan
                .placement()
                .iter()
                .map(|&n| scn.nodes[n].id.clone())
                .collect(),
            micro_batch,
        }
    }

    /// Resolves node ids, canonicalizes the plan and checks the micro-batch.
    pub fn resolve(&self, scn: &Scenario) -> Result<(SplitPlan, u32)> {
        let placement = self
            .placement
            .iter()
            .map(|id| {
                scn.node_index(id)
                    .ok_or_else(|| Error::field("plan.placement", format!("unknown node `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = SplitPlan::canonicalize(scn, &self.cuts, &placement)?;
        if self.micro_batch < 1 || self.micro_batch > scn.minibatch {
            return Err(Error::Validation(format!(
                "micro_batch {} outside 1..={}",
                self.micro_batch, scn.minibatch
            )));
        }
        Ok((plan, self.micro_batch))
    }
}

fn zero() -> Quantity {
    Quantity::Number(0.0)
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn quantity(q: &Quantity, dim: Dimension, field: String) -> Result<f64> {
    let v = match q.to_canonical(dim) {
        Ok(v) => v,
        Err(m) => return Err(Error::field(field, m)),
    };
    if !v.is_finite() {
        return Err(Error::field(field, "value is not finite"));
    }
    Ok(v)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses and validates a scenario document. An embedded plan, if present,
/// is checked against the scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(json_error)?;
    let scn = from_doc(&doc)?;
    scn.validate()?;
    if let Some(plan) = &doc.plan {
        plan.resolve(&scn)?;
    }
    Ok(scn)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_scenario(&read(path.as_ref())?)
}

/// Writes the scenario in canonical units; `load_scenario` returns an equal value.
pub fn save_scenario(scn: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &(scenario_to_string(scn)? + "\n"))
}

pub fn scenario_to_string(scn: &Scenario) -> Result<String> {
    let doc = to_doc(scn);
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))
}

pub fn parse_plan(text: &str) -> Result<PlanFile> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PlanFile> {
    parse_plan(&read(path.as_ref())?)
}

pub fn save_plan(plan: &PlanFile, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(plan).map_err(|e| Error::Internal(e.to_string()))?;
    write(path.as_ref(), &(text + "\n"))
}

fn from_doc(doc: &ScenarioDoc) -> Result<Scenario> {
    let mut costs = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.iter().enumerate() {
        let f = |name: &str| format!("layers[{i}].{name}");
        let c = LayerCost {
            fp_flops: quantity(&l.fp_work, Dimension::Flops, f("fp_work"))?,
            bp_flops: quantity(&l.bp_work, Dimension::Flops, f("bp_work"))?,
            act_bits: quantity(&l.act_size, Dimension::Bits, f("act_size"))?,
            grad_bits: quantity(&l.grad_size, Dimension::Bits, f("grad_size"))?,
            opt_state_bits: quantity(&l.opt_state_size, Dimension::Bits, f("opt_state_size"))?,
            param_bits: quantity(&l.param_size, Dimension::Bits, f("param_size"))?,
        };
        costs.push(c);
    }

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.iter().enumerate() {
        let f = |name: &str| format!("nodes[{i}].{name}");
        let time = |q: &Option<Quantity>, name: &str| match q {
            Some(q) => quantity(q, Dimension::Time, f(name)),
            None => Ok(DEFAULT_INIT),
        };
        nodes.push(NodeProfile {
            id: n.id.clone(),
            kind: n.kind,
            compute: quantity(&n.compute, Dimension::FlopRate, f("compute"))?,
            intensity: n.intensity.unwrap_or(DEFAULT_INTENSITY),
            memory: quantity(&n.memory, Dimension::Bits, f("memory"))?,
            tx_power: quantity(&n.tx_power, Dimension::Power, f("tx_power"))?,
            position: n.position,
            init_fp: time(&n.init_fp, "init_fp")?,
            init_bp: time(&n.init_bp, "init_bp")?,
            bp_threshold: n.bp_threshold.unwrap_or(DEFAULT_THRESHOLD),
        });
    }

    let lookup = |id: &str, field: String| {
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| Error::field(field, format!("unknown node `{id}`")))
    };
    let mut links = Vec::with_capacity(doc.links.len());
    for (i, l) in doc.links.iter().enumerate() {
        let f = |name: &str| format!("links[{i}].{name}");
        let from = lookup(&l.from, f("from"))?;
        let to = lookup(&l.to, f("to"))?;
        let opt = |q: &Option<Quantity>, dim, name: &str| {
            q.as_ref().map(|q| quantity(q, dim, f(name))).transpose()
        };
        let bandwidth = opt(&l.bandwidth, Dimension::Frequency, "bandwidth")?;
        let fixed_rate = opt(&l.fixed_rate, Dimension::DataRate, "fixed_rate")?;
        let distance = opt(&l.distance, Dimension::Distance, "distance")?;
        if bandwidth.is_none() && fixed_rate.is_none() {
            return Err(Error::field(
                f("bandwidth"),
                "either bandwidth or fixed_rate is required",
            ));
        }
        let link = LinkProfile {
            from,
            to,
            bandwidth: bandwidth.unwrap_or(0.0),
            fixed_rate,
            distance,
        };
        let reverse = l.symmetric.then(|| LinkProfile {
            from: to,
            to: from,
            ..link.clone()
        });
        links.push(link);
        links.extend(reverse);
    }

    let p = &doc.params;
    let noise_density = match &p.noise_density {
        Some(q) => quantity(q, Dimension::NoiseDensity, "params.noise_density".into())?,
        None => 10f64.powf(DEFAULT_NOISE_DBM_HZ / 10.0) * 1e-3,
    };
    let topology = match &p.topology {
        Some(t) => t.parse()?,
        None => Topology::Explicit,
    };
    Ok(Scenario {
        layers: accumulate_layers(&costs),
        nodes,
        links,
        topology,
        minibatch: p.minibatch.unwrap_or(DEFAULT_MINIBATCH),
        max_submodels: p.max_submodels.unwrap_or(DEFAULT_MAX_SUBMODELS),
        pathloss: p.pathloss.unwrap_or(DEFAULT_PATHLOSS),
        noise_density,
    })
}

/// Per-layer value whose left-to-right accumulation reproduces `cum` exactly.
fn exact_step(prev: f64, cum: f64) -> f64 {
    let base = cum - prev;
    if prev + base == cum {
        return base;
    }
    let mut up = base;
    let mut down = base;
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        if prev + up == cum {
            return up;
        }
        if down >= 0.0 && prev + down == cum {
            return down;
        }
    }
    base
}

fn exact_costs(scn: &Scenario) -> Vec<LayerCost> {
    let mut costs = per_layer_costs(&scn.layers);
    for i in 1..scn.layers.len() {
        let (a, b) = (&scn.layers[i - 1], &scn.layers[i]);
        let c = &mut costs[i];
        c.fp_flops = exact_step(a.fp_work_cum, b.fp_work_cum);
        c.bp_flops = exact_step(a.bp_work_cum, b.bp_work_cum);
        c.opt_state_bits = exact_step(a.opt_state_cum, b.opt_state_cum);
        c.param_bits = exact_step(a.param_cum, b.param_cum);
    }
    costs
}

fn to_doc(scn: &Scenario) -> ScenarioDoc {
    let num = Quantity::Number;
    let layers = exact_costs(scn)
        .into_iter()
        .map(|c| LayerDoc {
            fp_work: num(c.fp_flops),
            bp_work: num(c.bp_flops),
            act_size: num(c.act_bits),
            grad_size: num(c.grad_bits),
            opt_state_size: num(c.opt_state_bits),
            param_size: num(c.param_bits),
        })
        .collect();
    let nodes = scn
        .nodes
        .iter()
        .map(|n| NodeDoc {
            id: n.id.clone(),
            kind: n.kind,
            compute: num(n.compute),
            intensity: Some(n.intensity),
            memory: num(n.memory),
            tx_power: num(n.tx_power),
            position: n.position,
            init_fp: Some(num(n.init_fp)),
            init_bp: Some(num(n.init_bp)),
            bp_threshold: Some(n.bp_threshold),
        })
        .collect();
    let links = scn
        .links
        .iter()
        .map(|l| LinkDoc {
            from: scn.nodes[l.from].id.clone(),
            to: scn.nodes[l.to].id.clone(),
            bandwidth: Some(num(l.bandwidth)),
            fixed_rate: l.fixed_rate.map(num),
            distance: l.distance.map(num),
            symmetric: false,
        })
        .collect();
    ScenarioDoc {
        layers,
        nodes,
        links,
        params: ParamsDoc {
            minibatch: Some(scn.minibatch),
            max_submodels: Some(scn.max_submodels),
            pathloss: Some(scn.pathloss),
            noise_density: Some(num(scn.noise_density)),
            topology: Some(scn.topology.name().to_string()),
        },
        plan: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorSpec};

    const MINIMAL: &str = r#"{
        "layers": [
            {"fp_work": "1 GFLOP", "bp_work": "2 GFLOP", "act_size": "1 MB", "grad_size": "1 MB"},
            {"fp_work": 5e8, "bp_work": 1e9, "act_size": 1000, "grad_size": 1000}
        ],
        "nodes": [
            {"id": "c0", "kind": "client", "compute": "1 TFLOPS", "memory": "4 GB", "tx_power": "200 mW"},
            {"id": "s0", "kind": "server", "compute": "5 TFLOPS", "memory": "8 GB", "tx_power": "300 mW", "position": [100, 0]},
            {"id": "s1", "kind": "server", "compute": "5 TFLOPS", "memory": "8 GB", "tx_power": "300 mW", "position": [0, 100]}
        ],
        "links": [
            {"from": "c0", "to": "s0", "bandwidth": "20 MHz", "symmetric": true},
            {"from": "s0", "to": "s1", "fixed_rate": "1 Gbps", "symmetric": true}
        ],
        "params": {"max_submodels": 2}
    }"#;

    #[test]
    fn minimal_file_loads() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.num_layers(), 2);
        assert_eq!(s.num_servers(), 2);
        assert_eq!(s.num_clients(), 1);
        assert_eq!(s.links.len(), 4);
        assert_eq!((s.links[0].from, s.links[0].to), (0, 1));
        assert_eq!((s.links[1].from, s.links[1].to), (1, 0));
        assert_eq!(s.layer(1).act_size, 8e6);
        assert_eq!(s.layer(2).fp_work_cum, 1.5e9);
        assert_eq!(s.links[2].fixed_rate, Some(1e9));
        // Table I defaults fill the gaps
        assert_eq!(s.minibatch, 512);
        assert_eq!(s.pathloss, 3.5);
        assert_eq!(s.nodes[0].intensity, 1.0 / 32.0);
        assert_eq!(s.nodes[0].bp_threshold, 32);
        assert_eq!(s.nodes[0].init_fp, 0.001);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&scenario_to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
        for seed in 0..20 {
            let spec = GeneratorSpec {
                servers: 1 + seed as usize % 7,
                clients: 1 + seed as usize % 3,
                ..GeneratorSpec::default()
            };
            let g = generate_scenario(seed, &spec).unwrap();
            let back = parse_scenario(&scenario_to_string(&g).unwrap()).unwrap();
            assert_eq!(g, back, "seed {seed}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = parse_scenario(MINIMAL).unwrap();
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
        let plan = PlanFile {
            cuts: vec![1],
            placement: vec!["s1".into()],
            micro_batch: 16,
        };
        let pp = dir.path().join("p.json");
        save_plan(&plan, &pp).unwrap();
        let back = load_plan(&pp).unwrap();
        assert_eq!(back, plan);
        let (sp, b) = back.resolve(&s).unwrap();
        assert_eq!(sp.placement(), &[2]);
        assert_eq!(b, 16);
    }

    #[test]
    fn embedded_plan_with_cut_past_the_end_is_rejected() {
        let text = MINIMAL.replace(
            r#""params": {"max_submodels": 2}"#,
            r#""params": {"max_submodels": 2}, "plan": {"cuts": [3], "placement": ["s0"], "micro_batch": 8}"#,
        );
        assert!(matches!(parse_scenario(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_fields_and_bad_units_are_reported() {
        let text = MINIMAL.replace(
            r#""max_submodels": 2"#,
            r#""max_submodels": 2, "colour": 1"#,
        );
        match parse_scenario(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(line > 1);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = MINIMAL.replace(r#""4 GB""#, r#""4 parsecs""#);
        match parse_scenario(&text) {
            Err(Error::Field { field, .. }) => assert_eq!(field, "nodes[0].memory"),
            other => panic!("expected field error, got {other:?}"),
        }
        assert!(matches!(parse_scenario("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_topology_is_rejected() {
        let text = MINIMAL.replace(
            r#""max_submodels": 2"#,
            r#""max_submodels": 2, "topology": "ring""#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::UnknownTopology(_))
        ));
    }

    #[test]
    fn exact_step_reproduces_cumulative_sums() {
        let cums = [0.1, 0.30000000000000004, 1e17 + 3.0, 1e17 + 64.0, 3e17];
        let mut prev = 0.0;
        for &c in &cums {
            let step = exact_step(prev, c);
            assert_eq!(prev + step, c);
            prev = c;
        }
    }
}
