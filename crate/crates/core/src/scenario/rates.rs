use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{LinkProfile, NodeKind, Scenario};

/// Shannon rate in bit/s for a link of `bandwidth` Hz.
pub fn shannon_rate(
    bandwidth: f64,
    tx_power: f64,
    distance: f64,
    pathloss: f64,
    noise_density: f64,
) -> f64 {
    let snr = tx_power * distance.max(1.0).powf(-pathloss) / (noise_density * bandwidth);
    bandwidth * (1.0 + snr).log2()
}

/// Nominal rate of one directed link, honoring fixed rates and distance overrides.
pub(crate) fn link_rate(scn: &Scenario, link: &LinkProfile) -> f64 {
    if let Some(r) = link.fixed_rate {
        return r;
    }
    let d = link
        .distance
        .unwrap_or_else(|| scn.distance(link.from, link.to));
    shannon_rate(
        link.bandwidth,
        scn.nodes[link.from].tx_power,
        d,
        scn.pathloss,
        scn.noise_density,
    )
}

/// Seconds per bit between every ordered node pair. Pairs with no route hold
/// `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    n: usize,
    delay: Vec<f64>,
}

impl DelayMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Raw delay-per-bit; infinite for unreachable pairs.
    pub fn delay(&self, from: usize, to: usize) -> f64 {
        self.delay[from * self.n + to]
    }

    /// Delay-per-bit, or `None` when `to` cannot be reached from `from`.
    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        let d = self.delay(from, to);
        d.is_finite().then_some(d)
    }

    pub fn is_reachable(&self, from: usize, to: usize) -> bool {
        self.delay(from, to).is_finite()
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Direct one-hop delay-per-bit table (infinite where no link exists).
pub(crate) fn hop_delays(scn: &Scenario) -> Vec<f64> {
    let n = scn.nodes.len();
    let mut hop = vec![f64::INFINITY; n * n];
    for l in &scn.links {
        let d = 1.0 / link_rate(scn, l);
        let slot = &mut hop[l.from * n + l.to];
        if d < *slot {
            *slot = d;
        }
    }
    hop
}

/// Effective delay-per-bit for every ordered pair: direct links cost
/// `1/rate`, other pairs take the cheapest store-and-forward route. Only
/// servers relay traffic.
pub fn effective_rate_matrix(scn: &Scenario) -> DelayMatrix {
    let n = scn.nodes.len();
    let hop = hop_delays(scn);
    let mut delay = vec![f64::INFINITY; n * n];
    for src in 0..n {
        let dist = &mut delay[src * n..(src + 1) * n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Entry(0.0, src));
        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u != src && scn.nodes[u].kind == NodeKind::Client {
                continue;
            }
            for v in 0..n {
                let w = hop[u * n + v];
                if w.is_finite() && !done[v] {
                    let nd = d + w;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Entry(nd, v));
                    }
                }
            }
        }
    }
    DelayMatrix { n, delay }
}
