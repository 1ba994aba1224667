use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NodeKind, Scenario};
use crate::error::{Error, Result};

/// Cut layers plus the server hosting each non-client submodel.
///
/// Submodel 1 always runs on the client pool and covers layers `1..=cuts[0]`.
/// Submodel `k + 2` (for `k` in `0..placement.len()`) covers
/// `cuts[k] + 1 ..= cuts[k + 1]` (the last one ends at layer I) and runs on
/// `placement[k]`. Plans are kept canonical: no empty submodels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitPlan {
    cuts: Vec<usize>,
    placement: Vec<usize>,
}

impl SplitPlan {
    /// Builds a canonical plan. `cuts` must be strictly increasing in
    /// `1..I` and `placement` must hold one server per cut.
    pub fn new(scenario: &Scenario, cuts: Vec<usize>, placement: Vec<usize>) -> Result<Self> {
        let plan = SplitPlan { cuts, placement };
        plan.check(scenario)?;
        Ok(plan)
    }

    /// Builds a plan from a possibly non-canonical description: `cuts` are
    /// non-decreasing values in `1..=I`, one per placement entry. Submodels
    /// with no layers are dropped.
    pub fn canonicalize(scenario: &Scenario, cuts: &[usize], placement: &[usize]) -> Result<Self> {
        let layers = scenario.num_layers();
        if cuts.len() != placement.len() {
            return Err(Error::Validation(format!(
                "{} cuts but {} placed submodels",
                cuts.len(),
                placement.len()
            )));
        }
        if cuts.is_empty() {
            return Err(Error::Validation("a plan needs at least one cut".into()));
        }
        if let Some(&c) = cuts.iter().find(|&&c| c < 1 || c > layers) {
            return Err(Error::Validation(format!("cut {c} outside 1..={layers}")));
        }
        if cuts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation(format!(
                "cuts {cuts:?} are not in layer order"
            )));
        }
        let mut out_cuts = vec![cuts[0]];
        let mut out_place = Vec::new();
        // submodel k+2 spans (cuts[k], cuts[k+1]] with cuts[len] = I
        for k in 0..placement.len() {
            let start = cuts[k];
            let end = cuts.get(k + 1).copied().unwrap_or(layers);
            if end > start {
                out_place.push(placement[k]);
                if end < layers {
                    out_cuts.push(end);
                }
            }
        }
        out_cuts.truncate(out_place.len());
        SplitPlan::new(scenario, out_cuts, out_place)
    }

    fn check(&self, scenario: &Scenario) -> Result<()> {
        let layers = scenario.num_layers();
        let fail = |m: String| Err(Error::Validation(m));
        if self.cuts.is_empty() || self.cuts.len() != self.placement.len() {
            return fail(format!(
                "plan needs matching non-empty cuts and placement (got {} and {})",
                self.cuts.len(),
                self.placement.len()
            ));
        }
        if self.cuts.len() + 1 > scenario.max_submodels {
            return fail(format!(
                "{} submodels exceed K={}",
                self.cuts.len() + 1,
                scenario.max_submodels
            ));
        }
        if self.cuts[0] < 1 || *self.cuts.last().unwrap() >= layers {
            return fail(format!("cuts {:?} must lie in 1..{layers}", self.cuts));
        }
        if self.cuts.windows(2).any(|w| w[1] <= w[0]) {
            return fail(format!("cuts {:?} are not strictly increasing", self.cuts));
        }
        for &n in &self.placement {
            match scenario.nodes.get(n) {
                Some(node) if node.kind == NodeKind::Server => {}
                Some(node) => return fail(format!("submodel placed on client `{}`", node.id)),
                None => return fail(format!("placement references unknown node {n}")),
            }
        }
        if self.placement.windows(2).any(|w| w[0] == w[1]) {
            return fail(format!(
                "consecutive submodels share a server in placement {:?}",
                self.placement
            ));
        }
        Ok(())
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn placement(&self) -> &[usize] {
        &self.placement
    }

    /// Number of non-empty submodels, client submodel included.
    pub fn effective_count(&self) -> usize {
        self.placement.len() + 1
    }

    /// Layer range `(first, last)` of submodel `k` (1-based).
    pub fn range(&self, k: usize, layers: usize) -> (usize, usize) {
        assert!(
            k >= 1 && k <= self.effective_count(),
            "submodel {k} out of range"
        );
        let first = if k == 1 { 1 } else { self.cuts[k - 2] + 1 };
        let last = if k == self.effective_count() {
            layers
        } else {
            self.cuts[k - 1]
        };
        (first, last)
    }

    /// Cut layer of submodel `k` (its last layer), for `k < K_eff`.
    pub fn cut(&self, k: usize) -> usize {
        self.cuts[k - 1]
    }

    /// Server hosting submodel `k >= 2`.
    pub fn host(&self, k: usize) -> usize {
        self.placement[k - 2]
    }

    /// True when no server hosts more than one submodel.
    pub fn has_distinct_servers(&self) -> bool {
        let mut p = self.placement.clone();
        p.sort_unstable();
        p.windows(2).all(|w| w[0] != w[1])
    }
}

impl fmt::Display for SplitPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cuts={:?} placement={:?}", self.cuts, self.placement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::toy_scenario;

    #[test]
    fn canonicalize_drops_empty_submodels() {
        let s = toy_scenario(5, 1, 3, 4);
        let servers: Vec<usize> = s.servers().collect();
        // submodel 2 would be empty (cuts 2,2), submodel 4 ends at 5
        let p =
            SplitPlan::canonicalize(&s, &[2, 2, 3], &[servers[0], servers[1], servers[2]]).unwrap();
        assert_eq!(p.cuts(), &[2, 3]);
        assert_eq!(p.placement(), &[servers[1], servers[2]]);
        assert_eq!(p.range(2, 5), (3, 3));
        assert_eq!(p.range(3, 5), (4, 5));
        // trailing cut at I empties the last submodel
        let p = SplitPlan::canonicalize(&s, &[2, 5], &[servers[0], servers[1]]).unwrap();
        assert_eq!(p.cuts(), &[2]);
        assert_eq!(p.placement(), &[servers[0]]);
    }

    #[test]
    fn rejects_bad_plans() {
        let s = toy_scenario(4, 1, 2, 3);
        let sv: Vec<usize> = s.servers().collect();
        assert!(SplitPlan::new(&s, vec![5], vec![sv[0]]).is_err());
        assert!(SplitPlan::new(&s, vec![2, 2], vec![sv[0], sv[1]]).is_err());
        assert!(SplitPlan::new(&s, vec![1, 2], vec![sv[0], sv[0]]).is_err());
        assert!(
            SplitPlan::new(&s, vec![1], vec![0]).is_err(),
            "node 0 is a client"
        );
        assert!(
            SplitPlan::new(&s, vec![1, 2, 3], vec![sv[0], sv[1], sv[0]]).is_err(),
            "K=3"
        );
        assert!(SplitPlan::canonicalize(&s, &[3, 2], &[sv[0], sv[1]]).is_err());
        // merging an empty middle submodel makes neighbours collide
        assert!(SplitPlan::canonicalize(&s, &[1, 2, 2], &[sv[0], sv[1], sv[0]]).is_err());
    }
}
