//! Per-step flows from instance types to survivors, the removal bin (US)
//! and the addition bin (OS).

use serde::{Deserialize, Serialize};

use crate::typing::InstanceType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SankeyTarget {
    Safe,
    Borderline,
    Rare,
    Outlier,
    Us,
    Os,
}

impl From<InstanceType> for SankeyTarget {
    fn from(t: InstanceType) -> Self {
        match t {
            InstanceType::Safe => SankeyTarget::Safe,
            InstanceType::Borderline => SankeyTarget::Borderline,
            InstanceType::Rare => SankeyTarget::Rare,
            InstanceType::Outlier => SankeyTarget::Outlier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyFlow {
    pub step_index: usize,
    pub source: InstanceType,
    pub target: SankeyTarget,
    pub count: usize,
}

/// Flows of one step. `population[t]` counts the pre-step instances of type
/// `t`, `removed[t]` those removed and `added[t]` the synthetic points whose
/// parent had type `t`. Zero flows are omitted.
pub fn step_flows(
    step_index: usize,
    population: [usize; 4],
    removed: [usize; 4],
    added: [usize; 4],
) -> Vec<SankeyFlow> {
    let mut flows = Vec::new();
    for t in InstanceType::ALL {
        let i = t.index();
        let mut push = |target: SankeyTarget, count: usize| {
            if count > 0 {
                flows.push(SankeyFlow {
                    step_index,
                    source: t,
                    target,
                    count,
                });
            }
        };
        push(t.into(), population[i] - removed[i]);
        push(SankeyTarget::Us, removed[i]);
        push(SankeyTarget::Os, added[i]);
    }
    flows
}

/// Cumulative (US, OS) bin sizes over all flows.
pub fn bin_totals(flows: &[SankeyFlow]) -> (usize, usize) {
    flows.iter().fold((0, 0), |(us, os), f| match f.target {
        SankeyTarget::Us => (us + f.count, os),
        SankeyTarget::Os => (us, os + f.count),
        _ => (us, os),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flows_conserve_population() {
        let flows = step_flows(3, [10, 5, 2, 1], [0, 1, 1, 1], [2, 0, 0, 0]);
        let out: usize = flows
            .iter()
            .filter(|f| f.target != SankeyTarget::Os)
            .map(|f| f.count)
            .sum();
        assert_eq!(out, 18);
        assert_eq!(bin_totals(&flows), (3, 2));
        assert!(flows.iter().all(|f| f.step_index == 3 && f.count > 0));
    }
}
