use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The seven selection strategies compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Random,
    Longest,
    ClusterSize,
    ClusterMajority,
    #[serde(rename = "gencluster")]
    GenCluster,
    #[serde(rename = "gencluster_random_rep")]
    GenClusterRandomRep,
    #[serde(rename = "gencluster_score_based")]
    GenClusterScoreBased,
}

impl StrategyName {
    pub const ALL: [StrategyName; 7] = [
        StrategyName::Random,
        StrategyName::Longest,
        StrategyName::ClusterSize,
        StrategyName::ClusterMajority,
        StrategyName::GenCluster,
        StrategyName::GenClusterRandomRep,
        StrategyName::GenClusterScoreBased,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyName::Random => "random",
            StrategyName::Longest => "longest",
            StrategyName::ClusterSize => "cluster_size",
            StrategyName::ClusterMajority => "cluster_majority",
            StrategyName::GenCluster => "gencluster",
            StrategyName::GenClusterRandomRep => "gencluster_random_rep",
            StrategyName::GenClusterScoreBased => "gencluster_score_based",
        }
    }

    /// Whether the strategy plays the pairwise tournament.
    pub fn uses_tournament(&self) -> bool {
        matches!(
            self,
            StrategyName::GenCluster
                | StrategyName::GenClusterRandomRep
                | StrategyName::GenClusterScoreBased
        )
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyName {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Selection granularity of the `random` and `longest` baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Flat list of candidates, no clustering.
    #[default]
    Candidate,
    /// Clusters in random order, submitted round-robin.
    Cluster,
}
