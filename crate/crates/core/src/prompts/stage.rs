use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dims::Dimension;

/// Every distinct prompt the pipeline and its baselines can issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    ExtractTechnical,
    ExtractDomain,
    ExtractClaim,
    SimTechnical,
    SimDomain,
    SimClaim,
    DomainRel,
    InfoDist,
    DimRelevance,
    CrossValid,
    WeightIntegrate,
    FinalCalc,
    BaselineIO,
    BaselineCoT,
    BaselineFewShot,
    /// Compact plan: all three extractions for one patent in one call.
    ExtractAll,
    /// Compact plan: domain relation, distribution, relevance and cross-validation in one call.
    ContextReasoning,
}

impl StageId {
    pub const ALL: [StageId; 17] = [
        StageId::ExtractTechnical,
        StageId::ExtractDomain,
        StageId::ExtractClaim,
        StageId::SimTechnical,
        StageId::SimDomain,
        StageId::SimClaim,
        StageId::DomainRel,
        StageId::InfoDist,
        StageId::DimRelevance,
        StageId::CrossValid,
        StageId::WeightIntegrate,
        StageId::FinalCalc,
        StageId::BaselineIO,
        StageId::BaselineCoT,
        StageId::BaselineFewShot,
        StageId::ExtractAll,
        StageId::ContextReasoning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::ExtractTechnical => "ExtractTechnical",
            StageId::ExtractDomain => "ExtractDomain",
            StageId::ExtractClaim => "ExtractClaim",
            StageId::SimTechnical => "SimTechnical",
            StageId::SimDomain => "SimDomain",
            StageId::SimClaim => "SimClaim",
            StageId::DomainRel => "DomainRel",
            StageId::InfoDist => "InfoDist",
            StageId::DimRelevance => "DimRelevance",
            StageId::CrossValid => "CrossValid",
            StageId::WeightIntegrate => "WeightIntegrate",
            StageId::FinalCalc => "FinalCalc",
            StageId::BaselineIO => "BaselineIO",
            StageId::BaselineCoT => "BaselineCoT",
            StageId::BaselineFewShot => "BaselineFewShot",
            StageId::ExtractAll => "ExtractAll",
            StageId::ContextReasoning => "ContextReasoning",
        }
    }

    pub fn extraction(dim: Dimension) -> Self {
        match dim {
            Dimension::Technical => StageId::ExtractTechnical,
            Dimension::Domain => StageId::ExtractDomain,
            Dimension::Claim => StageId::ExtractClaim,
        }
    }

    pub fn similarity(dim: Dimension) -> Self {
        match dim {
            Dimension::Technical => StageId::SimTechnical,
            Dimension::Domain => StageId::SimDomain,
            Dimension::Claim => StageId::SimClaim,
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageId::ALL
            .into_iter()
            .find(|stage| stage.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}
