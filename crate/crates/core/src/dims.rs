//! The three similarity dimensions and a per-dimension value triple.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three aspects a patent is decomposed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Technical,
    Domain,
    Claim,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Technical, Dimension::Domain, Dimension::Claim];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Technical => "technical",
            Dimension::Domain => "domain",
            Dimension::Claim => "claim",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "technical" | "technical_features" | "t" => Ok(Dimension::Technical),
            "domain" | "application" | "application_domains" | "d" => Ok(Dimension::Domain),
            "claim" | "claims" | "claim_scope" | "c" => Ok(Dimension::Claim),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

/// A value for each dimension, in technical / domain / claim order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dims<T> {
    pub technical: T,
    pub domain: T,
    pub claim: T,
}

impl<T> Dims<T> {
    pub fn new(technical: T, domain: T, claim: T) -> Self {
        Self { technical, domain, claim }
    }

    pub fn get(&self, dim: Dimension) -> &T {
        match dim {
            Dimension::Technical => &self.technical,
            Dimension::Domain => &self.domain,
            Dimension::Claim => &self.claim,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Dims<U> {
        Dims {
            technical: f(&self.technical),
            domain: f(&self.domain),
            claim: f(&self.claim),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Dimension, &T)> {
        Dimension::ALL.into_iter().map(move |d| (d, self.get(d)))
    }
}

impl<T: Copy> Dims<T> {
    pub fn to_array(self) -> [T; 3] {
        [self.technical, self.domain, self.claim]
    }

    pub fn from_array([technical, domain, claim]: [T; 3]) -> Self {
        Self { technical, domain, claim }
    }
}
