use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dims::Dimension;
use crate::prompts::StageId;

/// Which call layout the reasoning graph uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Merged extraction per patent and one merged reasoning call: 8 calls.
    #[default]
    Compact,
    /// One call per prompt: 15 calls.
    Expanded,
}

impl PlanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanMode::Compact => "compact",
            PlanMode::Expanded => "expanded",
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "compact" => Ok(PlanMode::Compact),
            "expanded" => Ok(PlanMode::Expanded),
            other => Err(format!("unknown plan mode `{other}` (expected compact or expanded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: String,
    pub stage: StageId,
    pub deps: Vec<String>,
}

impl PlanNode {
    fn new(id: &str, stage: StageId, deps: &[&str]) -> Self {
        PlanNode {
            id: id.to_string(),
            stage,
            deps: deps.iter().map(|d| d.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` depends on unknown node `{dep}`")]
    UnknownDependency { node: String, dep: String },
    #[error("dependency cycle through `{0}`")]
    Cycle(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// The reasoning graph: each node is one model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MargPlan {
    pub mode: PlanMode,
    pub nodes: Vec<PlanNode>,
}

pub(crate) const EXTRACT_A: &str = "extract_a";
pub(crate) const EXTRACT_B: &str = "extract_b";
pub(crate) const DOMAIN_REL: &str = "domain_rel";
pub(crate) const INFO_DIST: &str = "info_dist";
pub(crate) const DIM_RELEVANCE: &str = "dim_relevance";
pub(crate) const CROSS_VALID: &str = "cross_valid";
pub(crate) const CONTEXT_REASONING: &str = "context_reasoning";
pub(crate) const WEIGHT_INTEGRATE: &str = "weight_integrate";
pub(crate) const FINAL_CALC: &str = "final_calc";

pub(crate) fn extract_node(dim: Dimension, side: char) -> String {
    format!("extract_{}_{side}", dim.as_str())
}

pub(crate) fn sim_node(dim: Dimension) -> String {
    format!("sim_{}", dim.as_str())
}

/// Builds the graph for `mode`.
pub fn build_plan(mode: PlanMode) -> MargPlan {
    let sims: Vec<String> = Dimension::ALL.iter().map(|d| sim_node(*d)).collect();
    let sim_refs: Vec<&str> = sims.iter().map(String::as_str).collect();
    let mut nodes = Vec::new();
    match mode {
        PlanMode::Compact => {
            nodes.push(PlanNode::new(EXTRACT_A, StageId::ExtractAll, &[]));
            nodes.push(PlanNode::new(EXTRACT_B, StageId::ExtractAll, &[]));
            for dim in Dimension::ALL {
                nodes.push(PlanNode::new(&sim_node(dim), StageId::similarity(dim), &[EXTRACT_A, EXTRACT_B]));
            }
            nodes.push(PlanNode::new(CONTEXT_REASONING, StageId::ContextReasoning, &sim_refs));
            nodes.push(PlanNode::new(WEIGHT_INTEGRATE, StageId::WeightIntegrate, &[CONTEXT_REASONING]));
        }
        PlanMode::Expanded => {
            for side in ['a', 'b'] {
                for dim in Dimension::ALL {
                    nodes.push(PlanNode::new(&extract_node(dim, side), StageId::extraction(dim), &[]));
                }
            }
            for dim in Dimension::ALL {
                let a = extract_node(dim, 'a');
                let b = extract_node(dim, 'b');
                nodes.push(PlanNode::new(&sim_node(dim), StageId::similarity(dim), &[&a, &b]));
            }
            nodes.push(PlanNode::new(DOMAIN_REL, StageId::DomainRel, &[]));
            nodes.push(PlanNode::new(INFO_DIST, StageId::InfoDist, &sim_refs));
            nodes.push(PlanNode::new(DIM_RELEVANCE, StageId::DimRelevance, &[DOMAIN_REL]));
            nodes.push(PlanNode::new(CROSS_VALID, StageId::CrossValid, &[DIM_RELEVANCE, INFO_DIST]));
            nodes.push(PlanNode::new(
                WEIGHT_INTEGRATE,
                StageId::WeightIntegrate,
                &[DOMAIN_REL, INFO_DIST, DIM_RELEVANCE, CROSS_VALID],
            ));
        }
    }
    let mut final_deps = vec![WEIGHT_INTEGRATE];
    final_deps.extend(sim_refs.iter().copied());
    nodes.push(PlanNode::new(FINAL_CALC, StageId::FinalCalc, &final_deps));
    MargPlan { mode, nodes }
}

impl MargPlan {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    /// Checks ids are unique, dependencies exist and the graph is acyclic.
    pub fn validate(&self) -> Result<(), PlanError> {
        self.topological_order().map(|_| ())
    }

    /// Kahn order; ties are broken by position in `nodes`.
    pub fn topological_order(&self) -> Result<Vec<&PlanNode>, PlanError> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id.as_str(), i).is_some() {
                return Err(PlanError::DuplicateNode(node.id.clone()));
            }
        }
        for node in &self.nodes {
            for dep in &node.deps {
                if !index.contains_key(dep.as_str()) {
                    return Err(PlanError::UnknownDependency {
                        node: node.id.clone(),
                        dep: dep.clone(),
                    });
                }
            }
        }
        let mut done: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        while order.len() < self.nodes.len() {
            let next = self
                .nodes
                .iter()
                .find(|n| !done.contains(n.id.as_str()) && n.deps.iter().all(|d| done.contains(d.as_str())));
            match next {
                Some(node) => {
                    done.insert(node.id.as_str());
                    order.push(node);
                }
                None => {
                    let stuck = self.nodes.iter().find(|n| !done.contains(n.id.as_str())).unwrap();
                    return Err(PlanError::Cycle(stuck.id.clone()));
                }
            }
        }
        Ok(order)
    }

    /// Groups nodes into waves whose members only depend on earlier waves.
    pub fn waves(&self) -> Result<Vec<Vec<&PlanNode>>, PlanError> {
        let order = self.topological_order()?;
        let mut level: BTreeMap<&str, usize> = BTreeMap::new();
        let mut waves: Vec<Vec<&PlanNode>> = Vec::new();
        for node in order {
            let l = node
                .deps
                .iter()
                .map(|d| level[d.as_str()] + 1)
                .max()
                .unwrap_or(0);
            level.insert(node.id.as_str(), l);
            if waves.len() <= l {
                waves.resize_with(l + 1, Vec::new);
            }
            waves[l].push(node);
        }
        Ok(waves)
    }

    /// Keeps `targets` and everything they transitively depend on.
    pub fn restrict(&self, targets: &[&str]) -> Result<MargPlan, PlanError> {
        let mut keep: BTreeSet<String> = BTreeSet::new();
        let mut stack: Vec<String> = Vec::new();
        for t in targets {
            if !self.contains(t) {
                return Err(PlanError::UnknownNode(t.to_string()));
            }
            stack.push(t.to_string());
        }
        while let Some(id) = stack.pop() {
            if keep.insert(id.clone()) {
                let node = self.node(&id).ok_or_else(|| PlanError::UnknownNode(id.clone()))?;
                stack.extend(node.deps.iter().cloned());
            }
        }
        Ok(MargPlan {
            mode: self.mode,
            nodes: self.nodes.iter().filter(|n| keep.contains(&n.id)).cloned().collect(),
        })
    }

    /// The plan without its final-calculation call.
    pub fn without_final(&self) -> MargPlan {
        MargPlan {
            mode: self.mode,
            nodes: self.nodes.iter().filter(|n| n.id != FINAL_CALC).cloned().collect(),
        }
    }

    /// Only the extraction and similarity calls.
    pub fn scores_only(&self) -> MargPlan {
        let sims: Vec<String> = Dimension::ALL.iter().map(|d| sim_node(*d)).collect();
        let refs: Vec<&str> = sims.iter().map(String::as_str).collect();
        self.restrict(&refs).expect("every plan has similarity nodes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_counts() {
        assert_eq!(build_plan(PlanMode::Compact).len(), 8);
        assert_eq!(build_plan(PlanMode::Expanded).len(), 15);
        assert_eq!(build_plan(PlanMode::Compact).without_final().len(), 7);
        assert_eq!(build_plan(PlanMode::Expanded).scores_only().len(), 9);
        assert_eq!(build_plan(PlanMode::Compact).scores_only().len(), 5);
    }

    #[test]
    fn both_plans_sort() {
        for mode in [PlanMode::Compact, PlanMode::Expanded] {
            let plan = build_plan(mode);
            let order = plan.topological_order().unwrap();
            assert_eq!(order.len(), plan.len());
            assert_eq!(order.last().unwrap().id, FINAL_CALC);
        }
    }

    #[test]
    fn expanded_edges() {
        let plan = build_plan(PlanMode::Expanded);
        let deps = |id: &str| plan.node(id).unwrap().deps.clone();
        assert!(deps(DOMAIN_REL).is_empty());
        assert_eq!(deps(INFO_DIST), vec!["sim_technical", "sim_domain", "sim_claim"]);
        assert_eq!(deps(DIM_RELEVANCE), vec![DOMAIN_REL]);
        assert_eq!(deps(CROSS_VALID), vec![DIM_RELEVANCE, INFO_DIST]);
        assert_eq!(deps(WEIGHT_INTEGRATE), vec![DOMAIN_REL, INFO_DIST, DIM_RELEVANCE, CROSS_VALID]);
        let mut stages: Vec<StageId> = plan.nodes.iter().map(|n| n.stage).collect();
        stages.sort();
        stages.dedup();
        assert_eq!(stages.len(), 12);
    }

    #[test]
    fn waves_respect_dependencies() {
        let plan = build_plan(PlanMode::Expanded);
        let waves = plan.waves().unwrap();
        let ids: Vec<Vec<&str>> = waves.iter().map(|w| w.iter().map(|n| n.id.as_str()).collect()).collect();
        assert_eq!(ids[0].len(), 7);
        assert!(ids[0].contains(&DOMAIN_REL));
        assert_eq!(ids.last().unwrap(), &vec![FINAL_CALC]);
        let compact: Vec<usize> = build_plan(PlanMode::Compact).waves().unwrap().iter().map(Vec::len).collect();
        assert_eq!(compact, vec![2, 3, 1, 1, 1]);
    }

    #[test]
    fn validation_errors() {
        let mut plan = build_plan(PlanMode::Compact);
        plan.nodes[0].deps.push(FINAL_CALC.into());
        assert_eq!(plan.validate(), Err(PlanError::Cycle(EXTRACT_A.into())));

        let mut plan = build_plan(PlanMode::Compact);
        plan.nodes[1].deps.push("ghost".into());
        assert!(matches!(plan.validate(), Err(PlanError::UnknownDependency { .. })));

        let mut plan = build_plan(PlanMode::Compact);
        let dup = plan.nodes[0].clone();
        plan.nodes.push(dup);
        assert_eq!(plan.validate(), Err(PlanError::DuplicateNode(EXTRACT_A.into())));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Expanded".parse::<PlanMode>().unwrap(), PlanMode::Expanded);
        assert!("full".parse::<PlanMode>().is_err());
    }
}
