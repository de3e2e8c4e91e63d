use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::*;
use super::result::{DimensionRun, DimensionScores, NodeTrace, SimilarityResult, Warning};
use super::weights::{weighted_sum, WeightVector};
use crate::corpus::{classify_ipc_relation, DomainRelation, PatentDocument, PatentPair};
use crate::dims::{Dimension, Dims};
use crate::gateway::{
    merge_usage, merge_usage_concurrent, ChatRequest, Gateway, GatewayError, UsageRecord, DEFAULT_MODEL,
    DEFAULT_TEMPERATURE, DEFAULT_TOP_P,
};
use crate::prompts::{self, format_relation, AspectProfile, PromptContext, PromptError, StageId};
use crate::scalar::{round3, Real};

/// How the final score is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalMode {
    /// Weighted sum computed locally; no final-calculation call.
    Local,
    /// Weighted sum computed locally and also requested from the model; a
    /// disagreement is recorded as a warning. The local value is kept.
    #[default]
    LlmCheck,
}

impl FinalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalMode::Local => "local",
            FinalMode::LlmCheck => "llm-check",
        }
    }
}

impl fmt::Display for FinalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FinalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "local" => Ok(FinalMode::Local),
            "llm-check" | "llmcheck" | "llm" => Ok(FinalMode::LlmCheck),
            other => Err(format!("unknown final mode `{other}` (expected local or llm-check)")),
        }
    }
}

/// Sampling settings shared by every call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            model: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub mode: PlanMode,
    pub final_mode: FinalMode,
    /// Upper bound on concurrent calls within one pair.
    pub jobs: usize,
    /// Shuffles the order ready nodes are started in. `None` keeps plan order.
    pub schedule_seed: Option<u64>,
    pub sampling: Sampling,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mode: PlanMode::Compact,
            final_mode: FinalMode::LlmCheck,
            jobs: 4,
            schedule_seed: None,
            sampling: Sampling::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageFailure {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Prompt(PromptError),
    #[error("{0} (after one re-prompt)")]
    Parse(PromptError),
    #[error("missing upstream output `{0}`")]
    MissingInput(String),
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid plan: {0}")]
    Plan(#[from] PlanError),
    #[error("stage `{node}` failed: {source}")]
    Stage { node: String, source: StageFailure },
}

impl EngineError {
    pub fn node(&self) -> Option<&str> {
        match self {
            EngineError::Stage { node, .. } => Some(node),
            EngineError::Plan(_) => None,
        }
    }
}

/// Parsed output of one node.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NodeOutput<T> {
    Summary(String),
    Profile(AspectProfile),
    Score(prompts::ScoreWithReason<T>),
    Relation(DomainRelation),
    Pattern(prompts::DistributionPattern),
    Relevance(prompts::RelevanceAssessment<T>),
    Robustness(prompts::RobustnessScore<T>),
    Reasoning(prompts::ReasoningBundle<T>),
    Weights {
        weights: WeightVector<T>,
        fallback: bool,
        renormalized: bool,
    },
    Final(prompts::FinalScore<T>),
}

/// Reply plus bookkeeping from [`ask`].
pub(crate) struct Answer<R> {
    pub value: R,
    pub trace: NodeTrace,
    pub reprompted: bool,
}

/// Sends one prompt, re-prompting once with a format reminder when the reply does not parse.
pub(crate) fn ask<R>(
    gateway: &Gateway,
    sampling: &Sampling,
    stage: StageId,
    key: &str,
    prompt: String,
    parse: impl Fn(&str) -> Result<R, PromptError>,
) -> Result<Answer<R>, StageFailure> {
    let request = ChatRequest::new(stage, key, prompt)
        .with_sampling(sampling.temperature, sampling.top_p)
        .with_model(sampling.model.clone());
    let first = gateway.complete(&request)?;
    let mut usage = first.usage;
    let mut cached = first.cached;
    match parse(&first.text) {
        Ok(value) => {
            return Ok(Answer {
                value,
                trace: NodeTrace {
                    stage,
                    attempts: 1,
                    cached,
                    usage,
                    response: first.text,
                },
                reprompted: false,
            })
        }
        Err(PromptError::ParseFailure { message, .. }) => {
            log::warn!("{stage} reply for {key} did not parse ({message}); re-prompting");
        }
        Err(other) => return Err(StageFailure::Parse(other)),
    }
    let retry = ChatRequest {
        prompt: prompts::with_format_reminder(stage, &request.prompt),
        ..request
    };
    let second = gateway.complete(&retry)?;
    usage = merge_usage(usage, second.usage);
    cached &= second.cached;
    let value = parse(&second.text).map_err(StageFailure::Parse)?;
    Ok(Answer {
        value,
        trace: NodeTrace {
            stage,
            attempts: 2,
            cached,
            usage,
            response: second.text,
        },
        reprompted: true,
    })
}

struct NodeDone<T> {
    output: NodeOutput<T>,
    trace: NodeTrace,
    warnings: Vec<Warning>,
}

/// Outputs of an executed plan, keyed by node id.
pub(crate) struct PlanRun<T> {
    pub outputs: BTreeMap<String, NodeOutput<T>>,
    pub trace: BTreeMap<String, NodeTrace>,
    pub warnings: Vec<Warning>,
    pub usage: UsageRecord,
}

/// Scores patent pairs by executing the reasoning graph.
///
/// One engine can score many pairs from several threads at once.
pub struct MargEngine {
    gateway: Arc<Gateway>,
    options: EngineOptions,
}

impl MargEngine {
    pub fn new(gateway: Arc<Gateway>, options: EngineOptions) -> Self {
        MargEngine { gateway, options }
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// The plan [`MargEngine::score`] runs under the current options.
    pub fn plan(&self) -> MargPlan {
        let plan = build_plan(self.options.mode);
        match self.options.final_mode {
            FinalMode::Local => plan.without_final(),
            FinalMode::LlmCheck => plan,
        }
    }

    /// Runs the full graph for `pair`.
    pub fn score<T: Real>(&self, pair: &PatentPair) -> Result<SimilarityResult<T>, EngineError> {
        self.execute(pair, &self.plan())
    }

    /// Runs `plan`, which must contain every node up to weight integration.
    pub fn execute<T: Real>(&self, pair: &PatentPair, plan: &MargPlan) -> Result<SimilarityResult<T>, EngineError> {
        let run = self.run_plan::<T>(pair, plan)?;
        assemble(pair, plan, run)
    }

    /// Runs only the extraction and similarity calls.
    pub fn score_dimensions<T: Real>(&self, pair: &PatentPair) -> Result<DimensionRun<T>, EngineError> {
        let plan = build_plan(self.options.mode).scores_only();
        let run = self.run_plan::<T>(pair, &plan)?;
        let done = &run.outputs;
        let (profile_a, profile_b, scores) = dimension_outputs(done).map_err(|e| stage_error(plan_tail(&plan), e))?;
        Ok(DimensionRun {
            pair_id: pair.pair_id.clone(),
            profile_a,
            profile_b,
            scores,
            usage: run.usage,
            warnings: run.warnings,
            trace: run.trace,
        })
    }

    pub(crate) fn run_plan<T: Real>(&self, pair: &PatentPair, plan: &MargPlan) -> Result<PlanRun<T>, EngineError> {
        let waves = plan.waves()?;
        let position: BTreeMap<&str, usize> = plan.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut rng = self.options.schedule_seed.map(ChaCha8Rng::seed_from_u64);
        let jobs = self.options.jobs.max(1);

        let mut outputs: BTreeMap<String, NodeOutput<T>> = BTreeMap::new();
        let mut trace = BTreeMap::new();
        let mut node_warnings: BTreeMap<usize, Vec<Warning>> = BTreeMap::new();
        let mut usage = UsageRecord::default();

        for wave in waves {
            let mut ready = wave;
            if let Some(rng) = rng.as_mut() {
                ready.shuffle(rng);
            }
            let mut results: Vec<(usize, &PlanNode, Result<NodeDone<T>, StageFailure>)> = Vec::new();
            for chunk in ready.chunks(jobs) {
                let done = &outputs;
                let chunk_results: Vec<_> = if chunk.len() == 1 {
                    vec![(chunk[0], self.run_node(pair, chunk[0], done))]
                } else {
                    thread::scope(|scope| {
                        let handles: Vec<_> = chunk
                            .iter()
                            .map(|node| (*node, scope.spawn(move || self.run_node(pair, node, done))))
                            .collect();
                        handles
                            .into_iter()
                            .map(|(node, h)| (node, h.join().expect("stage thread panicked")))
                            .collect()
                    })
                };
                let chunk_usage = chunk_results
                    .iter()
                    .filter_map(|(_, r)| r.as_ref().ok())
                    .map(|d| d.trace.usage.clone())
                    .fold(UsageRecord::default(), merge_usage_concurrent);
                usage = merge_usage(usage, chunk_usage);
                results.extend(chunk_results.into_iter().map(|(n, r)| (position[n.id.as_str()], n, r)));
            }
            results.sort_by_key(|(pos, _, _)| *pos);
            for (pos, node, result) in results {
                let done = result.map_err(|source| EngineError::Stage {
                    node: node.id.clone(),
                    source,
                })?;
                outputs.insert(node.id.clone(), done.output);
                trace.insert(node.id.clone(), done.trace);
                node_warnings.insert(pos, done.warnings);
            }
        }
        Ok(PlanRun {
            outputs,
            trace,
            warnings: node_warnings.into_values().flatten().collect(),
            usage,
        })
    }

    fn run_node<T: Real>(
        &self,
        pair: &PatentPair,
        node: &PlanNode,
        done: &BTreeMap<String, NodeOutput<T>>,
    ) -> Result<NodeDone<T>, StageFailure> {
        let stage = node.stage;
        let context = node_context(pair, node, done)?;
        let prompt = prompts::render(stage, &context).map_err(StageFailure::Prompt)?;
        let key = match stage {
            StageId::ExtractAll | StageId::ExtractTechnical | StageId::ExtractDomain | StageId::ExtractClaim => {
                side_doc(pair, node)?.id()
            }
            _ => pair.pair_id.as_str(),
        };
        let answer = ask(&self.gateway, &self.options.sampling, stage, key, prompt, |text| {
            parse_stage::<T>(stage, text)
        })?;
        let id = node.id.clone();
        let mut warnings = Vec::new();
        if answer.reprompted {
            warnings.push(Warning::Reprompted { node: id.clone() });
        }
        match &answer.value {
            NodeOutput::Score(s) if s.clamped => warnings.push(Warning::ScoreClamped { node: id.clone() }),
            NodeOutput::Robustness(r) if r.clamped => warnings.push(Warning::ScoreClamped { node: id.clone() }),
            NodeOutput::Final(f) if f.clamped => warnings.push(Warning::ScoreClamped { node: id.clone() }),
            NodeOutput::Relevance(r) if r.renormalized => warnings.push(Warning::Renormalized { node: id.clone() }),
            NodeOutput::Reasoning(b) => {
                if b.relevance.renormalized {
                    warnings.push(Warning::Renormalized { node: id.clone() });
                }
                if b.robustness.clamped {
                    warnings.push(Warning::ScoreClamped { node: id.clone() });
                }
            }
            NodeOutput::Weights {
                fallback, renormalized, ..
            } => {
                if *fallback {
                    log::warn!("{}: all-zero weights, using equal weighting", pair.pair_id);
                    warnings.push(Warning::EqualWeightFallback { node: id.clone() });
                } else if *renormalized {
                    warnings.push(Warning::Renormalized { node: id.clone() });
                }
            }
            _ => {}
        }
        Ok(NodeDone {
            output: answer.value,
            trace: answer.trace,
            warnings,
        })
    }
}

fn parse_stage<T: Real>(stage: StageId, text: &str) -> Result<NodeOutput<T>, PromptError> {
    Ok(match stage {
        StageId::ExtractTechnical | StageId::ExtractDomain | StageId::ExtractClaim => {
            NodeOutput::Summary(prompts::parse_summary(text)?)
        }
        StageId::ExtractAll => NodeOutput::Profile(prompts::parse_profile(text)?),
        StageId::SimTechnical | StageId::SimDomain | StageId::SimClaim => {
            NodeOutput::Score(prompts::parse_score_reason(text)?)
        }
        StageId::DomainRel => NodeOutput::Relation(prompts::parse_category(text)?),
        StageId::InfoDist => NodeOutput::Pattern(prompts::parse_pattern(text)?),
        StageId::DimRelevance => NodeOutput::Relevance(prompts::parse_relevance(text)?),
        StageId::CrossValid => NodeOutput::Robustness(prompts::parse_robustness(text)?),
        StageId::ContextReasoning => NodeOutput::Reasoning(prompts::parse_reasoning(text)?),
        StageId::WeightIntegrate => match prompts::parse_weights_checked(text) {
            Ok((weights, renormalized)) => NodeOutput::Weights {
                weights,
                fallback: false,
                renormalized,
            },
            Err(PromptError::DegenerateWeights) => NodeOutput::Weights {
                weights: WeightVector::equal().with_justification("all weights were zero; equal weighting used"),
                fallback: true,
                renormalized: false,
            },
            Err(e) => return Err(e),
        },
        StageId::FinalCalc => NodeOutput::Final(prompts::parse_final(text)?),
        StageId::BaselineIO | StageId::BaselineCoT | StageId::BaselineFewShot => {
            NodeOutput::Score(prompts::parse_trailing_score(text)?)
        }
    })
}

fn side_doc<'p>(pair: &'p PatentPair, node: &PlanNode) -> Result<&'p PatentDocument, StageFailure> {
    if node.id.ends_with("_a") {
        Ok(&pair.a)
    } else if node.id.ends_with("_b") {
        Ok(&pair.b)
    } else {
        Err(StageFailure::MissingInput(format!("patent side for {}", node.id)))
    }
}

fn missing(id: &str) -> StageFailure {
    StageFailure::MissingInput(id.to_string())
}

fn summary<T>(done: &BTreeMap<String, NodeOutput<T>>, dim: Dimension, side: char) -> Result<String, StageFailure> {
    let expanded = extract_node(dim, side);
    if let Some(NodeOutput::Summary(s)) = done.get(&expanded) {
        return Ok(s.clone());
    }
    let compact = if side == 'a' { EXTRACT_A } else { EXTRACT_B };
    match done.get(compact) {
        Some(NodeOutput::Profile(p)) => Ok(match dim {
            Dimension::Technical => p.technical.clone(),
            Dimension::Domain => p.domain.clone(),
            Dimension::Claim => p.claim.clone(),
        }),
        _ => Err(missing(&expanded)),
    }
}

fn profile<T>(done: &BTreeMap<String, NodeOutput<T>>, side: char) -> Result<AspectProfile, StageFailure> {
    Ok(AspectProfile {
        technical: summary(done, Dimension::Technical, side)?,
        domain: summary(done, Dimension::Domain, side)?,
        claim: summary(done, Dimension::Claim, side)?,
    })
}

fn scores<T: Real>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<DimensionScores<T>, StageFailure> {
    let get = |dim: Dimension| match done.get(&sim_node(dim)) {
        Some(NodeOutput::Score(s)) => Ok(s.clone()),
        _ => Err(missing(&sim_node(dim))),
    };
    Ok(Dims::new(get(Dimension::Technical)?, get(Dimension::Domain)?, get(Dimension::Claim)?))
}

fn dimension_outputs<T: Real>(
    done: &BTreeMap<String, NodeOutput<T>>,
) -> Result<(AspectProfile, AspectProfile, DimensionScores<T>), StageFailure> {
    Ok((profile(done, 'a')?, profile(done, 'b')?, scores(done)?))
}

fn bundle_part<'a, T, R>(
    done: &'a BTreeMap<String, NodeOutput<T>>,
    id: &str,
    direct: impl Fn(&'a NodeOutput<T>) -> Option<&'a R>,
    merged: impl Fn(&'a prompts::ReasoningBundle<T>) -> &'a R,
) -> Result<&'a R, StageFailure> {
    if let Some(v) = done.get(id).and_then(&direct) {
        return Ok(v);
    }
    match done.get(CONTEXT_REASONING) {
        Some(NodeOutput::Reasoning(b)) => Ok(merged(b)),
        _ => Err(missing(id)),
    }
}

fn relation<T>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<&DomainRelation, StageFailure> {
    bundle_part(
        done,
        DOMAIN_REL,
        |o| match o {
            NodeOutput::Relation(r) => Some(r),
            _ => None,
        },
        |b| &b.relation,
    )
}

fn pattern<T>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<&prompts::DistributionPattern, StageFailure> {
    bundle_part(
        done,
        INFO_DIST,
        |o| match o {
            NodeOutput::Pattern(p) => Some(p),
            _ => None,
        },
        |b| &b.pattern,
    )
}

fn relevance<T>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<&prompts::RelevanceAssessment<T>, StageFailure> {
    bundle_part(
        done,
        DIM_RELEVANCE,
        |o| match o {
            NodeOutput::Relevance(r) => Some(r),
            _ => None,
        },
        |b| &b.relevance,
    )
}

fn robustness<T>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<&prompts::RobustnessScore<T>, StageFailure> {
    bundle_part(
        done,
        CROSS_VALID,
        |o| match o {
            NodeOutput::Robustness(r) => Some(r),
            _ => None,
        },
        |b| &b.robustness,
    )
}

fn weights<T>(done: &BTreeMap<String, NodeOutput<T>>) -> Result<&WeightVector<T>, StageFailure> {
    match done.get(WEIGHT_INTEGRATE) {
        Some(NodeOutput::Weights { weights, .. }) => Ok(weights),
        _ => Err(missing(WEIGHT_INTEGRATE)),
    }
}

fn set_scores<T: Real>(ctx: &mut PromptContext, s: &DimensionScores<T>) {
    ctx.set("s_t", s.technical.score.to_string());
    ctx.set("s_d", s.domain.score.to_string());
    ctx.set("s_c", s.claim.score.to_string());
}

fn node_context<T: Real>(
    pair: &PatentPair,
    node: &PlanNode,
    done: &BTreeMap<String, NodeOutput<T>>,
) -> Result<PromptContext, StageFailure> {
    let mut ctx = match node.stage {
        StageId::ExtractAll | StageId::ExtractTechnical | StageId::ExtractDomain | StageId::ExtractClaim => {
            return Ok(PromptContext::for_patent(side_doc(pair, node)?))
        }
        StageId::DomainRel | StageId::DimRelevance | StageId::ContextReasoning => PromptContext::for_pair(pair),
        _ => PromptContext::new(),
    };
    match node.stage {
        StageId::SimTechnical | StageId::SimDomain | StageId::SimClaim => {
            let dim = match node.stage {
                StageId::SimTechnical => Dimension::Technical,
                StageId::SimDomain => Dimension::Domain,
                _ => Dimension::Claim,
            };
            ctx.set("summary_a", summary(done, dim, 'a')?);
            ctx.set("summary_b", summary(done, dim, 'b')?);
        }
        StageId::InfoDist | StageId::ContextReasoning => set_scores(&mut ctx, &scores(done)?),
        StageId::DimRelevance => {
            ctx.set("r_domain", format_relation(relation(done)?));
        }
        StageId::CrossValid => {
            ctx.set("a_rel", relevance(done)?.to_string());
            ctx.set("d_info", pattern(done)?.to_string());
        }
        StageId::WeightIntegrate => {
            ctx.set("r_domain", format_relation(relation(done)?));
            ctx.set("d_info", pattern(done)?.to_string());
            ctx.set("a_rel", relevance(done)?.to_string());
            ctx.set("v_cross", robustness(done)?.to_string());
        }
        StageId::FinalCalc => {
            set_scores(&mut ctx, &scores(done)?);
            let w = weights(done)?;
            ctx.set("w_t", w.w_t.to_string());
            ctx.set("w_d", w.w_d.to_string());
            ctx.set("w_c", w.w_c.to_string());
        }
        _ => {}
    }
    Ok(ctx)
}

fn plan_tail(plan: &MargPlan) -> &str {
    plan.nodes.last().map_or("", |n| n.id.as_str())
}

fn stage_error(node: &str, source: StageFailure) -> EngineError {
    EngineError::Stage {
        node: node.to_string(),
        source,
    }
}

fn assemble<T: Real>(pair: &PatentPair, plan: &MargPlan, run: PlanRun<T>) -> Result<SimilarityResult<T>, EngineError> {
    let done = &run.outputs;
    let tail = plan_tail(plan);
    let err = |e| stage_error(tail, e);
    let (profile_a, profile_b, scores) = dimension_outputs(done).map_err(err)?;
    let relation = relation(done).map_err(err)?.clone();
    let pattern = pattern(done).map_err(err)?.clone();
    let relevance = relevance(done).map_err(err)?.clone();
    let robustness = robustness(done).map_err(err)?.clone();
    let weights = weights(done).map_err(err)?.clone();

    let exact = weighted_sum(&scores.values(), &weights);
    let final_score = round3(exact);
    let mut warnings = run.warnings;

    let reported_final = match done.get(FINAL_CALC) {
        Some(NodeOutput::Final(f)) => Some(f.value),
        _ => None,
    };
    if let Some(reported) = reported_final {
        if round3(reported) != final_score {
            log::warn!("{}: model reported {reported}, local weighted sum is {final_score}", pair.pair_id);
            warnings.push(Warning::FinalDiscrepancy {
                local: final_score.to_f64().unwrap_or(f64::NAN),
                reported: reported.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    let ipc_relation = classify_ipc_relation(pair.a.ipc_codes(), pair.b.ipc_codes());
    if ipc_relation.category != relation.category {
        warnings.push(Warning::RelationMismatch {
            reported: relation.category,
            reference: ipc_relation.category,
        });
    }

    Ok(SimilarityResult {
        pair_id: pair.pair_id.clone(),
        plan: plan.mode,
        final_mode: if plan.contains(FINAL_CALC) {
            FinalMode::LlmCheck
        } else {
            FinalMode::Local
        },
        profile_a,
        profile_b,
        scores,
        relation,
        ipc_relation,
        pattern,
        relevance,
        robustness,
        weights,
        weighted_sum: exact,
        final_score,
        reported_final,
        usage: run.usage,
        warnings,
        trace: run.trace,
    })
}
