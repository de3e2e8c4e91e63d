use std::collections::BTreeMap;
use std::sync::LazyLock;

use serde::Deserialize;

use super::{PromptError, StageId};
use crate::corpus::{PatentDocument, PatentPair};

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/prompts/", $name, ".txt"))
    };
}

/// Raw template text for a stage.
pub fn template(stage: StageId) -> &'static str {
    match stage {
        StageId::ExtractTechnical => asset!("extract_technical"),
        StageId::ExtractDomain => asset!("extract_domain"),
        StageId::ExtractClaim => asset!("extract_claim"),
        StageId::ExtractAll => asset!("extract_all"),
        StageId::SimTechnical => asset!("sim_technical"),
        StageId::SimDomain => asset!("sim_domain"),
        StageId::SimClaim => asset!("sim_claim"),
        StageId::DomainRel => asset!("domain_rel"),
        StageId::InfoDist => asset!("info_dist"),
        StageId::DimRelevance => asset!("dim_relevance"),
        StageId::CrossValid => asset!("cross_valid"),
        StageId::WeightIntegrate => asset!("weight_integrate"),
        StageId::ContextReasoning => asset!("context_reasoning"),
        StageId::FinalCalc => asset!("final_calc"),
        StageId::BaselineIO => asset!("baseline_io"),
        StageId::BaselineCoT => asset!("baseline_cot"),
        StageId::BaselineFewShot => asset!("baseline_fewshot"),
    }
}

/// The output-format instruction a stage's reply must follow.
pub fn format_instruction(stage: StageId) -> &'static str {
    match stage {
        StageId::ExtractTechnical | StageId::ExtractDomain | StageId::ExtractClaim => {
            "a plain-text summary of the requested aspect."
        }
        StageId::ExtractAll => {
            "Technical Features: [summary]\nApplication Domains: [summary]\nClaim Scope: [summary]"
        }
        StageId::SimTechnical | StageId::SimDomain | StageId::SimClaim => {
            "Score: [numerical score], Reason: [justification]."
        }
        StageId::DomainRel => "Category: [relationship], Explanation: [justification].",
        StageId::InfoDist => "Pattern: [pattern], Justification: [explanation].",
        StageId::DimRelevance => {
            "Scores: [technical features: score, application domains: score, claim scope: score], Explanation: [justification]."
        }
        StageId::CrossValid => "Metric: [score], Justification: [explanation].",
        StageId::WeightIntegrate => "Weights: [w_T: score, w_D: score, w_C: score], Justification: [explanation].",
        StageId::ContextReasoning => {
            "Category: [relationship], Explanation: [justification].\n\
             Pattern: [pattern], Justification: [explanation].\n\
             Scores: [technical features: score, application domains: score, claim scope: score], Explanation: [justification].\n\
             Metric: [score], Justification: [explanation]."
        }
        StageId::FinalCalc => "Patent_Similarity_MAR :[score]",
        StageId::BaselineIO | StageId::BaselineFewShot => "Score: [numerical score]",
        StageId::BaselineCoT => "Reasoning: [Your step-by-step analysis]\nScore: [numerical score]",
    }
}

/// Appends a reminder of the expected format, used when re-prompting after a parse failure.
pub fn with_format_reminder(stage: StageId, prompt: &str) -> String {
    format!(
        "{prompt}\n\nYour previous answer did not follow the required output format. \
         Answer again and output the result exactly in the following format:\n{}",
        format_instruction(stage)
    )
}

/// Named values substituted into `{placeholder}` slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    fields: BTreeMap<String, String>,
}

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.fields.insert(key.into(), value.into());
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// `{patent}` for the extraction stages.
    pub fn for_patent(doc: &PatentDocument) -> Self {
        PromptContext::new().with("patent", patent_block(doc, false))
    }

    /// `{pair_context}`, `{patent_a}` and `{patent_b}`.
    pub fn for_pair(pair: &PatentPair) -> Self {
        PromptContext::new()
            .with("pair_context", pair_context(pair))
            .with("patent_a", patent_block(&pair.a, false))
            .with("patent_b", patent_block(&pair.b, false))
    }
}

/// Title, abstract and numbered claims, optionally followed by the IPC codes.
pub fn patent_block(doc: &PatentDocument, with_ipc: bool) -> String {
    let mut out = format!("Title: {}\nAbstract: {}\nClaims:", doc.title(), doc.abstract_text());
    for (i, claim) in doc.claims().iter().enumerate() {
        out.push_str(&format!("\n{}. {}", i + 1, claim));
    }
    if with_ipc {
        let codes: Vec<String> = doc.ipc_codes().iter().map(|c| c.render()).collect();
        out.push_str(&format!("\nIPC codes: {}", codes.join("; ")));
    }
    out
}

/// Both patents' titles, abstracts, claims and IPC codes.
pub fn pair_context(pair: &PatentPair) -> String {
    format!(
        "Patent A\n{}\n\nPatent B\n{}",
        patent_block(&pair.a, true),
        patent_block(&pair.b, true)
    )
}

/// Substitutes every `{name}` slot of the stage's template.
///
/// Substituted values are not rescanned, so braces inside patent text are kept as is.
pub fn render(stage: StageId, context: &PromptContext) -> Result<String, PromptError> {
    let template = template(stage);
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .filter(|&i| i > 0 && after[..i].bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'));
        match close {
            Some(i) => {
                let name = &after[..i];
                let value = context
                    .get(name)
                    .ok_or_else(|| PromptError::MissingContextField(name.to_string()))?;
                out.push_str(value);
                rest = &after[i + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}

/// A scored exemplar pair for the few-shot baseline.
#[derive(Debug, Clone, Deserialize)]
pub struct FewShotExample {
    pub score: f64,
    pub label: String,
    pub a: PatentDocument,
    pub b: PatentDocument,
}

static FEW_SHOT: LazyLock<Vec<FewShotExample>> = LazyLock::new(|| {
    serde_json::from_str(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fewshot.json")))
        .expect("bundled few-shot fixture is valid")
});

/// The three bundled exemplars, low to high similarity.
pub fn few_shot_examples() -> &'static [FewShotExample] {
    &FEW_SHOT
}

/// Context for a prompting baseline on `pair`, including few-shot exemplars.
pub fn baseline_context(pair: &PatentPair) -> PromptContext {
    let mut ctx = PromptContext::for_pair(pair);
    for (i, ex) in few_shot_examples().iter().enumerate() {
        let n = i + 1;
        ctx.set(format!("example{n}_a"), patent_block(&ex.a, false));
        ctx.set(format!("example{n}_b"), patent_block(&ex.b, false));
        ctx.set(format!("example{n}_score"), format!("{}", ex.score));
        ctx.set(format!("example{n}_label"), ex.label.clone());
    }
    ctx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::{doc, pair};

    fn full_context() -> PromptContext {
        let p = pair("p1", "G06F3/048");
        let mut ctx = baseline_context(&p);
        ctx.set("patent", patent_block(&p.a, false));
        for key in [
            "summary_a", "summary_b", "s_t", "s_d", "s_c", "w_t", "w_d", "w_c", "r_domain", "d_info", "a_rel",
            "v_cross",
        ] {
            ctx.set(key, format!("<{key}>"));
        }
        ctx
    }

    #[test]
    fn every_stage_renders_with_its_format_instruction() {
        let ctx = full_context();
        for stage in StageId::ALL {
            let text = render(stage, &ctx).unwrap();
            assert!(!text.contains('{'), "{stage}: unfilled slot in {text}");
            if !matches!(
                stage,
                StageId::ExtractTechnical | StageId::ExtractDomain | StageId::ExtractClaim | StageId::BaselineFewShot
            ) {
                for line in format_instruction(stage).lines() {
                    assert!(text.contains(line), "{stage} lacks {line:?}");
                }
            }
        }
    }

    #[test]
    fn rendered_templates_keep_key_phrases() {
        let ctx = full_context();
        assert!(render(StageId::ExtractClaim, &ctx)
            .unwrap()
            .contains("Determine the claim scope of the patent"));
        assert!(render(StageId::CrossValid, &ctx)
            .unwrap()
            .contains("assign a robustness score close to 1"));
        let few = render(StageId::BaselineFewShot, &ctx).unwrap();
        let task = few.find("Task:").unwrap();
        for n in 1..=3 {
            let at = few.find(&format!("Example {n}:")).unwrap();
            assert!(at < task);
        }
        assert!(few.ends_with("Score:"));
        assert!(few.contains("Score: 0.2 (Low Similarity)"));
        assert!(few.contains("Score: 0.5 (Medium Similarity)"));
        assert!(few.contains("Score: 0.9 (High Similarity)"));
    }

    #[test]
    fn missing_field_is_named() {
        let ctx = PromptContext::new().with("pair_context", "x");
        assert_eq!(
            render(StageId::DimRelevance, &ctx),
            Err(PromptError::MissingContextField("r_domain".into()))
        );
        assert_eq!(
            render(StageId::ExtractTechnical, &PromptContext::new()),
            Err(PromptError::MissingContextField("patent".into()))
        );
    }

    #[test]
    fn braces_in_values_are_left_alone() {
        let ctx = PromptContext::new().with("patent", "uses {x} and {patent}");
        let text = render(StageId::ExtractDomain, &ctx).unwrap();
        assert!(text.ends_with("uses {x} and {patent}"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let ctx = full_context();
        assert_eq!(
            render(StageId::ContextReasoning, &ctx).unwrap(),
            render(StageId::ContextReasoning, &ctx.clone()).unwrap()
        );
    }

    #[test]
    fn pair_context_lists_ipc_codes() {
        let p = PatentPair::new("p", doc("a", &["C22B300"]), doc("b", &["C22B3/26", "H04L"])).unwrap();
        let text = pair_context(&p);
        assert!(text.contains("IPC codes: C22B 3/00"));
        assert!(text.contains("IPC codes: C22B 3/26; H04L"));
    }

    #[test]
    fn reminder_appends_format() {
        let text = with_format_reminder(StageId::FinalCalc, "base");
        assert!(text.starts_with("base\n\n"));
        assert!(text.ends_with("Patent_Similarity_MAR :[score]"));
    }

    #[test]
    fn few_shot_fixture_scores() {
        let scores: Vec<f64> = few_shot_examples().iter().map(|e| e.score).collect();
        assert_eq!(scores, vec![0.2, 0.5, 0.9]);
    }
}
