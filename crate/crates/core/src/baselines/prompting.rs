//! Single-call prompting baselines: direct scoring, chain of thought and few-shot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::PatentPair;
use crate::engine::{ask, EngineError, NodeTrace, Sampling, StageFailure};
use crate::gateway::Gateway;
use crate::prompts::{baseline_context, parse_trailing_score, render, StageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptBaseline {
    /// Direct score without reasoning.
    Io,
    CoT,
    FewShot,
}

impl PromptBaseline {
    pub const ALL: [PromptBaseline; 3] = [PromptBaseline::Io, PromptBaseline::CoT, PromptBaseline::FewShot];

    pub fn stage(self) -> StageId {
        match self {
            PromptBaseline::Io => StageId::BaselineIO,
            PromptBaseline::CoT => StageId::BaselineCoT,
            PromptBaseline::FewShot => StageId::BaselineFewShot,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptBaseline::Io => "io",
            PromptBaseline::CoT => "cot",
            PromptBaseline::FewShot => "few-shot",
        }
    }
}

impl fmt::Display for PromptBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptBaseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "io" => Ok(PromptBaseline::Io),
            "cot" => Ok(PromptBaseline::CoT),
            "few-shot" | "fewshot" => Ok(PromptBaseline::FewShot),
            other => Err(format!("unknown prompt baseline `{other}` (expected io, cot or few-shot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub pair_id: String,
    pub kind: PromptBaseline,
    /// In `[0, 1]`.
    pub score: f64,
    pub clamped: bool,
    pub reasoning: String,
    pub trace: NodeTrace,
}

/// Asks for a similarity directly, re-prompting once if the reply has no score.
pub fn run_prompt_baseline(
    gateway: &Gateway,
    sampling: &Sampling,
    pair: &PatentPair,
    kind: PromptBaseline,
) -> Result<BaselineScore, EngineError> {
    let stage = kind.stage();
    let fail = |source| EngineError::Stage {
        node: format!("baseline_{}", kind.as_str().replace('-', "_")),
        source,
    };
    let prompt = render(stage, &baseline_context(pair)).map_err(|e| fail(StageFailure::Prompt(e)))?;
    let answer = ask(gateway, sampling, stage, &pair.pair_id, prompt, parse_trailing_score::<f64>).map_err(fail)?;
    Ok(BaselineScore {
        pair_id: pair.pair_id.clone(),
        kind,
        score: answer.value.score,
        clamped: answer.value.clamped,
        reasoning: answer.value.reason,
        trace: answer.trace,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::testing::pair;
    use crate::gateway::ScriptedBackend;

    fn run(kind: PromptBaseline, reply: Option<&str>) -> (Result<BaselineScore, EngineError>, u64) {
        let p = pair("pb-1", "G06F3/048");
        let mut script = ScriptedBackend::new();
        if let Some(r) = reply {
            script.insert(kind.stage(), &p.pair_id, r);
        }
        let gateway = Gateway::new(Arc::new(script));
        let out = run_prompt_baseline(&gateway, &Sampling::default(), &p, kind);
        (out, gateway.backend_calls())
    }

    #[test]
    fn cot_reply() {
        let (out, calls) = run(PromptBaseline::CoT, Some("Reasoning: both describe touch input.\nScore: 0.7"));
        let out = out.unwrap();
        assert_eq!(out.score, 0.7);
        assert_eq!(out.reasoning, "both describe touch input.");
        assert_eq!(calls, 1);
    }

    #[test]
    fn few_shot_and_io_replies() {
        assert_eq!(run(PromptBaseline::FewShot, Some("Score: 0.9")).0.unwrap().score, 0.9);
        let io = run(PromptBaseline::Io, Some("Score: 1.2")).0.unwrap();
        assert_eq!((io.score, io.clamped), (1.0, true));
    }

    #[test]
    fn no_score_is_stage_error_after_retry() {
        let (out, calls) = run(PromptBaseline::CoT, Some("Reasoning: unsure."));
        match out {
            Err(EngineError::Stage { node, source: StageFailure::Parse(_) }) => assert_eq!(node, "baseline_cot"),
            other => panic!("expected parse failure, got {other:?}"),
        }
        assert_eq!(calls, 2);
    }

    #[test]
    fn parse_names() {
        for k in PromptBaseline::ALL {
            assert_eq!(k.as_str().parse::<PromptBaseline>().unwrap(), k);
        }
    }
}
