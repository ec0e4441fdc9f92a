//! Model-backed agents: the test case generator and the line and branch
//! feedback agents, over a pluggable [`CompletionBackend`].
//!
//! Every completion is validated against the requested payload schema before
//! it is handed out. Malformed output is retried with the parse error
//! appended to the prompt, up to the backend's retry budget.

mod backend;
mod feedback;
mod http;
mod stub;

use std::collections::{BTreeSet, HashSet};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use backend::{BackendError, CompletionBackend, SchemaId};
pub use feedback::{branch_feedback_prompt, line_feedback_prompt, AgentPromptSections};
pub use http::{EndpointProfile, HttpBackend, API_KEY_ENV};
pub use stub::{StubBackend, StubMode};

use crate::cache::{canonical_key, TestSuiteCache};
use crate::model::{BranchGap, TestCase};
use crate::prompt::PromptBundle;

/// Longest wait honoured for a rate-limit hint.
const MAX_RATE_LIMIT_WAIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("malformed response after {attempts} attempts: {reason}")]
    MalformedResponse { attempts: u32, reason: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("rate limited after {attempts} attempts (retry after {retry_after:?})")]
    RateLimited { attempts: u32, retry_after: Duration },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Line,
    Branch,
}

/// Structured output of a feedback agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRefinement {
    pub origin: Origin,
    pub gap_explanation: String,
    pub input_patterns: Vec<String>,
    pub prompt_refinements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementPayload {
    pub gap_explanation: String,
    pub input_patterns: Vec<String>,
    pub prompt_refinements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Inner lists with every scalar already coerced to a string.
    TestCases(Vec<Vec<String>>),
    Refinement(RefinementPayload),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentResponse {
    pub raw_text: String,
    pub parsed: Option<Payload>,
    pub attempts: u32,
}

/// Pulls the JSON object out of a reply, tolerating markdown fences and
/// surrounding chatter.
fn extract_json(raw: &str) -> Result<Value, String> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(v);
    }
    match (trimmed.find('{'), trimmed.rfind('}')) {
        (Some(start), Some(end)) if start < end => serde_json::from_str(&trimmed[start..=end])
            .map_err(|e| format!("reply is not valid JSON: {e}")),
        _ => Err("reply contains no JSON object".into()),
    }
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn validate_payload(raw: &str, schema: SchemaId) -> Result<Payload, String> {
    let value = extract_json(raw)?;
    let obj = value.as_object().ok_or("reply is not a JSON object")?;
    match schema {
        SchemaId::TestCases => {
            let cases = obj
                .get("test_cases")
                .ok_or("missing \"test_cases\" key")?
                .as_array()
                .ok_or("\"test_cases\" is not a list")?;
            let mut out = Vec::with_capacity(cases.len());
            for (i, case) in cases.iter().enumerate() {
                let inner = case
                    .as_array()
                    .ok_or_else(|| format!("test_cases[{i}] is not a list"))?;
                let values = inner
                    .iter()
                    .map(scalar_to_string)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| format!("test_cases[{i}] holds a non-scalar value"))?;
                out.push(values);
            }
            Ok(Payload::TestCases(out))
        }
        SchemaId::Refinement => {
            let payload: RefinementPayload = serde_json::from_value(value.clone())
                .map_err(|e| format!("refinement schema mismatch: {e}"))?;
            if payload.prompt_refinements.is_empty() {
                return Err("\"prompt_refinements\" must not be empty".into());
            }
            Ok(Payload::Refinement(payload))
        }
    }
}

/// One validated completion, retrying malformed replies.
pub fn complete(
    backend: &dyn CompletionBackend,
    prompt: &str,
    schema: SchemaId,
) -> Result<AgentResponse, AgentError> {
    let max = backend.max_retries().max(1);
    let mut request = prompt.to_owned();
    let mut last_reason = String::new();
    for attempt in 1..=max {
        match backend.send(&request, schema) {
            Ok(raw) => match validate_payload(&raw, schema) {
                Ok(payload) => {
                    return Ok(AgentResponse {
                        raw_text: raw,
                        parsed: Some(payload),
                        attempts: attempt,
                    })
                }
                Err(reason) => {
                    log::warn!("attempt {attempt}/{max}: {reason}");
                    request = format!(
                        "{prompt}\n\nYour previous reply could not be used: {reason}\n\
                         Reply with only a JSON object matching the required {} schema.",
                        schema.as_str()
                    );
                    last_reason = reason;
                }
            },
            Err(BackendError::Transport(msg)) => return Err(TransportError(msg).into()),
            Err(BackendError::RateLimited { retry_after }) => {
                if attempt == max {
                    return Err(AgentError::RateLimited {
                        attempts: attempt,
                        retry_after,
                    });
                }
                thread::sleep(retry_after.min(MAX_RATE_LIMIT_WAIT));
            }
        }
    }
    Err(AgentError::MalformedResponse {
        attempts: max,
        reason: last_reason,
    })
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub response: AgentResponse,
    pub cases: Vec<TestCase>,
    pub warnings: Vec<String>,
}

/// Converts a validated test_cases payload, dropping inner lists of the
/// wrong arity or with multi-line values.
pub fn cases_from_response(raw: &AgentResponse, arity: usize) -> (Vec<TestCase>, Vec<String>) {
    let Some(Payload::TestCases(lists)) = &raw.parsed else {
        return (Vec::new(), vec!["response carries no test_cases payload".into()]);
    };
    let mut cases = Vec::with_capacity(lists.len());
    let mut warnings = Vec::new();
    for (i, values) in lists.iter().enumerate() {
        if values.len() != arity {
            warnings.push(format!(
                "dropped test case {i}: {} values, program reads {arity}",
                values.len()
            ));
            continue;
        }
        match TestCase::new(values.iter().cloned()) {
            Ok(tc) => cases.push(tc),
            Err(e) => warnings.push(format!("dropped test case {i}: {e}")),
        }
    }
    (cases, warnings)
}

pub fn generate_tests(backend: &dyn CompletionBackend, prompt: &PromptBundle) -> Result<Generation, AgentError> {
    let response = complete(backend, &prompt.render(), SchemaId::TestCases)?;
    let (cases, warnings) = cases_from_response(&response, prompt.arity);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Generation {
        response,
        cases,
        warnings,
    })
}

/// Cases from `raw` whose canonical key is neither cached nor repeated
/// earlier in the same payload. The cache is not modified.
pub fn parse_and_filter(raw: &AgentResponse, arity: usize, cache: &TestSuiteCache) -> Vec<TestCase> {
    let (cases, _) = cases_from_response(raw, arity);
    let mut seen = HashSet::new();
    cases
        .into_iter()
        .filter(|tc| {
            let key = canonical_key(tc);
            !cache.contains_key(&key) && seen.insert(key)
        })
        .collect()
}

fn refinement_from(response: AgentResponse, origin: Origin) -> FeedbackRefinement {
    match response.parsed {
        Some(Payload::Refinement(p)) => FeedbackRefinement {
            origin,
            gap_explanation: p.gap_explanation,
            input_patterns: p.input_patterns,
            prompt_refinements: p.prompt_refinements,
        },
        _ => unreachable!("complete validated a refinement payload"),
    }
}

pub fn line_feedback(
    backend: &dyn CompletionBackend,
    source: &str,
    missing_lines: &BTreeSet<u32>,
    current_prompt: &str,
) -> Result<FeedbackRefinement, AgentError> {
    if missing_lines.is_empty() {
        return Err(AgentError::Precondition("line feedback needs at least one missing line".into()));
    }
    let prompt = line_feedback_prompt(source, missing_lines, current_prompt);
    let response = complete(backend, &prompt, SchemaId::Refinement)?;
    Ok(refinement_from(response, Origin::Line))
}

pub fn branch_feedback(
    backend: &dyn CompletionBackend,
    source: &str,
    missing_branches: &[BranchGap],
    current_prompt: &str,
) -> Result<FeedbackRefinement, AgentError> {
    if missing_branches.is_empty() {
        return Err(AgentError::Precondition("branch feedback needs at least one missing branch".into()));
    }
    let prompt = branch_feedback_prompt(source, missing_branches, current_prompt);
    let response = complete(backend, &prompt, SchemaId::Refinement)?;
    Ok(refinement_from(response, Origin::Branch))
}
