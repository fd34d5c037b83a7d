// SPDX-License-Identifier: Apache-2.0

//! Chat-completion client for model-generated rewrites.
//!
//! The request carries the parent source, the diagnosis and the skill
//! guidance; the reply must contain exactly one fenced code block holding a
//! complete module. Replies that break the contract, do not parse or change
//! the port interface are retried and finally reported as a failure, which
//! the caller turns into a rule-based proposal.

use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::sec::check_interface;
use crate::rtl::{parse, RtlDesign};
use crate::skills::{SkillMatch, StrategyId};
use crate::timing::BottleneckDiagnosis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// Base URL of an OpenAI-style API, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_key_env() -> String {
    "RTLOPT_LLM_API_KEY".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    2
}
fn default_temperature() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("unexpected response shape: {0}")]
    Shape(String),
    #[error("output contract violated: {0}")]
    Contract(String),
    #[error("candidate does not parse: {0}")]
    Parse(String),
    #[error("candidate changes the port interface: {0}")]
    Interface(String),
}

/// One request/response exchange, persisted for later inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub attempt: u32,
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A validated model proposal.
#[derive(Clone, Debug)]
pub struct LlmCandidate {
    pub design: RtlDesign,
    pub strategy: Option<StrategyId>,
    pub rationale: String,
}

#[derive(Clone, Debug)]
pub struct LlmOutcome {
    pub result: Result<LlmCandidate, LlmError>,
    pub transcripts: Vec<Transcript>,
    /// Files the transcripts were written to.
    pub files: Vec<PathBuf>,
}

#[derive(Clone)]
pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .finish()
    }
}

const SYSTEM: &str = "You are an RTL timing-optimization engineer. You rewrite one RTL-lite \
module to shorten its critical path while keeping it cycle-for-cycle equivalent to the \
original: same ports, same latency, registers reset to zero. RTL-lite supports wire/reg \
declarations, assign statements, one always_ff block of nonblocking updates, sized literals \
such as 8'hff, and the operators ~ & | ^ + - == < << >> ?: and [hi:lo] slices. Operand widths \
must match exactly.";

const CONTRACT: &str = "Reply with one line `strategy: <name>` naming the strategy you used \
(one of condition-precompute, signal-replication, selective-register-insertion, tree-rebalance, \
common-subexpression-extraction, mux-restructure, decomposition, constant-fold), then exactly one \
fenced code block containing the complete rewritten module. Do not send a diff and do not send \
more than one code block.";

impl LlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        LlmClient { config, agent }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn credential(&self) -> Result<String, LlmError> {
        std::env::var(&self.config.api_key_env)
            .map_err(|_| LlmError::MissingCredential(self.config.api_key_env.clone()))
    }

    /// Sends one chat request and returns the assistant message text.
    pub fn complete(&self, request: &Value) -> Result<String, LlmError> {
        let key = self.credential()?;
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(request)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(LlmError::Status(status));
        }
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Shape(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Shape("missing choices[0].message.content".into()))
    }

    pub fn build_request(
        &self,
        parent: &RtlDesign,
        diagnosis: Option<&BottleneckDiagnosis>,
        skills: &SkillMatch,
        feedback: Option<&str>,
    ) -> Value {
        let mut user = String::new();
        user.push_str("Current design:\n```\n");
        user.push_str(&parent.source);
        if !parent.source.ends_with('\n') {
            user.push('\n');
        }
        user.push_str("```\n\n");
        match diagnosis {
            Some(d) => user.push_str(&format!(
                "Critical path: {} -> {} (slack {:.3} ns, {} stages)\nRoot cause: {} (pattern {})\nRTL region: lines {}-{}\nEvidence: {}\n\n",
                d.path.startpoint,
                d.path.endpoint,
                d.path.slack_ns,
                d.path.stages.len(),
                d.root_cause,
                d.pattern,
                d.rtl_region.start_line,
                d.rtl_region.end_line,
                d.evidence
            )),
            None => user.push_str("No single critical path was isolated; improve the worst timing you can find.\n\n"),
        }
        if !skills.recommended.is_empty() {
            user.push_str("Strategies that worked before on this pattern:\n");
            for s in &skills.recommended {
                user.push_str(&format!(
                    "- {} ({} confidence): {}\n",
                    s.strategy, s.tier, s.template
                ));
            }
            user.push('\n');
        }
        if !skills.prohibited.is_empty() {
            user.push_str("Do not use these strategies here; they failed or hurt before:\n");
            for s in &skills.prohibited {
                user.push_str(&format!("- {}\n", s.strategy));
            }
            user.push('\n');
        }
        if let Some(f) = feedback {
            user.push_str(&format!("Your previous reply was rejected: {f}\n\n"));
        }
        user.push_str(CONTRACT);
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM},
                {"role": "user", "content": user},
            ],
        })
    }

    /// Asks for one rewrite, retrying on contract or validation failures.
    /// Transcripts go to `<transcript_dir>/<tag>-a<attempt>.json`.
    pub fn propose(
        &self,
        parent: &RtlDesign,
        diagnosis: Option<&BottleneckDiagnosis>,
        skills: &SkillMatch,
        transcript_dir: Option<&Path>,
        tag: &str,
    ) -> LlmOutcome {
        let mut transcripts = vec![];
        let mut files = vec![];
        let mut feedback: Option<String> = None;
        let mut last_err = LlmError::Contract("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            let request = self.build_request(parent, diagnosis, skills, feedback.as_deref());
            let reply = self.complete(&request);
            let result = reply.clone().and_then(|text| validate_reply(parent, &text));
            let t = Transcript {
                attempt,
                request,
                response: reply.ok(),
                error: result.as_ref().err().map(|e| e.to_string()),
            };
            if let Some(dir) = transcript_dir {
                let path = dir.join(format!("{tag}-a{attempt}.json"));
                match crate::canon::write_json(&path, &t) {
                    Ok(()) => files.push(path),
                    Err(e) => log::warn!("could not write transcript {}: {e}", path.display()),
                }
            }
            transcripts.push(t);
            match result {
                Ok(c) => {
                    return LlmOutcome {
                        result: Ok(c),
                        transcripts,
                        files,
                    };
                }
                Err(e) => {
                    log::info!("llm attempt {attempt} for {tag} rejected: {e}");
                    let fatal = matches!(e, LlmError::MissingCredential(_));
                    feedback = Some(e.to_string());
                    last_err = e;
                    if fatal {
                        break;
                    }
                }
            }
        }
        LlmOutcome {
            result: Err(last_err),
            transcripts,
            files,
        }
    }
}

/// Applies the output contract to a reply and validates the module in it.
pub fn validate_reply(parent: &RtlDesign, text: &str) -> Result<LlmCandidate, LlmError> {
    let fence = Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\r?\n(.*?)```").unwrap();
    let blocks: Vec<&str> = fence
        .captures_iter(text)
        .map(|c| c.get(1).unwrap().as_str())
        .collect();
    if blocks.len() != 1 {
        return Err(LlmError::Contract(format!(
            "expected exactly one fenced code block, found {}",
            blocks.len()
        )));
    }
    let module = Regex::new(r"(?s)\bmodule\b.*?\bendmodule\b").unwrap();
    let source = module
        .find(blocks[0])
        .ok_or_else(|| LlmError::Contract("code block holds no complete module".into()))?
        .as_str();
    let design = parse(source).map_err(|e| LlmError::Parse(e.to_string()))?;
    if design.name != parent.name {
        return Err(LlmError::Interface(format!(
            "module renamed from `{}` to `{}`",
            parent.name, design.name
        )));
    }
    check_interface(parent, &design).map_err(|e| LlmError::Interface(e.to_string()))?;
    let strategy = Regex::new(r"(?im)^\s*strategy\s*:\s*`?([a-z-]+)`?")
        .unwrap()
        .captures(&fence.replace_all(text, ""))
        .and_then(|c| c[1].parse().ok());
    let rationale = fence.replace_all(text, "").trim().to_string();
    Ok(LlmCandidate {
        design,
        strategy,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARENT: &str =
        "module add4(input [7:0] a, input [7:0] b, input [7:0] c, input [7:0] d, output [7:0] y);
  assign y = ((a + b) + c) + d;
endmodule
";

    #[test]
    fn contract_accepts_one_block() {
        let p = parse(PARENT).unwrap();
        let text = "strategy: tree-rebalance\n```verilog\nmodule add4(input [7:0] a, input [7:0] b, input [7:0] c, input [7:0] d, output [7:0] y);\n  assign y = (a + b) + (c + d);\nendmodule\n```\n";
        let c = validate_reply(&p, text).unwrap();
        assert_eq!(c.strategy, Some(StrategyId::TreeRebalance));
        assert_eq!(c.design.assigns.len(), 1);
    }

    #[test]
    fn contract_rejections() {
        let p = parse(PARENT).unwrap();
        assert!(matches!(
            validate_reply(&p, "I would rebalance it."),
            Err(LlmError::Contract(_))
        ));
        let two = "```\nmodule add4(); endmodule\n```\n```\nx\n```";
        assert!(matches!(
            validate_reply(&p, two),
            Err(LlmError::Contract(_))
        ));
        let bad_ports =
            "```\nmodule add4(input [7:0] a, output [7:0] y); assign y = a; endmodule\n```";
        assert!(matches!(
            validate_reply(&p, bad_ports),
            Err(LlmError::Interface(_))
        ));
        let junk = "```\nmodule add4(input a; endmodule\n```";
        assert!(matches!(validate_reply(&p, junk), Err(LlmError::Parse(_))));
    }
}
