//! Deterministic scripted backend for offline runs and tests.
//!
//! The first rule whose matcher accepts the last user message answers.
//! Each rule serves its responses in order and repeats the last one once
//! exhausted. Pattern rules expand `${n}` and `${name}` capture groups in
//! the response; a bare `$` is literal so JSON such as `{"$ref": ..}` needs
//! no escaping.

use std::path::Path;
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatExchange, LlmError, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    MalformedJson,
    Empty,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl Rule {
    pub fn contains(needle: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            contains: Some(needle.into()),
            pattern: None,
            responses,
            fault: None,
        }
    }

    pub fn pattern(re: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            contains: None,
            pattern: Some(re.into()),
            responses,
            fault: None,
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSpec {
    pub rules: Vec<Rule>,
}

impl ScriptedSpec {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::MalformedConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedConfig(format!("{}: {e}", path.display())))
    }
}

enum Matcher {
    Contains(String),
    Pattern(Regex),
}

struct CompiledRule {
    matcher: Matcher,
    responses: Vec<String>,
    fault: Option<Fault>,
}

pub struct ScriptedBackend {
    name: String,
    model: String,
    sampling: Sampling,
    rules: Vec<CompiledRule>,
    hits: Mutex<Vec<usize>>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("name", &self.name)
            .field("rules", &self.rules.len())
            .finish()
    }
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, spec: ScriptedSpec) -> Result<Self, LlmError> {
        if spec.rules.is_empty() {
            return Err(LlmError::MalformedConfig("scripted spec has no rules".into()));
        }
        let mut rules = Vec::with_capacity(spec.rules.len());
        for (k, r) in spec.rules.into_iter().enumerate() {
            if r.responses.is_empty() {
                return Err(LlmError::MalformedConfig(format!("rule {k} has no responses")));
            }
            let matcher = match (r.contains, r.pattern) {
                (Some(s), None) => Matcher::Contains(s),
                (None, Some(p)) => Matcher::Pattern(
                    Regex::new(&p)
                        .map_err(|e| LlmError::MalformedConfig(format!("rule {k}: {e}")))?,
                ),
                _ => {
                    return Err(LlmError::MalformedConfig(format!(
                        "rule {k} needs exactly one of `contains` or `pattern`"
                    )))
                }
            };
            rules.push(CompiledRule {
                matcher,
                responses: r.responses,
                fault: r.fault,
            });
        }
        let n = rules.len();
        Ok(Self {
            name: name.into(),
            model: "scripted".into(),
            sampling: Sampling::default(),
            rules,
            hits: Mutex::new(vec![0; n]),
        })
    }

    pub fn with_sampling(mut self, model: impl Into<String>, sampling: Sampling) -> Self {
        self.model = model.into();
        self.sampling = sampling;
        self
    }

    /// Total number of answered calls so far.
    pub fn calls(&self) -> usize {
        self.hits.lock().unwrap().iter().sum()
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn sampling(&self) -> Sampling {
        self.sampling
    }

    fn complete(&self, exchange: &ChatExchange) -> Result<String, LlmError> {
        exchange.validate()?;
        let prompt = exchange.last_user().unwrap_or_default();
        for (k, rule) in self.rules.iter().enumerate() {
            let caps = match &rule.matcher {
                Matcher::Contains(s) if prompt.contains(s.as_str()) => None,
                Matcher::Contains(_) => continue,
                Matcher::Pattern(re) => match re.captures(prompt) {
                    Some(c) => Some(c),
                    None => continue,
                },
            };
            let n = {
                let mut hits = self.hits.lock().unwrap();
                hits[k] += 1;
                hits[k] - 1
            };
            match rule.fault {
                Some(Fault::MalformedJson) => return Ok("{\"reasoning\": \"unterminated".into()),
                Some(Fault::Empty) => return Ok(String::new()),
                Some(Fault::Timeout) => return Err(LlmError::Timeout),
                None => {}
            }
            let template = &rule.responses[n.min(rule.responses.len() - 1)];
            return Ok(match caps {
                Some(c) => expand(template, &c),
                None => template.clone(),
            });
        }
        let head: String = prompt.chars().take(120).collect();
        Err(LlmError::NoMatch(head))
    }
}

fn expand(template: &str, caps: &regex::Captures<'_>) -> String {
    static GROUP: OnceLock<Regex> = OnceLock::new();
    let group = GROUP.get_or_init(|| Regex::new(r"\$\{(\w+)\}").unwrap());
    group
        .replace_all(template, |g: &regex::Captures<'_>| {
            let key = &g[1];
            let m = match key.parse::<usize>() {
                Ok(i) => caps.get(i),
                Err(_) => caps.name(key),
            };
            m.map(|m| m.as_str().to_string()).unwrap_or_default()
        })
        .into_owned()
}
