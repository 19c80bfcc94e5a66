use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdapterError, BackendKind, CompletionBackend, CompletionRequest, Purpose, Reply};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("no default rule (match \"*\", not once) for purpose {0}")]
    NoDefaultRule(&'static str),
    #[error("rule {index}: invalid pattern: {source}")]
    BadPattern {
        index: usize,
        #[source]
        source: regex::Error,
    },
    #[error("reading script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing script {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
}

/// One row of a scripted response table.
///
/// `match` is `*` (always matches), `re:<regex>` or a plain substring of the
/// user block. `system`, when set, must additionally occur in the system
/// block, which lets one table answer differently per agent persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub purpose: Purpose,
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub response: String,
    #[serde(default)]
    pub once: bool,
    /// Simulated latency reported for this response.
    #[serde(default)]
    pub latency_ms: u64,
}

impl ScriptRule {
    pub fn new(purpose: Purpose, pattern: &str, response: &str) -> Self {
        Self {
            purpose,
            pattern: pattern.to_string(),
            system: None,
            response: response.to_string(),
            once: false,
            latency_ms: 0,
        }
    }

    pub fn once(mut self) -> Self {
        self.once = true;
        self
    }

    pub fn for_system(mut self, needle: &str) -> Self {
        self.system = Some(needle.to_string());
        self
    }

    fn is_default(&self) -> bool {
        self.pattern == "*" && self.system.is_none() && !self.once
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&raw).map_err(|source| ScriptError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

enum Matcher {
    Any,
    Substring(String),
    Pattern(Regex),
}

impl Matcher {
    fn matches(&self, haystack: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Substring(s) => haystack.contains(s.as_str()),
            Matcher::Pattern(re) => re.is_match(haystack),
        }
    }
}

struct CompiledRule {
    rule: ScriptRule,
    matcher: Matcher,
}

/// Deterministic rule-table backend. Rules are tried in file order and the
/// first match wins; `once` rules are consumed on first use.
pub struct ScriptedBackend {
    rules: Vec<CompiledRule>,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    /// Builds the backend, requiring a default rule for every purpose in
    /// `required`.
    pub fn new(rules: Vec<ScriptRule>, required: &[Purpose]) -> Result<Self, ScriptError> {
        for purpose in required {
            if !rules.iter().any(|r| r.purpose == *purpose && r.is_default()) {
                return Err(ScriptError::NoDefaultRule(purpose.as_str()));
            }
        }
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(index, rule)| {
                let matcher = if rule.pattern == "*" {
                    Matcher::Any
                } else if let Some(re) = rule.pattern.strip_prefix("re:") {
                    Matcher::Pattern(
                        Regex::new(re).map_err(|source| ScriptError::BadPattern { index, source })?,
                    )
                } else {
                    Matcher::Substring(rule.pattern.clone())
                };
                Ok(CompiledRule { rule, matcher })
            })
            .collect::<Result<Vec<_>, ScriptError>>()?;
        let consumed = Mutex::new(vec![false; rules.len()]);
        Ok(Self { rules, consumed })
    }

    /// Returns the response of the first matching rule, consuming it if it
    /// is a `once` rule.
    pub fn scripted_complete(&self, req: &CompletionRequest) -> Reply {
        let mut consumed = self.consumed.lock().unwrap_or_else(|e| e.into_inner());
        let hit = self.rules.iter().enumerate().find(|(i, c)| {
            !consumed[*i]
                && c.rule.purpose == req.purpose
                && c.rule
                    .system
                    .as_ref()
                    .is_none_or(|s| req.system.contains(s.as_str()))
                && c.matcher.matches(&req.user)
        });
        match hit {
            Some((i, c)) => {
                if c.rule.once {
                    consumed[i] = true;
                }
                Reply {
                    result: Ok(c.rule.response.clone()),
                    latency_ms: c.rule.latency_ms,
                }
            }
            None => Reply {
                result: Err(AdapterError::NoRuleMatched(req.purpose.as_str())),
                latency_ms: 0,
            },
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Reply {
        self.scripted_complete(req)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}
