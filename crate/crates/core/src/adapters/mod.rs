//! Completion-adapter boundary shared by planning, scoring and scene
//! description.
//!
//! Every call goes through [`invoke`], which turns panics into errors and
//! enforces the output length bound, so no adapter failure can escape as
//! anything other than a value.

mod http;
mod scripted;

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{EndpointConfig, HttpBackend};
pub use scripted::{ScriptError, ScriptFile, ScriptRule, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Plan,
    Score,
    Scene,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Plan => "plan",
            Purpose::Score => "score",
            Purpose::Scene => "scene",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub purpose: Purpose,
    pub max_output_chars: usize,
    pub deterministic: bool,
}

impl CompletionRequest {
    pub fn new(purpose: Purpose, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            purpose,
            max_output_chars: 4096,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed response body: {0}")]
    MalformedBody(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no script rule matched for purpose {0}")]
    NoRuleMatched(&'static str),
    #[error("adapter panicked: {0}")]
    Panicked(String),
}

/// Text returned by one adapter call together with the latency attributed
/// to it. Scripted backends report a simulated latency so logs stay
/// reproducible; live backends report measured wall time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub result: Result<String, AdapterError>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Reply;

    fn kind(&self) -> BackendKind;

    /// How many calls the runtime may have in flight at once.
    fn max_concurrency(&self) -> usize {
        1
    }
}

/// Record of one adapter call, as consumed by the event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub purpose: Purpose,
    pub latency_ms: u64,
    pub result: Result<String, AdapterError>,
}

impl CallRecord {
    pub fn ok(&self) -> bool {
        self.result.is_ok()
    }
}

/// Calls `backend`, converting panics into [`AdapterError::Panicked`] and
/// truncating the output to `req.max_output_chars` characters.
pub fn invoke(backend: &dyn CompletionBackend, req: &CompletionRequest) -> CallRecord {
    let reply = catch_unwind(AssertUnwindSafe(|| backend.complete(req))).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".to_string());
        Reply {
            result: Err(AdapterError::Panicked(msg)),
            latency_ms: 0,
        }
    });
    let result = reply.result.map(|text| truncate_chars(text, req.max_output_chars));
    CallRecord {
        purpose: req.purpose,
        latency_ms: reply.latency_ms,
        result,
    }
}

fn truncate_chars(mut text: String, max: usize) -> String {
    if let Some((idx, _)) = text.char_indices().nth(max) {
        text.truncate(idx);
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Panicky;

    impl CompletionBackend for Panicky {
        fn complete(&self, _req: &CompletionRequest) -> Reply {
            panic!("boom")
        }

        fn kind(&self) -> BackendKind {
            BackendKind::Scripted
        }
    }

    struct Echo;

    impl CompletionBackend for Echo {
        fn complete(&self, req: &CompletionRequest) -> Reply {
            Reply {
                result: Ok(req.user.clone()),
                latency_ms: 3,
            }
        }

        fn kind(&self) -> BackendKind {
            BackendKind::Scripted
        }
    }

    #[test]
    fn panics_become_errors() {
        let rec = invoke(&Panicky, &CompletionRequest::new(Purpose::Plan, "", ""));
        assert_eq!(rec.result, Err(AdapterError::Panicked("boom".into())));
    }

    #[test]
    fn output_is_truncated_on_char_boundary() {
        let mut req = CompletionRequest::new(Purpose::Scene, "", "héllo wörld");
        req.max_output_chars = 4;
        let rec = invoke(&Echo, &req);
        assert_eq!(rec.result.as_deref(), Ok("héll"));
        assert_eq!(rec.latency_ms, 3);
    }
}
