//! NDJSON wire messages exchanged between the engine and front-ends.

use serde::{Deserialize, Serialize};

use crate::document::{Edit, SpanId};
use crate::stm::{Message, SpanState};

fn default_depth() -> u32 {
    8
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryParams {
    #[serde(default = "default_depth")]
    pub depth: u32,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            depth: default_depth(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    FullText {
        new_version: u64,
        text: String,
    },
    Update {
        old_version: u64,
        new_version: u64,
        edits: Vec<Edit>,
    },
    Perspective {
        version: u64,
        spans: Vec<SpanId>,
    },
    Query {
        query_id: u64,
        agent: String,
        span: SpanId,
        #[serde(default)]
        params: QueryParams,
    },
    CancelQuery {
        query_id: u64,
    },
    Shutdown,
}

const CLIENT_TYPES: [&str; 6] = [
    "full_text",
    "update",
    "perspective",
    "query",
    "cancel_query",
    "shutdown",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedSpan {
    pub id: SpanId,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Ok,
    Failed,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Assigned {
        version: u64,
        spans: Vec<AssignedSpan>,
    },
    Status {
        version: u64,
        span: SpanId,
        state: SpanState,
        messages: Vec<Message>,
    },
    QueryResult {
        query_id: u64,
        status: QueryStatus,
        suggestion: String,
    },
    /// Sent once per version when it becomes quiescent.
    Progress {
        version: u64,
        total: usize,
        finished: usize,
        failed: usize,
        cancelled: usize,
    },
    ProtocolError {
        reason: String,
    },
}

impl ServerMessage {
    pub fn protocol_error(reason: impl Into<String>) -> ServerMessage {
        ServerMessage::ProtocolError {
            reason: reason.into(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses one NDJSON line. Errors are the `reason` of a `protocol_error`.
pub fn parse_client_line(line: &str) -> Result<ClientMessage, String> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|_| "invalid json".to_string())?;
    let ty = value
        .get("type")
        .and_then(|t| t.as_str())
        .map(str::to_owned)
        .ok_or_else(|| "missing message type".to_string())?;
    if !CLIENT_TYPES.contains(&ty.as_str()) {
        return Err(format!("unknown message type {ty}"));
    }
    serde_json::from_value(value).map_err(|e| format!("malformed {ty} message: {e}"))
}
