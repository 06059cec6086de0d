//! Error type shared across the crate.
//!
//! The split between `Err` and a logged `false` return matters for the
//! mutation calls: arguments that do not resolve to real entities are
//! malformed and produce an `Err` without touching the log, while calls on
//! real entities that fail authorization or guards return `Ok(false)` and
//! leave a rejected-call record behind.

use crate::address::Address;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("unknown account {0}")]
    UnknownAccount(Address),

    #[error("unknown node {0}")]
    UnknownNode(Address),

    #[error("unknown asset {0}")]
    UnknownAsset(u64),

    #[error("{address} is a {actual:?} address where a {expected:?} address is required")]
    WrongAddressKind {
        address: Address,
        expected: crate::address::AddressKind,
        actual: crate::address::AddressKind,
    },

    #[error("address {0} already exists")]
    DuplicateAddress(Address),

    #[error("log range {from}..{to} out of bounds (len {len})")]
    LogRange { from: u64, to: u64, len: u64 },

    #[error("log entry at seq {found} where {expected} was expected")]
    LogGap { expected: u64, found: u64 },

    #[error("malformed log entry at seq {seq}: {reason}")]
    MalformedEntry { seq: u64, reason: String },

    #[error("malformed log line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("parent chain from {0} does not terminate: cycle in snapshot")]
    CycleDetected(Address),

    #[error("call context invalid: {0}")]
    BadCallContext(String),

    #[error("no entry at seq {seq} (log len {len})")]
    SeqOutOfRange { seq: u64, len: u64 },

    #[error("{root} is not a node at seq {seq}")]
    RootNotPresent { root: Address, seq: u64 },

    #[error("API key {0} unknown")]
    UnknownApiKey(String),

    #[error("API key {0} is disabled")]
    DisabledApiKey(String),

    #[error("unknown organization {0}")]
    UnknownOrganization(String),

    #[error("request {0} unknown or already consumed")]
    UnknownRequest(String),

    #[error("request {request_id} expired at seq {expiry_seq} (current {current_seq})")]
    RequestExpired {
        request_id: String,
        expiry_seq: u64,
        current_seq: u64,
    },

    #[error("signature rejected for signer {0}")]
    BadSignature(Address),

    #[error("request rejected by preflight: {}", render_violations(.0))]
    PreflightRejected(Vec<crate::monitor::Violation>),

    #[error("malformed operation descriptor: {0}")]
    MalformedDescriptor(String),

    #[error("scenario error at step {step}: {reason}")]
    Scenario { step: usize, reason: String },
}

/// Violations in their wire form, so the message matches audit output.
fn render_violations(found: &[crate::monitor::Violation]) -> String {
    serde_json::to_string(found).unwrap_or_else(|_| format!("{found:?}"))
}
