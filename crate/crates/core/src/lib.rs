//! A mutable forest of bonded token nodes over a simulated append-only
//! ledger, plus the tooling that grows around such a thing: a structural
//! monitor, a log-replay passport indexer, and a metered request/sign
//! facade.
//!
//! The layering, bottom up:
//!
//! * [`ledger`] simulates the chain: accounts, single-unit assets, an
//!   ordered log of everything that happened.
//! * [`forest`] is the contract logic: bond and unbond nodes, delegate and
//!   claim back, with two-layer holder-based authorization.
//! * [`monitor`] audits snapshots for structural damage and preflights
//!   mutations by simulating them on a copy.
//! * [`passport`] rebuilds state and per-node histories from the log alone.
//! * [`api`] wraps it all in keyed, metered endpoints with a
//!   request/sign/submit flow; [`scenario`] scripts them from JSON.
//! * [`fixtures`] grows deterministic forests for tests and benchmarks.

pub mod address;
pub mod api;
pub mod error;
pub mod fixtures;
pub mod forest;
pub mod ledger;
pub mod monitor;
pub mod ops;
pub mod passport;
pub mod scenario;
pub mod snapshot;

pub use address::{Address, AddressKind};
pub use api::{
    Api, ApiKey, ApiMode, ApiState, DerivedKeyScheme, SignatureScheme, SubmitOutcome,
    UnsignedRequest, UsageReport,
};
pub use error::{Error, Result};
pub use forest::{CallContext, ForestCall, TokenNode};
pub use ledger::{
    export_entries, import_entries, AppCallRecord, AsaId, Asset, Event, FieldChange, FieldMutation,
    Ledger, LedgerConfig, LogEntry,
};
pub use monitor::{audit_forest, preflight, would_create_cycle, Violation, ViolationCode};
pub use ops::OperationDescriptor;
pub use passport::{
    passport_of, rebuild_state, tree_at, BondAction, BondEvent, DelegationSpan, HolderChange,
    PassportDocument, Reducer, TransferKind,
};
pub use scenario::{run_scenario, Scenario, ScenarioRun, ScenarioSummary, Step, StepReport};
pub use snapshot::{ForestState, TreeView};
