//! Simulated single-writer ledger: accounts, single-unit assets bound to
//! token nodes, and the append-only transaction log every other module reads
//! or appends to.
//!
//! Entries are totally ordered by `seq` (contiguous from 0). `timestamp` is
//! logical time: all entries produced by one committed action share one
//! timestamp, so a commit's entries can be grouped without a separate chain
//! id. There is no wall clock anywhere.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::address::{Address, AddressKind};
use crate::error::{Error, Result};
use crate::forest::{CallContext, TokenNode};
use crate::snapshot::ForestState;

/// Identifier of a single-unit asset. One asset per node, for the node's
/// whole life.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AsaId(pub u64);

impl fmt::Display for AsaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for AsaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Asset {
    pub asa_id: AsaId,
    /// User account currently holding the single unit.
    pub holder: Address,
    /// Node this asset controls. Never changes.
    pub bound_node: Address,
    /// Always 1; kept explicit so exported documents are self-describing.
    pub units: u32,
}

/// One mutation applied to a node, as recorded in an `AppCall` entry.
/// Replay applies these verbatim, so the set must stay complete: a node
/// field that can change must be expressible here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldMutation {
    ParentSet(Option<Address>),
    ChildAdded(Address),
    ChildRemoved(Address),
    DelegatedSet(bool),
    CanAuthorizeChildrenSet(bool),
    MetadataSet { key: String, value: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldChange {
    pub node: Address,
    pub change: FieldMutation,
}

/// Record of one contract-call invocation, successful or rejected. Inner
/// calls get their own record with `depth` > 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppCallRecord {
    pub target: Address,
    pub function: String,
    pub args: BTreeMap<String, String>,
    pub originator: Address,
    pub immediate_caller: Address,
    pub depth: u32,
    pub returned: bool,
    pub field_changes: Vec<FieldChange>,
    /// Set when the call was committed through the request/sign API.
    pub request_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    #[serde(rename_all = "camelCase")]
    CreateAccount {
        address: Address,
    },
    #[serde(rename_all = "camelCase")]
    CreateNode {
        node: Address,
        asa_id: AsaId,
        owner: Address,
        can_authorize_children: bool,
        metadata: BTreeMap<String, String>,
    },
    #[serde(rename_all = "camelCase")]
    TransferAsset {
        asa_id: AsaId,
        from: Address,
        to: Address,
    },
    AppCall(AppCallRecord),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerConfig {
    /// Inner contract-to-contract calls may nest to this depth; the
    /// top-level call sits at depth 0 and is always admitted.
    pub max_call_depth: u32,
    /// The bond-mutation authority of a tree-root holder does not extend to
    /// delegation; flipping this lets root holders delegate descendants.
    pub root_may_delegate: bool,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            max_call_depth: 8,
            root_may_delegate: false,
        }
    }
}

/// The ledger simulation. One writer; every state change flows through a
/// method that appends log entries, so replaying the log reproduces the
/// state exactly.
#[derive(Clone, Debug)]
pub struct Ledger {
    state: ForestState,
    log: Vec<LogEntry>,
    /// Logical clock; one tick per committed action.
    commits: u64,
    next_asa: u64,
    config: LedgerConfig,
    rng: ChaCha12Rng,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::with_seed_and_config(rand::random(), LedgerConfig::default())
    }

    /// Deterministic addresses for a given seed; state evolution is
    /// determined by the call sequence either way.
    pub fn with_seed(seed: u64) -> Self {
        Self::with_seed_and_config(seed, LedgerConfig::default())
    }

    pub fn with_config(config: LedgerConfig) -> Self {
        Self::with_seed_and_config(rand::random(), config)
    }

    pub fn with_seed_and_config(seed: u64, config: LedgerConfig) -> Self {
        Ledger {
            state: ForestState::default(),
            log: Vec::new(),
            commits: 0,
            next_asa: 0,
            config,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Ledger over an existing snapshot with an empty log. Used to simulate
    /// an operation against a copy of live state without touching it.
    pub fn from_snapshot(state: ForestState, config: LedgerConfig) -> Self {
        let next_asa = state.assets.keys().map(|a| a.0 + 1).max().unwrap_or(0);
        Ledger {
            state,
            log: Vec::new(),
            commits: 0,
            next_asa,
            config,
            rng: ChaCha12Rng::seed_from_u64(0),
        }
    }

    /// Reconstructs a live ledger from previously exported entries by
    /// replaying them through the same reducer the passport indexer uses.
    pub fn from_entries(entries: Vec<LogEntry>, config: LedgerConfig) -> Result<Self> {
        let state = crate::passport::rebuild_state(&entries)?;
        let next_asa = state.assets.keys().map(|a| a.0 + 1).max().unwrap_or(0);
        let commits = entries.last().map(|e| e.timestamp + 1).unwrap_or(0);
        Ok(Ledger {
            state,
            log: entries,
            commits,
            next_asa,
            config,
            rng: ChaCha12Rng::seed_from_u64(rand::random()),
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn state(&self) -> &ForestState {
        &self.state
    }

    /// Full copy of current state. Cheap at the scale this simulation runs.
    pub fn snapshot(&self) -> ForestState {
        self.state.clone()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Sequence number of the latest entry, if any.
    pub fn last_seq(&self) -> Option<u64> {
        self.log.last().map(|e| e.seq)
    }

    // ----- accounts, nodes, assets -----

    pub fn create_account(&mut self) -> Address {
        let address = self.fresh_address(AddressKind::User);
        self.state.accounts.insert(address);
        self.append_commit(vec![Event::CreateAccount { address }]);
        address
    }

    pub fn create_node(
        &mut self,
        owner: Address,
        can_authorize_children: bool,
        metadata: BTreeMap<String, String>,
    ) -> Result<(Address, AsaId)> {
        self.require_account(owner)?;
        let node = self.fresh_address(AddressKind::Node);
        let asa_id = AsaId(self.next_asa);
        self.next_asa += 1;
        self.state.nodes.insert(
            node,
            TokenNode {
                address: node,
                asa_id,
                parent: None,
                children: Vec::new(),
                can_authorize_children,
                is_delegated: false,
                owner,
                metadata: metadata.clone(),
            },
        );
        self.state.assets.insert(
            asa_id,
            Asset {
                asa_id,
                holder: owner,
                bound_node: node,
                units: 1,
            },
        );
        self.append_commit(vec![Event::CreateNode {
            node,
            asa_id,
            owner,
            can_authorize_children,
            metadata,
        }]);
        Ok((node, asa_id))
    }

    pub fn asset_holder(&self, asa_id: AsaId) -> Result<Address> {
        self.state
            .assets
            .get(&asa_id)
            .map(|a| a.holder)
            .ok_or(Error::UnknownAsset(asa_id.0))
    }

    /// Holder-initiated transfer of a node's asset: a sale. The buyer
    /// becomes both holder and beneficial owner. Delegated nodes cannot be
    /// sold out from under their owner; the attempt is rejected but still
    /// leaves a record.
    pub fn transfer_asset(
        &mut self,
        ctx: CallContext,
        asa_id: AsaId,
        from: Address,
        to: Address,
    ) -> Result<bool> {
        self.require_top_level(ctx)?;
        let asset = self
            .state
            .assets
            .get(&asa_id)
            .ok_or(Error::UnknownAsset(asa_id.0))?;
        let node_addr = asset.bound_node;
        let holder = asset.holder;
        self.require_account(to)?;
        if from.kind() != AddressKind::User {
            return Err(Error::WrongAddressKind {
                address: from,
                expected: AddressKind::User,
                actual: from.kind(),
            });
        }

        let delegated = self
            .state
            .nodes
            .get(&node_addr)
            .map(|n| n.is_delegated)
            .unwrap_or(false);
        let authorized = ctx.originator == from && from == holder && !delegated;
        if !authorized {
            let mut args = BTreeMap::new();
            args.insert("asaId".into(), asa_id.to_string());
            args.insert("from".into(), from.to_string());
            args.insert("to".into(), to.to_string());
            self.append_commit(vec![Event::AppCall(AppCallRecord {
                target: node_addr,
                function: "transferAsset".into(),
                args,
                originator: ctx.originator,
                immediate_caller: ctx.immediate_caller,
                depth: ctx.depth,
                returned: false,
                field_changes: Vec::new(),
                request_id: None,
            })]);
            return Ok(false);
        }

        self.state.assets.get_mut(&asa_id).unwrap().holder = to;
        if let Some(node) = self.state.nodes.get_mut(&node_addr) {
            node.owner = to;
        }
        self.append_commit(vec![Event::TransferAsset { asa_id, from, to }]);
        Ok(true)
    }

    // ----- log access -----

    /// Entries in the half-open range `[seq_from, seq_to)`.
    pub fn read_log(&self, seq_from: u64, seq_to: u64) -> Result<&[LogEntry]> {
        let len = self.log.len() as u64;
        if seq_from > seq_to || seq_to > len {
            return Err(Error::LogRange {
                from: seq_from,
                to: seq_to,
                len,
            });
        }
        Ok(&self.log[seq_from as usize..seq_to as usize])
    }

    pub fn export_log(&self) -> String {
        export_entries(&self.log)
    }

    // ----- internals shared with the forest call engine -----

    pub(crate) fn require_account(&self, address: Address) -> Result<()> {
        if address.kind() != AddressKind::User {
            return Err(Error::WrongAddressKind {
                address,
                expected: AddressKind::User,
                actual: address.kind(),
            });
        }
        if !self.state.accounts.contains(&address) {
            return Err(Error::UnknownAccount(address));
        }
        Ok(())
    }

    pub(crate) fn require_node(&self, address: Address) -> Result<&TokenNode> {
        if address.kind() != AddressKind::Node {
            return Err(Error::WrongAddressKind {
                address,
                expected: AddressKind::Node,
                actual: address.kind(),
            });
        }
        self.state
            .nodes
            .get(&address)
            .ok_or(Error::UnknownNode(address))
    }

    /// Top-level calls are signed by user accounts; a contract node cannot
    /// originate a transaction.
    pub(crate) fn require_top_level(&self, ctx: CallContext) -> Result<()> {
        if ctx.depth != 0 {
            return Err(Error::BadCallContext(format!(
                "top-level call must start at depth 0, got {}",
                ctx.depth
            )));
        }
        if ctx.immediate_caller != ctx.originator {
            return Err(Error::BadCallContext(
                "at depth 0 the immediate caller is the originator".into(),
            ));
        }
        if ctx.originator.kind() != AddressKind::User {
            return Err(Error::BadCallContext(format!(
                "originator {} is not a user account",
                ctx.originator
            )));
        }
        if !self.state.accounts.contains(&ctx.originator) {
            return Err(Error::UnknownAccount(ctx.originator));
        }
        Ok(())
    }

    pub(crate) fn state_mut(&mut self) -> &mut ForestState {
        &mut self.state
    }

    /// Appends one committed action's entries, all sharing one logical
    /// timestamp. Sequence numbers stay contiguous.
    pub(crate) fn append_commit(&mut self, events: Vec<Event>) {
        let timestamp = self.commits;
        self.commits += 1;
        for event in events {
            let seq = self.log.len() as u64;
            self.log.push(LogEntry {
                seq,
                event,
                timestamp,
            });
        }
    }

    fn fresh_address(&mut self, kind: AddressKind) -> Address {
        loop {
            let mut id = [0u8; 32];
            self.rng.fill_bytes(&mut id);
            let candidate = Address::new(kind, id);
            let taken = self.state.accounts.contains(&candidate)
                || self.state.nodes.contains_key(&candidate);
            if !taken {
                return candidate;
            }
        }
    }
}

// ----- export / import -----

pub fn export_entries(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
        out.push('\n');
    }
    out
}

/// Parses a newline-delimited export. Sequence numbers must be contiguous
/// from 0; the first offending line is named in the error.
pub fn import_entries(text: &str) -> Result<Vec<LogEntry>> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let expected = entries.len() as u64;
        if entry.seq != expected {
            return Err(Error::LogGap {
                expected,
                found: entry.seq,
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}
