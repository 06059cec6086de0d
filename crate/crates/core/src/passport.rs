//! Log-replay indexing. Everything here is a pure fold over exported log
//! entries: state reconstruction, per-node passport documents, and
//! point-in-time tree views. Nothing queries a live ledger, so the results
//! hold for any log with the same bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::address::{Address, AddressKind};
use crate::error::{Error, Result};
use crate::forest::TokenNode;
use crate::ledger::{AsaId, Asset, Event, FieldMutation, LogEntry};
use crate::snapshot::{ForestState, TreeView};

/// Why an asset moved. Inferred from the log alone: a transfer committed in
/// the same chain as a top-level `delegate` or `claimBack` call takes that
/// meaning, any other transfer is a sale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TransferKind {
    Sale,
    Delegation,
    ClaimBack,
}

/// Incremental replay. Feeding the entries of a log prefix leaves the
/// reducer in exactly the state a full rebuild of that prefix would produce,
/// so a consumer can resume at any split point.
#[derive(Clone, Debug, Default)]
pub struct Reducer {
    state: ForestState,
    next_seq: u64,
    current_ts: Option<u64>,
    /// (function, depth) of the call frames seen in the current commit.
    chain_frames: Vec<(String, u32)>,
}

impl Reducer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &ForestState {
        &self.state
    }

    pub fn into_state(self) -> ForestState {
        self.state
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Classification the next entry would get, were it an asset transfer.
    /// Valid to call just before feeding that entry.
    pub fn transfer_kind(&self, entry: &LogEntry) -> TransferKind {
        if self.current_ts != Some(entry.timestamp) {
            return TransferKind::Sale;
        }
        match self
            .chain_frames
            .iter()
            .find(|(_, depth)| *depth == 0)
            .map(|(f, _)| f.as_str())
        {
            Some("delegate") => TransferKind::Delegation,
            Some("claimBack") => TransferKind::ClaimBack,
            _ => TransferKind::Sale,
        }
    }

    pub fn feed(&mut self, entry: &LogEntry) -> Result<()> {
        if entry.seq != self.next_seq {
            return Err(Error::LogGap {
                expected: self.next_seq,
                found: entry.seq,
            });
        }
        if self.current_ts != Some(entry.timestamp) {
            self.current_ts = Some(entry.timestamp);
            self.chain_frames.clear();
        }
        let seq = entry.seq;
        let malformed = |reason: String| Error::MalformedEntry { seq, reason };

        match &entry.event {
            Event::CreateAccount { address } => {
                if address.kind() != AddressKind::User {
                    return Err(malformed(format!("{address} is not a user address")));
                }
                if !self.state.accounts.insert(*address) {
                    return Err(malformed(format!("account {address} already exists")));
                }
            }
            Event::CreateNode {
                node,
                asa_id,
                owner,
                can_authorize_children,
                metadata,
            } => {
                if self.state.nodes.contains_key(node) {
                    return Err(malformed(format!("node {node} already exists")));
                }
                if self.state.assets.contains_key(asa_id) {
                    return Err(malformed(format!("asset {asa_id} already exists")));
                }
                if !self.state.accounts.contains(owner) {
                    return Err(malformed(format!("owner {owner} is not a known account")));
                }
                self.state.nodes.insert(
                    *node,
                    TokenNode {
                        address: *node,
                        asa_id: *asa_id,
                        parent: None,
                        children: Vec::new(),
                        can_authorize_children: *can_authorize_children,
                        is_delegated: false,
                        owner: *owner,
                        metadata: metadata.clone(),
                    },
                );
                self.state.assets.insert(
                    *asa_id,
                    Asset {
                        asa_id: *asa_id,
                        holder: *owner,
                        bound_node: *node,
                        units: 1,
                    },
                );
            }
            Event::TransferAsset { asa_id, from, to } => {
                let kind = self.transfer_kind(entry);
                let asset = self
                    .state
                    .assets
                    .get_mut(asa_id)
                    .ok_or_else(|| malformed(format!("asset {asa_id} does not exist")))?;
                if asset.holder != *from {
                    return Err(malformed(format!(
                        "asset {asa_id} is held by {}, not {from}",
                        asset.holder
                    )));
                }
                asset.holder = *to;
                let node_addr = asset.bound_node;
                if kind == TransferKind::Sale {
                    if let Some(node) = self.state.nodes.get_mut(&node_addr) {
                        if !node.is_delegated {
                            node.owner = *to;
                        }
                    }
                }
            }
            Event::AppCall(rec) => {
                self.chain_frames.push((rec.function.clone(), rec.depth));
                for fc in &rec.field_changes {
                    let node = self
                        .state
                        .nodes
                        .get_mut(&fc.node)
                        .ok_or_else(|| malformed(format!("node {} does not exist", fc.node)))?;
                    match &fc.change {
                        FieldMutation::ParentSet(parent) => node.parent = *parent,
                        FieldMutation::ChildAdded(child) => node.children.push(*child),
                        FieldMutation::ChildRemoved(child) => node.children.retain(|c| c != child),
                        FieldMutation::DelegatedSet(value) => node.is_delegated = *value,
                        FieldMutation::CanAuthorizeChildrenSet(value) => {
                            node.can_authorize_children = *value
                        }
                        FieldMutation::MetadataSet { key, value } => {
                            node.metadata.insert(key.clone(), value.clone());
                        }
                    }
                }
            }
        }
        self.next_seq += 1;
        Ok(())
    }

    pub fn feed_all(&mut self, entries: &[LogEntry]) -> Result<()> {
        for entry in entries {
            self.feed(entry)?;
        }
        Ok(())
    }
}

/// State after replaying the whole log.
pub fn rebuild_state(entries: &[LogEntry]) -> Result<ForestState> {
    let mut reducer = Reducer::new();
    reducer.feed_all(entries)?;
    Ok(reducer.into_state())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolderChange {
    pub seq: u64,
    /// `None` for the mint.
    pub from: Option<Address>,
    pub to: Address,
    pub kind: TransferKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BondAction {
    Bonded,
    Unbonded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BondEvent {
    pub seq: u64,
    pub action: BondAction,
    /// The other node of the bond: the parent when this node was the child,
    /// the child when this node was the parent.
    pub counterparty: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DelegationSpan {
    pub start_seq: u64,
    /// `None` while the delegation is still live.
    pub end_seq: Option<u64>,
    pub delegate: Address,
}

/// Everything the log knows about one node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PassportDocument {
    pub node_address: Address,
    pub asa_id: AsaId,
    /// Sequence number of the entry that created the node.
    pub origin_seq: u64,
    pub current_holder: Address,
    pub beneficial_owner: Address,
    pub current_tree_root: Address,
    pub holder_history: Vec<HolderChange>,
    pub bond_history: Vec<BondEvent>,
    pub delegation_spans: Vec<DelegationSpan>,
    pub metadata: BTreeMap<String, String>,
}

/// Builds the passport of `node` from the log alone.
pub fn passport_of(entries: &[LogEntry], node: Address) -> Result<PassportDocument> {
    let mut reducer = Reducer::new();
    let mut origin_seq = None;
    let mut asa_id = None;
    let mut holder_history: Vec<HolderChange> = Vec::new();
    let mut bond_history: Vec<BondEvent> = Vec::new();

    for entry in entries {
        match &entry.event {
            Event::CreateNode {
                node: created,
                asa_id: asa,
                owner,
                ..
            } if *created == node => {
                origin_seq = Some(entry.seq);
                asa_id = Some(*asa);
                holder_history.push(HolderChange {
                    seq: entry.seq,
                    from: None,
                    to: *owner,
                    kind: TransferKind::Sale,
                });
            }
            Event::TransferAsset {
                asa_id: asa,
                from,
                to,
            } if Some(*asa) == asa_id => {
                holder_history.push(HolderChange {
                    seq: entry.seq,
                    from: Some(*from),
                    to: *to,
                    kind: reducer.transfer_kind(entry),
                });
            }
            Event::AppCall(rec) => {
                for fc in &rec.field_changes {
                    if fc.node != node {
                        continue;
                    }
                    match &fc.change {
                        FieldMutation::ParentSet(Some(parent)) => bond_history.push(BondEvent {
                            seq: entry.seq,
                            action: BondAction::Bonded,
                            counterparty: *parent,
                        }),
                        FieldMutation::ParentSet(None) => {
                            // the counterparty is whoever the node pointed
                            // at before this entry applies
                            if let Some(old) =
                                reducer.state().nodes.get(&node).and_then(|n| n.parent)
                            {
                                bond_history.push(BondEvent {
                                    seq: entry.seq,
                                    action: BondAction::Unbonded,
                                    counterparty: old,
                                });
                            }
                        }
                        FieldMutation::ChildAdded(child) => bond_history.push(BondEvent {
                            seq: entry.seq,
                            action: BondAction::Bonded,
                            counterparty: *child,
                        }),
                        FieldMutation::ChildRemoved(child) => bond_history.push(BondEvent {
                            seq: entry.seq,
                            action: BondAction::Unbonded,
                            counterparty: *child,
                        }),
                        _ => {}
                    }
                }
            }
            _ => {}
        }
        reducer.feed(entry)?;
    }

    let (Some(origin_seq), Some(asa_id)) = (origin_seq, asa_id) else {
        return Err(Error::UnknownNode(node));
    };

    let mut delegation_spans: Vec<DelegationSpan> = Vec::new();
    for change in &holder_history {
        match change.kind {
            TransferKind::Delegation => delegation_spans.push(DelegationSpan {
                start_seq: change.seq,
                end_seq: None,
                delegate: change.to,
            }),
            TransferKind::ClaimBack => {
                if let Some(open) = delegation_spans
                    .iter_mut()
                    .rev()
                    .find(|s| s.end_seq.is_none())
                {
                    open.end_seq = Some(change.seq);
                }
            }
            TransferKind::Sale => {}
        }
    }

    let state = reducer.state();
    let record = &state.nodes[&node];
    Ok(PassportDocument {
        node_address: node,
        asa_id,
        origin_seq,
        current_holder: state
            .holder_of(asa_id)
            .ok_or(Error::UnknownAsset(asa_id.0))?,
        beneficial_owner: record.owner,
        current_tree_root: state.tree_root(node)?,
        holder_history,
        bond_history,
        delegation_spans,
        metadata: record.metadata.clone(),
    })
}

/// The tree under `root` as of entry `seq`, inclusive: replaying
/// `tree_at(log, 0, ..)` sees exactly the first entry.
pub fn tree_at(entries: &[LogEntry], seq: u64, root: Address) -> Result<TreeView> {
    let last = entries
        .last()
        .map(|e| e.seq)
        .ok_or(Error::SeqOutOfRange { seq, len: 0 })?;
    if seq > last {
        return Err(Error::SeqOutOfRange {
            seq,
            len: entries.len() as u64,
        });
    }
    let mut reducer = Reducer::new();
    for entry in entries.iter().take_while(|e| e.seq <= seq) {
        reducer.feed(entry)?;
    }
    if !reducer.state().nodes.contains_key(&root) {
        return Err(Error::RootNotPresent { root, seq });
    }
    TreeView::collect(reducer.state(), root)
}
