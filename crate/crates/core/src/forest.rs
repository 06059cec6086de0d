//! Token-tree mutation: bonds between nodes, delegation of single nodes, and
//! the authorization rules guarding both.
//!
//! Every mutating call runs as a chain: the top-level frame at depth 0, inner
//! contract-to-contract frames below it. Each frame gets its own `AppCall`
//! record; a record is reserved when the frame starts, so invocation order is
//! preserved in the log even though results are patched in afterwards. All
//! frames of one chain commit atomically with one logical timestamp, and an
//! error anywhere in the chain commits nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::address::{Address, AddressKind};
use crate::error::{Error, Result};
use crate::ledger::{AppCallRecord, AsaId, Event, FieldChange, FieldMutation, Ledger};

/// One node of the forest. The asset identified by `asa_id` is the control
/// handle: whoever holds it speaks for the node, while `owner` tracks the
/// beneficial owner across delegations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenNode {
    pub address: Address,
    pub asa_id: AsaId,
    pub parent: Option<Address>,
    /// Insertion-ordered; a bond is mutual when the child's `parent` and the
    /// parent's `children` agree.
    pub children: Vec<Address>,
    /// Whether this node extends bond authority downwards: holders of its
    /// asset may rearrange bonds among its descendants.
    pub can_authorize_children: bool,
    pub is_delegated: bool,
    /// Beneficial owner. Follows sales, not delegations.
    pub owner: Address,
    pub metadata: BTreeMap<String, String>,
}

impl TokenNode {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// Identity of a call frame. `originator` signed the top-level transaction
/// and never changes down the chain; `immediate_caller` is whoever issued
/// this particular frame (the originator at depth 0, a node below that).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallContext {
    pub originator: Address,
    pub immediate_caller: Address,
    pub depth: u32,
}

impl CallContext {
    pub fn top(originator: Address) -> Self {
        CallContext {
            originator,
            immediate_caller: originator,
            depth: 0,
        }
    }

    fn inner(self, caller_node: Address) -> Self {
        CallContext {
            originator: self.originator,
            immediate_caller: caller_node,
            depth: self.depth + 1,
        }
    }
}

/// A mutating forest call, ready for dispatch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForestCall {
    BreakBond {
        node: Address,
        from: Address,
        to: Address,
    },
    MakeBond {
        node: Address,
        from: Address,
        to: Address,
    },
    Delegate {
        node: Address,
        to: Address,
    },
    ClaimBack {
        node: Address,
    },
    SetCanAuthorizeChildren {
        node: Address,
        value: bool,
    },
    SetMetadata {
        node: Address,
        key: String,
        value: String,
    },
}

impl ForestCall {
    pub fn function(&self) -> &'static str {
        match self {
            ForestCall::BreakBond { .. } => "breakBond",
            ForestCall::MakeBond { .. } => "makeBond",
            ForestCall::Delegate { .. } => "delegate",
            ForestCall::ClaimBack { .. } => "claimBack",
            ForestCall::SetCanAuthorizeChildren { .. } => "setCanAuthorizeChildren",
            ForestCall::SetMetadata { .. } => "setMetadata",
        }
    }

    pub fn node(&self) -> Address {
        match *self {
            ForestCall::BreakBond { node, .. }
            | ForestCall::MakeBond { node, .. }
            | ForestCall::Delegate { node, .. }
            | ForestCall::ClaimBack { node }
            | ForestCall::SetCanAuthorizeChildren { node, .. }
            | ForestCall::SetMetadata { node, .. } => node,
        }
    }
}

impl Ledger {
    /// The "from above" test: the originator holds the asset of some proper
    /// ancestor that extends authority downwards, or holds the asset of the
    /// node's tree root (a detached node is its own root, so its holder
    /// qualifies). This is the gate for unbonding, claim-back, and the node
    /// setters.
    pub fn is_from_above(&self, ctx: CallContext, node: Address) -> Result<bool> {
        let state = self.state();
        for ancestor in state.proper_ancestors(node)? {
            let a = &state.nodes[&ancestor];
            if a.can_authorize_children && state.holder_of(a.asa_id) == Some(ctx.originator) {
                return Ok(true);
            }
        }
        let root = state.tree_root(node)?;
        let root_asa = state.nodes[&root].asa_id;
        Ok(state.holder_of(root_asa) == Some(ctx.originator))
    }

    pub fn tree_root(&self, node: Address) -> Result<Address> {
        self.require_node(node)?;
        self.state().tree_root(node)
    }

    /// Authority to add a child to `node`. Like `is_from_above` but with the
    /// node's own holder admitted only when the node extends authority, and
    /// the root-holder clause restricted to proper descendants: if a detached
    /// node's own holder counted as from-above, the parent-side branch would
    /// capture every child-side bond attempt between co-held nodes and no
    /// mutual bond could ever form.
    pub(crate) fn bond_authority(&self, originator: Address, node: &TokenNode) -> Result<bool> {
        let state = self.state();
        if node.can_authorize_children && state.holder_of(node.asa_id) == Some(originator) {
            return Ok(true);
        }
        for ancestor in state.proper_ancestors(node.address)? {
            let a = &state.nodes[&ancestor];
            if a.can_authorize_children && state.holder_of(a.asa_id) == Some(originator) {
                return Ok(true);
            }
        }
        let root = state.tree_root(node.address)?;
        if root == node.address {
            return Ok(false);
        }
        let root_asa = state.nodes[&root].asa_id;
        Ok(state.holder_of(root_asa) == Some(originator))
    }

    /// Authority to delegate `node`: a held, authority-extending proper
    /// ancestor is required, so roots are never delegatable. Unless the
    /// ledger is configured otherwise, holding the tree root disqualifies
    /// the originator: root holders keep structural power but not the power
    /// to hand assets out.
    pub(crate) fn delegate_authority(&self, originator: Address, node: Address) -> Result<bool> {
        let state = self.state();
        let ancestors = state.proper_ancestors(node)?;
        let from_ancestor = ancestors.iter().any(|p| {
            let a = &state.nodes[p];
            a.can_authorize_children && state.holder_of(a.asa_id) == Some(originator)
        });
        if !from_ancestor {
            return Ok(false);
        }
        if self.config().root_may_delegate {
            return Ok(true);
        }
        let root = ancestors.last().copied().unwrap_or(node);
        let root_asa = state.nodes[&root].asa_id;
        Ok(state.holder_of(root_asa) != Some(originator))
    }

    pub fn break_bond(
        &mut self,
        ctx: CallContext,
        node: Address,
        from: Address,
        to: Address,
    ) -> Result<bool> {
        self.call(ctx, ForestCall::BreakBond { node, from, to }, None)
    }

    pub fn make_bond(
        &mut self,
        ctx: CallContext,
        node: Address,
        from: Address,
        to: Address,
    ) -> Result<bool> {
        self.call(ctx, ForestCall::MakeBond { node, from, to }, None)
    }

    pub fn delegate(&mut self, ctx: CallContext, node: Address, to: Address) -> Result<bool> {
        self.call(ctx, ForestCall::Delegate { node, to }, None)
    }

    pub fn claim_back(&mut self, ctx: CallContext, node: Address) -> Result<bool> {
        self.call(ctx, ForestCall::ClaimBack { node }, None)
    }

    pub fn set_can_authorize_children(
        &mut self,
        ctx: CallContext,
        node: Address,
        value: bool,
    ) -> Result<bool> {
        self.call(
            ctx,
            ForestCall::SetCanAuthorizeChildren { node, value },
            None,
        )
    }

    pub fn set_metadata(
        &mut self,
        ctx: CallContext,
        node: Address,
        key: String,
        value: String,
    ) -> Result<bool> {
        self.call(ctx, ForestCall::SetMetadata { node, key, value }, None)
    }

    /// Validates and runs one top-level call. Unresolvable arguments error
    /// out before anything is logged; from there on every outcome, including
    /// a rejection, leaves a record.
    pub fn call(
        &mut self,
        ctx: CallContext,
        call: ForestCall,
        request_id: Option<String>,
    ) -> Result<bool> {
        self.require_top_level(ctx)?;
        self.require_node(call.node())?;
        match &call {
            ForestCall::MakeBond { to, .. } => {
                self.require_node(*to)?;
            }
            ForestCall::Delegate { to, .. } => {
                self.require_account(*to)?;
            }
            _ => {}
        }
        let mut chain = Chain {
            ledger: self,
            events: Vec::new(),
            request_id,
        };
        let result = chain.dispatch(ctx, call)?;
        let events = chain.events;
        self.append_commit(events);
        Ok(result)
    }
}

/// Collects the log entries of one call chain while applying state changes
/// in place. Errors abort the chain before it has mutated anything, so the
/// buffered entries can simply be dropped.
struct Chain<'a> {
    ledger: &'a mut Ledger,
    events: Vec<Event>,
    request_id: Option<String>,
}

impl Chain<'_> {
    fn dispatch(&mut self, ctx: CallContext, call: ForestCall) -> Result<bool> {
        let frame = self.begin(&call, ctx);
        if ctx.depth > self.ledger.config().max_call_depth {
            self.finish(frame, false);
            return Ok(false);
        }
        let result = match call {
            ForestCall::BreakBond { node, from, to } => {
                self.break_bond(frame, ctx, node, from, to)?
            }
            ForestCall::MakeBond { node, from, to } => {
                self.make_bond(frame, ctx, node, from, to)?
            }
            ForestCall::Delegate { node, to } => self.delegate(frame, ctx, node, to)?,
            ForestCall::ClaimBack { node } => self.claim_back(frame, ctx, node)?,
            ForestCall::SetCanAuthorizeChildren { node, value } => {
                self.set_flag(frame, ctx, node, value)?
            }
            ForestCall::SetMetadata { node, key, value } => {
                self.set_metadata(frame, ctx, node, key, value)?
            }
        };
        self.finish(frame, result);
        Ok(result)
    }

    fn break_bond(
        &mut self,
        frame: usize,
        ctx: CallContext,
        node: Address,
        from: Address,
        to: Address,
    ) -> Result<bool> {
        let record = self.node(node)?.clone();
        // Parent side: an immediate child detaching itself via an inner call.
        // User accounts are never children, so this branch only fires from
        // inside a chain.
        if record.children.contains(&ctx.immediate_caller)
            && from == ctx.immediate_caller
            && to == node
        {
            self.remove_child(frame, node, from);
            return Ok(true);
        }
        // Child side: someone above the node detaches it from its parent.
        if self.ledger.is_from_above(ctx, node)? {
            let Some(parent) = record.parent else {
                return Ok(false);
            };
            let released = self.inner_call(
                ctx,
                node,
                ForestCall::BreakBond {
                    node: parent,
                    from: node,
                    to: parent,
                },
            )?;
            if released {
                self.set_parent(frame, node, None);
            }
            return Ok(released);
        }
        Ok(false)
    }

    fn make_bond(
        &mut self,
        frame: usize,
        ctx: CallContext,
        node: Address,
        from: Address,
        to: Address,
    ) -> Result<bool> {
        let record = self.node(node)?.clone();
        // Parent side: append a child. Deliberately one-sided; the mutual
        // bond arises when this fires as the inner frame of a child-side
        // call. A top-level fire leaves an asymmetric edge for the monitor
        // to flag.
        if self.ledger.bond_authority(ctx.originator, &record)?
            && from == node
            && record.parent != Some(to)
            && !record.children.contains(&to)
        {
            self.add_child(frame, node, to);
            return Ok(true);
        }
        // Child side: a detached node bonds under `to` when one account
        // holds both assets; the inner frame does the parent-side append.
        if from == node && record.parent.is_none() {
            let to_asa = self.node(to)?.asa_id;
            let state = self.ledger.state();
            if state.holder_of(record.asa_id) == state.holder_of(to_asa) {
                let accepted = self.inner_call(
                    ctx,
                    node,
                    ForestCall::MakeBond {
                        node: to,
                        from: to,
                        to: node,
                    },
                )?;
                if accepted {
                    self.set_parent(frame, node, Some(to));
                }
                return Ok(accepted);
            }
        }
        Ok(false)
    }

    fn delegate(
        &mut self,
        frame: usize,
        ctx: CallContext,
        node: Address,
        to: Address,
    ) -> Result<bool> {
        if !self.ledger.delegate_authority(ctx.originator, node)? {
            return Ok(false);
        }
        let record = self.node(node)?;
        if record.is_delegated {
            return Ok(false);
        }
        let asa = record.asa_id;
        self.set_delegated(frame, node, true);
        self.transfer_in_chain(asa, to);
        Ok(true)
    }

    fn claim_back(&mut self, frame: usize, ctx: CallContext, node: Address) -> Result<bool> {
        if !self.ledger.is_from_above(ctx, node)? {
            return Ok(false);
        }
        let record = self.node(node)?;
        let asa = record.asa_id;
        let owner = record.owner;
        self.set_delegated(frame, node, false);
        self.transfer_in_chain(asa, owner);
        Ok(true)
    }

    fn set_flag(
        &mut self,
        frame: usize,
        ctx: CallContext,
        node: Address,
        value: bool,
    ) -> Result<bool> {
        if !self.ledger.is_from_above(ctx, node)? {
            return Ok(false);
        }
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .can_authorize_children = value;
        self.record(frame, node, FieldMutation::CanAuthorizeChildrenSet(value));
        Ok(true)
    }

    fn set_metadata(
        &mut self,
        frame: usize,
        ctx: CallContext,
        node: Address,
        key: String,
        value: String,
    ) -> Result<bool> {
        if !self.ledger.is_from_above(ctx, node)? {
            return Ok(false);
        }
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .metadata
            .insert(key.clone(), value.clone());
        self.record(frame, node, FieldMutation::MetadataSet { key, value });
        Ok(true)
    }

    fn inner_call(&mut self, ctx: CallContext, caller: Address, call: ForestCall) -> Result<bool> {
        self.dispatch(ctx.inner(caller), call)
    }

    // ----- frame bookkeeping -----

    fn begin(&mut self, call: &ForestCall, ctx: CallContext) -> usize {
        let mut args = BTreeMap::new();
        match call {
            ForestCall::BreakBond { from, to, .. } | ForestCall::MakeBond { from, to, .. } => {
                args.insert("from".into(), from.to_string());
                args.insert("to".into(), to.to_string());
            }
            ForestCall::Delegate { to, .. } => {
                args.insert("to".into(), to.to_string());
            }
            ForestCall::ClaimBack { .. } => {}
            ForestCall::SetCanAuthorizeChildren { value, .. } => {
                args.insert("value".into(), value.to_string());
            }
            ForestCall::SetMetadata { key, value, .. } => {
                args.insert("key".into(), key.clone());
                args.insert("value".into(), value.clone());
            }
        }
        self.events.push(Event::AppCall(AppCallRecord {
            target: call.node(),
            function: call.function().into(),
            args,
            originator: ctx.originator,
            immediate_caller: ctx.immediate_caller,
            depth: ctx.depth,
            returned: false,
            field_changes: Vec::new(),
            request_id: self.request_id.clone(),
        }));
        self.events.len() - 1
    }

    fn finish(&mut self, frame: usize, returned: bool) {
        if let Event::AppCall(rec) = &mut self.events[frame] {
            rec.returned = returned;
        }
    }

    fn record(&mut self, frame: usize, node: Address, change: FieldMutation) {
        if let Event::AppCall(rec) = &mut self.events[frame] {
            rec.field_changes.push(FieldChange { node, change });
        }
    }

    fn node(&self, address: Address) -> Result<&TokenNode> {
        if address.kind() != AddressKind::Node {
            return Err(Error::WrongAddressKind {
                address,
                expected: AddressKind::Node,
                actual: address.kind(),
            });
        }
        self.ledger
            .state()
            .nodes
            .get(&address)
            .ok_or(Error::UnknownNode(address))
    }

    // ----- recorded mutations -----

    fn set_parent(&mut self, frame: usize, node: Address, parent: Option<Address>) {
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .parent = parent;
        self.record(frame, node, FieldMutation::ParentSet(parent));
    }

    fn add_child(&mut self, frame: usize, node: Address, child: Address) {
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .children
            .push(child);
        self.record(frame, node, FieldMutation::ChildAdded(child));
    }

    fn remove_child(&mut self, frame: usize, node: Address, child: Address) {
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .children
            .retain(|c| *c != child);
        self.record(frame, node, FieldMutation::ChildRemoved(child));
    }

    fn set_delegated(&mut self, frame: usize, node: Address, value: bool) {
        self.ledger
            .state_mut()
            .nodes
            .get_mut(&node)
            .expect("checked")
            .is_delegated = value;
        self.record(frame, node, FieldMutation::DelegatedSet(value));
    }

    /// Asset movement inside a chain: holder changes, beneficial owner does
    /// not. A transfer to the current holder is skipped entirely so replays
    /// see no phantom movement.
    fn transfer_in_chain(&mut self, asa_id: AsaId, to: Address) {
        let holder = self
            .ledger
            .state()
            .holder_of(asa_id)
            .expect("chain nodes have assets");
        if holder == to {
            return;
        }
        self.ledger
            .state_mut()
            .assets
            .get_mut(&asa_id)
            .expect("chain nodes have assets")
            .holder = to;
        self.events.push(Event::TransferAsset {
            asa_id,
            from: holder,
            to,
        });
    }
}
