//! Operation descriptors: the serializable form of a mutation as it travels
//! through the request/sign flow. A descriptor names its required signer;
//! the ledger call it compiles to runs with that signer as originator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::error::Result;
use crate::forest::ForestCall;
use crate::snapshot::ForestState;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "camelCase")]
pub enum OperationDescriptor {
    /// Mints a node to `owner`, who must sign.
    #[serde(rename_all = "camelCase")]
    CreateNode {
        owner: Address,
        can_authorize_children: bool,
        #[serde(default)]
        metadata: BTreeMap<String, String>,
    },
    #[serde(rename_all = "camelCase")]
    MakeBond {
        signer: Address,
        node: Address,
        to: Address,
    },
    #[serde(rename_all = "camelCase")]
    BreakBond { signer: Address, node: Address },
    #[serde(rename_all = "camelCase")]
    Delegate {
        signer: Address,
        node: Address,
        to: Address,
    },
    #[serde(rename_all = "camelCase")]
    ClaimBack { signer: Address, node: Address },
    #[serde(rename_all = "camelCase")]
    SetAuthorization {
        signer: Address,
        node: Address,
        value: bool,
    },
}

impl OperationDescriptor {
    pub fn name(&self) -> &'static str {
        match self {
            OperationDescriptor::CreateNode { .. } => "createNode",
            OperationDescriptor::MakeBond { .. } => "makeBond",
            OperationDescriptor::BreakBond { .. } => "breakBond",
            OperationDescriptor::Delegate { .. } => "delegate",
            OperationDescriptor::ClaimBack { .. } => "claimBack",
            OperationDescriptor::SetAuthorization { .. } => "setAuthorization",
        }
    }

    pub fn required_signer(&self) -> Address {
        match *self {
            OperationDescriptor::CreateNode { owner, .. } => owner,
            OperationDescriptor::MakeBond { signer, .. }
            | OperationDescriptor::BreakBond { signer, .. }
            | OperationDescriptor::Delegate { signer, .. }
            | OperationDescriptor::ClaimBack { signer, .. }
            | OperationDescriptor::SetAuthorization { signer, .. } => signer,
        }
    }

    /// The four operations that rearrange bonds or move assets between
    /// holders; these are the ones worth simulating before submission.
    pub fn touches_structure(&self) -> bool {
        matches!(
            self,
            OperationDescriptor::MakeBond { .. }
                | OperationDescriptor::BreakBond { .. }
                | OperationDescriptor::Delegate { .. }
                | OperationDescriptor::ClaimBack { .. }
        )
    }

    /// The ledger call this descriptor compiles to; `CreateNode` is not a
    /// contract call and maps to nothing.
    pub fn to_forest_call(&self) -> Option<ForestCall> {
        match *self {
            OperationDescriptor::CreateNode { .. } => None,
            OperationDescriptor::MakeBond { node, to, .. } => Some(ForestCall::MakeBond {
                node,
                from: node,
                to,
            }),
            OperationDescriptor::BreakBond { node, .. } => Some(ForestCall::BreakBond {
                node,
                from: node,
                to: node,
            }),
            OperationDescriptor::Delegate { node, to, .. } => {
                Some(ForestCall::Delegate { node, to })
            }
            OperationDescriptor::ClaimBack { node, .. } => Some(ForestCall::ClaimBack { node }),
            OperationDescriptor::SetAuthorization { node, value, .. } => {
                Some(ForestCall::SetCanAuthorizeChildren { node, value })
            }
        }
    }

    /// Checks every address the descriptor mentions against the given state.
    /// Signers and delegate targets must be known user accounts, node
    /// arguments known nodes.
    pub fn validate_against(&self, state: &ForestState) -> Result<()> {
        let signer = self.required_signer();
        if !signer.is_user() || !state.accounts.contains(&signer) {
            return Err(Error::UnknownAccount(signer));
        }
        let mut nodes: Vec<Address> = Vec::new();
        match *self {
            OperationDescriptor::CreateNode { .. } => {}
            OperationDescriptor::MakeBond { node, to, .. } => {
                nodes.push(node);
                nodes.push(to);
            }
            OperationDescriptor::Delegate { node, to, .. } => {
                nodes.push(node);
                if !to.is_user() || !state.accounts.contains(&to) {
                    return Err(Error::UnknownAccount(to));
                }
            }
            OperationDescriptor::BreakBond { node, .. }
            | OperationDescriptor::ClaimBack { node, .. }
            | OperationDescriptor::SetAuthorization { node, .. } => nodes.push(node),
        }
        for node in nodes {
            if !node.is_node() || !state.nodes.contains_key(&node) {
                return Err(Error::UnknownNode(node));
            }
        }
        Ok(())
    }
}
