//! Point-in-time view of everything the ledger tracks. `ForestState`
//! compares field-by-field, which is what replay-equivalence checks lean on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::error::{Error, Result};
use crate::forest::TokenNode;
use crate::ledger::{AsaId, Asset};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestState {
    pub accounts: BTreeSet<Address>,
    pub nodes: BTreeMap<Address, TokenNode>,
    pub assets: BTreeMap<AsaId, Asset>,
}

impl ForestState {
    pub fn node(&self, address: Address) -> Option<&TokenNode> {
        self.nodes.get(&address)
    }

    pub fn holder_of(&self, asa_id: AsaId) -> Option<Address> {
        self.assets.get(&asa_id).map(|a| a.holder)
    }

    /// Ancestors of `node` from its parent up to the root, excluding `node`
    /// itself. Errs if the chain leaves the node map or loops.
    pub fn proper_ancestors(&self, node: Address) -> Result<Vec<Address>> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        seen.insert(node);
        let mut current = self.nodes.get(&node).ok_or(Error::UnknownNode(node))?;
        while let Some(parent) = current.parent {
            if !seen.insert(parent) {
                return Err(Error::CycleDetected(parent));
            }
            current = self.nodes.get(&parent).ok_or(Error::UnknownNode(parent))?;
            out.push(parent);
        }
        Ok(out)
    }

    /// Topmost node reachable by parent links; a detached node is its own
    /// root.
    pub fn tree_root(&self, node: Address) -> Result<Address> {
        let ancestors = self.proper_ancestors(node)?;
        Ok(ancestors.last().copied().unwrap_or(node))
    }
}

/// A root and every node reachable from it by child links. Produced by
/// point-in-time tree queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TreeView {
    pub root: Address,
    pub nodes: BTreeMap<Address, TokenNode>,
}

impl TreeView {
    /// Collects the subtree under `root` by child links. Tolerates dangling
    /// child references (skips them) so damaged states can still be viewed.
    pub fn collect(state: &ForestState, root: Address) -> Result<TreeView> {
        let mut nodes = BTreeMap::new();
        let mut queue = vec![root];
        let root_node = state.nodes.get(&root).ok_or(Error::UnknownNode(root))?;
        nodes.insert(root, root_node.clone());
        while let Some(addr) = queue.pop() {
            let node = state.nodes.get(&addr).expect("queued nodes exist");
            for child in node.children.clone() {
                if nodes.contains_key(&child) {
                    continue;
                }
                if let Some(c) = state.nodes.get(&child) {
                    nodes.insert(child, c.clone());
                    queue.push(child);
                }
            }
        }
        Ok(TreeView { root, nodes })
    }

    pub fn contains(&self, address: Address) -> bool {
        self.nodes.contains_key(&address)
    }
}
