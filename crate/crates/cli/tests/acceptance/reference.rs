//! Independent authorization predicates, written directly against the
//! snapshot with no shared machinery, used as the reference side of the
//! agreement matrix. Fixture states are acyclic, so plain parent walks
//! terminate.

use sarv_core::{Address, ForestState, LedgerConfig};

pub fn holds(state: &ForestState, user: Address, node: Address) -> bool {
    let asa = state.nodes[&node].asa_id;
    state.assets[&asa].holder == user
}

/// Proper ancestors, nearest first.
pub fn ancestor_chain(state: &ForestState, node: Address) -> Vec<Address> {
    let mut out = Vec::new();
    let mut current = state.nodes[&node].parent;
    while let Some(p) = current {
        out.push(p);
        current = state.nodes[&p].parent;
    }
    out
}

pub fn tree_root(state: &ForestState, node: Address) -> Address {
    ancestor_chain(state, node).last().copied().unwrap_or(node)
}

/// Authority from above: a held, authority-extending proper ancestor, or
/// holding the tree root itself. A detached node is its own root.
pub fn is_from_above(state: &ForestState, user: Address, node: Address) -> bool {
    ancestor_chain(state, node)
        .iter()
        .any(|p| state.nodes[p].can_authorize_children && holds(state, user, *p))
        || holds(state, user, tree_root(state, node))
}

/// Authority to attach a child to `node`: its own holder when it extends
/// authority, any held authority-extending proper ancestor, or the tree
/// root's holder when `node` is a proper descendant of that root.
pub fn bond_authority(state: &ForestState, user: Address, node: Address) -> bool {
    let n = &state.nodes[&node];
    if n.can_authorize_children && holds(state, user, node) {
        return true;
    }
    if ancestor_chain(state, node)
        .iter()
        .any(|p| state.nodes[p].can_authorize_children && holds(state, user, *p))
    {
        return true;
    }
    let root = tree_root(state, node);
    root != node && holds(state, user, root)
}

pub fn delegate_authority(
    state: &ForestState,
    config: &LedgerConfig,
    user: Address,
    node: Address,
) -> bool {
    let from_ancestor = ancestor_chain(state, node)
        .iter()
        .any(|p| state.nodes[p].can_authorize_children && holds(state, user, *p));
    if !from_ancestor {
        return false;
    }
    config.root_may_delegate || !holds(state, user, tree_root(state, node))
}

// ----- expected call outcomes -----

pub fn predict_break(state: &ForestState, user: Address, node: Address) -> bool {
    is_from_above(state, user, node) && state.nodes[&node].parent.is_some()
}

pub fn predict_claim(state: &ForestState, user: Address, node: Address) -> bool {
    is_from_above(state, user, node)
}

pub fn predict_set(state: &ForestState, user: Address, node: Address) -> bool {
    is_from_above(state, user, node)
}

pub fn predict_delegate(
    state: &ForestState,
    config: &LedgerConfig,
    user: Address,
    node: Address,
) -> bool {
    delegate_authority(state, config, user, node) && !state.nodes[&node].is_delegated
}

/// Outcome of a bond attempt, both routes: the parent-side branch fires on
/// authority over `node`; otherwise a detached node sharing its holder with
/// `to` hands the attempt to `to`, swapped, one level deeper, until the
/// depth budget rejects the frame.
pub fn predict_make(
    state: &ForestState,
    config: &LedgerConfig,
    user: Address,
    node: Address,
    to: Address,
) -> bool {
    predict_make_at(state, config, user, node, to, 0)
}

fn predict_make_at(
    state: &ForestState,
    config: &LedgerConfig,
    user: Address,
    node: Address,
    to: Address,
    depth: u32,
) -> bool {
    if depth > config.max_call_depth {
        return false;
    }
    let n = &state.nodes[&node];
    if bond_authority(state, user, node) && n.parent != Some(to) && !n.children.contains(&to) {
        return true;
    }
    if n.parent.is_none() {
        let (na, ta) = (n.asa_id, state.nodes[&to].asa_id);
        if state.assets[&na].holder == state.assets[&ta].holder {
            return predict_make_at(state, config, user, to, node, depth + 1);
        }
    }
    false
}
