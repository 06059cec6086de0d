//! Off-chain structural monitor. The on-chain rules do not enforce global
//! shape, so this module audits snapshots for the damage a raw call sequence
//! can cause, predicts whether a bond would close a cycle, and simulates
//! whole operations against a throwaway copy of the state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::error::{Error, Result};
use crate::forest::CallContext;
use crate::ledger::{Ledger, LedgerConfig};
use crate::ops::OperationDescriptor;
use crate::snapshot::ForestState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    Cycle,
    AsymmetricBond,
    MultiParent,
    SelfChild,
    DanglingRef,
    DelegatedHolderMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub code: ViolationCode,
    /// The node the finding is anchored to; for a cycle, its smallest
    /// member, so one cycle yields one violation no matter where the scan
    /// enters it.
    pub subject: Address,
    pub detail: String,
}

fn violation(code: ViolationCode, subject: Address, detail: String) -> Violation {
    Violation {
        code,
        subject,
        detail,
    }
}

/// Every cycle formed by parent links, each cycle listed once and rotated to
/// start at its smallest member.
fn parent_cycles(state: &ForestState) -> Vec<Vec<Address>> {
    let mut cycles = Vec::new();
    let mut resolved: BTreeSet<Address> = BTreeSet::new();
    for start in state.nodes.keys().copied() {
        if resolved.contains(&start) {
            continue;
        }
        let mut path: Vec<Address> = Vec::new();
        let mut on_path: BTreeSet<Address> = BTreeSet::new();
        let mut current = start;
        loop {
            if resolved.contains(&current) {
                break;
            }
            if on_path.contains(&current) {
                let begin = path.iter().position(|a| *a == current).unwrap();
                let mut cycle: Vec<Address> = path[begin..].to_vec();
                let min_pos = cycle
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, a)| **a)
                    .map(|(i, _)| i)
                    .unwrap();
                cycle.rotate_left(min_pos);
                cycles.push(cycle);
                break;
            }
            path.push(current);
            on_path.insert(current);
            match state.nodes.get(&current).and_then(|n| n.parent) {
                Some(parent) if state.nodes.contains_key(&parent) => current = parent,
                _ => break,
            }
        }
        resolved.extend(path);
    }
    cycles
}

/// Full structural audit of a snapshot. Pure; safe to run against live
/// state, a replayed state, or a simulation. Findings come back sorted by
/// (code, subject, detail) so equal states always audit identically.
pub fn audit_forest(state: &ForestState) -> Vec<Violation> {
    let mut out = Vec::new();

    for cycle in parent_cycles(state) {
        let path = cycle
            .iter()
            .chain(cycle.first())
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(" -> ");
        out.push(violation(
            ViolationCode::Cycle,
            cycle[0],
            format!("parent links loop: {path}"),
        ));
    }

    for (addr, node) in &state.nodes {
        if let Some(parent) = node.parent {
            if let Some(p) = state.nodes.get(&parent) {
                if !p.children.contains(addr) {
                    out.push(violation(
                        ViolationCode::AsymmetricBond,
                        *addr,
                        format!("points at parent {parent} which does not list it as a child"),
                    ));
                }
            }
        }
        for child in &node.children {
            if let Some(c) = state.nodes.get(child) {
                if c.parent != Some(*addr) {
                    let actual = c
                        .parent
                        .map(|p| p.to_string())
                        .unwrap_or_else(|| "none".into());
                    out.push(violation(
                        ViolationCode::AsymmetricBond,
                        *child,
                        format!("listed as a child of {addr} but its parent is {actual}"),
                    ));
                }
            }
        }
    }

    let mut listed_by: BTreeMap<Address, Vec<Address>> = BTreeMap::new();
    for (addr, node) in &state.nodes {
        for child in &node.children {
            listed_by.entry(*child).or_default().push(*addr);
        }
    }
    for (child, parents) in listed_by {
        if parents.len() > 1 {
            let list = parents
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            out.push(violation(
                ViolationCode::MultiParent,
                child,
                format!("appears in {} child lists: {list}", parents.len()),
            ));
        }
    }

    for (addr, node) in &state.nodes {
        if node.children.contains(addr) {
            out.push(violation(
                ViolationCode::SelfChild,
                *addr,
                "listed among its own children".into(),
            ));
        }
    }

    for (addr, node) in &state.nodes {
        if let Some(parent) = node.parent {
            if !state.nodes.contains_key(&parent) {
                out.push(violation(
                    ViolationCode::DanglingRef,
                    *addr,
                    format!("parent {parent} is not a known node"),
                ));
            }
        }
        for child in &node.children {
            if !state.nodes.contains_key(child) {
                out.push(violation(
                    ViolationCode::DanglingRef,
                    *addr,
                    format!("child {child} is not a known node"),
                ));
            }
        }
        if !state.assets.contains_key(&node.asa_id) {
            out.push(violation(
                ViolationCode::DanglingRef,
                *addr,
                format!("asset {} is missing", node.asa_id),
            ));
        }
        if !state.accounts.contains(&node.owner) {
            out.push(violation(
                ViolationCode::DanglingRef,
                *addr,
                format!("owner {} is not a known account", node.owner),
            ));
        }
    }
    for asset in state.assets.values() {
        if !state.nodes.contains_key(&asset.bound_node) {
            out.push(violation(
                ViolationCode::DanglingRef,
                asset.bound_node,
                format!("asset {} is bound to a missing node", asset.asa_id),
            ));
        }
        if !state.accounts.contains(&asset.holder) {
            out.push(violation(
                ViolationCode::DanglingRef,
                asset.bound_node,
                format!(
                    "asset {} is held by unknown account {}",
                    asset.asa_id, asset.holder
                ),
            ));
        }
    }

    for (addr, node) in &state.nodes {
        let Some(asset) = state.assets.get(&node.asa_id) else {
            continue; // already a DANGLING_REF
        };
        let with_owner = asset.holder == node.owner;
        if node.is_delegated && with_owner {
            out.push(violation(
                ViolationCode::DelegatedHolderMismatch,
                *addr,
                "marked delegated but its asset sits with the beneficial owner".into(),
            ));
        }
        if !node.is_delegated && !with_owner {
            out.push(violation(
                ViolationCode::DelegatedHolderMismatch,
                *addr,
                format!(
                    "not delegated but its asset sits with {}, owner is {}",
                    asset.holder, node.owner
                ),
            ));
        }
    }

    out.sort_by(|a, b| (a.code, a.subject, &a.detail).cmp(&(b.code, b.subject, &b.detail)));
    out
}

/// Would re-parenting `child` under `new_parent` close a parent-link loop?
/// Both nodes must exist, and the snapshot must not already be cyclic;
/// prediction on damaged state is meaningless, audit it instead.
pub fn would_create_cycle(
    state: &ForestState,
    child: Address,
    new_parent: Address,
) -> Result<bool> {
    for node in [child, new_parent] {
        if !state.nodes.contains_key(&node) {
            return Err(Error::UnknownNode(node));
        }
    }
    if let Some(cycle) = parent_cycles(state).first() {
        return Err(Error::CycleDetected(cycle[0]));
    }
    if child == new_parent {
        return Ok(true);
    }
    Ok(state.proper_ancestors(new_parent)?.contains(&child))
}

/// Simulates `op` against a copy of `state` and reports the violations the
/// real submission would introduce: the audit findings of the simulated
/// state minus any already present. A bond that would close a cycle is
/// reported without simulation, since executing it would poison the copy's
/// ancestor walks too.
pub fn preflight(
    state: &ForestState,
    op: &OperationDescriptor,
    config: &LedgerConfig,
) -> Result<Vec<Violation>> {
    op.validate_against(state)?;
    let Some(call) = op.to_forest_call() else {
        return Ok(Vec::new());
    };
    if let OperationDescriptor::MakeBond { node, to, .. } = op {
        if would_create_cycle(state, *node, *to)? {
            return Ok(vec![violation(
                ViolationCode::Cycle,
                *node,
                format!("bonding under {to} would close a parent-link loop"),
            )]);
        }
    }
    let before = audit_forest(state);
    let mut sim = Ledger::from_snapshot(state.clone(), config.clone());
    let ctx = CallContext::top(op.required_signer());
    sim.call(ctx, call, None)?;
    let after = audit_forest(sim.state());
    Ok(after.into_iter().filter(|v| !before.contains(v)).collect())
}
