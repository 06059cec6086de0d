//! Differential check of the structural audit. Every finding class is
//! recomputed here by brute force, straight from the anchoring conventions
//! the monitor documents, then compared against `audit_forest` over random
//! garbage states and surgically damaged fixtures. The oracle only agrees
//! on (code, subject) pairs; detail strings are presentation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use sarv_core::fixtures::{self, SessionParams, MATRIX_VARIANTS};
use sarv_core::{
    audit_forest, Address, AddressKind, AsaId, Asset, ForestState, LedgerConfig, TokenNode,
    ViolationCode,
};

type Finding = (ViolationCode, Address);

/// Brute-force recomputation of the audit findings, one pass per class,
/// with no shared machinery.
fn oracle(state: &ForestState) -> Vec<Finding> {
    let mut out: Vec<Finding> = Vec::new();

    // Cycles: a node sits on a cycle iff stepping parent links from it comes
    // back to it. Each distinct membership set yields one finding anchored
    // at its smallest member.
    let mut cycles: BTreeSet<BTreeSet<Address>> = BTreeSet::new();
    for start in state.nodes.keys().copied() {
        let mut members = BTreeSet::from([start]);
        let mut current = start;
        for _ in 0..=state.nodes.len() {
            let Some(next) = state.nodes.get(&current).and_then(|n| n.parent) else {
                members.clear();
                break;
            };
            if !state.nodes.contains_key(&next) {
                members.clear();
                break;
            }
            if next == start {
                break; // closed the loop
            }
            if !members.insert(next) {
                members.clear(); // walked into a cycle that excludes start
                break;
            }
            current = next;
        }
        if !members.is_empty() && state.nodes.get(&current).and_then(|n| n.parent) == Some(start) {
            cycles.insert(members);
        }
    }
    for cycle in &cycles {
        out.push((ViolationCode::Cycle, *cycle.iter().next().unwrap()));
    }

    // Asymmetric bonds, both directions, anchored at the child.
    for (addr, node) in &state.nodes {
        if let Some(parent) = node.parent {
            if let Some(p) = state.nodes.get(&parent) {
                if !p.children.contains(addr) {
                    out.push((ViolationCode::AsymmetricBond, *addr));
                }
            }
        }
        for child in &node.children {
            if let Some(c) = state.nodes.get(child) {
                if c.parent != Some(*addr) {
                    out.push((ViolationCode::AsymmetricBond, *child));
                }
            }
        }
    }

    // Multi-parent: an address appearing in more than one child-list slot,
    // duplicates within a single list included.
    let mut appearances: BTreeMap<Address, usize> = BTreeMap::new();
    for node in state.nodes.values() {
        for child in &node.children {
            *appearances.entry(*child).or_default() += 1;
        }
    }
    for (child, count) in appearances {
        if count > 1 {
            out.push((ViolationCode::MultiParent, child));
        }
    }

    for (addr, node) in &state.nodes {
        if node.children.contains(addr) {
            out.push((ViolationCode::SelfChild, *addr));
        }
    }

    // Dangling references: per occurrence on the node side, anchored at the
    // referring node; asset-side findings anchor at the bound node address
    // whether or not it exists.
    for (addr, node) in &state.nodes {
        if let Some(parent) = node.parent {
            if !state.nodes.contains_key(&parent) {
                out.push((ViolationCode::DanglingRef, *addr));
            }
        }
        for child in &node.children {
            if !state.nodes.contains_key(child) {
                out.push((ViolationCode::DanglingRef, *addr));
            }
        }
        if !state.assets.contains_key(&node.asa_id) {
            out.push((ViolationCode::DanglingRef, *addr));
        }
        if !state.accounts.contains(&node.owner) {
            out.push((ViolationCode::DanglingRef, *addr));
        }
    }
    for asset in state.assets.values() {
        if !state.nodes.contains_key(&asset.bound_node) {
            out.push((ViolationCode::DanglingRef, asset.bound_node));
        }
        if !state.accounts.contains(&asset.holder) {
            out.push((ViolationCode::DanglingRef, asset.bound_node));
        }
    }

    // Delegation flag versus where the asset actually sits; mute when the
    // asset is missing, that is already a dangling reference.
    for (addr, node) in &state.nodes {
        if let Some(asset) = state.assets.get(&node.asa_id) {
            let with_owner = asset.holder == node.owner;
            if node.is_delegated == with_owner {
                out.push((ViolationCode::DelegatedHolderMismatch, *addr));
            }
        }
    }

    out.sort();
    out
}

fn audited(state: &ForestState) -> Vec<Finding> {
    let found = audit_forest(state);
    // findings must arrive sorted by (code, subject, detail)
    for pair in found.windows(2) {
        let a = (&pair[0].code, &pair[0].subject, &pair[0].detail);
        let b = (&pair[1].code, &pair[1].subject, &pair[1].detail);
        assert!(a <= b, "audit output out of order: {pair:?}");
    }
    let mut out: Vec<Finding> = found.iter().map(|v| (v.code, v.subject)).collect();
    out.sort();
    out
}

fn user(label: &str) -> Address {
    Address::from_label(AddressKind::User, label)
}

fn node_addr(label: &str) -> Address {
    Address::from_label(AddressKind::Node, label)
}

/// Arbitrary, deliberately inconsistent states: random parent pointers,
/// child lists with duplicates and ghosts, missing assets, wrong holders.
fn garbage_state(seed: u64) -> ForestState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut state = ForestState::default();

    let account_count = rng.gen_range(1..4usize);
    let accounts: Vec<Address> = (0..account_count)
        .map(|i| user(&format!("acct-{seed}-{i}")))
        .collect();
    state.accounts.extend(accounts.iter().copied());
    let nobody = user("nobody");
    let ghost = node_addr("ghost");

    let node_count = rng.gen_range(1..10usize);
    let addrs: Vec<Address> = (0..node_count)
        .map(|i| node_addr(&format!("n-{seed}-{i}")))
        .collect();

    for (i, addr) in addrs.iter().enumerate() {
        let parent = match rng.gen_range(0..5) {
            0 | 1 => None,
            2 => Some(ghost),
            _ => Some(addrs[rng.gen_range(0..node_count)]),
        };
        let mut children = Vec::new();
        for _ in 0..rng.gen_range(0..3usize) {
            children.push(if rng.gen_bool(0.15) {
                ghost
            } else {
                addrs[rng.gen_range(0..node_count)]
            });
        }
        if !children.is_empty() && rng.gen_bool(0.2) {
            children.push(children[0]);
        }
        let owner = if rng.gen_bool(0.9) {
            accounts[rng.gen_range(0..account_count)]
        } else {
            nobody
        };
        let asa_id = AsaId(i as u64 + 1);
        state.nodes.insert(
            *addr,
            TokenNode {
                address: *addr,
                asa_id,
                parent,
                children,
                can_authorize_children: rng.gen_bool(0.5),
                is_delegated: rng.gen_bool(0.3),
                owner,
                metadata: BTreeMap::new(),
            },
        );
        if rng.gen_bool(0.85) {
            let holder = match rng.gen_range(0..6) {
                0 => nobody,
                1 => accounts[rng.gen_range(0..account_count)],
                _ => owner,
            };
            state.assets.insert(
                asa_id,
                Asset {
                    asa_id,
                    holder,
                    bound_node: *addr,
                    units: 1,
                },
            );
        }
    }

    if rng.gen_bool(0.25) {
        let asa_id = AsaId(999);
        state.assets.insert(
            asa_id,
            Asset {
                asa_id,
                holder: if rng.gen_bool(0.5) {
                    accounts[0]
                } else {
                    nobody
                },
                bound_node: ghost,
                units: 1,
            },
        );
    }
    state
}

#[test]
fn audit_matches_the_brute_force_oracle_on_garbage() {
    for seed in 0..600u64 {
        let state = garbage_state(seed);
        let want = oracle(&state);
        let got = audited(&state);
        assert_eq!(
            got, want,
            "audit disagrees with oracle on garbage seed {seed}:\n{state:#?}"
        );
        assert_eq!(audited(&state), got, "audit is not deterministic");
    }
}

#[test]
fn audit_and_oracle_both_clear_sound_fixtures() {
    for seed in [1u64, 7, 23] {
        let t = fixtures::three_trees(seed);
        assert!(oracle(t.ledger.state()).is_empty());
        assert!(audited(t.ledger.state()).is_empty());
    }
    for variant in MATRIX_VARIANTS {
        let m = fixtures::matrix(variant, 5);
        assert!(oracle(m.ledger.state()).is_empty(), "{variant:?}");
        assert!(audited(m.ledger.state()).is_empty(), "{variant:?}");
    }
    let (ledger, _, _) = fixtures::dense_tree(11, 60, LedgerConfig::default());
    assert!(audited(ledger.state()).is_empty());
    for seed in 0..12u64 {
        let ledger = fixtures::random_session(seed, &SessionParams::default());
        let state = ledger.state();
        assert_eq!(oracle(state), audited(state), "session seed {seed}");
        assert!(
            audited(state).is_empty(),
            "generated session should stay sound, seed {seed}"
        );
    }
}

/// One surgical mutation at a time on a sound fixture, each asserting the
/// exact finding set it plants.
#[test]
fn planted_defects_are_reported_exactly() {
    use ViolationCode::*;

    fn plant(
        damage: impl Fn(&mut ForestState, &fixtures::ThreeTrees),
        expected: impl Fn(&fixtures::ThreeTrees) -> Vec<Finding>,
    ) {
        let t = fixtures::three_trees(3);
        let mut state = t.ledger.snapshot();
        damage(&mut state, &t);
        let mut want = expected(&t);
        want.sort();
        assert_eq!(audited(&state), want);
        assert_eq!(oracle(&state), want);
    }

    // drop the child side of a bond: f still lists g
    plant(
        |state, t| state.nodes.get_mut(&t.g).unwrap().parent = None,
        |t| vec![(AsymmetricBond, t.g)],
    );

    // repoint g at a ghost parent: the f listing goes stale and the pointer dangles
    plant(
        |state, t| state.nodes.get_mut(&t.g).unwrap().parent = Some(node_addr("ghost")),
        |t| vec![(AsymmetricBond, t.g), (DanglingRef, t.g)],
    );

    // second child list claims k while r3 keeps it
    plant(
        |state, t| {
            let k = t.k;
            state.nodes.get_mut(&t.f).unwrap().children.push(k);
        },
        |t| vec![(AsymmetricBond, t.k), (MultiParent, t.k)],
    );

    // a node adopted as its own child
    plant(
        |state, t| {
            let f = t.f;
            state.nodes.get_mut(&t.f).unwrap().children.push(f);
        },
        |t| vec![(AsymmetricBond, t.f), (MultiParent, t.f), (SelfChild, t.f)],
    );

    // delegation flag set while the asset sits with the owner
    plant(
        |state, t| state.nodes.get_mut(&t.g).unwrap().is_delegated = true,
        |t| vec![(DelegatedHolderMismatch, t.g)],
    );

    // asset record lost
    plant(
        |state, t| {
            let asa = state.nodes[&t.g].asa_id;
            state.assets.remove(&asa);
        },
        |t| vec![(DanglingRef, t.g)],
    );
}

#[test]
fn each_distinct_cycle_is_one_finding_at_its_smallest_member() {
    let mut state = ForestState::default();
    let owner = user("o");
    state.accounts.insert(owner);
    let names: Vec<Address> = (0..6).map(|i| node_addr(&format!("c{i}"))).collect();
    for (i, addr) in names.iter().enumerate() {
        let asa_id = AsaId(i as u64 + 1);
        state.nodes.insert(
            *addr,
            TokenNode {
                address: *addr,
                asa_id,
                parent: None,
                children: Vec::new(),
                can_authorize_children: false,
                is_delegated: false,
                owner,
                metadata: BTreeMap::new(),
            },
        );
        state.assets.insert(
            asa_id,
            Asset {
                asa_id,
                holder: owner,
                bound_node: *addr,
                units: 1,
            },
        );
    }
    // two-cycle 0<->1 with mutual child links so nothing else fires
    state.nodes.get_mut(&names[0]).unwrap().parent = Some(names[1]);
    state.nodes.get_mut(&names[1]).unwrap().parent = Some(names[0]);
    state
        .nodes
        .get_mut(&names[0])
        .unwrap()
        .children
        .push(names[1]);
    state
        .nodes
        .get_mut(&names[1])
        .unwrap()
        .children
        .push(names[0]);
    // three-cycle 2 -> 3 -> 4 -> 2, again with matching child lists
    for (a, b) in [(2usize, 3usize), (3, 4), (4, 2)] {
        state.nodes.get_mut(&names[a]).unwrap().parent = Some(names[b]);
        state
            .nodes
            .get_mut(&names[b])
            .unwrap()
            .children
            .push(names[a]);
    }
    // node 5 hangs off the three-cycle without being on it
    state.nodes.get_mut(&names[5]).unwrap().parent = Some(names[2]);
    state
        .nodes
        .get_mut(&names[2])
        .unwrap()
        .children
        .push(names[5]);

    let min_two = names[..2].iter().min().unwrap();
    let min_three = names[2..5].iter().min().unwrap();
    let mut expected = vec![
        (ViolationCode::Cycle, *min_two),
        (ViolationCode::Cycle, *min_three),
    ];
    expected.sort();
    assert_eq!(audited(&state), expected);
    assert_eq!(oracle(&state), expected);
}
