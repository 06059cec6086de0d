//! Ready-made forests and randomized sessions. Everything here is built
//! through the public mutation ops, so a fixture is also a valid log; tests
//! lean on that for replay checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::address::Address;
use crate::forest::CallContext;
use crate::ledger::{Ledger, LedgerConfig};
use crate::monitor::would_create_cycle;

fn bond(ledger: &mut Ledger, signer: Address, child: Address, parent: Address) {
    assert!(
        ledger
            .make_bond(CallContext::top(signer), child, child, parent)
            .unwrap(),
        "fixture bond refused"
    );
}

fn sell(ledger: &mut Ledger, node: Address, from: Address, to: Address) {
    let asa = ledger.state().nodes[&node].asa_id;
    assert!(
        ledger
            .transfer_asset(CallContext::top(from), asa, from, to)
            .unwrap(),
        "fixture sale refused"
    );
}

/// Three small trees spread over four accounts:
///
/// ```text
/// tree 1 (alice):   r1 <- {a, b}
/// tree 2:           r2 <- {e, f},  f <- {g}    bob holds r2 and e,
///                                              carol holds f and g,
///                                              f extends authority
/// tree 3:           r3 <- {i, k}               dave holds r3 and i,
///                                              carol holds k
/// ```
pub struct ThreeTrees {
    pub ledger: Ledger,
    pub alice: Address,
    pub bob: Address,
    pub carol: Address,
    pub dave: Address,
    pub r1: Address,
    pub a: Address,
    pub b: Address,
    pub r2: Address,
    pub e: Address,
    pub f: Address,
    pub g: Address,
    pub r3: Address,
    pub i: Address,
    pub k: Address,
}

pub fn three_trees(seed: u64) -> ThreeTrees {
    let mut ledger = Ledger::with_seed(seed);
    let alice = ledger.create_account();
    let bob = ledger.create_account();
    let carol = ledger.create_account();
    let dave = ledger.create_account();
    let node = |l: &mut Ledger, owner, auth| l.create_node(owner, auth, BTreeMap::new()).unwrap().0;

    let r1 = node(&mut ledger, alice, true);
    let a = node(&mut ledger, alice, false);
    let b = node(&mut ledger, alice, false);
    bond(&mut ledger, alice, a, r1);
    bond(&mut ledger, alice, b, r1);

    let r2 = node(&mut ledger, bob, true);
    let e = node(&mut ledger, bob, false);
    let f = node(&mut ledger, bob, false);
    let g = node(&mut ledger, bob, false);
    bond(&mut ledger, bob, e, r2);
    bond(&mut ledger, bob, f, r2);
    bond(&mut ledger, bob, g, f);
    assert!(ledger
        .set_can_authorize_children(CallContext::top(bob), f, true)
        .unwrap());
    sell(&mut ledger, f, bob, carol);
    sell(&mut ledger, g, bob, carol);

    let r3 = node(&mut ledger, dave, true);
    let i = node(&mut ledger, dave, false);
    let k = node(&mut ledger, dave, false);
    bond(&mut ledger, dave, i, r3);
    bond(&mut ledger, dave, k, r3);
    sell(&mut ledger, k, dave, carol);

    ThreeTrees {
        ledger,
        alice,
        bob,
        carol,
        dave,
        r1,
        a,
        b,
        r2,
        e,
        f,
        g,
        r3,
        i,
        k,
    }
}

/// Variants of the five-node authorization playground.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixVariant {
    /// r and m extend authority, the leaves and the stray do not.
    Base,
    /// Every node extends authority.
    AllAuthorized,
    /// l1 is delegated out to u4.
    LeafDelegated,
    /// m does not extend authority.
    MidUnauthorized,
}

pub const MATRIX_VARIANTS: [MatrixVariant; 4] = [
    MatrixVariant::Base,
    MatrixVariant::AllAuthorized,
    MatrixVariant::LeafDelegated,
    MatrixVariant::MidUnauthorized,
];

/// Five nodes, four accounts:
///
/// ```text
/// r (u1) <- m (u2) <- l1 (u3)
/// r      <- l2 (u2)
/// x (u2), detached        u4 holds nothing (the delegate in LeafDelegated)
/// ```
pub struct Matrix {
    pub ledger: Ledger,
    pub u1: Address,
    pub u2: Address,
    pub u3: Address,
    pub u4: Address,
    pub r: Address,
    pub m: Address,
    pub l1: Address,
    pub l2: Address,
    pub x: Address,
}

impl Matrix {
    pub fn users(&self) -> [Address; 4] {
        [self.u1, self.u2, self.u3, self.u4]
    }

    pub fn nodes(&self) -> [Address; 5] {
        [self.r, self.m, self.l1, self.l2, self.x]
    }
}

pub fn matrix(variant: MatrixVariant, seed: u64) -> Matrix {
    let mut ledger = Ledger::with_seed(seed);
    let u1 = ledger.create_account();
    let u2 = ledger.create_account();
    let u3 = ledger.create_account();
    let u4 = ledger.create_account();
    let node = |l: &mut Ledger, owner, auth| l.create_node(owner, auth, BTreeMap::new()).unwrap().0;

    let r = node(&mut ledger, u1, true);
    let m = node(&mut ledger, u1, false);
    let l1 = node(&mut ledger, u1, false);
    let l2 = node(&mut ledger, u1, false);
    bond(&mut ledger, u1, m, r);
    bond(&mut ledger, u1, l1, m);
    bond(&mut ledger, u1, l2, r);
    if variant != MatrixVariant::MidUnauthorized {
        assert!(ledger
            .set_can_authorize_children(CallContext::top(u1), m, true)
            .unwrap());
    }
    sell(&mut ledger, m, u1, u2);
    sell(&mut ledger, l1, u1, u3);
    sell(&mut ledger, l2, u1, u2);
    let x = node(&mut ledger, u2, false);

    match variant {
        MatrixVariant::Base | MatrixVariant::MidUnauthorized => {}
        MatrixVariant::AllAuthorized => {
            for n in [l1, l2] {
                assert!(ledger
                    .set_can_authorize_children(CallContext::top(u1), n, true)
                    .unwrap());
            }
            // x is detached, so its holder speaks for its (trivial) tree
            assert!(ledger
                .set_can_authorize_children(CallContext::top(u2), x, true)
                .unwrap());
        }
        MatrixVariant::LeafDelegated => {
            assert!(ledger.delegate(CallContext::top(u2), l1, u4).unwrap());
        }
    }

    Matrix {
        ledger,
        u1,
        u2,
        u3,
        u4,
        r,
        m,
        l1,
        l2,
        x,
    }
}

/// One account, one tree of `size` nodes with random shape. The root
/// extends authority, so the owner can keep bonding at any depth.
pub fn dense_tree(seed: u64, size: usize, config: LedgerConfig) -> (Ledger, Address, Vec<Address>) {
    assert!(size >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
    let mut ledger = Ledger::with_seed_and_config(seed, config);
    let owner = ledger.create_account();
    let (root, _) = ledger.create_node(owner, true, BTreeMap::new()).unwrap();
    let mut nodes = vec![root];
    for _ in 1..size {
        let (addr, _) = ledger.create_node(owner, false, BTreeMap::new()).unwrap();
        let parent = nodes[rng.gen_range(0..nodes.len())];
        bond(&mut ledger, owner, addr, parent);
        nodes.push(addr);
    }
    (ledger, owner, nodes)
}

#[derive(Clone, Copy, Debug)]
pub struct SessionParams {
    pub ops: usize,
    pub max_nodes: usize,
    pub accounts: usize,
}

impl Default for SessionParams {
    fn default() -> Self {
        SessionParams {
            ops: 50,
            max_nodes: 32,
            accounts: 4,
        }
    }
}

/// Runs a random but well-formed session against a fresh ledger and returns
/// it, log included. The generator only issues calls it can predict: bonds
/// that will be accepted, rejections that will provably not mutate. Replay
/// tests feed on the resulting logs.
pub fn random_session(seed: u64, params: &SessionParams) -> Ledger {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5e55_10f5_u64);
    let mut ledger = Ledger::with_seed(seed);
    let accounts: Vec<Address> = (0..params.accounts.max(2))
        .map(|_| ledger.create_account())
        .collect();

    let pick = |rng: &mut ChaCha12Rng, list: &[Address]| list[rng.gen_range(0..list.len())];

    for _ in 0..params.ops {
        let roll = rng.gen_range(0..100);
        let node_count = ledger.state().nodes.len();
        match roll {
            // mint a node
            0..=24 => {
                if node_count < params.max_nodes {
                    let owner = pick(&mut rng, &accounts);
                    ledger.create_node(owner, false, BTreeMap::new()).unwrap();
                }
            }
            // bond a detached node under a compatible parent
            25..=49 => {
                let state = ledger.state();
                let detached: Vec<Address> = state
                    .nodes
                    .values()
                    .filter(|n| n.parent.is_none() && !n.can_authorize_children)
                    .map(|n| n.address)
                    .collect();
                if detached.is_empty() {
                    continue;
                }
                let child = pick(&mut rng, &detached);
                let child_holder = state.holder_of(state.nodes[&child].asa_id).unwrap();
                let parents: Vec<Address> = state
                    .nodes
                    .values()
                    .filter(|n| {
                        n.address != child && state.holder_of(n.asa_id) == Some(child_holder)
                    })
                    .map(|n| n.address)
                    .collect();
                if parents.is_empty() {
                    continue;
                }
                let parent = pick(&mut rng, &parents);
                if would_create_cycle(state, child, parent).unwrap() {
                    continue;
                }
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| {
                        ledger
                            .bond_authority(*acct, &ledger.state().nodes[&parent])
                            .unwrap()
                    })
                    .collect();
                if signers.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                let ok = ledger
                    .make_bond(CallContext::top(signer), child, child, parent)
                    .unwrap();
                assert!(ok, "screened bond should succeed");
            }
            // unbond
            50..=59 => {
                let bonded: Vec<Address> = ledger
                    .state()
                    .nodes
                    .values()
                    .filter(|n| n.parent.is_some())
                    .map(|n| n.address)
                    .collect();
                if bonded.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &bonded);
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| ledger.is_from_above(CallContext::top(*acct), node).unwrap())
                    .collect();
                if signers.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                let ok = ledger
                    .break_bond(CallContext::top(signer), node, node, node)
                    .unwrap();
                assert!(ok, "screened unbond should succeed");
            }
            // delegate a bonded node to someone other than its owner
            60..=69 => {
                let state = ledger.state();
                let candidates: Vec<Address> = state
                    .nodes
                    .values()
                    .filter(|n| n.parent.is_some() && !n.is_delegated)
                    .map(|n| n.address)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &candidates);
                let owner = state.nodes[&node].owner;
                let targets: Vec<Address> =
                    accounts.iter().copied().filter(|a| *a != owner).collect();
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| ledger.delegate_authority(*acct, node).unwrap())
                    .collect();
                if signers.is_empty() || targets.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                let to = pick(&mut rng, &targets);
                let ok = ledger.delegate(CallContext::top(signer), node, to).unwrap();
                assert!(ok, "screened delegation should succeed");
            }
            // claim a delegation back
            70..=74 => {
                let delegated: Vec<Address> = ledger
                    .state()
                    .nodes
                    .values()
                    .filter(|n| n.is_delegated)
                    .map(|n| n.address)
                    .collect();
                if delegated.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &delegated);
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| ledger.is_from_above(CallContext::top(*acct), node).unwrap())
                    .collect();
                if signers.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                assert!(ledger.claim_back(CallContext::top(signer), node).unwrap());
            }
            // extend or retract downward authority
            75..=81 => {
                let nodes: Vec<Address> = ledger.state().nodes.keys().copied().collect();
                if nodes.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &nodes);
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| ledger.is_from_above(CallContext::top(*acct), node).unwrap())
                    .collect();
                if signers.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                // mostly grant, keeping the forest bondable
                let value = rng.gen_range(0..4) > 0;
                assert!(ledger
                    .set_can_authorize_children(CallContext::top(signer), node, value)
                    .unwrap());
            }
            // stamp some metadata
            82..=86 => {
                let nodes: Vec<Address> = ledger.state().nodes.keys().copied().collect();
                if nodes.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &nodes);
                let signers: Vec<Address> = accounts
                    .iter()
                    .copied()
                    .filter(|acct| ledger.is_from_above(CallContext::top(*acct), node).unwrap())
                    .collect();
                if signers.is_empty() {
                    continue;
                }
                let signer = pick(&mut rng, &signers);
                let key = format!("k{}", rng.gen_range(0..4));
                let value = format!("v{}", rng.gen_range(0..100));
                assert!(ledger
                    .set_metadata(CallContext::top(signer), node, key, value)
                    .unwrap());
            }
            // plain sale
            87..=93 => {
                let state = ledger.state();
                let sellable: Vec<Address> = state
                    .nodes
                    .values()
                    .filter(|n| !n.is_delegated)
                    .map(|n| n.address)
                    .collect();
                if sellable.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &sellable);
                let asa = state.nodes[&node].asa_id;
                let holder = state.holder_of(asa).unwrap();
                let buyers: Vec<Address> =
                    accounts.iter().copied().filter(|a| *a != holder).collect();
                if buyers.is_empty() {
                    continue;
                }
                let to = pick(&mut rng, &buyers);
                assert!(ledger
                    .transfer_asset(CallContext::top(holder), asa, holder, to)
                    .unwrap());
            }
            // deliberately rejected calls, for log coverage
            _ => {
                let state = ledger.state();
                let nodes: Vec<Address> = state.nodes.keys().copied().collect();
                if nodes.is_empty() {
                    continue;
                }
                let node = pick(&mut rng, &nodes);
                match rng.gen_range(0..3) {
                    0 => {
                        // transfer signed by a non-holder bounces
                        let asa = state.nodes[&node].asa_id;
                        let holder = state.holder_of(asa).unwrap();
                        let others: Vec<Address> =
                            accounts.iter().copied().filter(|a| *a != holder).collect();
                        if others.is_empty() {
                            continue;
                        }
                        let imp = pick(&mut rng, &others);
                        let ok = ledger
                            .transfer_asset(CallContext::top(imp), asa, imp, holder)
                            .unwrap();
                        assert!(!ok);
                    }
                    1 => {
                        // unbonding with no authority from above bounces;
                        // screen out anyone who has it
                        let strangers: Vec<Address> = accounts
                            .iter()
                            .copied()
                            .filter(|acct| {
                                !ledger.is_from_above(CallContext::top(*acct), node).unwrap()
                            })
                            .collect();
                        if strangers.is_empty() {
                            continue;
                        }
                        let signer = pick(&mut rng, &strangers);
                        let ok = ledger
                            .break_bond(CallContext::top(signer), node, node, node)
                            .unwrap();
                        assert!(!ok);
                    }
                    _ => {
                        // delegating a detached node bounces for everyone
                        let roots: Vec<Address> = state
                            .nodes
                            .values()
                            .filter(|n| n.parent.is_none())
                            .map(|n| n.address)
                            .collect();
                        if roots.is_empty() {
                            continue;
                        }
                        let root = pick(&mut rng, &roots);
                        let signer = pick(&mut rng, &accounts);
                        let to = pick(&mut rng, &accounts);
                        let ok = ledger.delegate(CallContext::top(signer), root, to).unwrap();
                        assert!(!ok);
                    }
                }
            }
        }
    }
    ledger
}
