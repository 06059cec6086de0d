//! Acceptance gate: one test per criterion, each printing a PASS line with
//! its measurements and enforcing its time budget.

mod reference;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::Value;

use sarv_core::fixtures::{self, SessionParams, MATRIX_VARIANTS};
use sarv_core::{
    audit_forest, import_entries, rebuild_state, Address, Api, ApiMode, CallContext,
    DerivedKeyScheme, Error, Event, ForestState, Ledger, LedgerConfig, OperationDescriptor,
    ViolationCode,
};

// ----- binary plumbing -----

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sarv"))
}

fn work_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sarv-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(v: &Value) -> &str {
    v.as_str().expect("string field")
}

fn top(user: Address) -> CallContext {
    CallContext::top(user)
}

// ----- criterion 1: the rebond flow, end to end through the binary -----

#[test]
fn ac1_rebond_flow_through_the_binary() {
    let t0 = Instant::now();
    let ledger = work_path("ac1.ndjson");
    let _ = fs::remove_file(&ledger);
    let ledger = ledger.to_str().unwrap();

    let fixture = run_json(&["--ledger", ledger, "fixture", "three-trees", "--seed", "2"]);
    let labels = &fixture["labels"];
    let (dave, carol) = (s(&labels["dave"]), s(&labels["carol"]));
    let (k, f, r2) = (s(&labels["k"]), s(&labels["f"]), s(&labels["r2"]));

    let broke = run_json(&[
        "--ledger",
        ledger,
        "break-bond",
        "--signer",
        dave,
        "--node",
        k,
    ]);
    assert_eq!(
        broke["result"],
        Value::Bool(true),
        "release from the old tree"
    );
    let bonded = run_json(&[
        "--ledger",
        ledger,
        "make-bond",
        "--signer",
        carol,
        "--node",
        k,
        "--to",
        f,
    ]);
    assert_eq!(
        bonded["result"],
        Value::Bool(true),
        "attach under the new parent"
    );

    let doc = run_json(&["--ledger", ledger, "query-passport", "--node", k]);
    assert_eq!(s(&doc["currentTreeRoot"]), r2, "tree root must now be r2");

    let tree = run_json(&["--ledger", ledger, "query-tree", "--root", r2]);
    let children: Vec<&str> = tree["nodes"][f]["children"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_str().unwrap())
        .collect();
    assert!(children.contains(&k), "f must list k as a child");

    assert_eq!(
        run_json(&["--ledger", ledger, "audit"]),
        Value::Array(vec![]),
        "no structural damage"
    );

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(1), "took {dt:?}");
    println!("[AC1] PASS: rebond flow through the binary in {dt:?}");
}

// ----- criterion 2: authorization matrix against the reference predicates -----

#[test]
fn ac2_authorization_matrix_matches_reference_predicates() {
    let t0 = Instant::now();
    let mut cases = 0usize;
    let mut mismatches: Vec<String> = Vec::new();

    let mut check = |label: &str, want: bool, got: bool, detail: String| {
        cases += 1;
        if want != got {
            mismatches.push(format!("{label}: predicted {want}, got {got} ({detail})"));
        }
    };

    let outcome = |state: &ForestState,
                   config: &LedgerConfig,
                   f: &dyn Fn(&mut Ledger) -> sarv_core::Result<bool>|
     -> bool {
        let mut sim = Ledger::from_snapshot(state.clone(), config.clone());
        f(&mut sim).unwrap()
    };

    for variant in MATRIX_VARIANTS {
        for seed in [5u64, 9, 13] {
            let m = fixtures::matrix(variant, seed);
            let state = m.ledger.snapshot();
            let config = m.ledger.config().clone();
            let lenient = LedgerConfig {
                root_may_delegate: true,
                ..config.clone()
            };
            for user in m.users() {
                for node in m.nodes() {
                    let tag = format!("{variant:?}/{seed}/{user}/{node}");

                    check(
                        "fromAbove",
                        reference::is_from_above(&state, user, node),
                        m.ledger.is_from_above(top(user), node).unwrap(),
                        tag.clone(),
                    );
                    check(
                        "breakBond",
                        reference::predict_break(&state, user, node),
                        outcome(&state, &config, &|l| {
                            l.break_bond(top(user), node, node, node)
                        }),
                        tag.clone(),
                    );
                    check(
                        "claimBack",
                        reference::predict_claim(&state, user, node),
                        outcome(&state, &config, &|l| l.claim_back(top(user), node)),
                        tag.clone(),
                    );
                    for value in [true, false] {
                        check(
                            "setAuthorization",
                            reference::predict_set(&state, user, node),
                            outcome(&state, &config, &|l| {
                                l.set_can_authorize_children(top(user), node, value)
                            }),
                            tag.clone(),
                        );
                    }
                    check(
                        "setMetadata",
                        reference::predict_set(&state, user, node),
                        outcome(&state, &config, &|l| {
                            l.set_metadata(top(user), node, "k".into(), "v".into())
                        }),
                        tag.clone(),
                    );
                    for to in m.nodes() {
                        check(
                            "makeBond",
                            reference::predict_make(&state, &config, user, node, to),
                            outcome(&state, &config, &|l| l.make_bond(top(user), node, node, to)),
                            format!("{tag} to {to}"),
                        );
                    }
                    for to in m.users() {
                        for cfg in [&config, &lenient] {
                            check(
                                "delegate",
                                reference::predict_delegate(&state, cfg, user, node),
                                outcome(&state, cfg, &|l| l.delegate(top(user), node, to)),
                                format!("{tag} to {to} lenient={}", cfg.root_may_delegate),
                            );
                        }
                    }
                }
            }
        }
    }

    assert!(
        mismatches.is_empty(),
        "{} of {cases} cases disagree:\n{}",
        mismatches.len(),
        mismatches.join("\n")
    );
    assert_eq!(cases, 4560);
    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(10), "took {dt:?}");
    println!("[AC2] PASS: {cases} authorization cases, 100% agreement, {dt:?}");
}

// ----- criterion 3: replay equivalence over random sessions -----

#[test]
fn ac3_replay_rebuilds_random_sessions_exactly() {
    let t0 = Instant::now();
    let params = SessionParams::default();
    for seed in 0..1000u64 {
        let live = fixtures::random_session(seed, &params);
        let replayed = Ledger::from_entries(live.log().to_vec(), live.config().clone()).unwrap();
        assert_eq!(
            replayed.state(),
            live.state(),
            "state diverged, seed {seed}"
        );
        assert_eq!(replayed.log(), live.log(), "log diverged, seed {seed}");
        assert_eq!(
            &rebuild_state(live.log()).unwrap(),
            live.state(),
            "reducer diverged, seed {seed}"
        );
    }
    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(60), "took {dt:?}");
    println!("[AC3] PASS: 1000 random sessions replayed exactly, {dt:?}");
}

// ----- criterion 4: cycle damage recorded in permissive mode, refused in strict -----

/// Two holders, a three-node chain: a <- b <- c, with b's asset sold to the
/// second holder after it started extending authority. The second holder
/// signing a bond of `a` under `c` closes the loop through an inner call
/// that `b`'s authority admits.
fn cycle_world(mode: ApiMode) -> (Api, Address, [Address; 3]) {
    let mut ledger = Ledger::with_seed(0xC7C1E);
    let v = ledger.create_account();
    let x = ledger.create_account();
    let (a, _) = ledger.create_node(v, true, BTreeMap::new()).unwrap();
    let (b, b_asa) = ledger.create_node(v, false, BTreeMap::new()).unwrap();
    let (c, _) = ledger.create_node(v, false, BTreeMap::new()).unwrap();
    assert!(ledger.make_bond(top(v), b, b, a).unwrap());
    assert!(ledger.make_bond(top(v), c, c, b).unwrap());
    assert!(ledger.set_can_authorize_children(top(v), b, true).unwrap());
    assert!(ledger.transfer_asset(top(v), b_asa, v, x).unwrap());
    assert!(audit_forest(ledger.state()).is_empty());
    (Api::new(ledger, mode), x, [a, b, c])
}

fn random_descriptor(
    rng: &mut ChaCha12Rng,
    api: &Api,
    accounts: &[Address],
) -> OperationDescriptor {
    let nodes: Vec<Address> = api.ledger().state().nodes.keys().copied().collect();
    let signer = accounts[rng.gen_range(0..accounts.len())];
    if nodes.is_empty() || rng.gen_bool(0.25) {
        return OperationDescriptor::CreateNode {
            owner: signer,
            can_authorize_children: rng.gen_bool(0.5),
            metadata: BTreeMap::new(),
        };
    }
    let node = nodes[rng.gen_range(0..nodes.len())];
    match rng.gen_range(0..5) {
        0 => OperationDescriptor::MakeBond {
            signer,
            node,
            to: nodes[rng.gen_range(0..nodes.len())],
        },
        1 => OperationDescriptor::BreakBond { signer, node },
        2 => OperationDescriptor::Delegate {
            signer,
            node,
            to: accounts[rng.gen_range(0..accounts.len())],
        },
        3 => OperationDescriptor::ClaimBack { signer, node },
        _ => OperationDescriptor::SetAuthorization {
            signer,
            node,
            value: rng.gen_bool(0.5),
        },
    }
}

#[test]
fn ac4_cycles_audited_in_permissive_and_blocked_in_strict() {
    let t0 = Instant::now();

    // permissive: the bond goes through and the audit pins exactly one cycle
    let (mut api, x, [a, b, c]) = cycle_world(ApiMode::Permissive);
    let key = api.issue_key("acc").key_id;
    let request = api
        .build_request(
            &key,
            OperationDescriptor::MakeBond {
                signer: x,
                node: a,
                to: c,
            },
        )
        .unwrap();
    let sig = DerivedKeyScheme::sign(request.required_signer, &Api::signing_message(&request));
    let outcome = api.submit_signed(&request.request_id, &sig).unwrap();
    assert!(outcome.result, "permissive mode must let the bond through");
    let found = audit_forest(api.ledger().state());
    assert_eq!(found.len(), 1, "exactly one finding, got {found:#?}");
    assert_eq!(found[0].code, ViolationCode::Cycle);
    let smallest = [a, b, c].into_iter().min().unwrap();
    assert_eq!(
        found[0].subject, smallest,
        "one finding per cycle, at its smallest member"
    );

    // strict: the same submission dies at request building, nothing commits
    let (mut api, x, [a, _, c]) = cycle_world(ApiMode::Strict);
    let key = api.issue_key("acc").key_id;
    let before = api.ledger().snapshot();
    let refused = api.build_request(
        &key,
        OperationDescriptor::MakeBond {
            signer: x,
            node: a,
            to: c,
        },
    );
    match refused {
        Err(Error::PreflightRejected(found)) => {
            assert_eq!(found.len(), 1);
            assert_eq!(found[0].code, ViolationCode::Cycle);
        }
        other => panic!("expected a preflight rejection, got {other:?}"),
    }
    assert_eq!(api.ledger().snapshot(), before);
    assert!(audit_forest(api.ledger().state()).is_empty());

    // fuzz: ten thousand arbitrary strict-mode attempts, audit clean throughout
    let mut rng = ChaCha12Rng::seed_from_u64(0xF0225);
    let mut attempts = 0u32;
    while attempts < 10_000 {
        let mut api = Api::new(Ledger::with_seed(rng.gen()), ApiMode::Strict);
        let accounts: Vec<Address> = (0..3).map(|_| api.ledger_mut().create_account()).collect();
        let key = api.issue_key("fuzz").key_id;
        for _ in 0..40 {
            if attempts == 10_000 {
                break;
            }
            attempts += 1;
            let op = random_descriptor(&mut rng, &api, &accounts);
            match api.build_request(&key, op) {
                Err(Error::PreflightRejected(_)) => {}
                Err(e) => panic!("unexpected build error: {e}"),
                Ok(request) => {
                    let sig = DerivedKeyScheme::sign(
                        request.required_signer,
                        &Api::signing_message(&request),
                    );
                    api.submit_signed(&request.request_id, &sig).unwrap();
                }
            }
            let found = audit_forest(api.ledger().state());
            assert!(
                found.is_empty(),
                "strict mode let damage through: {found:#?}"
            );
        }
    }

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(60), "took {dt:?}");
    println!("[AC4] PASS: one cycle audited, strict preflight refused it, {attempts} fuzz attempts clean, {dt:?}");
}

// ----- criterion 5: delegation round trip over random fixtures -----

#[test]
fn ac5_delegation_round_trip_over_random_fixtures() {
    let t0 = Instant::now();
    let config = LedgerConfig {
        root_may_delegate: true,
        ..LedgerConfig::default()
    };
    let mut root_refusals = 0u32;
    for seed in 0..100u64 {
        let (mut ledger, owner, nodes) = fixtures::dense_tree(seed, 12, config.clone());
        let root = nodes[0];
        let delegate = ledger.create_account();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xDE1E);

        if !ledger.delegate(top(owner), root, delegate).unwrap() {
            root_refusals += 1;
        }

        let node = nodes[1 + rng.gen_range(0..nodes.len() - 1)];
        let before = ledger.snapshot();
        assert!(
            ledger.delegate(top(owner), node, delegate).unwrap(),
            "seed {seed}"
        );
        let asa = ledger.state().nodes[&node].asa_id;
        assert_eq!(ledger.asset_holder(asa).unwrap(), delegate);
        assert!(ledger.state().nodes[&node].is_delegated);
        assert!(audit_forest(ledger.state()).is_empty());

        assert!(ledger.claim_back(top(owner), node).unwrap(), "seed {seed}");
        assert_eq!(
            ledger.snapshot(),
            before,
            "round trip must restore everything"
        );

        let replayed =
            Ledger::from_entries(ledger.log().to_vec(), ledger.config().clone()).unwrap();
        assert_eq!(replayed.state(), ledger.state(), "seed {seed}");
    }
    assert_eq!(
        root_refusals, 100,
        "roots must refuse delegation every time"
    );
    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(10), "took {dt:?}");
    println!("[AC5] PASS: 100 delegation round trips, 100/100 root refusals, {dt:?}");
}

// ----- criterion 6: call depth stays shallow; a zero budget fails clean -----

#[test]
fn ac6_call_depth_stays_shallow_and_zero_budget_fails_clean() {
    let t0 = Instant::now();

    // every successful commit group in real logs holds at most one inner call
    let mut chained_groups = 0u32;
    for log in [
        fixtures::three_trees(4).ledger.log().to_vec(),
        fixtures::random_session(42, &SessionParams::default())
            .log()
            .to_vec(),
    ] {
        let mut groups: BTreeMap<u64, Vec<&sarv_core::AppCallRecord>> = BTreeMap::new();
        for entry in &log {
            if let Event::AppCall(record) = &entry.event {
                groups.entry(entry.timestamp).or_default().push(record);
            }
        }
        for frames in groups.values() {
            let Some(topmost) = frames.iter().find(|f| f.depth == 0) else {
                continue;
            };
            if topmost.returned {
                assert!(frames.len() <= 2, "deep chain: {frames:#?}");
                assert!(frames.iter().all(|f| f.depth <= 1));
                if frames.len() == 2 {
                    chained_groups += 1;
                }
            }
        }
    }
    assert!(
        chained_groups > 0,
        "fixtures must actually exercise inner calls"
    );

    // a zero call budget rejects the inner frame and mutates nothing
    let config = LedgerConfig {
        max_call_depth: 0,
        ..LedgerConfig::default()
    };
    let mut ledger = Ledger::with_seed_and_config(77, config);
    let owner = ledger.create_account();
    let (root, _) = ledger.create_node(owner, true, BTreeMap::new()).unwrap();
    let (child, _) = ledger.create_node(owner, false, BTreeMap::new()).unwrap();
    let result = ledger.make_bond(top(owner), child, child, root).unwrap();
    assert!(!result, "no depth budget, no bond");
    assert_eq!(ledger.state().nodes[&child].parent, None);
    assert!(audit_forest(ledger.state()).is_empty());
    let last_ts = ledger.log().last().unwrap().timestamp;
    let frames: Vec<&sarv_core::AppCallRecord> = ledger
        .log()
        .iter()
        .filter(|e| e.timestamp == last_ts)
        .filter_map(|e| match &e.event {
            Event::AppCall(r) => Some(r),
            _ => None,
        })
        .collect();
    assert_eq!(frames.len(), 2, "outer frame plus the rejected inner frame");
    assert_eq!((frames[0].depth, frames[0].returned), (0, false));
    assert_eq!((frames[1].depth, frames[1].returned), (1, false));

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(1), "took {dt:?}");
    println!(
        "[AC6] PASS: {chained_groups} chained groups all depth<=1, zero budget fails clean, {dt:?}"
    );
}

// ----- criterion 7: metering is exact -----

#[test]
fn ac7_metering_counts_exactly() {
    let t0 = Instant::now();
    let mut api = Api::new(Ledger::with_seed(1), ApiMode::Strict);
    let owner = api.ledger_mut().create_account();
    let k1 = api.issue_key("acme").key_id;
    let k2 = api.issue_key("acme").key_id;
    let k3 = api.issue_key("beta").key_id;

    // k1: build (1), query_tree (2), build again (3); submissions are free
    let request = api
        .build_request(
            &k1,
            OperationDescriptor::CreateNode {
                owner,
                can_authorize_children: true,
                metadata: BTreeMap::new(),
            },
        )
        .unwrap();
    let sig = DerivedKeyScheme::sign(request.required_signer, &Api::signing_message(&request));
    let node = api
        .submit_signed(&request.request_id, &sig)
        .unwrap()
        .node
        .unwrap();
    api.query_tree(&k1, node).unwrap();
    let request = api
        .build_request(
            &k1,
            OperationDescriptor::SetAuthorization {
                signer: owner,
                node,
                value: false,
            },
        )
        .unwrap();
    let sig = DerivedKeyScheme::sign(request.required_signer, &Api::signing_message(&request));
    api.submit_signed(&request.request_id, &sig).unwrap();

    // k2: passport (1), audit (2), and a query that fails AFTER auth (3)
    api.query_passport(&k2, node).unwrap();
    api.audit(&k2).unwrap();
    let ghost = Address::from_label(sarv_core::AddressKind::Node, "ghost");
    assert!(api.query_passport(&k2, ghost).is_err());

    // k3 disabled: refused and not counted
    api.disable_key(&k3).unwrap();
    assert!(matches!(api.audit(&k3), Err(Error::DisabledApiKey(_))));
    // unknown key: refused outright
    assert!(matches!(
        api.audit("key-9999"),
        Err(Error::UnknownApiKey(_))
    ));

    let acme = api.usage_report("acme").unwrap();
    assert_eq!(acme.total, 6);
    assert_eq!(acme.keys[&k1], 3);
    assert_eq!(acme.keys[&k2], 3);
    let beta = api.usage_report("beta").unwrap();
    assert_eq!(beta.total, 0);
    assert_eq!(beta.keys[&k3], 0);
    assert!(matches!(
        api.usage_report("ghost"),
        Err(Error::UnknownOrganization(_))
    ));

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(1), "took {dt:?}");
    println!("[AC7] PASS: per-key counts exact (3+3 acme, 0 beta), {dt:?}");
}

// ----- criterion 8: log export and import are bit-exact -----

#[test]
fn ac8_log_export_import_is_bit_exact() {
    let t0 = Instant::now();
    let ledger = work_path("ac8.ndjson");
    let _ = fs::remove_file(&ledger);
    let path = ledger.to_str().unwrap();

    let fixture = run_json(&["--ledger", path, "fixture", "three-trees", "--seed", "6"]);
    let labels = &fixture["labels"];
    run_json(&[
        "--ledger",
        path,
        "break-bond",
        "--signer",
        s(&labels["dave"]),
        "--node",
        s(&labels["k"]),
    ]);

    let file = fs::read(&ledger).unwrap();
    let out = run(&["--ledger", path, "export-log"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, file, "export must equal the file byte for byte");

    let text = String::from_utf8(file).unwrap();
    let entries = import_entries(&text).unwrap();
    let replayed = Ledger::from_entries(entries, LedgerConfig::default()).unwrap();
    assert_eq!(
        replayed.export_log(),
        text,
        "import then export must be identity"
    );
    assert_eq!(
        rebuild_state(replayed.log()).unwrap(),
        *replayed.state(),
        "the imported world replays to the same state"
    );

    let dt = t0.elapsed();
    assert!(dt < Duration::from_secs(1), "took {dt:?}");
    println!("[AC8] PASS: export/import bit-exact, {dt:?}");
}
