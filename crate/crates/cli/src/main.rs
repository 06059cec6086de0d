//! Command line over the forest: single-shot mutations through the
//! request/sign facade, log-backed queries, fixtures, and scripted runs.
//!
//! State lives in two plain files the caller names: `--ledger` holds the
//! exported log (one JSON entry per line) and is replayed on startup;
//! `--api-state` holds keys, pending requests and meters. Commands that
//! change anything write both back on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use sarv_core::scenario;
use sarv_core::{
    fixtures, import_entries, Address, Api, ApiMode, CallContext, DerivedKeyScheme, Ledger,
    LedgerConfig, OperationDescriptor, SubmitOutcome,
};

#[derive(Parser)]
#[command(
    name = "sarv",
    version,
    about = "Token-tree forest over a simulated ledger"
)]
struct Cli {
    /// Log file; replayed on startup, rewritten after each run.
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,
    /// Key and request store; omit for a throwaway session.
    #[arg(long, global = true)]
    api_state: Option<PathBuf>,
    /// Skip the structural preflight that strict mode applies.
    #[arg(long, global = true)]
    permissive: bool,
    /// Inner-call budget for bond chains (default 8).
    #[arg(long, global = true)]
    max_call_depth: Option<u32>,
    /// Let tree roots be delegated despite having no ancestor.
    #[arg(long, global = true)]
    root_may_delegate: bool,
    /// Address randomness for freshly created ledgers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a new account address.
    CreateAccount,
    /// Mint a node and its paired single-unit asset.
    CreateNode {
        #[arg(long)]
        owner: String,
        #[arg(long)]
        can_authorize_children: bool,
        /// Metadata entries as key=value, repeatable.
        #[arg(long = "meta", value_name = "KEY=VALUE")]
        meta: Vec<String>,
        #[arg(long)]
        key: Option<String>,
    },
    /// Bond a node under a new parent.
    MakeBond {
        #[arg(long)]
        signer: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Release a node from its parent.
    BreakBond {
        #[arg(long)]
        signer: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Hand a node's asset to a delegate, owner unchanged.
    Delegate {
        #[arg(long)]
        signer: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Return a delegated asset to its beneficial owner.
    ClaimBack {
        #[arg(long)]
        signer: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Flip whether a node extends bonding authority over its subtree.
    SetAuthorization {
        #[arg(long)]
        signer: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        value: bool,
        #[arg(long)]
        key: Option<String>,
    },
    /// Move a node's asset between accounts, outside any contract call.
    TransferAsset {
        #[arg(long)]
        node: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Tree under a root, reconstructed from the log.
    QueryTree {
        #[arg(long)]
        root: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Full per-node history: holders, bonds, delegation spans.
    QueryPassport {
        #[arg(long)]
        node: String,
        #[arg(long)]
        key: Option<String>,
    },
    /// Structural violations in the current forest.
    Audit {
        #[arg(long)]
        key: Option<String>,
    },
    /// Invocation counts for an organization's keys.
    UsageReport {
        #[arg(long)]
        org: String,
    },
    /// Mint an API key for an organization
    IssueKey {
        #[arg(long)]
        org: String,
    },
    /// Turn a key off; its counters survive
    DisableKey {
        #[arg(long)]
        key: String,
    },
    /// Print the full log, one JSON entry per line.
    ExportLog,
    /// Deterministic worlds for demos and tests.
    Fixture {
        #[command(subcommand)]
        which: FixtureCommand,
    },
    /// Scripted runs.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Three small trees across four holders, ready for rebonding flows.
    ThreeTrees {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Execute a JSON step script on a fresh ledger and print the summary.
    Run { file: PathBuf },
}

fn main() -> Result<()> {
    run(Cli::parse())
}

fn config_of(cli: &Cli) -> LedgerConfig {
    let defaults = LedgerConfig::default();
    LedgerConfig {
        max_call_depth: cli.max_call_depth.unwrap_or(defaults.max_call_depth),
        root_may_delegate: cli.root_may_delegate || defaults.root_may_delegate,
    }
}

fn mode_of(cli: &Cli) -> ApiMode {
    if cli.permissive {
        ApiMode::Permissive
    } else {
        ApiMode::Strict
    }
}

fn load_api(cli: &Cli) -> Result<Api> {
    let config = config_of(cli);
    let ledger = match &cli.ledger {
        Some(path) if path.exists() => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading ledger {}", path.display()))?;
            let entries = import_entries(&text)?;
            Ledger::from_entries(entries, config)?
        }
        _ => match cli.seed {
            Some(seed) => Ledger::with_seed_and_config(seed, config),
            None => Ledger::with_config(config),
        },
    };
    let api = match &cli.api_state {
        Some(path) if path.exists() => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading api state {}", path.display()))?;
            Api::restore(ledger, mode_of(cli), serde_json::from_str(&text)?)
        }
        _ => Api::new(ledger, mode_of(cli)),
    };
    Ok(api)
}

fn save(cli: &Cli, api: &Api) -> Result<()> {
    if let Some(path) = &cli.ledger {
        fs::write(path, api.ledger().export_log())
            .with_context(|| format!("writing ledger {}", path.display()))?;
    }
    if let Some(path) = &cli.api_state {
        fs::write(path, serde_json::to_string_pretty(&api.persist_state())?)
            .with_context(|| format!("writing api state {}", path.display()))?;
    }
    Ok(())
}

fn emit<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn addr(text: &str) -> Result<Address> {
    Address::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Key to meter this invocation under: the one given, or a fresh one for
/// the `cli` organization.
fn key_for(api: &mut Api, key: &Option<String>) -> String {
    match key {
        Some(id) => id.clone(),
        None => api.issue_key("cli").key_id,
    }
}

/// Build, sign as the required signer, submit.
fn submit(api: &mut Api, key: &Option<String>, op: OperationDescriptor) -> Result<SubmitOutcome> {
    let key_id = key_for(api, key);
    let request = api.build_request(&key_id, op)?;
    let signature =
        DerivedKeyScheme::sign(request.required_signer, &Api::signing_message(&request));
    Ok(api.submit_signed(&request.request_id, &signature)?)
}

fn parse_metadata(pairs: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let Some((k, v)) = pair.split_once('=') else {
            bail!("metadata must be key=value, got `{pair}`");
        };
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fixture { which } => return run_fixture(&cli, which),
        Command::Scenario { action } => return run_scenario_command(&cli, action),
        _ => {}
    }

    let mut api = load_api(&cli)?;
    match &cli.command {
        Command::CreateAccount => {
            let address = api.ledger_mut().create_account();
            save(&cli, &api)?;
            emit(&json!({ "address": address.to_string() }))
        }
        Command::CreateNode {
            owner,
            can_authorize_children,
            meta,
            key,
        } => {
            let op = OperationDescriptor::CreateNode {
                owner: addr(owner)?,
                can_authorize_children: *can_authorize_children,
                metadata: parse_metadata(meta)?,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::MakeBond {
            signer,
            node,
            to,
            key,
        } => {
            let op = OperationDescriptor::MakeBond {
                signer: addr(signer)?,
                node: addr(node)?,
                to: addr(to)?,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::BreakBond { signer, node, key } => {
            let op = OperationDescriptor::BreakBond {
                signer: addr(signer)?,
                node: addr(node)?,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::Delegate {
            signer,
            node,
            to,
            key,
        } => {
            let op = OperationDescriptor::Delegate {
                signer: addr(signer)?,
                node: addr(node)?,
                to: addr(to)?,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::ClaimBack { signer, node, key } => {
            let op = OperationDescriptor::ClaimBack {
                signer: addr(signer)?,
                node: addr(node)?,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::SetAuthorization {
            signer,
            node,
            value,
            key,
        } => {
            let op = OperationDescriptor::SetAuthorization {
                signer: addr(signer)?,
                node: addr(node)?,
                value: *value,
            };
            let outcome = submit(&mut api, key, op)?;
            save(&cli, &api)?;
            emit(&outcome)
        }
        Command::TransferAsset { node, from, to } => {
            let node = addr(node)?;
            let from = addr(from)?;
            let to = addr(to)?;
            let asa_id = api
                .ledger()
                .state()
                .node(node)
                .with_context(|| format!("{node} is not a node"))?
                .asa_id;
            let result =
                api.ledger_mut()
                    .transfer_asset(CallContext::top(from), asa_id, from, to)?;
            save(&cli, &api)?;
            emit(&json!({ "result": result }))
        }
        Command::QueryTree { root, key } => {
            let key_id = key_for(&mut api, key);
            let view = api.query_tree(&key_id, addr(root)?)?;
            save(&cli, &api)?;
            emit(&view)
        }
        Command::QueryPassport { node, key } => {
            let key_id = key_for(&mut api, key);
            let doc = api.query_passport(&key_id, addr(node)?)?;
            save(&cli, &api)?;
            emit(&doc)
        }
        Command::Audit { key } => {
            let key_id = key_for(&mut api, key);
            let found = api.audit(&key_id)?;
            save(&cli, &api)?;
            emit(&found)
        }
        Command::UsageReport { org } => {
            let report = api.usage_report(org)?;
            emit(&report)
        }
        Command::IssueKey { org } => {
            let issued = api.issue_key(org);
            save(&cli, &api)?;
            emit(&issued)
        }
        Command::DisableKey { key } => {
            api.disable_key(key)?;
            save(&cli, &api)?;
            emit(&json!({ "disabled": key }))
        }
        Command::ExportLog => {
            print!("{}", api.ledger().export_log());
            Ok(())
        }
        Command::Fixture { .. } | Command::Scenario { .. } => unreachable!("handled above"),
    }
}

fn run_fixture(cli: &Cli, which: &FixtureCommand) -> Result<()> {
    match which {
        FixtureCommand::ThreeTrees { seed } => {
            let t = fixtures::three_trees(*seed);
            let labels: BTreeMap<&str, String> = [
                ("alice", t.alice.to_string()),
                ("bob", t.bob.to_string()),
                ("carol", t.carol.to_string()),
                ("dave", t.dave.to_string()),
                ("r1", t.r1.to_string()),
                ("a", t.a.to_string()),
                ("b", t.b.to_string()),
                ("r2", t.r2.to_string()),
                ("e", t.e.to_string()),
                ("f", t.f.to_string()),
                ("g", t.g.to_string()),
                ("r3", t.r3.to_string()),
                ("i", t.i.to_string()),
                ("k", t.k.to_string()),
            ]
            .into_iter()
            .collect();
            if let Some(path) = &cli.ledger {
                fs::write(path, t.ledger.export_log())
                    .with_context(|| format!("writing ledger {}", path.display()))?;
            }
            emit(&json!({ "labels": labels }))
        }
    }
}

fn run_scenario_command(cli: &Cli, action: &ScenarioCommand) -> Result<()> {
    match action {
        ScenarioCommand::Run { file } => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading scenario {}", file.display()))?;
            let script: scenario::Scenario = serde_json::from_str(&text)?;
            let run = scenario::run_scenario(&script)?;
            if let Some(path) = &cli.ledger {
                fs::write(path, run.api.ledger().export_log())
                    .with_context(|| format!("writing ledger {}", path.display()))?;
            }
            emit(&run.summary)
        }
    }
}
