//! Scripted sessions. A scenario is a JSON document of labeled steps; the
//! runner binds labels to the addresses and keys it creates along the way,
//! routes every mutation through the request/sign facade, and returns a
//! summary of what happened. Scripts are how the command line exercises
//! whole flows in one shot.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::address::Address;
use crate::api::{Api, ApiMode, DerivedKeyScheme, UsageReport};
use crate::error::{Error, Result};
use crate::forest::CallContext;
use crate::ledger::{Ledger, LedgerConfig};
use crate::monitor::{audit_forest, Violation};
use crate::ops::OperationDescriptor;
use crate::snapshot::ForestState;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub max_call_depth: Option<u32>,
    pub root_may_delegate: Option<bool>,
    /// Address randomness; fixed default so reruns bind identical addresses.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    /// Strict unless explicitly set to false.
    pub strict: Option<bool>,
    pub config: Option<ScenarioConfig>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum Step {
    #[serde(rename_all = "camelCase")]
    CreateAccount { label: String },
    #[serde(rename_all = "camelCase")]
    CreateNode {
        label: String,
        owner: String,
        #[serde(default)]
        can_authorize_children: bool,
        #[serde(default)]
        metadata: BTreeMap<String, String>,
        key: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    TransferAsset {
        node: String,
        from: String,
        to: String,
        expect: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    MakeBond {
        signer: String,
        node: String,
        to: String,
        key: Option<String>,
        expect: Option<bool>,
        expect_error: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    BreakBond {
        signer: String,
        node: String,
        key: Option<String>,
        expect: Option<bool>,
        expect_error: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    Delegate {
        signer: String,
        node: String,
        to: String,
        key: Option<String>,
        expect: Option<bool>,
        expect_error: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    ClaimBack {
        signer: String,
        node: String,
        key: Option<String>,
        expect: Option<bool>,
        expect_error: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    SetAuthorization {
        signer: String,
        node: String,
        value: bool,
        key: Option<String>,
        expect: Option<bool>,
        expect_error: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    IssueKey { label: String, org: String },
    #[serde(rename_all = "camelCase")]
    DisableKey { key: String },
    #[serde(rename_all = "camelCase")]
    Audit {
        key: Option<String>,
        expect_empty: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    QueryTree { root: String, key: Option<String> },
    #[serde(rename_all = "camelCase")]
    QueryPassport { node: String, key: Option<String> },
    #[serde(rename_all = "camelCase")]
    UsageReport { org: String },
}

impl Step {
    fn action(&self) -> &'static str {
        match self {
            Step::CreateAccount { .. } => "createAccount",
            Step::CreateNode { .. } => "createNode",
            Step::TransferAsset { .. } => "transferAsset",
            Step::MakeBond { .. } => "makeBond",
            Step::BreakBond { .. } => "breakBond",
            Step::Delegate { .. } => "delegate",
            Step::ClaimBack { .. } => "claimBack",
            Step::SetAuthorization { .. } => "setAuthorization",
            Step::IssueKey { .. } => "issueKey",
            Step::DisableKey { .. } => "disableKey",
            Step::Audit { .. } => "audit",
            Step::QueryTree { .. } => "queryTree",
            Step::QueryPassport { .. } => "queryPassport",
            Step::UsageReport { .. } => "usageReport",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepReport {
    pub index: usize,
    pub action: String,
    pub outcome: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioSummary {
    pub steps: Vec<StepReport>,
    /// Label to address, accounts and nodes alike.
    pub labels: BTreeMap<String, String>,
    /// Key label to issued key id.
    pub keys: BTreeMap<String, String>,
    /// Tree root per node label; absent while a parent chain is cyclic.
    pub tree_roots: BTreeMap<String, Option<String>>,
    pub audit: Vec<Violation>,
    pub usage: BTreeMap<String, UsageReport>,
    pub state: ForestState,
}

pub struct ScenarioRun {
    pub summary: ScenarioSummary,
    pub api: Api,
}

struct Runner {
    api: Api,
    labels: BTreeMap<String, Address>,
    keys: BTreeMap<String, String>,
    default_key: Option<String>,
}

const DEFAULT_SCENARIO_SEED: u64 = 7;

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    let cfg = scenario.config.clone().unwrap_or_default();
    let config = LedgerConfig {
        max_call_depth: cfg
            .max_call_depth
            .unwrap_or(LedgerConfig::default().max_call_depth),
        root_may_delegate: cfg
            .root_may_delegate
            .unwrap_or(LedgerConfig::default().root_may_delegate),
    };
    let seed = cfg.seed.unwrap_or(DEFAULT_SCENARIO_SEED);
    let mode = if scenario.strict == Some(false) {
        ApiMode::Permissive
    } else {
        ApiMode::Strict
    };
    let ledger = Ledger::with_seed_and_config(seed, config);
    let mut runner = Runner {
        api: Api::new(ledger, mode),
        labels: BTreeMap::new(),
        keys: BTreeMap::new(),
        default_key: None,
    };

    let mut reports = Vec::new();
    for (index, step) in scenario.steps.iter().enumerate() {
        let outcome = runner.step(index, step)?;
        reports.push(StepReport {
            index,
            action: step.action().to_string(),
            outcome,
        });
    }

    let state = runner.api.ledger().snapshot();
    let mut tree_roots = BTreeMap::new();
    for (label, addr) in &runner.labels {
        if addr.is_node() {
            tree_roots.insert(
                label.clone(),
                state.tree_root(*addr).ok().map(|r| r.to_string()),
            );
        }
    }
    let mut usage = BTreeMap::new();
    let orgs: std::collections::BTreeSet<String> =
        runner.api.keys().map(|k| k.organization.clone()).collect();
    for org in orgs {
        usage.insert(org.clone(), runner.api.usage_report(&org)?);
    }

    let summary = ScenarioSummary {
        steps: reports,
        labels: runner
            .labels
            .iter()
            .map(|(l, a)| (l.clone(), a.to_string()))
            .collect(),
        keys: runner.keys.clone(),
        tree_roots,
        audit: audit_forest(&state),
        usage,
        state,
    };
    Ok(ScenarioRun {
        summary,
        api: runner.api,
    })
}

impl Runner {
    fn fail(index: usize, reason: impl Into<String>) -> Error {
        Error::Scenario {
            step: index,
            reason: reason.into(),
        }
    }

    fn resolve(&self, index: usize, name: &str) -> Result<Address> {
        if let Some(addr) = self.labels.get(name) {
            return Ok(*addr);
        }
        Address::from_str(name)
            .map_err(|_| Self::fail(index, format!("unknown label or address `{name}`")))
    }

    fn bind(&mut self, index: usize, label: &str, addr: Address) -> Result<()> {
        if self.labels.insert(label.to_string(), addr).is_some() {
            return Err(Self::fail(index, format!("label `{label}` already bound")));
        }
        Ok(())
    }

    fn key_id(&mut self, index: usize, key: &Option<String>) -> Result<String> {
        if let Some(label) = key {
            return self
                .keys
                .get(label)
                .cloned()
                .ok_or_else(|| Self::fail(index, format!("unknown key label `{label}`")));
        }
        if self.default_key.is_none() {
            self.default_key = Some(self.api.issue_key("scenario").key_id);
        }
        Ok(self.default_key.clone().unwrap())
    }

    /// Build, sign, submit; an expected error is reported instead of raised.
    fn submit(
        &mut self,
        index: usize,
        key: &Option<String>,
        op: OperationDescriptor,
        expect: Option<bool>,
        expect_error: Option<bool>,
    ) -> Result<serde_json::Value> {
        let key_id = self.key_id(index, key)?;
        let built = self.api.build_request(&key_id, op);
        let request = match built {
            Err(e) if expect_error == Some(true) => {
                return Ok(json!({ "error": e.to_string() }));
            }
            Err(e) => return Err(Self::fail(index, e.to_string())),
            Ok(req) => req,
        };
        let sig = DerivedKeyScheme::sign(request.required_signer, &Api::signing_message(&request));
        let outcome = self
            .api
            .submit_signed(&request.request_id, &sig)
            .map_err(|e| Self::fail(index, e.to_string()))?;
        if expect_error == Some(true) {
            return Err(Self::fail(
                index,
                format!("expected an error, got result {}", outcome.result),
            ));
        }
        if let Some(want) = expect {
            if outcome.result != want {
                return Err(Self::fail(
                    index,
                    format!("expected result {want}, got {}", outcome.result),
                ));
            }
        }
        Ok(serde_json::to_value(&outcome).expect("outcome serializes"))
    }

    fn step(&mut self, index: usize, step: &Step) -> Result<serde_json::Value> {
        match step {
            Step::CreateAccount { label } => {
                let addr = self.api.ledger_mut().create_account();
                self.bind(index, label, addr)?;
                Ok(json!({ "address": addr.to_string() }))
            }
            Step::CreateNode {
                label,
                owner,
                can_authorize_children,
                metadata,
                key,
            } => {
                let owner = self.resolve(index, owner)?;
                let op = OperationDescriptor::CreateNode {
                    owner,
                    can_authorize_children: *can_authorize_children,
                    metadata: metadata.clone(),
                };
                let outcome = self.submit(index, key, op, Some(true), None)?;
                let node = outcome
                    .get("node")
                    .and_then(|n| n.as_str())
                    .ok_or_else(|| Self::fail(index, "node creation reported no address"))?;
                let addr = Address::from_str(node)
                    .map_err(|e| Self::fail(index, format!("bad node address: {e}")))?;
                self.bind(index, label, addr)?;
                Ok(outcome)
            }
            Step::TransferAsset {
                node,
                from,
                to,
                expect,
            } => {
                let node = self.resolve(index, node)?;
                let from = self.resolve(index, from)?;
                let to = self.resolve(index, to)?;
                let asa = self
                    .api
                    .ledger()
                    .state()
                    .node(node)
                    .ok_or_else(|| Self::fail(index, format!("{node} is not a node")))?
                    .asa_id;
                let result = self
                    .api
                    .ledger_mut()
                    .transfer_asset(CallContext::top(from), asa, from, to)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                if let Some(want) = expect {
                    if result != *want {
                        return Err(Self::fail(
                            index,
                            format!("expected result {want}, got {result}"),
                        ));
                    }
                }
                Ok(json!({ "result": result }))
            }
            Step::MakeBond {
                signer,
                node,
                to,
                key,
                expect,
                expect_error,
            } => {
                let op = OperationDescriptor::MakeBond {
                    signer: self.resolve(index, signer)?,
                    node: self.resolve(index, node)?,
                    to: self.resolve(index, to)?,
                };
                self.submit(index, key, op, *expect, *expect_error)
            }
            Step::BreakBond {
                signer,
                node,
                key,
                expect,
                expect_error,
            } => {
                let op = OperationDescriptor::BreakBond {
                    signer: self.resolve(index, signer)?,
                    node: self.resolve(index, node)?,
                };
                self.submit(index, key, op, *expect, *expect_error)
            }
            Step::Delegate {
                signer,
                node,
                to,
                key,
                expect,
                expect_error,
            } => {
                let op = OperationDescriptor::Delegate {
                    signer: self.resolve(index, signer)?,
                    node: self.resolve(index, node)?,
                    to: self.resolve(index, to)?,
                };
                self.submit(index, key, op, *expect, *expect_error)
            }
            Step::ClaimBack {
                signer,
                node,
                key,
                expect,
                expect_error,
            } => {
                let op = OperationDescriptor::ClaimBack {
                    signer: self.resolve(index, signer)?,
                    node: self.resolve(index, node)?,
                };
                self.submit(index, key, op, *expect, *expect_error)
            }
            Step::SetAuthorization {
                signer,
                node,
                value,
                key,
                expect,
                expect_error,
            } => {
                let op = OperationDescriptor::SetAuthorization {
                    signer: self.resolve(index, signer)?,
                    node: self.resolve(index, node)?,
                    value: *value,
                };
                self.submit(index, key, op, *expect, *expect_error)
            }
            Step::IssueKey { label, org } => {
                let issued = self.api.issue_key(org);
                if self
                    .keys
                    .insert(label.clone(), issued.key_id.clone())
                    .is_some()
                {
                    return Err(Self::fail(index, format!("key label `{label}` reused")));
                }
                Ok(json!({ "keyId": issued.key_id }))
            }
            Step::DisableKey { key } => {
                let key_id = self.key_id(index, &Some(key.clone()))?;
                self.api
                    .disable_key(&key_id)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                Ok(json!({ "disabled": key_id }))
            }
            Step::Audit { key, expect_empty } => {
                let key_id = self.key_id(index, key)?;
                let found = self
                    .api
                    .audit(&key_id)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                if let Some(want) = expect_empty {
                    if found.is_empty() != *want {
                        return Err(Self::fail(
                            index,
                            format!(
                                "expected audit empty={want}, found {} violations",
                                found.len()
                            ),
                        ));
                    }
                }
                Ok(serde_json::to_value(&found).expect("violations serialize"))
            }
            Step::QueryTree { root, key } => {
                let root = self.resolve(index, root)?;
                let key_id = self.key_id(index, key)?;
                let view = self
                    .api
                    .query_tree(&key_id, root)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                Ok(serde_json::to_value(&view).expect("view serializes"))
            }
            Step::QueryPassport { node, key } => {
                let node = self.resolve(index, node)?;
                let key_id = self.key_id(index, key)?;
                let doc = self
                    .api
                    .query_passport(&key_id, node)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                Ok(serde_json::to_value(&doc).expect("document serializes"))
            }
            Step::UsageReport { org } => {
                let report = self
                    .api
                    .usage_report(org)
                    .map_err(|e| Self::fail(index, e.to_string()))?;
                Ok(serde_json::to_value(&report).expect("report serializes"))
            }
        }
    }
}
