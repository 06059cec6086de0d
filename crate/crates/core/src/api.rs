//! Request/sign facade over the ledger. Mutations travel as unsigned
//! requests that come back signed by the required account; reads are served
//! from the log the same way an external indexer would see it. Every
//! key-authenticated invocation is metered, successful or not.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::address::Address;
use crate::error::{Error, Result};
use crate::forest::CallContext;
use crate::ledger::{AsaId, Ledger};
use crate::monitor::{self, Violation};
use crate::ops::OperationDescriptor;
use crate::passport::{self, PassportDocument};
use crate::snapshot::TreeView;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiKey {
    pub key_id: String,
    pub organization: String,
    pub invocation_count: u64,
    pub enabled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UnsignedRequest {
    pub request_id: String,
    pub operation: OperationDescriptor,
    pub required_signer: Address,
    /// Last ledger seq at which submission is still accepted.
    pub expiry_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmitOutcome {
    /// What the contract call returned; node creation always reports true.
    pub result: bool,
    /// Latest log seq after the commit.
    pub seq: u64,
    /// Address and asset of a freshly created node.
    pub node: Option<Address>,
    pub asa_id: Option<AsaId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UsageReport {
    pub organization: String,
    /// Invocation count per key id.
    pub keys: BTreeMap<String, u64>,
    pub total: u64,
}

/// How to check that a signature over a message belongs to a signer.
pub trait SignatureScheme {
    fn verify(&self, signer: Address, message: &[u8], signature: &[u8]) -> bool;
}

/// Deterministic scheme for simulations: each account's secret is derived
/// from its address, and a signature is the hash of secret plus message.
/// Anyone can forge anything if they know the derivation, which is the
/// point: tests get real verify-or-reject behavior with zero key storage.
pub struct DerivedKeyScheme;

impl DerivedKeyScheme {
    pub fn secret(signer: Address) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"sarv-signing-secret/");
        h.update(signer.to_string().as_bytes());
        h.finalize().into()
    }

    pub fn sign(signer: Address, message: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(Self::secret(signer));
        h.update(message);
        h.finalize().to_vec()
    }
}

impl SignatureScheme for DerivedKeyScheme {
    fn verify(&self, signer: Address, message: &[u8], signature: &[u8]) -> bool {
        DerivedKeyScheme::sign(signer, message) == signature
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ApiMode {
    /// Structural operations are simulated before a request is issued;
    /// anything that would damage the forest is refused up front.
    Strict,
    /// Requests go out unchecked, reproducing what raw ledger access allows.
    Permissive,
}

/// Serializable part of the facade, for hosts that persist between runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiState {
    pub keys: BTreeMap<String, ApiKey>,
    pub pending: BTreeMap<String, UnsignedRequest>,
    pub consumed: BTreeSet<String>,
    pub key_counter: u64,
    pub request_counter: u64,
    pub expiry_window: u64,
}

const DEFAULT_EXPIRY_WINDOW: u64 = 1000;

pub struct Api {
    ledger: Ledger,
    mode: ApiMode,
    scheme: Box<dyn SignatureScheme>,
    keys: BTreeMap<String, ApiKey>,
    pending: BTreeMap<String, UnsignedRequest>,
    consumed: BTreeSet<String>,
    key_counter: u64,
    request_counter: u64,
    expiry_window: u64,
}

impl Api {
    pub fn new(ledger: Ledger, mode: ApiMode) -> Self {
        Self::with_scheme(ledger, mode, Box::new(DerivedKeyScheme))
    }

    pub fn with_scheme(ledger: Ledger, mode: ApiMode, scheme: Box<dyn SignatureScheme>) -> Self {
        Api {
            ledger,
            mode,
            scheme,
            keys: BTreeMap::new(),
            pending: BTreeMap::new(),
            consumed: BTreeSet::new(),
            key_counter: 0,
            request_counter: 0,
            expiry_window: DEFAULT_EXPIRY_WINDOW,
        }
    }

    pub fn restore(ledger: Ledger, mode: ApiMode, state: ApiState) -> Self {
        let mut api = Self::new(ledger, mode);
        api.keys = state.keys;
        api.pending = state.pending;
        api.consumed = state.consumed;
        api.key_counter = state.key_counter;
        api.request_counter = state.request_counter;
        api.expiry_window = if state.expiry_window == 0 {
            DEFAULT_EXPIRY_WINDOW
        } else {
            state.expiry_window
        };
        api
    }

    pub fn persist_state(&self) -> ApiState {
        ApiState {
            keys: self.keys.clone(),
            pending: self.pending.clone(),
            consumed: self.consumed.clone(),
            key_counter: self.key_counter,
            request_counter: self.request_counter,
            expiry_window: self.expiry_window,
        }
    }

    pub fn mode(&self) -> ApiMode {
        self.mode
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Direct ledger access for host-level actions that are not endpoints:
    /// account creation and plain asset transfers.
    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn set_expiry_window(&mut self, window: u64) {
        self.expiry_window = window;
    }

    // ----- keys -----

    pub fn issue_key(&mut self, organization: &str) -> ApiKey {
        self.key_counter += 1;
        let key = ApiKey {
            key_id: format!("key-{:04}", self.key_counter),
            organization: organization.to_string(),
            invocation_count: 0,
            enabled: true,
        };
        self.keys.insert(key.key_id.clone(), key.clone());
        key
    }

    pub fn disable_key(&mut self, key_id: &str) -> Result<()> {
        self.keys
            .get_mut(key_id)
            .map(|k| k.enabled = false)
            .ok_or_else(|| Error::UnknownApiKey(key_id.into()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &ApiKey> {
        self.keys.values()
    }

    /// Authentication plus metering: one tick per invocation of a
    /// key-authenticated endpoint, no matter how the call turns out. A
    /// disabled key does not authenticate and therefore does not count.
    fn touch_key(&mut self, key_id: &str) -> Result<()> {
        let key = self
            .keys
            .get_mut(key_id)
            .ok_or_else(|| Error::UnknownApiKey(key_id.into()))?;
        if !key.enabled {
            return Err(Error::DisabledApiKey(key_id.into()));
        }
        key.invocation_count += 1;
        Ok(())
    }

    // ----- request/sign flow -----

    /// Bytes the required signer must sign for a request.
    pub fn signing_message(request: &UnsignedRequest) -> Vec<u8> {
        format!(
            "sarv-request/{}/{}",
            request.request_id, request.required_signer
        )
        .into_bytes()
    }

    pub fn build_request(
        &mut self,
        key_id: &str,
        operation: OperationDescriptor,
    ) -> Result<UnsignedRequest> {
        self.touch_key(key_id)?;
        operation.validate_against(self.ledger.state())?;
        if self.mode == ApiMode::Strict && operation.touches_structure() {
            let found = monitor::preflight(self.ledger.state(), &operation, self.ledger.config())?;
            if !found.is_empty() {
                return Err(Error::PreflightRejected(found));
            }
        }
        self.request_counter += 1;
        let request = UnsignedRequest {
            request_id: format!("req-{:06}", self.request_counter),
            required_signer: operation.required_signer(),
            expiry_seq: self.ledger.last_seq().unwrap_or(0) + self.expiry_window,
            operation,
        };
        self.pending
            .insert(request.request_id.clone(), request.clone());
        Ok(request)
    }

    /// Executes a pending request once its signature checks out. A consumed
    /// request never executes again; a bad signature leaves it pending.
    pub fn submit_signed(&mut self, request_id: &str, signature: &[u8]) -> Result<SubmitOutcome> {
        if self.consumed.contains(request_id) {
            return Err(Error::UnknownRequest(request_id.into()));
        }
        let request = self
            .pending
            .get(request_id)
            .ok_or_else(|| Error::UnknownRequest(request_id.into()))?
            .clone();
        let current_seq = self.ledger.last_seq().unwrap_or(0);
        if current_seq > request.expiry_seq {
            self.pending.remove(request_id);
            return Err(Error::RequestExpired {
                request_id: request_id.into(),
                expiry_seq: request.expiry_seq,
                current_seq,
            });
        }
        let message = Self::signing_message(&request);
        if !self
            .scheme
            .verify(request.required_signer, &message, signature)
        {
            return Err(Error::BadSignature(request.required_signer));
        }
        self.pending.remove(request_id);
        self.consumed.insert(request_id.to_string());
        self.execute(request)
    }

    fn execute(&mut self, request: UnsignedRequest) -> Result<SubmitOutcome> {
        match request.operation {
            OperationDescriptor::CreateNode {
                owner,
                can_authorize_children,
                metadata,
            } => {
                let (node, asa_id) =
                    self.ledger
                        .create_node(owner, can_authorize_children, metadata)?;
                Ok(SubmitOutcome {
                    result: true,
                    seq: self.ledger.last_seq().expect("commit appended"),
                    node: Some(node),
                    asa_id: Some(asa_id),
                })
            }
            ref op => {
                let call = op.to_forest_call().expect("non-create ops are calls");
                let ctx = CallContext::top(request.required_signer);
                let result = self
                    .ledger
                    .call(ctx, call, Some(request.request_id.clone()))?;
                Ok(SubmitOutcome {
                    result,
                    seq: self.ledger.last_seq().expect("commit appended"),
                    node: None,
                    asa_id: None,
                })
            }
        }
    }

    // ----- reads -----

    /// Tree under `root` as of the latest entry, reconstructed from the log
    /// rather than read off live state.
    pub fn query_tree(&mut self, key_id: &str, root: Address) -> Result<TreeView> {
        self.touch_key(key_id)?;
        let Some(last) = self.ledger.last_seq() else {
            return Err(Error::UnknownNode(root));
        };
        passport::tree_at(self.ledger.log(), last, root)
    }

    pub fn query_passport(&mut self, key_id: &str, node: Address) -> Result<PassportDocument> {
        self.touch_key(key_id)?;
        passport::passport_of(self.ledger.log(), node)
    }

    pub fn audit(&mut self, key_id: &str) -> Result<Vec<Violation>> {
        self.touch_key(key_id)?;
        Ok(monitor::audit_forest(self.ledger.state()))
    }

    /// Admin read, keyless and unmetered.
    pub fn usage_report(&self, organization: &str) -> Result<UsageReport> {
        let keys: BTreeMap<String, u64> = self
            .keys
            .values()
            .filter(|k| k.organization == organization)
            .map(|k| (k.key_id.clone(), k.invocation_count))
            .collect();
        if keys.is_empty() {
            return Err(Error::UnknownOrganization(organization.into()));
        }
        let total = keys.values().sum();
        Ok(UsageReport {
            organization: organization.into(),
            keys,
            total,
        })
    }
}
