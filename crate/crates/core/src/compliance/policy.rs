//! Modular compliance checks and the manager that runs them in configured
//! order.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::evidence::EvidenceRegistry;
use super::verdict::{AggregateVerdict, PolicyVerdict};
use super::ComplianceError;
use crate::canonical::{sha256, Digest32};
use crate::types::{AccountId, Balance, TxId};

pub const SANCTIONS: &str = "sanctions";
pub const SOURCE_OF_FUNDS: &str = "source-of-funds";
pub const SOF_EVIDENCE_KIND: &str = "source-of-funds";

/// A payment instruction as seen by the policy layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub tx_id: TxId,
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: Balance,
}

impl Instruction {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = b"COMPLIPAY-INSTR-V1".to_vec();
        for s in [self.tx_id.as_str(), self.payer.as_str(), self.payee.as_str()] {
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&self.amount.0.to_be_bytes());
        out
    }

    pub fn digest(&self) -> Digest32 {
        sha256(&self.canonical_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanctionsList {
    pub version: String,
    pub entries: BTreeSet<AccountId>,
}

impl Default for SanctionsList {
    fn default() -> Self {
        Self { version: "empty".into(), entries: BTreeSet::new() }
    }
}

impl SanctionsList {
    pub fn new(version: impl Into<String>, entries: impl IntoIterator<Item = AccountId>) -> Self {
        Self { version: version.into(), entries: entries.into_iter().collect() }
    }

    pub fn contains(&self, id: &AccountId) -> bool {
        self.entries.contains(id)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub sof_threshold: Balance,
    #[serde(default)]
    pub sanctions_list_version: Option<String>,
    #[serde(default = "default_policies")]
    pub enabled_policies: Vec<String>,
}

fn default_policies() -> Vec<String> {
    vec![SANCTIONS.to_owned(), SOURCE_OF_FUNDS.to_owned()]
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            sof_threshold: Balance(10_000),
            sanctions_list_version: None,
            enabled_policies: default_policies(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ComplianceError> {
        if self.sof_threshold.is_zero() {
            return Err(ComplianceError::InvalidConfig("sof_threshold must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.enabled_policies {
            if !seen.insert(p) {
                return Err(ComplianceError::InvalidConfig(format!("policy {p} enabled twice")));
            }
        }
        Ok(())
    }
}

/// Read-only state a check may consult.
#[derive(Clone, Copy)]
pub struct PolicyContext<'a> {
    pub sanctions: &'a SanctionsList,
    pub evidence: &'a EvidenceRegistry,
    pub config: &'a PolicyConfig,
}

pub trait Policy: Send + Sync {
    fn id(&self) -> &str;
    fn check(&self, instruction: &Instruction, ctx: &PolicyContext<'_>) -> PolicyVerdict;
}

pub fn sanctions_check(payer: &AccountId, payee: &AccountId, list: &SanctionsList) -> PolicyVerdict {
    let mut hits: Vec<&AccountId> = Vec::new();
    for party in [payer, payee] {
        if list.contains(party) && !hits.contains(&party) {
            hits.push(party);
        }
    }
    if hits.is_empty() {
        PolicyVerdict::pass(SANCTIONS, format!("no party on sanctions list {}", list.version))
    } else {
        let names: Vec<&str> = hits.iter().map(|h| h.as_str()).collect();
        PolicyVerdict::fail(
            SANCTIONS,
            format!("listed on sanctions list {}: {}", list.version, names.join(", ")),
        )
    }
}

pub fn source_of_funds_check(
    payer: &AccountId,
    amount: Balance,
    config: &PolicyConfig,
    evidence: &EvidenceRegistry,
) -> PolicyVerdict {
    if amount <= config.sof_threshold {
        return PolicyVerdict::pass(
            SOURCE_OF_FUNDS,
            format!("amount {amount} within threshold {}", config.sof_threshold),
        );
    }
    match evidence.covering(payer, amount) {
        Some(ev) => PolicyVerdict::pass(
            SOURCE_OF_FUNDS,
            format!("evidence {} covers {} for {payer}", ev.evidence_id, ev.covering_amount),
        ),
        None => PolicyVerdict::pending(
            SOURCE_OF_FUNDS,
            format!(
                "amount {amount} exceeds threshold {}; source-of-funds evidence required from {payer}",
                config.sof_threshold
            ),
            SOF_EVIDENCE_KIND,
        ),
    }
}

pub struct SanctionsPolicy;

impl Policy for SanctionsPolicy {
    fn id(&self) -> &str {
        SANCTIONS
    }

    fn check(&self, i: &Instruction, ctx: &PolicyContext<'_>) -> PolicyVerdict {
        sanctions_check(&i.payer, &i.payee, ctx.sanctions)
    }
}

pub struct SourceOfFundsPolicy;

impl Policy for SourceOfFundsPolicy {
    fn id(&self) -> &str {
        SOURCE_OF_FUNDS
    }

    fn check(&self, i: &Instruction, ctx: &PolicyContext<'_>) -> PolicyVerdict {
        source_of_funds_check(&i.payer, i.amount, ctx.config, ctx.evidence)
    }
}

/// Ordered registry of enabled checks.
#[derive(Default)]
pub struct PolicyManager {
    policies: Vec<Box<dyn Policy>>,
}

impl fmt::Debug for PolicyManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.policies.iter().map(|p| p.id())).finish()
    }
}

impl PolicyManager {
    /// Builds the built-in checks named in `config.enabled_policies`.
    pub fn from_config(config: &PolicyConfig) -> Result<Self, ComplianceError> {
        config.validate()?;
        let mut manager = Self::default();
        for id in &config.enabled_policies {
            let policy: Box<dyn Policy> = match id.as_str() {
                SANCTIONS => Box::new(SanctionsPolicy),
                SOURCE_OF_FUNDS => Box::new(SourceOfFundsPolicy),
                other => return Err(ComplianceError::UnknownPolicy(other.to_owned())),
            };
            manager.policies.push(policy);
        }
        Ok(manager)
    }

    pub fn register(&mut self, policy: Box<dyn Policy>) -> Result<(), ComplianceError> {
        if self.policies.iter().any(|p| p.id() == policy.id()) {
            return Err(ComplianceError::InvalidConfig(format!("policy {} already registered", policy.id())));
        }
        self.policies.push(policy);
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.policies.iter().map(|p| p.id()).collect()
    }

    pub fn evaluate(&self, instruction: &Instruction, ctx: &PolicyContext<'_>) -> AggregateVerdict {
        let parts = self.policies.iter().map(|p| p.check(instruction, ctx)).collect();
        AggregateVerdict::from_parts(parts)
    }
}
