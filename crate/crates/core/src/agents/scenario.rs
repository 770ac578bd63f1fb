use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::buyer::PurchaseIntent;
use super::orchestrator::RunReport;
use super::seller::OrderState;
use crate::authz::Keypair;
use crate::compliance::{ComplianceError, PolicyConfig, PolicyWrapper, SanctionsList};
use crate::gateway::{GatewayConfig, PaymentService};
use crate::ledger::{Ledger, LockState};
use crate::types::{AccountId, Balance, Timestamp};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{file}: cannot read: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: at `{field}`: {message}")]
    Parse { file: String, line: usize, column: usize, field: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Compliance(#[from] ComplianceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioAccount {
    pub id: AccountId,
    pub balance: Balance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerConfig {
    pub id: AccountId,
    pub catalog: BTreeMap<String, Balance>,
}

/// Optional end-state assertions checked after a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub lock_state: Option<LockState>,
    #[serde(default)]
    pub order_state: Option<OrderState>,
    #[serde(default)]
    pub max_rounds: Option<u32>,
}

impl Expectations {
    /// Human-readable mismatches; empty when every expectation holds.
    pub fn check(&self, report: &RunReport) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(want) = self.lock_state {
            let locks = &report.final_state.service.ledger.locks;
            if locks.is_empty() {
                problems.push(format!("expected an escrow lock in state {want}, found none"));
            }
            for lock in locks.values().filter(|l| l.state != want) {
                problems.push(format!("lock {} is {}, expected {want}", lock.lock_id, lock.state));
            }
        }
        if let Some(want) = self.order_state {
            let orders = &report.final_state.orders;
            if orders.is_empty() {
                problems.push(format!("expected an order in state {want:?}, found none"));
            }
            for (tx, o) in orders.iter().filter(|(_, o)| o.state != want) {
                problems.push(format!("order {tx} is {:?}, expected {want:?}", o.state));
            }
        }
        if let Some(max) = self.max_rounds {
            if report.rounds > max {
                problems.push(format!("took {} rounds, expected at most {max}", report.rounds));
            }
        }
        problems
    }
}

/// A complete simulation setup: parties, catalog, intent, policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start_time")]
    pub start_time: Timestamp,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    pub accounts: Vec<ScenarioAccount>,
    pub seller: SellerConfig,
    #[serde(default = "default_compliance_agent")]
    pub compliance_agent: AccountId,
    pub intent: PurchaseIntent,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sanctions: Option<SanctionsList>,
    /// Path to a `{"version", "entries"}` file, relative to the scenario.
    #[serde(default)]
    pub sanctions_file: Option<PathBuf>,
    #[serde(default)]
    pub expect: Option<Expectations>,
}

fn default_start_time() -> Timestamp {
    1_700_000_000
}

fn default_max_rounds() -> u32 {
    32
}

fn default_compliance_agent() -> AccountId {
    AccountId::from("compliance")
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            file: file.to_owned(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = parse_json(text, "<scenario>")?;
        if s.sanctions_file.is_some() {
            return Err(ScenarioError::Invalid("sanctions_file needs a scenario path; use Scenario::load".into()));
        }
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario file, resolving `sanctions_file` next to it.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { file: file.clone(), source })?;
        let mut s: Scenario = parse_json(&text, &file)?;
        if let Some(rel) = s.sanctions_file.take() {
            if s.sanctions.is_some() {
                return Err(ScenarioError::Invalid("give either sanctions or sanctions_file, not both".into()));
            }
            let full = path.parent().map_or_else(|| rel.clone(), |d| d.join(&rel));
            let sf = full.display().to_string();
            let text = std::fs::read_to_string(&full).map_err(|source| ScenarioError::Io { file: sf.clone(), source })?;
            s.sanctions = Some(parse_json(&text, &sf)?);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids = BTreeSet::new();
        for a in &self.accounts {
            if a.id.as_str().is_empty() {
                return Err(ScenarioError::Invalid("account id must be non-empty".into()));
            }
            if !ids.insert(&a.id) {
                return Err(ScenarioError::Invalid(format!("duplicate account {}", a.id)));
            }
        }
        for (role, id) in [
            ("intent.buyer", &self.intent.buyer),
            ("seller.id", &self.seller.id),
            ("compliance_agent", &self.compliance_agent),
        ] {
            if !ids.contains(id) {
                return Err(ScenarioError::Invalid(format!("{role} {id} is not among accounts")));
            }
        }
        if self.intent.max_price.is_zero() {
            return Err(ScenarioError::Invalid("intent.max_price must be positive".into()));
        }
        if self.seller.catalog.values().any(|p| p.is_zero()) {
            return Err(ScenarioError::Invalid("catalog prices must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(ScenarioError::Invalid("max_rounds must be positive".into()));
        }
        self.policy.validate()?;
        Ok(())
    }

    pub fn keypair(&self, seed: u64, id: &AccountId) -> Keypair {
        Keypair::demo(seed, id)
    }

    /// Seeded ledger, policy wrapper and gateway with the seller's catalog.
    pub fn build_service(&self, seed: u64) -> Result<PaymentService, ScenarioError> {
        self.validate()?;
        let mut ledger = Ledger::new();
        for a in &self.accounts {
            ledger
                .create_account(a.id.clone(), self.keypair(seed, &a.id).public_key(), a.balance)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let sanctions = self.sanctions.clone().unwrap_or_default();
        let wrapper = PolicyWrapper::new(ledger, self.policy.clone(), sanctions)?;
        let config = GatewayConfig { compliance_agent: self.compliance_agent.clone(), ..GatewayConfig::default() };
        let mut service = PaymentService::new(wrapper, config);
        for (item, price) in &self.seller.catalog {
            service.list_item(item.clone(), self.seller.id.clone(), *price);
        }
        Ok(service)
    }
}
