//! Simulated single-asset token ledger.
//!
//! Holds accounts, the consumed-nonce registry, the escrow sub-ledger and the
//! receipt log. Every successful mutation takes the next value of a single
//! gap-free sequence counter; failed operations leave the ledger untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::{self, Ed25519, PaymentAuthorization, Signature, SignatureScheme};
use crate::types::{AccountId, Balance, LockId, Nonce, Timestamp, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("account {0} already exists")]
    DuplicateAccount(AccountId),
    #[error("account id must be non-empty")]
    EmptyAccountId,
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("invalid authorization: {0}")]
    InvalidAuthorization(String),
    #[error("signature does not verify against the payer key")]
    BadSignature,
    #[error("authorization expired (valid_before {valid_before}, now {now})")]
    AuthorizationExpired { valid_before: Timestamp, now: Timestamp },
    #[error("authorization not yet valid (valid_after {valid_after}, now {now})")]
    AuthorizationNotYetValid { valid_after: Timestamp, now: Timestamp },
    #[error("nonce {nonce} already used by {payer}")]
    NonceAlreadyUsed { payer: AccountId, nonce: Nonce },
    #[error("insufficient funds: {account} holds {available}, needs {required}")]
    InsufficientFunds { account: AccountId, available: Balance, required: Balance },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("unknown escrow lock {0}")]
    UnknownLock(LockId),
    #[error("{caller} may not release or refund lock {lock_id}")]
    NotAuthorizedReleaser { lock_id: LockId, caller: AccountId },
    #[error("lock {lock_id} is {state}, not LOCKED")]
    LockNotActive { lock_id: LockId, state: LockState },
    #[error("arithmetic overflow")]
    Overflow,
}

impl LedgerError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::DuplicateAccount(_) => "DuplicateAccount",
            LedgerError::EmptyAccountId => "EmptyAccountId",
            LedgerError::UnknownAccount(_) => "UnknownAccount",
            LedgerError::InvalidAuthorization(_) => "InvalidAuthorization",
            LedgerError::BadSignature => "BadSignature",
            LedgerError::AuthorizationExpired { .. } => "AuthorizationExpired",
            LedgerError::AuthorizationNotYetValid { .. } => "AuthorizationNotYetValid",
            LedgerError::NonceAlreadyUsed { .. } => "NonceAlreadyUsed",
            LedgerError::InsufficientFunds { .. } => "InsufficientFunds",
            LedgerError::ZeroAmount => "ZeroAmount",
            LedgerError::UnknownLock(_) => "UnknownLock",
            LedgerError::NotAuthorizedReleaser { .. } => "NotAuthorizedReleaser",
            LedgerError::LockNotActive { .. } => "LockNotActive",
            LedgerError::Overflow => "Overflow",
        }
    }
}

pub type Result<T> = std::result::Result<T, LedgerError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    #[serde(with = "crate::canonical::hex_bytes")]
    pub pubkey: Vec<u8>,
    pub balance: Balance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LockState {
    Locked,
    Released,
    Refunded,
}

impl fmt::Display for LockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LockState::Locked => "LOCKED",
            LockState::Released => "RELEASED",
            LockState::Refunded => "REFUNDED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowLock {
    pub lock_id: LockId,
    pub tx_id: TxId,
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: Balance,
    pub condition_id: String,
    pub releaser: AccountId,
    pub state: LockState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReceiptKind {
    Direct,
    EscrowLock,
    EscrowRelease,
    EscrowRefund,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementReceipt {
    pub tx_id: TxId,
    pub kind: ReceiptKind,
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: Balance,
    pub ledger_seq: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lock_id: Option<LockId>,
}

/// Canonical, serializable view of the whole ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub accounts: BTreeMap<AccountId, Account>,
    pub total_supply: Balance,
    pub escrow_pool: Balance,
    pub seq: u64,
    pub consumed_nonces: Vec<(AccountId, Nonce)>,
    pub locks: BTreeMap<LockId, EscrowLock>,
    pub receipts: Vec<SettlementReceipt>,
}

impl LedgerSnapshot {
    pub fn sum_of_balances(&self) -> Option<Balance> {
        self.accounts
            .values()
            .try_fold(Balance::ZERO, |acc, a| acc.checked_add(a.balance))
    }

    /// `total_supply == Σ balances + escrow_pool`.
    pub fn is_conserved(&self) -> bool {
        self.sum_of_balances()
            .and_then(|s| s.checked_add(self.escrow_pool))
            .is_some_and(|s| s == self.total_supply)
    }
}

#[derive(Clone)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, Account>,
    consumed: BTreeSet<(AccountId, Nonce)>,
    locks: BTreeMap<LockId, EscrowLock>,
    receipts: Vec<SettlementReceipt>,
    total_supply: Balance,
    escrow_pool: Balance,
    seq: u64,
    scheme: Arc<dyn SignatureScheme>,
}

impl fmt::Debug for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ledger")
            .field("accounts", &self.accounts.len())
            .field("total_supply", &self.total_supply)
            .field("escrow_pool", &self.escrow_pool)
            .field("seq", &self.seq)
            .field("scheme", &self.scheme.name())
            .finish()
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::with_scheme(Arc::new(Ed25519))
    }

    pub fn with_scheme(scheme: Arc<dyn SignatureScheme>) -> Self {
        Self {
            accounts: BTreeMap::new(),
            consumed: BTreeSet::new(),
            locks: BTreeMap::new(),
            receipts: Vec::new(),
            total_supply: Balance::ZERO,
            escrow_pool: Balance::ZERO,
            seq: 0,
            scheme,
        }
    }

    /// The only way supply enters the ledger.
    pub fn create_account(&mut self, id: AccountId, pubkey: Vec<u8>, initial_balance: Balance) -> Result<AccountId> {
        if id.as_str().is_empty() {
            return Err(LedgerError::EmptyAccountId);
        }
        if self.accounts.contains_key(&id) {
            return Err(LedgerError::DuplicateAccount(id));
        }
        let supply = self.total_supply.checked_add(initial_balance).ok_or(LedgerError::Overflow)?;
        self.total_supply = supply;
        self.accounts.insert(
            id.clone(),
            Account { id: id.clone(), pubkey, balance: initial_balance },
        );
        self.next_seq();
        Ok(id)
    }

    pub fn account(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn balance_of(&self, id: &AccountId) -> Result<Balance> {
        self.accounts
            .get(id)
            .map(|a| a.balance)
            .ok_or_else(|| LedgerError::UnknownAccount(id.clone()))
    }

    pub fn total_supply(&self) -> Balance {
        self.total_supply
    }

    pub fn escrow_pool(&self) -> Balance {
        self.escrow_pool
    }

    /// Sequence number of the most recent successful mutation (0 before any).
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn is_nonce_used(&self, payer: &AccountId, nonce: &Nonce) -> bool {
        self.consumed.contains(&(payer.clone(), *nonce))
    }

    pub fn lock(&self, id: &LockId) -> Option<&EscrowLock> {
        self.locks.get(id)
    }

    pub fn locks(&self) -> impl Iterator<Item = &EscrowLock> {
        self.locks.values()
    }

    pub fn receipts(&self) -> &[SettlementReceipt] {
        &self.receipts
    }

    /// Claims the next sequence number for a state change that moves no
    /// funds (e.g. recording a non-settling attestation).
    pub(crate) fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// All checks `transfer_with_authorization` performs, without mutating.
    /// Order: shape, parties, signature, window, nonce, funds.
    pub fn check_authorization(&self, auth: &PaymentAuthorization, sig: &Signature, now: Timestamp) -> Result<()> {
        if auth.amount.is_zero() {
            return Err(LedgerError::ZeroAmount);
        }
        auth.validate()
            .map_err(|authz::AuthzError::InvalidAuthorization(m)| LedgerError::InvalidAuthorization(m))?;
        let payer = self
            .accounts
            .get(&auth.payer)
            .ok_or_else(|| LedgerError::UnknownAccount(auth.payer.clone()))?;
        if !self.accounts.contains_key(&auth.payee) {
            return Err(LedgerError::UnknownAccount(auth.payee.clone()));
        }
        if !authz::verify_authorization_with(self.scheme.as_ref(), auth, sig, &payer.pubkey) {
            return Err(LedgerError::BadSignature);
        }
        if now <= auth.valid_after {
            return Err(LedgerError::AuthorizationNotYetValid { valid_after: auth.valid_after, now });
        }
        if now >= auth.valid_before {
            return Err(LedgerError::AuthorizationExpired { valid_before: auth.valid_before, now });
        }
        if self.is_nonce_used(&auth.payer, &auth.nonce) {
            return Err(LedgerError::NonceAlreadyUsed { payer: auth.payer.clone(), nonce: auth.nonce });
        }
        if payer.balance < auth.amount {
            return Err(LedgerError::InsufficientFunds {
                account: auth.payer.clone(),
                available: payer.balance,
                required: auth.amount,
            });
        }
        Ok(())
    }

    /// Relayed transfer: the caller is not the payer, the payer's signature
    /// is the only authority. Consumes the nonce on success only.
    pub fn transfer_with_authorization(
        &mut self,
        tx_id: TxId,
        auth: &PaymentAuthorization,
        sig: &Signature,
        now: Timestamp,
    ) -> Result<SettlementReceipt> {
        self.check_authorization(auth, sig, now)?;
        let (payer_after, payee_after) = self.transfer_balances(&auth.payer, &auth.payee, auth.amount)?;
        self.set_balance(&auth.payer, payer_after);
        self.set_balance(&auth.payee, payee_after);
        self.consumed.insert((auth.payer.clone(), auth.nonce));
        Ok(self.push_receipt(tx_id, ReceiptKind::Direct, &auth.payer, &auth.payee, auth.amount, None))
    }

    pub fn escrow_lock(
        &mut self,
        tx_id: TxId,
        payer: &AccountId,
        payee: &AccountId,
        amount: Balance,
        condition_id: &str,
        releaser: &AccountId,
    ) -> Result<(EscrowLock, SettlementReceipt)> {
        if amount.is_zero() {
            return Err(LedgerError::ZeroAmount);
        }
        let available = self.balance_of(payer)?;
        for id in [payee, releaser] {
            if !self.accounts.contains_key(id) {
                return Err(LedgerError::UnknownAccount(id.clone()));
            }
        }
        let payer_after = available.checked_sub(amount).ok_or_else(|| LedgerError::InsufficientFunds {
            account: payer.clone(),
            available,
            required: amount,
        })?;
        let pool_after = self.escrow_pool.checked_add(amount).ok_or(LedgerError::Overflow)?;

        self.set_balance(payer, payer_after);
        self.escrow_pool = pool_after;
        let lock_id = LockId(format!("lock-{:06}", self.locks.len() + 1));
        let lock = EscrowLock {
            lock_id: lock_id.clone(),
            tx_id: tx_id.clone(),
            payer: payer.clone(),
            payee: payee.clone(),
            amount,
            condition_id: condition_id.to_owned(),
            releaser: releaser.clone(),
            state: LockState::Locked,
        };
        self.locks.insert(lock_id.clone(), lock.clone());
        let receipt = self.push_receipt(tx_id, ReceiptKind::EscrowLock, payer, payee, amount, Some(lock_id));
        Ok((lock, receipt))
    }

    /// Escrow lock funded by a signed authorization; the authorization's
    /// nonce is consumed exactly as a direct transfer would consume it.
    pub fn escrow_lock_with_authorization(
        &mut self,
        tx_id: TxId,
        auth: &PaymentAuthorization,
        sig: &Signature,
        now: Timestamp,
        condition_id: &str,
        releaser: &AccountId,
    ) -> Result<(EscrowLock, SettlementReceipt)> {
        self.check_authorization(auth, sig, now)?;
        if !self.accounts.contains_key(releaser) {
            return Err(LedgerError::UnknownAccount(releaser.clone()));
        }
        if self.escrow_pool.checked_add(auth.amount).is_none() {
            return Err(LedgerError::Overflow);
        }
        let out = self.escrow_lock(tx_id, &auth.payer, &auth.payee, auth.amount, condition_id, releaser)?;
        self.consumed.insert((auth.payer.clone(), auth.nonce));
        Ok(out)
    }

    pub fn escrow_release(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<SettlementReceipt> {
        self.settle_lock(lock_id, caller, LockState::Released)
    }

    pub fn escrow_refund(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<SettlementReceipt> {
        self.settle_lock(lock_id, caller, LockState::Refunded)
    }

    /// Checks `escrow_release` would succeed, without mutating.
    pub fn check_release(&self, lock_id: &LockId, caller: &AccountId) -> Result<&EscrowLock> {
        let lock = self.locks.get(lock_id).ok_or_else(|| LedgerError::UnknownLock(lock_id.clone()))?;
        if &lock.releaser != caller {
            return Err(LedgerError::NotAuthorizedReleaser { lock_id: lock_id.clone(), caller: caller.clone() });
        }
        if lock.state != LockState::Locked {
            return Err(LedgerError::LockNotActive { lock_id: lock_id.clone(), state: lock.state });
        }
        Ok(lock)
    }

    fn settle_lock(&mut self, lock_id: &LockId, caller: &AccountId, target: LockState) -> Result<SettlementReceipt> {
        let lock = self.check_release(lock_id, caller)?.clone();
        let beneficiary = match target {
            LockState::Released => &lock.payee,
            _ => &lock.payer,
        };
        let credited = self
            .balance_of(beneficiary)?
            .checked_add(lock.amount)
            .ok_or(LedgerError::Overflow)?;
        let pool_after = self.escrow_pool.checked_sub(lock.amount).ok_or(LedgerError::Overflow)?;

        self.set_balance(beneficiary, credited);
        self.escrow_pool = pool_after;
        if let Some(l) = self.locks.get_mut(lock_id) {
            l.state = target;
        }
        let kind = match target {
            LockState::Released => ReceiptKind::EscrowRelease,
            _ => ReceiptKind::EscrowRefund,
        };
        Ok(self.push_receipt(lock.tx_id.clone(), kind, &lock.payer, &lock.payee, lock.amount, Some(lock.lock_id.clone())))
    }

    fn transfer_balances(&self, from: &AccountId, to: &AccountId, amount: Balance) -> Result<(Balance, Balance)> {
        let from_bal = self.balance_of(from)?;
        let from_after = from_bal.checked_sub(amount).ok_or_else(|| LedgerError::InsufficientFunds {
            account: from.clone(),
            available: from_bal,
            required: amount,
        })?;
        if from == to {
            return Ok((from_bal, from_bal));
        }
        let to_after = self.balance_of(to)?.checked_add(amount).ok_or(LedgerError::Overflow)?;
        Ok((from_after, to_after))
    }

    fn set_balance(&mut self, id: &AccountId, value: Balance) {
        if let Some(a) = self.accounts.get_mut(id) {
            a.balance = value;
        }
    }

    fn push_receipt(
        &mut self,
        tx_id: TxId,
        kind: ReceiptKind,
        payer: &AccountId,
        payee: &AccountId,
        amount: Balance,
        lock_id: Option<LockId>,
    ) -> SettlementReceipt {
        let receipt = SettlementReceipt {
            tx_id,
            kind,
            payer: payer.clone(),
            payee: payee.clone(),
            amount,
            ledger_seq: self.next_seq(),
            lock_id,
        };
        self.receipts.push(receipt.clone());
        receipt
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            accounts: self.accounts.clone(),
            total_supply: self.total_supply,
            escrow_pool: self.escrow_pool,
            seq: self.seq,
            consumed_nonces: self.consumed.iter().cloned().collect(),
            locks: self.locks.clone(),
            receipts: self.receipts.clone(),
        }
    }
}
