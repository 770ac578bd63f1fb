use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compliance::ComplianceError;
use crate::ledger::LedgerError;

/// Machine-readable error codes carried in every gateway error body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidAuthorization,
    BadSignature,
    AuthorizationExpired,
    AuthorizationNotYetValid,
    NonceAlreadyUsed,
    InsufficientFunds,
    ZeroAmount,
    UnknownAccount,
    UnknownItem,
    UnknownChallenge,
    ChallengeMismatch,
    ChallengeExpired,
    ChallengeClosed,
    UnknownProposal,
    ProposalMismatch,
    ProposalExpired,
    ProposalClosed,
    InvalidProposal,
    NothingPending,
    UnknownLock,
    NotAuthorizedReleaser,
    LockNotActive,
    UnknownTransaction,
    DuplicateEvaluation,
    InstructionMismatch,
    MalformedRequest,
    SchemaViolation,
    UnknownEndpoint,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 29] = [
        ErrorCode::InvalidAuthorization,
        ErrorCode::BadSignature,
        ErrorCode::AuthorizationExpired,
        ErrorCode::AuthorizationNotYetValid,
        ErrorCode::NonceAlreadyUsed,
        ErrorCode::InsufficientFunds,
        ErrorCode::ZeroAmount,
        ErrorCode::UnknownAccount,
        ErrorCode::UnknownItem,
        ErrorCode::UnknownChallenge,
        ErrorCode::ChallengeMismatch,
        ErrorCode::ChallengeExpired,
        ErrorCode::ChallengeClosed,
        ErrorCode::UnknownProposal,
        ErrorCode::ProposalMismatch,
        ErrorCode::ProposalExpired,
        ErrorCode::ProposalClosed,
        ErrorCode::InvalidProposal,
        ErrorCode::NothingPending,
        ErrorCode::UnknownLock,
        ErrorCode::NotAuthorizedReleaser,
        ErrorCode::LockNotActive,
        ErrorCode::UnknownTransaction,
        ErrorCode::DuplicateEvaluation,
        ErrorCode::InstructionMismatch,
        ErrorCode::MalformedRequest,
        ErrorCode::SchemaViolation,
        ErrorCode::UnknownEndpoint,
        ErrorCode::Internal,
    ];

    pub fn http_status(self) -> u16 {
        use ErrorCode::*;
        match self {
            BadSignature => 401,
            InvalidAuthorization | AuthorizationExpired | AuthorizationNotYetValid | NonceAlreadyUsed
            | InsufficientFunds | ZeroAmount | MalformedRequest => 400,
            NotAuthorizedReleaser => 403,
            UnknownAccount | UnknownItem | UnknownChallenge | UnknownProposal | UnknownLock | UnknownTransaction
            | UnknownEndpoint => 404,
            ChallengeMismatch | ProposalMismatch | InvalidProposal | NothingPending | LockNotActive
            | DuplicateEvaluation | InstructionMismatch => 409,
            ChallengeExpired | ChallengeClosed | ProposalExpired | ProposalClosed => 410,
            SchemaViolation => 422,
            Internal => 500,
        }
    }

    pub fn as_str(self) -> &'static str {
        use ErrorCode::*;
        match self {
            InvalidAuthorization => "InvalidAuthorization",
            BadSignature => "BadSignature",
            AuthorizationExpired => "AuthorizationExpired",
            AuthorizationNotYetValid => "AuthorizationNotYetValid",
            NonceAlreadyUsed => "NonceAlreadyUsed",
            InsufficientFunds => "InsufficientFunds",
            ZeroAmount => "ZeroAmount",
            UnknownAccount => "UnknownAccount",
            UnknownItem => "UnknownItem",
            UnknownChallenge => "UnknownChallenge",
            ChallengeMismatch => "ChallengeMismatch",
            ChallengeExpired => "ChallengeExpired",
            ChallengeClosed => "ChallengeClosed",
            UnknownProposal => "UnknownProposal",
            ProposalMismatch => "ProposalMismatch",
            ProposalExpired => "ProposalExpired",
            ProposalClosed => "ProposalClosed",
            InvalidProposal => "InvalidProposal",
            NothingPending => "NothingPending",
            UnknownLock => "UnknownLock",
            NotAuthorizedReleaser => "NotAuthorizedReleaser",
            LockNotActive => "LockNotActive",
            UnknownTransaction => "UnknownTransaction",
            DuplicateEvaluation => "DuplicateEvaluation",
            InstructionMismatch => "InstructionMismatch",
            MalformedRequest => "MalformedRequest",
            SchemaViolation => "SchemaViolation",
            UnknownEndpoint => "UnknownEndpoint",
            Internal => "Internal",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{code}: {message}")]
pub struct GatewayError {
    pub code: ErrorCode,
    pub message: String,
}

impl GatewayError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn status(&self) -> u16 {
        self.code.http_status()
    }
}

impl From<LedgerError> for GatewayError {
    fn from(e: LedgerError) -> Self {
        let code = match &e {
            LedgerError::DuplicateAccount(_) | LedgerError::EmptyAccountId | LedgerError::Overflow => ErrorCode::Internal,
            LedgerError::UnknownAccount(_) => ErrorCode::UnknownAccount,
            LedgerError::InvalidAuthorization(_) => ErrorCode::InvalidAuthorization,
            LedgerError::BadSignature => ErrorCode::BadSignature,
            LedgerError::AuthorizationExpired { .. } => ErrorCode::AuthorizationExpired,
            LedgerError::AuthorizationNotYetValid { .. } => ErrorCode::AuthorizationNotYetValid,
            LedgerError::NonceAlreadyUsed { .. } => ErrorCode::NonceAlreadyUsed,
            LedgerError::InsufficientFunds { .. } => ErrorCode::InsufficientFunds,
            LedgerError::ZeroAmount => ErrorCode::ZeroAmount,
            LedgerError::UnknownLock(_) => ErrorCode::UnknownLock,
            LedgerError::NotAuthorizedReleaser { .. } => ErrorCode::NotAuthorizedReleaser,
            LedgerError::LockNotActive { .. } => ErrorCode::LockNotActive,
        };
        GatewayError::new(code, e.to_string())
    }
}

impl From<ComplianceError> for GatewayError {
    fn from(e: ComplianceError) -> Self {
        match e {
            ComplianceError::Ledger(l) => l.into(),
            ComplianceError::DuplicateEvaluation { .. } => GatewayError::new(ErrorCode::DuplicateEvaluation, e.to_string()),
            ComplianceError::InstructionMismatch(_) => GatewayError::new(ErrorCode::InstructionMismatch, e.to_string()),
            ComplianceError::UnknownAccount(_) => GatewayError::new(ErrorCode::UnknownAccount, e.to_string()),
            ComplianceError::UnknownPolicy(_)
            | ComplianceError::InvalidConfig(_)
            | ComplianceError::SanctionsVersionMismatch { .. } => GatewayError::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn codes_are_distinct_and_roundtrip() {
        let names: HashSet<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(names.len(), ErrorCode::ALL.len());
        for c in ErrorCode::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
            assert_eq!(serde_json::from_str::<ErrorCode>(&json).unwrap(), c);
            assert!((400..=500).contains(&c.http_status()));
        }
    }

    #[test]
    fn ledger_codes_keep_their_names() {
        let e: GatewayError = LedgerError::BadSignature.into();
        assert_eq!(e.code.as_str(), LedgerError::BadSignature.code());
        assert_eq!(e.status(), 401);
        let e: GatewayError = LedgerError::ZeroAmount.into();
        assert_eq!(e.status(), 400);
    }
}
