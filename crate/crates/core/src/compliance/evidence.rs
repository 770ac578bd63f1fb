use serde::{Deserialize, Serialize};

use crate::types::{AccountId, Balance, EvidenceId, Timestamp};

/// Source-of-funds evidence linked to one subject account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SofEvidence {
    pub evidence_id: EvidenceId,
    pub subject: AccountId,
    pub declared_source: String,
    pub covering_amount: Balance,
    pub submitted_at: Timestamp,
}

/// Evidence as submitted, before the registry assigns an id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceSubmission {
    pub subject: AccountId,
    pub declared_source: String,
    pub covering_amount: Balance,
    #[serde(default)]
    pub submitted_at: Option<Timestamp>,
}

/// Append-only evidence store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRegistry {
    records: Vec<SofEvidence>,
}

impl EvidenceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, submission: EvidenceSubmission, now: Timestamp) -> SofEvidence {
        let record = SofEvidence {
            evidence_id: EvidenceId(format!("ev-{:06}", self.records.len() + 1)),
            subject: submission.subject,
            declared_source: submission.declared_source,
            covering_amount: submission.covering_amount,
            submitted_at: submission.submitted_at.unwrap_or(now),
        };
        self.records.push(record.clone());
        record
    }

    /// First evidence for `subject` that covers at least `amount`.
    pub fn covering(&self, subject: &AccountId, amount: Balance) -> Option<&SofEvidence> {
        self.records
            .iter()
            .find(|e| &e.subject == subject && e.covering_amount >= amount)
    }

    pub fn for_subject<'a>(&'a self, subject: &'a AccountId) -> impl Iterator<Item = &'a SofEvidence> + 'a {
        self.records.iter().filter(move |e| &e.subject == subject)
    }

    pub fn records(&self) -> &[SofEvidence] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(subject: &str, amount: u128) -> EvidenceSubmission {
        EvidenceSubmission {
            subject: subject.into(),
            declared_source: "salary".into(),
            covering_amount: Balance(amount),
            submitted_at: None,
        }
    }

    #[test]
    fn duplicates_get_distinct_ids() {
        let mut r = EvidenceRegistry::new();
        let a = r.append(sub("buyer", 10), 5);
        let b = r.append(sub("buyer", 10), 6);
        assert_ne!(a.evidence_id, b.evidence_id);
        assert_eq!(a.submitted_at, 5);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn covering_respects_subject_and_amount() {
        let mut r = EvidenceRegistry::new();
        r.append(sub("other", 1_000_000), 0);
        r.append(sub("buyer", 100), 0);
        assert!(r.covering(&"buyer".into(), Balance(101)).is_none());
        assert!(r.covering(&"buyer".into(), Balance(100)).is_some());
        assert_eq!(r.for_subject(&"buyer".into()).count(), 1);
    }
}
