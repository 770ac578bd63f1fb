use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of a single compliance check. Ordered `Pass < Pending < Fail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Pending,
    Fail,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Pass, Verdict::Pending, Verdict::Fail];
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Pending => "PENDING",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One policy's verdict. `required_evidence` is set exactly when the value
/// is `Pending`; the constructors are the only way to build one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyVerdict {
    pub value: Verdict,
    pub policy_id: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_evidence: Option<String>,
}

impl PolicyVerdict {
    pub fn pass(policy_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { value: Verdict::Pass, policy_id: policy_id.into(), reason: reason.into(), required_evidence: None }
    }

    pub fn fail(policy_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { value: Verdict::Fail, policy_id: policy_id.into(), reason: reason.into(), required_evidence: None }
    }

    pub fn pending(policy_id: impl Into<String>, reason: impl Into<String>, evidence_kind: impl Into<String>) -> Self {
        Self {
            value: Verdict::Pending,
            policy_id: policy_id.into(),
            reason: reason.into(),
            required_evidence: Some(evidence_kind.into()),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        (self.value == Verdict::Pending) == self.required_evidence.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateVerdict {
    pub overall: Verdict,
    pub parts: Vec<PolicyVerdict>,
}

impl AggregateVerdict {
    /// FAIL dominates PENDING, which dominates PASS. No parts means PASS.
    pub fn from_parts(parts: Vec<PolicyVerdict>) -> Self {
        let overall = combine(parts.iter().map(|p| p.value));
        Self { overall, parts }
    }

    pub fn part(&self, policy_id: &str) -> Option<&PolicyVerdict> {
        self.parts.iter().find(|p| p.policy_id == policy_id)
    }
}

pub fn combine(values: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut pending = false;
    for v in values {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Pending => pending = true,
            Verdict::Pass => {}
        }
    }
    if pending {
        Verdict::Pending
    } else {
        Verdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rank(v: Verdict) -> u8 {
        match v {
            Verdict::Pass => 0,
            Verdict::Pending => 1,
            Verdict::Fail => 2,
        }
    }

    #[test]
    fn all_pairs_match_max_oracle() {
        for a in Verdict::ALL {
            for b in Verdict::ALL {
                let oracle = if rank(a) >= rank(b) { a } else { b };
                assert_eq!(combine([a, b]), oracle, "{a} {b}");
            }
        }
    }

    #[test]
    fn constructors_keep_evidence_invariant() {
        assert!(PolicyVerdict::pass("p", "ok").is_well_formed());
        assert!(PolicyVerdict::fail("p", "no").is_well_formed());
        let p = PolicyVerdict::pending("p", "need", "source-of-funds");
        assert!(p.is_well_formed());
        assert_eq!(serde_json::to_value(&p).unwrap()["value"], "PENDING");
    }

    proptest! {
        #[test]
        fn aggregation_is_fold_with_max(values in proptest::collection::vec(0u8..3, 0..16)) {
            let vs: Vec<Verdict> = values.iter().map(|&i| Verdict::ALL[i as usize]).collect();
            let oracle = vs.iter().fold(Verdict::Pass, |acc, &v| if rank(v) > rank(acc) { v } else { acc });
            prop_assert_eq!(combine(vs.clone()), oracle);
        }
    }
}
