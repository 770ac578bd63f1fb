//! Payment authorizations: the signed tuple a payer hands to a relayer.
//!
//! The signed message is a fixed binary layout:
//!
//! ```text
//! "COMPLIPAY-AUTH-V1"            17 bytes, ASCII domain tag
//! u32be len ‖ payer id (UTF-8)
//! u32be len ‖ payee id (UTF-8)
//! amount                         16 bytes, big-endian
//! valid_after                     8 bytes, big-endian unix seconds
//! valid_before                    8 bytes, big-endian unix seconds
//! nonce                          32 bytes
//! ```
//!
//! Signatures default to Ed25519; other schemes plug in through
//! [`SignatureScheme`].

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, sha256};
use crate::types::{AccountId, Balance, Nonce, Timestamp};

pub const DOMAIN_TAG: &[u8] = b"COMPLIPAY-AUTH-V1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthzError {
    #[error("invalid authorization: {0}")]
    InvalidAuthorization(String),
}

/// Authorization for a relayed transfer of `amount` from `payer` to `payee`,
/// usable once and only while `valid_after < now < valid_before`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaymentAuthorization {
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: Balance,
    pub valid_after: Timestamp,
    pub valid_before: Timestamp,
    pub nonce: Nonce,
}

impl PaymentAuthorization {
    pub fn validate(&self) -> Result<(), AuthzError> {
        if self.amount.is_zero() {
            return Err(AuthzError::InvalidAuthorization("amount must be positive".into()));
        }
        if self.valid_after >= self.valid_before {
            return Err(AuthzError::InvalidAuthorization(format!(
                "empty validity window ({}, {})",
                self.valid_after, self.valid_before
            )));
        }
        if self.payer.as_str().is_empty() || self.payee.as_str().is_empty() {
            return Err(AuthzError::InvalidAuthorization("empty party id".into()));
        }
        if self.payer.as_str().len() > u32::MAX as usize || self.payee.as_str().len() > u32::MAX as usize {
            return Err(AuthzError::InvalidAuthorization("party id too long".into()));
        }
        Ok(())
    }
}

/// Fixed-length signature bytes; `0x` hex on the wire.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "crate::canonical::hex_bytes")] pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", canonical::to_0x_hex(&self.0))
    }
}

pub fn canonical_encode(auth: &PaymentAuthorization) -> Result<Vec<u8>, AuthzError> {
    auth.validate()?;
    let payer = auth.payer.as_str().as_bytes();
    let payee = auth.payee.as_str().as_bytes();
    let mut out = Vec::with_capacity(DOMAIN_TAG.len() + 8 + payer.len() + payee.len() + 64);
    out.extend_from_slice(DOMAIN_TAG);
    out.extend_from_slice(&(payer.len() as u32).to_be_bytes());
    out.extend_from_slice(payer);
    out.extend_from_slice(&(payee.len() as u32).to_be_bytes());
    out.extend_from_slice(payee);
    out.extend_from_slice(&auth.amount.0.to_be_bytes());
    out.extend_from_slice(&auth.valid_after.to_be_bytes());
    out.extend_from_slice(&auth.valid_before.to_be_bytes());
    out.extend_from_slice(&auth.nonce.0);
    Ok(out)
}

/// A signature scheme usable for payment authorizations.
pub trait SignatureScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Must return false rather than panic on malformed keys or signatures.
    fn verify(&self, pubkey: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn name(&self) -> &'static str {
        "ed25519"
    }

    fn verify(&self, pubkey: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let Ok(pk_bytes) = <[u8; 32]>::try_from(pubkey) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk_bytes) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(message, &sig).is_ok()
    }
}

/// Ed25519 key pair held by a simulated party.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("public", &canonical::to_0x_hex(&self.public_key()))
            .finish_non_exhaustive()
    }
}

impl Keypair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(&secret) }
    }

    /// Deterministic demo key for `account` under a simulation seed.
    /// Not suitable for anything beyond simulation.
    pub fn demo(seed: u64, account: &AccountId) -> Self {
        let mut material = b"COMPLIPAY-DEMO-KEY".to_vec();
        material.extend_from_slice(&seed.to_be_bytes());
        material.extend_from_slice(account.as_str().as_bytes());
        Self::from_secret(sha256(&material))
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public_key(&self) -> Vec<u8> {
        self.signing.verifying_key().to_bytes().to_vec()
    }

    pub fn sign_bytes(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes().to_vec())
    }
}

pub fn sign_authorization(key: &Keypair, auth: &PaymentAuthorization) -> Result<Signature, AuthzError> {
    let message = canonical_encode(auth)?;
    Ok(key.sign_bytes(&message))
}

/// Ed25519 verification; total over arbitrary inputs.
pub fn verify_authorization(auth: &PaymentAuthorization, sig: &Signature, pubkey: &[u8]) -> bool {
    verify_authorization_with(&Ed25519, auth, sig, pubkey)
}

pub fn verify_authorization_with(
    scheme: &dyn SignatureScheme,
    auth: &PaymentAuthorization,
    sig: &Signature,
    pubkey: &[u8],
) -> bool {
    match canonical_encode(auth) {
        Ok(message) => scheme.verify(pubkey, &message, &sig.0),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden_auth() -> PaymentAuthorization {
        PaymentAuthorization {
            payer: "buyer".into(),
            payee: "seller".into(),
            amount: Balance(100),
            valid_after: 0,
            valid_before: 1 << 32,
            nonce: Nonce([0x01; 32]),
        }
    }

    #[test]
    fn golden_vector_matches_fixture() {
        let fixture = include_str!("../tests/fixtures/authz_golden_vector.hex").trim();
        let encoded = canonical_encode(&golden_auth()).unwrap();
        assert_eq!(encoded.len(), 100);
        assert_eq!(hex::encode(&encoded), fixture);
    }

    #[test]
    fn encode_is_deterministic_and_nonce_sensitive() {
        let a = golden_auth();
        assert_eq!(canonical_encode(&a).unwrap(), canonical_encode(&a).unwrap());
        let mut b = a.clone();
        b.nonce.0[31] = 0x02;
        assert_ne!(canonical_encode(&a).unwrap(), canonical_encode(&b).unwrap());
    }

    #[test]
    fn invariant_violations_rejected() {
        let mut a = golden_auth();
        a.amount = Balance::ZERO;
        assert!(matches!(canonical_encode(&a), Err(AuthzError::InvalidAuthorization(_))));
        let mut a = golden_auth();
        a.valid_after = a.valid_before;
        assert!(canonical_encode(&a).is_err());
        let key = Keypair::demo(1, &"buyer".into());
        assert!(sign_authorization(&key, &a).is_err());
    }

    #[test]
    fn sign_verify_roundtrip() {
        let key = Keypair::demo(7, &"buyer".into());
        let other = Keypair::demo(7, &"seller".into());
        let a = golden_auth();
        let sig = sign_authorization(&key, &a).unwrap();
        assert_eq!(sig.0.len(), 64);
        assert!(verify_authorization(&a, &sig, &key.public_key()));
        assert!(!verify_authorization(&a, &sig, &other.public_key()));
        assert_eq!(sig, sign_authorization(&key, &a).unwrap());
    }

    #[test]
    fn every_field_is_bound() {
        let key = Keypair::demo(7, &"buyer".into());
        let a = golden_auth();
        let sig = sign_authorization(&key, &a).unwrap();
        let pk = key.public_key();
        let mutants = [
            PaymentAuthorization { payer: "buyer2".into(), ..a.clone() },
            PaymentAuthorization { payee: "sellers".into(), ..a.clone() },
            PaymentAuthorization { amount: Balance(101), ..a.clone() },
            PaymentAuthorization { valid_after: 1, ..a.clone() },
            PaymentAuthorization { valid_before: (1 << 32) + 1, ..a.clone() },
            PaymentAuthorization { nonce: Nonce([0x02; 32]), ..a.clone() },
        ];
        for m in &mutants {
            assert!(!verify_authorization(m, &sig, &pk), "mutant verified: {m:?}");
        }
    }

    #[test]
    fn single_bit_flips_in_signature_fail() {
        let key = Keypair::demo(3, &"buyer".into());
        let a = golden_auth();
        let sig = sign_authorization(&key, &a).unwrap();
        for bit in 0..sig.0.len() * 8 {
            let mut flipped = sig.clone();
            flipped.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_authorization(&a, &flipped, &key.public_key()), "bit {bit}");
        }
    }

    #[test]
    fn length_prefix_prevents_boundary_shift() {
        let a = PaymentAuthorization { payer: "ab".into(), payee: "c".into(), ..golden_auth() };
        let b = PaymentAuthorization { payer: "a".into(), payee: "bc".into(), ..golden_auth() };
        assert_ne!(canonical_encode(&a).unwrap(), canonical_encode(&b).unwrap());
    }

    #[test]
    fn json_wire_form() {
        let key = Keypair::demo(3, &"buyer".into());
        let a = golden_auth();
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["amount"], "100");
        assert_eq!(v["valid_before"], 4294967296u64);
        assert_eq!(v["nonce"], format!("0x{}", "01".repeat(32)));
        let sig = sign_authorization(&key, &a).unwrap();
        let sv = serde_json::to_value(&sig).unwrap();
        assert!(sv.as_str().unwrap().starts_with("0x"));
        let back: PaymentAuthorization = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }

    fn arb_auth() -> impl Strategy<Value = PaymentAuthorization> {
        ("[a-z]{1,12}", "[a-z]{1,12}", 1u128.., 0u64..u64::MAX, any::<[u8; 32]>()).prop_flat_map(
            |(payer, payee, amount, after, nonce)| {
                ((after + 1)..=u64::MAX).prop_map(move |before| PaymentAuthorization {
                    payer: payer.clone().into(),
                    payee: payee.clone().into(),
                    amount: Balance(amount),
                    valid_after: after,
                    valid_before: before,
                    nonce: Nonce(nonce),
                })
            },
        )
    }

    proptest! {
        #[test]
        fn mutating_any_field_changes_encoding(a in arb_auth(), field in 0usize..6, salt in 1u64..1000) {
            let mut b = a.clone();
            match field {
                0 => b.payer = format!("{}x", b.payer).into(),
                1 => b.payee = format!("{}x", b.payee).into(),
                2 => b.amount = Balance(b.amount.0.wrapping_add(salt as u128).max(1)),
                3 => b.valid_after = b.valid_after.saturating_sub(salt),
                4 => b.valid_before = if b.valid_before == u64::MAX { b.valid_before - 1 } else { b.valid_before + 1 },
                _ => b.nonce.0[(salt % 32) as usize] ^= 0x80,
            }
            prop_assume!(b != a && b.validate().is_ok());
            prop_assert_ne!(canonical_encode(&a).unwrap(), canonical_encode(&b).unwrap());
        }

        #[test]
        fn verify_is_total(a in arb_auth(), sig in proptest::collection::vec(any::<u8>(), 0..130),
                           pk in proptest::collection::vec(any::<u8>(), 0..70)) {
            let _ = verify_authorization(&a, &Signature(sig.clone()), &pk);
            let bad = PaymentAuthorization { valid_after: a.valid_before, ..a.clone() };
            prop_assert!(!verify_authorization(&bad, &Signature(sig), &pk));
        }
    }
}
