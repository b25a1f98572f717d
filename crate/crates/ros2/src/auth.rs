//! Challenge-response session authentication over the tenant's shared
//! secret. The server hands out a fresh nonce per connection; the client
//! proves possession of the secret with an HMAC bound to the nonce,
//! tenant, and session, so captured handshakes cannot be replayed.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use ros2_core::rpc::{NONCE_LEN, PROOF_LEN};

pub const SECRET_LEN: usize = 32;

pub type Secret = [u8; SECRET_LEN];

/// Client-side proof for a CONNECT request.
pub fn connect_proof(
    secret: &Secret,
    nonce: &[u8; NONCE_LEN],
    tenant_id: u64,
    session_id: u64,
) -> [u8; PROOF_LEN] {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("hmac accepts any key length");
    mac.update(nonce);
    mac.update(&tenant_id.to_le_bytes());
    mac.update(&session_id.to_le_bytes());
    mac.finalize().into_bytes().into()
}

/// Server-side check, constant-time on the digest comparison.
pub fn verify_proof(
    secret: &Secret,
    nonce: &[u8; NONCE_LEN],
    tenant_id: u64,
    session_id: u64,
    proof: &[u8; PROOF_LEN],
) -> bool {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("hmac accepts any key length");
    mac.update(nonce);
    mac.update(&tenant_id.to_le_bytes());
    mac.update(&session_id.to_le_bytes());
    mac.verify_slice(proof).is_ok()
}

/// Parse a 64-hex-char secret.
pub fn secret_from_hex(s: &str) -> Option<Secret> {
    let s = s.trim();
    if s.len() != SECRET_LEN * 2 {
        return None;
    }
    let mut out = [0u8; SECRET_LEN];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hex = std::str::from_utf8(chunk).ok()?;
        out[i] = u8::from_str_radix(hex, 16).ok()?;
    }
    Some(out)
}

pub fn secret_to_hex(secret: &Secret) -> String {
    secret.iter().map(|b| format!("{:02x}", b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_proof_verifies() {
        let secret = [7u8; SECRET_LEN];
        let nonce = [9u8; NONCE_LEN];
        let proof = connect_proof(&secret, &nonce, 1, 2);
        assert!(verify_proof(&secret, &nonce, 1, 2, &proof));
    }

    #[test]
    fn wrong_secret_fails() {
        let secret = [7u8; SECRET_LEN];
        let nonce = [9u8; NONCE_LEN];
        let proof = connect_proof(&[8u8; SECRET_LEN], &nonce, 1, 2);
        assert!(!verify_proof(&secret, &nonce, 1, 2, &proof));
    }

    #[test]
    fn replayed_proof_fails_under_fresh_nonce() {
        let secret = [7u8; SECRET_LEN];
        let old_nonce = [1u8; NONCE_LEN];
        let captured = connect_proof(&secret, &old_nonce, 1, 2);
        let fresh_nonce = [2u8; NONCE_LEN];
        assert!(!verify_proof(&secret, &fresh_nonce, 1, 3, &captured));
    }

    #[test]
    fn hex_roundtrip() {
        let secret = [0xABu8; SECRET_LEN];
        let hex = secret_to_hex(&secret);
        assert_eq!(secret_from_hex(&hex), Some(secret));
        assert_eq!(secret_from_hex("zz"), None);
    }
}
