//! The remote-access security kernel: protection domains, registered
//! memory regions, scoped capability tokens, and the total `validate`
//! decision function every one-sided operation passes through.
//!
//! The kernel holds metadata only. Buffer bytes, locks, and clocks live in
//! the transport layer; timestamps arrive here as monotonic nanoseconds and
//! key entropy arrives through [`KeySource`], so every decision is
//! reproducible.
//!
//! Keys are never reused: deregistration, revocation, and PD teardown leave
//! tombstones behind, and a tombstoned key denies forever.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::rng::KeySource;

/// 64-bit access key as carried on the wire.
pub type Key = u64;

/// Remote permission set for a region or token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Perms(u8);

impl Perms {
    pub const NONE: Perms = Perms(0);
    pub const READ: Perms = Perms(1);
    pub const WRITE: Perms = Perms(2);
    pub const READ_WRITE: Perms = Perms(3);

    pub fn from_bits(bits: u8) -> Self {
        Perms(bits & 3)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Perms) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn allows(self, kind: AccessKind) -> bool {
        match kind {
            AccessKind::Read => self.contains(Perms::READ),
            AccessKind::Write => self.contains(Perms::WRITE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// Outcome of a validation. `Allow` names the backing region so the
/// transport knows which buffer to touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow { mr_id: u64 },
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    UnknownKey,
    OutOfBounds,
    Perm,
    Expired,
    Revoked,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DenyReason::UnknownKey => "UNKNOWN_KEY",
            DenyReason::OutOfBounds => "OUT_OF_BOUNDS",
            DenyReason::Perm => "PERM",
            DenyReason::Expired => "EXPIRED",
            DenyReason::Revoked => "REVOKED",
        };
        f.write_str(s)
    }
}

/// Registered memory region descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMeta {
    pub mr_id: u64,
    pub pd_id: u64,
    pub tenant_id: u64,
    pub length: u64,
    pub perms: Perms,
    pub lkey: Key,
    pub rkey: Key,
    pub created_at_ns: u64,
    /// 0 = never expires.
    pub ttl_ns: u64,
}

impl RegionMeta {
    fn expired(&self, now_ns: u64) -> bool {
        self.ttl_ns != 0 && now_ns >= self.created_at_ns.saturating_add(self.ttl_ns)
    }
}

/// Scoped capability over a sub-range of a region. The token's `nonce` is
/// the key presented on the wire, so a token is literally a scoped rkey.
#[derive(Debug, Clone)]
pub struct TokenMeta {
    pub token_id: u64,
    pub tenant_id: u64,
    pub mr_id: u64,
    pub start: u64,
    pub end: u64,
    pub perms: Perms,
    /// Absolute expiry in nanoseconds; 0 = never.
    pub expiry_ns: u64,
    pub nonce: Key,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterError {
    ZeroLength,
    PdDead,
    EmptyPerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueError {
    UnknownRegion,
    ForeignRegion,
    ScopeExceedsRegion,
    PermEscalation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevokeError {
    UnknownToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeregisterError {
    UnknownRegion,
}

enum KeySlot {
    Region { mr_id: u64 },
    Token { token_id: u64 },
    Tombstone,
}

/// Per-endpoint key table. One instance guards one process's registered
/// memory; the engine additionally runs one as the tenant capability
/// authority.
#[derive(Default)]
pub struct SecurityKernel {
    pds: BTreeMap<u64, PdMeta>,
    regions: BTreeMap<u64, RegionMeta>,
    tokens: BTreeMap<u64, TokenMeta>,
    keys: BTreeMap<Key, KeySlot>,
    issued_keys: u64,
    next_pd: u64,
    next_mr: u64,
    next_token: u64,
}

struct PdMeta {
    tenant_id: u64,
    live: bool,
}

impl SecurityKernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_pd(&mut self, tenant_id: u64) -> u64 {
        self.next_pd += 1;
        let pd_id = self.next_pd;
        self.pds.insert(
            pd_id,
            PdMeta {
                tenant_id,
                live: true,
            },
        );
        pd_id
    }

    pub fn pd_tenant(&self, pd_id: u64) -> Option<u64> {
        self.pds.get(&pd_id).filter(|p| p.live).map(|p| p.tenant_id)
    }

    /// Tears down a PD and every region registered under it.
    pub fn destroy_pd(&mut self, pd_id: u64) {
        if let Some(pd) = self.pds.get_mut(&pd_id) {
            pd.live = false;
        }
        let doomed: alloc::vec::Vec<u64> = self
            .regions
            .values()
            .filter(|r| r.pd_id == pd_id)
            .map(|r| r.mr_id)
            .collect();
        for mr_id in doomed {
            let _ = self.deregister_region(mr_id);
        }
    }

    fn mint_key(&mut self, source: &mut dyn KeySource) -> Key {
        loop {
            let key = source.next_key();
            if key != 0 && !self.keys.contains_key(&key) {
                self.issued_keys += 1;
                return key;
            }
        }
    }

    pub fn register_region(
        &mut self,
        pd_id: u64,
        length: u64,
        perms: Perms,
        ttl_ns: u64,
        now_ns: u64,
        source: &mut dyn KeySource,
    ) -> Result<RegionMeta, RegisterError> {
        if length == 0 {
            return Err(RegisterError::ZeroLength);
        }
        if perms.is_empty() {
            return Err(RegisterError::EmptyPerms);
        }
        let tenant_id = match self.pds.get(&pd_id) {
            Some(pd) if pd.live => pd.tenant_id,
            _ => return Err(RegisterError::PdDead),
        };
        let lkey = self.mint_key(source);
        // lkey occupies its value so rkey can never collide with it
        self.keys.insert(lkey, KeySlot::Tombstone);
        let rkey = self.mint_key(source);
        self.next_mr += 1;
        let meta = RegionMeta {
            mr_id: self.next_mr,
            pd_id,
            tenant_id,
            length,
            perms,
            lkey,
            rkey,
            created_at_ns: now_ns,
            ttl_ns,
        };
        self.keys.insert(rkey, KeySlot::Region { mr_id: meta.mr_id });
        self.regions.insert(meta.mr_id, meta.clone());
        Ok(meta)
    }

    /// Removes the region; its rkey and all tokens over it deny as REVOKED
    /// from now on.
    pub fn deregister_region(&mut self, mr_id: u64) -> Result<(), DeregisterError> {
        let meta = self
            .regions
            .remove(&mr_id)
            .ok_or(DeregisterError::UnknownRegion)?;
        self.keys.insert(meta.rkey, KeySlot::Tombstone);
        let doomed: alloc::vec::Vec<u64> = self
            .tokens
            .values()
            .filter(|t| t.mr_id == mr_id)
            .map(|t| t.token_id)
            .collect();
        for token_id in doomed {
            let _ = self.revoke_token(token_id);
        }
        Ok(())
    }

    pub fn region(&self, mr_id: u64) -> Option<&RegionMeta> {
        self.regions.get(&mr_id)
    }

    pub fn issue_token(
        &mut self,
        tenant_id: u64,
        mr_id: u64,
        start: u64,
        end: u64,
        perms: Perms,
        ttl_ns: u64,
        now_ns: u64,
        source: &mut dyn KeySource,
    ) -> Result<TokenMeta, IssueError> {
        let region = self.regions.get(&mr_id).ok_or(IssueError::UnknownRegion)?;
        if region.tenant_id != tenant_id {
            return Err(IssueError::ForeignRegion);
        }
        if start > end || end > region.length {
            return Err(IssueError::ScopeExceedsRegion);
        }
        if !region.perms.contains(perms) {
            return Err(IssueError::PermEscalation);
        }
        let nonce = self.mint_key(source);
        self.next_token += 1;
        let meta = TokenMeta {
            token_id: self.next_token,
            tenant_id,
            mr_id,
            start,
            end,
            perms,
            expiry_ns: if ttl_ns == 0 {
                0
            } else {
                now_ns.saturating_add(ttl_ns)
            },
            nonce,
        };
        self.keys.insert(
            nonce,
            KeySlot::Token {
                token_id: meta.token_id,
            },
        );
        self.tokens.insert(meta.token_id, meta.clone());
        Ok(meta)
    }

    /// Tombstones the token's key. Revoking twice reports UNKNOWN_TOKEN.
    pub fn revoke_token(&mut self, token_id: u64) -> Result<(), RevokeError> {
        let meta = self
            .tokens
            .remove(&token_id)
            .ok_or(RevokeError::UnknownToken)?;
        self.keys.insert(meta.nonce, KeySlot::Tombstone);
        Ok(())
    }

    pub fn token(&self, token_id: u64) -> Option<&TokenMeta> {
        self.tokens.get(&token_id)
    }

    /// The security kernel's decision function. Total: any (key, offset,
    /// len, kind, tenant, clock) combination yields a decision.
    ///
    /// Check order: key liveness, bounds (region and token scope), perms
    /// (including tenant match when `requester_tenant` is given), expiry.
    /// The first failing check names the deny reason.
    pub fn validate(
        &self,
        key: Key,
        offset: u64,
        len: u64,
        kind: AccessKind,
        requester_tenant: Option<u64>,
        now_ns: u64,
    ) -> Decision {
        let (region, scope, perms, token_expiry, owner) = match self.keys.get(&key) {
            None => return Decision::Deny(DenyReason::UnknownKey),
            Some(KeySlot::Tombstone) => return Decision::Deny(DenyReason::Revoked),
            Some(KeySlot::Region { mr_id }) => match self.regions.get(mr_id) {
                Some(r) => (r, (0, r.length), r.perms, 0, r.tenant_id),
                None => return Decision::Deny(DenyReason::Revoked),
            },
            Some(KeySlot::Token { token_id }) => match self.tokens.get(token_id) {
                Some(t) => match self.regions.get(&t.mr_id) {
                    Some(r) => (r, (t.start, t.end), t.perms, t.expiry_ns, t.tenant_id),
                    None => return Decision::Deny(DenyReason::Revoked),
                },
                None => return Decision::Deny(DenyReason::Revoked),
            },
        };

        let end = match offset.checked_add(len) {
            Some(e) => e,
            None => return Decision::Deny(DenyReason::OutOfBounds),
        };
        if end > region.length || offset < scope.0 || end > scope.1 {
            return Decision::Deny(DenyReason::OutOfBounds);
        }

        if !perms.allows(kind) {
            return Decision::Deny(DenyReason::Perm);
        }
        if let Some(tenant) = requester_tenant {
            if tenant != owner {
                return Decision::Deny(DenyReason::Perm);
            }
        }

        if region.expired(now_ns) {
            return Decision::Deny(DenyReason::Expired);
        }
        if token_expiry != 0 && now_ns >= token_expiry {
            return Decision::Deny(DenyReason::Expired);
        }

        Decision::Allow {
            mr_id: region.mr_id,
        }
    }

    /// Count of keys handed out so far (lkeys, rkeys, and token nonces).
    pub fn issued_key_count(&self) -> u64 {
        self.issued_keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use std::collections::HashSet;
    use std::vec::Vec;

    const SEC: u64 = 1_000_000_000;

    fn kernel_with_region(perms: Perms, len: u64, ttl: u64) -> (SecurityKernel, RegionMeta) {
        let mut k = SecurityKernel::new();
        let mut rng = SplitMix64::new(1);
        let pd = k.create_pd(7);
        let meta = k.register_region(pd, len, perms, ttl, 0, &mut rng).unwrap();
        (k, meta)
    }

    #[test]
    fn register_basic_contract() {
        let (_, meta) = kernel_with_region(Perms::READ_WRITE, 1 << 20, 60 * SEC);
        assert_eq!(meta.length, 1 << 20);
        assert_eq!(meta.ttl_ns, 60 * SEC);
        assert_ne!(meta.rkey, meta.lkey);
    }

    #[test]
    fn register_zero_length_rejected() {
        let mut k = SecurityKernel::new();
        let mut rng = SplitMix64::new(1);
        let pd = k.create_pd(1);
        assert_eq!(
            k.register_region(pd, 0, Perms::READ, 0, 0, &mut rng),
            Err(RegisterError::ZeroLength)
        );
    }

    #[test]
    fn register_on_dead_pd_rejected() {
        let mut k = SecurityKernel::new();
        let mut rng = SplitMix64::new(1);
        let pd = k.create_pd(1);
        k.destroy_pd(pd);
        assert_eq!(
            k.register_region(pd, 4096, Perms::READ, 0, 0, &mut rng),
            Err(RegisterError::PdDead)
        );
    }

    #[test]
    fn ttl_zero_never_expires() {
        let (k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        let far_future = u64::MAX / 2;
        assert!(k
            .validate(meta.rkey, 0, 4096, AccessKind::Read, None, far_future)
            .is_allow());
    }

    #[test]
    fn validate_exact_range_allows() {
        let (k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        assert_eq!(
            k.validate(meta.rkey, 0, 4096, AccessKind::Read, None, 1),
            Decision::Allow { mr_id: meta.mr_id }
        );
    }

    #[test]
    fn validate_one_past_end_denies_oob() {
        let (k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        assert_eq!(
            k.validate(meta.rkey, 0, 4097, AccessKind::Read, None, 1),
            Decision::Deny(DenyReason::OutOfBounds)
        );
    }

    #[test]
    fn validate_missing_perm_denies() {
        let (k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        assert_eq!(
            k.validate(meta.rkey, 0, 4096, AccessKind::Write, None, 1),
            Decision::Deny(DenyReason::Perm)
        );
    }

    #[test]
    fn validate_expired_region_denies() {
        let (k, meta) = kernel_with_region(Perms::READ, 4096, SEC);
        assert!(k
            .validate(meta.rkey, 0, 1, AccessKind::Read, None, SEC / 2)
            .is_allow());
        assert_eq!(
            k.validate(meta.rkey, 0, 1, AccessKind::Read, None, 2 * SEC),
            Decision::Deny(DenyReason::Expired)
        );
    }

    #[test]
    fn unknown_key_denies() {
        let (k, _) = kernel_with_region(Perms::READ, 4096, 0);
        assert_eq!(
            k.validate(0xDEAD_BEEF, 0, 1, AccessKind::Read, None, 0),
            Decision::Deny(DenyReason::UnknownKey)
        );
    }

    #[test]
    fn deregistered_region_denies_forever() {
        let (mut k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        k.deregister_region(meta.mr_id).unwrap();
        assert_eq!(
            k.validate(meta.rkey, 0, 1, AccessKind::Read, None, 0),
            Decision::Deny(DenyReason::Revoked)
        );
    }

    #[test]
    fn token_scope_enforced() {
        let (mut k, meta) = kernel_with_region(Perms::READ_WRITE, 8192, 0);
        let mut rng = SplitMix64::new(2);
        let tok = k
            .issue_token(7, meta.mr_id, 0, 4096, Perms::READ, 5 * SEC, 0, &mut rng)
            .unwrap();
        assert!(k
            .validate(tok.nonce, 0, 4096, AccessKind::Read, None, 0)
            .is_allow());
        // past scope end, within region
        assert_eq!(
            k.validate(tok.nonce, 4096, 1, AccessKind::Read, None, 0),
            Decision::Deny(DenyReason::OutOfBounds)
        );
        // scoped perms narrower than region perms
        assert_eq!(
            k.validate(tok.nonce, 0, 1, AccessKind::Write, None, 0),
            Decision::Deny(DenyReason::Perm)
        );
        // expiry
        assert_eq!(
            k.validate(tok.nonce, 4096, 1, AccessKind::Read, None, 6 * SEC),
            Decision::Deny(DenyReason::OutOfBounds),
            "bounds still reported first"
        );
        assert_eq!(
            k.validate(tok.nonce, 0, 1, AccessKind::Read, None, 6 * SEC),
            Decision::Deny(DenyReason::Expired)
        );
    }

    #[test]
    fn token_issue_guards() {
        let (mut k, meta) = kernel_with_region(Perms::READ, 8192, 0);
        let mut rng = SplitMix64::new(3);
        assert_eq!(
            k.issue_token(7, meta.mr_id, 0, 16384, Perms::READ, 0, 0, &mut rng)
                .unwrap_err(),
            IssueError::ScopeExceedsRegion
        );
        assert_eq!(
            k.issue_token(7, meta.mr_id, 0, 4096, Perms::WRITE, 0, 0, &mut rng)
                .unwrap_err(),
            IssueError::PermEscalation
        );
        assert_eq!(
            k.issue_token(8, meta.mr_id, 0, 4096, Perms::READ, 0, 0, &mut rng)
                .unwrap_err(),
            IssueError::ForeignRegion,
            "tenant 8 cannot scope tenant 7's region"
        );
    }

    #[test]
    fn revoke_flips_allow_to_deny_and_tombstones() {
        let (mut k, meta) = kernel_with_region(Perms::READ, 4096, 0);
        let mut rng = SplitMix64::new(4);
        let tok = k
            .issue_token(7, meta.mr_id, 0, 4096, Perms::READ, 0, 0, &mut rng)
            .unwrap();
        assert!(k
            .validate(tok.nonce, 0, 1, AccessKind::Read, None, 0)
            .is_allow());
        k.revoke_token(tok.token_id).unwrap();
        assert_eq!(
            k.validate(tok.nonce, 0, 1, AccessKind::Read, None, 0),
            Decision::Deny(DenyReason::Revoked)
        );
        assert_eq!(
            k.revoke_token(tok.token_id).unwrap_err(),
            RevokeError::UnknownToken
        );
    }

    #[test]
    fn tenant_mismatch_denies_perm() {
        let (k, meta) = kernel_with_region(Perms::READ_WRITE, 4096, 0);
        assert!(k
            .validate(meta.rkey, 0, 1, AccessKind::Read, Some(7), 0)
            .is_allow());
        assert_eq!(
            k.validate(meta.rkey, 0, 1, AccessKind::Read, Some(8), 0),
            Decision::Deny(DenyReason::Perm)
        );
    }

    #[test]
    fn keys_never_reissued() {
        let mut k = SecurityKernel::new();
        let mut rng = SplitMix64::new(5);
        let pd = k.create_pd(1);
        let mut seen: HashSet<Key> = HashSet::new();
        let mut regions: Vec<u64> = Vec::new();
        for i in 0..2000 {
            let m = k
                .register_region(pd, 64, Perms::READ_WRITE, 0, i, &mut rng)
                .unwrap();
            assert!(seen.insert(m.lkey), "lkey reused");
            assert!(seen.insert(m.rkey), "rkey reused");
            regions.push(m.mr_id);
            if i % 3 == 0 {
                k.deregister_region(m.mr_id).unwrap();
            }
        }
        assert_eq!(k.issued_key_count(), 4000);
    }

    // Security totality: every random probe yields a decision and ALLOW
    // implies all checks genuinely pass.
    #[test]
    fn validate_total_and_sound_on_random_probes() {
        let mut k = SecurityKernel::new();
        let mut rng = SplitMix64::new(0xA11CE);
        let pd = k.create_pd(1);
        let mut live = Vec::new();
        for i in 0..32 {
            let perms = match i % 3 {
                0 => Perms::READ,
                1 => Perms::WRITE,
                _ => Perms::READ_WRITE,
            };
            let ttl = if i % 4 == 0 { 0 } else { (i as u64) * SEC };
            let m = k
                .register_region(pd, 1 + (i as u64) * 513, perms, ttl, 0, &mut rng)
                .unwrap();
            if i % 5 == 0 {
                let t = k
                    .issue_token(1, m.mr_id, 0, m.length / 2 + 1, perms, SEC, 0, &mut rng)
                    .unwrap();
                live.push(t.nonce);
            }
            if i % 7 == 0 {
                k.deregister_region(m.mr_id).unwrap();
            }
            live.push(m.rkey);
        }

        let mut probe = SplitMix64::new(0xB0B);
        for n in 0..100_000u64 {
            let key = if n % 2 == 0 {
                live[(probe.next_u64() as usize) % live.len()]
            } else {
                probe.next_u64()
            };
            let offset = probe.next_u64() >> (probe.next_u64() % 64);
            let len = probe.next_u64() >> (probe.next_u64() % 64);
            let kind = if probe.next_u64() & 1 == 0 {
                AccessKind::Read
            } else {
                AccessKind::Write
            };
            let now = probe.next_u64() % (100 * SEC);
            let decision = k.validate(key, offset, len, kind, None, now);
            if let Decision::Allow { mr_id } = decision {
                let region = k.region(mr_id).expect("allowed key must map to a region");
                let end = offset.checked_add(len).expect("no overflow on allow");
                assert!(end <= region.length);
                assert!(!region.expired(now));
            }
        }
    }
}
