//! Tenant control: identities, shared secrets, and per-tenant QoS limits.
//!
//! The registry is loaded from a tenants file at daemon start, one tenant
//! per line:
//!
//! ```text
//! name:secret_hex[:rate_bytes_per_s:burst_bytes]
//! ```
//!
//! Secrets are 32 bytes hex-encoded; omitted rate/burst means the tenant
//! is not rate-limited. Tenant ids follow file order starting at 1, which
//! keeps ids stable across restarts as long as the file is append-only.

use std::collections::HashMap;
use std::path::Path;

use crate::auth::{secret_from_hex, Secret};
use crate::config::{parse_size, ConfigError};

#[derive(Debug, Clone)]
pub struct Tenant {
    pub tenant_id: u64,
    pub name: String,
    pub secret: Secret,
    /// (rate bytes/s, burst bytes); None = unlimited.
    pub qos: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TenancyError {
    InvalidName,
    DuplicateName,
}

#[derive(Default)]
pub struct TenantRegistry {
    by_id: HashMap<u64, Tenant>,
    by_name: HashMap<String, u64>,
    next_id: u64,
}

impl TenantRegistry {
    pub fn new() -> Self {
        Self {
            by_id: HashMap::new(),
            by_name: HashMap::new(),
            next_id: 1,
        }
    }

    /// Creates a tenant with a fresh random secret.
    pub fn create(&mut self, name: &str) -> Result<Tenant, TenancyError> {
        let mut secret = [0u8; 32];
        for chunk in secret.chunks_mut(8) {
            chunk.copy_from_slice(&rand::random::<u64>().to_le_bytes());
        }
        self.insert(name, secret, None)
    }

    pub fn insert(
        &mut self,
        name: &str,
        secret: Secret,
        qos: Option<(u64, u64)>,
    ) -> Result<Tenant, TenancyError> {
        if name.is_empty() || name.contains(':') || name.contains('\n') {
            return Err(TenancyError::InvalidName);
        }
        if self.by_name.contains_key(name) {
            return Err(TenancyError::DuplicateName);
        }
        let tenant = Tenant {
            tenant_id: self.next_id,
            name: name.to_string(),
            secret,
            qos,
        };
        self.next_id += 1;
        self.by_name.insert(tenant.name.clone(), tenant.tenant_id);
        self.by_id.insert(tenant.tenant_id, tenant.clone());
        Ok(tenant)
    }

    pub fn get(&self, tenant_id: u64) -> Option<&Tenant> {
        self.by_id.get(&tenant_id)
    }

    pub fn get_by_name(&self, name: &str) -> Option<&Tenant> {
        self.by_name.get(name).and_then(|id| self.by_id.get(id))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut reg = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(':').collect();
            let bad = |what: &str| ConfigError {
                message: format!("tenants file line {}: {}", lineno + 1, what),
            };
            if fields.len() != 2 && fields.len() != 4 {
                return Err(bad("expected name:secret_hex[:rate:burst]"));
            }
            let secret = secret_from_hex(fields[1]).ok_or_else(|| bad("bad secret hex"))?;
            let qos = if fields.len() == 4 {
                let rate = parse_size(fields[2]).ok_or_else(|| bad("bad rate"))?;
                let burst = parse_size(fields[3]).ok_or_else(|| bad("bad burst"))?;
                Some((rate, burst))
            } else {
                None
            };
            reg.insert(fields[0], secret, qos)
                .map_err(|e| bad(&format!("{:?}", e)))?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            message: format!("cannot read tenants file {}: {}", path.display(), e),
        })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::secret_to_hex;

    #[test]
    fn create_assigns_ids_and_secrets() {
        let mut reg = TenantRegistry::new();
        let alice = reg.create("alice").unwrap();
        assert_eq!(alice.name, "alice");
        assert_eq!(alice.tenant_id, 1);
        let bob = reg.create("bob").unwrap();
        assert_eq!(bob.tenant_id, 2);
        assert_ne!(alice.secret, bob.secret);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut reg = TenantRegistry::new();
        reg.create("alice").unwrap();
        assert_eq!(reg.create("alice").unwrap_err(), TenancyError::DuplicateName);
    }

    #[test]
    fn empty_name_rejected() {
        let mut reg = TenantRegistry::new();
        assert_eq!(reg.create("").unwrap_err(), TenancyError::InvalidName);
    }

    #[test]
    fn file_roundtrip_with_qos() {
        let secret = [0x11u8; 32];
        let text = format!(
            "# comment\nalice:{}\nbob:{}:1MiB:4MiB\n",
            secret_to_hex(&secret),
            secret_to_hex(&secret)
        );
        let reg = TenantRegistry::parse(&text).unwrap();
        assert_eq!(reg.len(), 2);
        let alice = reg.get_by_name("alice").unwrap();
        assert_eq!(alice.tenant_id, 1);
        assert_eq!(alice.qos, None);
        let bob = reg.get_by_name("bob").unwrap();
        assert_eq!(bob.qos, Some((1 << 20, 4 << 20)));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(TenantRegistry::parse("alice").is_err());
        assert!(TenantRegistry::parse("alice:nothex").is_err());
        assert!(TenantRegistry::parse("alice:11:1:2:3").is_err());
    }
}
