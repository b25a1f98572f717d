//! Line-oriented `key = value` configuration files used by `ros2d` and the
//! client tools. Blank lines and `#` comments are ignored; later keys
//! override earlier ones.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError {
        message: message.into(),
    }
}

#[derive(Debug, Default, Clone)]
pub struct KvFile {
    values: HashMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("line {}: expected key = value", lineno + 1)));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| err(format!("missing key '{}'", key)))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|v| parse_size(v).ok_or_else(|| err(format!("bad number for '{}': {}", key, v))))
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }
}

/// Parses "4096", "64KiB", "1MiB", "2GiB" (case-insensitive suffix; KB/MB/GB
/// treated as their binary siblings — this is a storage tool).
pub fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let lower = s.to_ascii_lowercase();
    let (digits, mult) = if let Some(d) = lower.strip_suffix("gib").or(lower.strip_suffix("gb")) {
        (d, 1u64 << 30)
    } else if let Some(d) = lower.strip_suffix("mib").or(lower.strip_suffix("mb")) {
        (d, 1u64 << 20)
    } else if let Some(d) = lower.strip_suffix("kib").or(lower.strip_suffix("kb")) {
        (d, 1u64 << 10)
    } else if let Some(d) = lower.strip_suffix('g') {
        (d, 1u64 << 30)
    } else if let Some(d) = lower.strip_suffix('m') {
        (d, 1u64 << 20)
    } else if let Some(d) = lower.strip_suffix('k') {
        (d, 1u64 << 10)
    } else {
        (lower.as_str(), 1)
    };
    let n: u64 = digits.trim().parse().ok()?;
    n.checked_mul(mult)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_overrides() {
        let kv = KvFile::parse(
            "# comment\nlisten_ctrl = 127.0.0.1:7440\n\npool.nvme_bytes = 256MiB\nlisten_ctrl = 127.0.0.1:7441\n",
        )
        .unwrap();
        assert_eq!(kv.get("listen_ctrl"), Some("127.0.0.1:7441"));
        assert_eq!(kv.get_u64("pool.nvme_bytes").unwrap(), Some(256 << 20));
        assert!(kv.get("missing").is_none());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvFile::parse("no equals sign here").is_err());
    }

    #[test]
    fn size_suffixes() {
        assert_eq!(parse_size("4096"), Some(4096));
        assert_eq!(parse_size("64KiB"), Some(64 << 10));
        assert_eq!(parse_size("1MiB"), Some(1 << 20));
        assert_eq!(parse_size("1mb"), Some(1 << 20));
        assert_eq!(parse_size("2GiB"), Some(2 << 30));
        assert_eq!(parse_size("8m"), Some(8 << 20));
        assert_eq!(parse_size("junk"), None);
    }
}
