use serde::{Deserialize, Serialize};

use crate::PoolError;

/// Pool limits and timing. Every field has a default, so a config file
/// only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub max_instances: usize,
    /// Creation is refused once resident memory reaches this many MiB.
    pub memory_cap_mb: Option<u64>,
    /// Pause after each executed step, for runtimes that need to settle.
    pub settle_delay_ms: u64,
    /// Responses remembered for token replay.
    pub idempotency_cache: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { max_instances: 1024, memory_cap_mb: Some(4096), settle_delay_ms: 0, idempotency_cache: 65_536 }
    }
}

impl PoolConfig {
    pub fn from_toml(text: &str) -> Result<Self, PoolError> {
        toml::from_str(text).map_err(|e| PoolError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = PoolConfig::from_toml("max_instances = 8\nsettle_delay_ms = 800\n").unwrap();
        assert_eq!(c.max_instances, 8);
        assert_eq!(c.settle_delay_ms, 800);
        assert_eq!(c.memory_cap_mb, PoolConfig::default().memory_cap_mb);
        assert!(PoolConfig::from_toml("bogus = 1").is_err());
    }
}
