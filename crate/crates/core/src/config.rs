//! Runtime configuration: scale guards and transcript detail limits.

use serde::{Deserialize, Serialize};

/// Knobs shared by every operation that chooses or refuses a level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Config {
    /// Largest atom-mask level any operation will materialize. A level-`n`
    /// mask holds `2^(n+1)` atom bits, so the default of 22 caps masks at
    /// one MiB. Operations needing more refuse with a [`ScaleReport`]
    /// instead of attempting the allocation.
    pub max_level: u32,
    /// Cap on the element count of a generated finite algebra.
    pub closure_cap: usize,
    /// Levels up to this bound get full per-atom certificate records;
    /// beyond it certificates keep extremal witnesses plus summary counts.
    pub transcript_atom_level: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config { max_level: 22, closure_cap: 1 << 16, transcript_atom_level: 12 }
    }
}

/// Emitted instead of attempting masks beyond [`Config::max_level`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
#[error("refusing level {required_level} (cap {max_level}): a mask would hold {mask_bits} atom bits (~{approx_bytes} bytes per set)")]
pub struct ScaleReport {
    pub required_level: u32,
    pub max_level: u32,
    pub mask_bits: u64,
    pub approx_bytes: u64,
}

impl ScaleReport {
    pub fn for_level(required_level: u32, cfg: &Config) -> Self {
        let mask_bits = 1u64 << (required_level + 1);
        ScaleReport {
            required_level,
            max_level: cfg.max_level,
            mask_bits,
            approx_bytes: mask_bits / 8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cap_sizes() {
        let cfg = Config::default();
        let r = ScaleReport::for_level(30, &cfg);
        assert_eq!(r.mask_bits, 1 << 31);
        assert_eq!(r.approx_bytes, 256 * 1024 * 1024);
    }
}
