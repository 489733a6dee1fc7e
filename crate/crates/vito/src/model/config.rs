//! Architecture hyperparameters.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Spatial reduction between the input and the latent map: one stem
/// downsample plus one per encoder block.
pub const DIVISIBILITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViTOConfig {
    /// Stem width plus the three encoder stage widths.
    pub channel_widths: [usize; 4],
    pub vit_blocks: usize,
    pub vit_heads: usize,
    pub vit_embed_dim: usize,
    pub vit_mlp_dim: usize,
    pub sr_factor: usize,
    pub divisibility: usize,
}

impl ViTOConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channel_widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidConfig("channel widths must be positive".into()));
        }
        if self.vit_blocks == 0 || self.vit_heads == 0 || self.vit_embed_dim == 0 {
            return Err(Error::InvalidConfig("ViT sizes must be positive".into()));
        }
        if self.vit_embed_dim % self.vit_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "embed dim {} not divisible by {} heads",
                self.vit_embed_dim, self.vit_heads
            )));
        }
        if self.sr_factor < 1 {
            return Err(Error::InvalidConfig("sr_factor must be >= 1".into()));
        }
        if self.divisibility != DIVISIBILITY {
            return Err(Error::InvalidConfig(format!(
                "divisibility must be {DIVISIBILITY} (stem + 3 encoder downsamples)"
            )));
        }
        Ok(())
    }

    fn with_vit(blocks: usize, heads: usize, embed: usize, mlp: usize, sr: usize) -> Self {
        Self {
            channel_widths: [12, 20, 28, 32],
            vit_blocks: blocks,
            vit_heads: heads,
            vit_embed_dim: embed,
            vit_mlp_dim: mlp,
            sr_factor: sr,
            divisibility: DIVISIBILITY,
        }
    }

    /// Wave-equation scenario: 2 blocks, 2 heads, embed 16, MLP 128.
    pub fn wave(sr_factor: usize) -> Self {
        Self::with_vit(2, 2, 16, 128, sr_factor)
    }

    /// Navier-Stokes scenario: 4 blocks, 8 heads, embed 16, MLP 64.
    pub fn navier_stokes(sr_factor: usize) -> Self {
        Self::with_vit(4, 8, 16, 64, sr_factor)
    }

    /// Darcy scenario: 2 blocks, 2 heads, embed 16, MLP 128.
    pub fn darcy(sr_factor: usize) -> Self {
        Self::with_vit(2, 2, 16, 128, sr_factor)
    }

    /// Smallest usable network, for gradient checks and fast tests.
    pub fn tiny(sr_factor: usize) -> Self {
        Self {
            channel_widths: [2, 2, 2, 2],
            vit_blocks: 1,
            vit_heads: 1,
            vit_embed_dim: 4,
            vit_mlp_dim: 8,
            sr_factor,
            divisibility: DIVISIBILITY,
        }
    }

    pub fn to_kv_string(&self) -> String {
        let w = self.channel_widths;
        format!(
            "channel_widths={},{},{},{}\nvit_blocks={}\nvit_heads={}\nvit_embed_dim={}\nvit_mlp_dim={}\nsr_factor={}\ndivisibility={}\n",
            w[0], w[1], w[2], w[3],
            self.vit_blocks, self.vit_heads, self.vit_embed_dim, self.vit_mlp_dim,
            self.sr_factor, self.divisibility
        )
    }

    pub fn from_kv_string(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("bad config line '{line}'"))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<String> {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("missing config key '{k}'")))
        };
        let parse_usize = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value for '{k}'")))
        };
        let widths_s = get("channel_widths")?;
        let parts: Vec<usize> = widths_s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig("bad channel_widths".into()))?;
        if parts.len() != 4 {
            return Err(Error::InvalidConfig("channel_widths needs 4 entries".into()));
        }
        let cfg = Self {
            channel_widths: [parts[0], parts[1], parts[2], parts[3]],
            vit_blocks: parse_usize("vit_blocks")?,
            vit_heads: parse_usize("vit_heads")?,
            vit_embed_dim: parse_usize("vit_embed_dim")?,
            vit_mlp_dim: parse_usize("vit_mlp_dim")?,
            sr_factor: parse_usize("sr_factor")?,
            divisibility: parse_usize("divisibility")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for cfg in [
            ViTOConfig::wave(8),
            ViTOConfig::navier_stokes(8),
            ViTOConfig::darcy(8),
            ViTOConfig::tiny(1),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn heads_must_divide_embed() {
        let mut cfg = ViTOConfig::darcy(8);
        cfg.vit_heads = 3;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn kv_roundtrip() {
        let cfg = ViTOConfig::navier_stokes(4);
        let back = ViTOConfig::from_kv_string(&cfg.to_kv_string()).unwrap();
        assert_eq!(cfg, back);
    }
}
