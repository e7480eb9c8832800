use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamConfig;
use crate::vae::{CodecConfig, PretrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// The whole dataset as one stream, visited `passes` times.
    #[default]
    Batch,
    /// Classes grouped into consecutive streams.
    DisjointStreams,
    /// Pretraining on some classes, then streams mixing in a held-out class.
    Contamination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Passes over the data in batch mode.
    pub passes: usize,
    /// Classes per stream group in disjoint-streams mode.
    pub classes_per_stream: usize,
    /// Fraction of each class group kept out of training for validation.
    pub holdout_fraction: f64,
    /// Known classes used for pretraining in contamination mode; empty means
    /// every class except `novel_class`.
    pub pretrain_classes: Vec<usize>,
    pub novel_class: usize,
    /// Share of each contamination stream drawn from the novel class.
    pub fraction: f64,
    pub contamination_streams: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Batch,
            passes: 5,
            classes_per_stream: 2,
            holdout_fraction: 0.0,
            pretrain_classes: Vec::new(),
            novel_class: 0,
            fraction: 0.05,
            contamination_streams: 1,
        }
    }
}

/// Normal–Wishart base prior `(0, β₀, D + nu0_offset, scale · I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub beta0: f64,
    pub nu0_offset: f64,
    pub scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta0: 0.2,
            nu0_offset: 2.0,
            scale: 1.0,
        }
    }
}

/// Every knob of a run. Loaded from TOML with dotted keys such as
/// `stream.birth.k_prime = 10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub latent_dim: usize,
    /// Rows per stream in the streaming protocols.
    pub stream_size: usize,
    /// Rows per mini-batch in batch mode.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub alpha0: f64,
    pub truncation_max: usize,
    /// Multiplies every input value before it reaches the codec.
    pub input_scale: f64,
    pub prior: PriorConfig,
    pub codec: CodecConfig,
    /// Autoencoder warm start of the codec on the first stream.
    pub pretrain: PretrainConfig,
    pub stream: StreamConfig,
    pub protocol: ProtocolConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            latent_dim: 2,
            stream_size: 1000,
            batch_size: 1500,
            learning_rate: 2e-3,
            lr_decay: 0.9,
            alpha0: 1.0,
            truncation_max: 50,
            input_scale: 1.0,
            prior: PriorConfig::default(),
            codec: CodecConfig::default(),
            pretrain: PretrainConfig::default(),
            stream: StreamConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets one dotted key, e.g. `stream.replay.enabled=false`. The value is
    /// read as a TOML literal, falling back to a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = parse_literal(value);
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for p in path {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
        }
        table.insert(last.to_string(), parsed);
        let cfg: Self = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("latent_dim", self.latent_dim),
            ("stream_size", self.stream_size),
            ("batch_size", self.batch_size),
            ("truncation_max", self.truncation_max),
            ("protocol.passes", self.protocol.passes),
            ("protocol.classes_per_stream", self.protocol.classes_per_stream),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::Config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Config("input_scale must be positive and finite".into()));
        }
        if !(self.prior.beta0 > 0.0 && self.prior.scale > 0.0 && self.prior.nu0_offset > -1.0) {
            return Err(Error::Config("prior needs beta0 > 0, scale > 0 and nu0_offset > -1".into()));
        }
        if !(0.0..1.0).contains(&self.protocol.holdout_fraction) {
            return Err(Error::Config("protocol.holdout_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.protocol.fraction) {
            return Err(Error::Config("protocol.fraction must lie in [0, 1]".into()));
        }
        self.pretrain.validate()?;
        self.stream.validate()
    }
}

fn parse_literal(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just written"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.stream.minibatches, 2);
        assert_eq!(cfg.stream.vae_steps, 10);
        assert_eq!(cfg.learning_rate, 2e-3);
    }

    #[test]
    fn dotted_keys() {
        let cfg = RunConfig::from_toml(
            "seed = 4\nstream.birth.k_prime = 6\nstream.replay.enabled = false\nprotocol.kind = \"disjoint-streams\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.stream.birth.k_prime, 6);
        assert!(!cfg.stream.replay.enabled);
        assert_eq!(cfg.protocol.kind, ProtocolKind::DisjointStreams);
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.set("stream.replay.samples_per_minibatch", "7").unwrap();
        cfg.set("protocol.kind", "contamination").unwrap();
        cfg.set("codec.hidden", "[8, 4]").unwrap();
        assert_eq!(cfg.stream.replay.samples_per_minibatch, 7);
        assert_eq!(cfg.protocol.kind, ProtocolKind::Contamination);
        assert_eq!(cfg.codec.hidden, vec![8, 4]);
        assert!(matches!(cfg.set("learning_rate", "-1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("no_such_key", "1"), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("stream_size = 0").is_err());
        assert!(RunConfig::from_toml("stream.birth.collect_threshold = 1.5").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }
}
