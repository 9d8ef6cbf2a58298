//! `key = value` run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use wlmsc::correction::CorrectOptions;
use wlmsc::model::{ModelConfig, TrainConfig};
use wlmsc::noisesim::NoiseProfile;
use wlmsc::warping::WarpPolicy;

/// A configuration problem; reported as a usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Which transcription a hypothesis set is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Asr,
    Human,
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "asr" => Ok(Source::Asr),
            "human" => Ok(Source::Human),
            _ => Err(format!("unknown source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub min_count: usize,
    pub model_overrides: Vec<(String, String)>,
    pub warp: WarpPolicy,
    /// Independent warpings of the pretraining corpus.
    pub warp_epochs: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub finetune_sources: Vec<Source>,
    pub asr: NoiseProfile,
    pub human: NoiseProfile,
    pub split: [f64; 3],
    pub correct: CorrectOptions,
    pub source: Source,
    pub confidence_edges: Vec<f64>,
    pub wer_edges: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            min_count: 1,
            model_overrides: Vec::new(),
            warp: WarpPolicy::default(),
            warp_epochs: 4,
            pretrain: TrainConfig {
                steps: 3000,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                steps: 1500,
                ..TrainConfig::default()
            },
            finetune_sources: vec![Source::Asr],
            asr: NoiseProfile::asr_default(),
            human: NoiseProfile::human_default(),
            split: [0.8, 0.1, 0.1],
            correct: CorrectOptions::default(),
            source: Source::Asr,
            confidence_edges: vec![0.2, 0.4, 0.6, 0.8],
            wer_edges: vec![0.25, 0.5, 1.0],
        }
    }
}

fn list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow::anyhow!("{e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(UsageError(format!("config line {}: expected key = value", n + 1)).into());
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| UsageError(format!("config line {}: {e:#}", n + 1)))?;
        }
        cfg.validate().map_err(|e| UsageError(format!("{e:#}")))?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, name) = key.split_once('.').unwrap_or(("", key));
        let known = match section {
            "vocab" if name == "min_count" => {
                self.min_count = parse(value)?;
                true
            }
            "model" => {
                // Checked against a throwaway config now, applied once the
                // vocabulary size is known.
                let ok = ModelConfig::desk(1).set(name, value)?;
                if ok {
                    self.model_overrides.push((name.to_string(), value.to_string()));
                }
                ok
            }
            "warp" if name == "epochs" => {
                self.warp_epochs = parse(value)?;
                true
            }
            "warp" => self.warp.set(name, value)?,
            "pretrain" => self.pretrain.set(name, value)?,
            "finetune" if name == "sources" => {
                self.finetune_sources = value
                    .split(',')
                    .map(|s| parse(s.trim()))
                    .collect::<Result<_>>()?;
                true
            }
            "finetune" => self.finetune.set(name, value)?,
            "asr" => self.asr.set(name, value)?,
            "human" => self.human.set(name, value)?,
            "split" => {
                let i = match name {
                    "train" => 0,
                    "dev" => 1,
                    "test" => 2,
                    _ => bail!("unknown key {key}"),
                };
                self.split[i] = parse(value)?;
                true
            }
            "correct" => match name {
                "op_threshold" => {
                    self.correct.op_threshold = parse(value)?;
                    true
                }
                "use_additional" => {
                    self.correct.use_additional = parse(value)?;
                    true
                }
                "source" => {
                    self.source = parse(value)?;
                    true
                }
                _ => false,
            },
            "eval" => match name {
                "confidence_edges" => {
                    self.confidence_edges = list(value)?;
                    true
                }
                "wer_edges" => {
                    self.wer_edges = list(value)?;
                    true
                }
                _ => false,
            },
            _ => false,
        };
        if !known {
            bail!("unknown key {key}");
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.warp.validate()?;
        self.asr.validate()?;
        self.human.validate()?;
        for edges in [&self.confidence_edges, &self.wer_edges] {
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                bail!("bin edges must increase: {edges:?}");
            }
        }
        if self.wer_edges.first().is_some_and(|&e| e <= 0.0) {
            bail!("WER bin edges must be positive");
        }
        if self.warp_epochs == 0 {
            bail!("warp.epochs must be positive");
        }
        if self.finetune_sources.is_empty() {
            bail!("finetune.sources is empty");
        }
        Ok(())
    }

    /// Model hyperparameters for a vocabulary of `vocab_size`, with overrides.
    pub fn model_config(&self, vocab_size: usize, init_seed: u64) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::desk(vocab_size);
        cfg.init_seed = init_seed;
        for (k, v) in &self.model_overrides {
            cfg.set(k, v)?;
        }
        cfg.vocab_size = vocab_size;
        cfg.validate()?;
        Ok(cfg)
    }
}
