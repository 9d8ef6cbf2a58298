use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_dim: usize,
    /// Cap on the length of each hypothesis segment.
    pub max_positions: usize,
    /// Top hypothesis plus additional ones.
    pub max_hypotheses: usize,
    pub dropout_rate: f64,
    pub use_slot_embedding: bool,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            hidden_dim: 128,
            num_layers: 4,
            num_heads: 4,
            feedforward_dim: 512,
            max_positions: 32,
            max_hypotheses: 5,
            dropout_rate: 0.1,
            use_slot_embedding: true,
            init_seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("feedforward_dim", self.feedforward_dim),
            ("max_positions", self.max_positions),
            ("max_hypotheses", self.max_hypotheses),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Applies a `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        match key {
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "num_layers" => self.num_layers = parse(key, value)?,
            "num_heads" => self.num_heads = parse(key, value)?,
            "feedforward_dim" => self.feedforward_dim = parse(key, value)?,
            "max_positions" => self.max_positions = parse(key, value)?,
            "max_hypotheses" => self.max_hypotheses = parse(key, value)?,
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            "use_slot_embedding" => self.use_slot_embedding = parse(key, value)?,
            "init_seed" => self.init_seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
