//! Parameter storage. Every tensor lives in one flat list whose order is the
//! declaration (and checkpoint) order.

use rand::Rng;

use super::config::ModelConfig;
use super::tensor::{cast, Float};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::warping::WarpOp;

pub const TOKEN_EMBEDDING: usize = 0;
pub const POSITION_EMBEDDING: usize = 1;
const FIRST_LAYER: usize = 2;
pub const TENSORS_PER_LAYER: usize = 12;

const LAYER_NAMES: [&str; TENSORS_PER_LAYER] = [
    "ln1_gain",
    "ln1_bias",
    "qkv_weight",
    "qkv_bias",
    "attn_out_weight",
    "attn_out_bias",
    "ln2_gain",
    "ln2_bias",
    "ff_in_weight",
    "ff_in_bias",
    "ff_out_weight",
    "ff_out_bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Matrices and embeddings receive weight decay; gains and biases do not.
    pub fn decays(&self) -> bool {
        self.init == Init::Normal
    }
}

/// Tensor names and shapes in declaration order.
pub fn layout(config: &ModelConfig) -> Vec<TensorSpec> {
    let h = config.hidden_dim;
    let f = config.feedforward_dim;
    let mut specs = vec![
        TensorSpec::new("token_embedding", &[config.vocab_size, h], Init::Normal),
        TensorSpec::new("position_embedding", &[config.max_positions, h], Init::Normal),
    ];
    for l in 0..config.num_layers {
        let shapes: [(&[usize], Init); TENSORS_PER_LAYER] = [
            (&[h], Init::Ones),
            (&[h], Init::Zeros),
            (&[h, 3 * h], Init::Normal),
            (&[3 * h], Init::Zeros),
            (&[h, h], Init::Normal),
            (&[h], Init::Zeros),
            (&[h], Init::Ones),
            (&[h], Init::Zeros),
            (&[h, f], Init::Normal),
            (&[f], Init::Zeros),
            (&[f, h], Init::Normal),
            (&[h], Init::Zeros),
        ];
        for (name, (shape, init)) in LAYER_NAMES.iter().zip(shapes) {
            specs.push(TensorSpec::new(format!("layers.{l}.{name}"), shape, init));
        }
    }
    specs.extend([
        TensorSpec::new("final_ln_gain", &[h], Init::Ones),
        TensorSpec::new("final_ln_bias", &[h], Init::Zeros),
        TensorSpec::new("token_head_weight", &[h, config.vocab_size], Init::Normal),
        TensorSpec::new("token_head_bias", &[config.vocab_size], Init::Zeros),
        TensorSpec::new("op_head_weight", &[h, WarpOp::COUNT], Init::Normal),
        TensorSpec::new("op_head_bias", &[WarpOp::COUNT], Init::Zeros),
    ]);
    if config.use_slot_embedding {
        specs.push(TensorSpec::new(
            "slot_embedding",
            &[config.max_hypotheses, h],
            Init::Normal,
        ));
    }
    specs
}

/// Borrowed tensors of one encoder layer.
pub struct Layer<'a, T> {
    pub ln1_gain: &'a [T],
    pub ln1_bias: &'a [T],
    pub qkv_weight: &'a [T],
    pub qkv_bias: &'a [T],
    pub attn_out_weight: &'a [T],
    pub attn_out_bias: &'a [T],
    pub ln2_gain: &'a [T],
    pub ln2_bias: &'a [T],
    pub ff_in_weight: &'a [T],
    pub ff_in_bias: &'a [T],
    pub ff_out_weight: &'a [T],
    pub ff_out_bias: &'a [T],
}

/// Mutably borrowed tensors of one encoder layer (used for gradients).
pub struct LayerMut<'a, T> {
    pub ln1_gain: &'a mut [T],
    pub ln1_bias: &'a mut [T],
    pub qkv_weight: &'a mut [T],
    pub qkv_bias: &'a mut [T],
    pub attn_out_weight: &'a mut [T],
    pub attn_out_bias: &'a mut [T],
    pub ln2_gain: &'a mut [T],
    pub ln2_bias: &'a mut [T],
    pub ff_in_weight: &'a mut [T],
    pub ff_in_bias: &'a mut [T],
    pub ff_out_weight: &'a mut [T],
    pub ff_out_bias: &'a mut [T],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    tensors: Vec<Vec<T>>,
}

fn truncated_normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    // Box-Muller with rejection outside two standard deviations.
    loop {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<T: Float> ModelParams<T> {
    /// Seeded initialization: weights ~ truncated N(0, 0.02²), gains 1, biases 0.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(config.init_seed);
        let tensors = layout(config)
            .iter()
            .map(|spec| {
                (0..spec.numel())
                    .map(|_| match spec.init {
                        Init::Normal => cast(truncated_normal(&mut rng, 0.02)),
                        Init::Zeros => T::zero(),
                        Init::Ones => T::one(),
                    })
                    .collect()
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = layout(config)
            .iter()
            .map(|spec| vec![T::zero(); spec.numel()])
            .collect();
        ModelParams {
            config: config.clone(),
            tensors,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Builds params from tensors in declaration order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Vec<T>>) -> Result<Self> {
        config.validate()?;
        let specs = layout(config);
        if specs.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.numel() != t.len() {
                return Err(Error::Shape(format!(
                    "{}: expected {} values, got {}",
                    spec.name,
                    spec.numel(),
                    t.len()
                )));
            }
        }
        Ok(ModelParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn tensors(&self) -> &[Vec<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.tensors
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        layout(&self.config)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn token_embedding(&self) -> &[T] {
        &self.tensors[TOKEN_EMBEDDING]
    }

    pub fn position_embedding(&self) -> &[T] {
        &self.tensors[POSITION_EMBEDDING]
    }

    fn tail(&self) -> usize {
        FIRST_LAYER + self.config.num_layers * TENSORS_PER_LAYER
    }

    pub fn final_ln(&self) -> (&[T], &[T]) {
        let t = self.tail();
        (&self.tensors[t], &self.tensors[t + 1])
    }

    pub fn token_head(&self) -> (&[T], &[T]) {
        let t = self.tail();
        (&self.tensors[t + 2], &self.tensors[t + 3])
    }

    pub fn op_head(&self) -> (&[T], &[T]) {
        let t = self.tail();
        (&self.tensors[t + 4], &self.tensors[t + 5])
    }

    pub fn slot_embedding(&self) -> Option<&[T]> {
        self.config
            .use_slot_embedding
            .then(|| self.tensors[self.tail() + 6].as_slice())
    }

    pub fn layer(&self, l: usize) -> Layer<'_, T> {
        let b = FIRST_LAYER + l * TENSORS_PER_LAYER;
        let t = &self.tensors[b..b + TENSORS_PER_LAYER];
        Layer {
            ln1_gain: &t[0],
            ln1_bias: &t[1],
            qkv_weight: &t[2],
            qkv_bias: &t[3],
            attn_out_weight: &t[4],
            attn_out_bias: &t[5],
            ln2_gain: &t[6],
            ln2_bias: &t[7],
            ff_in_weight: &t[8],
            ff_in_bias: &t[9],
            ff_out_weight: &t[10],
            ff_out_bias: &t[11],
        }
    }

    pub fn layer_mut(&mut self, l: usize) -> LayerMut<'_, T> {
        let b = FIRST_LAYER + l * TENSORS_PER_LAYER;
        let [ln1_gain, ln1_bias, qkv_weight, qkv_bias, attn_out_weight, attn_out_bias, ln2_gain, ln2_bias, ff_in_weight, ff_in_bias, ff_out_weight, ff_out_bias] =
            &mut self.tensors[b..b + TENSORS_PER_LAYER]
        else {
            unreachable!("layer slice has fixed length")
        };
        LayerMut {
            ln1_gain,
            ln1_bias,
            qkv_weight,
            qkv_bias,
            attn_out_weight,
            attn_out_bias,
            ln2_gain,
            ln2_bias,
            ff_in_weight,
            ff_in_bias,
            ff_out_weight,
            ff_out_bias,
        }
    }

    pub fn token_embedding_mut(&mut self) -> &mut [T] {
        &mut self.tensors[TOKEN_EMBEDDING]
    }

    pub fn position_embedding_mut(&mut self) -> &mut [T] {
        &mut self.tensors[POSITION_EMBEDDING]
    }

    pub fn slot_embedding_mut(&mut self) -> Option<&mut [T]> {
        let t = self.tail();
        if self.config.use_slot_embedding {
            Some(&mut self.tensors[t + 6])
        } else {
            None
        }
    }

    /// (final_ln gain, bias, token head w, b, op head w, b).
    #[allow(clippy::type_complexity)]
    pub fn tail_mut(&mut self) -> (&mut [T], &mut [T], &mut [T], &mut [T], &mut [T], &mut [T]) {
        let t = self.tail();
        let [g, b, tw, tb, ow, ob, ..] = &mut self.tensors[t..] else {
            unreachable!("tail has at least six tensors")
        };
        (g, b, tw, tb, ow, ob)
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.specs()
            .into_iter()
            .zip(&self.tensors)
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(s, _)| s.name)
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .map(|x| {
                let v = x.to_f64_lossy();
                v * v
            })
            .sum()
    }

    /// Converts to another float width.
    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect())
                .collect(),
        }
    }
}
