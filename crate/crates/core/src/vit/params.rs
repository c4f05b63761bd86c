use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::numerics::{Scalar, Tensor};

macro_rules! layer_fields {
    ($m:ident) => {
        $m! {
            norm1_gain => "norm1.gain",
            norm1_bias => "norm1.bias",
            q_weight => "attn.q.weight",
            q_bias => "attn.q.bias",
            k_weight => "attn.k.weight",
            k_bias => "attn.k.bias",
            v_weight => "attn.v.weight",
            v_bias => "attn.v.bias",
            out_weight => "attn.out.weight",
            out_bias => "attn.out.bias",
            norm2_gain => "norm2.gain",
            norm2_bias => "norm2.bias",
            ffn1_weight => "ffn.fc1.weight",
            ffn1_bias => "ffn.fc1.bias",
            ffn2_weight => "ffn.fc2.weight",
            ffn2_bias => "ffn.fc2.bias",
        }
    };
}

macro_rules! define_layer {
    ($($field:ident => $name:literal,)*) => {
        /// Weights of one encoder layer. Projection matrices are stored `in×out`.
        #[derive(Clone, Debug, PartialEq)]
        pub struct LayerWeights<W> {
            $(pub $field: W,)*
        }

        impl<W> LayerWeights<W> {
            pub const NAMES: &'static [&'static str] = &[$($name,)*];

            fn try_map<U, E>(&self, prefix: &str, f: &mut impl FnMut(&str, &W) -> Result<U, E>) -> Result<LayerWeights<U>, E> {
                Ok(LayerWeights { $($field: f(&format!("{prefix}{}", $name), &self.$field)?,)* })
            }

            fn leaves(&self) -> Vec<&W> {
                vec![$(&self.$field,)*]
            }

            fn leaves_mut(&mut self) -> Vec<&mut W> {
                vec![$(&mut self.$field,)*]
            }
        }
    };
}

layer_fields!(define_layer);

/// Every learnable quantity of the classifier, generic over the leaf type
/// (tensors for storage, graph handles during a forward pass).
#[derive(Clone, Debug, PartialEq)]
pub struct VitWeights<W> {
    pub patch_weight: W,
    pub patch_bias: W,
    pub cls_token: W,
    pub pos_embed: W,
    pub layers: Vec<LayerWeights<W>>,
    pub norm_gain: W,
    pub norm_bias: W,
    pub head_weight: W,
    pub head_bias: W,
}

/// Stored model parameters.
pub type ModelParameters<T = f32> = VitWeights<Tensor<T>>;

impl<W> VitWeights<W> {
    /// Applies `f` to every leaf in canonical order, passing its name.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &W) -> Result<U, E>) -> Result<VitWeights<U>, E> {
        Ok(VitWeights {
            patch_weight: f("patch_embed.weight", &self.patch_weight)?,
            patch_bias: f("patch_embed.bias", &self.patch_bias)?,
            cls_token: f("cls_token", &self.cls_token)?,
            pos_embed: f("pos_embed", &self.pos_embed)?,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.try_map(&format!("layers.{i}."), &mut f))
                .collect::<Result<_, E>>()?,
            norm_gain: f("norm.gain", &self.norm_gain)?,
            norm_bias: f("norm.bias", &self.norm_bias)?,
            head_weight: f("head.weight", &self.head_weight)?,
            head_bias: f("head.bias", &self.head_bias)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &W) -> U) -> VitWeights<U> {
        self.try_map(|n, w| Ok::<_, std::convert::Infallible>(f(n, w))).unwrap_or_else(|e| match e {})
    }

    /// Leaves in canonical order (the order of [`VitWeights::names`]).
    pub fn leaves(&self) -> Vec<&W> {
        let mut out = vec![&self.patch_weight, &self.patch_bias, &self.cls_token, &self.pos_embed];
        out.extend(self.layers.iter().flat_map(LayerWeights::leaves));
        out.extend([&self.norm_gain, &self.norm_bias, &self.head_weight, &self.head_bias]);
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut W> {
        let mut out = vec![&mut self.patch_weight, &mut self.patch_bias, &mut self.cls_token, &mut self.pos_embed];
        out.extend(self.layers.iter_mut().flat_map(LayerWeights::leaves_mut));
        out.extend([&mut self.norm_gain, &mut self.norm_bias, &mut self.head_weight, &mut self.head_bias]);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.map(|n, _| names.push(n.to_owned()));
        names
    }

    pub fn named(&self) -> Vec<(String, &W)> {
        self.names().into_iter().zip(self.leaves()).collect()
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut W)> {
        self.names().into_iter().zip(self.leaves_mut()).collect()
    }
}

/// Whether a parameter belongs to the classification head.
pub fn is_head_parameter(name: &str) -> bool {
    name.starts_with("head.")
}

/// Expected shape of every named parameter for `config`.
pub fn parameter_shapes(config: &ModelConfig) -> VitWeights<Vec<usize>> {
    let d = config.embed_dim;
    let layer = |_| LayerWeights {
        norm1_gain: vec![d],
        norm1_bias: vec![d],
        q_weight: vec![d, d],
        q_bias: vec![d],
        k_weight: vec![d, d],
        k_bias: vec![d],
        v_weight: vec![d, d],
        v_bias: vec![d],
        out_weight: vec![d, d],
        out_bias: vec![d],
        norm2_gain: vec![d],
        norm2_bias: vec![d],
        ffn1_weight: vec![d, config.ffn_hidden],
        ffn1_bias: vec![config.ffn_hidden],
        ffn2_weight: vec![config.ffn_hidden, d],
        ffn2_bias: vec![d],
    };
    VitWeights {
        patch_weight: vec![config.patch_dim(), d],
        patch_bias: vec![d],
        cls_token: vec![d],
        pos_embed: vec![config.seq_len(), d],
        layers: (0..config.depth).map(layer).collect(),
        norm_gain: vec![d],
        norm_bias: vec![d],
        head_weight: vec![d, config.num_classes],
        head_bias: vec![config.num_classes],
    }
}

/// Standard deviation of the truncated-normal initializer.
pub const INIT_STD: f64 = 0.02;

enum Init {
    TruncatedNormal,
    Zeros,
    Ones,
}

fn init_rule(name: &str) -> Init {
    if name.ends_with(".gain") {
        Init::Ones
    } else if name.ends_with(".bias") || name == "cls_token" {
        Init::Zeros
    } else {
        Init::TruncatedNormal
    }
}

/// Truncated normal (σ = 0.02, cut at ±2σ) for projections and positional
/// embeddings; zeros for biases and the class token; ones for norm gains.
/// Deterministic in `seed`, and identical across precisions up to rounding.
pub fn init_parameters<T: Scalar>(config: &ModelConfig, seed: u64) -> ModelParameters<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    parameter_shapes(config).map(|name, shape| match init_rule(name) {
        Init::Ones => Tensor::ones(shape.clone()),
        Init::Zeros => Tensor::zeros(shape.clone()),
        Init::TruncatedNormal => Tensor::from_fn(shape.clone(), |_| loop {
            let v: f64 = normal.sample(&mut rng);
            if v.abs() <= 2.0 * INIT_STD {
                break T::from_f64_lossy(v);
            }
        }),
    })
}

impl<T: Scalar> ModelParameters<T> {
    pub fn num_scalars(&self) -> usize {
        let mut total = 0;
        self.map(|_, t| total += t.len());
        total
    }

    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        self.map(|_, t| t.cast())
    }
}
