use super::{LayerWeights, ModelConfig, ModelParameters, NormPlacement, VitError, VitWeights};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Splits channel-first images into non-overlapping `P×P` patches.
///
/// Accepts `3×S×S` or `B×3×S×S` and returns `N×3P²` or `B×N×3P²`. Patches are
/// ordered row-major over the patch grid; each is flattened channel-major
/// (`c`, then row, then column).
pub fn patchify<T: Scalar>(x: &Tensor<T>, patch: usize) -> Result<Tensor<T>, VitError> {
    let (batch, dims) = match x.shape() {
        [c, h, w] => (None, [*c, *h, *w]),
        [b, c, h, w] => (Some(*b), [*c, *h, *w]),
        other => return Err(VitError::Input(format!("expected 3×S×S or B×3×S×S images, got {other:?}"))),
    };
    let [channels, height, width] = dims;
    if channels != 3 || height != width {
        return Err(VitError::Input(format!("expected 3 square channels, got {dims:?}")));
    }
    if patch == 0 || height % patch != 0 {
        return Err(VitError::Input(format!("image size {height} is not divisible by patch size {patch}")));
    }
    let grid = height / patch;
    let n = grid * grid;
    let patch_len = channels * patch * patch;
    let images = batch.unwrap_or(1);
    let plane = height * width;
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for b in 0..images {
        let img = &src[b * channels * plane..(b + 1) * channels * plane];
        for py in 0..grid {
            for px in 0..grid {
                for c in 0..channels {
                    for r in 0..patch {
                        let row = c * plane + (py * patch + r) * width + px * patch;
                        out.extend_from_slice(&img[row..row + patch]);
                    }
                }
            }
        }
    }
    let shape = match batch {
        Some(b) => vec![b, n, patch_len],
        None => vec![n, patch_len],
    };
    Ok(Tensor::new(shape, out)?)
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub logits: Var,
    pub probabilities: Var,
    /// Per-layer attention weights `B×h×T×T`, when requested.
    pub attention: Vec<Var>,
}

/// Materialized forward results.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub logits: Tensor<T>,
    pub probabilities: Tensor<T>,
    pub attention: Vec<Tensor<T>>,
}

/// Registers every parameter as a differentiable leaf.
pub fn register<T: Scalar>(g: &mut Graph<T>, params: &ModelParameters<T>) -> Result<VitWeights<Var>, VitError> {
    params.try_map(|_, t| g.param(t.clone()).map_err(VitError::from))
}

/// Multi-head scaled dot-product self-attention over `B×T×d` tokens,
/// including the output projection. Returns the output and the attention
/// weights `B×h×T×T`.
pub fn attention<T: Scalar>(
    g: &mut Graph<T>,
    z: Var,
    layer: &LayerWeights<Var>,
    config: &ModelConfig,
) -> Result<(Var, Var), VitError> {
    let shape = g.value(z).shape().to_vec();
    let [b, t, d] = shape[..] else {
        return Err(VitError::Input(format!("attention expects B×T×d tokens, got {shape:?}")));
    };
    let (h, dh) = (config.heads, config.head_dim());
    if d != config.embed_dim {
        return Err(VitError::Input(format!("token width {d} does not match embedding width {}", config.embed_dim)));
    }
    let split_heads = |g: &mut Graph<T>, x: Var, perm: &[usize]| -> Result<Var, VitError> {
        let x = g.reshape(x, &[b, t, h, dh])?;
        Ok(g.permute(x, perm)?)
    };
    let q = g.linear(z, layer.q_weight, layer.q_bias)?;
    let k = g.linear(z, layer.k_weight, layer.k_bias)?;
    let v = g.linear(z, layer.v_weight, layer.v_bias)?;
    let q = split_heads(g, q, &[0, 2, 1, 3])?;
    let k_t = split_heads(g, k, &[0, 2, 3, 1])?;
    let v = split_heads(g, v, &[0, 2, 1, 3])?;

    let scores = g.matmul(q, k_t)?;
    let scores = g.scale(scores, T::from_f64_lossy(config.attention_divisor().recip()))?;
    let weights = g.softmax(scores)?;
    let context = g.matmul(weights, v)?;
    let context = g.permute(context, &[0, 2, 1, 3])?;
    let context = g.reshape(context, &[b, t, d])?;
    let out = g.linear(context, layer.out_weight, layer.out_bias)?;
    Ok((out, weights))
}

fn maybe_norm<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    gain: Var,
    bias: Var,
    config: &ModelConfig,
) -> Result<Var, VitError> {
    Ok(match config.norm {
        NormPlacement::Pre => g.layer_norm(x, gain, bias, T::from_f64_lossy(config.layer_norm_eps))?,
        NormPlacement::None => x,
    })
}

/// One encoder layer: `Z' = Z + MSA(LN(Z))`, `Z_out = Z' + FFN(LN(Z'))`,
/// with `FFN = linear → gelu → linear`.
pub fn encoder_layer<T: Scalar>(
    g: &mut Graph<T>,
    z: Var,
    layer: &LayerWeights<Var>,
    config: &ModelConfig,
) -> Result<(Var, Var), VitError> {
    let normed = maybe_norm(g, z, layer.norm1_gain, layer.norm1_bias, config)?;
    let (attn, weights) = attention(g, normed, layer, config)?;
    let z = g.add(z, attn)?;
    let normed = maybe_norm(g, z, layer.norm2_gain, layer.norm2_bias, config)?;
    let hidden = g.linear(normed, layer.ffn1_weight, layer.ffn1_bias)?;
    let hidden = g.gelu(hidden)?;
    let ffn = g.linear(hidden, layer.ffn2_weight, layer.ffn2_bias)?;
    Ok((g.add(z, ffn)?, weights))
}

/// Token sequence `B×(N+1)×d`: class token first, then projected patches,
/// with positional embeddings added.
pub fn embed<T: Scalar>(
    g: &mut Graph<T>,
    patches: Var,
    w: &VitWeights<Var>,
    config: &ModelConfig,
) -> Result<Var, VitError> {
    let shape = g.value(patches).shape().to_vec();
    let [b, n, len] = shape[..] else {
        return Err(VitError::Input(format!("embed expects B×N×3P² patches, got {shape:?}")));
    };
    if n != config.num_patches() || len != config.patch_dim() {
        return Err(VitError::Input(format!(
            "expected {} patches of length {}, got {n} of length {len}",
            config.num_patches(),
            config.patch_dim()
        )));
    }
    let d = config.embed_dim;
    let tokens = g.linear(patches, w.patch_weight, w.patch_bias)?;
    let cls = g.reshape(w.cls_token, &[1, d])?;
    let cls = g.repeat(cls, b)?;
    Ok(if config.cls_positional {
        let seq = g.concat(&[cls, tokens], 1)?;
        g.add_broadcast(seq, w.pos_embed)?
    } else {
        let patch_pos = g.narrow(w.pos_embed, 0, 1, n)?;
        let tokens = g.add_broadcast(tokens, patch_pos)?;
        g.concat(&[cls, tokens], 1)?
    })
}

/// Full classifier on a `B×3×S×S` batch already on the graph.
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<T>,
    images: Var,
    w: &VitWeights<Var>,
    config: &ModelConfig,
    keep_attention: bool,
) -> Result<ForwardVars, VitError> {
    let shape = g.value(images).shape().to_vec();
    if shape.len() != 4 || shape[1] != 3 || shape[2] != config.image_size || shape[3] != config.image_size {
        return Err(VitError::Input(format!(
            "expected B×3×{s}×{s} images, got {shape:?}",
            s = config.image_size
        )));
    }
    if w.layers.len() != config.depth {
        return Err(VitError::Config(format!("{} layers given for depth {}", w.layers.len(), config.depth)));
    }
    let b = shape[0];
    let patches = patchify(g.value(images), config.patch_size)?;
    let patches = g.input(patches)?;
    let mut z = embed(g, patches, w, config)?;
    let mut attention = Vec::new();
    for layer in &w.layers {
        let (next, weights) = encoder_layer(g, z, layer, config)?;
        z = next;
        if keep_attention {
            attention.push(weights);
        }
    }
    let z = maybe_norm(g, z, w.norm_gain, w.norm_bias, config)?;
    let cls = g.narrow(z, 1, 0, 1)?;
    let cls = g.reshape(cls, &[b, config.embed_dim])?;
    let logits = g.linear(cls, w.head_weight, w.head_bias)?;
    let probabilities = g.softmax(logits)?;
    Ok(ForwardVars { logits, probabilities, attention })
}

/// Inference-only forward pass.
pub fn forward<T: Scalar>(
    params: &ModelParameters<T>,
    images: &Tensor<T>,
    config: &ModelConfig,
    keep_attention: bool,
) -> Result<ForwardOutput<T>, VitError> {
    let mut g = Graph::new();
    let w = params.try_map(|_, t| g.input(t.clone()))?;
    let x = g.input(images.clone())?;
    let vars = forward_graph(&mut g, x, &w, config, keep_attention)?;
    Ok(ForwardOutput {
        logits: g.value(vars.logits).clone(),
        probabilities: g.value(vars.probabilities).clone(),
        attention: vars.attention.iter().map(|&a| g.value(a).clone()).collect(),
    })
}
