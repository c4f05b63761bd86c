use serde::{Deserialize, Serialize};

use super::VitError;

/// Where layer normalization sits in each encoder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    /// Before attention and before the FFN, plus a final norm before the head.
    Pre,
    /// No normalization: plain residual equations.
    None,
}

/// Divisor applied to query-key dot products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// `sqrt(d / h)`, the width of one head.
    PerHead,
    /// `sqrt(d)`, the full embedding width.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: String,
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub num_classes: usize,
    pub norm: NormPlacement,
    pub attention_scale: AttentionScale,
    /// Add positional row 0 to the class token.
    pub cls_positional: bool,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    /// ViT-Base, 16×16 patches, 224×224 input, four classes.
    pub fn base() -> Self {
        Self {
            variant: "base".into(),
            image_size: 224,
            patch_size: 16,
            embed_dim: 768,
            depth: 12,
            heads: 12,
            ffn_hidden: 3072,
            num_classes: 4,
            norm: NormPlacement::Pre,
            attention_scale: AttentionScale::PerHead,
            cls_positional: true,
            layer_norm_eps: 1e-6,
        }
    }

    /// ViT-Tiny: width 192, 12 layers, 3 heads.
    pub fn tiny() -> Self {
        Self { variant: "tiny".into(), embed_dim: 192, heads: 3, ffn_hidden: 768, ..Self::base() }
    }

    pub fn variant(name: &str) -> Option<Self> {
        match name {
            "base" => Some(Self::base()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), VitError> {
        let fail = |reason: String| Err(VitError::Config(reason));
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("ffn_hidden", self.ffn_hidden),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be positive"));
        }
        if self.image_size % self.patch_size != 0 {
            return fail(format!("image size {} is not divisible by patch size {}", self.image_size, self.patch_size));
        }
        if self.embed_dim % self.heads != 0 {
            return fail(format!("embedding width {} is not divisible by {} heads", self.embed_dim, self.heads));
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail(format!("layer norm eps must be positive, got {}", self.layer_norm_eps));
        }
        Ok(())
    }

    /// Number of patches `N = (S/P)²`.
    pub fn num_patches(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    /// Flattened patch length `3·P²`.
    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    /// Token count including the class token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn attention_divisor(&self) -> f64 {
        match self.attention_scale {
            AttentionScale::PerHead => (self.head_dim() as f64).sqrt(),
            AttentionScale::Full => (self.embed_dim as f64).sqrt(),
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::base()
    }
}
