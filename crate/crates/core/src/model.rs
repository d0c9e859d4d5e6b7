//! Model configuration and the named-parameter store shared by both text
//! encoders, the POS head, the frozen template embedder, and the entity
//! linking soft prompts.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::nn::Tensor;
use crate::text::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSide {
    Expression,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    /// Dropout probability on attention and feed-forward outputs while
    /// training; evaluation always runs with dropout off.
    pub dropout: f64,
    pub pos_tags: usize,
    /// Soft prompt tokens on each side of an entity-linking mention; the
    /// bank holds twice this many vectors.
    pub soft_prompt_len: usize,
    /// Hidden width of the frozen template embedder.
    pub gtheta_dim: usize,
    /// Output width of the frozen template embedder.
    pub gtheta_out: usize,
    /// When set, the entity encoder shares every weight with the expression
    /// encoder instead of owning its own copy.
    pub tie_encoders: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            dim: 64,
            ffn_dim: 128,
            max_len: 64,
            dropout: 0.0,
            pos_tags: 6,
            soft_prompt_len: 4,
            gtheta_dim: 32,
            gtheta_out: 16,
            tie_encoders: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % self.heads != 0 {
            return Err(BiLinkError::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.layers == 0 || self.ffn_dim == 0 || self.max_len < 4 {
            return Err(BiLinkError::Config(
                "layers, ffn_dim must be positive and max_len at least 4".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(BiLinkError::Config(format!(
                "dropout {} must lie in [0, 1)",
                self.dropout
            )));
        }
        if self.pos_tags == 0 || self.soft_prompt_len == 0 {
            return Err(BiLinkError::Config(
                "pos_tags and soft_prompt_len must be positive".into(),
            ));
        }
        if self.gtheta_dim == 0 || self.gtheta_out == 0 {
            return Err(BiLinkError::Config(
                "template embedder widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ParamStore {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tensors: BTreeMap<String, Tensor>,
}

const EMB_STD: f64 = 0.02;
const GTHETA_STD: f64 = 0.2;

impl ParamStore {
    /// Seeded initialization; tensors are drawn in a fixed order so equal
    /// seeds give bitwise-equal stores.
    pub fn init(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vocab.len();
        let c = &config;
        let mut tensors = BTreeMap::new();
        let put = |map: &mut BTreeMap<String, Tensor>, name: String, t: Tensor| {
            map.insert(name, t);
        };
        let prefixes: Vec<&str> = if c.tie_encoders {
            vec!["expr"]
        } else {
            vec!["expr", "ent"]
        };
        for p in prefixes {
            put(&mut tensors, format!("{p}.tok_emb"), Tensor::randn(v, c.dim, EMB_STD, &mut rng));
            put(
                &mut tensors,
                format!("{p}.pos_emb"),
                Tensor::randn(c.max_len, c.dim, EMB_STD, &mut rng),
            );
            put(&mut tensors, format!("{p}.emb_ln.g"), Tensor::from_fn(1, c.dim, |_, _| 1.0));
            put(&mut tensors, format!("{p}.emb_ln.b"), Tensor::zeros(1, c.dim));
            for l in 0..c.layers {
                for w in ["wq", "wk", "wv", "wo"] {
                    put(
                        &mut tensors,
                        format!("{p}.l{l}.attn.{w}"),
                        Tensor::randn(c.dim, c.dim, EMB_STD, &mut rng),
                    );
                }
                for b in ["bq", "bk", "bv", "bo"] {
                    put(&mut tensors, format!("{p}.l{l}.attn.{b}"), Tensor::zeros(1, c.dim));
                }
                put(&mut tensors, format!("{p}.l{l}.ln1.g"), Tensor::from_fn(1, c.dim, |_, _| 1.0));
                put(&mut tensors, format!("{p}.l{l}.ln1.b"), Tensor::zeros(1, c.dim));
                put(
                    &mut tensors,
                    format!("{p}.l{l}.ffn.w1"),
                    Tensor::randn(c.dim, c.ffn_dim, EMB_STD, &mut rng),
                );
                put(&mut tensors, format!("{p}.l{l}.ffn.b1"), Tensor::zeros(1, c.ffn_dim));
                put(
                    &mut tensors,
                    format!("{p}.l{l}.ffn.w2"),
                    Tensor::randn(c.ffn_dim, c.dim, EMB_STD, &mut rng),
                );
                put(&mut tensors, format!("{p}.l{l}.ffn.b2"), Tensor::zeros(1, c.dim));
                put(&mut tensors, format!("{p}.l{l}.ln2.g"), Tensor::from_fn(1, c.dim, |_, _| 1.0));
                put(&mut tensors, format!("{p}.l{l}.ln2.b"), Tensor::zeros(1, c.dim));
            }
        }
        put(
            &mut tensors,
            "pos_head.w".into(),
            Tensor::randn(c.dim, c.pos_tags, EMB_STD, &mut rng),
        );
        put(&mut tensors, "pos_head.b".into(), Tensor::zeros(1, c.pos_tags));
        put(
            &mut tensors,
            "g.tok_emb".into(),
            Tensor::randn(v, c.gtheta_dim, GTHETA_STD, &mut rng),
        );
        put(
            &mut tensors,
            "g.pos_emb".into(),
            Tensor::randn(c.max_len, c.gtheta_dim, GTHETA_STD, &mut rng),
        );
        put(
            &mut tensors,
            "g.w1".into(),
            Tensor::randn(c.gtheta_dim, c.gtheta_dim, GTHETA_STD, &mut rng),
        );
        put(&mut tensors, "g.b1".into(), Tensor::zeros(1, c.gtheta_dim));
        put(
            &mut tensors,
            "g.w2".into(),
            Tensor::randn(c.gtheta_dim, c.gtheta_out, GTHETA_STD, &mut rng),
        );
        put(&mut tensors, "g.b2".into(), Tensor::zeros(1, c.gtheta_out));
        put(
            &mut tensors,
            "soft_prompts".into(),
            Tensor::randn(2 * c.soft_prompt_len, c.dim, EMB_STD, &mut rng),
        );
        Ok(ParamStore {
            config,
            vocab,
            tensors,
        })
    }

    /// Weight-name prefix serving one encoder side; with tied encoders both
    /// sides read the expression weights.
    pub fn prefix(&self, side: EncoderSide) -> &'static str {
        match side {
            EncoderSide::Expression => "expr",
            EncoderSide::Entity if self.config.tie_encoders => "expr",
            EncoderSide::Entity => "ent",
        }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn try_get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| BiLinkError::Checkpoint(format!("missing tensor {name}")))
    }

    /// Copies every tensor under `from.` to the same suffix under `to.`,
    /// creating or overwriting destination entries.
    pub fn copy_prefix(&mut self, from: &str, to: &str) {
        let moved: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .filter(|(k, _)| k.starts_with(&format!("{from}.")))
            .map(|(k, t)| (format!("{to}{}", &k[from.len()..]), t.clone()))
            .collect();
        for (k, t) in moved {
            self.tensors.insert(k, t);
        }
    }

    /// Names of tensors updated by the main contrastive phase: both
    /// encoders, but not the POS head and not the frozen template embedder.
    pub fn trainable_main(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|k| k.starts_with("expr.") || k.starts_with("ent."))
            .cloned()
            .collect()
    }

    /// Names updated during POS pretraining: the expression encoder plus the
    /// tagging head.
    pub fn trainable_pos(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|k| k.starts_with("expr.") || k.starts_with("pos_head."))
            .cloned()
            .collect()
    }

    /// Names updated during entity-linking training: both encoders plus the
    /// soft prompt bank.
    pub fn trainable_el(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|k| k.starts_with("expr.") || k.starts_with("ent.") || *k == "soft_prompts")
            .cloned()
            .collect()
    }
}
