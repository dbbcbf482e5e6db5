//! Embedding-table video encoder and bag-of-embeddings text encoder.
//!
//! A video is a learnable row looked up by id. A text is the mean of its
//! token rows. Both outputs are L2-normalized, so the backward pass applies
//! the normalization Jacobian `(I − uuᵀ)/‖x‖` to the upstream gradient.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, DatasetManifest};
use crate::seeding::rng_for;
use crate::vecops::{axpy, dot, normalized};

/// Vocabulary entry shared by every out-of-vocabulary token.
pub const UNK: &str = "<unk>";

const MAGIC: &[u8; 8] = b"VFCCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("unknown video id {0:?}")]
    UnknownVideo(String),
    #[error("text {0:?} has no tokens")]
    EmptyText(String),
    #[error("gradient has dim {got}, encoder dim is {want}")]
    Shape { got: usize, want: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub dim: usize,
    /// Standard deviation of the initial weights; `1/sqrt(dim)` when unset.
    pub init_scale: Option<f64>,
    pub seed: u64,
    pub freeze_video: bool,
    pub freeze_text: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            init_scale: None,
            seed: 0,
            freeze_video: false,
            freeze_text: false,
        }
    }
}

impl EncoderConfig {
    pub fn effective_init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(1.0 / (self.dim as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(EncoderError::Config(format!("dim must be >= 2, got {}", self.dim)));
        }
        let s = self.effective_init_scale();
        if !(s > 0.0 && s.is_finite()) {
            return Err(EncoderError::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Lowercase, strip punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_text(text).split(' ').filter(|t| !t.is_empty()).map(String::from).collect()
}

/// Sparse gradient over table rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncoderGrads {
    pub video: BTreeMap<usize, Vec<f64>>,
    pub token: BTreeMap<usize, Vec<f64>>,
}

impl EncoderGrads {
    fn add(map: &mut BTreeMap<usize, Vec<f64>>, row: usize, alpha: f64, g: &[f64]) {
        let slot = map.entry(row).or_insert_with(|| vec![0.0; g.len()]);
        axpy(alpha, g, slot);
    }

    pub fn is_zero(&self) -> bool {
        self.video.values().chain(self.token.values()).all(|r| r.iter().all(|x| *x == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoders {
    pub config: EncoderConfig,
    video_ids: Vec<String>,
    video_index: HashMap<String, usize>,
    vocab: Vec<String>,
    token_index: HashMap<String, usize>,
    /// Row-major `videos × dim`.
    pub video_table: Vec<f64>,
    /// Row-major `vocab × dim`; row 0 is [`UNK`].
    pub token_table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    config: EncoderConfig,
    video_ids: Vec<String>,
    vocab: Vec<String>,
    extra: serde_json::Value,
}

fn index_of(items: &[String]) -> HashMap<String, usize> {
    items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

impl Encoders {
    /// Fresh encoders for the given videos and vocabulary; [`UNK`] is added
    /// as row 0 and the remaining tokens are sorted.
    pub fn new(config: EncoderConfig, video_ids: Vec<String>, tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        config.validate()?;
        let mut set: BTreeSet<String> = tokens.into_iter().collect();
        set.remove(UNK);
        let mut vocab = vec![UNK.to_string()];
        vocab.extend(set);
        let d = config.dim;
        let normal = Normal::new(0.0, config.effective_init_scale())
            .map_err(|e| EncoderError::Config(e.to_string()))?;
        let mut rng = rng_for(&[config.seed, 1]);
        let video_table: Vec<f64> = (0..video_ids.len() * d).map(|_| normal.sample(&mut rng)).collect();
        let mut rng = rng_for(&[config.seed, 2]);
        let token_table: Vec<f64> = (0..vocab.len() * d).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            video_index: index_of(&video_ids),
            token_index: index_of(&vocab),
            config,
            video_ids,
            vocab,
            video_table,
            token_table,
        })
    }

    /// Encoders covering every video of a manifest and every token in its
    /// captions, generations and verb phrases.
    pub fn for_manifest(config: EncoderConfig, manifest: &DatasetManifest) -> Result<Self> {
        let ids = manifest.videos.iter().map(|v| v.video_id.clone()).collect();
        let mut tokens = BTreeSet::new();
        for c in &manifest.captions {
            tokens.extend(tokenize(&c.text));
            for p in &c.verb_phrases {
                tokens.extend(tokenize(p.as_str()));
            }
        }
        for g in &manifest.generations {
            tokens.extend(tokenize(&g.text));
        }
        Self::new(config, ids, tokens)
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn video_row(&self, id: &str) -> Result<usize> {
        self.video_index
            .get(id)
            .copied()
            .ok_or_else(|| EncoderError::UnknownVideo(id.to_string()))
    }

    /// Token rows of a text, with [`UNK`] for unknown tokens.
    pub fn token_rows(&self, text: &str) -> Result<Vec<usize>> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Err(EncoderError::EmptyText(text.to_string()));
        }
        Ok(toks.iter().map(|t| self.token_index.get(t).copied().unwrap_or(0)).collect())
    }

    fn video_raw(&self, row: usize) -> &[f64] {
        let d = self.dim();
        &self.video_table[row * d..(row + 1) * d]
    }

    /// Mean of the token rows, summed in row order so that the result does
    /// not depend on token order.
    fn text_raw(&self, rows: &[usize]) -> Vec<f64> {
        let d = self.dim();
        let mut sorted = rows.to_vec();
        sorted.sort_unstable();
        let mut x = vec![0.0; d];
        for &r in &sorted {
            axpy(1.0, &self.token_table[r * d..(r + 1) * d], &mut x);
        }
        let inv = 1.0 / rows.len() as f64;
        x.iter_mut().for_each(|v| *v *= inv);
        x
    }

    pub fn encode_video(&self, id: &str) -> Result<Vec<f64>> {
        Ok(normalized(self.video_raw(self.video_row(id)?)).0)
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(normalized(&self.text_raw(&self.token_rows(text)?)).0)
    }

    fn check_dim(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.dim() {
            return Err(EncoderError::Shape {
                got: g.len(),
                want: self.dim(),
            });
        }
        Ok(())
    }

    /// `(I − uuᵀ) g / ‖x‖`
    fn through_normalization(x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let (u, n) = normalized(x);
        let radial = dot(&u, upstream);
        upstream.iter().zip(&u).map(|(g, ui)| (g - radial * ui) / n).collect()
    }

    /// Accumulates the parameter gradient of a video encoding.
    pub fn video_backward(&self, id: &str, upstream: &[f64], grads: &mut EncoderGrads) -> Result<()> {
        self.check_dim(upstream)?;
        let row = self.video_row(id)?;
        if self.config.freeze_video {
            return Ok(());
        }
        let g = Self::through_normalization(self.video_raw(row), upstream);
        EncoderGrads::add(&mut grads.video, row, 1.0, &g);
        Ok(())
    }

    /// Accumulates the parameter gradient of a text encoding. Each token
    /// occurrence receives `1/len` of the pre-normalization gradient.
    pub fn text_backward(&self, text: &str, upstream: &[f64], grads: &mut EncoderGrads) -> Result<()> {
        self.check_dim(upstream)?;
        let rows = self.token_rows(text)?;
        if self.config.freeze_text {
            return Ok(());
        }
        let g = Self::through_normalization(&self.text_raw(&rows), upstream);
        let share = 1.0 / rows.len() as f64;
        for r in rows {
            EncoderGrads::add(&mut grads.token, r, share, &g);
        }
        Ok(())
    }

    /// `θ ← θ − lr·(∇L + weight_decay·θ)` on unfrozen tables.
    pub fn sgd_step(&mut self, grads: &EncoderGrads, lr: f64, weight_decay: f64) {
        let d = self.dim();
        let step = |table: &mut Vec<f64>, g: &BTreeMap<usize, Vec<f64>>| {
            if weight_decay != 0.0 {
                let keep = 1.0 - lr * weight_decay;
                table.iter_mut().for_each(|w| *w *= keep);
            }
            for (&row, gr) in g {
                axpy(-lr, gr, &mut table[row * d..(row + 1) * d]);
            }
        };
        if !self.config.freeze_video {
            step(&mut self.video_table, &grads.video);
        }
        if !self.config.freeze_text {
            step(&mut self.token_table, &grads.token);
        }
    }

    /// Writes the encoders plus caller state as a binary checkpoint: magic,
    /// header length, JSON header, then both tables as little-endian f64.
    pub fn save_checkpoint(&self, mut w: impl Write, extra: serde_json::Value) -> Result<()> {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            video_ids: self.video_ids.clone(),
            vocab: self.vocab.clone(),
            extra,
        };
        let json = serde_json::to_vec(&header).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for v in self.video_table.iter().chain(&self.token_table) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Encoders::save_checkpoint`].
    pub fn load_checkpoint(mut r: impl Read) -> Result<(Self, serde_json::Value)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EncoderError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader =
            serde_json::from_slice(&json).map_err(|e| EncoderError::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(EncoderError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        header.config.validate()?;
        let d = header.config.dim;
        let mut read_table = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * d * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let video_table = read_table(header.video_ids.len())?;
        let token_table = read_table(header.vocab.len())?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(EncoderError::Checkpoint("trailing bytes after tables".into()));
        }
        Ok((
            Self {
                video_index: index_of(&header.video_ids),
                token_index: index_of(&header.vocab),
                config: header.config,
                video_ids: header.video_ids,
                vocab: header.vocab,
                video_table,
                token_table,
            },
            header.extra,
        ))
    }
}
