//! Contrastive loss family with analytic gradients w.r.t. every embedding.
//!
//! Every term is a mean over rows of `−x_p + log(e^{x_p} + Σ_j e^{x_j})`
//! where `x = similarity / σ`. The terms differ only in which embeddings form
//! a row:
//!
//! * text-to-video: caption `t_i` against all videos;
//! * video-to-text: video `v_i` against all captions, plus hard negatives
//!   depending on [`NegativeVariant`];
//! * verb phrase: video `v_i` against the verb phrases of the items that have
//!   one.
//!
//! Rows are evaluated as `softplus(lse(x_N − x_p))`, which never overflows
//! and keeps full relative precision for losses near zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecops::{axpy, dot, log_sum_exp, sigmoid, softmax, softplus};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("batch needs at least 2 items, got {0}")]
    TooSmall(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("invalid loss config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Which generated captions enter the video-to-text denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeVariant {
    /// In-batch captions only.
    #[serde(alias = "baseline")]
    None,
    /// Every batch item's hard negatives.
    #[serde(alias = "hn")]
    HnUncalibrated,
    /// Each item's own hard negatives only.
    #[serde(alias = "chn")]
    CalibratedHn,
}

impl NegativeVariant {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "none" | "baseline" => Some(Self::None),
            "hn_uncalibrated" | "hn" => Some(Self::HnUncalibrated),
            "calibrated_hn" | "chn" => Some(Self::CalibratedHn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NceMode {
    Standard,
    HardnegNce,
}

impl NceMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::Standard),
            "hardneg_nce" => Some(Self::HardnegNce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbDirection {
    V2tOnly,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub sigma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub negative_variant: NegativeVariant,
    pub nce_mode: NceMode,
    pub alpha: f64,
    pub beta: f64,
    pub normalize_by_uniform: bool,
    pub verb_phrase_direction: VerbDirection,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma: 5e-3,
            lambda1: 2.0,
            lambda2: 1.0,
            lambda3: 1.0,
            negative_variant: NegativeVariant::CalibratedHn,
            nce_mode: NceMode::Standard,
            alpha: 1.0,
            beta: 0.1,
            normalize_by_uniform: true,
            verb_phrase_direction: VerbDirection::V2tOnly,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LossError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !v.is_finite() {
                return Err(LossError::Config(format!("{name} must be finite")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(LossError::Config("alpha must be positive".into()));
        }
        if !self.beta.is_finite() {
            return Err(LossError::Config("beta must be finite".into()));
        }
        Ok(())
    }
}

/// Embeddings of one batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchTensors {
    pub videos: Vec<Vec<f64>>,
    pub texts: Vec<Vec<f64>>,
    /// Hard-negative caption embeddings per item; may be empty.
    pub hard: Vec<Vec<Vec<f64>>>,
    /// Verb-phrase embedding per item, absent when none was extracted.
    pub verbs: Vec<Option<Vec<f64>>>,
}

impl BatchTensors {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.videos.first().map_or(0, Vec::len)
    }

    pub fn hard_counts(&self) -> Vec<usize> {
        self.hard.iter().map(Vec::len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.videos.len();
        if b < 2 {
            return Err(LossError::TooSmall(b));
        }
        if self.texts.len() != b || self.hard.len() != b || self.verbs.len() != b {
            return Err(LossError::Shape("videos, texts, hard and verbs must have one entry per item".into()));
        }
        let d = self.dim();
        let vectors = self
            .videos
            .iter()
            .chain(&self.texts)
            .chain(self.hard.iter().flatten())
            .chain(self.verbs.iter().flatten());
        for v in vectors {
            if v.len() != d {
                return Err(LossError::Shape(format!("expected dim {d}, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LossError::NonFinite("batch embeddings"));
            }
        }
        Ok(())
    }
}

/// Gradients with the same layout as [`BatchTensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub videos: Vec<Vec<f64>>,
    pub texts: Vec<Vec<f64>>,
    pub hard: Vec<Vec<Vec<f64>>>,
    pub verbs: Vec<Option<Vec<f64>>>,
}

impl LossGrads {
    pub fn zeros_like(batch: &BatchTensors) -> Self {
        let d = batch.dim();
        Self {
            videos: vec![vec![0.0; d]; batch.len()],
            texts: vec![vec![0.0; d]; batch.len()],
            hard: batch.hard.iter().map(|h| vec![vec![0.0; d]; h.len()]).collect(),
            verbs: batch.verbs.iter().map(|p| p.as_ref().map(|_| vec![0.0; d])).collect(),
        }
    }

    fn slot(&mut self, s: Slot) -> &mut [f64] {
        match s {
            Slot::Video(i) => &mut self.videos[i],
            Slot::Text(i) => &mut self.texts[i],
            Slot::Hard(i, k) => &mut self.hard[i][k],
            Slot::Verb(i) => self.verbs[i].as_mut().expect("verb slot exists"),
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &LossGrads) {
        let pairs = self
            .videos
            .iter_mut()
            .zip(&other.videos)
            .chain(self.texts.iter_mut().zip(&other.texts))
            .chain(self.hard.iter_mut().flatten().zip(other.hard.iter().flatten()))
            .chain(
                self.verbs
                    .iter_mut()
                    .flatten()
                    .zip(other.verbs.iter().flatten()),
            );
        for (y, x) in pairs {
            axpy(alpha, x, y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.videos
            .iter()
            .chain(&self.texts)
            .chain(self.hard.iter().flatten())
            .chain(self.verbs.iter().flatten())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Video(usize),
    Text(usize),
    Hard(usize, usize),
    Verb(usize),
}

fn get(batch: &BatchTensors, s: Slot) -> &[f64] {
    match s {
        Slot::Video(i) => &batch.videos[i],
        Slot::Text(i) => &batch.texts[i],
        Slot::Hard(i, k) => &batch.hard[i][k],
        Slot::Verb(i) => batch.verbs[i].as_ref().expect("verb slot exists"),
    }
}

/// One contrastive row: an anchor scored against its positive and negatives.
struct Row {
    anchor: Slot,
    positive: Slot,
    negatives: Vec<Slot>,
}

/// Row loss and its derivatives w.r.t. the logits.
struct RowEval {
    loss: f64,
    d_pos: f64,
    d_neg: Vec<f64>,
}

fn standard_row(x_p: f64, x_n: &[f64]) -> RowEval {
    if x_n.is_empty() {
        return RowEval {
            loss: 0.0,
            d_pos: 0.0,
            d_neg: Vec::new(),
        };
    }
    let shifted: Vec<f64> = x_n.iter().map(|x| x - x_p).collect();
    let z = log_sum_exp(&shifted);
    let loss = softplus(z);
    // Total log-partition relative to x_p is `loss`.
    let d_neg: Vec<f64> = shifted.iter().map(|s| (s - loss).exp()).collect();
    RowEval {
        loss,
        d_pos: -d_neg.iter().sum::<f64>(),
        d_neg,
    }
}

fn hardneg_row(x_p: f64, x_n: &[f64], alpha: f64, beta: f64) -> RowEval {
    let ln_alpha = alpha.ln();
    if x_n.is_empty() {
        return RowEval {
            loss: ln_alpha,
            d_pos: 0.0,
            d_neg: Vec::new(),
        };
    }
    let n = x_n.len() as f64;
    let up: Vec<f64> = x_n.iter().map(|x| (1.0 + beta) * x).collect();
    let bx: Vec<f64> = x_n.iter().map(|x| beta * x).collect();
    // log Σ_j w_j e^{x_j} with w = n·softmax(βx)
    let log_weighted = n.ln() + log_sum_exp(&up) - log_sum_exp(&bx);
    let d = log_weighted - x_p - ln_alpha;
    let pi_b = sigmoid(d);
    let s_up = softmax(&up);
    let s_b = softmax(&bx);
    RowEval {
        loss: ln_alpha + softplus(d),
        d_pos: -pi_b,
        d_neg: s_up
            .iter()
            .zip(&s_b)
            .map(|(a, b)| pi_b * ((1.0 + beta) * a - beta * b))
            .collect(),
    }
}

/// Mean value of a set of rows and its gradient.
fn eval_rows(batch: &BatchTensors, rows: &[Row], cfg: &LossConfig, hardneg: bool) -> (f64, LossGrads) {
    let mut grads = LossGrads::zeros_like(batch);
    if rows.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / rows.len() as f64;
    let inv_sigma = 1.0 / cfg.sigma;
    let mut total = 0.0;
    for row in rows {
        let a = get(batch, row.anchor);
        let x_p = dot(a, get(batch, row.positive)) * inv_sigma;
        let x_n: Vec<f64> = row.negatives.iter().map(|&s| dot(a, get(batch, s)) * inv_sigma).collect();
        let r = if hardneg {
            hardneg_row(x_p, &x_n, cfg.alpha, cfg.beta)
        } else {
            standard_row(x_p, &x_n)
        };
        total += r.loss;
        let c = scale * inv_sigma;
        let mut g_anchor = vec![0.0; a.len()];
        axpy(c * r.d_pos, get(batch, row.positive), &mut g_anchor);
        axpy(c * r.d_pos, a, grads.slot(row.positive));
        for (&s, &g) in row.negatives.iter().zip(&r.d_neg) {
            axpy(c * g, get(batch, s), &mut g_anchor);
            axpy(c * g, a, grads.slot(s));
        }
        axpy(1.0, &g_anchor, grads.slot(row.anchor));
    }
    (total * scale, grads)
}

/// One loss term: its mean value, uniform-prediction divisor and gradient of
/// the mean value.
#[derive(Debug, Clone, PartialEq)]
pub struct TermOutput {
    pub value: f64,
    pub normalizer: f64,
    pub grads: LossGrads,
}

impl TermOutput {
    /// `value / normalizer`, or 0 for a degenerate term with no negatives.
    pub fn normalized(&self) -> f64 {
        if self.normalizer > 0.0 {
            self.value / self.normalizer
        } else {
            0.0
        }
    }
}

/// The terms whose uniform-prediction value is used as a divisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormTerm {
    T2v,
    V2t,
    CalibratedHn,
    HnUncalibrated,
    /// `b` is the number of items that have a verb phrase.
    VerbPhrase,
}

/// `log(#denominator terms)` averaged over items.
pub fn uniform_normalizer(term: NormTerm, b: usize, n: &[usize]) -> f64 {
    let bf = b as f64;
    match term {
        NormTerm::T2v | NormTerm::V2t | NormTerm::VerbPhrase => {
            if b <= 1 {
                0.0
            } else {
                bf.ln()
            }
        }
        NormTerm::HnUncalibrated => (bf + n.iter().sum::<usize>() as f64).ln(),
        NormTerm::CalibratedHn => {
            if n.is_empty() {
                return bf.ln();
            }
            if n.iter().all(|&k| k == n[0]) {
                return (bf + n[0] as f64).ln();
            }
            n.iter().map(|&k| (bf + k as f64).ln()).sum::<f64>() / n.len() as f64
        }
    }
}

/// HardNeg-NCE weights over a row of negative similarities:
/// `n · softmax(β s / σ)`, so equal similarities give weight 1 each.
pub fn hardneg_nce_weights(similarities: &[f64], cfg: &LossConfig) -> Vec<f64> {
    let n = similarities.len() as f64;
    let scaled: Vec<f64> = similarities.iter().map(|s| cfg.beta * s / cfg.sigma).collect();
    softmax(&scaled).into_iter().map(|p| n * p).collect()
}

fn hardneg(cfg: &LossConfig) -> bool {
    cfg.nce_mode == NceMode::HardnegNce
}

fn checked(batch: &BatchTensors, cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    batch.validate()
}

/// Text-to-video InfoNCE.
pub fn info_nce_t2v(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    checked(batch, cfg)?;
    let b = batch.len();
    let rows: Vec<Row> = (0..b)
        .map(|i| Row {
            anchor: Slot::Text(i),
            positive: Slot::Video(i),
            negatives: (0..b).filter(|&j| j != i).map(Slot::Video).collect(),
        })
        .collect();
    let (value, grads) = eval_rows(batch, &rows, cfg, hardneg(cfg));
    Ok(TermOutput {
        value,
        normalizer: uniform_normalizer(NormTerm::T2v, b, &[]),
        grads,
    })
}

fn v2t_rows(batch: &BatchTensors, variant: NegativeVariant) -> Vec<Row> {
    let b = batch.len();
    (0..b)
        .map(|i| {
            let mut negatives: Vec<Slot> = (0..b).filter(|&j| j != i).map(Slot::Text).collect();
            match variant {
                NegativeVariant::None => {}
                NegativeVariant::CalibratedHn => negatives.extend((0..batch.hard[i].len()).map(|k| Slot::Hard(i, k))),
                NegativeVariant::HnUncalibrated => {
                    for j in 0..b {
                        negatives.extend((0..batch.hard[j].len()).map(|k| Slot::Hard(j, k)));
                    }
                }
            }
            Row {
                anchor: Slot::Video(i),
                positive: Slot::Text(i),
                negatives,
            }
        })
        .collect()
}

fn v2t_term(batch: &BatchTensors, cfg: &LossConfig, variant: NegativeVariant) -> Result<TermOutput> {
    checked(batch, cfg)?;
    let rows = v2t_rows(batch, variant);
    let (value, grads) = eval_rows(batch, &rows, cfg, hardneg(cfg));
    let n = batch.hard_counts();
    let term = match variant {
        NegativeVariant::None => NormTerm::V2t,
        NegativeVariant::HnUncalibrated => NormTerm::HnUncalibrated,
        NegativeVariant::CalibratedHn => NormTerm::CalibratedHn,
    };
    Ok(TermOutput {
        value,
        normalizer: uniform_normalizer(term, batch.len(), &n),
        grads,
    })
}

/// Video-to-text InfoNCE over in-batch captions; hard negatives are ignored.
pub fn info_nce_v2t(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    v2t_term(batch, cfg, NegativeVariant::None)
}

/// Video-to-text loss whose denominator holds every item's hard negatives.
pub fn loss_hn_uncalibrated(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    v2t_term(batch, cfg, NegativeVariant::HnUncalibrated)
}

/// Video-to-text loss whose denominator holds only the item's own hard
/// negatives.
pub fn loss_chn(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    v2t_term(batch, cfg, NegativeVariant::CalibratedHn)
}

/// The video-to-text term selected by `cfg.negative_variant`.
pub fn loss_v2t_slot(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    v2t_term(batch, cfg, cfg.negative_variant)
}

/// Verb-phrase loss over the items that have a verb phrase.
///
/// Always standard NCE. With [`VerbDirection::Both`] the value is the mean of
/// the video-to-phrase and phrase-to-video directions.
pub fn loss_verb_phrase(batch: &BatchTensors, cfg: &LossConfig) -> Result<TermOutput> {
    checked(batch, cfg)?;
    let members: Vec<usize> = (0..batch.len()).filter(|&i| batch.verbs[i].is_some()).collect();
    let m = members.len();
    let normalizer = uniform_normalizer(NormTerm::VerbPhrase, m, &[]);
    let rows = |anchor: fn(usize) -> Slot, other: fn(usize) -> Slot| -> Vec<Row> {
        members
            .iter()
            .map(|&i| Row {
                anchor: anchor(i),
                positive: other(i),
                negatives: members.iter().filter(|&&j| j != i).map(|&j| other(j)).collect(),
            })
            .collect()
    };
    let (value, grads) = eval_rows(batch, &rows(Slot::Video, Slot::Verb), cfg, false);
    if cfg.verb_phrase_direction == VerbDirection::V2tOnly {
        return Ok(TermOutput {
            value,
            normalizer,
            grads,
        });
    }
    let (value_t, grads_t) = eval_rows(batch, &rows(Slot::Verb, Slot::Video), cfg, false);
    let mut avg = LossGrads::zeros_like(batch);
    avg.add_scaled(0.5, &grads);
    avg.add_scaled(0.5, &grads_t);
    Ok(TermOutput {
        value: 0.5 * (value + value_t),
        normalizer,
        grads: avg,
    })
}

/// Scalar value of one term inside the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub value: f64,
    pub normalizer: f64,
    pub normalized: f64,
}

impl From<&TermOutput> for TermValue {
    fn from(t: &TermOutput) -> Self {
        Self {
            value: t.value,
            normalizer: t.normalizer,
            normalized: t.normalized(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub total: f64,
    pub t2v: TermValue,
    /// The video-to-text term of the configured variant.
    pub v2t: TermValue,
    pub verb_phrase: TermValue,
    pub grads: LossGrads,
}

/// `λ1·t2v + λ2·v2t + λ3·verb`, each term divided by its uniform value when
/// `normalize_by_uniform` is set.
pub fn combined_vfc(batch: &BatchTensors, cfg: &LossConfig) -> Result<LossOutput> {
    let t2v = info_nce_t2v(batch, cfg)?;
    let v2t = loss_v2t_slot(batch, cfg)?;
    let verb = loss_verb_phrase(batch, cfg)?;
    let mut grads = LossGrads::zeros_like(batch);
    let mut total = 0.0;
    for (lambda, term) in [(cfg.lambda1, &t2v), (cfg.lambda2, &v2t), (cfg.lambda3, &verb)] {
        let (value, coef) = if !cfg.normalize_by_uniform {
            (term.value, 1.0)
        } else if term.normalizer > 0.0 {
            (term.normalized(), 1.0 / term.normalizer)
        } else {
            (0.0, 0.0)
        };
        total += lambda * value;
        if lambda != 0.0 && coef != 0.0 {
            grads.add_scaled(lambda * coef, &term.grads);
        }
    }
    if !total.is_finite() || !grads.all_finite() {
        return Err(LossError::NonFinite("loss output"));
    }
    Ok(LossOutput {
        total,
        t2v: (&t2v).into(),
        v2t: (&v2t).into(),
        verb_phrase: (&verb).into(),
        grads,
    })
}
