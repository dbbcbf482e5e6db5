//! Deterministic minibatch SGD over the encoders.
//!
//! Every random choice is drawn from an RNG derived from `(seed, epoch)` or
//! `(seed, epoch, step)`, so a run is a pure function of the manifest and
//! the config, and resuming from a checkpoint needs no RNG state.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetManifest, GenerationKind};
use crate::encoders::{EncoderConfig, EncoderError, EncoderGrads, Encoders};
use crate::losses::{combined_vfc, BatchTensors, LossConfig, LossError, LossOutput, NegativeVariant};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("train split has {0} captions; at least 2 are needed")]
    TooFewCaptions(usize),
    #[error("non-finite loss at epoch {}, step {}; batch captions {:?}", .record.epoch, .record.step, .record.captions)]
    NonFinite { record: BatchRecord },
    #[error("checkpoint does not match this run: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> TrainError {
    let context = context.into();
    move |source| TrainError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Clamped to the number of train captions.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Maximum kept hard negatives sampled per caption and step.
    pub n_hard_max: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset("desk").expect("desk preset exists")
    }
}

impl TrainConfig {
    /// `desk` uses lr 0.05 with σ 0.05; `clip_scale` uses lr 1e-7 with σ 5e-3,
    /// values meant for large pretrained encoders.
    pub fn preset(name: &str) -> Option<Self> {
        let (learning_rate, sigma) = match name {
            "desk" => (0.05, 0.05),
            "clip_scale" => (1e-7, 5e-3),
            _ => return None,
        };
        Some(Self {
            batch_size: 256,
            epochs: 100,
            learning_rate,
            weight_decay: 1e-2,
            n_hard_max: 5,
            seed: 0,
            checkpoint_every: 0,
            loss: LossConfig {
                sigma,
                ..LossConfig::default()
            },
            encoder: EncoderConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(TrainError::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config("weight_decay must be finite and >= 0".into()));
        }
        self.loss.validate()?;
        self.encoder.validate()?;
        Ok(())
    }

    /// The fields that shape the trajectory; `epochs` and the checkpoint
    /// cadence may differ between a run and its resumption.
    fn trajectory_key(&self) -> Self {
        Self {
            epochs: 0,
            checkpoint_every: 0,
            ..self.clone()
        }
    }
}

/// Which manifest entries one step used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub step: usize,
    /// Caption indices into `manifest.captions`.
    pub captions: Vec<usize>,
    /// Per item, the sampled generation indices into `manifest.generations`.
    pub hard: Vec<Vec<usize>>,
    /// Per item, the index of the chosen verb phrase of its caption.
    pub verb: Vec<Option<usize>>,
}

/// Per-concept usage counts: how often a verb phrase sat in a positive slot
/// and how often it sat in some row's negative denominator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageCounter {
    pub positive: BTreeMap<String, u64>,
    pub negative: BTreeMap<String, u64>,
}

impl UsageCounter {
    fn bump(map: &mut BTreeMap<String, u64>, key: &str, by: u64) {
        if by > 0 {
            *map.entry(key.to_string()).or_insert(0) += by;
        }
    }

    /// Negative-to-positive usage ratio, `None` for unseen positives.
    pub fn ratio(&self, concept: &str) -> Option<f64> {
        let p = *self.positive.get(concept)?;
        (p > 0).then(|| *self.negative.get(concept).unwrap_or(&0) as f64 / p as f64)
    }
}

/// Mean normalized term values over one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossMeans {
    pub total: f64,
    pub t2v: f64,
    /// The video-to-text term of the configured variant.
    pub chn: f64,
    pub verb_phrase: f64,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub t2v: f64,
    pub chn: f64,
    pub verb_phrase: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub encoders: Encoders,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub usage: UsageCounter,
    pub last_epoch: Option<LossMeans>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    train_config: TrainConfig,
    epoch: usize,
    step: u64,
    usage: UsageCounter,
    last_epoch: Option<LossMeans>,
}

impl TrainState {
    pub fn save(&self, path: &Path, cfg: &TrainConfig) -> Result<()> {
        let extra = serde_json::to_value(StateHeader {
            train_config: cfg.clone(),
            epoch: self.epoch,
            step: self.step,
            usage: self.usage.clone(),
            last_epoch: self.last_epoch,
        })
        .expect("state header serializes");
        let file = File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
        self.encoders.save_checkpoint(BufWriter::new(file), extra)?;
        Ok(())
    }

    /// Loads a checkpoint and the config it was written with.
    pub fn load(path: &Path) -> Result<(Self, TrainConfig)> {
        let file = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
        let (encoders, extra) = Encoders::load_checkpoint(std::io::BufReader::new(file))?;
        let h: StateHeader = serde_json::from_value(extra)
            .map_err(|e| TrainError::Mismatch(format!("bad trainer header in {}: {e}", path.display())))?;
        Ok((
            Self {
                encoders,
                epoch: h.epoch,
                step: h.step,
                usage: h.usage,
                last_epoch: h.last_epoch,
            },
            h.train_config,
        ))
    }
}

/// Batch construction and SGD steps over one manifest.
pub struct Trainer<'a> {
    manifest: &'a DatasetManifest,
    cfg: TrainConfig,
    train: Vec<usize>,
    /// Kept hard negatives per caption index.
    hard_of: HashMap<usize, Vec<usize>>,
    batch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(manifest: &'a DatasetManifest, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let train = manifest.train_caption_indices();
        if train.len() < 2 {
            return Err(TrainError::TooFewCaptions(train.len()));
        }
        let mut by_parent: HashMap<(&str, &str), usize> = HashMap::new();
        for &i in &train {
            let c = &manifest.captions[i];
            by_parent.entry((c.video_id.as_str(), c.text.as_str())).or_insert(i);
        }
        let mut hard_of: HashMap<usize, Vec<usize>> = HashMap::new();
        for (gi, g) in manifest.generations.iter().enumerate() {
            if g.kind != GenerationKind::HardNegative || !g.kept {
                continue;
            }
            if let Some(&ci) = by_parent.get(&(g.parent_video_id.as_str(), g.parent_caption.as_str())) {
                hard_of.entry(ci).or_default().push(gi);
            }
        }
        let batch = cfg.batch_size.min(train.len());
        Ok(Self {
            manifest,
            cfg,
            train,
            hard_of,
            batch,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Effective batch size after clamping.
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Full batches plus a final partial batch when it has at least 2 items.
    pub fn steps_per_epoch(&self) -> usize {
        let n = self.train.len();
        n / self.batch + usize::from(n % self.batch >= 2)
    }

    pub fn init_state(&self) -> Result<TrainState> {
        Ok(TrainState {
            encoders: Encoders::for_manifest(self.cfg.encoder.clone(), self.manifest)?,
            epoch: 0,
            step: 0,
            usage: UsageCounter::default(),
            last_epoch: None,
        })
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order = self.train.clone();
        order.shuffle(&mut rng_for(&[self.cfg.seed, epoch as u64]));
        order
    }

    /// The batch for `(epoch, step)`, or `None` past the last step.
    pub fn sample_batch(&self, epoch: usize, step: usize) -> Option<BatchRecord> {
        self.sample_from(&self.epoch_order(epoch), epoch, step)
    }

    fn sample_from(&self, order: &[usize], epoch: usize, step: usize) -> Option<BatchRecord> {
        if step >= self.steps_per_epoch() {
            return None;
        }
        let start = step * self.batch;
        let captions = order[start..(start + self.batch).min(order.len())].to_vec();
        let mut rng = rng_for(&[self.cfg.seed, epoch as u64, step as u64]);
        let mut hard = Vec::with_capacity(captions.len());
        let mut verb = Vec::with_capacity(captions.len());
        for &ci in &captions {
            let pool = self.hard_of.get(&ci).map(Vec::as_slice).unwrap_or(&[]);
            let k = pool.len().min(self.cfg.n_hard_max);
            hard.push(index::sample(&mut rng, pool.len(), k).into_iter().map(|j| pool[j]).collect());
            let phrases = self.manifest.captions[ci].verb_phrases.len();
            verb.push((phrases > 0).then(|| rng.gen_range(0..phrases)));
        }
        Some(BatchRecord {
            epoch,
            step,
            captions,
            hard,
            verb,
        })
    }

    /// Every batch record of one epoch.
    pub fn epoch_batches(&self, epoch: usize) -> Vec<BatchRecord> {
        let order = self.epoch_order(epoch);
        (0..self.steps_per_epoch()).filter_map(|s| self.sample_from(&order, epoch, s)).collect()
    }

    fn verb_text(&self, ci: usize, choice: Option<usize>) -> Option<&str> {
        choice.map(|j| self.manifest.captions[ci].verb_phrases[j].as_str())
    }

    pub fn encode_batch(&self, enc: &Encoders, rec: &BatchRecord) -> Result<BatchTensors> {
        let caps = &self.manifest.captions;
        let gens = &self.manifest.generations;
        let mut out = BatchTensors::default();
        for (i, &ci) in rec.captions.iter().enumerate() {
            out.videos.push(enc.encode_video(&caps[ci].video_id)?);
            out.texts.push(enc.encode_text(&caps[ci].text)?);
            out.hard
                .push(rec.hard[i].iter().map(|&g| enc.encode_text(&gens[g].text)).collect::<std::result::Result<_, _>>()?);
            out.verbs.push(match self.verb_text(ci, rec.verb[i]) {
                Some(t) => Some(enc.encode_text(t)?),
                None => None,
            });
        }
        Ok(out)
    }

    /// Loss and parameter gradients of one batch, without updating.
    pub fn loss_and_grads(&self, enc: &Encoders, rec: &BatchRecord) -> Result<(LossOutput, EncoderGrads)> {
        let tensors = self.encode_batch(enc, rec)?;
        let out = combined_vfc(&tensors, &self.cfg.loss).map_err(|e| match e {
            LossError::NonFinite(_) => TrainError::NonFinite { record: rec.clone() },
            other => TrainError::Loss(other),
        })?;
        let caps = &self.manifest.captions;
        let gens = &self.manifest.generations;
        let mut grads = EncoderGrads::default();
        for (i, &ci) in rec.captions.iter().enumerate() {
            enc.video_backward(&caps[ci].video_id, &out.grads.videos[i], &mut grads)?;
            enc.text_backward(&caps[ci].text, &out.grads.texts[i], &mut grads)?;
            for (j, &g) in rec.hard[i].iter().enumerate() {
                enc.text_backward(&gens[g].text, &out.grads.hard[i][j], &mut grads)?;
            }
            if let (Some(t), Some(g)) = (self.verb_text(ci, rec.verb[i]), &out.grads.verbs[i]) {
                enc.text_backward(t, g, &mut grads)?;
            }
        }
        Ok((out, grads))
    }

    /// Usage of each concept in this batch under the configured variant.
    ///
    /// A caption is a positive once and a negative in the `B − 1` other rows.
    /// A hard negative sits in every row's denominator for the uncalibrated
    /// variant and only in its own row for the calibrated one.
    pub fn count_usage(&self, rec: &BatchRecord, usage: &mut UsageCounter) {
        let b = rec.captions.len() as u64;
        let hard_rows = match self.cfg.loss.negative_variant {
            NegativeVariant::None => 0,
            NegativeVariant::HnUncalibrated => b,
            NegativeVariant::CalibratedHn => 1,
        };
        for (i, &ci) in rec.captions.iter().enumerate() {
            for p in &self.manifest.captions[ci].verb_phrases {
                UsageCounter::bump(&mut usage.positive, p.as_str(), 1);
                UsageCounter::bump(&mut usage.negative, p.as_str(), b - 1);
            }
            for &g in &rec.hard[i] {
                for p in &self.manifest.generations[g].verb_phrases {
                    UsageCounter::bump(&mut usage.negative, p.as_str(), hard_rows);
                }
            }
        }
    }

    /// One SGD step on `rec`.
    pub fn train_step(&self, state: &mut TrainState, rec: &BatchRecord) -> Result<LossOutput> {
        let (out, grads) = self.loss_and_grads(&state.encoders, rec)?;
        state.encoders.sgd_step(&grads, self.cfg.learning_rate, self.cfg.weight_decay);
        self.count_usage(rec, &mut state.usage);
        state.step += 1;
        Ok(out)
    }

    /// Runs epoch `state.epoch` to completion.
    pub fn run_epoch(&self, state: &mut TrainState) -> Result<EpochMetrics> {
        let t0 = Instant::now();
        let mut sums = LossMeans::default();
        let batches = self.epoch_batches(state.epoch);
        for rec in &batches {
            let out = self.train_step(state, rec)?;
            sums.total += out.total;
            sums.t2v += out.t2v.normalized;
            sums.chn += out.v2t.normalized;
            sums.verb_phrase += out.verb_phrase.normalized;
        }
        let n = batches.len().max(1) as f64;
        let means = LossMeans {
            total: sums.total / n,
            t2v: sums.t2v / n,
            chn: sums.chn / n,
            verb_phrase: sums.verb_phrase / n,
        };
        state.last_epoch = Some(means);
        state.epoch += 1;
        Ok(EpochMetrics {
            epoch: state.epoch,
            total: means.total,
            t2v: means.t2v,
            chn: means.chn,
            verb_phrase: means.verb_phrase,
            wall_ms: t0.elapsed().as_millis() as u64,
        })
    }

    /// Checks that a loaded state continues this run.
    pub fn check_resume(&self, state: &TrainState, saved: &TrainConfig) -> Result<()> {
        if saved.trajectory_key() != self.cfg.trajectory_key() {
            return Err(TrainError::Mismatch("training config differs from the checkpoint's".into()));
        }
        if state.epoch > self.cfg.epochs {
            return Err(TrainError::Mismatch(format!(
                "checkpoint is at epoch {} but only {} epochs are configured",
                state.epoch, self.cfg.epochs
            )));
        }
        Ok(())
    }
}

/// Where [`train_loop`] writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct LoopOutputs {
    /// Checkpoints are named `epoch_XXXX.ckpt`, plus `final.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Metrics are appended as JSON lines.
    pub metrics_log: Option<PathBuf>,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Trains from `resume` (or a fresh state) up to `cfg.epochs`.
pub fn train_loop(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    resume: Option<(TrainState, TrainConfig)>,
    outputs: &LoopOutputs,
) -> Result<(TrainState, Vec<EpochMetrics>)> {
    let trainer = Trainer::new(manifest, cfg.clone())?;
    let mut state = match resume {
        Some((state, saved)) => {
            trainer.check_resume(&state, &saved)?;
            state
        }
        None => trainer.init_state()?,
    };
    if let Some(dir) = &outputs.checkpoint_dir {
        fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    }
    let mut log = match &outputs.metrics_log {
        Some(p) => Some(BufWriter::new(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(io_err(format!("opening {}", p.display())))?,
        )),
        None => None,
    };
    let mut metrics = Vec::new();
    while state.epoch < cfg.epochs {
        let m = trainer.run_epoch(&mut state)?;
        log::info!("epoch {} loss {:.6}", m.epoch, m.total);
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(&m).expect("metrics serialize");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(io_err("writing metrics log"))?;
        }
        metrics.push(m);
        if let Some(dir) = &outputs.checkpoint_dir {
            if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 {
                state.save(&dir.join(checkpoint_name(state.epoch)), cfg)?;
            }
        }
    }
    if let Some(dir) = &outputs.checkpoint_dir {
        state.save(&dir.join("final.ckpt"), cfg)?;
    }
    Ok((state, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_synthetic_corpus, SynthSpec};
    use crate::corpus::{GenBackend, GeneratedCaption, VerbPhrase};

    fn corpus() -> DatasetManifest {
        let mut m = make_synthetic_corpus(&SynthSpec {
            n_contexts: 3,
            verbs_per_context: 3,
            captions_per_cell: 2,
            frequency_skew: 0.0,
            seed: 4,
        })
        .unwrap();
        let first = m.captions[0].clone();
        for k in 0..7 {
            m.generations.push(GeneratedCaption {
                parent_video_id: first.video_id.clone(),
                parent_caption: first.text.clone(),
                text: format!("neg{k} thing"),
                kind: GenerationKind::HardNegative,
                backend: GenBackend::RandomVerb,
                verb_phrases: vec![VerbPhrase::new(&format!("neg{k}")).unwrap()],
                kept: true,
            });
        }
        m
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 3,
            seed: 9,
            encoder: EncoderConfig {
                dim: 6,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn batches_cover_each_caption_once_per_epoch() {
        let m = corpus();
        let t = Trainer::new(&m, cfg()).unwrap();
        // 18 captions, B = 4: four full batches plus a partial of 2.
        assert_eq!(t.steps_per_epoch(), 5);
        let mut seen: Vec<usize> = t.epoch_batches(0).iter().flat_map(|b| b.captions.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..18).collect::<Vec<_>>());
        assert!(t.sample_batch(0, 5).is_none());
    }

    #[test]
    fn hard_negatives_are_capped_and_distinct() {
        let m = corpus();
        let t = Trainer::new(&m, cfg()).unwrap();
        for e in 0..5 {
            for b in t.epoch_batches(e) {
                for (i, &ci) in b.captions.iter().enumerate() {
                    let h = &b.hard[i];
                    if ci == 0 {
                        assert_eq!(h.len(), 5);
                        let mut d = h.clone();
                        d.sort();
                        d.dedup();
                        assert_eq!(d.len(), 5);
                    } else {
                        assert!(h.is_empty());
                    }
                    assert_eq!(b.verb[i], Some(0));
                }
            }
        }
    }

    #[test]
    fn index_streams_are_reproducible() {
        let m = corpus();
        let a: Vec<_> = (0..4).flat_map(|e| Trainer::new(&m, cfg()).unwrap().epoch_batches(e)).collect();
        let b: Vec<_> = (0..4).flat_map(|e| Trainer::new(&m, cfg()).unwrap().epoch_batches(e)).collect();
        assert_eq!(a, b);
        let other = TrainConfig { seed: 10, ..cfg() };
        let c: Vec<_> = (0..4).flat_map(|e| Trainer::new(&m, other.clone()).unwrap().epoch_batches(e)).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn short_last_batch_is_dropped() {
        let m = corpus();
        let c = TrainConfig { batch_size: 5, ..cfg() };
        let t = Trainer::new(&m, c).unwrap();
        // 18 = 3·5 + 3 keeps the tail, 18 = 1·17 + 1 drops it.
        assert_eq!(t.steps_per_epoch(), 4);
        let t = Trainer::new(&m, TrainConfig { batch_size: 17, ..cfg() }).unwrap();
        assert_eq!(t.steps_per_epoch(), 1);
        let t = Trainer::new(&m, TrainConfig { batch_size: 500, ..cfg() }).unwrap();
        assert_eq!(t.batch_size(), 18);
    }

    #[test]
    fn zero_lr_and_frozen_towers_leave_parameters() {
        let m = corpus();
        for c in [
            TrainConfig { learning_rate: 0.0, ..cfg() },
            TrainConfig {
                learning_rate: 0.5,
                encoder: EncoderConfig {
                    dim: 6,
                    freeze_video: true,
                    freeze_text: true,
                    ..Default::default()
                },
                ..cfg()
            },
        ] {
            let t = Trainer::new(&m, c).unwrap();
            let mut s = t.init_state().unwrap();
            let before = s.encoders.clone();
            t.run_epoch(&mut s).unwrap();
            assert_eq!(s.encoders, before);
        }
    }

    #[test]
    fn step_descends_on_small_batch() {
        let m = corpus();
        let c = TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            ..cfg()
        };
        let t = Trainer::new(&m, c).unwrap();
        let mut s = t.init_state().unwrap();
        let rec = BatchRecord {
            epoch: 0,
            step: 0,
            captions: vec![0, 5],
            hard: vec![vec![0, 1], vec![]],
            verb: vec![Some(0), Some(0)],
        };
        let before = t.loss_and_grads(&s.encoders, &rec).unwrap().0.total;
        t.train_step(&mut s, &rec).unwrap();
        let after = t.loss_and_grads(&s.encoders, &rec).unwrap().0.total;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn epochs_zero_returns_initial_state() {
        let m = corpus();
        let c = TrainConfig { epochs: 0, ..cfg() };
        let (s, metrics) = train_loop(&m, &c, None, &LoopOutputs::default()).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(s, Trainer::new(&m, c).unwrap().init_state().unwrap());
    }

    #[test]
    fn resume_is_bit_exact() {
        let m = corpus();
        let dir = tempfile::tempdir().unwrap();
        let full = TrainConfig { epochs: 4, ..cfg() };
        let (straight, _) = train_loop(&m, &full, None, &LoopOutputs::default()).unwrap();

        let part = TrainConfig {
            epochs: 2,
            checkpoint_every: 1,
            ..cfg()
        };
        let out = LoopOutputs {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            metrics_log: Some(dir.path().join("metrics.jsonl")),
        };
        train_loop(&m, &part, None, &out).unwrap();
        let loaded = TrainState::load(&dir.path().join(checkpoint_name(2))).unwrap();
        let (resumed, _) = train_loop(&m, &full, Some(loaded), &LoopOutputs::default()).unwrap();
        assert_eq!(resumed, straight);
        let log = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 2);

        let bad = TrainConfig { seed: 1, ..full };
        let loaded = TrainState::load(&dir.path().join("final.ckpt")).unwrap();
        assert!(matches!(train_loop(&m, &bad, Some(loaded), &LoopOutputs::default()), Err(TrainError::Mismatch(_))));
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let m = corpus();
        let t = Trainer::new(&m, cfg()).unwrap();
        let mut s = t.init_state().unwrap();
        s.encoders.video_table[0] = f64::NAN;
        let err = (0..t.steps_per_epoch())
            .map(|k| t.sample_batch(0, k).unwrap())
            .find(|b| b.captions.contains(&0))
            .map(|b| t.train_step(&mut s, &b).unwrap_err())
            .unwrap();
        match err {
            TrainError::NonFinite { record } => assert!(record.captions.contains(&0)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn moving_average_loss_is_non_increasing() {
        // Full-batch steps on distinct captions: minibatch composition noise
        // on a plateau would otherwise dominate the average.
        let m = make_synthetic_corpus(&SynthSpec {
            n_contexts: 4,
            verbs_per_context: 3,
            captions_per_cell: 1,
            frequency_skew: 0.0,
            seed: 1,
        })
        .unwrap();
        let c = TrainConfig {
            batch_size: 12,
            epochs: 60,
            seed: 2,
            encoder: EncoderConfig {
                dim: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let (_, metrics) = train_loop(&m, &c, None, &LoopOutputs::default()).unwrap();
        let loss: Vec<f64> = metrics.iter().map(|x| x.total).collect();
        let ma: Vec<f64> = loss.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        for w in ma.windows(2) {
            assert!(w[1] <= w[0], "moving average rose: {} -> {}", w[0], w[1]);
        }
    }
}
