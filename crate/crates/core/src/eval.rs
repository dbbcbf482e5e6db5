//! Verb-focused evaluation: multiple choice, retrieval, zero-shot
//! classification, pair AP, confusion matrices and the shared-noun split.
//!
//! Every metric is computed from a plain score matrix first, so the scoring
//! rules can be checked without encoders. Argmax ties go to the lowest index
//! and rank ties count earlier candidates as ahead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::normalize_text;
use crate::encoders::{EncoderError, Encoders};
use crate::seeding::rng_for;
use crate::textgen::{VerbForm, VerbLexicon};
use crate::vecops::dot;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Positive,
    RandomNegative,
    HardVerbNegative,
}

pub const MC_OPTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipleChoiceItem {
    pub video_id: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub option_kinds: Vec<OptionKind>,
}

impl MultipleChoiceItem {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() != MC_OPTIONS || self.option_kinds.len() != MC_OPTIONS {
            return Err(EvalError::InvalidTask(format!(
                "multiple-choice item for {} needs {MC_OPTIONS} options and kinds",
                self.video_id
            )));
        }
        let positives: Vec<usize> = (0..MC_OPTIONS).filter(|&i| self.option_kinds[i] == OptionKind::Positive).collect();
        if positives != [self.answer_index] {
            return Err(EvalError::InvalidTask(format!(
                "multiple-choice item for {} must have exactly one positive, at answer_index",
                self.video_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalPair {
    pub video_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePair {
    pub video_id: String,
    pub text: String,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassificationTask {
    pub labels: Vec<String>,
    /// `(video_id, class_index)`
    pub items: Vec<(String, usize)>,
    /// Classes whose items form the verb-focused subset; every label stays a
    /// candidate when scoring them.
    pub verb_split: Option<Vec<usize>>,
}

impl ClassificationTask {
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(EvalError::InvalidTask("classification task has no labels".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &self.labels {
            if !seen.insert(l.as_str()) {
                return Err(EvalError::InvalidTask(format!("duplicate class label {l:?}")));
            }
        }
        let n = self.labels.len();
        let in_range = |c: usize| -> Result<()> {
            if c >= n {
                return Err(EvalError::InvalidTask(format!("class index {c} out of range ({n} labels)")));
            }
            Ok(())
        };
        for (_, c) in &self.items {
            in_range(*c)?;
        }
        for &c in self.verb_split.iter().flatten() {
            in_range(c)?;
        }
        Ok(())
    }
}

/// Index of the largest score, lowest index on ties. NaN never wins.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.map_or(true, |b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// 1-based rank of `target`: one plus the number of candidates scoring
/// higher, plus the equal-scoring candidates at a lower index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_items: usize,
    pub accuracy: f64,
    /// How often each option kind was picked.
    pub picks: BTreeMap<OptionKind, usize>,
    /// Fraction of items whose pick was a hard verb negative.
    pub hard_verb_picked: f64,
    pub predictions: Vec<usize>,
}

/// Multiple choice from per-item option scores.
pub fn mc_from_scores(items: &[MultipleChoiceItem], scores: &[Vec<f64>]) -> Result<McReport> {
    if items.len() != scores.len() {
        return Err(EvalError::InvalidTask("one score row per item is required".into()));
    }
    let mut picks = BTreeMap::new();
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(items.len());
    for (item, row) in items.iter().zip(scores) {
        item.validate()?;
        let p = argmax_first(row).ok_or_else(|| EvalError::InvalidTask("all option scores are NaN".into()))?;
        correct += usize::from(p == item.answer_index);
        *picks.entry(item.option_kinds[p]).or_insert(0) += 1;
        predictions.push(p);
    }
    let n = items.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(McReport {
        n_items: n,
        accuracy: frac(correct),
        hard_verb_picked: frac(*picks.get(&OptionKind::HardVerbNegative).unwrap_or(&0)),
        picks,
        predictions,
    })
}

pub fn eval_multiple_choice(enc: &Encoders, items: &[MultipleChoiceItem]) -> Result<McReport> {
    let mut scores = Vec::with_capacity(items.len());
    for item in items {
        item.validate()?;
        let v = enc.encode_video(&item.video_id)?;
        scores.push(
            item.options
                .iter()
                .map(|o| Ok(dot(&v, &enc.encode_text(o)?)))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    mc_from_scores(items, &scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub n_pairs: usize,
    /// `(k, R@k)` for text-to-video queries.
    pub t2v: Vec<(usize, f64)>,
    pub v2t: Vec<(usize, f64)>,
}

/// Recall at each `k` from `sim[i][j]` = similarity of video `i` and text
/// `j`, where pair `i` is the true match.
pub fn retrieval_from_sim(sim: &[Vec<f64>], ks: &[usize]) -> Result<RetrievalReport> {
    let n = sim.len();
    if sim.iter().any(|r| r.len() != n) {
        return Err(EvalError::InvalidTask("similarity matrix must be square".into()));
    }
    let v2t_ranks: Vec<usize> = (0..n).map(|i| rank_of(&sim[i], i)).collect();
    let t2v_ranks: Vec<usize> = (0..n)
        .map(|j| {
            let col: Vec<f64> = sim.iter().map(|r| r[j]).collect();
            rank_of(&col, j)
        })
        .collect();
    let recall = |ranks: &[usize]| -> Vec<(usize, f64)> {
        ks.iter()
            .map(|&k| {
                let hits = ranks.iter().filter(|&&r| r <= k).count();
                (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
            })
            .collect()
    };
    Ok(RetrievalReport {
        n_pairs: n,
        t2v: recall(&t2v_ranks),
        v2t: recall(&v2t_ranks),
    })
}

pub fn eval_retrieval(enc: &Encoders, pairs: &[RetrievalPair], ks: &[usize]) -> Result<RetrievalReport> {
    let videos = pairs.iter().map(|p| enc.encode_video(&p.video_id)).collect::<std::result::Result<Vec<_>, _>>()?;
    let texts = pairs.iter().map(|p| enc.encode_text(&p.text)).collect::<std::result::Result<Vec<_>, _>>()?;
    let sim: Vec<Vec<f64>> = videos.iter().map(|v| texts.iter().map(|t| dot(v, t)).collect()).collect();
    retrieval_from_sim(&sim, ks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub n_items: usize,
    pub top1: f64,
    pub top5: f64,
    /// Mean of top-1 and top-5.
    pub average: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Rows divided by their sums; all-zero rows stay zero.
    pub confusion_normalized: Vec<Vec<f64>>,
    /// Fraction of items predicted as each class.
    pub shares: Vec<f64>,
    /// Fraction of items whose true class is each class.
    pub prevalence: Vec<f64>,
}

/// Zero-shot metrics from `scores[item][class]` and true classes.
pub fn zero_shot_from_scores(scores: &[Vec<f64>], truth: &[usize], n_classes: usize) -> Result<ZeroShotReport> {
    if scores.len() != truth.len() {
        return Err(EvalError::InvalidTask("one score row per item is required".into()));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let (mut top1, mut top5) = (0usize, 0usize);
    for (row, &t) in scores.iter().zip(truth) {
        if row.len() != n_classes || t >= n_classes {
            return Err(EvalError::InvalidTask("score row or class index does not match the label count".into()));
        }
        let p = argmax_first(row).ok_or_else(|| EvalError::InvalidTask("all class scores are NaN".into()))?;
        confusion[t][p] += 1;
        let r = rank_of(row, t);
        top1 += usize::from(r <= 1);
        top5 += usize::from(r <= 5);
    }
    let n = truth.len();
    let frac = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let confusion_normalized = confusion
        .iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
        })
        .collect();
    let shares = (0..n_classes).map(|c| frac(confusion.iter().map(|r| r[c]).sum())).collect();
    let prevalence = confusion.iter().map(|r| frac(r.iter().sum())).collect();
    let (top1, top5) = (frac(top1 as u64), frac(top5 as u64));
    Ok(ZeroShotReport {
        n_items: n,
        top1,
        top5,
        average: (top1 + top5) / 2.0,
        confusion,
        confusion_normalized,
        shares,
        prevalence,
    })
}

/// Label-by-item similarity matrix of a classification task.
pub fn class_scores(enc: &Encoders, task: &ClassificationTask) -> Result<Vec<Vec<f64>>> {
    let labels = task.labels.iter().map(|l| enc.encode_text(l)).collect::<std::result::Result<Vec<_>, _>>()?;
    task.items
        .iter()
        .map(|(vid, _)| {
            let v = enc.encode_video(vid)?;
            Ok(labels.iter().map(|l| dot(&v, l)).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotEval {
    pub all: ZeroShotReport,
    /// Items of the verb-split classes only, still ranked over every label.
    pub verb_split: Option<ZeroShotReport>,
}

pub fn eval_zero_shot(enc: &Encoders, task: &ClassificationTask) -> Result<ZeroShotEval> {
    task.validate()?;
    let scores = class_scores(enc, task)?;
    let truth: Vec<usize> = task.items.iter().map(|(_, c)| *c).collect();
    let all = zero_shot_from_scores(&scores, &truth, task.labels.len())?;
    let verb_split = match &task.verb_split {
        Some(split) => {
            let keep: BTreeSet<usize> = split.iter().copied().collect();
            let (s, t): (Vec<Vec<f64>>, Vec<usize>) = scores
                .iter()
                .zip(&truth)
                .filter(|(_, c)| keep.contains(c))
                .map(|(s, &c)| (s.clone(), c))
                .unzip();
            Some(zero_shot_from_scores(&s, &t, task.labels.len())?)
        }
        None => None,
    };
    Ok(ZeroShotEval { all, verb_split })
}

/// Average precision of `scores` against `positive` flags: the mean of the
/// precision at each positive when sorted by descending score, ties in input
/// order. `None` when there is no positive.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

pub fn eval_pair_ap(enc: &Encoders, pairs: &[ProbePair]) -> Result<Option<f64>> {
    let scores = pairs
        .iter()
        .map(|p| Ok(dot(&enc.encode_video(&p.video_id)?, &enc.encode_text(&p.text)?)))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.positive).collect();
    Ok(average_precision(&scores, &labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub top1: f64,
    pub top5: f64,
    pub average: f64,
}

impl From<&ZeroShotReport> for TopK {
    fn from(r: &ZeroShotReport) -> Self {
        Self {
            top1: r.top1,
            top5: r.top5,
            average: r.average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub m: usize,
    /// Sorted class indices drawn for each repeat.
    pub classes: Vec<Vec<usize>>,
    pub per_repeat: Vec<TopK>,
    pub mean: TopK,
}

/// Classes drawn for repeat `r`: all classes when `m` covers them, else a
/// seeded draw without replacement, sorted.
pub fn subset_classes(n_classes: usize, m: usize, seed: u64, repeat: usize) -> Vec<usize> {
    if m >= n_classes {
        return (0..n_classes).collect();
    }
    let mut c = index::sample(&mut rng_for(&[seed, repeat as u64]), n_classes, m).into_vec();
    c.sort_unstable();
    c
}

/// Zero-shot metrics restricted to `classes`: only those labels compete and
/// only their items are scored.
pub fn restrict_scores(scores: &[Vec<f64>], truth: &[usize], classes: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let pos: HashMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    scores
        .iter()
        .zip(truth)
        .filter_map(|(row, t)| {
            let nt = *pos.get(t)?;
            Some((classes.iter().map(|&c| row[c]).collect(), nt))
        })
        .unzip()
}

/// Repeated class-subset evaluation from a precomputed score matrix.
pub fn subset_resample_scores(
    scores: &[Vec<f64>],
    truth: &[usize],
    n_classes: usize,
    m: usize,
    repeats: usize,
    seed: u64,
) -> Result<SubsetReport> {
    if m == 0 || repeats == 0 {
        return Err(EvalError::InvalidTask("subset size and repeats must be >= 1".into()));
    }
    let mut classes = Vec::with_capacity(repeats);
    let mut per_repeat = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let c = subset_classes(n_classes, m, seed, r);
        let (s, t) = restrict_scores(scores, truth, &c);
        per_repeat.push(TopK::from(&zero_shot_from_scores(&s, &t, c.len())?));
        classes.push(c);
    }
    let k = repeats as f64;
    let mean = TopK {
        top1: per_repeat.iter().map(|x| x.top1).sum::<f64>() / k,
        top5: per_repeat.iter().map(|x| x.top5).sum::<f64>() / k,
        average: per_repeat.iter().map(|x| x.average).sum::<f64>() / k,
    };
    Ok(SubsetReport {
        m: m.min(n_classes),
        classes,
        per_repeat,
        mean,
    })
}

pub fn subset_resample_protocol(
    enc: &Encoders,
    task: &ClassificationTask,
    m: usize,
    repeats: usize,
    seed: u64,
) -> Result<SubsetReport> {
    task.validate()?;
    let scores = class_scores(enc, task)?;
    let truth: Vec<usize> = task.items.iter().map(|(_, c)| *c).collect();
    subset_resample_scores(&scores, &truth, task.labels.len(), m, repeats, seed)
}

const SPLIT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "or", "and", "with", "up", "into", "through", "on", "in", "of", "at", "to",
];

fn singular(word: &str) -> String {
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        word[..word.len() - 1].to_string()
    } else {
        word.to_string()
    }
}

/// Nouns and verbs of a class label: gerunds are the verbs, everything else
/// except function words is a noun, singularized.
fn label_parts(label: &str, lex: &VerbLexicon) -> (BTreeSet<String>, BTreeSet<String>) {
    let norm = normalize_text(label);
    let gerunds: BTreeMap<usize, String> = lex
        .tag(&norm)
        .into_iter()
        .filter(|t| t.form == VerbForm::Gerund)
        .map(|t| (t.index, t.lemma))
        .collect();
    let mut nouns = BTreeSet::new();
    for (i, tok) in norm.split(' ').filter(|t| !t.is_empty()).enumerate() {
        if !gerunds.contains_key(&i) && !SPLIT_STOPWORDS.contains(&tok) {
            nouns.insert(singular(tok));
        }
    }
    (nouns, gerunds.into_values().collect())
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Groups of labels that share a noun and contain at least two different
/// verb sets. Groups are ordered by their first member.
pub fn verb_split_groups(labels: &[String], lex: &VerbLexicon) -> Vec<Vec<usize>> {
    let parts: Vec<_> = labels.iter().map(|l| label_parts(l, lex)).collect();
    let mut parent: Vec<usize> = (0..labels.len()).collect();
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (i, (nouns, _)) in parts.iter().enumerate() {
        for n in nouns {
            match owner.get(n.as_str()) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    owner.insert(n, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..labels.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups
        .into_values()
        .filter(|g| {
            let verbs: BTreeSet<&BTreeSet<String>> = g.iter().map(|&i| &parts[i].1).collect();
            g.len() >= 2 && verbs.len() >= 2
        })
        .collect()
}

/// Sorted indices of the classes in [`verb_split_groups`].
pub fn build_verb_split(labels: &[String], lex: &VerbLexicon) -> Vec<usize> {
    let mut out: Vec<usize> = verb_split_groups(labels, lex).into_iter().flatten().collect();
    out.sort_unstable();
    out
}

/// Counts as comma-separated rows with a header of predicted labels.
pub fn confusion_csv(labels: &[String], confusion: &[Vec<u64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(confusion) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One line of a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskRecord {
    McItem {
        video_id: String,
        options: Vec<String>,
        answer_index: usize,
        option_kinds: Vec<OptionKind>,
    },
    RetrievalPair {
        video_id: String,
        text: String,
    },
    ClassLabels {
        labels: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verb_split: Option<Vec<usize>>,
    },
    ClassItem {
        video_id: String,
        class_index: usize,
    },
    ProbePair {
        video_id: String,
        text: String,
        positive: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalTasks {
    pub multiple_choice: Vec<MultipleChoiceItem>,
    pub retrieval: Vec<RetrievalPair>,
    pub classification: Option<ClassificationTask>,
    pub probes: Vec<ProbePair>,
}

impl EvalTasks {
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut out = Self::default();
        let mut labels: Option<(Vec<String>, Option<Vec<usize>>)> = None;
        let mut items = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TaskRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                TaskRecord::McItem {
                    video_id,
                    options,
                    answer_index,
                    option_kinds,
                } => {
                    let item = MultipleChoiceItem {
                        video_id,
                        options,
                        answer_index,
                        option_kinds,
                    };
                    item.validate().map_err(|e| EvalError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    out.multiple_choice.push(item);
                }
                TaskRecord::RetrievalPair { video_id, text } => out.retrieval.push(RetrievalPair { video_id, text }),
                TaskRecord::ClassLabels { labels: l, verb_split } => {
                    if labels.replace((l, verb_split)).is_some() {
                        return Err(EvalError::Parse {
                            line: i + 1,
                            message: "more than one class_labels record".into(),
                        });
                    }
                }
                TaskRecord::ClassItem { video_id, class_index } => items.push((video_id, class_index)),
                TaskRecord::ProbePair {
                    video_id,
                    text,
                    positive,
                } => out.probes.push(ProbePair {
                    video_id,
                    text,
                    positive,
                }),
            }
        }
        match labels {
            Some((labels, verb_split)) => {
                let task = ClassificationTask {
                    labels,
                    items,
                    verb_split,
                };
                task.validate()?;
                out.classification = Some(task);
            }
            None if !items.is_empty() => {
                return Err(EvalError::InvalidTask("class_item records without a class_labels record".into()))
            }
            None => {}
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn records(&self) -> Vec<TaskRecord> {
        let mut out = Vec::new();
        for m in &self.multiple_choice {
            out.push(TaskRecord::McItem {
                video_id: m.video_id.clone(),
                options: m.options.clone(),
                answer_index: m.answer_index,
                option_kinds: m.option_kinds.clone(),
            });
        }
        for r in &self.retrieval {
            out.push(TaskRecord::RetrievalPair {
                video_id: r.video_id.clone(),
                text: r.text.clone(),
            });
        }
        if let Some(c) = &self.classification {
            out.push(TaskRecord::ClassLabels {
                labels: c.labels.clone(),
                verb_split: c.verb_split.clone(),
            });
            for (video_id, class_index) in &c.items {
                out.push(TaskRecord::ClassItem {
                    video_id: video_id.clone(),
                    class_index: *class_index,
                });
            }
        }
        for p in &self.probes {
            out.push(TaskRecord::ProbePair {
                video_id: p.video_id.clone(),
                text: p.text.clone(),
                positive: p.positive,
            });
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in self.records() {
            writeln!(w, "{}", serde_json::to_string(&r).expect("task records serialize"))?;
        }
        Ok(())
    }
}

pub const RECALL_KS: &[usize] = &[1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub multiple_choice: Option<McReport>,
    pub retrieval: Option<RetrievalReport>,
    pub zero_shot: Option<ZeroShotEval>,
    pub probe_ap: Option<f64>,
}

/// Runs every task present in `tasks`.
pub fn evaluate(enc: &Encoders, tasks: &EvalTasks) -> Result<EvalReport> {
    Ok(EvalReport {
        multiple_choice: (!tasks.multiple_choice.is_empty())
            .then(|| eval_multiple_choice(enc, &tasks.multiple_choice))
            .transpose()?,
        retrieval: (!tasks.retrieval.is_empty())
            .then(|| eval_retrieval(enc, &tasks.retrieval, RECALL_KS))
            .transpose()?,
        zero_shot: tasks.classification.as_ref().map(|t| eval_zero_shot(enc, t)).transpose()?,
        probe_ap: if tasks.probes.is_empty() { None } else { eval_pair_ap(enc, &tasks.probes)? },
    })
}

impl EvalReport {
    pub fn render_text(&self, labels: Option<&[String]>) -> String {
        let mut s = String::new();
        if let Some(mc) = &self.multiple_choice {
            let _ = writeln!(s, "multiple choice  n={}  accuracy={:.4}", mc.n_items, mc.accuracy);
            for (k, c) in &mc.picks {
                let _ = writeln!(s, "  picked {k:?}: {c}");
            }
        }
        if let Some(r) = &self.retrieval {
            let _ = writeln!(s, "retrieval  n={}", r.n_pairs);
            for ((k, t2v), (_, v2t)) in r.t2v.iter().zip(&r.v2t) {
                let _ = writeln!(s, "  R@{k:<3} t2v={t2v:.4}  v2t={v2t:.4}");
            }
        }
        if let Some(z) = &self.zero_shot {
            let mut line = |name: &str, r: &ZeroShotReport| {
                let _ = writeln!(
                    s,
                    "zero-shot {name}  n={}  top1={:.4}  top5={:.4}  avg={:.4}",
                    r.n_items, r.top1, r.top5, r.average
                );
            };
            line("all", &z.all);
            if let Some(v) = &z.verb_split {
                line("verb-split", v);
            }
            if let Some(labels) = labels {
                let _ = writeln!(s, "  {:<28} {:>8} {:>10}", "class", "share", "prevalence");
                for (i, l) in labels.iter().enumerate() {
                    let _ = writeln!(s, "  {:<28} {:>8.4} {:>10.4}", l, z.all.shares[i], z.all.prevalence[i]);
                }
            }
        }
        if let Some(ap) = self.probe_ap {
            let _ = writeln!(s, "pair AP  {ap:.4}");
        }
        s
    }
}
