//! Independent oracles shared by the integration and acceptance tests.
//!
//! Loss values are recomputed by naive summation in 256-bit binary floats,
//! gradients by central differences, and eval metrics by quadratic
//! brute force. Nothing here calls the functions under test.
#![allow(dead_code)]

use dashu_float::round::mode::HalfAway;
use dashu_float::FBig;
use rand::Rng;

use vfc_core::calibration::calibrate_filter;
use vfc_core::corpus::{
    CaptionRecord, DatasetManifest, GenBackend, GeneratedCaption, GenerationKind, Split, VerbPhrase, VideoRecord,
};
use vfc_core::eval::{average_precision, mc_from_scores, retrieval_from_sim, zero_shot_from_scores, MultipleChoiceItem, OptionKind};
use vfc_core::losses::{
    combined_vfc, info_nce_t2v, info_nce_v2t, loss_chn, loss_hn_uncalibrated, loss_verb_phrase, BatchTensors, LossConfig,
    LossGrads, NceMode, NegativeVariant, TermOutput, VerbDirection,
};
use vfc_core::seeding::rng_for;

// ------------------------------------------------------------------ batches

/// Random batch with entries in `[-scale, scale]`, up to `max_hard` hard
/// negatives per item and a verb phrase with probability `verb_prob`.
pub fn random_batch(seed: u64, b: usize, dim: usize, max_hard: usize, verb_prob: f64, scale: f64) -> BatchTensors {
    let mut rng = rng_for(&[seed, 0xba7c]);
    let vec = |rng: &mut dyn rand::RngCore| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-scale..scale)).collect() };
    let videos = (0..b).map(|_| vec(&mut rng)).collect();
    let texts = (0..b).map(|_| vec(&mut rng)).collect();
    let hard = (0..b)
        .map(|_| {
            let n = rng.gen_range(0..=max_hard);
            (0..n).map(|_| vec(&mut rng)).collect()
        })
        .collect();
    let verbs = (0..b).map(|_| rng.gen_bool(verb_prob).then(|| vec(&mut rng))).collect();
    BatchTensors {
        videos,
        texts,
        hard,
        verbs,
    }
}

/// Batch where every vector is the same.
pub fn constant_batch(b: usize, dim: usize, hard: &[usize], with_verbs: bool) -> BatchTensors {
    let v = vec![0.3; dim];
    BatchTensors {
        videos: vec![v.clone(); b],
        texts: vec![v.clone(); b],
        hard: hard.iter().map(|&n| vec![v.clone(); n]).collect(),
        verbs: vec![with_verbs.then(|| v.clone()); b],
    }
}

fn params_mut(batch: &mut BatchTensors) -> Vec<&mut f64> {
    batch
        .videos
        .iter_mut()
        .chain(batch.texts.iter_mut())
        .chain(batch.hard.iter_mut().flatten())
        .chain(batch.verbs.iter_mut().flatten())
        .flat_map(|v| v.iter_mut())
        .collect()
}

/// Gradient entries in the same order as [`central_differences`].
pub fn flatten_grads(g: &LossGrads) -> Vec<f64> {
    g.videos
        .iter()
        .chain(&g.texts)
        .chain(g.hard.iter().flatten())
        .chain(g.verbs.iter().flatten())
        .flat_map(|v| v.iter().copied())
        .collect()
}

/// Central finite differences of `f` with step `h` over every batch entry.
pub fn central_differences(batch: &BatchTensors, h: f64, f: impl Fn(&BatchTensors) -> f64) -> Vec<f64> {
    let n = params_mut(&mut batch.clone()).len();
    (0..n)
        .map(|k| {
            let mut plus = batch.clone();
            *params_mut(&mut plus)[k] += h;
            let mut minus = batch.clone();
            *params_mut(&mut minus)[k] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = n(a).max(n(b));
    if scale == 0.0 {
        0.0
    } else {
        n(&diff) / scale
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ----------------------------------------------------- extended precision

type F = FBig<HalfAway, 2>;
const PREC: usize = 256;

fn hp(x: f64) -> F {
    F::try_from(x).expect("finite f64").with_precision(PREC).value()
}

fn hp_dot(a: &[f64], b: &[f64]) -> F {
    a.iter().zip(b).fold(hp(0.0), |acc, (x, y)| acc + hp(*x) * hp(*y))
}

fn to_f64(x: &F) -> f64 {
    x.to_f64().value()
}

/// Which loss term the oracle evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    T2v,
    V2t(NegativeVariant),
    VerbPhrase,
}

/// One row as plain vectors: anchor, positive, negatives.
struct Row<'a> {
    anchor: &'a [f64],
    positive: &'a [f64],
    negatives: Vec<&'a [f64]>,
}

fn rows<'a>(batch: &'a BatchTensors, term: Term, verb_to_video: bool) -> Vec<Row<'a>> {
    let b = batch.videos.len();
    match term {
        Term::T2v => (0..b)
            .map(|i| Row {
                anchor: &batch.texts[i],
                positive: &batch.videos[i],
                negatives: (0..b).filter(|&j| j != i).map(|j| batch.videos[j].as_slice()).collect(),
            })
            .collect(),
        Term::V2t(variant) => (0..b)
            .map(|i| {
                let mut negatives: Vec<&[f64]> = (0..b).filter(|&j| j != i).map(|j| batch.texts[j].as_slice()).collect();
                let owners: Vec<usize> = match variant {
                    NegativeVariant::None => vec![],
                    NegativeVariant::CalibratedHn => vec![i],
                    NegativeVariant::HnUncalibrated => (0..b).collect(),
                };
                for j in owners {
                    negatives.extend(batch.hard[j].iter().map(|h| h.as_slice()));
                }
                Row {
                    anchor: &batch.videos[i],
                    positive: &batch.texts[i],
                    negatives,
                }
            })
            .collect(),
        Term::VerbPhrase => {
            let members: Vec<usize> = (0..b).filter(|&i| batch.verbs[i].is_some()).collect();
            let verb = |i: usize| batch.verbs[i].as_deref().unwrap();
            members
                .iter()
                .map(|&i| {
                    let others = members.iter().filter(|&&j| j != i);
                    if verb_to_video {
                        Row {
                            anchor: verb(i),
                            positive: &batch.videos[i],
                            negatives: others.map(|&j| batch.videos[j].as_slice()).collect(),
                        }
                    } else {
                        Row {
                            anchor: &batch.videos[i],
                            positive: verb(i),
                            negatives: others.map(|&j| verb(j)).collect(),
                        }
                    }
                })
                .collect()
        }
    }
}

/// `−x_p + ln(e^{x_p} + Σ e^{x_j})`, or 0 with no negatives.
fn standard_row(xp: &F, xn: &[F]) -> F {
    if xn.is_empty() {
        return hp(0.0);
    }
    let z = xn.iter().fold(xp.exp(), |acc, x| acc + x.exp());
    z.ln() - xp
}

/// `−x_p + ln(α e^{x_p} + Σ w_j e^{x_j})` with `w_j = n e^{βx_j} / Σ_k e^{βx_k}`.
fn hardneg_row(xp: &F, xn: &[F], alpha: f64, beta: f64) -> F {
    let a = hp(alpha);
    if xn.is_empty() {
        return a.ln();
    }
    let bt = hp(beta);
    let n = hp(xn.len() as f64);
    let denom = xn.iter().fold(hp(0.0), |acc, x| acc + (&bt * x).exp());
    let weighted = xn.iter().fold(hp(0.0), |acc, x| acc + &n * (&bt * x).exp() / &denom * x.exp());
    (a * xp.exp() + weighted).ln() - xp
}

fn mean_rows(rows: &[Row], sigma: f64, hardneg: Option<(f64, f64)>) -> F {
    if rows.is_empty() {
        return hp(0.0);
    }
    let s = hp(sigma);
    let total = rows.iter().fold(hp(0.0), |acc, r| {
        let xp = hp_dot(r.anchor, r.positive) / &s;
        let xn: Vec<F> = r.negatives.iter().map(|n| hp_dot(r.anchor, n) / &s).collect();
        acc + match hardneg {
            Some((a, b)) => hardneg_row(&xp, &xn, a, b),
            None => standard_row(&xp, &xn),
        }
    });
    total / hp(rows.len() as f64)
}

/// Mean over rows of `ln(1 + #negatives)`: the row loss when every logit
/// is equal.
fn uniform_value(rows: &[Row]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| ((1 + r.negatives.len()) as f64).ln()).sum::<f64>() / rows.len() as f64
}

/// Extended-precision value of one term.
pub fn oracle_term(batch: &BatchTensors, cfg: &LossConfig, term: Term) -> f64 {
    let hardneg = (cfg.nce_mode == NceMode::HardnegNce && term != Term::VerbPhrase).then_some((cfg.alpha, cfg.beta));
    let forward = mean_rows(&rows(batch, term, false), cfg.sigma, hardneg);
    if term == Term::VerbPhrase && cfg.verb_phrase_direction == VerbDirection::Both {
        let back = mean_rows(&rows(batch, term, true), cfg.sigma, None);
        return to_f64(&((forward + back) / hp(2.0)));
    }
    to_f64(&forward)
}

/// Uniform-prediction divisor of one term, counted from the rows.
pub fn oracle_normalizer(batch: &BatchTensors, term: Term) -> f64 {
    uniform_value(&rows(batch, term, false))
}

/// Extended-precision combined loss.
pub fn oracle_combined(batch: &BatchTensors, cfg: &LossConfig) -> f64 {
    let terms = [
        (cfg.lambda1, Term::T2v),
        (cfg.lambda2, Term::V2t(cfg.negative_variant)),
        (cfg.lambda3, Term::VerbPhrase),
    ];
    terms
        .iter()
        .map(|&(lambda, term)| {
            let v = oracle_term(batch, cfg, term);
            if !cfg.normalize_by_uniform {
                lambda * v
            } else {
                let z = oracle_normalizer(batch, term);
                if z > 0.0 {
                    lambda * v / z
                } else {
                    0.0
                }
            }
        })
        .sum()
}

// ------------------------------------------------------------ eval oracles

/// Index `i` such that every other index scores lower, or equal at a
/// larger index.
pub fn brute_argmax(s: &[f64]) -> usize {
    (0..s.len())
        .find(|&i| (0..s.len()).all(|j| j == i || s[i] > s[j] || (s[i] == s[j] && i < j)))
        .expect("non-empty, NaN-free scores")
}

/// Position of `target` after a stable descending sort.
pub fn brute_rank(s: &[f64], target: usize) -> usize {
    let mut order: Vec<usize> = (0..s.len()).collect();
    // insertion sort keeps equal scores in index order
    for i in 1..order.len() {
        let mut k = i;
        while k > 0 && s[order[k]] > s[order[k - 1]] {
            order.swap(k, k - 1);
            k -= 1;
        }
    }
    1 + order.iter().position(|&i| i == target).unwrap()
}

pub fn brute_accuracy(scores: &[Vec<f64>], answers: &[usize]) -> f64 {
    let hits = scores.iter().zip(answers).filter(|(s, &a)| brute_argmax(s) == a).count();
    hits as f64 / answers.len() as f64
}

/// Recall@k of the diagonal, rows as queries.
pub fn brute_recall(sim: &[Vec<f64>], k: usize) -> f64 {
    let n = sim.len();
    let hits = (0..n).filter(|&i| brute_rank(&sim[i], i) <= k).count();
    hits as f64 / n as f64
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m[0].len()).map(|j| m.iter().map(|r| r[j]).collect()).collect()
}

pub fn brute_topk(scores: &[Vec<f64>], truth: &[usize], k: usize) -> f64 {
    let hits = scores.iter().zip(truth).filter(|(s, &t)| brute_rank(s, t) <= k).count();
    hits as f64 / truth.len() as f64
}

/// Mean over positives of precision at the positive's rank.
pub fn brute_ap(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let total: f64 = pos
        .iter()
        .map(|&i| {
            let r = brute_rank(scores, i);
            let above = pos.iter().filter(|&&j| brute_rank(scores, j) <= r).count();
            above as f64 / r as f64
        })
        .sum();
    Some(total / pos.len() as f64)
}

pub fn brute_confusion(scores: &[Vec<f64>], truth: &[usize], n: usize) -> Vec<Vec<u64>> {
    (0..n)
        .map(|t| {
            (0..n)
                .map(|p| {
                    scores
                        .iter()
                        .zip(truth)
                        .filter(|(s, &tt)| tt == t && brute_argmax(s) == p)
                        .count() as u64
                })
                .collect()
        })
        .collect()
}

/// Scores drawn from a small grid so ties occur.
pub fn grid_scores(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0..6) as f64 * 0.25 - 0.5).collect())
        .collect()
}

// ------------------------------------------------------------------ suites

type TermFn = fn(&BatchTensors, &LossConfig) -> vfc_core::losses::Result<TermOutput>;

/// Named single-term cases: loss function, oracle term and config.
pub fn term_cases() -> Vec<(String, TermFn, Term, LossConfig)> {
    let base = LossConfig {
        sigma: 0.1,
        ..LossConfig::default()
    };
    let hardneg = LossConfig {
        nce_mode: NceMode::HardnegNce,
        alpha: 1.5,
        beta: 0.3,
        ..base.clone()
    };
    let both = LossConfig {
        verb_phrase_direction: VerbDirection::Both,
        ..base.clone()
    };
    let mut out: Vec<(String, TermFn, Term, LossConfig)> = Vec::new();
    for (mode, cfg) in [("standard", &base), ("hardneg_nce", &hardneg)] {
        out.push((format!("t2v/{mode}"), info_nce_t2v, Term::T2v, cfg.clone()));
        out.push((format!("v2t/{mode}"), info_nce_v2t, Term::V2t(NegativeVariant::None), cfg.clone()));
        out.push((format!("hn/{mode}"), loss_hn_uncalibrated, Term::V2t(NegativeVariant::HnUncalibrated), cfg.clone()));
        out.push((format!("chn/{mode}"), loss_chn, Term::V2t(NegativeVariant::CalibratedHn), cfg.clone()));
    }
    out.push(("verb_phrase/v2t".into(), loss_verb_phrase, Term::VerbPhrase, base.clone()));
    out.push(("verb_phrase/both".into(), loss_verb_phrase, Term::VerbPhrase, both));
    out
}

/// Combined-loss configs over every variant, mode and normalization.
pub fn combined_cases() -> Vec<(String, LossConfig)> {
    let mut out = Vec::new();
    for variant in [NegativeVariant::None, NegativeVariant::HnUncalibrated, NegativeVariant::CalibratedHn] {
        for mode in [NceMode::Standard, NceMode::HardnegNce] {
            for normalize in [true, false] {
                out.push((
                    format!("combined/{variant:?}/{mode:?}/normalized={normalize}"),
                    LossConfig {
                        sigma: 0.1,
                        negative_variant: variant,
                        nce_mode: mode,
                        normalize_by_uniform: normalize,
                        verb_phrase_direction: if normalize { VerbDirection::V2tOnly } else { VerbDirection::Both },
                        ..LossConfig::default()
                    },
                ));
            }
        }
    }
    out
}

pub const GRAD_BATCHES: [usize; 3] = [2, 4, 8];
pub const GRAD_DIMS: [usize; 2] = [3, 8];
pub const GRAD_SEEDS: u64 = 3;

/// Worst analytic-vs-central-difference relative error per case.
pub fn gradient_suite(h: f64) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let batches = || {
        GRAD_BATCHES.iter().flat_map(|&b| {
            GRAD_DIMS
                .iter()
                .flat_map(move |&d| (0..GRAD_SEEDS).map(move |s| random_batch(s * 100 + (b * 10 + d) as u64, b, d, 3, 0.7, 0.5)))
        })
    };
    for (name, f, _, cfg) in term_cases() {
        let worst = batches()
            .map(|batch| {
                let analytic = flatten_grads(&f(&batch, &cfg).unwrap().grads);
                let fd = central_differences(&batch, h, |x| f(x, &cfg).unwrap().value);
                relative_error(&analytic, &fd)
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
    }
    for (name, cfg) in combined_cases() {
        let worst = batches()
            .map(|batch| {
                let analytic = flatten_grads(&combined_vfc(&batch, &cfg).unwrap().grads);
                let fd = central_differences(&batch, h, |x| combined_vfc(x, &cfg).unwrap().total);
                relative_error(&analytic, &fd)
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
    }
    out
}

/// Worst relative gap between f64 loss values and the extended-precision
/// oracle, per case, over batches of size 2..=8.
pub fn loss_oracle_suite() -> Vec<(String, f64)> {
    const SIGMAS: [f64; 3] = [5e-3, 0.05, 0.5];
    let batches = || {
        (2..=8usize).flat_map(move |b| {
            SIGMAS
                .into_iter()
                .enumerate()
                .map(move |(k, sigma)| (random_batch(7_000 + (b * 10 + k) as u64, b, 6, 3, 0.6, 0.3), sigma))
        })
    };
    let mut out = Vec::new();
    for (name, f, term, cfg) in term_cases() {
        let worst = batches()
            .map(|(batch, sigma)| {
                let cfg = LossConfig { sigma, ..cfg.clone() };
                rel(f(&batch, &cfg).unwrap().value, oracle_term(&batch, &cfg, term))
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
    }
    for (name, cfg) in combined_cases() {
        let worst = batches()
            .map(|(batch, sigma)| {
                let cfg = LossConfig { sigma, ..cfg.clone() };
                rel(combined_vfc(&batch, &cfg).unwrap().total, oracle_combined(&batch, &cfg))
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
    }
    out
}

/// Worst `|normalized − 1|` per term on all-equal embeddings.
pub fn uniform_identity_suite() -> Vec<(String, f64)> {
    let shapes: [(usize, &[usize]); 4] = [(2, &[0, 3]), (4, &[2, 2, 2, 2]), (5, &[0, 1, 2, 3, 4]), (8, &[5; 8])];
    let mut out = Vec::new();
    for (name, f, _, cfg) in term_cases() {
        let cfg = LossConfig {
            alpha: 1.0,
            ..cfg
        };
        let worst = shapes
            .iter()
            .flat_map(|&(b, hard)| [5e-3, 0.05, 1.0].map(|sigma| (b, hard, sigma)))
            .map(|(b, hard, sigma)| {
                let batch = constant_batch(b, 4, hard, true);
                let t = f(&batch, &LossConfig { sigma, ..cfg.clone() }).unwrap();
                (t.normalized() - 1.0).abs()
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
    }
    out
}

fn mc_item(answer: usize) -> MultipleChoiceItem {
    MultipleChoiceItem {
        video_id: "v".into(),
        options: (0..5).map(|k| format!("o{k}")).collect(),
        answer_index: answer,
        option_kinds: (0..5)
            .map(|k| if k == answer { OptionKind::Positive } else { OptionKind::HardVerbNegative })
            .collect(),
    }
}

/// Worst gap between each eval metric and its brute-force oracle over
/// random tie-heavy instances of up to 50 items.
pub fn eval_oracle_suite(instances: u64) -> Vec<(String, f64)> {
    let mut worst = std::collections::BTreeMap::<String, f64>::new();
    let mut bump = |k: &str, v: f64| {
        let e = worst.entry(k.to_string()).or_insert(0.0);
        *e = e.max(v);
    };
    for seed in 0..instances {
        let mut rng = rng_for(&[seed, 0xe7a1]);
        let n = rng.gen_range(1..=50);

        let scores = grid_scores(&mut rng, n, 5);
        let answers: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let items: Vec<MultipleChoiceItem> = answers.iter().map(|&a| mc_item(a)).collect();
        let mc = mc_from_scores(&items, &scores).unwrap();
        bump("mc_accuracy", (mc.accuracy - brute_accuracy(&scores, &answers)).abs());

        let sim = grid_scores(&mut rng, n, n);
        let r = retrieval_from_sim(&sim, &[1, 5, 10]).unwrap();
        let simt = transpose(&sim);
        for (k, v) in &r.v2t {
            bump("recall_v2t", (v - brute_recall(&sim, *k)).abs());
        }
        for (k, v) in &r.t2v {
            bump("recall_t2v", (v - brute_recall(&simt, *k)).abs());
        }

        let classes = rng.gen_range(1..=12);
        let scores = grid_scores(&mut rng, n, classes);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let z = zero_shot_from_scores(&scores, &truth, classes).unwrap();
        bump("top1", (z.top1 - brute_topk(&scores, &truth, 1)).abs());
        bump("top5", (z.top5 - brute_topk(&scores, &truth, 5)).abs());
        let conf = brute_confusion(&scores, &truth, classes);
        bump("confusion", if z.confusion == conf { 0.0 } else { 1.0 });

        let flat: Vec<f64> = grid_scores(&mut rng, 1, n).remove(0);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let ap = match (average_precision(&flat, &labels), brute_ap(&flat, &labels)) {
            (Some(a), Some(b)) => (a - b).abs(),
            (None, None) => 0.0,
            _ => 1.0,
        };
        bump("average_precision", ap);
    }
    worst.into_iter().collect()
}

// ------------------------------------------------------------- manifests

const PHRASES: [&str; 8] = ["run", "eat", "jump", "cut onion", "pour water", "wave", "sit", "climb rope"];
const WORDS: [&str; 9] = ["a", "man", "dog", "café", "\"quoted\"", "on", "the\tgrass", "line\nbreak", "x"];

fn pick_phrases(rng: &mut impl Rng, max: usize) -> Vec<VerbPhrase> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| VerbPhrase::new(PHRASES[rng.gen_range(0..PHRASES.len())]).unwrap()).collect()
}

fn words(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..6);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Valid random manifest: mixed splits, repeated and missing verb phrases,
/// kept and discarded hard negatives, and some positives.
pub fn random_manifest(seed: u64) -> DatasetManifest {
    let mut rng = rng_for(&[seed, 0x3a11]);
    let mut m = DatasetManifest::default();
    let n_videos = rng.gen_range(1..12);
    for v in 0..n_videos {
        let split = [Split::Train, Split::Train, Split::Val, Split::Test][rng.gen_range(0..4)];
        m.videos.push(VideoRecord {
            video_id: format!("vid{v}"),
            split,
        });
    }
    for _ in 0..rng.gen_range(0..20) {
        let vid = format!("vid{}", rng.gen_range(0..n_videos));
        let phrases = pick_phrases(&mut rng, 2);
        m.captions.push(CaptionRecord::new(vid, words(&mut rng), phrases));
    }
    if m.captions.is_empty() {
        return m;
    }
    for _ in 0..rng.gen_range(0..40) {
        let parent = m.captions[rng.gen_range(0..m.captions.len())].clone();
        let kind = if rng.gen_bool(0.85) {
            GenerationKind::HardNegative
        } else {
            GenerationKind::PositiveParaphrase
        };
        m.generations.push(GeneratedCaption {
            parent_video_id: parent.video_id,
            parent_caption: parent.text,
            text: words(&mut rng),
            kind,
            backend: [GenBackend::LlmCompletion, GenBackend::RandomVerb, GenBackend::T5Cloze][rng.gen_range(0..3)],
            verb_phrases: pick_phrases(&mut rng, 2),
            kept: rng.gen_bool(0.9),
        });
    }
    m
}

/// Per-concept (train-caption count, kept hard-negative count), by a
/// direct scan.
pub fn scan_counts(m: &DatasetManifest) -> std::collections::BTreeMap<String, (usize, usize)> {
    let mut out = std::collections::BTreeMap::<String, (usize, usize)>::new();
    for c in &m.captions {
        let train = m.videos.iter().any(|v| v.video_id == c.video_id && v.split == Split::Train);
        if train {
            for p in &c.verb_phrases {
                out.entry(p.as_str().to_string()).or_default().0 += 1;
            }
        }
    }
    for g in &m.generations {
        if g.kind == GenerationKind::HardNegative && g.kept {
            for p in &g.verb_phrases {
                out.entry(p.as_str().to_string()).or_default().1 += 1;
            }
        }
    }
    out
}

/// Number of randomized manifests violating a calibration post-condition:
/// kept G > S, kept G > 0 with S = 0, a non-idempotent second pass, or any
/// change outside the hard negatives' `kept` flags.
pub fn calibration_violations(manifests: u64, batch_size: usize) -> Vec<String> {
    let mut bad = Vec::new();
    for seed in 0..manifests {
        let m = random_manifest(seed);
        let (once, _) = calibrate_filter(&m, batch_size);
        let (twice, _) = calibrate_filter(&once, batch_size);
        for (concept, (s, g)) in scan_counts(&once) {
            if g > s {
                bad.push(format!("seed {seed}: {concept} kept {g} > supply {s}"));
            }
        }
        if once != twice {
            bad.push(format!("seed {seed}: second pass changed the manifest"));
        }
        let untouched = m.generations.iter().zip(&once.generations).all(|(a, b)| {
            let flag_ok = a.kind == GenerationKind::HardNegative && (a.kept || !b.kept) || a.kept == b.kept;
            flag_ok && GeneratedCaption { kept: b.kept, ..a.clone() } == *b
        });
        if m.captions != once.captions || m.videos != once.videos || !untouched {
            bad.push(format!("seed {seed}: filter changed more than kept flags"));
        }
    }
    bad
}

// ------------------------------------------------------- post-processing

pub const TRANSCRIPT: &str = include_str!("../fixtures/postprocess_transcript.txt");
pub const EXPECTED: &str = include_str!("../fixtures/postprocess_expected.txt");

/// Post-processed fixture transcript and the checked-in expected list.
pub fn postprocess_fixture() -> (Vec<String>, Vec<String>) {
    let parent = CaptionRecord::new(
        "v1",
        "A man walks his dog in the park.",
        vfc_core::corpus::verb_phrases(&["walks"]),
    );
    let got = vfc_core::textgen::postprocess::postprocess(TRANSCRIPT, &parent, &vfc_core::textgen::VerbLexicon::builtin())
        .into_iter()
        .map(|g| g.text)
        .collect();
    (got, EXPECTED.lines().map(str::to_string).collect())
}
