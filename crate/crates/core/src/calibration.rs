//! Concept statistics, negative/positive usage ratios, and the filter that
//! caps each concept's generated negatives at its caption count.
//!
//! For a concept ω, `S_ω` counts its occurrences across train captions and
//! `G_ω` its occurrences across kept hard-negative generations. Under batch
//! size `B` a concept is used as a negative versus as a positive at ratio:
//!
//! | variant        | ratio                     |
//! |----------------|---------------------------|
//! | baseline       | `(B−1)`                   |
//! | uncalibrated   | `((B−1)S_ω + B·G_ω)/S_ω`  |
//! | calibrated     | `((B−1)S_ω + G_ω)/S_ω`    |

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{DatasetManifest, GeneratedCaption, GenerationKind, Split, VerbPhrase};
use crate::losses::NegativeVariant;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("ratio undefined for concept {0:?}: it never occurs in a train caption")]
    UndefinedRatio(String),
    #[error("batch size must be >= 2, got {0}")]
    BatchSize(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptStats {
    pub concept: VerbPhrase,
    pub s_count: usize,
    pub g_count: usize,
}

/// Per-concept counts over train captions and kept hard negatives.
///
/// Every listed occurrence counts, so a phrase repeated within one caption
/// counts more than once.
pub fn count_concepts(manifest: &DatasetManifest) -> BTreeMap<VerbPhrase, ConceptStats> {
    let mut out: BTreeMap<VerbPhrase, ConceptStats> = BTreeMap::new();
    let mut bump = |p: &VerbPhrase, caption: bool| {
        let e = out.entry(p.clone()).or_insert_with(|| ConceptStats {
            concept: p.clone(),
            s_count: 0,
            g_count: 0,
        });
        if caption {
            e.s_count += 1;
        } else {
            e.g_count += 1;
        }
    };
    let splits = manifest.split_map();
    for c in &manifest.captions {
        if splits.get(c.video_id.as_str()) == Some(&Split::Train) {
            c.verb_phrases.iter().for_each(|p| bump(p, true));
        }
    }
    for g in manifest.generations.iter().filter(|g| counts_as_negative(g)) {
        g.verb_phrases.iter().for_each(|p| bump(p, false));
    }
    out
}

fn counts_as_negative(g: &GeneratedCaption) -> bool {
    g.kind == GenerationKind::HardNegative && g.kept
}

/// Negative-versus-positive usage ratio of a concept under `variant`.
pub fn compute_ratio(stats: &ConceptStats, variant: NegativeVariant, batch_size: usize) -> Result<f64, CalibrationError> {
    if batch_size < 2 {
        return Err(CalibrationError::BatchSize(batch_size));
    }
    if stats.s_count == 0 {
        return Err(CalibrationError::UndefinedRatio(stats.concept.to_string()));
    }
    let s = stats.s_count as f64;
    let g = stats.g_count as f64;
    let b = batch_size as f64;
    Ok(match variant {
        NegativeVariant::None => (b - 1.0) * s / s,
        NegativeVariant::HnUncalibrated => ((b - 1.0) * s + b * g) / s,
        NegativeVariant::CalibratedHn => ((b - 1.0) * s + g) / s,
    })
}

/// One row of the calibration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub concept: VerbPhrase,
    pub s_count: usize,
    pub g_before: usize,
    pub g_after: usize,
    /// Uncalibrated ratio before filtering; absent when `s_count = 0`.
    pub r_uncalibrated_before: Option<f64>,
    /// Calibrated ratio after filtering; absent when `s_count = 0`.
    pub r_calibrated_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub batch_size: usize,
    pub concepts: Vec<ConceptRow>,
    /// Hard negatives kept by this pass.
    pub kept: usize,
    /// Hard negatives this pass turned from kept to discarded.
    pub discarded: usize,
    /// Hard negatives that were already discarded on input.
    pub previously_discarded: usize,
    /// Surviving hard negatives per train video → number of videos.
    pub negatives_per_video: BTreeMap<usize, usize>,
}

impl CalibrationReport {
    /// Concepts sorted by descending `G/S` imbalance (concepts with `S = 0`
    /// and any negatives first).
    fn imbalance_order(&self, after: bool) -> Vec<&ConceptRow> {
        let key = |r: &ConceptRow| {
            let g = if after { r.g_after } else { r.g_before } as f64;
            if r.s_count == 0 {
                if g > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                g / r.s_count as f64
            }
        };
        let mut rows: Vec<&ConceptRow> = self.concepts.iter().collect();
        rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.concept.cmp(&b.concept)));
        rows
    }

    /// Plain-text summary with the `top_k` most imbalanced concepts before
    /// and after filtering.
    pub fn render_text(&self, top_k: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "hard negatives: kept {}, discarded {} (previously discarded {})",
            self.kept, self.discarded, self.previously_discarded
        );
        let _ = writeln!(out, "ratios at batch size {}", self.batch_size);
        for (title, after) in [("before filtering", false), ("after filtering", true)] {
            let _ = writeln!(out, "\nmost imbalanced concepts {title}:");
            let _ = writeln!(out, "{:<28} {:>8} {:>8} {:>12}", "concept", "S", "G", "ratio");
            for r in self.imbalance_order(after).into_iter().take(top_k) {
                let (g, ratio) = if after {
                    (r.g_after, r.r_calibrated_after)
                } else {
                    (r.g_before, r.r_uncalibrated_before)
                };
                let ratio = ratio.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(out, "{:<28} {:>8} {:>8} {:>12}", r.concept.as_str(), r.s_count, g, ratio);
            }
        }
        let _ = writeln!(out, "\nsurviving negatives per train video:");
        for (n, videos) in &self.negatives_per_video {
            let _ = writeln!(out, "{n:>4}: {videos}");
        }
        out
    }
}

fn text_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Keeps at most `S_ω` hard negatives per concept.
///
/// Candidates are the currently kept hard negatives. They are visited
/// round-robin over parent captions (in first-appearance order), each parent's
/// queue ordered by a SHA-256 digest of the text. A candidate is kept only
/// when every concept it mentions still has quota; otherwise it is discarded
/// and the next candidate of the same parent is tried. Each pass keeps at
/// most one candidate per parent.
pub fn calibrate_filter(manifest: &DatasetManifest, batch_size: usize) -> (DatasetManifest, CalibrationReport) {
    let before = count_concepts(manifest);
    let mut quota: HashMap<&VerbPhrase, usize> = before.iter().map(|(k, v)| (k, v.s_count)).collect();

    let mut queues: Vec<Vec<usize>> = Vec::new();
    let mut parent_index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut previously_discarded = 0;
    for (i, g) in manifest.generations.iter().enumerate() {
        if g.kind != GenerationKind::HardNegative {
            continue;
        }
        if !g.kept {
            previously_discarded += 1;
            continue;
        }
        let key = (g.parent_video_id.as_str(), g.parent_caption.as_str());
        let q = *parent_index.entry(key).or_insert_with(|| {
            queues.push(Vec::new());
            queues.len() - 1
        });
        queues[q].push(i);
    }
    for q in &mut queues {
        q.sort_by_cached_key(|&i| (text_digest(&manifest.generations[i].text), i));
        q.reverse(); // pop from the back
    }

    let mut keep = vec![false; manifest.generations.len()];
    let mut kept = 0;
    let mut discarded = 0;
    while queues.iter().any(|q| !q.is_empty()) {
        for q in queues.iter_mut() {
            while let Some(i) = q.pop() {
                let g = &manifest.generations[i];
                let mut need: HashMap<&VerbPhrase, usize> = HashMap::new();
                for p in &g.verb_phrases {
                    *need.entry(p).or_default() += 1;
                }
                let fits = need.iter().all(|(p, n)| quota.get(p).copied().unwrap_or(0) >= *n);
                if fits {
                    for (p, n) in need {
                        *quota.get_mut(p).expect("fits implies present") -= n;
                    }
                    keep[i] = true;
                    kept += 1;
                    break;
                }
                discarded += 1;
            }
        }
    }

    let mut out = manifest.clone();
    for (i, g) in out.generations.iter_mut().enumerate() {
        if g.kind == GenerationKind::HardNegative {
            g.kept = keep[i];
        }
    }
    let after = count_concepts(&out);
    let concepts = before
        .values()
        .map(|b| {
            let a = after.get(&b.concept).cloned().unwrap_or(ConceptStats {
                g_count: 0,
                ..b.clone()
            });
            ConceptRow {
                concept: b.concept.clone(),
                s_count: b.s_count,
                g_before: b.g_count,
                g_after: a.g_count,
                r_uncalibrated_before: compute_ratio(b, NegativeVariant::HnUncalibrated, batch_size).ok(),
                r_calibrated_after: compute_ratio(&a, NegativeVariant::CalibratedHn, batch_size).ok(),
            }
        })
        .collect();

    let splits = out.split_map();
    let mut per_video: HashMap<&str, usize> = out
        .videos
        .iter()
        .filter(|v| v.split == Split::Train)
        .map(|v| (v.video_id.as_str(), 0))
        .collect();
    for g in out.generations.iter().filter(|g| counts_as_negative(g)) {
        if splits.get(g.parent_video_id.as_str()) == Some(&Split::Train) {
            *per_video.entry(g.parent_video_id.as_str()).or_default() += 1;
        }
    }
    let mut negatives_per_video = BTreeMap::new();
    for n in per_video.values() {
        *negatives_per_video.entry(*n).or_default() += 1;
    }

    let report = CalibrationReport {
        batch_size,
        concepts,
        kept,
        discarded,
        previously_discarded,
        negatives_per_video,
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{verb_phrases, CaptionRecord, GenBackend, VideoRecord};

    fn manifest(captions: &[(&str, &[&str])], gens: &[(&str, &str, &[&str])]) -> DatasetManifest {
        let mut m = DatasetManifest::default();
        for (vid, _) in captions {
            if m.videos.iter().all(|v| v.video_id != *vid) {
                m.videos.push(VideoRecord {
                    video_id: vid.to_string(),
                    split: Split::Train,
                });
            }
        }
        for (vid, phrases) in captions {
            m.captions.push(CaptionRecord::new(*vid, format!("caption of {vid}"), verb_phrases(phrases)));
        }
        for (vid, text, phrases) in gens {
            m.generations.push(GeneratedCaption {
                parent_video_id: vid.to_string(),
                parent_caption: format!("caption of {vid}"),
                text: text.to_string(),
                kind: GenerationKind::HardNegative,
                backend: GenBackend::RandomVerb,
                verb_phrases: verb_phrases(phrases),
                kept: true,
            });
        }
        m
    }

    fn stats(s: usize, g: usize) -> ConceptStats {
        ConceptStats {
            concept: VerbPhrase::new("run").unwrap(),
            s_count: s,
            g_count: g,
        }
    }

    #[test]
    fn ratio_formulas() {
        assert_eq!(compute_ratio(&stats(7, 3), NegativeVariant::None, 256).unwrap(), 255.0);
        assert_eq!(compute_ratio(&stats(2, 6), NegativeVariant::HnUncalibrated, 4).unwrap(), 15.0);
        assert_eq!(compute_ratio(&stats(2, 2), NegativeVariant::CalibratedHn, 4).unwrap(), 4.0);
        assert!(matches!(
            compute_ratio(&stats(0, 2), NegativeVariant::CalibratedHn, 4),
            Err(CalibrationError::UndefinedRatio(_))
        ));
    }

    #[test]
    fn counts_with_multiplicity() {
        let m = manifest(&[("a", &["running"]), ("b", &["running"])], &[]);
        let c = count_concepts(&m);
        let r = &c[&VerbPhrase::new("running").unwrap()];
        assert_eq!((r.s_count, r.g_count), (2, 0));
        let m = manifest(&[("a", &["running"])], &[("a", "x", &["jumping"])]);
        let c = count_concepts(&m);
        assert_eq!(c[&VerbPhrase::new("jumping").unwrap()].s_count, 0);
        assert_eq!(c[&VerbPhrase::new("jumping").unwrap()].g_count, 1);
    }

    #[test]
    fn filter_caps_to_supply() {
        let m = manifest(
            &[("a", &["run"]), ("b", &["run"]), ("c", &["eat"])],
            &[
                ("c", "r1", &["run"]),
                ("c", "r2", &["run"]),
                ("a", "r3", &["run"]),
                ("a", "r4", &["run"]),
                ("b", "r5", &["run"]),
                ("a", "e1", &["eat"]),
                ("b", "j1", &["jump"]),
                ("b", "j2", &["jump"]),
                ("c", "j3", &["jump"]),
            ],
        );
        let (out, report) = calibrate_filter(&m, 4);
        let after = count_concepts(&out);
        let g = |c: &str| after.get(&VerbPhrase::new(c).unwrap()).map_or(0, |s| s.g_count);
        assert_eq!((g("run"), g("eat"), g("jump")), (2, 1, 0));
        assert_eq!(report.kept, 3);
        assert_eq!(report.discarded, 6);
        let (again, r2) = calibrate_filter(&out, 4);
        assert_eq!(again, out);
        assert_eq!(r2.discarded, 0);
        assert_eq!(r2.previously_discarded, 6);
        assert!(report.render_text(5).contains("most imbalanced"));
    }

    #[test]
    fn cannot_exceed_supply() {
        let m = manifest(&[("a", &["run"]), ("b", &["run"])], &[("a", "r1", &["run"])]);
        let (out, _) = calibrate_filter(&m, 4);
        assert!(out.generations[0].kept);
    }

    #[test]
    fn multi_concept_needs_all_quotas() {
        let m = manifest(
            &[("a", &["run"]), ("b", &["eat"])],
            &[("a", "both", &["eat", "jump"]), ("a", "one", &["eat"])],
        );
        let (out, _) = calibrate_filter(&m, 4);
        let kept: Vec<&str> = out.generations.iter().filter(|g| g.kept).map(|g| g.text.as_str()).collect();
        assert_eq!(kept, ["one"]);
    }

    #[test]
    fn round_robin_spreads_over_parents() {
        let m = manifest(
            &[("a", &["run"]), ("b", &["run"]), ("c", &["eat"]), ("d", &["eat"])],
            &[
                ("c", "x1", &["run"]),
                ("c", "x2", &["run"]),
                ("d", "y1", &["run"]),
                ("d", "y2", &["run"]),
            ],
        );
        let (out, report) = calibrate_filter(&m, 4);
        let parents: Vec<&str> = out
            .generations
            .iter()
            .filter(|g| g.kept)
            .map(|g| g.parent_video_id.as_str())
            .collect();
        assert_eq!(parents.len(), 2);
        assert!(parents.contains(&"c") && parents.contains(&"d"));
        assert_eq!(report.negatives_per_video[&1], 2);
        assert_eq!(report.negatives_per_video[&0], 2);
    }
}
