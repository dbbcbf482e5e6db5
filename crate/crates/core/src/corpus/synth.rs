//! Seeded synthetic corpora with a closed vocabulary.
//!
//! Every caption reads `"<adjective> <noun> <verb>"`. The adjective/noun pair
//! is the caption's context; all captions of one context differ only in the
//! verb, which is also the caption's single verb phrase.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CaptionRecord, CorpusError, DatasetManifest, Result, Split, VerbPhrase, VideoRecord};

/// Gerund verb pool. Every entry is recognized by the built-in verb lexicon.
pub const SYNTH_VERBS: &[&str] = &[
    "running", "jumping", "eating", "drinking", "sleeping", "swimming", "climbing", "dancing",
    "singing", "reading", "writing", "cooking", "cleaning", "washing", "brushing", "cutting",
    "throwing", "catching", "kicking", "pushing", "pulling", "carrying", "lifting", "riding",
    "driving", "walking", "sitting", "standing", "waving", "clapping", "laughing", "crying",
    "painting", "drawing", "digging", "fishing", "skating", "skiing", "surfing", "rowing",
    "sweeping", "mopping", "folding", "opening", "closing", "hugging", "kissing", "shaking",
    "stirring", "pouring", "chopping", "peeling", "knitting", "sewing", "typing", "juggling",
    "shouting", "whistling", "stretching", "rolling", "spinning", "tapping", "waxing", "braiding",
];

const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "tiny", "huge", "old", "young", "happy", "quiet", "noisy", "shiny",
    "dusty", "wooden", "golden", "striped", "spotted", "furry", "bald", "tall", "short",
];

const NOUNS: &[&str] = &[
    "fox", "girl", "boy", "man", "woman", "robot", "cat", "dog", "chef", "farmer", "pilot",
    "sailor", "clown", "nurse", "monkey", "bear", "student", "teacher", "knight", "wizard",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_contexts: usize,
    pub verbs_per_context: usize,
    /// Caption count of the most frequent verb in each context.
    pub captions_per_cell: usize,
    /// Power-law exponent of verb frequency over verb rank; 0 means uniform.
    pub frequency_skew: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Captions per context for the verb of rank `rank` (0-based).
    pub fn cell_count(&self, rank: usize) -> usize {
        let scaled = self.captions_per_cell as f64 * ((rank + 1) as f64).powf(-self.frequency_skew);
        (scaled.round() as usize).max(1)
    }
}

/// Builds the deterministic corpus described by `spec`.
pub fn make_synthetic_corpus(spec: &SynthSpec) -> Result<DatasetManifest> {
    if spec.n_contexts == 0 || spec.verbs_per_context == 0 || spec.captions_per_cell == 0 {
        return Err(CorpusError::Invalid("synthetic corpus counts must all be >= 1".into()));
    }
    if spec.verbs_per_context > SYNTH_VERBS.len() {
        return Err(CorpusError::Invalid(format!(
            "verbs_per_context {} exceeds the synthetic verb pool ({})",
            spec.verbs_per_context,
            SYNTH_VERBS.len()
        )));
    }
    if !spec.frequency_skew.is_finite() || spec.frequency_skew < 0.0 {
        return Err(CorpusError::Invalid("frequency_skew must be a finite non-negative number".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut verbs: Vec<&str> = SYNTH_VERBS.to_vec();
    verbs.shuffle(&mut rng);
    verbs.truncate(spec.verbs_per_context);

    let mut pairs: Vec<(usize, usize)> = (0..ADJECTIVES.len())
        .flat_map(|a| (0..NOUNS.len()).map(move |n| (a, n)))
        .collect();
    pairs.shuffle(&mut rng);
    let contexts: Vec<String> = (0..spec.n_contexts)
        .map(|c| match pairs.get(c) {
            Some(&(a, n)) => format!("{} {}", ADJECTIVES[a], NOUNS[n]),
            None => format!("{} ctx{c}", ADJECTIVES[c % ADJECTIVES.len()]),
        })
        .collect();

    let mut manifest = DatasetManifest::default();
    let mut next_id = 0usize;
    for context in &contexts {
        for (rank, verb) in verbs.iter().enumerate() {
            for _ in 0..spec.cell_count(rank) {
                let video_id = format!("vid{next_id:05}");
                next_id += 1;
                manifest.videos.push(VideoRecord {
                    video_id: video_id.clone(),
                    split: Split::Train,
                });
                let phrase = VerbPhrase::new(verb).expect("pool verbs are non-empty");
                manifest
                    .captions
                    .push(CaptionRecord::new(video_id, format!("{context} {verb}"), vec![phrase]));
            }
        }
    }
    Ok(manifest)
}

/// Splits a synthetic caption into its context and verb.
pub fn split_synthetic_caption(text: &str) -> Option<(&str, &str)> {
    text.rsplit_once(' ')
}
