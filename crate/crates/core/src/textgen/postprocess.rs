//! Turning raw completions into filtered candidate captions.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::lexicon::VerbLexicon;
use crate::corpus::{normalize_text, CaptionRecord, GenBackend, GeneratedCaption, GenerationKind, VerbPhrase};

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "n)" or "n." at a line start, or "n)" after whitespace mid-line.
    RE.get_or_init(|| Regex::new(r"(?m)(?:^[ \t]*\d+[.)]|[ \t]\d+\))[ \t]*").expect("valid regex"))
}

/// Splits one completion into candidates.
///
/// Text before the first numbered marker is ignored when markers exist;
/// otherwise the whole completion is one candidate. Every candidate is cut at
/// its first newline and trimmed; empty ones are dropped.
pub fn split_candidates(raw: &str) -> Vec<String> {
    let marks: Vec<(usize, usize)> = marker_re().find_iter(raw).map(|m| (m.start(), m.end())).collect();
    let pieces: Vec<&str> = if marks.is_empty() {
        vec![raw]
    } else {
        marks
            .iter()
            .enumerate()
            .map(|(k, &(_, end))| {
                let stop = marks.get(k + 1).map_or(raw.len(), |m| m.0);
                &raw[end..stop]
            })
            .collect()
    };
    pieces
        .into_iter()
        .map(|p| p.split('\n').next().unwrap_or("").trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

/// Verb surfaces the filter protects: labelled phrases plus tagged verbs.
pub fn parent_verb_set(parent: &CaptionRecord, lexicon: &VerbLexicon) -> HashSet<String> {
    let mut set: HashSet<String> = parent.verb_phrases.iter().map(|p| p.as_str().to_string()).collect();
    set.extend(lexicon.tag(&parent.text).into_iter().map(|t| t.surface));
    set
}

fn contains_phrase(tokens: &[&str], phrase: &str) -> bool {
    let p: Vec<&str> = phrase.split(' ').collect();
    !p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice())
}

/// True when `candidate` repeats any protected verb phrase: a tagged verb
/// with a protected surface or lemma, or a contiguous token run.
pub fn shares_verb(candidate: &str, protected: &HashSet<String>, lexicon: &VerbLexicon) -> bool {
    let norm = normalize_text(candidate);
    let tokens: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
    let lemmas: HashSet<String> = protected.iter().flat_map(|p| lexicon.tag(p)).map(|t| t.lemma).collect();
    lexicon
        .tag(&norm)
        .iter()
        .any(|t| protected.contains(&t.surface) || lemmas.contains(&t.lemma))
        || protected.iter().any(|p| contains_phrase(&tokens, p))
}

/// Tagged verb surfaces of a candidate, as verb phrases.
pub fn tagged_phrases(text: &str, lexicon: &VerbLexicon) -> Vec<VerbPhrase> {
    let mut seen = HashSet::new();
    lexicon
        .tag(text)
        .into_iter()
        .filter(|t| seen.insert(t.surface.clone()))
        .filter_map(|t| VerbPhrase::new(&t.surface))
        .collect()
}

/// Keeps the first occurrence of each normalized text.
pub fn dedupe<T>(items: Vec<T>, key: impl Fn(&T) -> String) -> Vec<T> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|x| seen.insert(key(x))).collect()
}

pub(crate) fn make_generation(
    parent: &CaptionRecord,
    text: String,
    kind: GenerationKind,
    backend: GenBackend,
    verb_phrases: Vec<VerbPhrase>,
) -> GeneratedCaption {
    GeneratedCaption {
        parent_video_id: parent.video_id.clone(),
        parent_caption: parent.text.clone(),
        text,
        kind,
        backend,
        verb_phrases,
        kept: true,
    }
}

/// Hard-negative filter over already split candidates.
pub fn filter_hard_negatives(
    candidates: Vec<String>,
    parent: &CaptionRecord,
    backend: GenBackend,
    lexicon: &VerbLexicon,
) -> Vec<GeneratedCaption> {
    let protected = parent_verb_set(parent, lexicon);
    let parent_norm = normalize_text(&parent.text);
    let kept: Vec<String> = candidates
        .into_iter()
        .filter(|c| normalize_text(c) != parent_norm && !shares_verb(c, &protected, lexicon))
        .collect();
    dedupe(kept, |c| normalize_text(c))
        .into_iter()
        .map(|c| {
            let phrases = tagged_phrases(&c, lexicon);
            make_generation(parent, c, GenerationKind::HardNegative, backend, phrases)
        })
        .collect()
}

/// Hard-negative post-processing of one verbatim completion.
pub fn postprocess(raw: &str, parent: &CaptionRecord, lexicon: &VerbLexicon) -> Vec<GeneratedCaption> {
    filter_hard_negatives(split_candidates(raw), parent, GenBackend::LlmCompletion, lexicon)
}

/// Positive post-processing: drops restatements of the parent and duplicates.
pub fn postprocess_positives(raw: &str, parent: &CaptionRecord, lexicon: &VerbLexicon) -> Vec<GeneratedCaption> {
    let parent_norm = normalize_text(&parent.text);
    let kept: Vec<String> = split_candidates(raw)
        .into_iter()
        .filter(|c| normalize_text(c) != parent_norm)
        .collect();
    dedupe(kept, |c| normalize_text(c))
        .into_iter()
        .map(|c| {
            let phrases = tagged_phrases(&c, lexicon);
            make_generation(
                parent,
                c,
                GenerationKind::PositiveParaphrase,
                GenBackend::LlmCompletion,
                phrases,
            )
        })
        .collect()
}

/// Parses an inline list such as `['cutting cake', 'clapping']`.
pub fn parse_phrase_list(raw: &str) -> Vec<VerbPhrase> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"['"`‘’“”]([^'"`‘’“”]+)['"`‘’“”]"#).expect("valid regex"));
    let line = raw.trim_start().split('\n').next().unwrap_or("");
    let Some(open) = line.find('[') else {
        return Vec::new();
    };
    let inner = match line[open..].find(']') {
        Some(close) => &line[open + 1..open + close],
        None => &line[open + 1..],
    };
    let phrases: Vec<VerbPhrase> = re
        .captures_iter(inner)
        .filter_map(|c| VerbPhrase::new(&c[1]))
        .collect();
    dedupe(phrases, |p| p.as_str().to_string())
}
