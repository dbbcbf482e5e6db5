//! Hard-negative, positive and verb-phrase generation.
//!
//! Four backends produce hard negatives: a prompted completion model, a
//! fill-mask (cloze) model, and two rule backends that swap tagged verbs for
//! random or antonym verbs. All outputs pass through the same post-processing
//! so that no hard negative repeats a verb of its parent caption.

pub mod client;
pub mod lexicon;
pub mod postprocess;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, CaptionRecord, GenBackend, GeneratedCaption, GenerationKind, VerbPhrase};
use crate::seeding::{rng_for, text_seed};
pub use client::{
    CachedService, CompletionClient, CompletionClientConfig, CompletionRequest, CompletionResponse, FillMaskClient,
    FillMaskRequest, FillMaskResponse, HttpService, JsonService, StubService,
};
pub use lexicon::{LexiconResources, TaggedVerb, VerbForm, VerbLexicon};
use postprocess::{dedupe, filter_hard_negatives, make_generation, parent_verb_set, parse_phrase_list};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("network error: {0}")]
    Network(String),
    #[error("environment variable {0} holding the endpoint token is not set")]
    Auth(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no verb detected in {0:?}")]
    NoVerbDetected(String),
    #[error("no verb with an antonym entry in {0:?}")]
    NoAntonym(String),
    #[error("the {0} backend needs a client")]
    MissingClient(&'static str),
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

impl GenError {
    /// Errors that mean "skip this caption" rather than "abort the run".
    pub fn is_skip(&self) -> bool {
        matches!(self, GenError::NoVerbDetected(_) | GenError::NoAntonym(_))
    }
}

pub type Result<T> = std::result::Result<T, GenError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_size: u32,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl DecodeConfig {
    pub fn hard_negative() -> Self {
        Self {
            beam_size: 4,
            max_tokens: 512,
            temperature: 0.7,
        }
    }
    pub fn positive() -> Self {
        Self {
            beam_size: 1,
            max_tokens: 512,
            temperature: 0.7,
        }
    }
    pub fn extraction() -> Self {
        Self {
            beam_size: 4,
            max_tokens: 256,
            temperature: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenBackendConfig {
    pub backend: GenBackend,
    pub candidates_per_caption: usize,
    /// Decoding for hard negatives.
    pub decode: DecodeConfig,
    pub positive_decode: DecodeConfig,
    pub extraction_decode: DecodeConfig,
    /// Ranked fills requested per mask (cloze backend).
    pub top_k_fill: usize,
    /// Seed for the rule backends.
    pub seed: u64,
    /// Include the few-shot exemplars in prompts.
    pub exemplars: bool,
}

impl Default for GenBackendConfig {
    fn default() -> Self {
        Self {
            backend: GenBackend::LlmCompletion,
            candidates_per_caption: 10,
            decode: DecodeConfig::hard_negative(),
            positive_decode: DecodeConfig::positive(),
            extraction_decode: DecodeConfig::extraction(),
            top_k_fill: 50,
            seed: 0,
            exemplars: true,
        }
    }
}

impl GenBackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates_per_caption == 0 {
            return Err(GenError::InvalidConfig("candidates_per_caption must be >= 1".into()));
        }
        if self.top_k_fill == 0 {
            return Err(GenError::InvalidConfig("top_k_fill must be >= 1".into()));
        }
        Ok(())
    }
}

/// Clients available to the generators.
#[derive(Clone, Copy, Default)]
pub struct Clients<'a> {
    pub completion: Option<&'a CompletionClient>,
    pub fill_mask: Option<&'a FillMaskClient>,
}

/// Where extracted verb phrases come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMethod {
    LlmCompletion,
    RuleTagger,
    ProvidedLabels,
}

/// Rewrites the whitespace tokens whose normalized index appears in `repl`,
/// keeping surrounding punctuation and an initial capital.
fn replace_tokens(text: &str, repl: &BTreeMap<usize, String>) -> String {
    let mut norm_index = 0;
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        if normalize_text(tok).is_empty() {
            out.push(tok.to_string());
            continue;
        }
        let idx = norm_index;
        norm_index += 1;
        let Some(new) = repl.get(&idx) else {
            out.push(tok.to_string());
            continue;
        };
        let start = tok.find(|c: char| c.is_alphanumeric()).unwrap_or(0);
        let end = tok
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map_or(tok.len(), |(i, c)| i + c.len_utf8());
        let capital = tok[start..].chars().next().is_some_and(char::is_uppercase);
        let word = if capital {
            let mut cs = new.chars();
            cs.next()
                .map(|f| f.to_uppercase().chain(cs).collect::<String>())
                .unwrap_or_default()
        } else {
            new.clone()
        };
        out.push(format!("{}{}{}", &tok[..start], word, &tok[end..]));
    }
    out.join(" ")
}

fn tagged_or_skip(caption: &CaptionRecord, lex: &VerbLexicon) -> Result<Vec<TaggedVerb>> {
    let tags = lex.tag(&caption.text);
    if tags.is_empty() {
        Err(GenError::NoVerbDetected(caption.text.clone()))
    } else {
        Ok(tags)
    }
}

fn random_verb_candidates(caption: &CaptionRecord, cfg: &GenBackendConfig, res: &LexiconResources) -> Result<Vec<String>> {
    let lex = &res.verb_recognizer;
    let tags = tagged_or_skip(caption, lex)?;
    let parent_lemmas: BTreeSet<&str> = tags.iter().map(|t| t.lemma.as_str()).collect();
    let pool: Vec<&str> = res
        .verb_corpus
        .iter()
        .map(String::as_str)
        .filter(|l| !parent_lemmas.contains(l))
        .collect();
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = rng_for(&[cfg.seed, text_seed(&caption.text)]);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for _ in 0..cfg.candidates_per_caption * 20 {
        if seen.len() == cfg.candidates_per_caption {
            break;
        }
        let repl: BTreeMap<usize, String> = tags
            .iter()
            .map(|t| {
                let lemma = pool.choose(&mut rng).expect("pool is non-empty");
                (t.index, lex.inflect(lemma, t.form))
            })
            .collect();
        let cand = replace_tokens(&caption.text, &repl);
        if seen.insert(normalize_text(&cand)) {
            out.push(cand);
        }
    }
    Ok(out)
}

fn antonym_candidates(caption: &CaptionRecord, cfg: &GenBackendConfig, res: &LexiconResources) -> Result<Vec<String>> {
    let lex = &res.verb_recognizer;
    let tags = tagged_or_skip(caption, lex)?;
    let slots: Vec<(&TaggedVerb, &Vec<String>)> = tags
        .iter()
        .filter_map(|t| res.antonym_map.get(&t.lemma).map(|a| (t, a)))
        .collect();
    if slots.is_empty() {
        return Err(GenError::NoAntonym(caption.text.clone()));
    }
    let total: usize = slots.iter().map(|(_, a)| a.len()).product();
    let mut combos: Vec<usize> = (0..total.min(10_000)).collect();
    combos.shuffle(&mut rng_for(&[cfg.seed, text_seed(&caption.text)]));
    Ok(combos
        .into_iter()
        .take(cfg.candidates_per_caption)
        .map(|mut k| {
            let repl: BTreeMap<usize, String> = slots
                .iter()
                .map(|(t, ants)| {
                    let choice = &ants[k % ants.len()];
                    k /= ants.len();
                    (t.index, lex.inflect(choice, t.form))
                })
                .collect();
            replace_tokens(&caption.text, &repl)
        })
        .collect())
}

fn complete(client: &CompletionClient, prompt: String, decode: &DecodeConfig) -> Result<Vec<String>> {
    let resp = client.complete(&CompletionRequest {
        prompt,
        max_tokens: decode.max_tokens,
        temperature: decode.temperature,
        beam_size: decode.beam_size,
    })?;
    Ok(resp.candidates)
}

/// Generates hard negatives for one caption with the configured backend.
///
/// Rule backends return [`GenError::NoVerbDetected`] or
/// [`GenError::NoAntonym`] for captions they cannot rewrite; callers skip
/// those captions.
pub fn generate_hard_negatives(
    caption: &CaptionRecord,
    cfg: &GenBackendConfig,
    resources: &LexiconResources,
    clients: Clients<'_>,
) -> Result<Vec<GeneratedCaption>> {
    cfg.validate()?;
    let lex = &resources.verb_recognizer;
    let candidates = match cfg.backend {
        GenBackend::LlmCompletion => {
            let client = clients.completion.ok_or(GenError::MissingClient("llm_completion"))?;
            let prompt = prompts::hard_negative_template(cfg.candidates_per_caption).render(&caption.text, cfg.exemplars);
            let raw = complete(client, prompt, &cfg.decode)?;
            if raw.iter().all(|r| r.trim().is_empty()) {
                log::warn!("empty completion for {:?}", caption.text);
            }
            raw.iter().flat_map(|r| postprocess::split_candidates(r)).collect()
        }
        GenBackend::T5Cloze => {
            let client = clients.fill_mask.ok_or(GenError::MissingClient("t5_cloze"))?;
            return t5_cloze_generate(caption, cfg, resources, client);
        }
        GenBackend::RandomVerb => random_verb_candidates(caption, cfg, resources)?,
        GenBackend::AntonymVerb => antonym_candidates(caption, cfg, resources)?,
    };
    let mut out = filter_hard_negatives(candidates, caption, cfg.backend, lex);
    out.truncate(cfg.candidates_per_caption);
    Ok(out)
}

/// Generates synonym-verb paraphrases with the completion backend.
pub fn generate_positives(
    caption: &CaptionRecord,
    cfg: &GenBackendConfig,
    resources: &LexiconResources,
    client: &CompletionClient,
) -> Result<Vec<GeneratedCaption>> {
    cfg.validate()?;
    let prompt = prompts::positive_template(cfg.candidates_per_caption).render(&caption.text, cfg.exemplars);
    let raw = complete(client, prompt, &cfg.positive_decode)?;
    let mut out: Vec<GeneratedCaption> = raw
        .iter()
        .flat_map(|r| postprocess::postprocess_positives(r, caption, &resources.verb_recognizer))
        .collect();
    out = dedupe(out, |g| normalize_text(&g.text));
    if out.is_empty() {
        log::warn!("no positive candidates for {:?}", caption.text);
    }
    out.truncate(cfg.candidates_per_caption);
    Ok(out)
}

/// Extracts normalized verb phrases from a caption.
pub fn extract_verb_phrases(
    caption: &CaptionRecord,
    method: ExtractMethod,
    cfg: &GenBackendConfig,
    resources: &LexiconResources,
    client: Option<&CompletionClient>,
) -> Result<Vec<VerbPhrase>> {
    match method {
        ExtractMethod::ProvidedLabels => Ok(caption.verb_phrases.clone()),
        ExtractMethod::RuleTagger => Ok(postprocess::tagged_phrases(&caption.text, &resources.verb_recognizer)),
        ExtractMethod::LlmCompletion => {
            let client = client.ok_or(GenError::MissingClient("llm_completion"))?;
            let prompt = prompts::extraction_template().render(&caption.text, cfg.exemplars);
            let raw = complete(client, prompt, &cfg.extraction_decode)?;
            Ok(raw.first().map(|r| parse_phrase_list(r)).unwrap_or_default())
        }
    }
}

/// Cloze generation: mask every tagged verb, request ranked fills, and build
/// candidate `r` from the `r`-th fill of each mask.
///
/// Candidates reusing any parent verb in any slot are dropped. Output size is
/// bounded by `top_k_fill`, not `candidates_per_caption`.
pub fn t5_cloze_generate(
    caption: &CaptionRecord,
    cfg: &GenBackendConfig,
    resources: &LexiconResources,
    fill_client: &FillMaskClient,
) -> Result<Vec<GeneratedCaption>> {
    cfg.validate()?;
    let lex = &resources.verb_recognizer;
    let tags = tagged_or_skip(caption, lex)?;
    let masks: BTreeMap<usize, String> = tags.iter().map(|t| (t.index, "[MASK]".to_string())).collect();
    let masked = replace_tokens(&caption.text, &masks);
    let resp = fill_client.fill(&FillMaskRequest {
        text_with_masks: masked,
        top_k: cfg.top_k_fill,
    })?;
    if resp.fills.len() != tags.len() {
        return Err(GenError::Protocol(format!(
            "expected {} fill lists, got {}",
            tags.len(),
            resp.fills.len()
        )));
    }
    let protected = parent_verb_set(caption, lex);
    let depth = resp.fills.iter().map(Vec::len).min().unwrap_or(0).min(cfg.top_k_fill);
    let mut out = Vec::new();
    for r in 0..depth {
        let fills: Vec<String> = resp.fills.iter().map(|f| normalize_text(&f[r])).collect();
        if fills.iter().any(|f| f.is_empty() || protected.contains(f)) {
            continue;
        }
        let repl: BTreeMap<usize, String> = tags.iter().zip(&fills).map(|(t, f)| (t.index, f.clone())).collect();
        let text = replace_tokens(&caption.text, &repl);
        if postprocess::shares_verb(&text, &protected, lex) {
            continue;
        }
        let phrases = dedupe(fills.iter().filter_map(|f| VerbPhrase::new(f)).collect(), |p: &VerbPhrase| {
            p.as_str().to_string()
        });
        out.push(make_generation(caption, text, GenerationKind::HardNegative, GenBackend::T5Cloze, phrases));
    }
    Ok(dedupe(out, |g| normalize_text(&g.text)))
}

/// Runs `f` over `items` on at most `max_in_flight` threads and returns the
/// results in input order.
pub fn map_bounded<T: Sync, R: Send>(items: &[T], max_in_flight: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = max_in_flight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

/// Totals from a generation pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSummary {
    pub captions: usize,
    pub skipped: usize,
    pub generated: usize,
}

/// Generates hard negatives for every caption, skipping captions a rule
/// backend cannot rewrite. Output follows caption order.
pub fn generate_all(
    captions: &[CaptionRecord],
    cfg: &GenBackendConfig,
    resources: &LexiconResources,
    clients: Clients<'_>,
    max_in_flight: usize,
) -> Result<(Vec<GeneratedCaption>, GenSummary)> {
    let results = map_bounded(captions, max_in_flight, |c| generate_hard_negatives(c, cfg, resources, clients));
    let mut out = Vec::new();
    let mut summary = GenSummary {
        captions: captions.len(),
        ..Default::default()
    };
    for (caption, r) in captions.iter().zip(results) {
        match r {
            Ok(gens) => out.extend(gens),
            Err(e) if e.is_skip() => {
                log::info!("skipping {:?}: {e}", caption.text);
                summary.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    summary.generated = out.len();
    Ok((out, summary))
}
