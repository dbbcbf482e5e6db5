//! Caption corpus data model and its line-delimited storage format.
//!
//! A manifest file holds one JSON record per line. Every line carries a
//! `"record"` tag naming the entity it describes:
//!
//! ```text
//! {"record":"header","schema_version":1}
//! {"record":"video","video_id":"v0","split":"train"}
//! {"record":"caption","video_id":"v0","text":"a man walks","split":"train","verb_phrases":["walks"]}
//! {"record":"generation","parent_video_id":"v0","parent_caption":"a man walks","text":"a man runs","kind":"hard_negative","backend":"random_verb","verb_phrases":["runs"],"kept":true}
//! ```
//!
//! The header is optional. A caption line that carries a `split` declares its
//! video if no earlier line did; a caption line without one must reference a
//! video declared earlier.

mod synth;

pub use synth::{make_synthetic_corpus, split_synthetic_caption, SynthSpec, SYNTH_VERBS};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown video_id {video_id:?} (declare it with a video record or a caption carrying a split)")]
    UnknownVideo { line: usize, video_id: String },
    #[error("duplicate video_id {0:?}")]
    DuplicateVideo(String),
    #[error("video {video_id:?} declared with split {first} and again with split {second}")]
    SplitConflict {
        video_id: String,
        first: Split,
        second: Split,
    },
    #[error("unsupported schema_version {found} (this build reads version {SCHEMA_VERSION})")]
    UnsupportedSchema { found: u32 },
    #[error("invalid record: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Lowercases, strips punctuation and collapses whitespace.
///
/// This is the single text normalization used for verb phrases, tokenization
/// and same-verb comparisons.
pub fn normalize_text(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// A normalized verb phrase such as `"eating grass"` or `"runs"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct VerbPhrase(String);

impl VerbPhrase {
    /// Normalizes `raw`; returns `None` when nothing is left.
    pub fn new(raw: &str) -> Option<Self> {
        let surface = normalize_text(raw);
        (!surface.is_empty()).then_some(Self(surface))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VerbPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for VerbPhrase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        VerbPhrase::new(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("verb phrase {raw:?} is empty after normalization")))
    }
}

/// Normalizes a list of raw strings, dropping those that normalize to nothing.
pub fn verb_phrases<S: AsRef<str>>(raw: &[S]) -> Vec<VerbPhrase> {
    raw.iter().filter_map(|s| VerbPhrase::new(s.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub video_id: String,
    pub text: String,
    pub verb_phrases: Vec<VerbPhrase>,
}

impl CaptionRecord {
    pub fn new(video_id: impl Into<String>, text: impl Into<String>, verb_phrases: Vec<VerbPhrase>) -> Self {
        Self {
            video_id: video_id.into(),
            text: text.into(),
            verb_phrases,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationKind {
    HardNegative,
    PositiveParaphrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenBackend {
    LlmCompletion,
    T5Cloze,
    RandomVerb,
    AntonymVerb,
}

impl GenBackend {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "llm_completion" | "llm" => Some(Self::LlmCompletion),
            "t5_cloze" | "cloze" => Some(Self::T5Cloze),
            "random_verb" => Some(Self::RandomVerb),
            "antonym_verb" => Some(Self::AntonymVerb),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedCaption {
    pub parent_video_id: String,
    pub parent_caption: String,
    pub text: String,
    pub kind: GenerationKind,
    pub backend: GenBackend,
    pub verb_phrases: Vec<VerbPhrase>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub videos: Vec<VideoRecord>,
    pub captions: Vec<CaptionRecord>,
    pub generations: Vec<GeneratedCaption>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            videos: Vec::new(),
            captions: Vec::new(),
            generations: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    schema_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionLine {
    video_id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default)]
    verb_phrases: Vec<VerbPhrase>,
}

impl DatasetManifest {
    pub fn video_split(&self, video_id: &str) -> Option<Split> {
        self.videos.iter().find(|v| v.video_id == video_id).map(|v| v.split)
    }

    pub fn split_map(&self) -> HashMap<&str, Split> {
        self.videos.iter().map(|v| (v.video_id.as_str(), v.split)).collect()
    }

    /// Indices of captions whose video is in the train split.
    pub fn train_caption_indices(&self) -> Vec<usize> {
        let splits = self.split_map();
        self.captions
            .iter()
            .enumerate()
            .filter(|(_, c)| splits.get(c.video_id.as_str()) == Some(&Split::Train))
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks every record invariant and referential integrity.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::UnsupportedSchema {
                found: self.schema_version,
            });
        }
        let mut ids = HashSet::new();
        for v in &self.videos {
            if v.video_id.trim().is_empty() {
                return Err(CorpusError::Invalid("empty video_id".into()));
            }
            if !ids.insert(v.video_id.as_str()) {
                return Err(CorpusError::DuplicateVideo(v.video_id.clone()));
            }
        }
        for (i, c) in self.captions.iter().enumerate() {
            if !ids.contains(c.video_id.as_str()) {
                return Err(CorpusError::UnknownVideo {
                    line: i + 1,
                    video_id: c.video_id.clone(),
                });
            }
            if c.text.trim().is_empty() {
                return Err(CorpusError::Invalid(format!("caption for {:?} has empty text", c.video_id)));
            }
        }
        for (i, g) in self.generations.iter().enumerate() {
            if !ids.contains(g.parent_video_id.as_str()) {
                return Err(CorpusError::UnknownVideo {
                    line: i + 1,
                    video_id: g.parent_video_id.clone(),
                });
            }
            if g.text.trim().is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "generation for {:?} has empty text",
                    g.parent_video_id
                )));
            }
        }
        Ok(())
    }

    /// Parses manifest text without running [`DatasetManifest::validate`].
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        let mut splits: HashMap<String, Split> = HashMap::new();

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| CorpusError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| CorpusError::Parse { line: lineno, message };
            let mut value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let obj = value
                .as_object_mut()
                .ok_or_else(|| parse_err("expected a JSON object".into()))?;
            let tag = match obj.remove("record") {
                Some(serde_json::Value::String(s)) => s,
                Some(_) => return Err(parse_err("\"record\" must be a string".into())),
                // Untagged lines are captions, matching the plain caption schema.
                None => "caption".to_string(),
            };
            match tag.as_str() {
                "header" => {
                    if lineno != 1 {
                        return Err(parse_err("header must be the first line".into()));
                    }
                    let h: HeaderLine = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(CorpusError::UnsupportedSchema {
                            found: h.schema_version,
                        });
                    }
                    manifest.schema_version = h.schema_version;
                }
                "video" => {
                    let v: VideoRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
                    if v.video_id.trim().is_empty() {
                        return Err(parse_err("empty video_id".into()));
                    }
                    if splits.contains_key(&v.video_id) {
                        return Err(CorpusError::DuplicateVideo(v.video_id));
                    }
                    splits.insert(v.video_id.clone(), v.split);
                    manifest.videos.push(v);
                }
                "caption" => {
                    let c: CaptionLine = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
                    if c.video_id.trim().is_empty() {
                        return Err(parse_err("empty video_id".into()));
                    }
                    if c.text.trim().is_empty() {
                        return Err(parse_err("caption text is empty".into()));
                    }
                    match (splits.get(&c.video_id), c.split) {
                        (Some(&first), Some(second)) if first != second => {
                            return Err(CorpusError::SplitConflict {
                                video_id: c.video_id,
                                first,
                                second,
                            })
                        }
                        (Some(_), _) => {}
                        (None, Some(split)) => {
                            splits.insert(c.video_id.clone(), split);
                            manifest.videos.push(VideoRecord {
                                video_id: c.video_id.clone(),
                                split,
                            });
                        }
                        (None, None) => {
                            return Err(CorpusError::UnknownVideo {
                                line: lineno,
                                video_id: c.video_id,
                            })
                        }
                    }
                    manifest.captions.push(CaptionRecord {
                        video_id: c.video_id,
                        text: c.text,
                        verb_phrases: c.verb_phrases,
                    });
                }
                "generation" => {
                    let g: GeneratedCaption = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
                    if !splits.contains_key(&g.parent_video_id) {
                        return Err(CorpusError::UnknownVideo {
                            line: lineno,
                            video_id: g.parent_video_id,
                        });
                    }
                    if g.text.trim().is_empty() {
                        return Err(parse_err("generation text is empty".into()));
                    }
                    manifest.generations.push(g);
                }
                other => return Err(parse_err(format!("unknown record tag {other:?}"))),
            }
        }
        Ok(manifest)
    }

    /// Serializes to the line format. Output is deterministic.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = serde_json::json!({"record": "header", "schema_version": self.schema_version});
        writeln!(w, "{header}")?;
        let splits = self.split_map();
        for v in &self.videos {
            writeln!(w, "{}", tagged("video", v))?;
        }
        for c in &self.captions {
            let line = CaptionLine {
                video_id: c.video_id.clone(),
                text: c.text.clone(),
                split: splits.get(c.video_id.as_str()).copied(),
                verb_phrases: c.verb_phrases.clone(),
            };
            writeln!(w, "{}", tagged("caption", &line))?;
        }
        for g in &self.generations {
            writeln!(w, "{}", tagged("generation", g))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn tagged<T: Serialize>(tag: &str, record: &T) -> String {
    let mut value = serde_json::to_value(record).expect("manifest records serialize");
    let obj = value.as_object_mut().expect("records are JSON objects");
    let mut out = serde_json::Map::with_capacity(obj.len() + 1);
    out.insert("record".into(), serde_json::Value::String(tag.into()));
    out.extend(std::mem::take(obj));
    serde_json::Value::Object(out).to_string()
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest = DatasetManifest::parse(BufReader::new(file))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    manifest.write_to(&mut file).map_err(io)?;
    file.flush().map_err(io)
}
