//! Closed-class verb recognition and inflection.
//!
//! The tagger is a lookup table from inflected surface forms to
//! `(lemma, form)`. It knows a built-in list of common action verbs plus
//! whatever a verb corpus or antonym map adds. Irregular pasts and
//! consonant doubling are listed explicitly; everything else follows the
//! regular English spelling rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{GenError, Result};
use crate::corpus::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VerbForm {
    Base,
    ThirdPerson,
    Gerund,
    Past,
}

const BUILTIN_VERBS: &[&str] = &[
    "answer", "arrive", "ask", "assemble", "bake", "bend", "bike", "bite", "blow", "bounce", "bow",
    "braid", "break", "bring", "brush", "build", "burn", "buy", "call", "carry", "catch", "chase",
    "cheer", "chew", "chip", "chop", "clap", "clean", "click", "climb", "close", "come", "cook",
    "crawl", "cross", "cry", "curl", "cut", "dance", "destroy", "die", "dig", "dive", "do", "drag",
    "draw", "dribble", "drink", "drive", "drop", "drown", "drum", "dry", "dunk", "dye", "eat",
    "enter", "exercise", "exit", "explain", "extinguish", "fall", "feed", "fight", "fill", "film",
    "find", "fish", "fix", "flip", "float", "floss", "fly", "fold", "follow", "forget", "frown",
    "get", "give", "go", "grab", "grind", "grip", "groom", "hang", "hate", "hide", "hit", "hold",
    "hop", "hug", "hunt", "jog", "juggle", "jump", "kick", "kiss", "kneel", "knit", "knock",
    "laugh", "lean", "learn", "leave", "lick", "lift", "listen", "lock", "lose", "love", "make",
    "massage", "meditate", "melt", "mix", "mop", "move", "open", "pack", "paint", "pat", "peel",
    "pet", "pick", "pinch", "plant", "play", "point", "poke", "pour", "pray", "press", "pull",
    "punch", "push", "put", "putt", "read", "remember", "rest", "ride", "rip", "rise", "roll", "row",
    "rub", "run", "sand", "scramble", "scratch", "scream", "scrub", "sell", "sew", "shake", "shave",
    "shine", "shoot", "shout", "shovel", "show", "shred", "shuffle", "sing", "sink", "sip", "sit",
    "skate", "ski", "skip", "slap", "sleep", "slice", "slide", "smell", "smile", "snap", "sneeze",
    "snorkel", "spill", "spin", "splash", "spray", "sprint", "squeeze", "stack", "stand", "start",
    "steal", "stir", "stop", "stretch", "stroll", "strum", "surf", "sweep", "swim", "swing", "take",
    "talk", "tap", "taste", "teach", "tear", "text", "throw", "tickle", "tie", "touch", "train",
    "trim", "type", "unfold", "unlock", "unpack", "untie", "unwrap", "use", "vacuum", "wake",
    "walk", "wash", "watch", "wave", "wax", "whisper", "whistle", "win", "wipe", "wrap", "wrestle",
    "write", "yell",
];

const DOUBLING: &[&str] = &[
    "bat", "beg", "begin", "chat", "chip", "chop", "clap", "cut", "dab", "dig", "dip", "drag",
    "drop", "drum", "flip", "forget", "get", "grab", "grin", "hit", "hop", "hug", "jog", "knit",
    "mop", "nap", "nod", "pat", "pet", "plan", "pop", "put", "quit", "rip", "rob", "rub", "run",
    "set", "shop", "shred", "shut", "sip", "sit", "skip", "slap", "slip", "snap", "spin", "spit",
    "step", "stir", "stop", "strip", "strum", "swap", "swim", "tap", "tip", "trim", "tug", "whip",
    "win", "wrap", "zip", "scrub",
];

const IRREGULAR_PAST: &[(&str, &str)] = &[
    ("bend", "bent"), ("bite", "bit"), ("blow", "blew"), ("break", "broke"), ("bring", "brought"),
    ("build", "built"), ("buy", "bought"), ("catch", "caught"), ("come", "came"), ("cut", "cut"),
    ("dig", "dug"), ("dive", "dove"), ("do", "did"), ("draw", "drew"), ("drink", "drank"),
    ("drive", "drove"), ("eat", "ate"), ("fall", "fell"), ("feed", "fed"), ("fight", "fought"),
    ("find", "found"), ("fly", "flew"), ("forget", "forgot"), ("get", "got"), ("give", "gave"),
    ("go", "went"), ("grind", "ground"), ("hang", "hung"), ("hide", "hid"), ("hit", "hit"),
    ("hold", "held"), ("kneel", "knelt"), ("leave", "left"), ("lose", "lost"), ("make", "made"),
    ("put", "put"), ("read", "read"), ("ride", "rode"), ("rise", "rose"), ("run", "ran"),
    ("sell", "sold"), ("shake", "shook"), ("shine", "shone"), ("shoot", "shot"), ("shut", "shut"),
    ("sing", "sang"), ("sink", "sank"), ("sit", "sat"), ("sleep", "slept"), ("slide", "slid"),
    ("spin", "spun"), ("stand", "stood"), ("steal", "stole"), ("sweep", "swept"), ("swim", "swam"),
    ("swing", "swung"), ("take", "took"), ("teach", "taught"), ("tear", "tore"), ("throw", "threw"),
    ("wake", "woke"), ("win", "won"), ("write", "wrote"),
];

const BUILTIN_ANTONYMS: &[(&str, &str)] = &[
    ("open", "close"), ("close", "open"), ("push", "pull"), ("pull", "push"), ("sit", "stand"),
    ("stand", "sit"), ("laugh", "cry"), ("cry", "laugh"), ("give", "take"), ("take", "give"),
    ("win", "lose"), ("lose", "win"), ("buy", "sell"), ("sell", "buy"), ("start", "stop"),
    ("stop", "start"), ("come", "go"), ("go", "come"), ("enter", "exit"), ("exit", "enter"),
    ("rise", "fall"), ("fall", "rise"), ("sink", "float"), ("float", "sink"), ("remember", "forget"),
    ("forget", "remember"), ("arrive", "leave"), ("leave", "arrive"), ("ask", "answer"),
    ("answer", "ask"), ("build", "destroy"), ("destroy", "build"), ("lift", "drop"), ("drop", "lift"),
    ("pack", "unpack"), ("unpack", "pack"), ("wrap", "unwrap"), ("unwrap", "wrap"), ("tie", "untie"),
    ("untie", "tie"), ("fold", "unfold"), ("unfold", "fold"), ("lock", "unlock"), ("unlock", "lock"),
    ("love", "hate"), ("hate", "love"), ("smile", "frown"), ("frown", "smile"), ("whisper", "shout"),
    ("shout", "whisper"), ("teach", "learn"), ("learn", "teach"), ("throw", "catch"), ("catch", "throw"),
    ("sleep", "wake"), ("wake", "sleep"),
];

/// Words after which a verb-looking token is read as a noun ("a walk", "the waves").
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "their", "my", "your", "its",
    "our", "some", "every", "each",
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn regular_third(lemma: &str) -> String {
    let ends = |s: &str| lemma.ends_with(s);
    if ends("s") || ends("sh") || ends("ch") || ends("x") || ends("z") || ends("o") {
        format!("{lemma}es")
    } else if consonant_y(lemma) {
        format!("{}ies", &lemma[..lemma.len() - 1])
    } else {
        format!("{lemma}s")
    }
}

fn consonant_y(lemma: &str) -> bool {
    let mut rev = lemma.chars().rev();
    matches!((rev.next(), rev.next()), (Some('y'), Some(c)) if !is_vowel(c))
}

fn doubled(lemma: &str) -> Option<String> {
    DOUBLING
        .contains(&lemma)
        .then(|| format!("{lemma}{}", lemma.chars().last().expect("non-empty lemma")))
}

fn regular_gerund(lemma: &str) -> String {
    if let Some(stem) = lemma.strip_suffix("ie") {
        return format!("{stem}ying");
    }
    if lemma.ends_with("ee") || lemma.ends_with("ye") || lemma.ends_with("oe") {
        return format!("{lemma}ing");
    }
    if let Some(stem) = lemma.strip_suffix('e') {
        if !stem.is_empty() {
            return format!("{stem}ing");
        }
    }
    if let Some(d) = doubled(lemma) {
        return format!("{d}ing");
    }
    format!("{lemma}ing")
}

fn regular_past(lemma: &str) -> String {
    if lemma.ends_with('e') {
        return format!("{lemma}d");
    }
    if consonant_y(lemma) {
        return format!("{}ied", &lemma[..lemma.len() - 1]);
    }
    if let Some(d) = doubled(lemma) {
        return format!("{d}ed");
    }
    format!("{lemma}ed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedVerb {
    /// Token position in the normalized text.
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    pub form: VerbForm,
}

/// Surface-form lookup table for verbs.
#[derive(Debug, Clone, Default)]
pub struct VerbLexicon {
    forms: HashMap<String, (String, VerbForm)>,
    lemmas: BTreeSet<String>,
    past: HashMap<String, String>,
}

impl VerbLexicon {
    pub fn builtin() -> Self {
        let mut lex = Self::default();
        for (lemma, past) in IRREGULAR_PAST {
            lex.past.insert((*lemma).to_string(), (*past).to_string());
        }
        for v in BUILTIN_VERBS {
            lex.add_lemma(v);
        }
        lex
    }

    /// Registers a lemma and all of its inflections. Existing entries win.
    pub fn add_lemma(&mut self, lemma: &str) {
        let lemma = normalize_text(lemma);
        if lemma.is_empty() || lemma.contains(' ') || !self.lemmas.insert(lemma.clone()) {
            return;
        }
        for form in [VerbForm::Base, VerbForm::ThirdPerson, VerbForm::Gerund, VerbForm::Past] {
            let surface = self.inflect(&lemma, form);
            self.forms.entry(surface).or_insert((lemma.clone(), form));
        }
    }

    pub fn contains_lemma(&self, lemma: &str) -> bool {
        self.lemmas.contains(lemma)
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.lemmas.iter().map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<(&str, VerbForm)> {
        self.forms.get(token).map(|(l, f)| (l.as_str(), *f))
    }

    pub fn inflect(&self, lemma: &str, form: VerbForm) -> String {
        match form {
            VerbForm::Base => lemma.to_string(),
            VerbForm::ThirdPerson => regular_third(lemma),
            VerbForm::Gerund => regular_gerund(lemma),
            VerbForm::Past => self.past.get(lemma).cloned().unwrap_or_else(|| regular_past(lemma)),
        }
    }

    /// Lemma of a known surface form, else the word itself.
    pub fn lemmatize(&self, word: &str) -> String {
        let w = normalize_text(word);
        self.lookup(&w).map(|(l, _)| l.to_string()).unwrap_or(w)
    }

    /// Verbs in `text`, in token order.
    pub fn tag(&self, text: &str) -> Vec<TaggedVerb> {
        let norm = normalize_text(text);
        let tokens: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
        tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| *i == 0 || !DETERMINERS.contains(&tokens[i - 1]))
            .filter_map(|(i, tok)| {
                self.lookup(tok).map(|(lemma, form)| TaggedVerb {
                    index: i,
                    surface: (*tok).to_string(),
                    lemma: lemma.to_string(),
                    form,
                })
            })
            .collect()
    }
}

/// Word lists backing the rule-based backends.
#[derive(Debug, Clone)]
pub struct LexiconResources {
    /// Lemmas used for random verb replacement.
    pub verb_corpus: BTreeSet<String>,
    pub antonym_map: BTreeMap<String, Vec<String>>,
    pub verb_recognizer: VerbLexicon,
}

impl LexiconResources {
    /// Builds resources, lemmatizing corpus entries and registering every
    /// word with the recognizer.
    pub fn new(verb_corpus: impl IntoIterator<Item = String>, antonyms: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut recognizer = VerbLexicon::builtin();
        let mut corpus = BTreeSet::new();
        for raw in verb_corpus {
            let word = normalize_text(&raw);
            if word.is_empty() {
                continue;
            }
            let lemma = recognizer.lemmatize(&word);
            recognizer.add_lemma(&lemma);
            corpus.insert(lemma);
        }
        if corpus.is_empty() {
            return Err(GenError::Lexicon("verb corpus is empty".into()));
        }
        let mut antonym_map = BTreeMap::new();
        for (verb, list) in antonyms {
            let lemma = recognizer.lemmatize(&verb);
            let list: Vec<String> = list
                .iter()
                .map(|a| recognizer.lemmatize(a))
                .filter(|a| !a.is_empty())
                .collect();
            if list.is_empty() {
                return Err(GenError::Lexicon(format!("antonym list for {verb:?} is empty")));
            }
            recognizer.add_lemma(&lemma);
            for a in &list {
                recognizer.add_lemma(a);
            }
            antonym_map.insert(lemma, list);
        }
        Ok(Self {
            verb_corpus: corpus,
            antonym_map,
            verb_recognizer: recognizer,
        })
    }

    /// Built-in verb list and antonym pairs.
    pub fn builtin() -> Self {
        let mut antonyms: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (a, b) in BUILTIN_ANTONYMS {
            antonyms.entry((*a).to_string()).or_default().push((*b).to_string());
        }
        Self::new(BUILTIN_VERBS.iter().map(|s| s.to_string()), antonyms).expect("built-in lexicon is valid")
    }

    /// Loads a newline-delimited verb corpus and an optional two-column
    /// tab-separated antonym file.
    pub fn load(verb_corpus: &Path, antonyms: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| GenError::Lexicon(format!("cannot read {}: {e}", p.display())))
        };
        let verbs: Vec<String> = read(verb_corpus)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        if let Some(path) = antonyms {
            for (n, line) in read(path)?.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let (verb, ant) = line.split_once('\t').ok_or_else(|| {
                    GenError::Lexicon(format!("{}:{}: expected two tab-separated columns", path.display(), n + 1))
                })?;
                map.entry(verb.trim().to_string()).or_default().push(ant.trim().to_string());
            }
        }
        Self::new(verbs, map)
    }
}
