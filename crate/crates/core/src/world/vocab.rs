use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordId(pub u32);

impl WordId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Num,
    Adv,
    Other,
}

impl Pos {
    pub const COUNT: usize = 6;
    pub const ALL: [Pos; Pos::COUNT] = [
        Pos::Noun,
        Pos::Verb,
        Pos::Adj,
        Pos::Num,
        Pos::Adv,
        Pos::Other,
    ];

    /// Whether the decision module may ask about a word with this tag.
    pub fn askable(self) -> bool {
        !matches!(self, Pos::Other)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Pos {
        Pos::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Num => "NUM",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NOUN" => Pos::Noun,
            "VERB" => Pos::Verb,
            "ADJ" => Pos::Adj,
            "NUM" => Pos::Num,
            "ADV" => Pos::Adv,
            "OTHER" => Pos::Other,
            _ => return Err(Error::InvalidArgument(format!("unknown POS tag {s:?}"))),
        })
    }
}

pub const BOS: WordId = WordId(0);
pub const EOS: WordId = WordId(1);
pub const UNK: WordId = WordId(2);
const SPECIALS: [&str; 3] = ["<bos>", "<eos>", "<unk>"];

/// Word list with a fixed POS per word. Ids `0..3` are the special tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    entries: Vec<(String, Pos)>,
    index: HashMap<String, WordId>,
    by_pos: Vec<Vec<WordId>>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    words: Vec<(String, Pos)>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_entries(r.words)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { words: v.entries }
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
            by_pos: vec![Vec::new(); Pos::COUNT],
        };
        for s in SPECIALS {
            v.entries.push((s.to_string(), Pos::Other));
            v.index
                .insert(s.to_string(), WordId(v.entries.len() as u32 - 1));
        }
        v
    }

    /// Rebuilds a vocabulary from a full entry list (specials included, in order).
    pub fn from_entries(entries: Vec<(String, Pos)>) -> Result<Self> {
        if entries.len() < SPECIALS.len()
            || entries
                .iter()
                .zip(SPECIALS)
                .any(|((w, p), s)| w != s || *p != Pos::Other)
        {
            return Err(Error::InvalidArgument(
                "vocabulary must start with <bos>, <eos>, <unk>".into(),
            ));
        }
        let mut v = Vocabulary::new();
        for (w, p) in entries.into_iter().skip(SPECIALS.len()) {
            v.insert(&w, p)?;
        }
        Ok(v)
    }

    /// Adds a word; re-adding with the same tag is a no-op, with a different tag an error.
    pub fn insert(&mut self, word: &str, pos: Pos) -> Result<WordId> {
        if let Some(&id) = self.index.get(word) {
            if self.entries[id.idx()].1 != pos {
                return Err(Error::InvalidArgument(format!(
                    "word {word:?} already tagged {}",
                    self.entries[id.idx()].1
                )));
            }
            return Ok(id);
        }
        let id = WordId(self.entries.len() as u32);
        self.entries.push((word.to_string(), pos));
        self.index.insert(word.to_string(), id);
        self.by_pos[pos.index()].push(id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.entries[id.idx()].0
    }

    pub fn pos(&self, id: WordId) -> Pos {
        self.entries[id.idx()].1
    }

    pub fn contains(&self, id: WordId) -> bool {
        id.idx() < self.entries.len()
    }

    /// Non-special words carrying `pos`, in insertion order.
    pub fn words_with_pos(&self, pos: Pos) -> &[WordId] {
        &self.by_pos[pos.index()]
    }

    pub fn entries(&self) -> &[(String, Pos)] {
        &self.entries
    }

    pub fn render(&self, tokens: &[WordId]) -> String {
        tokens
            .iter()
            .map(|&t| self.word(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Maps whitespace-separated words to ids, unknown words to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<WordId> {
        text.split_whitespace()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    /// Stem used for METEOR matching: strips one of `s`, `es`, `ing`, `ed` when the
    /// remainder is itself a vocabulary word.
    pub fn stem(&self, id: WordId) -> WordId {
        let w = self.word(id);
        for suffix in ["ing", "es", "ed", "s"] {
            if let Some(base) = w.strip_suffix(suffix) {
                if !base.is_empty() {
                    if let Some(b) = self.id(base) {
                        return b;
                    }
                }
            }
        }
        id
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}
