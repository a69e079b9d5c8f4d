//! Line-delimited corpus files.
//!
//! A corpus directory holds `vocab.json` (ordered `[word, POS]` pairs) and
//! `corpus.jsonl`, one record per line:
//!
//! ```text
//! {"scene": {"id": 0, "objects": [{"category": "dog", "attributes": ["brown"], "action": "running", "slot": 2}], "relations": []}}
//! {"caption": {"scene_id": 0, "tokens": ["a", "brown", "dog"], "pos": ["OTHER", "ADJ", "NOUN"]}}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scene::{Caption, CaptionSource, Relation, Scene, SceneObject, MAX_CAPTION_LEN};
use super::vocab::{Pos, Vocabulary, WordId};
use super::Corpus;
use crate::error::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Record {
    Scene(SceneRecord),
    Caption(CaptionRecord),
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    id: u64,
    objects: Vec<ObjectRecord>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    category: String,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    action: Option<String>,
    slot: u32,
}

#[derive(Serialize, Deserialize)]
struct RelationRecord {
    subject: usize,
    preposition: String,
    object: usize,
}

#[derive(Serialize, Deserialize)]
struct CaptionRecord {
    scene_id: u64,
    tokens: Vec<String>,
    pos: Vec<String>,
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let words: Vec<(&str, Pos)> = corpus
        .vocab
        .entries()
        .iter()
        .map(|(w, p)| (w.as_str(), *p))
        .collect();
    fs::write(
        dir.join(VOCAB_FILE),
        serde_json::to_string_pretty(&serde_json::json!({ "words": words }))? + "\n",
    )?;

    let v = &corpus.vocab;
    let word = |id: WordId| v.word(id).to_string();
    let mut out = BufWriter::new(fs::File::create(dir.join(CORPUS_FILE))?);
    for s in &corpus.scenes {
        let rec = Record::Scene(SceneRecord {
            id: s.id,
            objects: s
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    category: word(o.category),
                    attributes: o.attributes.iter().map(|&a| word(a)).collect(),
                    action: o.action.map(word),
                    slot: o.slot,
                })
                .collect(),
            relations: s
                .relations
                .iter()
                .map(|r| RelationRecord {
                    subject: r.subject,
                    preposition: word(r.preposition),
                    object: r.object,
                })
                .collect(),
        });
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
        for c in corpus.refs(s.id) {
            let rec = Record::Caption(CaptionRecord {
                scene_id: s.id,
                tokens: c.tokens.iter().map(|&t| word(t)).collect(),
                pos: c.pos.iter().map(|p| p.to_string()).collect(),
            });
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads `vocab.json` and `corpus.jsonl` from a corpus directory.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let vocab_path = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&vocab_path)?;
    #[derive(Deserialize)]
    struct VocabFile {
        words: Vec<(String, String)>,
    }
    let vf: VocabFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: vocab_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let entries = vf
        .words
        .into_iter()
        .map(|(w, p)| Ok((w, p.parse::<Pos>()?)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Parse {
            path: vocab_path.clone(),
            line: 1,
            msg: e.to_string(),
        })?;
    let vocab = Vocabulary::from_entries(entries).map_err(|e| Error::Parse {
        path: vocab_path,
        line: 1,
        msg: e.to_string(),
    })?;
    load_corpus_records(&dir.join(CORPUS_FILE), vocab)
}

/// Parses a corpus record file against a known vocabulary.
pub fn load_corpus_records(path: &Path, vocab: Vocabulary) -> Result<Corpus> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut scenes: Vec<Scene> = Vec::new();
    let mut gt: BTreeMap<u64, Vec<Caption>> = BTreeMap::new();
    let mut caption_lines: Vec<(usize, u64)> = Vec::new();
    let mut seen_ids: HashSet<u64> = HashSet::new();
    let perr = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| perr(lineno, e.to_string()))?;
        let lookup = |w: &str, pos: Pos| -> Result<WordId> {
            match vocab.id(w) {
                Some(id) if vocab.pos(id) == pos => Ok(id),
                Some(id) => Err(perr(
                    lineno,
                    format!("word {w:?} is {}, expected {pos}", vocab.pos(id)),
                )),
                None => Err(perr(lineno, format!("token {w:?} outside vocabulary"))),
            }
        };
        match rec {
            Record::Scene(s) => {
                if !seen_ids.insert(s.id) {
                    return Err(perr(lineno, format!("duplicate scene id {}", s.id)));
                }
                let mut objects = Vec::with_capacity(s.objects.len());
                for o in &s.objects {
                    objects.push(SceneObject {
                        category: lookup(&o.category, Pos::Noun)?,
                        attributes: o
                            .attributes
                            .iter()
                            .map(|a| lookup(a, Pos::Adj))
                            .collect::<Result<_>>()?,
                        action: o
                            .action
                            .as_deref()
                            .map(|a| lookup(a, Pos::Verb))
                            .transpose()?,
                        slot: o.slot,
                    });
                }
                let mut relations = Vec::with_capacity(s.relations.len());
                for r in &s.relations {
                    let preposition = vocab.id(&r.preposition).ok_or_else(|| {
                        perr(
                            lineno,
                            format!("token {:?} outside vocabulary", r.preposition),
                        )
                    })?;
                    relations.push(Relation {
                        subject: r.subject,
                        preposition,
                        object: r.object,
                    });
                }
                let scene = Scene {
                    id: s.id,
                    objects,
                    relations,
                };
                scene
                    .validate(&vocab)
                    .map_err(|e| perr(lineno, e.to_string()))?;
                scenes.push(scene);
            }
            Record::Caption(c) => {
                if c.tokens.len() != c.pos.len() {
                    return Err(perr(lineno, "tokens and pos differ in length".into()));
                }
                if c.tokens.len() > MAX_CAPTION_LEN {
                    return Err(perr(
                        lineno,
                        format!(
                            "caption length {} exceeds {MAX_CAPTION_LEN}",
                            c.tokens.len()
                        ),
                    ));
                }
                let mut tokens = Vec::with_capacity(c.tokens.len());
                let mut pos = Vec::with_capacity(c.pos.len());
                for (t, p) in c.tokens.iter().zip(&c.pos) {
                    let p: Pos = p.parse().map_err(|e: Error| perr(lineno, e.to_string()))?;
                    tokens.push(lookup(t, p)?);
                    pos.push(p);
                }
                caption_lines.push((lineno, c.scene_id));
                gt.entry(c.scene_id).or_default().push(Caption {
                    tokens,
                    pos,
                    source: CaptionSource::Gt,
                    reward: None,
                });
            }
        }
    }
    for (lineno, sid) in caption_lines {
        if !seen_ids.contains(&sid) {
            return Err(perr(
                lineno,
                format!("caption references unknown scene {sid}"),
            ));
        }
    }
    Ok(Corpus { vocab, scenes, gt })
}
