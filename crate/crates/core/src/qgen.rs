//! Templated question generation about one caption word.

use serde::{Deserialize, Serialize};

use crate::captioner::StepContext;
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::world::{Caption, Pos, Scene, Vocabulary, WordId};

/// Longest question in tokens.
pub const MAX_QUESTION_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QType {
    WhatObject,
    WhatAction,
    WhatAttribute,
    HowMany,
    Where,
}

impl QType {
    pub const ALL: [QType; 5] = [
        QType::WhatObject,
        QType::WhatAction,
        QType::WhatAttribute,
        QType::HowMany,
        QType::Where,
    ];

    pub fn for_pos(pos: Pos) -> Option<QType> {
        match pos {
            Pos::Noun => Some(QType::WhatObject),
            Pos::Verb => Some(QType::WhatAction),
            Pos::Adj => Some(QType::WhatAttribute),
            Pos::Num => Some(QType::HowMany),
            Pos::Adv => Some(QType::Where),
            Pos::Other => None,
        }
    }

    /// Part of speech of a well-formed answer.
    pub fn answer_pos(self) -> Pos {
        match self {
            QType::WhatObject => Pos::Noun,
            QType::WhatAction => Pos::Verb,
            QType::WhatAttribute => Pos::Adj,
            QType::HowMany => Pos::Num,
            QType::Where => Pos::Adv,
        }
    }
}

/// What the question points at in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Slot(u32),
    Noun(WordId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub qtype: QType,
    pub text: Vec<String>,
    pub target_step: usize,
    pub target_pos: Pos,
    pub anchor: Anchor,
}

impl Question {
    pub fn render(&self) -> String {
        self.text.join(" ")
    }
}

fn nouns_where(
    caption: &Caption,
    target: WordId,
    range: impl Iterator<Item = usize>,
) -> Option<WordId> {
    range
        .map(|i| (caption.tokens[i], caption.pos[i]))
        .find(|&(w, p)| p == Pos::Noun && w != target)
        .map(|(w, _)| w)
}

/// Builds the question for step `ctx.t` of `caption`. The question type comes
/// from the predicted POS at that step; the anchor is a caption noun when one
/// fits, otherwise the most attended object's slot.
pub fn generate_question(
    scene: &Scene,
    caption: &Caption,
    ctx: &StepContext,
    vocab: &Vocabulary,
) -> Result<Question> {
    let t = ctx.t;
    if t >= caption.len() {
        return Err(Error::InvalidArgument(format!(
            "step {t} outside caption of length {}",
            caption.len()
        )));
    }
    let target_pos = Pos::from_index(argmax(&ctx.pos_dist));
    let qtype = QType::for_pos(target_pos)
        .ok_or_else(|| Error::InvalidArgument(format!("cannot ask about a {target_pos} word")))?;
    let target = caption.tokens[t];
    let before = || nouns_where(caption, target, (0..t).rev());
    let after = || nouns_where(caption, target, t + 1..caption.len());
    let noun = match qtype {
        QType::WhatObject => None,
        QType::WhatAction => nouns_where(caption, target, 0..t).or_else(after),
        // an adjective usually modifies the noun right after it
        QType::WhatAttribute => nouns_where(caption, target, t + 1..(t + 2).min(caption.len()))
            .or_else(before)
            .or_else(after),
        QType::HowMany => after().or_else(before),
        QType::Where => before().or_else(after),
    };
    let slot = scene
        .objects
        .get(argmax(&ctx.attention))
        .map_or(0, |o| o.slot);
    let anchor = noun.map_or(Anchor::Slot(slot), Anchor::Noun);
    let subject: Vec<String> = match anchor {
        Anchor::Noun(n) => vec!["the".into(), vocab.word(n).into()],
        Anchor::Slot(s) => ["the", "object", "in", "region"]
            .iter()
            .map(|s| s.to_string())
            .chain([s.to_string()])
            .collect(),
    };
    let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let text: Vec<String> = match qtype {
        QType::WhatObject => [words(&["what", "is"]), subject].concat(),
        QType::WhatAction => [words(&["what", "is"]), subject, words(&["doing"])].concat(),
        QType::WhatAttribute => {
            [words(&["what", "does"]), subject, words(&["look", "like"])].concat()
        }
        QType::HowMany => match anchor {
            Anchor::Noun(n) => words(&["how", "many", vocab.word(n), "are", "there"]),
            Anchor::Slot(_) => [
                words(&["how", "many", "of"]),
                subject,
                words(&["are", "there"]),
            ]
            .concat(),
        },
        QType::Where => [words(&["where", "is"]), subject].concat(),
    };
    debug_assert!(text.len() <= MAX_QUESTION_LEN);
    // function words like "the" may share the template; content words never do
    debug_assert!(!vocab.pos(target).askable() || !text.iter().any(|w| w == vocab.word(target)));
    Ok(Question {
        qtype,
        text,
        target_step: t,
        target_pos,
        anchor,
    })
}
