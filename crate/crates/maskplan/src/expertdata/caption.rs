//! Caption templates and the closed instruction vocabulary.
//!
//! Captions are generated from task structure with four paraphrases per task
//! kind, chosen by `seed % 4`, so text is deterministic given the seed. The
//! vocabulary is closed: every templated caption tokenizes exactly, and
//! anything outside it is an error rather than a silent unknown.

use super::{Instruction, Task, TaskKind};
use crate::simworld::World;

/// The full instruction vocabulary. Index is the token id; id 0 is the
/// `<null>` token that stands for the empty (task-agnostic) instruction.
pub const VOCAB: &[&str] = &[
    "<null>",
    "go",
    "to",
    "the",
    "reach",
    "navigate",
    "head",
    "avoid",
    "stay",
    "away",
    "from",
    "steer",
    "clear",
    "of",
    "keep",
    "a",
    "safe",
    "distance",
    "well",
    "maintain",
    "give",
    "space",
    "on",
    "prefer",
    "drive",
    "red",
    "blue",
    "green",
    "yellow",
    "orange",
    "cone",
    "cones",
    "trashcan",
    "trashcans",
    "vest",
    "vests",
    "hose",
    "hoses",
    "sidewalk",
    "grass",
    "mud",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CaptionError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("token id {0} is out of range (vocabulary has {1} entries)")]
    UnknownToken(u16, usize),
    #[error("the <null> token cannot be mixed with words")]
    MixedNull,
}

pub fn vocab() -> &'static [&'static str] {
    VOCAB
}

/// Token id for a word, if it is in the vocabulary.
pub fn token_id(word: &str) -> Option<u16> {
    VOCAB.iter().position(|w| *w == word).map(|i| i as u16)
}

/// Tokenizes a caption. The empty string is the null instruction and maps to
/// the single `<null>` token.
pub fn tokenize(text: &str) -> Result<Vec<u16>, CaptionError> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let word = raw.to_lowercase();
        match token_id(&word) {
            Some(id) => out.push(id),
            None => return Err(CaptionError::UnknownWord(word)),
        }
    }
    if out.is_empty() {
        out.push(0);
    }
    Ok(out)
}

/// Inverse of [`tokenize`]: joins words with single spaces; the lone
/// `<null>` token decodes to the empty string.
pub fn decode(tokens: &[u16]) -> Result<String, CaptionError> {
    if tokens == [0] {
        return Ok(String::new());
    }
    let mut words = Vec::with_capacity(tokens.len());
    for &id in tokens {
        if id == 0 {
            return Err(CaptionError::MixedNull);
        }
        let idx = id as usize;
        if idx >= VOCAB.len() {
            return Err(CaptionError::UnknownToken(id, VOCAB.len()));
        }
        words.push(VOCAB[idx]);
    }
    Ok(words.join(" "))
}

/// The empty instruction used for task-agnostic data and unconditional
/// sampling.
pub fn null_instruction() -> Instruction {
    Instruction {
        text: String::new(),
        tokens: vec![0],
        is_null: true,
    }
}

fn plural(noun: &str) -> String {
    format!("{}s", noun)
}

/// Renders the caption text for a task. `seed % 4` picks the paraphrase.
pub fn caption_text(task: &Task, world: &World, seed: u64) -> String {
    let v = (seed % 4) as usize;
    match task.kind {
        TaskKind::GoTo { object } => {
            let ob = &world.objects[object];
            let np = format!("{} {}", ob.color.word(), ob.class.word());
            match v {
                0 => format!("go to the {}", np),
                1 => format!("reach the {}", np),
                2 => format!("navigate to the {}", np),
                _ => format!("head to the {}", np),
            }
        }
        TaskKind::Avoid { class } => {
            let np = plural(class.word());
            match v {
                0 => format!("avoid the {}", np),
                1 => format!("stay away from the {}", np),
                2 => format!("steer clear of the {}", np),
                _ => format!("keep away from the {}", np),
            }
        }
        TaskKind::KeepDistance { object, .. } => {
            let ob = &world.objects[object];
            let np = format!("{} {}", ob.color.word(), ob.class.word());
            match v {
                0 => format!("keep a safe distance from the {}", np),
                1 => format!("stay well clear of the {}", np),
                2 => format!("maintain distance from the {}", np),
                _ => format!("give the {} space", np),
            }
        }
        TaskKind::TerrainPref { prefer } => {
            let t = prefer.word();
            match v {
                0 => format!("stay on the {}", t),
                1 => format!("keep to the {}", t),
                2 => format!("prefer the {}", t),
                _ => format!("drive on the {}", t),
            }
        }
    }
}

/// Builds the full instruction (text plus tokens) for a task.
pub fn caption_task(task: &Task, world: &World, seed: u64) -> Instruction {
    let text = caption_text(task, world, seed);
    let tokens = tokenize(&text).expect("templated captions always tokenize");
    Instruction {
        text,
        tokens,
        is_null: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{gen_world, ColorName, EntityClass, TerrainClass, WorldGenConfig};

    fn world_with_red_cone() -> World {
        let mut cfg = WorldGenConfig::default();
        cfg.n_objects = [1, 1];
        let mut w = gen_world(0, &cfg);
        w.objects[0].color = ColorName::Red;
        w.objects[0].class = EntityClass::Cone;
        w
    }

    #[test]
    fn goto_paraphrases_are_pinned_by_seed() {
        let w = world_with_red_cone();
        let task = Task {
            kind: TaskKind::GoTo { object: 0 },
            goal: w.objects[0].center,
        };
        assert_eq!(caption_text(&task, &w, 0), "go to the red cone");
        assert_eq!(caption_text(&task, &w, 1), "reach the red cone");
        assert_eq!(caption_text(&task, &w, 2), "navigate to the red cone");
        assert_eq!(caption_text(&task, &w, 3), "head to the red cone");
        // Paraphrase index wraps mod 4.
        assert_eq!(caption_text(&task, &w, 4), "go to the red cone");
    }

    #[test]
    fn every_templated_caption_round_trips_through_tokens() {
        let w = world_with_red_cone();
        let mut tasks = Vec::new();
        tasks.push(Task {
            kind: TaskKind::GoTo { object: 0 },
            goal: [1.0, 1.0],
        });
        for class in [
            EntityClass::Cone,
            EntityClass::Trashcan,
            EntityClass::Vest,
            EntityClass::Hose,
        ] {
            tasks.push(Task {
                kind: TaskKind::Avoid { class },
                goal: [1.0, 1.0],
            });
        }
        tasks.push(Task {
            kind: TaskKind::KeepDistance {
                object: 0,
                margin: 1.0,
            },
            goal: [1.0, 1.0],
        });
        for prefer in [TerrainClass::Sidewalk, TerrainClass::Grass, TerrainClass::Mud] {
            tasks.push(Task {
                kind: TaskKind::TerrainPref { prefer },
                goal: [1.0, 1.0],
            });
        }
        for task in &tasks {
            for seed in 0..4 {
                let instr = caption_task(task, &w, seed);
                assert!(!instr.is_null);
                assert_eq!(tokenize(&instr.text).unwrap(), instr.tokens);
                assert_eq!(decode(&instr.tokens).unwrap(), instr.text);
            }
        }
    }

    #[test]
    fn all_palette_noun_phrases_tokenize() {
        // Every (color, class) the generator can emit must be in-vocabulary.
        for color in [
            ColorName::Red,
            ColorName::Blue,
            ColorName::Green,
            ColorName::Yellow,
            ColorName::Orange,
        ] {
            for class in [
                EntityClass::Cone,
                EntityClass::Trashcan,
                EntityClass::Vest,
                EntityClass::Hose,
            ] {
                let text = format!("go to the {} {}", color.word(), class.word());
                assert!(tokenize(&text).is_ok(), "{} failed", text);
            }
        }
    }

    #[test]
    fn null_instruction_round_trips() {
        let null = null_instruction();
        assert_eq!(null.tokens, vec![0]);
        assert_eq!(tokenize("").unwrap(), vec![0]);
        assert_eq!(tokenize("   ").unwrap(), vec![0]);
        assert_eq!(decode(&[0]).unwrap(), "");
    }

    #[test]
    fn tokenizer_errors_are_typed() {
        assert_eq!(
            tokenize("go to the purple cone").unwrap_err(),
            CaptionError::UnknownWord("purple".into())
        );
        assert_eq!(
            decode(&[9999]).unwrap_err(),
            CaptionError::UnknownToken(9999, VOCAB.len())
        );
        assert_eq!(decode(&[0, 1]).unwrap_err(), CaptionError::MixedNull);
    }

    #[test]
    fn vocabulary_is_small_and_duplicate_free() {
        assert!(VOCAB.len() <= 128, "vocab has {} entries", VOCAB.len());
        let mut sorted: Vec<&str> = VOCAB.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), VOCAB.len(), "duplicate vocabulary words");
    }

    #[test]
    fn tokenize_is_case_insensitive() {
        assert_eq!(
            tokenize("Go To The Red Cone").unwrap(),
            tokenize("go to the red cone").unwrap()
        );
    }
}
