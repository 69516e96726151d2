//! Personas file: JSONL with one `{user_id, ideology_label, traits?, corpus?}`
//! object per agent, in agent-id order. Records without traits are inferred
//! from their corpus at initialization.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersonaFileError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "user_id must be a string or number, got {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub user_id: String,
    pub ideology_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traits: Option<String>,
    #[serde(default, alias = "posts", skip_serializing_if = "Option::is_none")]
    pub corpus: Option<Vec<String>>,
}

impl PersonaRecord {
    fn check(&self) -> Result<(), String> {
        let has_traits = self.traits.as_ref().is_some_and(|t| !t.trim().is_empty());
        let has_corpus = self
            .corpus
            .as_ref()
            .is_some_and(|c| c.iter().any(|t| !t.trim().is_empty()));
        if has_traits || has_corpus {
            Ok(())
        } else {
            Err(format!("user {} has neither traits nor corpus", self.user_id))
        }
    }
}

/// Reads persona (or corpus) records. Blank lines are skipped.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<PersonaRecord>, PersonaFileError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PersonaRecord = serde_json::from_str(&line).map_err(|e| PersonaFileError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Like [`read_records`] but every record must carry traits or a corpus.
pub fn read_personas<R: BufRead>(r: R) -> Result<Vec<PersonaRecord>, PersonaFileError> {
    let recs = read_records(r)?;
    for (i, rec) in recs.iter().enumerate() {
        rec.check().map_err(|message| PersonaFileError::Line {
            line: i + 1,
            message,
        })?;
    }
    Ok(recs)
}

pub fn write_records<W: Write>(mut w: W, records: &[PersonaRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

const CAMPS: [(&str, &[&str]); 2] = [
    (
        "Democrat",
        &[
            "healthcare", "climate", "voting", "rights", "biden", "unions", "equality", "science",
            "masks", "democracy", "jobs", "education", "justice", "immigration", "wages", "pandemic",
        ],
    ),
    (
        "Republican",
        &[
            "taxes", "border", "freedom", "trump", "economy", "guns", "police", "faith", "liberty",
            "fraud", "energy", "military", "patriots", "constitution", "business", "values",
        ],
    ),
];

const SHARED: &[&str] = &[
    "election", "america", "media", "debate", "news", "congress", "senate", "ballots",
];

const STYLES: &[&str] = &["outspoken", "critical", "supportive", "sarcastic", "measured"];

/// A two-camp roster of `n` personas with pre-filled traits, alternating
/// camps by agent id. Deterministic in `seed`.
pub fn synthetic_roster(n: usize, seed: u64) -> Vec<PersonaRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (label, vocab) = CAMPS[i % 2];
            let mut topics: Vec<&str> = vocab.choose_multiple(&mut rng, 4).copied().collect();
            topics.extend(SHARED.choose_multiple(&mut rng, 2).copied());
            let style = STYLES[rng.gen_range(0..STYLES.len())];
            PersonaRecord {
                user_id: format!("user{i:04}"),
                ideology_label: label.to_string(),
                traits: Some(format!(
                    "Ideological alignment: {label}. Engagement style: {style}. Recurring topics: {}",
                    topics.join(" ")
                )),
                corpus: None,
            }
        })
        .collect()
}
