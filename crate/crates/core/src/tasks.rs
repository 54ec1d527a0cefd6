//! The six scored tasks: instance format, loaders, generators and scorers.
//!
//! Scores are returned in raw units (CoinFlip 0/1, Spelling Bee normalised
//! to [0, 1], YesNoBlackWhite -1/0, Taboo in [-|constraints|, 0], Pig Latin
//! BLEU in [0, 1], MultiArith 0/1). Reports multiply by
//! [`TaskKind::display_scale`] to show percentages where the task is
//! conventionally reported as one.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{LazyLock, Mutex};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::metrics::{self, BleuOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Coinflip,
    SpellingBee,
    Ynbw,
    Taboo,
    PigLatin,
    Multiarith,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Coinflip,
        TaskKind::SpellingBee,
        TaskKind::Ynbw,
        TaskKind::Taboo,
        TaskKind::PigLatin,
        TaskKind::Multiarith,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Coinflip => "coinflip",
            TaskKind::SpellingBee => "spelling_bee",
            TaskKind::Ynbw => "ynbw",
            TaskKind::Taboo => "taboo",
            TaskKind::PigLatin => "pig_latin",
            TaskKind::Multiarith => "multiarith",
        }
    }

    /// Column title used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            TaskKind::Coinflip => "CoinFlip",
            TaskKind::SpellingBee => "Spelling Bee",
            TaskKind::Ynbw => "YesNoBlackWhite",
            TaskKind::Taboo => "Taboo",
            TaskKind::PigLatin => "Pig Latin",
            TaskKind::Multiarith => "MultiArith",
        }
    }

    /// Multiplier from raw score to reported units (percent for all tasks
    /// except Taboo, which is reported as a raw penalty).
    pub fn display_scale(self) -> f64 {
        match self {
            TaskKind::Taboo => 1.0,
            _ => 100.0,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// Task-specific ground truth carried by an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// CoinFlip: "yes" or "no".
    YesNo(String),
    /// Spelling Bee: seven distinct letters, optional center letter.
    Puzzle { letters: Vec<char>, center: Option<char> },
    /// YesNoBlackWhite has no reference; the forbidden words are fixed.
    Forbidden,
    /// Taboo: 3 to 10 constraint words.
    Constraints(Vec<String>),
    /// Pig Latin reference translation.
    Translation(String),
    /// MultiArith numeric answer.
    Number(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub task: TaskKind,
    pub id: String,
    pub input: String,
    pub reference: Reference,
}

impl TaskInstance {
    pub fn new(task: TaskKind, id: impl Into<String>, input: impl Into<String>, reference: Reference) -> Result<Self> {
        let instance = Self {
            task,
            id: id.into(),
            input: input.into(),
            reference,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("instance {}: {msg}", self.id)));
        match (&self.task, &self.reference) {
            (TaskKind::Coinflip, Reference::YesNo(answer)) => {
                if answer != "yes" && answer != "no" {
                    return bad(format!("coinflip reference must be yes/no, got `{answer}`"));
                }
            }
            (TaskKind::SpellingBee, Reference::Puzzle { letters, center }) => {
                let distinct: BTreeSet<char> = letters.iter().copied().collect();
                if letters.len() != 7 || distinct.len() != 7 {
                    return bad("spelling_bee needs exactly 7 distinct letters".into());
                }
                if let Some(c) = center {
                    if !distinct.contains(c) {
                        return bad(format!("center letter `{c}` not among the puzzle letters"));
                    }
                }
            }
            (TaskKind::Ynbw, Reference::Forbidden) => {}
            (TaskKind::Taboo, Reference::Constraints(words)) => {
                if !(3..=10).contains(&words.len()) {
                    return bad(format!("taboo needs 3 to 10 constraints, got {}", words.len()));
                }
            }
            (TaskKind::PigLatin, Reference::Translation(_)) => {}
            (TaskKind::Multiarith, Reference::Number(n)) => {
                if !n.is_finite() {
                    return bad("multiarith reference is not finite".into());
                }
            }
            (task, _) => return bad(format!("reference payload does not match task {task}")),
        }
        Ok(())
    }

    pub fn constraint_count(&self) -> Option<usize> {
        match &self.reference {
            Reference::Constraints(words) => Some(words.len()),
            _ => None,
        }
    }

    fn reference_json(&self) -> Value {
        match &self.reference {
            Reference::YesNo(a) => json!(a),
            Reference::Puzzle { letters, center } => {
                let letters: String = letters.iter().collect();
                match center {
                    Some(c) => json!({ "letters": letters, "center": c.to_string() }),
                    None => json!({ "letters": letters }),
                }
            }
            Reference::Forbidden => Value::Null,
            Reference::Constraints(words) => json!(words),
            Reference::Translation(t) => json!(t),
            Reference::Number(n) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    json!(*n as i64)
                } else {
                    json!(n)
                }
            }
        }
    }

    /// One JSONL record: `{"task", "id", "input", "reference"}`.
    pub fn to_json(&self) -> Value {
        json!({
            "task": self.task.name(),
            "id": self.id,
            "input": self.input,
            "reference": self.reference_json(),
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Data("record is not a JSON object".into()))?;
        let text_field = |name: &str| -> Result<String> {
            obj.get(name)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| Error::Data(format!("field `{name}` missing or not a string")))
        };
        let task: TaskKind = text_field("task")?
            .parse()
            .map_err(|_| Error::Data("field `task` names an unknown task".into()))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(Error::Data("field `id` missing or not a string".into())),
        };
        let input = text_field("input")?;
        let raw = obj.get("reference").unwrap_or(&Value::Null);
        let reference_err = |what: &str| Error::Data(format!("field `reference`: {what}"));
        let reference = match task {
            TaskKind::Coinflip => Reference::YesNo(
                raw.as_str()
                    .ok_or_else(|| reference_err("expected \"yes\" or \"no\""))?
                    .trim()
                    .to_lowercase(),
            ),
            TaskKind::SpellingBee => {
                let letters = raw
                    .get("letters")
                    .and_then(Value::as_str)
                    .ok_or_else(|| reference_err("expected {\"letters\": ...}"))?
                    .to_lowercase()
                    .chars()
                    .filter(|c| c.is_alphabetic())
                    .collect();
                let center = raw
                    .get("center")
                    .and_then(Value::as_str)
                    .and_then(|s| s.to_lowercase().chars().next());
                Reference::Puzzle { letters, center }
            }
            TaskKind::Ynbw => Reference::Forbidden,
            TaskKind::Taboo => {
                let list = raw
                    .as_array()
                    .or_else(|| raw.get("constraints").and_then(Value::as_array))
                    .ok_or_else(|| reference_err("expected a list of constraint words"))?;
                let words = list
                    .iter()
                    .map(|w| w.as_str().map(|s| s.to_lowercase()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| reference_err("constraint words must be strings"))?;
                Reference::Constraints(words)
            }
            TaskKind::PigLatin => Reference::Translation(
                raw.as_str()
                    .ok_or_else(|| reference_err("expected a translation string"))?
                    .to_owned(),
            ),
            TaskKind::Multiarith => {
                let n = match raw {
                    Value::Number(n) => n.as_f64(),
                    Value::String(s) => s.replace(',', "").trim().parse().ok(),
                    _ => None,
                };
                Reference::Number(n.ok_or_else(|| reference_err("expected a number"))?)
            }
        };
        let instance = Self {
            task,
            id,
            input,
            reference,
        };
        instance.validate()?;
        Ok(instance)
    }
}

/// Reads a JSONL task file. When `expected` is given, every record must be of
/// that task.
pub fn load_instances(path: &Path, expected: Option<TaskKind>) -> Result<Vec<TaskInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instances(&text, expected).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_instances(text: &str, expected: Option<TaskKind>) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::Data(format!("line {}: {msg}", lineno + 1));
        let value: Value = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let instance = TaskInstance::from_json(&value).map_err(|e| match e {
            Error::Data(msg) => at(msg),
            other => other,
        })?;
        if let Some(kind) = expected {
            if instance.task != kind {
                return Err(at(format!("task `{}` where `{kind}` was expected", instance.task)));
            }
        }
        if !seen.insert(instance.id.clone()) {
            return Err(at(format!("duplicate id `{}`", instance.id)));
        }
        out.push(instance);
    }
    Ok(out)
}

pub fn write_instances(path: &Path, instances: &[TaskInstance]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for instance in instances {
        writeln!(file, "{}", instance.to_json()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Newline-delimited word list used by Spelling Bee scoring.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    words: BTreeSet<String>,
}

impl Dictionary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(text.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Per-rule breakdown attached to a score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreDetail {
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub credited_words: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub constraint_hits: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extracted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub maximum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub value: f64,
    pub task: TaskKind,
    pub detail: ScoreDetail,
}

/// Lowercased alphanumeric words of `text`, in order.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whole-word, case-insensitive containment. Multi-word phrases must appear
/// as a contiguous word sequence.
fn contains_phrase(haystack: &[String], phrase: &str) -> bool {
    let needle = words(phrase);
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

pub fn score_coinflip(instance: &TaskInstance, response: &str) -> TaskScore {
    let Reference::YesNo(answer) = &instance.reference else {
        return mismatch(instance);
    };
    let extracted = words(response).into_iter().rev().find(|w| w == "yes" || w == "no");
    let value = if extracted.as_deref() == Some(answer.as_str()) {
        1.0
    } else {
        0.0
    };
    TaskScore {
        value,
        task: TaskKind::Coinflip,
        detail: ScoreDetail {
            extracted,
            ..Default::default()
        },
    }
}

/// Spelling Bee rule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpellingBeeRules {
    pub min_word_len: usize,
    pub pangram_bonus: f64,
    pub require_center: bool,
}

impl Default for SpellingBeeRules {
    fn default() -> Self {
        Self {
            min_word_len: 5,
            pangram_bonus: 7.0,
            require_center: false,
        }
    }
}

impl SpellingBeeRules {
    fn word_points(&self, word: &str, letters: &[char], center: Option<char>) -> Option<f64> {
        let len = word.chars().count();
        if len < self.min_word_len || !word.chars().all(|c| letters.contains(&c)) {
            return None;
        }
        if self.require_center {
            if let Some(c) = center {
                if !word.contains(c) {
                    return None;
                }
            }
        }
        let pangram = letters.iter().all(|l| word.contains(*l));
        Some(len as f64 + if pangram { self.pangram_bonus } else { 0.0 })
    }

    /// Best achievable raw score for a puzzle: every valid dictionary word.
    pub fn puzzle_max(&self, letters: &[char], center: Option<char>, dictionary: &Dictionary) -> f64 {
        dictionary
            .iter()
            .filter_map(|w| self.word_points(w, letters, center))
            .sum()
    }
}

pub fn score_spelling_bee(
    instance: &TaskInstance,
    response: &str,
    dictionary: &Dictionary,
    rules: &SpellingBeeRules,
) -> Result<TaskScore> {
    let puzzle_max = match &instance.reference {
        Reference::Puzzle { letters, center } => rules.puzzle_max(letters, *center, dictionary),
        _ => return Ok(mismatch(instance)),
    };
    score_spelling_bee_with_max(instance, response, dictionary, rules, puzzle_max)
}

fn score_spelling_bee_with_max(
    instance: &TaskInstance,
    response: &str,
    dictionary: &Dictionary,
    rules: &SpellingBeeRules,
    puzzle_max: f64,
) -> Result<TaskScore> {
    if dictionary.is_empty() {
        return Err(Error::Data("spelling bee dictionary is empty".into()));
    }
    let Reference::Puzzle { letters, center } = &instance.reference else {
        return Ok(mismatch(instance));
    };
    let mut credited = BTreeSet::new();
    let mut raw = 0.0;
    for word in words(response) {
        if credited.contains(&word) || !dictionary.contains(&word) {
            continue;
        }
        if let Some(points) = rules.word_points(&word, letters, *center) {
            raw += points;
            credited.insert(word);
        }
    }
    let value = if puzzle_max > 0.0 {
        (raw / puzzle_max).min(1.0)
    } else {
        0.0
    };
    Ok(TaskScore {
        value,
        task: TaskKind::SpellingBee,
        detail: ScoreDetail {
            credited_words: credited.into_iter().collect(),
            raw: Some(raw),
            maximum: Some(puzzle_max),
            ..Default::default()
        },
    })
}

pub const YNBW_FORBIDDEN: [&str; 4] = ["yes", "no", "black", "white"];

pub fn score_ynbw(response: &str) -> TaskScore {
    let tokens = words(response);
    let hits: Vec<String> = YNBW_FORBIDDEN
        .iter()
        .filter(|w| tokens.iter().any(|t| t == *w))
        .map(|w| w.to_string())
        .collect();
    TaskScore {
        value: if hits.is_empty() { 0.0 } else { -1.0 },
        task: TaskKind::Ynbw,
        detail: ScoreDetail {
            constraint_hits: hits,
            ..Default::default()
        },
    }
}

pub fn score_taboo(instance: &TaskInstance, response: &str) -> TaskScore {
    let Reference::Constraints(constraints) = &instance.reference else {
        return mismatch(instance);
    };
    let tokens = words(response);
    let distinct: BTreeSet<&str> = constraints.iter().map(String::as_str).collect();
    let hits: Vec<String> = distinct
        .into_iter()
        .filter(|c| contains_phrase(&tokens, c))
        .map(str::to_owned)
        .collect();
    // 0.0 - n rather than -n, so a clean response is +0.0
    let value = 0.0 - hits.len().min(constraints.len()) as f64;
    TaskScore {
        value,
        task: TaskKind::Taboo,
        detail: ScoreDetail {
            constraint_hits: hits,
            ..Default::default()
        },
    }
}

pub fn score_pig_latin(instance: &TaskInstance, response: &str, options: &BleuOptions) -> TaskScore {
    let Reference::Translation(reference) = &instance.reference else {
        return mismatch(instance);
    };
    let value = metrics::bleu(response, &[reference.as_str()], options).unwrap_or(0.0);
    TaskScore {
        value,
        task: TaskKind::PigLatin,
        detail: ScoreDetail {
            bleu: Some(value),
            ..Default::default()
        },
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?").unwrap());

/// Last number in `text`, with thousands separators removed.
pub fn extract_last_number(text: &str) -> Option<f64> {
    NUMBER
        .find_iter(text)
        .last()
        .and_then(|m| m.as_str().replace(',', "").parse().ok())
}

pub fn score_multiarith(instance: &TaskInstance, response: &str) -> TaskScore {
    let Reference::Number(answer) = &instance.reference else {
        return mismatch(instance);
    };
    let extracted = extract_last_number(response);
    let value = match extracted {
        Some(n) if (n - answer).abs() < 1e-9 => 1.0,
        _ => 0.0,
    };
    TaskScore {
        value,
        task: TaskKind::Multiarith,
        detail: ScoreDetail {
            extracted: extracted.map(|n| n.to_string()),
            ..Default::default()
        },
    }
}

// Instances are validated on construction, so this only triggers for
// hand-built mismatched instances; they score as the task's worst value.
fn mismatch(instance: &TaskInstance) -> TaskScore {
    let value = match instance.task {
        TaskKind::Ynbw => -1.0,
        _ => 0.0,
    };
    TaskScore {
        value,
        task: instance.task,
        detail: ScoreDetail::default(),
    }
}

/// Scores any task's responses. Holds the Spelling Bee dictionary and caches
/// per-puzzle maxima.
#[derive(Debug, Default)]
pub struct Scorer {
    dictionary: Option<Dictionary>,
    pub spelling_bee: SpellingBeeRules,
    pub bleu: BleuOptions,
    puzzle_max: Mutex<HashMap<String, f64>>,
}

impl Scorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dictionary(dictionary: Dictionary) -> Self {
        Self {
            dictionary: Some(dictionary),
            ..Self::default()
        }
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        self.dictionary.as_ref()
    }

    pub fn score(&self, instance: &TaskInstance, response: &str) -> Result<TaskScore> {
        Ok(match instance.task {
            TaskKind::Coinflip => score_coinflip(instance, response),
            TaskKind::SpellingBee => {
                let dictionary = self
                    .dictionary
                    .as_ref()
                    .ok_or_else(|| Error::Data("spelling bee scoring needs a dictionary".into()))?;
                let Reference::Puzzle { letters, center } = &instance.reference else {
                    return Ok(mismatch(instance));
                };
                let key: String = letters.iter().chain(center.iter()).collect();
                let max = {
                    let mut cache = self.puzzle_max.lock().expect("puzzle cache poisoned");
                    *cache
                        .entry(key)
                        .or_insert_with(|| self.spelling_bee.puzzle_max(letters, *center, dictionary))
                };
                score_spelling_bee_with_max(instance, response, dictionary, &self.spelling_bee, max)?
            }
            TaskKind::Ynbw => score_ynbw(response),
            TaskKind::Taboo => score_taboo(instance, response),
            TaskKind::PigLatin => score_pig_latin(instance, response, &self.bleu),
            TaskKind::Multiarith => score_multiarith(instance, response),
        })
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Suffix appended to vowel-initial words by [`pig_latin_translate`].
pub const PIG_LATIN_VOWEL_SUFFIX: &str = "way";

pub fn pig_latin_translate(english: &str) -> String {
    pig_latin_translate_with(english, PIG_LATIN_VOWEL_SUFFIX)
}

pub fn pig_latin_translate_with(english: &str, vowel_suffix: &str) -> String {
    english
        .split_whitespace()
        .map(|word| {
            let word: String = word
                .chars()
                .filter(|c| c.is_ascii_alphabetic())
                .map(|c| c.to_ascii_lowercase())
                .collect();
            let split = word.find(is_vowel).unwrap_or(word.len());
            if split == 0 {
                format!("{word}{vowel_suffix}")
            } else {
                format!("{}{}ay", &word[split..], &word[..split])
            }
        })
        .filter(|w| w != "ay")
        .collect::<Vec<_>>()
        .join(" ")
}

const NAMES: [&str; 16] = [
    "Alice", "Bob", "Carmen", "Dmitri", "Elena", "Farid", "Grace", "Hiro", "Ines", "Jonas", "Keiko", "Luis", "Maya",
    "Nadia", "Omar", "Priya",
];

/// Builds a CoinFlip instance from a flip sequence (`true` = flips). The coin
/// starts heads up; the reference is found by simulating each step.
pub fn coinflip_instance(id: impl Into<String>, people: &[(&str, bool)]) -> TaskInstance {
    let mut text = String::from("A coin is heads up.");
    let mut heads_up = true;
    for (name, flips) in people {
        if *flips {
            heads_up = !heads_up;
            text.push_str(&format!(" {name} flips the coin."));
        } else {
            text.push_str(&format!(" {name} does not flip the coin."));
        }
    }
    text.push_str(" Is the coin still heads up?");
    TaskInstance {
        task: TaskKind::Coinflip,
        id: id.into(),
        input: text,
        reference: Reference::YesNo(if heads_up { "yes" } else { "no" }.into()),
    }
}

const PIG_LATIN_WORDS: [&str; 40] = [
    "open", "the", "door", "small", "dog", "runs", "every", "morning", "string", "apple", "quiet", "river", "under",
    "bright", "stars", "children", "play", "outside", "green", "garden", "old", "train", "arrives", "late", "happy",
    "people", "sing", "songs", "yellow", "house", "island", "winter", "cold", "wind", "blows", "through", "empty",
    "streets", "eagle", "flies",
];

/// Synthetic instances for the tasks that have a generator: CoinFlip, Pig
/// Latin and Spelling Bee (which needs a dictionary).
pub fn generate_instances<R: Rng + ?Sized>(
    task: TaskKind,
    count: usize,
    rng: &mut R,
    dictionary: Option<&Dictionary>,
) -> Result<Vec<TaskInstance>> {
    if count == 0 {
        return Err(Error::InvalidInput("instance count must be at least 1".into()));
    }
    match task {
        TaskKind::Coinflip => Ok((0..count)
            .map(|i| {
                let people = rng.random_range(2..=5);
                let mut names: Vec<&str> = NAMES.to_vec();
                names.shuffle(rng);
                let steps: Vec<(&str, bool)> = names[..people].iter().map(|n| (*n, rng.random_bool(0.5))).collect();
                coinflip_instance(format!("coinflip-{i:04}"), &steps)
            })
            .collect()),
        TaskKind::PigLatin => Ok((0..count)
            .map(|i| {
                let len = rng.random_range(2..=5);
                let sentence = (0..len)
                    .map(|_| *PIG_LATIN_WORDS.choose(rng).expect("non-empty word list"))
                    .collect::<Vec<_>>()
                    .join(" ");
                let reference = pig_latin_translate(&sentence);
                TaskInstance {
                    task: TaskKind::PigLatin,
                    id: format!("pig_latin-{i:04}"),
                    input: format!("Translate the English sentence into Pig Latin: {sentence}"),
                    reference: Reference::Translation(reference),
                }
            })
            .collect()),
        TaskKind::SpellingBee => {
            let dictionary =
                dictionary.ok_or_else(|| Error::Data("spelling bee generation needs a dictionary".into()))?;
            let mut pangram_sets: Vec<Vec<char>> = dictionary
                .iter()
                .filter_map(|w| {
                    let set: BTreeSet<char> = w.chars().collect();
                    (set.len() == 7 && set.iter().all(|c| c.is_ascii_lowercase())).then(|| set.into_iter().collect())
                })
                .collect();
            pangram_sets.dedup();
            if pangram_sets.is_empty() {
                return Err(Error::Data(
                    "dictionary has no word with exactly 7 distinct letters".into(),
                ));
            }
            Ok((0..count)
                .map(|i| {
                    let letters = pangram_sets.choose(rng).expect("non-empty").clone();
                    let center = *letters.choose(rng).expect("seven letters");
                    let shown: String = letters.iter().collect();
                    TaskInstance {
                        task: TaskKind::SpellingBee,
                        id: format!("spelling_bee-{i:04}"),
                        input: format!(
                            "Spelling Bee: list as many words of five or more letters as you can using only the letters {shown} (center letter {center}). Letters may repeat."
                        ),
                        reference: Reference::Puzzle {
                            letters,
                            center: Some(center),
                        },
                    }
                })
                .collect())
        }
        other => Err(Error::InvalidInput(format!(
            "no generator for task {other}; load instances from a file"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(task: TaskKind, reference: Reference) -> TaskInstance {
        TaskInstance::new(task, "t", "q", reference).unwrap()
    }

    #[test]
    fn coinflip_examples() {
        let no = inst(TaskKind::Coinflip, Reference::YesNo("no".into()));
        let yes = inst(TaskKind::Coinflip, Reference::YesNo("yes".into()));
        assert_eq!(
            score_coinflip(&no, "…so the coin is no longer heads up. Answer: no.").value,
            1.0
        );
        assert_eq!(score_coinflip(&no, "Yes, it is heads up.").value, 0.0);
        assert_eq!(
            score_coinflip(&yes, "I know the coin was flipped an even number of times, so yes.").value,
            1.0
        );
        assert_eq!(score_coinflip(&yes, "Unclear.").value, 0.0);
    }

    fn bee(letters: &str) -> TaskInstance {
        inst(
            TaskKind::SpellingBee,
            Reference::Puzzle {
                letters: letters.chars().collect(),
                center: None,
            },
        )
    }

    #[test]
    fn spelling_bee_examples() {
        let rules = SpellingBeeRules::default();
        let dict = Dictionary::from_words(["badge", "decaf", "cab", "faced"]);
        let puzzle = bee("abcdefg");
        // brute force: every dictionary word of length >= 5 built from the letters
        let oracle_max: f64 = ["badge", "decaf", "cab", "faced"]
            .iter()
            .filter(|w| w.len() >= 5 && w.chars().all(|c| "abcdefg".contains(c)))
            .map(|w| w.len() as f64)
            .sum();
        assert_eq!(oracle_max, 15.0);
        let s = score_spelling_bee(&puzzle, "badge decaf cab", &dict, &rules).unwrap();
        assert_eq!(s.detail.raw, Some(10.0));
        assert_eq!(s.detail.maximum, Some(15.0));
        assert!((s.value - 10.0 / 15.0).abs() < 1e-12);

        assert_eq!(score_spelling_bee(&puzzle, "", &dict, &rules).unwrap().value, 0.0);
        // duplicates credited once
        let dup = score_spelling_bee(&puzzle, "badge BADGE badge", &dict, &rules).unwrap();
        assert_eq!(dup.detail.raw, Some(5.0));
    }

    #[test]
    fn spelling_bee_pangram_bonus() {
        let rules = SpellingBeeRules::default();
        let dict = Dictionary::from_words(["cabbage", "badge"]);
        let puzzle = bee("abcdegk");
        // "cabbage" uses a,b,c,e,g only -> not a pangram; "backed" style needs all 7
        let dict2 = Dictionary::from_words(["gackbed", "badge"]);
        let s = score_spelling_bee(&puzzle, "gackbed", &dict2, &rules).unwrap();
        assert_eq!(s.detail.raw, Some(7.0 + 7.0));
        let s = score_spelling_bee(&puzzle, "cabbage", &dict, &rules).unwrap();
        assert_eq!(s.detail.raw, Some(7.0));
        assert_eq!(s.value, 7.0 / 12.0);
    }

    #[test]
    fn spelling_bee_needs_dictionary() {
        let rules = SpellingBeeRules::default();
        let puzzle = bee("abcdefg");
        assert!(score_spelling_bee(&puzzle, "badge", &Dictionary::default(), &rules).is_err());
        assert!(Scorer::new().score(&puzzle, "badge").is_err());
    }

    #[test]
    fn ynbw_examples() {
        assert_eq!(score_ynbw("It is a very dark color.").value, 0.0);
        assert_eq!(score_ynbw("Black Friday follows Thanksgiving.").value, -1.0);
        assert_eq!(score_ynbw("Nothing is known about it.").value, 0.0);
        assert_eq!(score_ynbw("NO").value, -1.0);
    }

    #[test]
    fn taboo_examples() {
        let words: Vec<String> = ["property", "estate", "ownership", "land", "assets"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = inst(TaskKind::Taboo, Reference::Constraints(words));
        assert_eq!(score_taboo(&t, "The land, more land, and some assets.").value, -2.0);
        let clean = score_taboo(&t, "Something you possess.").value;
        assert_eq!(clean, 0.0);
        // renders as "0.00", not "-0.00"
        assert!(clean.is_sign_positive());
        assert_eq!(
            score_taboo(&t, "Property estate ownership land assets land").value,
            -5.0
        );
        // no morphology: plurals do not match
        assert_eq!(score_taboo(&t, "lands and properties").value, 0.0);
    }

    #[test]
    fn taboo_multiword_constraint() {
        let t = inst(
            TaskKind::Taboo,
            Reference::Constraints(vec!["real estate".into(), "home".into(), "house".into()]),
        );
        assert_eq!(score_taboo(&t, "Real  estate is big.").value, -1.0);
        assert_eq!(score_taboo(&t, "real value, estate").value, 0.0);
    }

    #[test]
    fn taboo_constraint_count_validated() {
        let two = TaskInstance::new(
            TaskKind::Taboo,
            "x",
            "q",
            Reference::Constraints(vec!["a".into(), "b".into()]),
        );
        assert!(two.is_err());
    }

    #[test]
    fn pig_latin_rules() {
        assert_eq!(pig_latin_translate("hello"), "ellohay");
        assert_eq!(pig_latin_translate("apple"), "appleway");
        assert_eq!(pig_latin_translate("string"), "ingstray");
        assert_eq!(pig_latin_translate("Open the DOOR"), "openway ethay oorday");
        assert_eq!(pig_latin_translate_with("apple", "yay"), "appleyay");
        assert_eq!(pig_latin_translate("rhythm"), "rhythmay");
    }

    #[test]
    fn pig_latin_scoring() {
        let t = inst(TaskKind::PigLatin, Reference::Translation("ellohay orldway".into()));
        let opts = BleuOptions::default();
        assert_eq!(score_pig_latin(&t, "ellohay orldway", &opts).value, 1.0);
        assert_eq!(score_pig_latin(&t, "bonjour", &opts).value, 0.0);
        // p1 = 1/1, higher orders empty -> 1, BP = exp(1 - 2/1)
        let partial = score_pig_latin(&t, "ellohay", &opts).value;
        assert!((partial - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn multiarith_examples() {
        let t42 = inst(TaskKind::Multiarith, Reference::Number(42.0));
        let t40 = inst(TaskKind::Multiarith, Reference::Number(40.0));
        assert_eq!(score_multiarith(&t42, "The answer is 42.").value, 1.0);
        assert_eq!(score_multiarith(&t42, "So the total = 41.").value, 0.0);
        assert_eq!(score_multiarith(&t40, "42 minus 2 gives 40").value, 1.0);
        let big = inst(TaskKind::Multiarith, Reference::Number(1200.0));
        assert_eq!(score_multiarith(&big, "That makes 1,200 apples").value, 1.0);
        let neg = inst(TaskKind::Multiarith, Reference::Number(-3.0));
        assert_eq!(score_multiarith(&neg, "the change is -3").value, 1.0);
        assert_eq!(score_multiarith(&t42, "no idea").value, 0.0);
    }

    #[test]
    fn coinflip_generator_matches_simulation() {
        let inst = coinflip_instance("c", &[("Ana", true), ("Ben", false), ("Cy", true)]);
        // two flips starting heads-up: back to heads up
        assert_eq!(inst.reference, Reference::YesNo("yes".into()));
        let inst = coinflip_instance("c", &[("Ana", true)]);
        assert_eq!(inst.reference, Reference::YesNo("no".into()));
    }

    #[test]
    fn generators_are_seeded() {
        let a = generate_instances(TaskKind::PigLatin, 5, &mut ChaCha8Rng::seed_from_u64(4), None).unwrap();
        let b = generate_instances(TaskKind::PigLatin, 5, &mut ChaCha8Rng::seed_from_u64(4), None).unwrap();
        assert_eq!(a, b);
        for i in &a {
            let Reference::Translation(r) = &i.reference else {
                panic!()
            };
            let sentence = i.input.rsplit(": ").next().unwrap();
            assert_eq!(r, &pig_latin_translate(sentence));
        }
        assert!(generate_instances(TaskKind::Taboo, 3, &mut ChaCha8Rng::seed_from_u64(0), None).is_err());
        assert!(generate_instances(TaskKind::Coinflip, 0, &mut ChaCha8Rng::seed_from_u64(0), None).is_err());
    }

    #[test]
    fn spelling_bee_generator_uses_pangram_words() {
        let dict = Dictionary::from_words(["backfed", "badge", "faced", "zebra"]);
        let got = generate_instances(TaskKind::SpellingBee, 3, &mut ChaCha8Rng::seed_from_u64(1), Some(&dict)).unwrap();
        for i in got {
            i.validate().unwrap();
        }
    }

    #[test]
    fn loader_reports_line_and_field() {
        let text = concat!(
            r#"{"task": "coinflip", "id": "a", "input": "A coin is heads up.", "reference": "yes"}"#,
            "\n",
            r#"{"task": "coinflip", "id": "b", "reference": "no"}"#,
            "\n"
        );
        let err = parse_instances(text, None).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("input"), "{err}");
    }

    #[test]
    fn loader_round_trips_every_task() {
        let dict_ref = Reference::Puzzle {
            letters: "abcdefg".chars().collect(),
            center: Some('a'),
        };
        let all = vec![
            TaskInstance::new(TaskKind::Coinflip, "1", "q", Reference::YesNo("no".into())).unwrap(),
            TaskInstance::new(TaskKind::SpellingBee, "2", "q", dict_ref).unwrap(),
            TaskInstance::new(TaskKind::Ynbw, "3", "q", Reference::Forbidden).unwrap(),
            TaskInstance::new(
                TaskKind::Taboo,
                "4",
                "q",
                Reference::Constraints(vec!["a".into(), "b".into(), "c".into()]),
            )
            .unwrap(),
            TaskInstance::new(TaskKind::PigLatin, "5", "q", Reference::Translation("ay".into())).unwrap(),
            TaskInstance::new(TaskKind::Multiarith, "6", "q", Reference::Number(12.0)).unwrap(),
        ];
        let text: String = all.iter().map(|i| format!("{}\n", i.to_json())).collect();
        assert_eq!(parse_instances(&text, None).unwrap(), all);
        assert!(parse_instances(&text, Some(TaskKind::Coinflip)).is_err());
    }

    #[test]
    fn loader_rejects_bad_payloads() {
        let bee = r#"{"task": "spelling_bee", "id": "x", "input": "q", "reference": {"letters": "abc"}}"#;
        assert!(parse_instances(bee, None).is_err());
        let dup = concat!(
            r#"{"task": "ynbw", "id": "x", "input": "q"}"#,
            "\n",
            r#"{"task": "ynbw", "id": "x", "input": "q"}"#
        );
        assert!(parse_instances(dup, None).is_err());
    }
}
