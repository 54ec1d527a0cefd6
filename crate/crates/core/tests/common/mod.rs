#![allow(dead_code)]

use std::path::PathBuf;

use hag::backends::{ToyBackend, ToyModel};
use hag::tasks::{load_instances, Dictionary, TaskInstance, TaskKind};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn tasks(task: TaskKind) -> Vec<TaskInstance> {
    load_instances(
        &data_dir().join("tasks").join(format!("{}.jsonl", task.name())),
        Some(task),
    )
    .unwrap()
}

pub fn dictionary() -> Dictionary {
    Dictionary::from_file(&data_dir().join("dictionary.txt")).unwrap()
}

pub fn toy_backend() -> ToyBackend {
    let corpus = std::fs::read_to_string(data_dir().join("corpus.txt")).unwrap();
    ToyBackend::new(ToyModel::train(&corpus, 4, 0.1).unwrap())
}

const FUZZ_WORDS: &[&str] = &[
    "yes",
    "no",
    "Yes!",
    "NO.",
    "black",
    "white",
    "maybe",
    "heads",
    "tails",
    "caption",
    "trading",
    "granted",
    "water",
    "blue",
    "wave",
    "book",
    "books",
    "cold",
    "snow",
    "42",
    "-3",
    "3.5",
    "1,000",
    "ethay",
    "atcay",
    "igpay",
    "atinlay",
    "appleway",
    "the",
    "a",
    "answer",
    "is",
    "",
    "\n",
    "{",
    "}",
    "'",
    "\"",
    "é",
    "日本",
    "0",
    "29",
    "seven",
    "—",
    "...",
    "yes-no",
    "white-ish",
];

/// Mixture of task-relevant words, punctuation, numbers and random junk.
pub fn fuzz_response<R: Rng + ?Sized>(rng: &mut R) -> String {
    let n = rng.random_range(0..40);
    let mut out = String::new();
    for _ in 0..n {
        if rng.random_bool(0.15) {
            let len = rng.random_range(1..8);
            out.extend((0..len).map(|_| char::from_u32(rng.random_range(0x20..0x250)).unwrap_or('?')));
        } else {
            out.push_str(FUZZ_WORDS.choose(rng).unwrap());
        }
        out.push(if rng.random_bool(0.8) { ' ' } else { ',' });
    }
    out
}
