//! Five-letter word guessing with green/yellow/black letter feedback.
//!
//! The action space is the word list itself, which is never restated in observations.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::constraints::{feedback, score, ConstraintSet, Mark};
use super::{compose_observation, validate_budget, Clock, StepOutcome, STEP_REWARD};
use crate::error::{Error, Result};

const BUNDLED_WORDS: &str = include_str!("../../data/words.txt");

pub const WORD_LEN: usize = 5;

/// The bundled 200-word list, sorted.
pub fn bundled_words() -> Arc<Vec<String>> {
    static WORDS: OnceLock<Arc<Vec<String>>> = OnceLock::new();
    WORDS
        .get_or_init(|| Arc::new(parse_word_list(BUNDLED_WORDS).expect("bundled word list is valid")))
        .clone()
}

/// Parses one word per line; blank lines and `#` comments are skipped. The result is sorted
/// and deduplicated.
pub fn parse_word_list(text: &str) -> Result<Vec<String>> {
    let mut words = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        if w.chars().count() != WORD_LEN || !w.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::Data(format!(
                "word list line {}: {w:?} is not a five-letter word",
                n + 1
            )));
        }
        words.push(w.to_string());
    }
    words.sort();
    words.dedup();
    if words.is_empty() {
        return Err(Error::Data("word list is empty".into()));
    }
    Ok(words)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordGuessConfig {
    pub words: Arc<Vec<String>>,
    pub budget: usize,
    /// Fixed secret; otherwise drawn from the list with the seed.
    pub secret: Option<String>,
}

impl Default for WordGuessConfig {
    fn default() -> Self {
        WordGuessConfig {
            words: bundled_words(),
            budget: 6,
            secret: None,
        }
    }
}

impl WordGuessConfig {
    pub fn with_secret(secret: &str) -> Self {
        WordGuessConfig {
            secret: Some(secret.to_string()),
            ..WordGuessConfig::default()
        }
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "wordguess:words={}:budget={}:secret={}",
            crate::util::fingerprint(&self.words.iter().map(String::as_str).collect::<Vec<_>>()),
            self.budget,
            self.secret.as_deref().unwrap_or("")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordGuessState {
    secret: String,
    words: Arc<Vec<String>>,
    history: Vec<(String, Vec<Mark>)>,
    pub(crate) clock: Clock,
}

impl WordGuessState {
    pub fn secret(&self) -> &str {
        &self.secret
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Scored guesses so far, in order.
    pub fn history(&self) -> &[(String, Vec<Mark>)] {
        &self.history
    }

    /// Union of the clauses implied by every scored guess.
    pub fn constraints(&self) -> ConstraintSet {
        let mut set = ConstraintSet::new();
        for (g, m) in &self.history {
            set.extend(&ConstraintSet::from_feedback(g, m));
        }
        set
    }

    /// List words consistent with every feedback so far.
    pub fn candidates(&self) -> Vec<&str> {
        self.words
            .iter()
            .filter(|w| self.history.iter().all(|(g, m)| &score(w, g) == m))
            .map(String::as_str)
            .collect()
    }

    fn status(&self) -> String {
        format!("guesses used {} of {}", self.clock.steps, self.clock.budget)
    }

    pub fn step(&mut self, action: &str) -> Result<StepOutcome> {
        self.clock.check_running()?;
        let guess = action.trim().to_ascii_lowercase();
        let mut narrative = Vec::new();
        let mut success = false;
        if self.words.binary_search(&guess).is_ok() {
            let marks = score(&self.secret, &guess);
            narrative.push(format!("Feedback: {}", feedback(&self.secret, &guess)));
            success = marks.iter().all(|m| *m == Mark::Green);
            if success {
                narrative.push("You found the word.".to_string());
            }
            self.history.push((guess, marks));
        } else {
            narrative.push(format!(
                "invalid action {:?}: not a word from the list.",
                action.trim()
            ));
        }
        let exhausted = self.clock.tick(success);
        if exhausted {
            narrative.push(format!("The word was {}.", self.secret));
        }
        Ok(StepOutcome {
            observation: compose_observation(&narrative, &self.status(), exhausted, &[]),
            reward: STEP_REWARD,
            done: self.clock.done,
            success,
        })
    }
}

/// Reads the feedback marks out of an observation.
pub fn parse_observation(observation: &str) -> Option<Vec<Mark>> {
    observation
        .lines()
        .find_map(|l| l.trim().strip_prefix("Feedback:"))
        .and_then(super::constraints::parse_feedback)
}

pub(crate) fn reset(config: &WordGuessConfig, seed: u64) -> Result<(WordGuessState, String, String)> {
    validate_budget(config.budget)?;
    if config.words.is_empty() {
        return Err(Error::invalid("word list is empty"));
    }
    let secret = match &config.secret {
        Some(s) => {
            if config.words.binary_search(s).is_err() {
                return Err(Error::invalid(format!("secret {s:?} is not in the word list")));
            }
            s.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            config.words[rng.random_range(0..config.words.len())].clone()
        }
    };
    let state = WordGuessState {
        secret,
        words: config.words.clone(),
        history: Vec::new(),
        clock: Clock::new(config.budget),
    };
    let query = format!(
        "Guess the secret {WORD_LEN}-letter word within {} attempts.",
        config.budget
    );
    let obs = compose_observation(
        &["Each guess is scored letter by letter: g correct spot, y elsewhere in the word, b not in the word.".to_string()],
        &state.status(),
        false,
        &[],
    );
    Ok((state, query, obs))
}
