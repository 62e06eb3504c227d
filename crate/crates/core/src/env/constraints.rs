//! Letter-feedback scoring and the constraint clauses that feedback implies.
//!
//! A clause set built from one guess accepts exactly the words that would have produced the
//! same feedback for that guess, so the union over a game characterises the remaining
//! candidates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Green,
    Yellow,
    Black,
}

impl Mark {
    fn symbol(self) -> char {
        match self {
            Mark::Green => 'g',
            Mark::Yellow => 'y',
            Mark::Black => 'b',
        }
    }
}

/// Two-pass scoring: exact matches consume letters first, then presence is marked left to
/// right while unmatched copies of the letter remain in the secret.
pub fn score(secret: &str, guess: &str) -> Vec<Mark> {
    let s: Vec<char> = secret.chars().collect();
    let g: Vec<char> = guess.chars().collect();
    let mut marks = vec![Mark::Black; g.len()];
    let mut unmatched: BTreeMap<char, usize> = BTreeMap::new();
    for i in 0..s.len() {
        if g.get(i) == Some(&s[i]) {
            marks[i] = Mark::Green;
        } else {
            *unmatched.entry(s[i]).or_default() += 1;
        }
    }
    for (i, c) in g.iter().enumerate() {
        if marks[i] == Mark::Green {
            continue;
        }
        if let Some(n) = unmatched.get_mut(c).filter(|n| **n > 0) {
            *n -= 1;
            marks[i] = Mark::Yellow;
        }
    }
    marks
}

pub fn render_feedback(marks: &[Mark]) -> String {
    marks
        .iter()
        .map(|m| m.symbol().to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_feedback(text: &str) -> Option<Vec<Mark>> {
    text.split_whitespace()
        .map(|t| match t {
            "g" => Some(Mark::Green),
            "y" => Some(Mark::Yellow),
            "b" => Some(Mark::Black),
            _ => None,
        })
        .collect()
}

/// Feedback string for a guess, e.g. `"g y y b b"`.
pub fn feedback(secret: &str, guess: &str) -> String {
    render_feedback(&score(secret, guess))
}

/// One atomic fact about the secret word.
///
/// Variant order drives canonical rendering: fixed positions first, then per-letter facts
/// grouped by letter, then absent letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Clause {
    At { pos: usize, letter: char },
    Letter { letter: char, fact: LetterFact },
    Absent { letter: char },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LetterFact {
    PresentNotAt(usize),
    NotAt(usize),
    CountExactly(usize),
    CountAtLeast(usize),
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::At { pos, letter } => write!(f, "pos {pos} = {letter}"),
            Clause::Letter { letter, fact } => match fact {
                LetterFact::PresentNotAt(i) => write!(f, "{letter} present not at {i}"),
                LetterFact::NotAt(i) => write!(f, "{letter} not at {i}"),
                LetterFact::CountExactly(n) => write!(f, "{letter} count = {n}"),
                LetterFact::CountAtLeast(n) => write!(f, "{letter} count >= {n}"),
            },
            Clause::Absent { letter } => write!(f, "{letter} absent"),
        }
    }
}

impl Clause {
    pub fn accepts(&self, word: &[char]) -> bool {
        let count = |c: char| word.iter().filter(|&&w| w == c).count();
        match *self {
            Clause::At { pos, letter } => word.get(pos) == Some(&letter),
            Clause::Absent { letter } => count(letter) == 0,
            Clause::Letter { letter, ref fact } => match *fact {
                LetterFact::PresentNotAt(i) => count(letter) > 0 && word.get(i) != Some(&letter),
                LetterFact::NotAt(i) => word.get(i) != Some(&letter),
                LetterFact::CountExactly(n) => count(letter) == n,
                LetterFact::CountAtLeast(n) => count(letter) >= n,
            },
        }
    }

    fn parse(text: &str) -> Result<Clause> {
        let bad = || Error::format("constraints", format!("unrecognised clause {text:?}"));
        let words: Vec<&str> = text.split_whitespace().collect();
        let letter = |s: &str| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(bad()),
            }
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match words.as_slice() {
            ["pos", i, "=", c] => Ok(Clause::At {
                pos: num(i)?,
                letter: letter(c)?,
            }),
            [c, "absent"] => Ok(Clause::Absent { letter: letter(c)? }),
            [c, "present", "not", "at", i] => Ok(Clause::Letter {
                letter: letter(c)?,
                fact: LetterFact::PresentNotAt(num(i)?),
            }),
            [c, "not", "at", i] => Ok(Clause::Letter {
                letter: letter(c)?,
                fact: LetterFact::NotAt(num(i)?),
            }),
            [c, "count", "=", n] => Ok(Clause::Letter {
                letter: letter(c)?,
                fact: LetterFact::CountExactly(num(n)?),
            }),
            [c, "count", ">=", n] => Ok(Clause::Letter {
                letter: letter(c)?,
                fact: LetterFact::CountAtLeast(num(n)?),
            }),
            _ => Err(bad()),
        }
    }
}

/// An ordered, duplicate-free set of clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ConstraintSet(BTreeSet<Clause>);

impl ConstraintSet {
    pub fn new() -> Self {
        ConstraintSet::default()
    }

    /// Clauses implied by one scored guess.
    pub fn from_feedback(guess: &str, marks: &[Mark]) -> ConstraintSet {
        let g: Vec<char> = guess.chars().collect();
        let mut set = BTreeSet::new();
        let mut letters: BTreeMap<char, (usize, bool)> = BTreeMap::new();
        for (i, (&c, &m)) in g.iter().zip(marks).enumerate() {
            let entry = letters.entry(c).or_insert((0, false));
            match m {
                Mark::Green => {
                    entry.0 += 1;
                    set.insert(Clause::At { pos: i, letter: c });
                }
                Mark::Yellow => {
                    entry.0 += 1;
                    set.insert(Clause::Letter {
                        letter: c,
                        fact: LetterFact::PresentNotAt(i),
                    });
                }
                Mark::Black => {
                    entry.1 = true;
                }
            }
        }
        for (i, (&c, &m)) in g.iter().zip(marks).enumerate() {
            let (known, black) = letters[&c];
            if m == Mark::Black && known > 0 {
                set.insert(Clause::Letter {
                    letter: c,
                    fact: LetterFact::NotAt(i),
                });
            }
            if black && known == 0 {
                set.insert(Clause::Absent { letter: c });
            }
        }
        for (&c, &(known, black)) in &letters {
            if black && known > 0 {
                set.insert(Clause::Letter {
                    letter: c,
                    fact: LetterFact::CountExactly(known),
                });
            } else if !black && known >= 2 {
                set.insert(Clause::Letter {
                    letter: c,
                    fact: LetterFact::CountAtLeast(known),
                });
            }
        }
        ConstraintSet(set)
    }

    pub fn parse(text: &str) -> Result<ConstraintSet> {
        let mut set = BTreeSet::new();
        for part in text.split(';') {
            if !part.trim().is_empty() {
                set.insert(Clause::parse(part.trim())?);
            }
        }
        Ok(ConstraintSet(set))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.0.iter()
    }

    /// Adds every clause of `other`; returns how many were new.
    pub fn extend(&mut self, other: &ConstraintSet) -> usize {
        let before = self.0.len();
        self.0.extend(other.0.iter().cloned());
        self.0.len() - before
    }

    pub fn is_subset(&self, other: &ConstraintSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn accepts(&self, word: &str) -> bool {
        let w: Vec<char> = word.chars().collect();
        self.0.iter().all(|c| c.accepts(&w))
    }

    /// Canonical rendering joined with `"; "`.
    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
