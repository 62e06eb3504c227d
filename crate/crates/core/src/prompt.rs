//! Tag-delimited prompt format for beliefs and model responses.
//!
//! A belief prompt is a sequence of blocks, each `<tag>\ncontent\n</tag>` followed by a blank
//! line, in the order goal, progress, last_observation, saved_observation, available_action,
//! attempted_action. It ends with the opening `<observation_update>` line; everything after
//! that line is the model's response:
//!
//! ```text
//! None
//! </observation_update>
//!
//! <progress_update>
//! find the knife
//! </progress_update>
//!
//! <action_update>
//! go to diningtable 1
//! </action_update>
//! ```
//!
//! Action lists are comma-joined without spaces. Saved observations render as one
//! `[step] content` entry per line, or `{}` when there are none. Line endings are `\n`;
//! parsers accept `\r\n` and normalise it.
//!
//! The history variant used by full-history baselines replaces the attempted_action block
//! with a `<history>` block holding the verbatim action/observation transcript.

use std::collections::BTreeMap;

use crate::belief::{BeliefState, RetentionDecision, SavedObservation, START_PROGRESS};
use crate::env::extract_available;
use crate::error::{Error, Result};

pub const TAG_GOAL: &str = "goal";
pub const TAG_PROGRESS: &str = "progress";
pub const TAG_LAST_OBSERVATION: &str = "last_observation";
pub const TAG_SAVED_OBSERVATION: &str = "saved_observation";
pub const TAG_AVAILABLE_ACTION: &str = "available_action";
pub const TAG_ATTEMPTED_ACTION: &str = "attempted_action";
pub const TAG_HISTORY: &str = "history";
pub const TAG_OBSERVATION_UPDATE: &str = "observation_update";
pub const TAG_PROGRESS_UPDATE: &str = "progress_update";
pub const TAG_ACTION_UPDATE: &str = "action_update";

/// Tags whose bodies count as model input.
pub const INPUT_TAGS: [&str; 7] = [
    TAG_GOAL,
    TAG_PROGRESS,
    TAG_LAST_OBSERVATION,
    TAG_SAVED_OBSERVATION,
    TAG_AVAILABLE_ACTION,
    TAG_ATTEMPTED_ACTION,
    TAG_HISTORY,
];

/// Tags whose bodies count as model output.
pub const OUTPUT_TAGS: [&str; 3] = [TAG_OBSERVATION_UPDATE, TAG_PROGRESS_UPDATE, TAG_ACTION_UPDATE];

const BELIEF_LAYOUT: [&str; 6] = [
    TAG_GOAL,
    TAG_PROGRESS,
    TAG_LAST_OBSERVATION,
    TAG_SAVED_OBSERVATION,
    TAG_AVAILABLE_ACTION,
    TAG_ATTEMPTED_ACTION,
];

const HISTORY_LAYOUT: [&str; 6] = [
    TAG_GOAL,
    TAG_PROGRESS,
    TAG_LAST_OBSERVATION,
    TAG_SAVED_OBSERVATION,
    TAG_AVAILABLE_ACTION,
    TAG_HISTORY,
];

const EMPTY_SET: &str = "{}";

/// A serialized belief, ending with the opening `<observation_update>` line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BeliefPrompt(String);

impl BeliefPrompt {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for BeliefPrompt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The parsed (retention, progress, action) response triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOutput {
    pub retention: RetentionDecision,
    pub progress_update: String,
    pub action_update: String,
}

fn push_block(out: &mut String, tag: &str, content: &str) {
    out.push('<');
    out.push_str(tag);
    out.push_str(">\n");
    out.push_str(content);
    out.push_str("\n</");
    out.push_str(tag);
    out.push_str(">\n\n");
}

fn render_saved(saved: &[SavedObservation]) -> String {
    if saved.is_empty() {
        return EMPTY_SET.to_string();
    }
    saved
        .iter()
        .map(|s| format!("[{}] {}", s.step, s.content))
        .collect::<Vec<_>>()
        .join("\n")
}

fn push_head(out: &mut String, b: &BeliefState) {
    push_block(out, TAG_GOAL, &b.query);
    push_block(out, TAG_PROGRESS, &b.progress);
    push_block(out, TAG_LAST_OBSERVATION, &b.last_observation);
    push_block(out, TAG_SAVED_OBSERVATION, &render_saved(&b.saved_observations));
    push_block(out, TAG_AVAILABLE_ACTION, &b.available_actions.join(","));
}

fn push_open_update(out: &mut String) {
    out.push('<');
    out.push_str(TAG_OBSERVATION_UPDATE);
    out.push_str(">\n");
}

/// Serializes a belief into the prompt layout.
///
/// Actions must not contain commas or line breaks, and no field may contain a line that is
/// exactly one of the closing tags; such beliefs do not round-trip.
pub fn serialize_belief(b: &BeliefState) -> BeliefPrompt {
    let mut out = String::new();
    push_head(&mut out, b);
    push_block(&mut out, TAG_ATTEMPTED_ACTION, &b.attempted_actions.join(","));
    push_open_update(&mut out);
    BeliefPrompt(out)
}

/// Serializes the full-history variant: the belief head followed by the verbatim transcript.
pub fn serialize_history_prompt(b: &BeliefState, transcript: &[(String, String)]) -> String {
    let mut out = String::new();
    push_head(&mut out, b);
    let body = if transcript.is_empty() {
        EMPTY_SET.to_string()
    } else {
        transcript
            .iter()
            .enumerate()
            .map(|(i, (a, o))| format!("[{i}] {a}\n{o}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    push_block(&mut out, TAG_HISTORY, &body);
    push_open_update(&mut out);
    out
}

/// Full-history context for a decision after `steps`: the head carries the query, the
/// initial observation and the current action list; the transcript follows verbatim.
pub fn history_context(query: &str, initial_observation: &str, steps: &[(String, String)]) -> String {
    let available = steps
        .iter()
        .rev()
        .map(|(_, o)| extract_available(o))
        .chain(std::iter::once(extract_available(initial_observation)))
        .find(|a| !a.is_empty())
        .unwrap_or_default();
    let head = BeliefState {
        query: query.to_string(),
        progress: START_PROGRESS.to_string(),
        attempted_actions: Vec::new(),
        available_actions: available,
        saved_observations: Vec::new(),
        last_observation: initial_observation.to_string(),
        step_index: 0,
    };
    serialize_history_prompt(&head, steps)
}

/// Renders a response triple in the output layout (the text after `<observation_update>`).
pub fn render_model_output(retention: &RetentionDecision, progress: &str, action: &str) -> String {
    let body = retention.content().unwrap_or("None");
    let mut out = String::new();
    out.push_str(body);
    out.push_str("\n</");
    out.push_str(TAG_OBSERVATION_UPDATE);
    out.push_str(">\n\n");
    push_block(&mut out, TAG_PROGRESS_UPDATE, progress);
    push_block(&mut out, TAG_ACTION_UPDATE, action);
    out.pop();
    out
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n")
}

#[derive(Debug)]
struct Block<'a> {
    tag: &'a str,
    body: Option<String>,
}

fn open_line(line: &str) -> Option<&str> {
    let l = line.trim_end();
    let inner = l.strip_prefix('<')?.strip_suffix('>')?;
    if inner.starts_with('/') || inner.is_empty() {
        return None;
    }
    Some(inner)
}

fn is_close_line(line: &str, tag: &str) -> bool {
    let l = line.trim_end();
    l.len() == tag.len() + 3 && l.starts_with("</") && l.ends_with('>') && &l[2..l.len() - 1] == tag
}

/// Splits normalised text into blocks for the given known tags. Unknown tag lines and text
/// outside blocks are ignored; a block left open at end of text has `body: None`.
fn scan_blocks<'t>(text: &str, known: &[&'t str]) -> Vec<Block<'t>> {
    let mut blocks = Vec::new();
    let mut current: Option<(&'t str, Vec<&str>)> = None;
    for line in text.split('\n') {
        match current.as_mut() {
            Some((tag, lines)) => {
                if is_close_line(line, tag) {
                    let body = lines.join("\n");
                    blocks.push(Block {
                        tag,
                        body: Some(body),
                    });
                    current = None;
                } else {
                    lines.push(line);
                }
            }
            None => {
                if let Some(name) = open_line(line) {
                    if let Some(tag) = known.iter().find(|t| **t == name) {
                        current = Some((tag, Vec::new()));
                    }
                }
            }
        }
    }
    if let Some((tag, _)) = current {
        blocks.push(Block { tag, body: None });
    }
    blocks
}

/// Extracts the bodies of `layout` tags, requiring each exactly once and in order.
fn parse_layout(text: &str, layout: &[&'static str]) -> Result<BTreeMap<&'static str, String>> {
    let mut known: Vec<&'static str> = layout.to_vec();
    known.push(TAG_OBSERVATION_UPDATE);
    let blocks = scan_blocks(text, &known);
    let mut bodies = BTreeMap::new();
    let mut last_pos = None;
    for tag in layout {
        let hits: Vec<(usize, &Block)> = blocks.iter().enumerate().filter(|(_, b)| b.tag == *tag).collect();
        let (pos, block) = match hits.as_slice() {
            [] => return Err(Error::format(*tag, "missing tag")),
            [one] => *one,
            _ => return Err(Error::format(*tag, "duplicated tag")),
        };
        let body = block
            .body
            .clone()
            .ok_or_else(|| Error::format(*tag, "unclosed tag"))?;
        if let Some(prev) = last_pos {
            if pos < prev {
                return Err(Error::format(*tag, "tag out of order"));
            }
        }
        last_pos = Some(pos);
        bodies.insert(*tag, body);
    }
    Ok(bodies)
}

fn parse_actions(body: &str) -> Vec<String> {
    body.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_indexed_lines(body: &str) -> Vec<(Option<usize>, String)> {
    let mut entries: Vec<(Option<usize>, String)> = Vec::new();
    for line in body.split('\n') {
        match split_index_prefix(line) {
            Some((idx, rest)) => entries.push((Some(idx), rest.to_string())),
            None => match entries.last_mut() {
                Some((_, content)) => {
                    content.push('\n');
                    content.push_str(line);
                }
                None => entries.push((None, line.to_string())),
            },
        }
    }
    entries
}

fn split_index_prefix(line: &str) -> Option<(usize, &str)> {
    let rest = line.strip_prefix('[')?;
    let close = rest.find("] ")?;
    let idx = rest[..close].parse().ok()?;
    Some((idx, &rest[close + 2..]))
}

fn parse_saved(body: &str) -> Vec<SavedObservation> {
    if body.trim() == EMPTY_SET {
        return Vec::new();
    }
    let mut saved: Vec<SavedObservation> = Vec::new();
    for (idx, content) in parse_indexed_lines(body) {
        let step = idx.unwrap_or_else(|| saved.last().map_or(0, |s| s.step + 1));
        saved.push(SavedObservation { step, content });
    }
    saved
}

fn belief_from_bodies(bodies: &mut BTreeMap<&'static str, String>) -> BeliefState {
    let mut take = |tag| bodies.remove(tag).unwrap_or_default();
    let query = take(TAG_GOAL);
    let progress = take(TAG_PROGRESS);
    let last_observation = take(TAG_LAST_OBSERVATION);
    let saved_observations = parse_saved(&take(TAG_SAVED_OBSERVATION));
    let available_actions = parse_actions(&take(TAG_AVAILABLE_ACTION));
    let step_index = saved_observations.last().map_or(0, |s| s.step + 1);
    BeliefState {
        query,
        progress,
        attempted_actions: Vec::new(),
        available_actions,
        saved_observations,
        last_observation,
        step_index,
    }
}

/// Parses a belief prompt back into a belief.
///
/// `step_index` is not part of the layout; it is recovered as one past the last saved
/// entry's index (zero when nothing is saved). Action lists may be wrapped over several
/// lines.
pub fn parse_belief_prompt(text: &str) -> Result<BeliefState> {
    let text = normalize(text);
    let mut bodies = parse_layout(&text, &BELIEF_LAYOUT)?;
    let attempted = bodies.remove(TAG_ATTEMPTED_ACTION).unwrap_or_default();
    let mut belief = belief_from_bodies(&mut bodies);
    belief.attempted_actions = parse_actions(&attempted);
    Ok(belief)
}

/// Parses a history prompt into its belief head (with no attempted actions) and transcript.
pub fn parse_history_prompt(text: &str) -> Result<(BeliefState, Vec<(String, String)>)> {
    let text = normalize(text);
    let mut bodies = parse_layout(&text, &HISTORY_LAYOUT)?;
    let history = bodies.remove(TAG_HISTORY).unwrap_or_default();
    let belief = belief_from_bodies(&mut bodies);
    if history.trim() == EMPTY_SET {
        return Ok((belief, Vec::new()));
    }
    let mut transcript: Vec<(String, Vec<&str>)> = Vec::new();
    for line in history.split('\n') {
        let expected = transcript.len();
        match split_index_prefix(line) {
            Some((idx, action)) if idx == expected => transcript.push((action.to_string(), Vec::new())),
            _ => match transcript.last_mut() {
                Some((_, obs)) => obs.push(line),
                None => return Err(Error::format(TAG_HISTORY, "entry without [0] prefix")),
            },
        }
    }
    let transcript = transcript
        .into_iter()
        .map(|(a, lines)| (a, lines.join("\n")))
        .collect();
    Ok((belief, transcript))
}

/// Parses a model response. Accepts either the bare response (text after the opening
/// `<observation_update>` line) or a full prompt followed by the response.
pub fn parse_model_output(text: &str) -> Result<ModelOutput> {
    let text = normalize(text);
    let lines: Vec<&str> = text.split('\n').collect();
    let close = lines
        .iter()
        .position(|l| is_close_line(l, TAG_OBSERVATION_UPDATE))
        .ok_or_else(|| Error::format(TAG_OBSERVATION_UPDATE, "missing closing tag"))?;
    let open = lines[..close]
        .iter()
        .rposition(|l| open_line(l) == Some(TAG_OBSERVATION_UPDATE))
        .map_or(0, |i| i + 1);
    let retention_body = lines[open..close].join("\n");
    let retention_body = retention_body.trim();
    let retention = if retention_body.is_empty() || retention_body.eq_ignore_ascii_case("none") {
        RetentionDecision::Skip
    } else {
        RetentionDecision::keep(retention_body)
    };

    let rest = lines[close + 1..].join("\n");
    let blocks = scan_blocks(&rest, &[TAG_PROGRESS_UPDATE, TAG_ACTION_UPDATE]);
    let progress_idx = blocks
        .iter()
        .position(|b| b.tag == TAG_PROGRESS_UPDATE)
        .ok_or_else(|| Error::format(TAG_PROGRESS_UPDATE, "missing tag"))?;
    let progress = blocks[progress_idx]
        .body
        .as_deref()
        .ok_or_else(|| Error::format(TAG_PROGRESS_UPDATE, "missing closing tag"))?
        .trim()
        .to_string();
    let action_block = blocks[progress_idx + 1..]
        .iter()
        .find(|b| b.tag == TAG_ACTION_UPDATE)
        .ok_or_else(|| Error::format(TAG_ACTION_UPDATE, "missing tag after progress_update"))?;
    let action = action_block
        .body
        .as_deref()
        .ok_or_else(|| Error::format(TAG_ACTION_UPDATE, "missing closing tag"))?
        .trim()
        .to_string();
    if action.is_empty() {
        return Err(Error::format(TAG_ACTION_UPDATE, "empty action"));
    }
    Ok(ModelOutput {
        retention,
        progress_update: progress,
        action_update: action,
    })
}

/// Whitespace-delimited token counts per tag body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub per_tag: BTreeMap<String, usize>,
    pub input: usize,
    pub output: usize,
}

impl TokenCounts {
    pub fn total(&self) -> usize {
        self.input + self.output
    }
}

/// Counts tokens (maximal non-whitespace runs) inside each known tag.
///
/// Accepts a prompt, a bare response, or both concatenated. The open-ended
/// `<observation_update>` at the end of a prompt contributes nothing.
pub fn count_tagged_tokens(text: &str) -> Result<TokenCounts> {
    let mut text = normalize(text);
    let has_close = text.split('\n').any(|l| is_close_line(l, TAG_OBSERVATION_UPDATE));
    let has_open = text
        .split('\n')
        .any(|l| open_line(l) == Some(TAG_OBSERVATION_UPDATE));
    if has_close && !has_open {
        text = format!("<{TAG_OBSERVATION_UPDATE}>\n{text}");
    }
    let known: Vec<&str> = INPUT_TAGS.iter().chain(OUTPUT_TAGS.iter()).copied().collect();
    let blocks = scan_blocks(&text, &known);
    if blocks.is_empty() {
        return Err(Error::format("*", "no tagged blocks"));
    }
    let mut counts = TokenCounts::default();
    for block in blocks {
        let n = match (&block.body, block.tag) {
            (Some(body), _) => body.split_whitespace().count(),
            (None, TAG_OBSERVATION_UPDATE) => continue,
            (None, tag) => return Err(Error::format(tag, "unclosed tag")),
        };
        *counts.per_tag.entry(block.tag.to_string()).or_default() += n;
        if OUTPUT_TAGS.contains(&block.tag) {
            counts.output += n;
        } else {
            counts.input += n;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG_INPUT: &str = include_str!("../data/belief_fixture.txt");
    const FIG_OUTPUT: &str = include_str!("../data/output_fixture.txt");

    /// The fixture wraps long action lists over several lines for display; the canonical
    /// serialization keeps each list on one line.
    fn unwrap_lists(text: &str) -> String {
        text.replace(",\n", ",")
    }

    fn fixture_belief() -> BeliefState {
        parse_belief_prompt(FIG_INPUT).unwrap()
    }

    #[test]
    fn fixture_parses_with_expected_counts() {
        let b = fixture_belief();
        assert_eq!(b.query, "clean some knife and put it in diningtable.");
        assert_eq!(b.progress, "find the knife");
        assert_eq!(b.available_actions.len(), 28);
        assert_eq!(b.attempted_actions.len(), 7);
        assert!(b.saved_observations.is_empty());
        assert_eq!(b.available_actions[27], "take dishsponge 2 from cabinet 3");
        assert_eq!(b.attempted_actions[6], "open cabinet 3");
    }

    #[test]
    fn fixture_serializes_identically_modulo_wrapping() {
        let b = fixture_belief();
        let text = serialize_belief(&b);
        assert_eq!(text.as_str(), unwrap_lists(FIG_INPUT));
        assert!(text
            .as_str()
            .contains("<saved_observation>\n{}\n</saved_observation>"));
        assert!(text.as_str().ends_with("<observation_update>\n"));
    }

    #[test]
    fn fixture_output_parses() {
        let out = parse_model_output(FIG_OUTPUT).unwrap();
        assert_eq!(out.retention, RetentionDecision::Skip);
        assert_eq!(out.progress_update, "find the knife");
        assert_eq!(out.action_update, "go to diningtable 1");
        let rendered = render_model_output(&out.retention, &out.progress_update, &out.action_update);
        assert_eq!(rendered, FIG_OUTPUT);
        let full = format!("{FIG_INPUT}{FIG_OUTPUT}");
        assert_eq!(parse_model_output(&full).unwrap(), out);
    }

    #[test]
    fn keep_body_parses_as_content() {
        let text = render_model_output(&RetentionDecision::keep("g at 0; r present not 1"), "p", "a");
        let out = parse_model_output(&text).unwrap();
        assert_eq!(out.retention, RetentionDecision::keep("g at 0; r present not 1"));
        assert_eq!(parse_model_output(" NONE \n</observation_update>\n<progress_update>\np\n</progress_update>\n<action_update>\na\n</action_update>").unwrap().retention, RetentionDecision::Skip);
    }

    #[test]
    fn output_errors() {
        assert!(matches!(
            parse_model_output("None\n</observation_update>\n\n<progress_update>\np\n</progress_update>\n"),
            Err(Error::Format { tag, .. }) if tag == TAG_ACTION_UPDATE
        ));
        assert!(matches!(
            parse_model_output("None\n</observation_update>\n<progress_update>\np\n</progress_update>\n<action_update>\ngo"),
            Err(Error::Format { tag, .. }) if tag == TAG_ACTION_UPDATE
        ));
        assert!(matches!(
            parse_model_output("None\n</observation_update>\n<progress_update>\np\n</progress_update>\n<action_update>\n  \n</action_update>"),
            Err(Error::Format { tag, .. }) if tag == TAG_ACTION_UPDATE
        ));
        assert!(parse_model_output("garbage").is_err());
    }

    #[test]
    fn missing_or_duplicated_tag_is_named() {
        let no_goal = FIG_INPUT.replacen(
            "<goal>\nclean some knife and put it in diningtable.\n</goal>\n\n",
            "",
            1,
        );
        match parse_belief_prompt(&no_goal) {
            Err(Error::Format { tag, detail }) => {
                assert_eq!(tag, "goal");
                assert!(detail.contains("missing"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = format!("<progress>\nx\n</progress>\n\n{FIG_INPUT}");
        match parse_belief_prompt(&dup) {
            Err(Error::Format { tag, detail }) => {
                assert_eq!(tag, "progress");
                assert!(detail.contains("duplicated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crlf_is_accepted() {
        let crlf = FIG_INPUT.replace('\n', "\r\n");
        assert_eq!(parse_belief_prompt(&crlf).unwrap(), fixture_belief());
    }

    #[test]
    fn saved_entries_round_trip_with_indices() {
        let mut b = fixture_belief();
        b.saved_observations = vec![
            SavedObservation {
                step: 2,
                content: "pos 0 = c".into(),
            },
            SavedObservation {
                step: 5,
                content: "two\nlines".into(),
            },
        ];
        b.step_index = 6;
        let text = serialize_belief(&b);
        assert!(text
            .as_str()
            .contains("<saved_observation>\n[2] pos 0 = c\n[5] two\nlines\n</saved_observation>"));
        assert_eq!(parse_belief_prompt(text.as_str()).unwrap(), b);
    }

    #[test]
    fn history_prompt_round_trips() {
        let b = fixture_belief();
        let transcript = vec![
            (
                "go to drawer 1".to_string(),
                "You arrive at drawer 1.\nIt is closed.".to_string(),
            ),
            (
                "open drawer 1".to_string(),
                "[1] looks like an index but is not".to_string(),
            ),
        ];
        let text = serialize_history_prompt(&b, &transcript);
        assert!(!text.contains("<attempted_action>"));
        let (head, parsed) = parse_history_prompt(&text).unwrap();
        assert_eq!(parsed, transcript);
        assert_eq!(head.query, b.query);
        assert!(head.attempted_actions.is_empty());
        let (_, empty) = parse_history_prompt(&serialize_history_prompt(&b, &[])).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn token_counts() {
        let out = render_model_output(&RetentionDecision::Skip, "find the knife", "go to diningtable 1");
        let c = count_tagged_tokens(&out).unwrap();
        assert_eq!(c.per_tag[TAG_ACTION_UPDATE], 4);
        assert_eq!(c.per_tag[TAG_OBSERVATION_UPDATE], 1);
        assert_eq!(c.output, 8);
        assert_eq!(c.input, 0);

        let mut b = fixture_belief();
        b.attempted_actions.clear();
        let c = count_tagged_tokens(serialize_belief(&b).as_str()).unwrap();
        assert_eq!(c.per_tag[TAG_ATTEMPTED_ACTION], 0);
        assert_eq!(c.output, 0);
        assert!(count_tagged_tokens("no tags at all").is_err());
        assert!(count_tagged_tokens("<goal>\nunclosed").is_err());
    }

    #[test]
    fn fixture_token_counts_sum_to_whole_text() {
        // Independent recount: every whitespace token of the prompt that is not a tag marker.
        let whole = FIG_INPUT
            .split_whitespace()
            .filter(|t| !(t.starts_with('<') && t.ends_with('>')))
            .count();
        let c = count_tagged_tokens(FIG_INPUT).unwrap();
        assert_eq!(c.per_tag.values().sum::<usize>(), whole);
        assert_eq!(c.input, whole);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn text() -> impl Strategy<Value = String> {
            "[a-z0-9 .;:()]{0,12}( [a-z]{1,6}){0,3}"
        }

        fn action() -> impl Strategy<Value = String> {
            "[a-z]{1,6}( [a-z0-9]{1,4}){0,2}"
        }

        prop_compose! {
            fn belief()(
                query in "[a-z]{1,8}( [a-z]{1,5}){0,4}\\.?",
                progress in text(),
                last in prop::collection::vec(text(), 1..3),
                saved in prop::collection::vec((0usize..3, prop::collection::vec(text(), 1..3)), 0..4),
                available in prop::collection::vec(action(), 0..6),
                attempted in prop::collection::vec(action(), 0..6),
            ) -> BeliefState {
                let mut step = 0;
                let saved_observations: Vec<SavedObservation> = saved.into_iter().map(|(gap, lines)| {
                    step += gap + 1;
                    SavedObservation { step, content: lines.join("\n") }
                }).collect();
                BeliefState {
                    query,
                    progress,
                    attempted_actions: attempted,
                    available_actions: available,
                    step_index: saved_observations.last().map_or(0, |s| s.step + 1),
                    saved_observations,
                    last_observation: last.join("\n"),
                }
            }
        }

        proptest! {
            #[test]
            fn belief_round_trip(b in belief()) {
                let text = serialize_belief(&b);
                prop_assert_eq!(parse_belief_prompt(text.as_str()).unwrap(), b);
            }

            #[test]
            fn token_counts_are_additive(b in belief()) {
                let text = serialize_belief(&b);
                let c = count_tagged_tokens(text.as_str()).unwrap();
                let direct: usize = [
                    b.query.split_whitespace().count(),
                    b.progress.split_whitespace().count(),
                    b.last_observation.split_whitespace().count(),
                    render_saved(&b.saved_observations).split_whitespace().count(),
                    b.available_actions.join(",").split_whitespace().count(),
                    b.attempted_actions.join(",").split_whitespace().count(),
                ].iter().sum();
                prop_assert_eq!(c.per_tag.values().sum::<usize>(), c.input);
                prop_assert_eq!(c.input, direct);
            }
        }
    }
}
