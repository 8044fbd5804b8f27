//! Prompt-template bundles.
//!
//! Templates are plain strings with `{placeholder}` slots filled by
//! [`render`]. The `default` bundle is built in; the narrative template is a
//! working placeholder pending task-specific tuning.

use crate::error::ConfigError;

/// One named bundle of prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub name: String,
    /// Placeholders: {question}
    pub decompose: String,
    /// Placeholders: {video_id}, {frame_count}, {start_ts}, {end_ts}, {frame_list}
    pub narrative: String,
    /// Placeholders: {memory_block}, {question}, {options}, {depth}
    pub cot: String,
    /// Placeholders: {memories}, {question}, {options}
    pub answer: String,
}

const DECOMPOSE_TEMPLATE: &str = "Decompose the question into retrieval terms.\n\
Question: {question}\n\
Reply with exactly one JSON object: {\"object\": \"<object-level term>\", \"scene\": \"<scene-level term>\"}";

const NARRATIVE_TEMPLATE: &str = "Describe this video clip as one coherent scene, not frame by frame.\n\
Video: {video_id}\n\
Clip: {frame_count} frames spanning {start_ts} to {end_ts}.\n\
Frames: {frame_list}\n\
Reply with exactly three lines:\n\
When: <temporal anchoring, mention {start_ts} and {end_ts}>\n\
Where: <spatial context>\n\
What: <core actions and entities>";

const COT_TEMPLATE: &str = "Assess whether the episodic memory below provides sufficient information to answer the question.\n\
Depth: {depth}\n\
Memory:\n\
{memory_block}\n\
Question: {question}\n\
Options:\n\
{options}\n\
Reply with exactly one JSON object: {\"reasoning\": \"<why it is or is not sufficient>\", \"confidence\": <number between 0 and 1>}";

const ANSWER_TEMPLATE: &str = "Answer the multiple-choice question using the episodic memories and the attached frames.\n\
Memories:\n\
{memories}\n\
Question: {question}\n\
Options:\n\
{options}\n\
Reply with the single letter of the correct option.";

impl PromptSet {
    /// Resolve a bundle by name. Only `default` is built in.
    pub fn named(name: &str) -> Result<Self, ConfigError> {
        match name {
            "default" => Ok(Self {
                name: "default".to_string(),
                decompose: DECOMPOSE_TEMPLATE.to_string(),
                narrative: NARRATIVE_TEMPLATE.to_string(),
                cot: COT_TEMPLATE.to_string(),
                answer: ANSWER_TEMPLATE.to_string(),
            }),
            other => Err(ConfigError::UnknownPromptSet(other.to_string())),
        }
    }
}

/// Fill `{name}` slots in a template. Unknown slots are left untouched.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Render an options list as lettered lines: `A. first\nB. second`.
pub fn lettered_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, text)| format!("{}. {}", option_letter(i), text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Letter for a 0-based option index: 0 -> 'A'.
pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bundle_resolves() {
        let set = PromptSet::named("default").unwrap();
        assert!(set.decompose.contains("{question}"));
        assert!(set.cot.contains("{memory_block}"));
        assert!(set.cot.contains("{depth}"));
        assert!(set.answer.contains("{memories}"));
    }

    #[test]
    fn unknown_bundle_errors() {
        assert!(PromptSet::named("nope").is_err());
    }

    #[test]
    fn render_fills_slots() {
        let s = render("ask {question} twice: {question}", &[("question", "why")]);
        assert_eq!(s, "ask why twice: why");
    }

    #[test]
    fn options_letter_in_order() {
        let opts = vec!["one".to_string(), "two".to_string(), "three".to_string()];
        assert_eq!(lettered_options(&opts), "A. one\nB. two\nC. three");
        assert_eq!(option_letter(4), 'E');
    }
}
