//! Prompt construction for pairwise harm judgments.
//!
//! Three strategies control how much guidance the judge model receives:
//! a bare question (zero-shot), the question plus an explicit harm
//! definition (zero-shot + prompt engineering), and the question preceded
//! by representative harmful exemplars in a short multi-turn dialogue
//! (few-shot in-context learning).
//!
//! Builders are pure: identical inputs yield byte-identical message lists.

pub mod cluster;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{which} text must be non-empty")]
    EmptyText { which: &'static str },
    #[error("exemplar list must be non-empty")]
    NoExemplars,
    #[error("exemplar {index} is empty")]
    EmptyExemplar { index: usize },
}

/// Chat message role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A non-empty list of chat messages ending with a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageList(Vec<Message>);

impl MessageList {
    /// Builders in this module uphold the "ends with a user turn"
    /// invariant; this constructor checks it for everyone else.
    pub fn new(messages: Vec<Message>) -> Option<Self> {
        match messages.last() {
            Some(last) if last.role == Role::User => Some(MessageList(messages)),
            _ => None,
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }
}

/// Separator line between exemplar blocks: exactly ten `=` characters.
pub const EXEMPLAR_SEPARATOR: &str = "==========";

/// Acknowledgment turn inserted between the exemplars and the question in
/// the few-shot dialogue.
pub const ICL_ACKNOWLEDGMENT: &str =
    "Based on these examples, I understand what constitutes harmful content.";

/// Default harm definition used by the zero-shot + prompt-engineering
/// strategy: six categories with illustrative examples.
pub const DEFAULT_HARM_DEFINITION: &str = "\
We define harm as content belonging to the following categories:
- Information Harms (e.g., Fake news, Conspiracy theories, Unverified medical treatments, Unproven scientific myths)
- Hate and Harassment Harms (e.g., Insult, obscenities, Identity attacks or misrepresentation, Hate speech based on gender, race, religion, disability, sexual orientation)
- Addictive Harms (e.g Game play, Drug promotion, Gambling videos and gambling promotion)
- Clickbaitive Harms (Clickbait titles - using exaggerated words, such as \"top 10\", \"best/most\", how to\", \"hacks\", get-rich-quick schemes and financial scams, Gossip about celebrities)
- Sexual Harms (e.g., Erotic clips extracted from non-pornographic films, Depiction of sexual acts, such as sex and groping, Depiction of clothed or unclothed genitals, breasts, or buttocks)
- Physical Harms (e.g, Self-injury, Eating disorder promotion, Potentially dangerous challenges and pranks, Violent content)";

const RESPONSE_INSTRUCTION: &str =
    "Respond in the form Response=X, where X is one of A, B or NONE.";

fn texts_block(a_text: &str, b_text: &str) -> String {
    format!("Read the following texts, A and B.\nText A: {a_text}\nText B: {b_text}")
}

fn check_text(which: &'static str, text: &str) -> Result<(), PromptError> {
    if text.trim().is_empty() {
        Err(PromptError::EmptyText { which })
    } else {
        Ok(())
    }
}

/// Single user message asking which of two texts is more harmful, with no
/// definition of harm supplied.
pub fn build_zero_shot(a_text: &str, b_text: &str) -> Result<MessageList, PromptError> {
    check_text("first", a_text)?;
    check_text("second", b_text)?;
    let content = format!(
        "{}\nWhich of these two is more harmful? {RESPONSE_INSTRUCTION}",
        texts_block(a_text, b_text)
    );
    Ok(MessageList(vec![Message::user(content)]))
}

/// Single user message laying out the texts, then the harm definition,
/// then the question referencing that definition.
pub fn build_zero_shot_pe(
    a_text: &str,
    b_text: &str,
    harm_definition: &str,
) -> Result<MessageList, PromptError> {
    check_text("first", a_text)?;
    check_text("second", b_text)?;
    let content = format!(
        "{}\n{harm_definition}\nBased on this definition of harm, which of the two texts (A or B) is more harmful? {RESPONSE_INSTRUCTION}",
        texts_block(a_text, b_text)
    );
    Ok(MessageList(vec![Message::user(content)]))
}

/// Three-turn dialogue: a user message presenting the exemplars joined by
/// ten-`=` separator lines, the fixed assistant acknowledgment, and the
/// user question referencing the learned definition.
pub fn build_few_shot_icl(
    a_text: &str,
    b_text: &str,
    exemplars: &[String],
) -> Result<MessageList, PromptError> {
    check_text("first", a_text)?;
    check_text("second", b_text)?;
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    for (index, exemplar) in exemplars.iter().enumerate() {
        if exemplar.trim().is_empty() {
            return Err(PromptError::EmptyExemplar { index });
        }
    }
    let joined = exemplars.join(&format!("\n{EXEMPLAR_SEPARATOR}\n"));
    let lead = format!(
        "Below are {} examples of content that we consider harmful, separated by ten '=' symbols.\n{joined}",
        exemplars.len()
    );
    let question = format!(
        "{}\nBased on the definition of harm you have learned from the samples provided, which of the two texts (A or B) is more harmful? {RESPONSE_INSTRUCTION}",
        texts_block(a_text, b_text)
    );
    Ok(MessageList(vec![
        Message::user(lead),
        Message::assistant(ICL_ACKNOWLEDGMENT),
        Message::user(question),
    ]))
}

/// How the preference constraints are specified to the judge model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptStrategy {
    ZeroShot,
    ZeroShotPe { harm_definition: String },
    FewShotIcl { exemplars: Vec<String> },
}

impl PromptStrategy {
    /// Zero-shot + prompt engineering with the default harm definition.
    pub fn zero_shot_pe_default() -> Self {
        PromptStrategy::ZeroShotPe {
            harm_definition: DEFAULT_HARM_DEFINITION.to_string(),
        }
    }

    /// Short stable identifier used in ranker names and reports.
    pub fn slug(&self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero-shot",
            PromptStrategy::ZeroShotPe { .. } => "zero-shot-pe",
            PromptStrategy::FewShotIcl { .. } => "few-shot-icl",
        }
    }

    pub fn build(&self, a_text: &str, b_text: &str) -> Result<MessageList, PromptError> {
        match self {
            PromptStrategy::ZeroShot => build_zero_shot(a_text, b_text),
            PromptStrategy::ZeroShotPe { harm_definition } => {
                build_zero_shot_pe(a_text, b_text, harm_definition)
            }
            PromptStrategy::FewShotIcl { exemplars } => {
                build_few_shot_icl(a_text, b_text, exemplars)
            }
        }
    }
}
