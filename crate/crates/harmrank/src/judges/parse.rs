//! Parser for judge replies of the form `Response=X`.
//!
//! The grammar is deliberately narrow: scan case-insensitively for
//! `response`, optional whitespace, `=`, optional whitespace, then the
//! longest run of ASCII letters. The first structural match decides; its
//! token must be one of `A`, `B`, `NONE` (any case). Anything looser is
//! left to the retry loop rather than free-text inference.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::domain::Verdict;

static RESPONSE_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)response\s*=\s*([A-Za-z]+)").expect("valid regex"));

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no 'Response=X' pattern found in reply: {raw:?}")]
    NoMatch { raw: String },
    #[error("token {token:?} is not one of A, B, NONE in reply: {raw:?}")]
    UnrecognizedToken { token: String, raw: String },
}

/// Extracts the verdict from a raw judge reply.
pub fn parse_response(text: &str) -> Result<Verdict, ParseError> {
    let captures = RESPONSE_PATTERN
        .captures(text)
        .ok_or_else(|| ParseError::NoMatch {
            raw: text.to_string(),
        })?;
    let token = &captures[1];
    match token.to_ascii_uppercase().as_str() {
        "A" => Ok(Verdict::First),
        "B" => Ok(Verdict::Second),
        "NONE" => Ok(Verdict::Neither),
        _ => Err(ParseError::UnrecognizedToken {
            token: token.to_string(),
            raw: text.to_string(),
        }),
    }
}
