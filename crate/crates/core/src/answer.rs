//! Answer grammar: seg-token extraction, step splitting, detection and
//! diagnosis matching, and positional mask binding.
//!
//! Seg tokens are `<seg[0-9]{3}>`; the legacy bare `<seg>` is also accepted
//! and reported with the token name `seg`. See `docs/answer-grammar.md`.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SegTarget;
use crate::mask_io::TransportedMask;

/// Token name reported for the legacy unnumbered `<seg>`.
pub const LEGACY_TOKEN: &str = "seg";

fn seg_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<(seg(?:[0-9]{3})?)>").unwrap())
}

fn yes_no_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
}

/// Binary detection verdict extracted from an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    Yes,
    No,
    Invalid,
}

impl Detection {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Detection::Yes => Some(true),
            Detection::No => Some(false),
            Detection::Invalid => None,
        }
    }

    /// Whether this verdict agrees with the ground truth; `Invalid` never does.
    pub fn matches(self, truth: bool) -> bool {
        self.as_bool() == Some(truth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegTokenRef {
    pub token_name: String,
    pub token_ordinal: usize,
    /// Byte offsets `[start, end)` of the whole `<...>` token.
    pub char_span: (usize, usize),
    pub preceding_label: Option<String>,
}

impl SegTokenRef {
    pub fn is_legacy(&self) -> bool {
        self.token_name == LEGACY_TOKEN
    }
}

/// All seg tokens of `text` in textual order.
pub fn tokenize_seg_tokens(text: &str) -> Vec<SegTokenRef> {
    let mut prev_end = 0;
    seg_regex()
        .captures_iter(text)
        .enumerate()
        .map(|(ordinal, caps)| {
            let whole = caps.get(0).unwrap();
            let label = preceding_label(&text[prev_end..whole.start()]);
            prev_end = whole.end();
            SegTokenRef {
                token_name: caps[1].to_string(),
                token_ordinal: ordinal,
                char_span: (whole.start(), whole.end()),
                preceding_label: label,
            }
        })
        .collect()
}

// Best effort: last noun phrase before the token, e.g. "liver" in
// "Here is the mask for liver <seg000>".
fn preceding_label(window: &str) -> Option<String> {
    let clause = window
        .rsplit(|c| matches!(c, '.' | ',' | ';' | ':' | '\n' | '(' | ')'))
        .next()
        .unwrap_or("");
    let lower = clause.to_lowercase();
    let mut start = 0;
    for sep in [" and ", " for ", " of "] {
        if let Some(pos) = lower.rfind(sep) {
            start = start.max(pos + sep.len());
        }
    }
    let mut phrase = clause[start..].trim();
    for article in ["the ", "The "] {
        if let Some(rest) = phrase.strip_prefix(article) {
            phrase = rest.trim_start();
        }
    }
    if phrase.is_empty() {
        None
    } else {
        Some(phrase.to_string())
    }
}

/// An answer split at its `1.` / `2.` / `3.` enumerators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Steps<'a> {
    pub step1: &'a str,
    pub step2: Option<&'a str>,
    pub step3: Option<&'a str>,
    /// False when the answer does not open with a `1.` enumerator.
    pub numbered: bool,
    /// Byte ranges of the three step bodies (whitespace-trimmed).
    pub spans: [Option<Range<usize>>; 3],
}

/// Finds enumerator `n` (`n.` or `n)`) at or after `from`. It must sit at the
/// start of the text or after whitespace, and must not be followed by a digit.
fn find_enumerator(text: &str, n: u8, from: usize) -> Option<Range<usize>> {
    let bytes = text.as_bytes();
    let digit = b'0' + n;
    let mut i = from;
    while i + 1 < bytes.len() {
        if bytes[i] == digit
            && matches!(bytes[i + 1], b'.' | b')')
            && (i == 0 || bytes[i - 1].is_ascii_whitespace())
            && !bytes.get(i + 2).is_some_and(|b| b.is_ascii_digit())
        {
            return Some(i..i + 2);
        }
        i += 1;
    }
    None
}

fn trimmed(text: &str, range: Range<usize>) -> Range<usize> {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let body = slice.trim();
    range.start + lead..range.start + lead + body.len()
}

pub fn split_steps(text: &str) -> Steps<'_> {
    let lead = text.len() - text.trim_start().len();
    let Some(m1) = find_enumerator(text, 1, lead).filter(|m| m.start == lead) else {
        let whole = trimmed(text, 0..text.len());
        let body = &text[whole.clone()];
        let step2 = (!body.is_empty()).then_some(body);
        return Steps {
            step1: body,
            step2,
            step3: None,
            numbered: false,
            spans: [Some(whole.clone()), step2.map(|_| whole), None],
        };
    };
    let m2 = find_enumerator(text, 2, m1.end);
    let m3 = m2.as_ref().and_then(|m2| find_enumerator(text, 3, m2.end));
    let end1 = m2.as_ref().map_or(text.len(), |m| m.start);
    let s1 = trimmed(text, m1.end..end1);
    let s2 = m2.as_ref().map(|m2| {
        let end = m3.as_ref().map_or(text.len(), |m| m.start);
        trimmed(text, m2.end..end)
    });
    let s3 = m3.as_ref().map(|m3| trimmed(text, m3.end..text.len()));
    Steps {
        step1: &text[s1.clone()],
        step2: s2.clone().map(|r| &text[r]),
        step3: s3.clone().map(|r| &text[r]),
        numbered: true,
        spans: [Some(s1), s2, s3],
    }
}

/// First standalone `yes` / `no` of step 1 (the whole text when unnumbered).
pub fn parse_detection(text: &str) -> Detection {
    detection_in(split_steps(text).step1)
}

fn detection_in(segment: &str) -> Detection {
    match yes_no_regex().find(segment) {
        Some(m) if m.as_str().eq_ignore_ascii_case("yes") => Detection::Yes,
        Some(_) => Detection::No,
        None => Detection::Invalid,
    }
}

/// Lowercase, hyphens and underscores folded to spaces, whitespace collapsed.
pub fn normalize_label_text(text: &str) -> String {
    let folded: String = text
        .chars()
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True iff `label` or any synonym occurs in `segment` after normalization.
pub fn match_diagnosis(segment: &str, label: &str, synonyms: &[String]) -> bool {
    let hay = normalize_label_text(segment);
    std::iter::once(label)
        .chain(synonyms.iter().map(String::as_str))
        .map(normalize_label_text)
        .any(|needle| !needle.is_empty() && hay.contains(&needle))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub detection: Detection,
    /// Step-2 text; step 1 when the answer has no step 2.
    pub diagnosis_segment: Option<String>,
    pub seg_refs: Vec<SegTokenRef>,
    pub raw: String,
}

impl ParsedAnswer {
    pub fn parse(text: &str) -> Self {
        let steps = split_steps(text);
        let diagnosis = steps.step2.unwrap_or(steps.step1);
        ParsedAnswer {
            detection: detection_in(steps.step1),
            diagnosis_segment: (!diagnosis.is_empty()).then(|| diagnosis.to_string()),
            seg_refs: tokenize_seg_tokens(text),
            raw: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BindingError {
    #[error("{refs} seg tokens for {targets} ground-truth targets")]
    CountMismatch { refs: usize, targets: usize },
    #[error("no transported mask for token `{0}`")]
    MissingMask(String),
    #[error("token `{0}` appears more than once")]
    DuplicateToken(String),
    #[error("bare <seg> is only accepted for a single target ({0} targets)")]
    LegacyToken(usize),
}

/// One seg reference bound to a transported mask and a ground-truth target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub token_name: String,
    pub ref_ordinal: usize,
    pub mask_index: usize,
    pub target_index: usize,
}

/// Binds refs to masks by token name and to targets by position.
pub fn bind_masks(
    refs: &[SegTokenRef],
    transported: &[TransportedMask],
    gt_targets: &[SegTarget],
) -> Result<Vec<Binding>, BindingError> {
    let mut seen = HashSet::new();
    for r in refs {
        if !seen.insert(r.token_name.as_str()) {
            return Err(BindingError::DuplicateToken(r.token_name.clone()));
        }
    }
    let mut seen_masks = HashSet::new();
    for t in transported {
        if !seen_masks.insert(t.token_name.as_str()) {
            return Err(BindingError::DuplicateToken(t.token_name.clone()));
        }
    }
    if refs.len() != gt_targets.len() {
        return Err(BindingError::CountMismatch {
            refs: refs.len(),
            targets: gt_targets.len(),
        });
    }
    if gt_targets.len() != 1 && refs.iter().any(SegTokenRef::is_legacy) {
        return Err(BindingError::LegacyToken(gt_targets.len()));
    }
    refs.iter()
        .enumerate()
        .map(|(i, r)| {
            let mask_index = transported
                .iter()
                .position(|t| t.token_name == r.token_name)
                .ok_or_else(|| BindingError::MissingMask(r.token_name.clone()))?;
            Ok(Binding {
                token_name: r.token_name.clone(),
                ref_ordinal: r.token_ordinal,
                mask_index,
                target_index: i,
            })
        })
        .collect()
}
