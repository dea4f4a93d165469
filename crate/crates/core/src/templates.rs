//! Text templates shared by the assembler and the reference predictors.
//!
//! Placeholders are written `{name}`. The shipped defaults live in
//! `templates/default.json`; a directory containing a `default.json` with the
//! same keys can replace them, either explicitly or through the
//! `RDS_BENCH_TEMPLATES` environment variable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming a template directory.
pub const TEMPLATE_DIR_ENV: &str = "RDS_BENCH_TEMPLATES";
/// File looked up inside a template directory.
pub const TEMPLATE_FILE: &str = "default.json";

const DEFAULT_TEMPLATES: &str = include_str!("../../../templates/default.json");

/// Default number of numbered seg tokens the assembler may emit.
pub const DEFAULT_SEG_VOCAB: usize = 8;
/// Hard upper bound imposed by the three-digit token grammar.
pub const MAX_SEG_VOCAB: usize = 1000;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed template file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("template `{field}` is missing placeholder `{{{placeholder}}}`")]
    MissingPlaceholder {
        field: &'static str,
        placeholder: &'static str,
    },
    #[error("seg vocabulary size {0} outside 1..={MAX_SEG_VOCAB}")]
    Vocabulary(usize),
    #[error("{needed} targets exceed the seg vocabulary of {vocab}")]
    VocabularyExceeded { needed: usize, vocab: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub refseg_prompt: String,
    pub refseg_answer: String,
    pub vqaseg_question: String,
    pub vqaseg_positive_answer: String,
    pub vqaseg_target: String,
    pub vqaseg_target_separator: String,
    pub vqaseg_negative_answer: String,
    pub vqa_prompt: String,
    #[serde(default = "default_vocab")]
    pub seg_vocab_size: usize,
}

fn default_vocab() -> usize {
    DEFAULT_SEG_VOCAB
}

impl Default for Templates {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TEMPLATES).expect("shipped templates are valid JSON")
    }
}

impl Templates {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, TemplateError> {
        let t: Templates = serde_json::from_str(text).map_err(|source| TemplateError::Parse {
            path: origin.to_string(),
            source,
        })?;
        t.check()?;
        Ok(t)
    }

    /// Loads `default.json` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let path = dir.join(TEMPLATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Explicit directory first, then `RDS_BENCH_TEMPLATES`, then the shipped defaults.
    pub fn resolve(dir: Option<&Path>) -> Result<Self, TemplateError> {
        if let Some(dir) = dir {
            return Self::load_dir(dir);
        }
        match std::env::var_os(TEMPLATE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(Path::new(&dir)),
            _ => Ok(Self::default()),
        }
    }

    fn check(&self) -> Result<(), TemplateError> {
        let required: [(&'static str, &str, &'static str); 6] = [
            ("refseg_prompt", &self.refseg_prompt, "label"),
            ("refseg_prompt", &self.refseg_prompt, "modality"),
            ("refseg_answer", &self.refseg_answer, "token"),
            ("vqaseg_positive_answer", &self.vqaseg_positive_answer, "targets"),
            ("vqaseg_target", &self.vqaseg_target, "token"),
            ("vqa_prompt", &self.vqa_prompt, "question"),
        ];
        for (field, text, placeholder) in required {
            if !text.contains(&format!("{{{placeholder}}}")) {
                return Err(TemplateError::MissingPlaceholder { field, placeholder });
            }
        }
        if self.seg_vocab_size == 0 || self.seg_vocab_size > MAX_SEG_VOCAB {
            return Err(TemplateError::Vocabulary(self.seg_vocab_size));
        }
        Ok(())
    }

    pub fn check_vocab(&self, needed: usize) -> Result<(), TemplateError> {
        if needed > self.seg_vocab_size {
            return Err(TemplateError::VocabularyExceeded {
                needed,
                vocab: self.seg_vocab_size,
            });
        }
        Ok(())
    }
}

/// Substitutes `{key}` placeholders. Unknown placeholders are left verbatim.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Name of the `index`-th numbered seg token, e.g. `seg001`.
pub fn seg_token_name(index: usize) -> String {
    format!("seg{index:03}")
}

/// The literal token as it appears in answer text, e.g. `<seg001>`.
pub fn seg_token(index: usize) -> String {
    format!("<seg{index:03}>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_templates_pass_checks() {
        let t = Templates::default();
        t.check().unwrap();
        assert_eq!(t.seg_vocab_size, DEFAULT_SEG_VOCAB);
        assert_eq!(t.vqaseg_negative_answer, "1. No.");
    }

    #[test]
    fn fill_replaces_known_and_keeps_unknown() {
        assert_eq!(
            fill("a {x} b {y} {z", &[("x", "1"), ("y", "2")]),
            "a 1 b 2 {z"
        );
        assert_eq!(fill("{q}", &[]), "{q}");
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        let mut t = Templates::default();
        t.refseg_prompt = "Please segment it.".into();
        let text = serde_json::to_string(&t).unwrap();
        assert!(matches!(
            Templates::from_json(&text, "inline"),
            Err(TemplateError::MissingPlaceholder { field: "refseg_prompt", .. })
        ));
    }

    #[test]
    fn load_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Templates::default();
        t.vqaseg_negative_answer = "1. No abnormality.".into();
        std::fs::write(dir.path().join(TEMPLATE_FILE), serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(Templates::resolve(Some(dir.path())).unwrap(), t);
    }

    #[test]
    fn token_names() {
        assert_eq!(seg_token_name(0), "seg000");
        assert_eq!(seg_token(12), "<seg012>");
    }
}
