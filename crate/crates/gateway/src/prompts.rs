//! Versioned prompt templates.
//!
//! Templates are repository assets compiled into the binary; each one carries
//! a version suffix and a content checksum that run manifests record, so a
//! result can always be traced to the exact prompt text that produced it.
//! Dynamic fields are wrapped in XML-ish tags (`<instruction>`, `<original>`,
//! …) — agents compose with [`wrap_tag`] and anything that needs to read a
//! field back (the mock backends, tests) uses [`extract_tag`].

use aigve_core::hash::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub version: &'static str,
    pub body: &'static str,
}

impl PromptTemplate {
    /// Content digest recorded by run manifests.
    pub fn checksum(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }

    /// `name.version` identifier.
    pub fn id(&self) -> String {
        format!("{}.{}", self.name, self.version)
    }
}

pub const EVALUATOR_SYSTEM: PromptTemplate = PromptTemplate {
    name: "evaluator_system",
    version: "v1",
    body: include_str!("../assets/evaluator_system.v1.txt"),
};

pub const INSTRUCTION_REVISOR: PromptTemplate = PromptTemplate {
    name: "instruction_revisor",
    version: "v1",
    body: include_str!("../assets/instruction_revisor.v1.txt"),
};

pub const COMMENT_REVISOR: PromptTemplate = PromptTemplate {
    name: "comment_revisor",
    version: "v1",
    body: include_str!("../assets/comment_revisor.v1.txt"),
};

pub const COMMENT_VALIDATOR: PromptTemplate = PromptTemplate {
    name: "comment_validator",
    version: "v1",
    body: include_str!("../assets/comment_validator.v1.txt"),
};

pub const JUDGE_RUBRIC: PromptTemplate = PromptTemplate {
    name: "judge_rubric",
    version: "v1",
    body: include_str!("../assets/judge_rubric.v1.txt"),
};

/// Every template, for manifest recording.
pub fn all_templates() -> [&'static PromptTemplate; 5] {
    [
        &EVALUATOR_SYSTEM,
        &INSTRUCTION_REVISOR,
        &COMMENT_REVISOR,
        &COMMENT_VALIDATOR,
        &JUDGE_RUBRIC,
    ]
}

/// Wraps a dynamic field for message composition.
pub fn wrap_tag(tag: &str, content: &str) -> String {
    format!("<{tag}>\n{content}\n</{tag}>")
}

/// Reads a wrapped field back out of a message, if present.
pub fn extract_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>\n");
    let close = format!("\n</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(&text[start..end])
}
