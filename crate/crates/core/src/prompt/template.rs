//! Placeholder grammar for prompt templates.
//!
//! ```text
//! template    := (literal | placeholder | escape)*
//! placeholder := "{{" name "}}"        name := [a-z_][a-z0-9_]*
//! escape      := "\{" | "\}" | "\\"
//! ```
//!
//! Any other `{`, `}` is literal. A backslash must start one of the three
//! escapes. [`Template::to_source`] escapes every brace and backslash in
//! literal text, so a partially bound template always re-parses to the same
//! segments no matter what the bound values contained.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}`: bad escape at char {pos}")]
    BadEscape { template: String, pos: usize },
    #[error("template `{template}`: unterminated placeholder at char {pos}")]
    Unterminated { template: String, pos: usize },
    #[error("template `{template}`: invalid placeholder name `{name}`")]
    BadName { template: String, name: String },
    #[error("template `{template}`: placeholder `{name}` is unbound")]
    Unbound { template: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    segments: Vec<Segment>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let chars: Vec<char> = source.chars().collect();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '\\' => match chars.get(i + 1) {
                    Some(&c @ ('{' | '}' | '\\')) => {
                        literal.push(c);
                        i += 2;
                    }
                    _ => {
                        return Err(TemplateError::BadEscape {
                            template: name.to_string(),
                            pos: i,
                        })
                    }
                },
                '{' if chars.get(i + 1) == Some(&'{') => {
                    let rest: String = chars[i + 2..].iter().collect();
                    let Some(close) = rest.find("}}") else {
                        return Err(TemplateError::Unterminated {
                            template: name.to_string(),
                            pos: i,
                        });
                    };
                    let placeholder = &rest[..close];
                    if !valid_name(placeholder) {
                        return Err(TemplateError::BadName {
                            template: name.to_string(),
                            name: placeholder.to_string(),
                        });
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder(placeholder.to_string()));
                    i += 2 + placeholder.chars().count() + 2;
                }
                c => {
                    literal.push(c);
                    i += 1;
                }
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self {
            name: name.to_string(),
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(p) => Some(p.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Substitute the given values, leaving other placeholders in place.
    pub fn bind(&self, vars: &BTreeMap<&str, String>) -> Template {
        let mut segments: Vec<Segment> = Vec::with_capacity(self.segments.len());
        let push_literal = |segments: &mut Vec<Segment>, text: &str| {
            if text.is_empty() {
                return;
            }
            if let Some(Segment::Literal(prev)) = segments.last_mut() {
                prev.push_str(text);
            } else {
                segments.push(Segment::Literal(text.to_string()));
            }
        };
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => push_literal(&mut segments, text),
                Segment::Placeholder(p) => match vars.get(p.as_str()) {
                    Some(value) => push_literal(&mut segments, value),
                    None => segments.push(seg.clone()),
                },
            }
        }
        Template {
            name: self.name.clone(),
            segments,
        }
    }

    /// Render with every placeholder bound.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        self.bind(vars).into_text()
    }

    /// Literal text of a fully bound template.
    pub fn into_text(self) -> Result<String, TemplateError> {
        let mut out = String::new();
        for seg in self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(&text),
                Segment::Placeholder(name) => {
                    return Err(TemplateError::Unbound {
                        template: self.name,
                        name,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Source text that parses back to exactly these segments.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => {
                    for c in text.chars() {
                        if matches!(c, '{' | '}' | '\\') {
                            out.push('\\');
                        }
                        out.push(c);
                    }
                }
                Segment::Placeholder(p) => {
                    out.push_str("{{");
                    out.push_str(p);
                    out.push_str("}}");
                }
            }
        }
        out
    }
}
