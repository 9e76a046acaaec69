//! A small template language for explanation sentences.
//!
//! ```text
//! literal text          copied verbatim; `{{` yields a literal `{`
//! {a.b}                 value at a dotted path
//! {a.b|pct|upper}       value passed through filters (pct, upper, int)
//! {#for t in a.list}…{/for}
//! {#if a.flag}…{/if}
//! ```
//!
//! Templates are parsed once into a position-annotated tree and rendered
//! against a [`Value`] context. A missing path is a render error, never an
//! empty substitution.

mod format;
mod parse;
mod render;
mod schema;
mod set;

use std::fmt;

pub use format::{format_percent, OutOfRange};
pub use parse::{parse_template, ParseError, ParseErrorKind};
pub use render::{render, RenderError, Value};
pub use schema::{validate_template, TemplateViolation, Vocabulary};
pub use set::{TemplateError, TemplateSet};

use crate::model::{Level, SensorKind};

/// 1-based line and column (in characters) of a node's opening character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Dotted lookup path; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path(Vec<String>);

impl Path {
    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub(crate) fn from_segments(segments: Vec<String>) -> Self {
        debug_assert!(!segments.is_empty());
        Path(segments)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Filter {
    Pct,
    Upper,
    Int,
}

impl Filter {
    pub fn name(self) -> &'static str {
        match self {
            Filter::Pct => "pct",
            Filter::Upper => "upper",
            Filter::Int => "int",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Filter::Pct, Filter::Upper, Filter::Int]
            .into_iter()
            .find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Literal { text: String, pos: Pos },
    Placeholder { path: Path, filters: Vec<Filter>, pos: Pos },
    For { var: String, path: Path, body: Vec<Node>, pos: Pos },
    If { path: Path, body: Vec<Node>, pos: Pos },
}

impl Node {
    pub fn pos(&self) -> Pos {
        match self {
            Node::Literal { pos, .. }
            | Node::Placeholder { pos, .. }
            | Node::For { pos, .. }
            | Node::If { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub level: Level,
    /// `None` applies to every sensor kind.
    pub sensor_kind: Option<SensorKind>,
    pub body: Vec<Node>,
}

impl Template {
    /// Parses `source` for the given slot; the name is `<level>.<kind|any>`.
    pub fn new(level: Level, sensor_kind: Option<SensorKind>, source: &str) -> Result<Self, ParseError> {
        Ok(Self {
            name: slot_name(level, sensor_kind),
            level,
            sensor_kind,
            body: parse_template(source)?,
        })
    }

    /// Canonical source text; parsing it yields an identical tree.
    pub fn print(&self) -> String {
        print_nodes(&self.body)
    }
}

pub fn slot_name(level: Level, sensor_kind: Option<SensorKind>) -> String {
    format!("{}.{}", level.as_str(), sensor_kind.map_or("any", SensorKind::as_str))
}

pub fn print_nodes(nodes: &[Node]) -> String {
    let mut out = String::new();
    write_nodes(&mut out, nodes);
    out
}

fn write_nodes(out: &mut String, nodes: &[Node]) {
    for node in nodes {
        match node {
            Node::Literal { text, .. } => {
                for c in text.chars() {
                    if c == '{' {
                        out.push_str("{{");
                    } else {
                        out.push(c);
                    }
                }
            }
            Node::Placeholder { path, filters, .. } => {
                out.push('{');
                out.push_str(&path.to_string());
                for f in filters {
                    out.push('|');
                    out.push_str(f.name());
                }
                out.push('}');
            }
            Node::For { var, path, body, .. } => {
                out.push_str(&format!("{{#for {var} in {path}}}"));
                write_nodes(out, body);
                out.push_str("{/for}");
            }
            Node::If { path, body, .. } => {
                out.push_str(&format!("{{#if {path}}}"));
                write_nodes(out, body);
                out.push_str("{/if}");
            }
        }
    }
}
