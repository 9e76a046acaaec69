use std::fmt;

use thiserror::Error;

use super::{Filter, Node, Path, Pos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnclosedBlock(&'static str),
    UnexpectedClose(String),
    UnterminatedTag,
    UnknownFilter(String),
    UnknownDirective(String),
    EmptyPath,
    BadIdentifier(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnclosedBlock(kind) => write!(f, "unclosed block {{#{kind}}}"),
            ParseErrorKind::UnexpectedClose(tag) => write!(f, "unexpected {{/{tag}}}"),
            ParseErrorKind::UnterminatedTag => f.write_str("unterminated tag"),
            ParseErrorKind::UnknownFilter(name) => write!(f, "unknown filter {name:?}"),
            ParseErrorKind::UnknownDirective(name) => write!(f, "unknown directive {name:?}"),
            ParseErrorKind::EmptyPath => f.write_str("empty path"),
            ParseErrorKind::BadIdentifier(raw) => write!(f, "bad identifier {raw:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {pos}: {kind}")]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ParseErrorKind,
}

struct Frame {
    block: Option<(Block, Pos)>,
    nodes: Vec<Node>,
}

enum Block {
    For { var: String, path: Path },
    If { path: Path },
}

impl Block {
    fn name(&self) -> &'static str {
        match self {
            Block::For { .. } => "for",
            Block::If { .. } => "if",
        }
    }
}

/// Parses template source into a node list.
pub fn parse_template(source: &str) -> Result<Vec<Node>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut stack = vec![Frame {
        block: None,
        nodes: Vec::new(),
    }];
    let mut literal = String::new();
    let mut literal_pos = Pos { line: 1, column: 1 };
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;

    let flush = |literal: &mut String, pos: Pos, frame: &mut Frame| {
        if !literal.is_empty() {
            frame.nodes.push(Node::Literal {
                text: std::mem::take(literal),
                pos,
            });
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let here = Pos { line, column };
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            if literal.is_empty() {
                literal_pos = here;
            }
            literal.push('{');
            i += 2;
            column += 2;
            continue;
        }
        if c != '{' {
            if literal.is_empty() {
                literal_pos = here;
            }
            literal.push(c);
            i += 1;
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            continue;
        }

        // tag
        let close = chars[i + 1..]
            .iter()
            .position(|&ch| ch == '}' || ch == '{' || ch == '\n')
            .map(|off| i + 1 + off)
            .filter(|&end| chars[end] == '}')
            .ok_or(ParseError {
                pos: here,
                kind: ParseErrorKind::UnterminatedTag,
            })?;
        let inner: String = chars[i + 1..close].iter().collect();
        flush(&mut literal, literal_pos, stack.last_mut().unwrap());
        let err = |kind| ParseError { pos: here, kind };

        if let Some(directive) = inner.strip_prefix('#') {
            let mut words = directive.split(' ');
            match words.next() {
                Some("for") => {
                    let parts: Vec<&str> = words.collect();
                    let [var, "in", path] = parts[..] else {
                        return Err(err(ParseErrorKind::UnknownDirective(inner.clone())));
                    };
                    let var = identifier(var).ok_or_else(|| err(ParseErrorKind::BadIdentifier(var.into())))?;
                    let path = parse_path(path).map_err(err)?;
                    stack.push(Frame {
                        block: Some((Block::For { var, path }, here)),
                        nodes: Vec::new(),
                    });
                }
                Some("if") => {
                    let parts: Vec<&str> = words.collect();
                    let [path] = parts[..] else {
                        return Err(err(ParseErrorKind::UnknownDirective(inner.clone())));
                    };
                    let path = parse_path(path).map_err(err)?;
                    stack.push(Frame {
                        block: Some((Block::If { path }, here)),
                        nodes: Vec::new(),
                    });
                }
                _ => return Err(err(ParseErrorKind::UnknownDirective(inner.clone()))),
            }
        } else if let Some(tag) = inner.strip_prefix('/') {
            let open = stack.last().and_then(|f| f.block.as_ref()).map(|(b, _)| b.name());
            if open != Some(tag) {
                return Err(err(ParseErrorKind::UnexpectedClose(tag.to_owned())));
            }
            let frame = stack.pop().unwrap();
            let (block, pos) = frame.block.unwrap();
            let node = match block {
                Block::For { var, path } => Node::For {
                    var,
                    path,
                    body: frame.nodes,
                    pos,
                },
                Block::If { path } => Node::If {
                    path,
                    body: frame.nodes,
                    pos,
                },
            };
            stack.last_mut().unwrap().nodes.push(node);
        } else {
            let mut pieces = inner.split('|');
            let path = parse_path(pieces.next().unwrap_or_default()).map_err(err)?;
            let filters = pieces
                .map(|name| Filter::from_name(name).ok_or_else(|| err(ParseErrorKind::UnknownFilter(name.into()))))
                .collect::<Result<Vec<_>, _>>()?;
            stack.last_mut().unwrap().nodes.push(Node::Placeholder {
                path,
                filters,
                pos: here,
            });
        }
        column += close + 1 - i;
        i = close + 1;
    }

    flush(&mut literal, literal_pos, stack.last_mut().unwrap());
    if stack.len() > 1 {
        let (block, pos) = stack.pop().unwrap().block.unwrap();
        return Err(ParseError {
            pos,
            kind: ParseErrorKind::UnclosedBlock(block.name()),
        });
    }
    Ok(stack.pop().unwrap().nodes)
}

fn identifier(raw: &str) -> Option<String> {
    let mut chars = raw.chars();
    let first = chars.next()?;
    let ok = (first.is_ascii_alphabetic() || first == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    ok.then(|| raw.to_owned())
}

fn parse_path(raw: &str) -> Result<Path, ParseErrorKind> {
    if raw.is_empty() {
        return Err(ParseErrorKind::EmptyPath);
    }
    raw.split('.')
        .map(|seg| identifier(seg).ok_or_else(|| ParseErrorKind::BadIdentifier(raw.to_owned())))
        .collect::<Result<Vec<_>, _>>()
        .map(Path::from_segments)
}
