use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use super::{format_percent, Filter, Node, Path, Template};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("render error: missing path {0}")]
    MissingPath(String),
    #[error("render error: filter {filter} cannot apply to {found} at {path}")]
    FilterMismatch {
        path: String,
        filter: &'static str,
        found: &'static str,
    },
    #[error("render error: {path} is {found}, expected {expected}")]
    TypeMismatch {
        path: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("render error: {path}: {reason}")]
    Format { path: String, reason: String },
}

/// Render context value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Number(f64),
    Text(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn map() -> Self {
        Value::Map(BTreeMap::new())
    }

    /// Builder-style insert; no-op on non-map values.
    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        if let Value::Map(m) = &mut self {
            m.insert(key.to_owned(), value.into());
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Map(m) => m.get(key),
            _ => None,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "integer",
            Value::Number(_) => "number",
            Value::Text(_) => "text",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }

    fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Number(n) => *n != 0.0,
            Value::Text(s) => !s.is_empty(),
            Value::List(l) => !l.is_empty(),
            Value::Map(m) => !m.is_empty(),
        }
    }
}

macro_rules! value_from {
    ($($ty:ty => $variant:ident via $conv:expr),* $(,)?) => {
        $(impl From<$ty> for Value {
            fn from(v: $ty) -> Self {
                Value::$variant($conv(v))
            }
        })*
    };
}

value_from!(
    bool => Bool via std::convert::identity,
    i64 => Int via std::convert::identity,
    u64 => Int via |v: u64| v as i64,
    usize => Int via |v: usize| v as i64,
    f64 => Number via std::convert::identity,
    String => Text via std::convert::identity,
    &str => Text via str::to_owned,
    Vec<Value> => List via std::convert::identity,
);

struct Scope<'a> {
    root: &'a Value,
    frames: Vec<(&'a str, &'a Value)>,
}

impl<'a> Scope<'a> {
    fn lookup(&self, path: &Path) -> Option<&'a Value> {
        let (head, rest) = path.segments().split_first()?;
        let mut current = self
            .frames
            .iter()
            .rev()
            .find(|(name, _)| name == head)
            .map(|(_, v)| *v)
            .or_else(|| self.root.get(head))?;
        for seg in rest {
            current = current.get(seg)?;
        }
        Some(current)
    }
}

/// Renders `template` against `context`. Output is a pure function of both.
pub fn render(template: &Template, context: &Value) -> Result<String, RenderError> {
    let mut out = String::new();
    let mut scope = Scope {
        root: context,
        frames: Vec::new(),
    };
    render_nodes(&template.body, &mut scope, &mut out)?;
    Ok(out)
}

fn render_nodes<'a>(nodes: &'a [Node], scope: &mut Scope<'a>, out: &mut String) -> Result<(), RenderError> {
    for node in nodes {
        match node {
            Node::Literal { text, .. } => out.push_str(text),
            Node::Placeholder { path, filters, .. } => {
                let value = scope
                    .lookup(path)
                    .ok_or_else(|| RenderError::MissingPath(path.to_string()))?;
                let value = filters
                    .iter()
                    .try_fold(value.clone(), |v, f| apply_filter(*f, v, path))?;
                write_scalar(&value, path, out)?;
            }
            Node::For { var, path, body, .. } => {
                let list = scope
                    .lookup(path)
                    .ok_or_else(|| RenderError::MissingPath(path.to_string()))?;
                let Value::List(items) = list else {
                    return Err(RenderError::TypeMismatch {
                        path: path.to_string(),
                        expected: "list",
                        found: list.type_name(),
                    });
                };
                for item in items {
                    scope.frames.push((var.as_str(), item));
                    let result = render_nodes(body, scope, out);
                    scope.frames.pop();
                    result?;
                }
            }
            Node::If { path, body, .. } => {
                if scope.lookup(path).is_some_and(Value::truthy) {
                    render_nodes(body, scope, out)?;
                }
            }
        }
    }
    Ok(())
}

fn apply_filter(filter: Filter, value: Value, path: &Path) -> Result<Value, RenderError> {
    let mismatch = |v: &Value| RenderError::FilterMismatch {
        path: path.to_string(),
        filter: filter.name(),
        found: v.type_name(),
    };
    match (filter, &value) {
        (Filter::Pct, Value::Number(n)) => format_pct(*n, path),
        (Filter::Pct, Value::Int(i)) => format_pct(*i as f64, path),
        (Filter::Upper, Value::Text(s)) => Ok(Value::Text(s.to_uppercase())),
        (Filter::Int, Value::Int(_)) => Ok(value),
        (Filter::Int, Value::Number(n)) if n.is_finite() => Ok(Value::Int(n.round() as i64)),
        _ => Err(mismatch(&value)),
    }
}

fn format_pct(n: f64, path: &Path) -> Result<Value, RenderError> {
    format_percent(n).map(Value::Text).map_err(|e| RenderError::Format {
        path: path.to_string(),
        reason: e.to_string(),
    })
}

fn write_scalar(value: &Value, path: &Path, out: &mut String) -> Result<(), RenderError> {
    match value {
        Value::Bool(b) => write!(out, "{b}").unwrap(),
        Value::Int(i) => write!(out, "{i}").unwrap(),
        Value::Number(n) => write!(out, "{n}").unwrap(),
        Value::Text(s) => out.push_str(s),
        other => {
            return Err(RenderError::TypeMismatch {
                path: path.to_string(),
                expected: "scalar",
                found: other.type_name(),
            })
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Level;

    fn tmpl(src: &str) -> Template {
        Template::new(Level::Sensor, None, src).unwrap()
    }

    #[test]
    fn percent_placeholder() {
        let ctx = Value::map().with("a", 0.53);
        assert_eq!(render(&tmpl("avg {a|pct}"), &ctx).unwrap(), "avg 53%");
    }

    #[test]
    fn loops_and_conditionals() {
        let ctx = Value::map()
            .with("empty", Vec::<Value>::new())
            .with(
                "ts",
                vec![
                    Value::map().with("term", "insanity"),
                    Value::map().with("term", "attack"),
                ],
            )
            .with("yes", true)
            .with("no", "");
        assert_eq!(render(&tmpl("{#for t in empty}x{/for}"), &ctx).unwrap(), "");
        assert_eq!(
            render(&tmpl("{#for t in ts}[{t.term|upper}]{/for}"), &ctx).unwrap(),
            "[INSANITY][ATTACK]"
        );
        assert_eq!(render(&tmpl("{#if yes}Y{/if}{#if no}N{/if}{#if absent}A{/if}"), &ctx).unwrap(), "Y");
    }

    #[test]
    fn missing_path_is_an_error() {
        let ctx = Value::map().with("a", Value::map());
        assert_eq!(
            render(&tmpl("x {a.b} y"), &ctx),
            Err(RenderError::MissingPath("a.b".into()))
        );
        assert_eq!(
            render(&tmpl("{#for t in nope}{/for}"), &ctx),
            Err(RenderError::MissingPath("nope".into()))
        );
    }

    #[test]
    fn filter_type_mismatch() {
        let ctx = Value::map().with("s", "text").with("n", 2.6).with("big", 1.5);
        assert!(matches!(render(&tmpl("{s|pct}"), &ctx), Err(RenderError::FilterMismatch { .. })));
        assert!(matches!(render(&tmpl("{n|upper}"), &ctx), Err(RenderError::FilterMismatch { .. })));
        assert!(matches!(render(&tmpl("{big|pct}"), &ctx), Err(RenderError::Format { .. })));
        assert_eq!(render(&tmpl("{n|int}"), &ctx).unwrap(), "3");
        assert!(matches!(render(&tmpl("{s}{s.x}"), &ctx), Err(RenderError::MissingPath(_))));
    }

    #[test]
    fn loop_variable_shadows_root() {
        let ctx = Value::map()
            .with("t", "root")
            .with("xs", vec![Value::from("inner")]);
        assert_eq!(render(&tmpl("{#for t in xs}{t}{/for} {t}"), &ctx).unwrap(), "inner root");
    }
}
