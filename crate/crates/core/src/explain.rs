//! Hierarchical explanations built by walking id tags from a fused warning
//! down to the data items (or method descriptions) that justify it.
//!
//! ```text
//! FUSED ─ WARNING ─ SENSOR ─┬─ TRIGGER ─┬─ DATA
//!                           │           └─ METHOD   (scoring model, when named)
//!                           └─ METHOD               (non-traceable sensors only)
//! ```
//!
//! Every node except DATA and METHOD leaves is justified by its children.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::id::{mint_id, EntityKind, IdTag};
use crate::model::{
    utc_seconds, DataItem, FusedWarning, Level, MethodReference, SensorDescriptor, SensorSignal,
    Trigger, Warning,
};
use crate::store::{EntityStore, StoreError};
use crate::template::{render, RenderError, TemplateError, TemplateSet, Value};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("corrupt store: {0}")]
    CorruptStore(#[from] StoreError),
    #[error(transparent)]
    MissingTemplate(#[from] TemplateError),
    #[error("{template}: {source}")]
    Render { template: String, source: RenderError },
    #[error("sensor signal {0} has neither triggers nor consumed data to justify it")]
    Unjustified(IdTag),
    #[error("sensor {0} is not causally traceable but has no method note")]
    MissingMethod(IdTag),
    #[error("not found: {0}")]
    NotFound(IdTag),
    #[error("malformed explanation record: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Justification {
    Causal,
    Methodological,
}

/// What a node explains: a stored entity, or a method by model name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Subject {
    Entity(IdTag),
    Method(String),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Entity(id) => write!(f, "{id}"),
            Subject::Method(name) => write!(f, "method:{name}"),
        }
    }
}

impl FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("method:") {
            Some(name) => Ok(Subject::Method(name.to_owned())),
            None => s.parse().map(Subject::Entity).map_err(|e| e.to_string()),
        }
    }
}

impl Serialize for Subject {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationNode {
    pub id: IdTag,
    pub level: Level,
    pub subject: Subject,
    pub text: String,
    pub justification: Justification,
    pub child_ids: Vec<IdTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationTree {
    pub root_id: IdTag,
    pub fused_id: IdTag,
    /// Depth-first, children in order.
    pub nodes: IndexMap<IdTag, ExplanationNode>,
}

struct Draft {
    level: Level,
    subject: Subject,
    text: String,
    justification: Justification,
    children: Vec<Draft>,
}

struct Builder<'a> {
    store: &'a EntityStore,
    templates: &'a TemplateSet,
}

fn window_value(start: &chrono::DateTime<chrono::Utc>, end: &chrono::DateTime<chrono::Utc>) -> Value {
    Value::map()
        .with("start", utc_seconds::format(start))
        .with("end", utc_seconds::format(end))
}

fn fused_value(f: &FusedWarning) -> Value {
    Value::map()
        .with("id", f.id.to_string())
        .with("target", f.target.as_str())
        .with("threat_level", f.threat_level.as_str())
        .with("confidence", f.confidence)
        .with("member_count", f.warning_ids.len())
        .with("plural", f.warning_ids.len() != 1)
        .with("window", window_value(&f.window.start, &f.window.end))
}

fn warning_value(w: &Warning) -> Value {
    Value::map()
        .with("id", w.id.to_string())
        .with("target", w.target.as_str())
        .with("threat_level", w.threat_level.as_str())
        .with("confidence", w.confidence)
        .with("issued_at", utc_seconds::format(&w.issued_at))
}

fn sensor_value(s: &SensorDescriptor) -> Value {
    Value::map()
        .with("id", s.id.to_string())
        .with("name", s.name.as_str())
        .with("kind", s.kind.as_str())
        .with("mechanism", s.kind.mechanism())
}

fn signal_value(s: &SensorSignal) -> Value {
    let items = s.consumed_ids.iter().filter(|c| c.kind() == EntityKind::Data).count();
    let mut v = Value::map()
        .with("id", s.id.to_string())
        .with("target", s.target.as_str())
        .with("count", s.count)
        .with("items", items)
        .with("plural_items", items != 1);
    if let Some(w) = s.window {
        v = v.with("window", window_value(&w.start, &w.end));
    }
    if let Some(a) = s.averages {
        v = v.with(
            "averages",
            Value::map()
                .with("affect", a.affect)
                .with("intensity", a.intensity)
                .with("outrage", a.outrage)
                .with("n", a.n),
        );
    }
    v
}

fn trigger_value(t: &Trigger, index: usize) -> Value {
    let mut v = Value::map()
        .with("index", index)
        .with("term", t.term.as_str())
        .with("span", Value::map().with("start", t.span.start).with("end", t.span.end));
    if let Some(s) = t.scores {
        v = v.with(
            "scores",
            Value::map()
                .with("affect", s.affect)
                .with("intensity", s.intensity)
                .with("outrage", s.outrage),
        );
    }
    v
}

fn data_value(d: &DataItem) -> Value {
    Value::map()
        .with("id", d.id.to_string())
        .with("kind", d.kind.as_str())
        .with("source", d.source.as_str())
        .with("timestamp", utc_seconds::format(&d.timestamp))
        .with("text", d.text.as_str())
}

fn method_value(m: &MethodReference, per_trigger: bool) -> Value {
    Value::map()
        .with("per_trigger", per_trigger)
        .with("general", !per_trigger)
        .with("model_name", m.model_name.as_str())
        .with("citation", m.citation.as_str())
        .with("training_data_note", m.training_data_note.as_str())
}

impl Builder<'_> {
    fn text(&self, level: Level, sensor: Option<&SensorDescriptor>, ctx: &Value) -> Result<String, ExplainError> {
        let template = self.templates.get(level, sensor.map(|s| s.kind))?;
        render(template, ctx).map_err(|source| ExplainError::Render {
            template: template.name.clone(),
            source,
        })
    }

    fn fused(&self, fused: &FusedWarning) -> Result<Draft, ExplainError> {
        let ctx = Value::map().with("fused", fused_value(fused));
        let text = self.text(Level::Fused, None, &ctx)?;
        let children = fused
            .warning_ids
            .iter()
            .map(|id| self.warning(fused, self.store.warning(id)?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Draft {
            level: Level::Fused,
            subject: Subject::Entity(fused.id.clone()),
            text,
            justification: Justification::Causal,
            children,
        })
    }

    fn warning(&self, fused: &FusedWarning, warning: &Warning) -> Result<Draft, ExplainError> {
        let signal = self.store.signal(&warning.signal_id)?;
        let sensor = self.store.sensor(&signal.sensor_id)?;
        let ctx = Value::map()
            .with("fused", fused_value(fused))
            .with("warning", warning_value(warning))
            .with("sensor", sensor_value(sensor))
            .with("signal", signal_value(signal));
        Ok(Draft {
            level: Level::Warning,
            subject: Subject::Entity(warning.id.clone()),
            text: self.text(Level::Warning, Some(sensor), &ctx)?,
            justification: Justification::Causal,
            children: vec![self.sensor(warning, signal, sensor)?],
        })
    }

    fn sensor(&self, warning: &Warning, signal: &SensorSignal, sensor: &SensorDescriptor) -> Result<Draft, ExplainError> {
        let ctx = Value::map()
            .with("warning", warning_value(warning))
            .with("sensor", sensor_value(sensor))
            .with("signal", signal_value(signal));

        let children = if !sensor.causal_traceable {
            let method = sensor
                .method_note
                .as_ref()
                .ok_or_else(|| ExplainError::MissingMethod(sensor.id.clone()))?;
            vec![self.method(sensor, method, false)?]
        } else if !signal.triggers.is_empty() {
            signal
                .triggers
                .iter()
                .enumerate()
                .map(|(i, t)| self.trigger(sensor, signal, t, i + 1))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let data: Vec<Draft> = signal
                .consumed_ids
                .iter()
                .filter(|c| c.kind() == EntityKind::Data)
                .map(|id| self.data(sensor, self.store.data(id)?, None))
                .collect::<Result<_, _>>()?;
            if data.is_empty() {
                return Err(ExplainError::Unjustified(signal.id.clone()));
            }
            data
        };

        Ok(Draft {
            level: Level::Sensor,
            subject: Subject::Entity(sensor.id.clone()),
            text: self.text(Level::Sensor, Some(sensor), &ctx)?,
            justification: Justification::Causal,
            children,
        })
    }

    fn trigger(
        &self,
        sensor: &SensorDescriptor,
        signal: &SensorSignal,
        trigger: &Trigger,
        index: usize,
    ) -> Result<Draft, ExplainError> {
        let item = self.store.data(&trigger.data_id)?;
        let tv = trigger_value(trigger, index);
        let ctx = Value::map()
            .with("sensor", sensor_value(sensor))
            .with("signal", signal_value(signal))
            .with("trigger", tv.clone())
            .with("data", data_value(item));
        let mut children = vec![self.data(sensor, item, Some(tv))?];
        if let Some(method) = &trigger.method {
            children.push(self.method(sensor, method, true)?);
        }
        Ok(Draft {
            level: Level::Trigger,
            subject: Subject::Entity(trigger.data_id.clone()),
            text: self.text(Level::Trigger, Some(sensor), &ctx)?,
            justification: Justification::Causal,
            children,
        })
    }

    fn data(&self, sensor: &SensorDescriptor, item: &DataItem, trigger: Option<Value>) -> Result<Draft, ExplainError> {
        let mut ctx = Value::map().with("sensor", sensor_value(sensor)).with("data", data_value(item));
        if let Some(t) = trigger {
            ctx = ctx.with("trigger", t);
        }
        Ok(Draft {
            level: Level::Data,
            subject: Subject::Entity(item.id.clone()),
            text: self.text(Level::Data, Some(sensor), &ctx)?,
            justification: Justification::Causal,
            children: Vec::new(),
        })
    }

    fn method(&self, sensor: &SensorDescriptor, method: &MethodReference, per_trigger: bool) -> Result<Draft, ExplainError> {
        let ctx = Value::map()
            .with("sensor", sensor_value(sensor))
            .with("method", method_value(method, per_trigger));
        Ok(Draft {
            level: Level::Method,
            subject: Subject::Method(method.model_name.clone()),
            text: self.text(Level::Method, Some(sensor), &ctx)?,
            justification: Justification::Methodological,
            children: Vec::new(),
        })
    }
}

fn node_id(fused_id: &IdTag, path: &str) -> IdTag {
    mint_id(EntityKind::Node, format!("{fused_id}/{path}").as_bytes()).expect("non-empty seed")
}

fn assign(draft: Draft, fused_id: &IdTag, path: String, out: &mut IndexMap<IdTag, ExplanationNode>) -> IdTag {
    let id = node_id(fused_id, &path);
    out.insert(
        id.clone(),
        ExplanationNode {
            id: id.clone(),
            level: draft.level,
            subject: draft.subject,
            text: draft.text,
            justification: draft.justification,
            child_ids: Vec::new(),
        },
    );
    let child_ids = draft
        .children
        .into_iter()
        .enumerate()
        .map(|(i, child)| {
            let child_path = if path.is_empty() { i.to_string() } else { format!("{path}/{i}") };
            assign(child, fused_id, child_path, out)
        })
        .collect();
    out.get_mut(&id).unwrap().child_ids = child_ids;
    id
}

/// Builds the explanation tree for one fused warning.
///
/// Node ids derive from the fused id and each node's position, so rebuilding
/// from the same store yields the same ids and text.
pub fn build_explanation(
    store: &EntityStore,
    fused_id: &IdTag,
    templates: &TemplateSet,
) -> Result<ExplanationTree, ExplainError> {
    let fused = store.fused(fused_id)?;
    let draft = Builder { store, templates }.fused(fused)?;
    let mut nodes = IndexMap::new();
    let root_id = assign(draft, fused_id, String::new(), &mut nodes);
    Ok(ExplanationTree {
        root_id,
        fused_id: fused_id.clone(),
        nodes,
    })
}

impl ExplanationTree {
    pub fn node(&self, id: &IdTag) -> Result<&ExplanationNode, ExplainError> {
        self.nodes.get(id).ok_or_else(|| ExplainError::NotFound(id.clone()))
    }

    pub fn root(&self) -> &ExplanationNode {
        &self.nodes[&self.root_id]
    }

    /// Nodes down to `max_depth` in depth-first order, with their depth.
    pub fn walk(&self, max_depth: usize) -> Vec<(usize, &ExplanationNode)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, &self.root_id)];
        while let Some((depth, id)) = stack.pop() {
            let node = &self.nodes[id];
            out.push((depth, node));
            if depth < max_depth {
                stack.extend(node.child_ids.iter().rev().map(|c| (depth + 1, c)));
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.walk(usize::MAX).iter().map(|(d, _)| *d).max().unwrap_or(0)
    }

    /// One record per node, depth-first.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<(), ExplainError> {
        for (_, node) in self.walk(usize::MAX) {
            serde_json::to_writer(&mut out, node).map_err(|e| ExplainError::Decode(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, ExplainError> {
        let mut nodes = IndexMap::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let node: ExplanationNode =
                serde_json::from_str(&line).map_err(|e| ExplainError::Decode(e.to_string()))?;
            nodes.insert(node.id.clone(), node);
        }
        let root = nodes
            .first()
            .map(|(_, n)| n)
            .ok_or_else(|| ExplainError::Decode("empty explanation".into()))?;
        let Subject::Entity(fused_id) = root.subject.clone() else {
            return Err(ExplainError::Decode("root does not explain a fused warning".into()));
        };
        let tree = ExplanationTree {
            root_id: root.id.clone(),
            fused_id,
            nodes,
        };
        if let Some(problem) = tree_violations(&tree).into_iter().next() {
            return Err(ExplainError::Decode(problem));
        }
        Ok(tree)
    }
}

/// Children of `node_id` in order; empty for leaves.
pub fn expand_node<'t>(tree: &'t ExplanationTree, node_id: &IdTag) -> Result<Vec<&'t ExplanationNode>, ExplainError> {
    let node = tree.node(node_id)?;
    node.child_ids.iter().map(|c| tree.node(c)).collect()
}

/// Indented text down to `depth` (root = 0); two spaces per level, one line
/// per text line.
pub fn flatten(tree: &ExplanationTree, depth: usize) -> String {
    let mut out = String::new();
    for (d, node) in tree.walk(depth) {
        for line in node.text.lines() {
            out.push_str(&"  ".repeat(d));
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

/// Structural problems: dangling children, shared children, level order,
/// unjustified nodes. Empty for every tree `build_explanation` returns.
pub fn tree_violations(tree: &ExplanationTree) -> Vec<String> {
    let mut problems = Vec::new();
    let mut parents: IndexMap<&IdTag, usize> = IndexMap::new();
    if !tree.nodes.contains_key(&tree.root_id) {
        problems.push(format!("root {} missing", tree.root_id));
        return problems;
    }
    for node in tree.nodes.values() {
        if node.child_ids.is_empty() && !matches!(node.level, Level::Data | Level::Method) {
            problems.push(format!("{} is a {:?} leaf", node.id, node.level));
        }
        match node.justification {
            Justification::Causal if node.child_ids.is_empty() && node.level != Level::Data => {
                problems.push(format!("{} is causal without children", node.id));
            }
            Justification::Methodological if !node.child_ids.is_empty() || node.level != Level::Method => {
                problems.push(format!("{} is methodological but not a METHOD leaf", node.id));
            }
            _ => {}
        }
        for child in &node.child_ids {
            *parents.entry(child).or_default() += 1;
            match tree.nodes.get(child) {
                None => problems.push(format!("{} has dangling child {child}", node.id)),
                Some(c) if c.level.rank() >= node.level.rank() => {
                    problems.push(format!("{} ({:?}) -> {} ({:?}) does not descend", node.id, node.level, c.id, c.level))
                }
                _ => {}
            }
        }
    }
    for (id, n) in parents {
        if n > 1 {
            problems.push(format!("{id} has {n} parents"));
        }
        if *id == tree.root_id {
            problems.push("root has a parent".into());
        }
    }
    if tree.walk(usize::MAX).len() != tree.nodes.len() {
        problems.push("unreachable nodes".into());
    }
    problems
}
