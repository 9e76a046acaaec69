use std::collections::{BTreeMap, BTreeSet};

use super::{Node, Path, Pos, Template};
use crate::model::{Level, SensorKind};

/// Controlled vocabulary of context paths.
///
/// File format: one path per line, `#` comments, and optional section
/// headers `[<level>.<kind|any>]` scoping the paths that follow. Paths before
/// the first header (or under `[*]`) are allowed everywhere.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    global: BTreeSet<String>,
    scoped: BTreeMap<(Level, Option<SensorKind>), BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateViolation {
    pub template: String,
    pub path: String,
    pub pos: Pos,
}

impl std::fmt::Display for TemplateViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: unknown path {}", self.template, self.pos, self.path)
    }
}

impl Vocabulary {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut vocab = Vocabulary::default();
        let mut section: Option<(Level, Option<SensorKind>)> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = if header == "*" {
                    None
                } else {
                    Some(parse_slot(header).ok_or_else(|| format!("line {}: bad section [{header}]", n + 1))?)
                };
                continue;
            }
            if line.split('.').any(|s| s.is_empty()) {
                return Err(format!("line {}: bad path {line:?}", n + 1));
            }
            match section {
                None => vocab.global.insert(line.to_owned()),
                Some(slot) => vocab.scoped.entry(slot).or_default().insert(line.to_owned()),
            };
        }
        Ok(vocab)
    }

    /// Paths allowed for templates in the given slot.
    pub fn allowed(&self, level: Level, sensor_kind: Option<SensorKind>) -> BTreeSet<&str> {
        let mut set: BTreeSet<&str> = self.global.iter().map(String::as_str).collect();
        let mut add = |slot| {
            if let Some(paths) = self.scoped.get(&slot) {
                set.extend(paths.iter().map(String::as_str));
            }
        };
        add((level, None));
        if sensor_kind.is_some() {
            add((level, sensor_kind));
        }
        set
    }
}

pub(super) fn parse_slot(raw: &str) -> Option<(Level, Option<SensorKind>)> {
    let (level, kind) = raw.split_once('.')?;
    let level = Level::from_name(level)?;
    let kind = match kind {
        "any" => None,
        other => Some(SensorKind::from_name(other)?),
    };
    Some((level, kind))
}

/// Reports every placeholder, loop or condition path outside the vocabulary
/// for the template's slot. Loop variables are expanded to the list path, so
/// `{t.term}` inside `{#for t in triggers}` is checked as `triggers.term`.
pub fn validate_template(template: &Template, vocabulary: &Vocabulary) -> Vec<TemplateViolation> {
    let allowed = vocabulary.allowed(template.level, template.sensor_kind);
    let mut report = Vec::new();
    let mut bindings: Vec<(String, String)> = Vec::new();
    walk(&template.body, &mut bindings, &mut |path, pos| {
        if !allowed.contains(path.as_str()) {
            report.push(TemplateViolation {
                template: template.name.clone(),
                path,
                pos,
            });
        }
    });
    report
}

fn canonical(path: &Path, bindings: &[(String, String)]) -> String {
    let segs = path.segments();
    match bindings.iter().rev().find(|(var, _)| *var == segs[0]) {
        Some((_, list)) if segs.len() == 1 => list.clone(),
        Some((_, list)) => format!("{list}.{}", segs[1..].join(".")),
        None => path.to_string(),
    }
}

fn walk(nodes: &[Node], bindings: &mut Vec<(String, String)>, visit: &mut impl FnMut(String, Pos)) {
    for node in nodes {
        match node {
            Node::Literal { .. } => {}
            Node::Placeholder { path, pos, .. } => visit(canonical(path, bindings), *pos),
            Node::If { path, body, pos } => {
                visit(canonical(path, bindings), *pos);
                walk(body, bindings, visit);
            }
            Node::For { var, path, body, pos } => {
                let list = canonical(path, bindings);
                visit(list.clone(), *pos);
                bindings.push((var.clone(), list));
                walk(body, bindings, visit);
                bindings.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VOCAB: &str = "# shared\nsensor.name\n[sensor.scorer]\nsignal.averages.affect\n[trigger.any]\ntriggers\ntriggers.term\n";

    #[test]
    fn scoped_paths() {
        let v = Vocabulary::parse(VOCAB).unwrap();
        let t = Template::new(Level::Sensor, Some(SensorKind::Scorer), "{sensor.name} {signal.averages.affect|pct}")
            .unwrap();
        assert!(validate_template(&t, &v).is_empty());

        let t = Template::new(Level::Sensor, Some(SensorKind::Counter), "{signal.averages.affect}").unwrap();
        assert_eq!(validate_template(&t, &v).len(), 1);
    }

    #[test]
    fn unknown_path_reported() {
        let v = Vocabulary::parse(VOCAB).unwrap();
        let t = Template::new(Level::Sensor, Some(SensorKind::Scorer), "{sensor.vibe}").unwrap();
        let report = validate_template(&t, &v);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].path, "sensor.vibe");
        assert_eq!(report[0].to_string(), "sensor.scorer:1:1: unknown path sensor.vibe");
    }

    #[test]
    fn loop_variables_expand() {
        let v = Vocabulary::parse(VOCAB).unwrap();
        let t = Template::new(Level::Trigger, None, "{#for t in triggers}{t.term}{t.span}{/for}").unwrap();
        let report = validate_template(&t, &v);
        assert_eq!(report.iter().map(|r| r.path.as_str()).collect::<Vec<_>>(), vec!["triggers.span"]);
    }

    #[test]
    fn bad_files() {
        assert!(Vocabulary::parse("[nonsense]\n").is_err());
        assert!(Vocabulary::parse("a..b\n").is_err());
    }
}
