use std::collections::BTreeSet;

use roxmltree::Node;

use super::xml::{self, elements, only, req, root, schema, version, Writer};
use super::ScenarioError;
use crate::dependency::{DependencySet, LabelDependency, LabelPair, Stage};
use crate::model::QualifiedLabel;
use crate::verification::{Conflict, ConflictKind};

fn qualified(node: Node, attr: &str) -> Result<QualifiedLabel, ScenarioError> {
    let v = req(node, attr)?;
    QualifiedLabel::parse(v).ok_or_else(|| schema(node, format!("`{v}` is not a protocol:label reference")))
}

pub(crate) fn dep(node: Node) -> Result<LabelDependency, ScenarioError> {
    if !node.has_tag_name("dep") {
        return Err(schema(node, "expected <dep>"));
    }
    Ok(LabelDependency::new(qualified(node, "dominant")?, qualified(node, "dominated")?))
}

pub(crate) fn conflict(node: Node) -> Result<Conflict, ScenarioError> {
    let k = req(node, "kind")?;
    let kind = ConflictKind::parse(k).ok_or_else(|| schema(node, format!("unknown conflict kind `{k}`")))?;
    let deps: Vec<LabelDependency> = elements(node).map(dep).collect::<Result<_, _>>()?;
    let [first, second] = <[LabelDependency; 2]>::try_from(deps)
        .map_err(|_| schema(node, "a conflict holds exactly two <dep> elements"))?;
    Ok(Conflict { kind, first, second })
}

/// Items of a `<dependencies>` element for the given stage.
pub(crate) fn parse_items(node: Node, stage: Stage) -> Result<DependencySet, ScenarioError> {
    let expected = match stage {
        Stage::Candidates => "pair",
        Stage::Selected | Stage::Extended => "dep",
        Stage::Deadlocked => "conflict",
    };
    for c in elements(node) {
        if !c.has_tag_name(expected) {
            return Err(schema(
                c,
                format!("a {} set holds <{expected}> elements only", stage.as_str()),
            ));
        }
    }
    Ok(match stage {
        Stage::Candidates => DependencySet::Candidates(
            elements(node)
                .map(|p| {
                    Ok(LabelPair {
                        left: qualified(p, "left")?,
                        right: qualified(p, "right")?,
                    })
                })
                .collect::<Result<_, ScenarioError>>()?,
        ),
        Stage::Selected => DependencySet::Selected(elements(node).map(dep).collect::<Result<_, _>>()?),
        Stage::Extended => DependencySet::Extended(elements(node).map(dep).collect::<Result<_, _>>()?),
        Stage::Deadlocked => DependencySet::Deadlocked(elements(node).map(conflict).collect::<Result<_, _>>()?),
    })
}

pub(crate) fn stage_of(node: Node) -> Result<Stage, ScenarioError> {
    let s = req(node, "stage")?;
    Stage::parse(s).ok_or_else(|| schema(node, format!("unknown stage `{s}`")))
}

pub(crate) fn write_dep(w: &mut Writer, d: &LabelDependency) {
    let (a, b) = (d.dominant.to_string(), d.dominated.to_string());
    w.empty("dep", &[("dominant", &a), ("dominated", &b)]);
}

pub(crate) fn write_conflict(w: &mut Writer, c: &Conflict) {
    w.open("conflict", &[("kind", c.kind.as_str())]);
    write_dep(w, &c.first);
    write_dep(w, &c.second);
    w.close("conflict");
}

pub(crate) fn write_items(w: &mut Writer, ds: &DependencySet, attrs: &[(&str, &str)]) {
    let mut all = attrs.to_vec();
    all.push(("stage", ds.stage().as_str()));
    if ds.is_empty() {
        w.empty("dependencies", &all);
        return;
    }
    w.open("dependencies", &all);
    match ds {
        DependencySet::Candidates(ps) => {
            for p in ps {
                let (l, r) = (p.left.to_string(), p.right.to_string());
                w.empty("pair", &[("left", &l), ("right", &r)]);
            }
        }
        DependencySet::Selected(ds) | DependencySet::Extended(ds) => ds.iter().for_each(|d| write_dep(w, d)),
        DependencySet::Deadlocked(cs) => cs.iter().for_each(|c| write_conflict(w, c)),
    }
    w.close("dependencies");
}

/// `.deps.xml` document.
pub fn serialize_dependency_set(ds: &DependencySet) -> String {
    let mut w = Writer::new();
    write_items(&mut w, ds, &[("version", super::FORMAT_VERSION)]);
    w.finish()
}

/// Line-oriented form: a `# stage:` header, then one item per line.
pub fn dependency_set_to_text(ds: &DependencySet) -> String {
    let mut s = format!("# stage: {}\n", ds.stage().as_str());
    match ds {
        DependencySet::Candidates(ps) => ps.iter().for_each(|p| s.push_str(&format!("{} {}\n", p.left, p.right))),
        DependencySet::Selected(ds) | DependencySet::Extended(ds) => {
            ds.iter().for_each(|d| s.push_str(&format!("{d}\n")))
        }
        DependencySet::Deadlocked(cs) => cs
            .iter()
            .for_each(|c| s.push_str(&format!("{} {} ; {}\n", c.kind, c.first, c.second))),
    }
    s
}

fn text_error(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        line: line as u32,
        column: 1,
        element: "line".into(),
        message: message.into(),
    }
}

fn parse_text(text: &str) -> Result<DependencySet, ScenarioError> {
    let mut stage = None;
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('#') {
            if let Some(s) = h.trim().strip_prefix("stage:") {
                if stage.is_some() {
                    return Err(text_error(i + 1, "duplicate stage header"));
                }
                stage = Some(Stage::parse(s.trim()).ok_or_else(|| text_error(i + 1, format!("unknown stage `{}`", s.trim())))?);
            }
            continue;
        }
        if !line.is_empty() {
            lines.push((i + 1, line));
        }
    }
    let stage = stage.ok_or_else(|| text_error(1, "missing `# stage:` header"))?;
    let dep_line = |n: usize, l: &str| {
        LabelDependency::parse(l).ok_or_else(|| text_error(n, format!("expected `p:l > q:m`, got `{l}`")))
    };
    Ok(match stage {
        Stage::Candidates => DependencySet::Candidates(
            lines
                .iter()
                .map(|&(n, l)| {
                    let mut it = l.split_whitespace();
                    match (
                        it.next().and_then(QualifiedLabel::parse),
                        it.next().and_then(QualifiedLabel::parse),
                        it.next(),
                    ) {
                        (Some(left), Some(right), None) => Ok(LabelPair { left, right }),
                        _ => Err(text_error(n, format!("expected `p:l q:m`, got `{l}`"))),
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
        Stage::Selected | Stage::Extended => {
            let set: BTreeSet<LabelDependency> =
                lines.iter().map(|&(n, l)| dep_line(n, l)).collect::<Result<_, _>>()?;
            if stage == Stage::Selected {
                DependencySet::Selected(set)
            } else {
                DependencySet::Extended(set)
            }
        }
        Stage::Deadlocked => DependencySet::Deadlocked(
            lines
                .iter()
                .map(|&(n, l)| {
                    let (k, rest) = l.split_once(' ').ok_or_else(|| text_error(n, "expected a conflict kind"))?;
                    let kind = ConflictKind::parse(k).ok_or_else(|| text_error(n, format!("unknown conflict kind `{k}`")))?;
                    let (a, b) = rest.split_once(';').ok_or_else(|| text_error(n, "expected two dependencies"))?;
                    Ok(Conflict {
                        kind,
                        first: dep_line(n, a.trim())?,
                        second: dep_line(n, b.trim())?,
                    })
                })
                .collect::<Result<_, ScenarioError>>()?,
        ),
    })
}

/// Parses either form: XML when the input starts with `<`, text otherwise.
pub fn parse_dependency_set(text: &str) -> Result<DependencySet, ScenarioError> {
    if !text.trim_start().starts_with('<') {
        return parse_text(text);
    }
    let doc = xml::parse(text)?;
    let r = root(&doc, "dependencies")?;
    version(r, super::FORMAT_VERSION)?;
    only(r, &["pair", "dep", "conflict"])?;
    parse_items(r, stage_of(r)?)
}
