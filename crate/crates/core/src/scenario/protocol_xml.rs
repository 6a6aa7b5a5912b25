use std::collections::{BTreeMap, BTreeSet};

use roxmltree::Node;

use super::xml::{child, elements, flag, only, req, req_child, schema, Writer};
use super::ScenarioError;
use crate::model::{
    Argument, AttributeKind, ContextAttribute, ContextProfile, Direction, Expression, Label, LabelAction, OperationProfile,
    Parameter, Protocol, Signature, Transition, TypeName, Value, Variable, Visibility,
};

fn kind(node: Node) -> Result<AttributeKind, ScenarioError> {
    match req(node, "kind")? {
        "static" => Ok(AttributeKind::Static),
        "dynamic" => Ok(AttributeKind::Dynamic),
        k => Err(schema(node, format!("kind must be static or dynamic, got `{k}`"))),
    }
}

fn visibility(node: Node) -> Result<Visibility, ScenarioError> {
    match req(node, "visibility")? {
        "public" => Ok(Visibility::Public),
        "private" => Ok(Visibility::Private),
        v => Err(schema(node, format!("visibility must be public or private, got `{v}`"))),
    }
}

pub(crate) fn typed_value(node: Node, ty_attr: &str, value_attr: &str) -> Result<Value, ScenarioError> {
    let ty = TypeName::new(req(node, ty_attr)?);
    Value::parse_typed(&ty, req(node, value_attr)?).map_err(|m| schema(node, m))
}

fn context(node: Option<Node>) -> Result<ContextProfile, ScenarioError> {
    let mut attributes = Vec::new();
    if let Some(node) = node {
        only(node, &["contextAttr"])?;
        for a in elements(node) {
            attributes.push(ContextAttribute {
                name: req(a, "name")?.to_owned(),
                value: typed_value(a, "type", "value")?,
                kind: kind(a)?,
                visibility: visibility(a)?,
            });
        }
    }
    Ok(ContextProfile { attributes })
}

fn params(op: Node, tag: &str) -> Result<Vec<Parameter>, ScenarioError> {
    elements(op)
        .filter(|c| c.has_tag_name(tag))
        .map(|c| {
            Ok(Parameter {
                name: req(c, "name")?.to_owned(),
                ty: TypeName::new(req(c, "type")?),
            })
        })
        .collect()
}

fn operations(node: Option<Node>) -> Result<Vec<OperationProfile>, ScenarioError> {
    let Some(node) = node else { return Ok(Vec::new()) };
    only(node, &["operation"])?;
    elements(node)
        .map(|op| {
            only(op, &["input", "output", "return"])?;
            Ok(OperationProfile {
                name: req(op, "name")?.to_owned(),
                inputs: params(op, "input")?,
                outputs: params(op, "output")?,
                return_type: child(op, "return").map(|r| req(r, "type").map(TypeName::new)).transpose()?,
            })
        })
        .collect()
}

/// Types of the variables a protocol mentions: declared arguments and
/// context attributes.
fn variable_types(node: Node, ctx: &ContextProfile) -> Result<BTreeMap<String, TypeName>, ScenarioError> {
    let mut types = BTreeMap::new();
    for a in &ctx.attributes {
        types.insert(a.name.clone(), a.value.type_name());
    }
    if let Some(alpha) = child(node, "alphabet") {
        for l in elements(alpha) {
            for arg in elements(l).filter(|c| c.has_tag_name("arg")) {
                if let (Some(n), Some(t)) = (arg.attribute("name"), arg.attribute("type")) {
                    types.entry(n.to_owned()).or_insert_with(|| TypeName::new(t));
                }
            }
        }
    }
    Ok(types)
}

fn expression(node: Node, text: &str, types: &BTreeMap<String, TypeName>, ctx: &ContextProfile) -> Result<Expression, ScenarioError> {
    let resolve = |name: &str, is_context: bool| {
        if is_context {
            ctx.get(name).map(|a| a.value.type_name())
        } else {
            types.get(name).cloned()
        }
    };
    Expression::parse(text, &resolve).map_err(|e| schema(node, e.to_string()))
}

fn argument(node: Node, types: &BTreeMap<String, TypeName>, ctx: &ContextProfile) -> Result<Argument, ScenarioError> {
    let expr = match (node.attribute("name"), node.attribute("expr")) {
        (Some(name), None) => {
            let ty = TypeName::new(req(node, "type")?);
            if flag(node, "context")? {
                Expression::var(Variable::context(name, ty))
            } else {
                Expression::var(Variable::regular(name, ty))
            }
        }
        (None, Some(text)) => expression(node, text, types, ctx)?,
        _ => return Err(schema(node, "an argument has exactly one of `name` or `expr`")),
    };
    Ok(Argument {
        expr,
        concept: node.attribute("concept").map(str::to_owned),
    })
}

fn label(node: Node, types: &BTreeMap<String, TypeName>, ctx: &ContextProfile) -> Result<Label, ScenarioError> {
    only(node, &["arg"])?;
    let id = req(node, "id")?;
    let guard = match node.attribute("guard") {
        Some(g) => expression(node, g, types, ctx)?,
        None => Expression::truth(),
    };
    let action = match req(node, "kind")? {
        "tau" => {
            if node.attribute("op").is_some() || elements(node).next().is_some() {
                return Err(schema(node, "an internal label has no operation or arguments"));
            }
            LabelAction::Tau
        }
        "event" => LabelAction::Event {
            operation: req(node, "op")?.to_owned(),
            direction: match req(node, "dir")? {
                "emit" => Direction::Emission,
                "receive" => Direction::Reception,
                d => return Err(schema(node, format!("dir must be emit or receive, got `{d}`"))),
            },
            payload: elements(node).map(|a| argument(a, types, ctx)).collect::<Result<_, _>>()?,
        },
        k => return Err(schema(node, format!("kind must be event or tau, got `{k}`"))),
    };
    Ok(Label {
        id: id.into(),
        guard,
        action,
    })
}

/// Reads a `<protocol>` element. Structural validation is left to the caller.
pub(crate) fn parse_protocol(node: Node) -> Result<Protocol, ScenarioError> {
    only(node, &["context", "signature", "states", "initial", "alphabet", "transitions"])?;
    let id = req(node, "id")?;
    let ctx = context(child(node, "context"))?;
    let types = variable_types(node, &ctx)?;
    let states_node = req_child(node, "states")?;
    only(states_node, &["state"])?;
    let mut states = BTreeSet::new();
    let mut finals = BTreeSet::new();
    for s in elements(states_node) {
        let sid = req(s, "id")?;
        if !states.insert(sid.into()) {
            return Err(schema(s, format!("duplicate state `{sid}`")));
        }
        if flag(s, "final")? {
            finals.insert(sid.into());
        }
    }
    let initial = req(req_child(node, "initial")?, "ref")?.into();
    let alphabet = match child(node, "alphabet") {
        Some(a) => {
            only(a, &["label"])?;
            elements(a).map(|l| label(l, &types, &ctx)).collect::<Result<Vec<_>, _>>()?
        }
        None => Vec::new(),
    };
    let transitions = match child(node, "transitions") {
        Some(t) => {
            only(t, &["transition"])?;
            elements(t)
                .map(|t| Ok(Transition::new(req(t, "from")?, req(t, "label")?, req(t, "to")?)))
                .collect::<Result<Vec<_>, ScenarioError>>()?
        }
        None => Vec::new(),
    };
    let signature = match child(node, "signature") {
        Some(s) => {
            only(s, &["provided", "required"])?;
            Signature {
                provided: operations(child(s, "provided"))?,
                required: operations(child(s, "required"))?,
            }
        }
        None => Signature::infer(&alphabet),
    };
    Ok(Protocol {
        id: id.into(),
        alphabet,
        states,
        initial,
        finals,
        transitions,
        context: ctx,
        signature,
    })
}

fn write_ops(w: &mut Writer, tag: &str, ops: &[OperationProfile]) {
    if ops.is_empty() {
        return;
    }
    w.open(tag, &[]);
    for op in ops {
        if op.inputs.is_empty() && op.outputs.is_empty() && op.return_type.is_none() {
            w.empty("operation", &[("name", &op.name)]);
            continue;
        }
        w.open("operation", &[("name", &op.name)]);
        for p in &op.inputs {
            w.empty("input", &[("name", &p.name), ("type", p.ty.as_str())]);
        }
        for p in &op.outputs {
            w.empty("output", &[("name", &p.name), ("type", p.ty.as_str())]);
        }
        if let Some(t) = &op.return_type {
            w.empty("return", &[("type", t.as_str())]);
        }
        w.close("operation");
    }
    w.close(tag);
}

pub(crate) fn write_protocol(w: &mut Writer, p: &Protocol, extra: &[(&str, &str)]) {
    let mut attrs = vec![("id", p.id.as_str())];
    attrs.extend_from_slice(extra);
    w.open("protocol", &attrs);
    if !p.context.attributes.is_empty() {
        w.open("context", &[]);
        for a in &p.context.attributes {
            let ty = a.value.type_name();
            let value = a.value.to_text();
            w.empty(
                "contextAttr",
                &[
                    ("name", &a.name),
                    ("type", ty.as_str()),
                    ("value", &value),
                    (
                        "kind",
                        match a.kind {
                            AttributeKind::Static => "static",
                            AttributeKind::Dynamic => "dynamic",
                        },
                    ),
                    (
                        "visibility",
                        match a.visibility {
                            Visibility::Public => "public",
                            Visibility::Private => "private",
                        },
                    ),
                ],
            );
        }
        w.close("context");
    }
    if !p.signature.provided.is_empty() || !p.signature.required.is_empty() {
        w.open("signature", &[]);
        write_ops(w, "provided", &p.signature.provided);
        write_ops(w, "required", &p.signature.required);
        w.close("signature");
    }
    w.open("states", &[]);
    for s in &p.states {
        if p.finals.contains(s) {
            w.empty("state", &[("id", s.as_str()), ("final", "true")]);
        } else {
            w.empty("state", &[("id", s.as_str())]);
        }
    }
    w.close("states");
    w.empty("initial", &[("ref", p.initial.as_str())]);
    w.open("alphabet", &[]);
    for l in &p.alphabet {
        let guard = l.guard.to_string();
        let mut attrs = vec![("id", l.id.as_str())];
        match &l.action {
            LabelAction::Tau => attrs.push(("kind", "tau")),
            LabelAction::Event {
                operation, direction, ..
            } => {
                attrs.push(("kind", "event"));
                attrs.push(("op", operation));
                attrs.push((
                    "dir",
                    match direction {
                        Direction::Emission => "emit",
                        Direction::Reception => "receive",
                    },
                ));
            }
        }
        if !l.guard.is_true_literal() {
            attrs.push(("guard", &guard));
        }
        let payload = l.payload();
        if payload.is_empty() {
            w.empty("label", &attrs);
            continue;
        }
        w.open("label", &attrs);
        for a in payload {
            let text;
            let mut attrs: Vec<(&str, &str)> = Vec::new();
            match a.expr.as_var() {
                Some(v) => {
                    attrs.push(("name", &v.name));
                    attrs.push(("type", v.ty.as_str()));
                    if v.is_context {
                        attrs.push(("context", "true"));
                    }
                }
                None => {
                    text = a.expr.to_string();
                    attrs.push(("expr", &text));
                }
            }
            if let Some(c) = &a.concept {
                attrs.push(("concept", c));
            }
            w.empty("arg", &attrs);
        }
        w.close("label");
    }
    w.close("alphabet");
    w.open("transitions", &[]);
    for t in &p.transitions {
        w.empty(
            "transition",
            &[("from", t.source.as_str()), ("to", t.target.as_str()), ("label", t.label.as_str())],
        );
    }
    w.close("transitions");
    w.close("protocol");
}
