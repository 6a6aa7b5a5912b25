use roxmltree::{Document, Node};

use super::ScenarioError;

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            _ => out.push(c),
        }
    }
    out
}

/// Indenting writer for the small documents we emit.
#[derive(Default)]
pub(crate) struct Writer {
    out: String,
    depth: usize,
}

impl Writer {
    pub fn new() -> Self {
        Writer {
            out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
        }
    }

    fn start(&mut self, tag: &str, attrs: &[(&str, &str)]) {
        self.out.push_str(&"  ".repeat(self.depth));
        self.out.push('<');
        self.out.push_str(tag);
        for (k, v) in attrs {
            self.out.push_str(&format!(" {k}=\"{}\"", escape(v)));
        }
    }

    pub fn open(&mut self, tag: &str, attrs: &[(&str, &str)]) {
        self.start(tag, attrs);
        self.out.push_str(">\n");
        self.depth += 1;
    }

    pub fn close(&mut self, tag: &str) {
        self.depth -= 1;
        self.out.push_str(&"  ".repeat(self.depth));
        self.out.push_str(&format!("</{tag}>\n"));
    }

    pub fn empty(&mut self, tag: &str, attrs: &[(&str, &str)]) {
        self.start(tag, attrs);
        self.out.push_str("/>\n");
    }

    pub fn text(&mut self, tag: &str, attrs: &[(&str, &str)], text: &str) {
        self.start(tag, attrs);
        self.out.push_str(&format!(">{}</{tag}>\n", escape(text)));
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub(crate) fn parse(text: &str) -> Result<Document<'_>, ScenarioError> {
    Document::parse(text).map_err(|e| ScenarioError::Xml(e.to_string()))
}

pub(crate) fn schema(node: Node, message: impl Into<String>) -> ScenarioError {
    let pos = node.document().text_pos_at(node.range().start);
    ScenarioError::Schema {
        line: pos.row,
        column: pos.col,
        element: node.tag_name().name().to_owned(),
        message: message.into(),
    }
}

pub(crate) fn req<'a>(node: Node<'a, '_>, attr: &str) -> Result<&'a str, ScenarioError> {
    node.attribute(attr)
        .ok_or_else(|| schema(node, format!("missing attribute `{attr}`")))
}

pub(crate) fn elements<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(Node::is_element)
}

pub(crate) fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    elements(node).find(|c| c.has_tag_name(tag))
}

pub(crate) fn req_child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Result<Node<'a, 'i>, ScenarioError> {
    child(node, tag).ok_or_else(|| schema(node, format!("missing element <{tag}>")))
}

/// Rejects children other than `allowed`.
pub(crate) fn only(node: Node, allowed: &[&str]) -> Result<(), ScenarioError> {
    for c in elements(node) {
        if !allowed.contains(&c.tag_name().name()) {
            return Err(schema(c, format!("unexpected element inside <{}>", node.tag_name().name())));
        }
    }
    Ok(())
}

pub(crate) fn flag(node: Node, attr: &str) -> Result<bool, ScenarioError> {
    match node.attribute(attr) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(v) => Err(schema(node, format!("`{attr}` must be true or false, got `{v}`"))),
    }
}

pub(crate) fn version(node: Node, expected: &str) -> Result<(), ScenarioError> {
    let v = req(node, "version")?;
    if v != expected {
        return Err(ScenarioError::Version {
            found: v.to_owned(),
            expected: expected.to_owned(),
        });
    }
    Ok(())
}

pub(crate) fn root<'a, 'i>(doc: &'a Document<'i>, tag: &str) -> Result<Node<'a, 'i>, ScenarioError> {
    let r = doc.root_element();
    if !r.has_tag_name(tag) {
        return Err(schema(r, format!("expected root element <{tag}>")));
    }
    Ok(r)
}
