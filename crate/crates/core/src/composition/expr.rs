use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dependency::LabelDependency;
use crate::model::ProtocolId;

/// `P ::= id | P . P | P + P | P ||_LD P`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "op")]
pub enum CompositionExpr {
    Leaf {
        protocol: ProtocolId,
    },
    Seq {
        left: Box<CompositionExpr>,
        right: Box<CompositionExpr>,
    },
    Choice {
        left: Box<CompositionExpr>,
        right: Box<CompositionExpr>,
    },
    ParDep {
        left: Box<CompositionExpr>,
        right: Box<CompositionExpr>,
        deps: BTreeSet<LabelDependency>,
        /// Dependency file named in the text form (`||[file]`).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("composition syntax error at offset {offset}: {message}")]
pub struct CompositionSyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Seq,
    Choice,
    Par,
}

impl CompositionExpr {
    pub fn leaf(p: impl Into<ProtocolId>) -> Self {
        CompositionExpr::Leaf { protocol: p.into() }
    }

    pub fn seq(l: CompositionExpr, r: CompositionExpr) -> Self {
        CompositionExpr::Seq {
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    pub fn choice(l: CompositionExpr, r: CompositionExpr) -> Self {
        CompositionExpr::Choice {
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    pub fn par(l: CompositionExpr, r: CompositionExpr, deps: BTreeSet<LabelDependency>) -> Self {
        CompositionExpr::ParDep {
            left: Box::new(l),
            right: Box::new(r),
            deps,
            source: None,
        }
    }

    /// Protocol ids of the leaves, left to right.
    pub fn leaves(&self) -> Vec<&ProtocolId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ProtocolId>) {
        match self {
            CompositionExpr::Leaf { protocol } => out.push(protocol),
            CompositionExpr::Seq { left, right }
            | CompositionExpr::Choice { left, right }
            | CompositionExpr::ParDep { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Every parallel node as (leaves below it, its dependency set).
    pub fn parallel_nodes(&self) -> Vec<(Vec<&ProtocolId>, &BTreeSet<LabelDependency>)> {
        let mut out = Vec::new();
        self.collect_par(&mut out);
        out
    }

    fn collect_par<'a>(&'a self, out: &mut Vec<(Vec<&'a ProtocolId>, &'a BTreeSet<LabelDependency>)>) {
        match self {
            CompositionExpr::Leaf { .. } => {}
            CompositionExpr::Seq { left, right } | CompositionExpr::Choice { left, right } => {
                left.collect_par(out);
                right.collect_par(out);
            }
            CompositionExpr::ParDep { left, right, deps, .. } => {
                out.push((self.leaves(), deps));
                left.collect_par(out);
                right.collect_par(out);
            }
        }
    }

    /// Hands `ld` to every parallel node without its own dependency file,
    /// keeping only dependencies between protocols of different operands.
    pub fn with_dependencies(&self, ld: &BTreeSet<LabelDependency>) -> CompositionExpr {
        self.map_par(&mut |left, right, deps, source| {
            if source.is_some() {
                return Ok::<_, std::convert::Infallible>(deps.clone());
            }
            Ok(filter_between(ld, left, right))
        })
        .unwrap_or_else(|e| match e {})
    }

    /// Loads `||[file]` sets through `load`, filtered like
    /// [`with_dependencies`](Self::with_dependencies).
    pub fn resolve_sources<E>(
        &self,
        load: &mut impl FnMut(&str) -> Result<BTreeSet<LabelDependency>, E>,
    ) -> Result<CompositionExpr, E> {
        self.map_par(&mut |left, right, deps, source| match source {
            Some(s) => Ok(filter_between(&load(s)?, left, right)),
            None => Ok(deps.clone()),
        })
    }

    fn map_par<E>(
        &self,
        f: &mut impl FnMut(
            &CompositionExpr,
            &CompositionExpr,
            &BTreeSet<LabelDependency>,
            Option<&str>,
        ) -> Result<BTreeSet<LabelDependency>, E>,
    ) -> Result<CompositionExpr, E> {
        Ok(match self {
            CompositionExpr::Leaf { .. } => self.clone(),
            CompositionExpr::Seq { left, right } => CompositionExpr::seq(left.map_par(f)?, right.map_par(f)?),
            CompositionExpr::Choice { left, right } => {
                CompositionExpr::choice(left.map_par(f)?, right.map_par(f)?)
            }
            CompositionExpr::ParDep {
                left,
                right,
                deps,
                source,
            } => CompositionExpr::ParDep {
                deps: f(left, right, deps, source.as_deref())?,
                left: Box::new(left.map_par(f)?),
                right: Box::new(right.map_par(f)?),
                source: source.clone(),
            },
        })
    }

    pub fn parse(text: &str) -> Result<CompositionExpr, CompositionSyntaxError> {
        let mut p = Parser { src: text, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

fn filter_between(
    ld: &BTreeSet<LabelDependency>,
    left: &CompositionExpr,
    right: &CompositionExpr,
) -> BTreeSet<LabelDependency> {
    let l: BTreeSet<&ProtocolId> = left.leaves().into_iter().collect();
    let r: BTreeSet<&ProtocolId> = right.leaves().into_iter().collect();
    let across = |a: &ProtocolId, b: &ProtocolId| (l.contains(a) && r.contains(b)) || (r.contains(a) && l.contains(b));
    ld.iter()
        .filter(|d| across(&d.dominant.protocol, &d.dominated.protocol))
        .cloned()
        .collect()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, m: impl Into<String>) -> CompositionSyntaxError {
        CompositionSyntaxError {
            offset: self.pos,
            message: m.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn op(&mut self) -> Result<Option<(Op, Option<String>)>, CompositionSyntaxError> {
        self.skip_ws();
        if self.rest().starts_with("||") {
            self.pos += 2;
            if self.rest().starts_with('[') {
                let end = self.rest().find(']').ok_or_else(|| self.error("unterminated `[`"))?;
                let file = self.rest()[1..end].trim().to_owned();
                if file.is_empty() {
                    return Err(self.error("empty dependency file name"));
                }
                self.pos += end + 1;
                return Ok(Some((Op::Par, Some(file))));
            }
            return Ok(Some((Op::Par, None)));
        }
        let op = match self.rest().chars().next() {
            Some('.') => Op::Seq,
            Some('+') => Op::Choice,
            _ => return Ok(None),
        };
        self.pos += 1;
        Ok(Some((op, None)))
    }

    fn expr(&mut self) -> Result<CompositionExpr, CompositionSyntaxError> {
        let mut acc = self.term()?;
        let mut first: Option<Op> = None;
        while let Some((op, source)) = self.op()? {
            if first.is_some_and(|f| f != op) {
                return Err(self.error("mixed operators need parentheses"));
            }
            first = Some(op);
            let rhs = self.term()?;
            acc = match op {
                Op::Seq => CompositionExpr::seq(acc, rhs),
                Op::Choice => CompositionExpr::choice(acc, rhs),
                Op::Par => CompositionExpr::ParDep {
                    left: Box::new(acc),
                    right: Box::new(rhs),
                    deps: BTreeSet::new(),
                    source,
                },
            };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<CompositionExpr, CompositionSyntaxError> {
        self.skip_ws();
        if self.rest().starts_with('(') {
            self.pos += 1;
            let e = self.expr()?;
            self.skip_ws();
            if !self.rest().starts_with(')') {
                return Err(self.error("expected `)`"));
            }
            self.pos += 1;
            return Ok(e);
        }
        let len = self
            .rest()
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.error("expected protocol id or `(`"));
        }
        let id = self.rest()[..len].to_owned();
        self.pos += len;
        Ok(CompositionExpr::leaf(id))
    }
}

impl fmt::Display for CompositionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(e: &CompositionExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                CompositionExpr::Leaf { protocol } => write!(f, "{protocol}"),
                _ => write!(f, "({e})"),
            }
        }
        let (left, right, op) = match self {
            CompositionExpr::Leaf { protocol } => return write!(f, "{protocol}"),
            CompositionExpr::Seq { left, right } => (left, right, ".".to_owned()),
            CompositionExpr::Choice { left, right } => (left, right, "+".to_owned()),
            CompositionExpr::ParDep {
                left, right, source, ..
            } => (
                left,
                right,
                match source {
                    Some(s) => format!("||[{s}]"),
                    None => "||".to_owned(),
                },
            ),
        };
        operand(left, f)?;
        write!(f, " {op} ")?;
        operand(right, f)
    }
}
