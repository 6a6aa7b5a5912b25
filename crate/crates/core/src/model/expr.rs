use std::fmt;

use serde::{Deserialize, Serialize};

use super::{TypeName, Value};

/// A variable occurrence. Context variables (written `~name`) refer to
/// dynamic context attributes and are evaluated late, at reception time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Variable {
    pub name: String,
    pub is_context: bool,
    pub ty: TypeName,
}

impl Variable {
    pub fn regular(name: impl Into<String>, ty: impl Into<TypeName>) -> Self {
        Self {
            name: name.into(),
            is_context: false,
            ty: ty.into(),
        }
    }

    pub fn context(name: impl Into<String>, ty: impl Into<TypeName>) -> Self {
        Self {
            name: name.into(),
            is_context: true,
            ty: ty.into(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_context {
            f.write_str("~")?;
        }
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "node")]
pub enum Expression {
    Var(Variable),
    Lit { value: Value },
    App { symbol: String, args: Vec<Expression> },
}

/// Function symbols the evaluator reduces once all their arguments are ground.
/// Any other symbol is uninterpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Plus,
    Minus,
    Times,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Concat,
    If,
}

impl Builtin {
    pub fn lookup(symbol: &str) -> Option<Builtin> {
        Some(match symbol {
            "plus" => Builtin::Plus,
            "minus" => Builtin::Minus,
            "times" => Builtin::Times,
            "eq" => Builtin::Eq,
            "neq" => Builtin::Neq,
            "lt" => Builtin::Lt,
            "le" => Builtin::Le,
            "gt" => Builtin::Gt,
            "ge" => Builtin::Ge,
            "and" => Builtin::And,
            "or" => Builtin::Or,
            "not" => Builtin::Not,
            "concat" => Builtin::Concat,
            "if" => Builtin::If,
            _ => return None,
        })
    }
}

impl Expression {
    pub fn var(v: Variable) -> Self {
        Expression::Var(v)
    }

    pub fn lit(value: Value) -> Self {
        Expression::Lit { value }
    }

    pub fn app(symbol: impl Into<String>, args: Vec<Expression>) -> Self {
        Expression::App {
            symbol: symbol.into(),
            args,
        }
    }

    pub fn truth() -> Self {
        Expression::lit(Value::Bool(true))
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Expression::Lit { value: Value::Bool(true) })
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            Expression::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Expression::Var(_) => false,
            Expression::Lit { .. } => true,
            Expression::App { args, .. } => args.iter().all(Expression::is_ground),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expression::App { args, .. } => 1 + args.iter().map(Expression::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    /// Calls `f` on every variable occurrence, left to right.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a Variable)) {
        match self {
            Expression::Var(v) => f(v),
            Expression::Lit { .. } => {}
            Expression::App { args, .. } => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    pub fn variables(&self) -> Vec<&Variable> {
        let mut out = Vec::new();
        self.visit_vars(&mut |v| out.push(v));
        out
    }

    /// The type an expression has before evaluation, when it can be told
    /// from its shape. Uninterpreted applications have no static type.
    pub fn static_type(&self) -> Option<TypeName> {
        match self {
            Expression::Var(v) => Some(v.ty.clone()),
            Expression::Lit { value } => Some(value.type_name()),
            Expression::App { symbol, args } => match Builtin::lookup(symbol)? {
                Builtin::Plus | Builtin::Minus | Builtin::Times => Some(TypeName::new("int")),
                Builtin::Eq
                | Builtin::Neq
                | Builtin::Lt
                | Builtin::Le
                | Builtin::Gt
                | Builtin::Ge
                | Builtin::And
                | Builtin::Or
                | Builtin::Not => Some(TypeName::new("bool")),
                Builtin::Concat => Some(TypeName::new("string")),
                Builtin::If => args.get(1).and_then(Expression::static_type),
            },
        }
    }

    /// Parses the textual expression syntax. `resolve` supplies the declared
    /// type of each variable name (the flag tells whether it was written `~x`).
    pub fn parse(
        text: &str,
        resolve: &dyn Fn(&str, bool) -> Option<TypeName>,
    ) -> Result<Expression, ExprSyntaxError> {
        let mut p = Parser {
            src: text,
            pos: 0,
            resolve,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Var(v) => write!(f, "{v}"),
            Expression::Lit { value } => write!(f, "{value}"),
            Expression::App { symbol, args } => {
                write!(f, "{symbol}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expression syntax error at offset {offset} in `{text}`: {message}")]
pub struct ExprSyntaxError {
    pub text: String,
    pub offset: usize,
    pub message: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    resolve: &'a dyn Fn(&str, bool) -> Option<TypeName>,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprSyntaxError {
        ExprSyntaxError {
            text: self.src.to_owned(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        for (i, c) in self.src[start..].char_indices() {
            let ok = if i == 0 {
                c.is_alphabetic() || c == '_'
            } else {
                c.is_alphanumeric() || c == '_' || c == '.'
            };
            if !ok {
                break;
            }
            self.pos = start + i + c.len_utf8();
        }
        (self.pos > start).then(|| self.src[start..self.pos].to_owned())
    }

    fn string(&mut self) -> Result<String, ExprSyntaxError> {
        let quote = self.peek().ok_or_else(|| self.error("expected string"))?;
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = self.peek().ok_or_else(|| self.error("unterminated string"))?;
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    let n = self.peek().ok_or_else(|| self.error("unterminated string"))?;
                    self.pos += n.len_utf8();
                    out.push(n);
                }
                c if c == quote => return Ok(out),
                c => out.push(c),
            }
        }
    }

    fn expr(&mut self) -> Result<Expression, ExprSyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('~') => {
                self.pos += 1;
                let Some(name) = self.ident() else {
                    return Err(self.error("expected context variable name"));
                };
                let ty = (self.resolve)(&name, true)
                    .ok_or_else(|| self.error(format!("unknown context variable `~{name}`")))?;
                Ok(Expression::Var(Variable::context(name, ty)))
            }
            Some('\'') | Some('"') => Ok(Expression::lit(Value::Str(self.string()?))),
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let start = self.pos;
                self.pos += 1;
                while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                    self.pos += 1;
                }
                self.src[start..self.pos]
                    .parse::<i64>()
                    .map(|i| Expression::lit(Value::Int(i)))
                    .map_err(|_| self.error("bad integer literal"))
            }
            Some(_) => {
                let Some(name) = self.ident() else {
                    return Err(self.error("expected expression"));
                };
                if self.eat('(') {
                    let mut args = Vec::new();
                    if !self.eat(')') {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(')') {
                                break;
                            }
                            if !self.eat(',') {
                                return Err(self.error("expected `,` or `)`"));
                            }
                        }
                    }
                    return Ok(Expression::app(name, args));
                }
                if self.eat('#') {
                    self.skip_ws();
                    let text = self.string()?;
                    return Ok(Expression::lit(Value::Named {
                        ty: TypeName::new(name),
                        name: text,
                    }));
                }
                match name.as_str() {
                    "true" => Ok(Expression::lit(Value::Bool(true))),
                    "false" => Ok(Expression::lit(Value::Bool(false))),
                    _ => {
                        let ty = (self.resolve)(&name, false)
                            .ok_or_else(|| self.error(format!("unknown variable `{name}`")))?;
                        Ok(Expression::Var(Variable::regular(name, ty)))
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(name: &str, _ctx: bool) -> Option<TypeName> {
        match name {
            "x" | "n" => Some("int".into()),
            "priv" | "dest" => Some("string".into()),
            _ => None,
        }
    }

    #[test]
    fn parse_and_print() {
        let src = "and(eq(~priv, 'Subscriber'), lt(plus(x, 3), -2), concat(dest, 'a\\'b'))";
        let e = Expression::parse(src, &resolver).unwrap();
        assert_eq!(e.to_string(), src);
        assert_eq!(e.static_type(), Some("bool".into()));
        assert_eq!(e.variables().len(), 3);
    }

    #[test]
    fn named_literal_round_trips() {
        let e = Expression::parse("location#'36.7,-4.4'", &resolver).unwrap();
        assert_eq!(
            e,
            Expression::lit(Value::Named {
                ty: "location".into(),
                name: "36.7,-4.4".into()
            })
        );
        assert_eq!(Expression::parse(&e.to_string(), &resolver).unwrap(), e);
    }

    #[test]
    fn unknown_variable_rejected() {
        let err = Expression::parse("eq(y, 1)", &resolver).unwrap_err();
        assert!(err.message.contains("unknown variable `y`"));
        assert!(Expression::parse("plus(x,", &resolver).is_err());
        assert!(Expression::parse("x y", &resolver).is_err());
    }
}
