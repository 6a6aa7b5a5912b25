use std::fmt;

use serde::{Deserialize, Serialize};

use super::TypeName;

/// Run-time values: integers, booleans, strings and opaque named constants
/// of a user type (locations, privileges, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind", content = "value")]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
    Named { ty: TypeName, name: String },
}

impl Value {
    pub fn type_name(&self) -> TypeName {
        match self {
            Value::Int(_) => TypeName::new("int"),
            Value::Bool(_) => TypeName::new("bool"),
            Value::Str(_) => TypeName::new("string"),
            Value::Named { ty, .. } => ty.clone(),
        }
    }

    /// Reads a value written as attribute text for the given type.
    pub fn parse_typed(ty: &TypeName, text: &str) -> Result<Value, String> {
        match ty.as_str() {
            "int" => text
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| format!("`{text}` is not an int")),
            "bool" => match text.trim() {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => Err(format!("`{text}` is not a bool")),
            },
            "string" => Ok(Value::Str(text.to_owned())),
            _ => Ok(Value::Named {
                ty: ty.clone(),
                name: text.to_owned(),
            }),
        }
    }

    /// Inverse of [`Value::parse_typed`].
    pub fn to_text(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => s.clone(),
            Value::Named { name, .. } => name.clone(),
        }
    }
}

/// Literal syntax, shared with the expression parser.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write_quoted(f, s),
            Value::Named { ty, name } => {
                write!(f, "{ty}#")?;
                write_quoted(f, name)
            }
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("'")?;
    for c in s.chars() {
        match c {
            '\'' => f.write_str("\\'")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("'")
}
