use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Builtin, Expression, Value, Variable};

/// Variable bindings of one running protocol instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Environment {
    bindings: BTreeMap<String, Value>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.bindings.iter()
    }

    /// `E ⊘ <x, v>`: a copy of `self` where `name` is bound to `v`.
    pub fn overload(&self, name: &str, v: Value) -> Environment {
        let mut next = self.clone();
        next.bindings.insert(name.to_owned(), v);
        next
    }

    /// External change of a dynamic context attribute (GPS, clock, user).
    pub fn dynamic_update(&self, x: &Variable, v: Value) -> Result<Environment, EvalError> {
        if !x.is_context {
            return Err(EvalError::NotDynamic(x.name.clone()));
        }
        Ok(self.overload(&x.name, v))
    }
}

impl FromIterator<(String, Value)> for Environment {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Self {
            bindings: iter.into_iter().collect(),
        }
    }
}

pub fn overload(env: &Environment, x: &Variable, v: Value) -> Environment {
    env.overload(&x.name, v)
}

pub fn dynamic_update(env: &Environment, x: &Variable, v: Value) -> Result<Environment, EvalError> {
    env.dynamic_update(x, v)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unbound context variable `~{0}`")]
    UnboundContext(String),
    #[error("regular variable `{0}` left after evaluation")]
    ResidualRegular(String),
    #[error("only dynamic context variables may be externally updated (`{0}` is regular)")]
    NotDynamic(String),
    #[error("`{symbol}`: {detail}")]
    Type { symbol: String, detail: String },
    #[error("integer overflow in `{0}`")]
    Overflow(String),
    #[error("uninterpreted function `{0}` cannot be evaluated to a value")]
    Uninterpreted(String),
    #[error("guard `{0}` is not boolean")]
    NonBooleanGuard(String),
}

/// Evaluates regular variables. Context variables are left symbolic; built-in
/// applications are reduced once all their arguments are literals.
pub fn ev(env: &Environment, e: &Expression) -> Result<Expression, EvalError> {
    match e {
        Expression::Var(v) if v.is_context => Ok(e.clone()),
        Expression::Var(v) => env
            .get(&v.name)
            .cloned()
            .map(Expression::lit)
            .ok_or_else(|| EvalError::Unbound(v.name.clone())),
        Expression::Lit { .. } => Ok(e.clone()),
        Expression::App { symbol, args } => {
            let args = args.iter().map(|a| ev(env, a)).collect::<Result<Vec<_>, _>>()?;
            if let Some(b) = Builtin::lookup(symbol) {
                if let Some(values) = literal_args(&args) {
                    return apply_builtin(b, symbol, values).map(Expression::lit);
                }
            }
            Ok(Expression::App {
                symbol: symbol.clone(),
                args,
            })
        }
    }
}

/// Evaluates the context variables of an expression whose regular
/// variables have already been replaced by [`ev`].
pub fn ev_c(env: &Environment, e: &Expression) -> Result<Value, EvalError> {
    match e {
        Expression::Var(v) if v.is_context => env
            .get(&v.name)
            .cloned()
            .ok_or_else(|| EvalError::UnboundContext(v.name.clone())),
        Expression::Var(v) => Err(EvalError::ResidualRegular(v.name.clone())),
        Expression::Lit { value } => Ok(value.clone()),
        Expression::App { symbol, args } => {
            let b = Builtin::lookup(symbol).ok_or_else(|| EvalError::Uninterpreted(symbol.clone()))?;
            let values = args.iter().map(|a| ev_c(env, a)).collect::<Result<Vec<_>, _>>()?;
            apply_builtin(b, symbol, values.iter().collect())
        }
    }
}

/// Guard check `ev_c(ev(E, b)) = true`, both passes in the same environment.
pub fn guard_holds(env: &Environment, guard: &Expression) -> Result<bool, EvalError> {
    match ev_c(env, &ev(env, guard)?)? {
        Value::Bool(b) => Ok(b),
        _ => Err(EvalError::NonBooleanGuard(guard.to_string())),
    }
}

fn literal_args(args: &[Expression]) -> Option<Vec<&Value>> {
    args.iter()
        .map(|a| match a {
            Expression::Lit { value } => Some(value),
            _ => None,
        })
        .collect()
}

fn apply_builtin(b: Builtin, symbol: &str, args: Vec<&Value>) -> Result<Value, EvalError> {
    let type_err = |detail: &str| EvalError::Type {
        symbol: symbol.to_owned(),
        detail: detail.to_owned(),
    };
    let ints = || -> Result<Vec<i64>, EvalError> {
        args.iter()
            .map(|v| match v {
                Value::Int(i) => Ok(*i),
                _ => Err(type_err("expects int arguments")),
            })
            .collect()
    };
    let bools = || -> Result<Vec<bool>, EvalError> {
        args.iter()
            .map(|v| match v {
                Value::Bool(x) => Ok(*x),
                _ => Err(type_err("expects bool arguments")),
            })
            .collect()
    };
    let binary = |xs: &[i64]| -> Result<(i64, i64), EvalError> {
        match xs {
            [a, b] => Ok((*a, *b)),
            _ => Err(type_err("expects two arguments")),
        }
    };
    let overflow = || EvalError::Overflow(symbol.to_owned());
    Ok(match b {
        Builtin::Plus => {
            let (a, c) = binary(&ints()?)?;
            Value::Int(a.checked_add(c).ok_or_else(overflow)?)
        }
        Builtin::Minus => {
            let (a, c) = binary(&ints()?)?;
            Value::Int(a.checked_sub(c).ok_or_else(overflow)?)
        }
        Builtin::Times => {
            let (a, c) = binary(&ints()?)?;
            Value::Int(a.checked_mul(c).ok_or_else(overflow)?)
        }
        Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => {
            let (a, c) = binary(&ints()?)?;
            Value::Bool(match b {
                Builtin::Lt => a < c,
                Builtin::Le => a <= c,
                Builtin::Gt => a > c,
                _ => a >= c,
            })
        }
        Builtin::Eq | Builtin::Neq => match args.as_slice() {
            [x, y] => Value::Bool((x == y) == (b == Builtin::Eq)),
            _ => return Err(type_err("expects two arguments")),
        },
        Builtin::And => Value::Bool(bools()?.into_iter().all(|x| x)),
        Builtin::Or => Value::Bool(bools()?.into_iter().any(|x| x)),
        Builtin::Not => match bools()?.as_slice() {
            [x] => Value::Bool(!x),
            _ => return Err(type_err("expects one argument")),
        },
        Builtin::Concat => {
            let mut s = String::new();
            for v in &args {
                match v {
                    Value::Str(x) => s.push_str(x),
                    _ => return Err(type_err("expects string arguments")),
                }
            }
            Value::Str(s)
        }
        Builtin::If => match args.as_slice() {
            [Value::Bool(c), t, f] => {
                if *c {
                    (*t).clone()
                } else {
                    (*f).clone()
                }
            }
            _ => return Err(type_err("expects (bool, value, value)")),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Variable {
        Variable::regular("x", "int")
    }

    #[test]
    fn ev_looks_up_regular_and_keeps_context() {
        let env: Environment = [("dest".to_owned(), Value::Str("Malaga".into()))].into_iter().collect();
        let dest = Expression::var(Variable::regular("dest", "string"));
        assert_eq!(ev(&env, &dest).unwrap(), Expression::lit(Value::Str("Malaga".into())));
        let loc = Expression::var(Variable::context("loc", "location"));
        assert_eq!(ev(&env, &loc).unwrap(), loc);
        assert_eq!(
            ev(&env, &Expression::var(x())),
            Err(EvalError::Unbound("x".into()))
        );
    }

    #[test]
    fn ev_reduces_ground_builtins() {
        let env = Environment::new().overload("x", Value::Int(2));
        let e = Expression::app("plus", vec![Expression::var(x()), Expression::lit(Value::Int(3))]);
        assert_eq!(ev(&env, &e).unwrap(), Expression::lit(Value::Int(5)));
        // partially symbolic stays an application
        let priv_ = Expression::var(Variable::context("priv", "string"));
        let g = Expression::app("eq", vec![priv_.clone(), Expression::var(Variable::regular("x", "int"))]);
        assert_eq!(
            ev(&env, &g).unwrap(),
            Expression::app("eq", vec![priv_, Expression::lit(Value::Int(2))])
        );
    }

    #[test]
    fn ev_c_cases() {
        let loc = Value::Named {
            ty: "location".into(),
            name: "36.7,-4.4".into(),
        };
        let env = Environment::new().overload("loc", loc.clone());
        let loc_var = Expression::var(Variable::context("loc", "location"));
        assert_eq!(ev_c(&env, &loc_var).unwrap(), loc);
        assert_eq!(ev_c(&env, &Expression::lit(Value::Int(5))).unwrap(), Value::Int(5));
        let env = Environment::new().overload("priv", Value::Str("Guest".into()));
        let g = Expression::app(
            "eq",
            vec![
                Expression::var(Variable::context("priv", "string")),
                Expression::lit(Value::Str("Guest".into())),
            ],
        );
        assert_eq!(ev_c(&env, &g).unwrap(), Value::Bool(true));
        assert_eq!(
            ev_c(&env, &Expression::var(x())),
            Err(EvalError::ResidualRegular("x".into()))
        );
        assert_eq!(
            ev_c(&Environment::new(), &Expression::var(Variable::context("t", "int"))),
            Err(EvalError::UnboundContext("t".into()))
        );
    }

    #[test]
    fn overload_cases() {
        let e0 = Environment::new();
        let e1 = overload(&e0, &x(), Value::Int(1));
        assert!(e0.is_empty());
        assert_eq!(e1.get("x"), Some(&Value::Int(1)));
        let e2 = overload(&e1, &x(), Value::Int(2));
        assert_eq!(e2.get("x"), Some(&Value::Int(2)));
        assert_eq!(e1.get("x"), Some(&Value::Int(1)));
        let e3 = overload(&e1, &Variable::regular("y", "int"), Value::Int(3));
        assert_eq!(e3.len(), 2);
        assert_eq!(e3.get("x"), Some(&Value::Int(1)));
    }

    #[test]
    fn dynamic_update_only_for_context_variables() {
        let env = Environment::new().overload("dest", Value::Str("a".into()));
        assert_eq!(
            dynamic_update(&env, &Variable::regular("dest", "string"), Value::Str("b".into())),
            Err(EvalError::NotDynamic("dest".into()))
        );
        let priv_ = Variable::context("priv", "string");
        let guard = Expression::app(
            "eq",
            vec![Expression::var(priv_.clone()), Expression::lit(Value::Str("Subscriber".into()))],
        );
        let env = env.overload("priv", Value::Str("Guest".into()));
        assert!(!guard_holds(&env, &guard).unwrap());
        let env = dynamic_update(&env, &priv_, Value::Str("Subscriber".into())).unwrap();
        assert!(guard_holds(&env, &guard).unwrap());
    }

    #[test]
    fn builtin_errors() {
        let e = Expression::app(
            "times",
            vec![Expression::lit(Value::Int(i64::MAX)), Expression::lit(Value::Int(2))],
        );
        assert_eq!(ev(&Environment::new(), &e), Err(EvalError::Overflow("times".into())));
        let e = Expression::app("and", vec![Expression::lit(Value::Int(1))]);
        assert!(matches!(ev(&Environment::new(), &e), Err(EvalError::Type { .. })));
        let e = Expression::app("route", vec![Expression::lit(Value::Int(1))]);
        assert_eq!(ev(&Environment::new(), &e).unwrap(), e);
        assert_eq!(ev_c(&Environment::new(), &e), Err(EvalError::Uninterpreted("route".into())));
    }
}
