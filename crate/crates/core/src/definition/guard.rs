use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde_json::Value;
use thiserror::Error;

use super::PayloadPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Comparator {
    pub const ALL: [Comparator; 6] =
        [Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ne, Comparator::Ge, Comparator::Gt];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Comparator> {
        Self::ALL.into_iter().find(|c| c.symbol() == s)
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Gt => ord == Ordering::Greater,
        }
    }

    /// Equality-only comparators are the only ones allowed on strings.
    pub fn is_equality(self) -> bool {
        matches!(self, Comparator::Eq | Comparator::Ne)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(serde_json::Number),
    String(String),
}

impl Literal {
    pub fn to_json(&self) -> Value {
        match self {
            Literal::Number(n) => Value::Number(n.clone()),
            Literal::String(s) => Value::String(s.clone()),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::String(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("guard variable `{0}` is absent from the payload")]
    Unresolvable(String),
    #[error("guard variable `{variable}` holds {found}, which cannot be compared with {literal}")]
    TypeMismatch { variable: String, found: String, literal: String },
}

/// Single comparison `variable <op> literal` over a payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub variable: PayloadPath,
    pub comparator: Comparator,
    pub literal: Literal,
}

impl Guard {
    pub fn new(variable: &str, comparator: Comparator, literal: Literal) -> Guard {
        Guard { variable: PayloadPath::parse(variable).expect("guard variable path"), comparator, literal }
    }

    pub fn numeric(variable: &str, comparator: Comparator, value: i64) -> Guard {
        Guard::new(variable, comparator, Literal::Number(value.into()))
    }

    /// String literals only pair with `==` and `!=`.
    pub fn is_well_typed(&self) -> bool {
        match self.literal {
            Literal::String(_) => self.comparator.is_equality(),
            Literal::Number(_) => true,
        }
    }

    pub fn evaluate(&self, payload: &Value) -> Result<bool, GuardError> {
        let value =
            self.variable.resolve(payload).ok_or_else(|| GuardError::Unresolvable(self.variable.to_string()))?;
        let mismatch = |found: &Value| GuardError::TypeMismatch {
            variable: self.variable.to_string(),
            found: found.to_string(),
            literal: self.literal.to_string(),
        };
        let ord = match (&self.literal, &value) {
            (Literal::Number(lit), Value::Number(v)) => {
                let (a, b) = (exact_decimal(v), exact_decimal(lit));
                match (a, b) {
                    (Some(a), Some(b)) => a.cmp(&b),
                    _ => return Err(mismatch(&value)),
                }
            }
            (Literal::String(lit), Value::String(v)) if self.comparator.is_equality() => v.as_str().cmp(lit.as_str()),
            _ => return Err(mismatch(&value)),
        };
        Ok(self.comparator.holds(ord))
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.comparator.symbol(), self.literal)
    }
}

/// Decimal value of a JSON number as written, without binary rounding for
/// integers and short decimals.
fn exact_decimal(n: &serde_json::Number) -> Option<Decimal> {
    if let Some(i) = n.as_i64() {
        return Some(Decimal::from(i));
    }
    if let Some(u) = n.as_u64() {
        return Some(Decimal::from(u));
    }
    let text = n.to_string();
    Decimal::from_str(&text).or_else(|_| Decimal::from_scientific(&text)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn numeric_guard_on_length() {
        let g = Guard::numeric("data.length", Comparator::Lt, 10);
        assert_eq!(g.evaluate(&json!({"data": [1, 2, 3, 4, 5]})), Ok(true));
        assert_eq!(g.evaluate(&json!({"data": {"length": 10}})), Ok(false));
    }

    #[test]
    fn decimal_comparison_is_exact() {
        let g = Guard::new("x", Comparator::Eq, Literal::Number(serde_json::Number::from_f64(0.3).unwrap()));
        // 0.1 + 0.2 written out as a literal decimal is not 0.3
        assert_eq!(g.evaluate(&json!({"x": 0.30000000000000004})), Ok(false));
        assert_eq!(g.evaluate(&json!({"x": 0.3})), Ok(true));
        let g = Guard::numeric("x", Comparator::Ge, 2);
        assert_eq!(g.evaluate(&json!({"x": 2.0})), Ok(true));
    }

    #[test]
    fn string_guards() {
        let g = Guard::new("mode", Comparator::Ne, Literal::String("fast".into()));
        assert_eq!(g.evaluate(&json!({"mode": "slow"})), Ok(true));
        assert!(g.is_well_typed());
        let bad = Guard::new("mode", Comparator::Lt, Literal::String("fast".into()));
        assert!(!bad.is_well_typed());
        assert!(matches!(bad.evaluate(&json!({"mode": "a"})), Err(GuardError::TypeMismatch { .. })));
    }

    #[test]
    fn missing_variable() {
        let g = Guard::numeric("a.b", Comparator::Eq, 1);
        assert_eq!(g.evaluate(&json!({})), Err(GuardError::Unresolvable("a.b".into())));
    }
}
