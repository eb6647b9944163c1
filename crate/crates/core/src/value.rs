use serde::{Deserialize, Serialize};

/// Instruction handle; also a value (routines are first-class items).
pub type InstrId = u32;

/// The value carried by an evaluated item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Bytes(Vec<u8>),
    /// Homogeneous list, used for whole-array results and board states.
    List(Vec<Value>),
    /// A routine as data: aliasing `m is f` or passing a routine argument.
    Routine(InstrId),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Numeric view: ints widen to f64. Only for app-level numerics, never
    /// for memo keys or bit-exact comparisons.
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_routine(&self) -> Option<InstrId> {
        match self {
            Value::Routine(r) => Some(*r),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Bool(_) => "bool",
            Value::Bytes(_) => "bytes",
            Value::List(_) => "list",
            Value::Routine(_) => "routine",
        }
    }

    /// Bit-exact equality. Reals compare by bits (NaN == NaN), which is what
    /// write-once re-execution checks and memo keys need.
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
            }
            (Value::Routine(a), Value::Routine(b)) => a == b,
            _ => false,
        }
    }

    /// Tolerant equality for determinate-result comparisons: reals within
    /// `tol`, everything else exact.
    pub fn approx_eq(&self, other: &Value, tol: f64) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => {
                (a - b).abs() <= tol || (a.is_nan() && b.is_nan())
            }
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.approx_eq(y, tol))
            }
            _ => self.bit_eq(other),
        }
    }

    /// Stable key form for memo tables and journal argument summaries.
    pub fn key_string(&self) -> String {
        match self {
            Value::Int(i) => format!("i{i}"),
            Value::Real(r) => format!("r{:016x}", r.to_bits()),
            Value::Bool(b) => format!("b{b}"),
            Value::Bytes(b) => {
                let mut s = String::with_capacity(2 + b.len() * 2);
                s.push('x');
                for byte in b {
                    s.push_str(&format!("{byte:02x}"));
                }
                s
            }
            Value::List(l) => {
                let inner: Vec<String> = l.iter().map(|v| v.key_string()).collect();
                format!("[{}]", inner.join(","))
            }
            Value::Routine(r) => format!("fn{r}"),
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Bytes(b) => match std::str::from_utf8(b) {
                Ok(s) => write!(f, "{s:?}"),
                Err(_) => write!(f, "{}", self.key_string()),
            },
            Value::List(l) => {
                write!(f, "[")?;
                for (i, v) in l.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Routine(r) => write!(f, "routine#{r}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}
impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value::Bytes(v)
    }
}
