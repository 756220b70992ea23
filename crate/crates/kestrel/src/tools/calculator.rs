//! Safe expression calculator: a hand-rolled tokenizer and recursive-descent
//! evaluator over a whitelisted operation set. No names outside the math
//! function set resolve, there is no attribute access, no assignment, and no
//! string values, so expressions cannot reach the file system or
//! environment.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use super::{ParamSpec, ParamType, Tool, ToolCategory, ToolMetadata, ToolResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("security error: {0}")]
    Security(String),
    #[error("math error: {0}")]
    Math(String),
    #[error("type error: {0}")]
    Type(String),
}

/// Calculator values: integers survive integer-only arithmetic, `/` always
/// produces a float, lists feed the statistical functions.
#[derive(Debug, Clone, PartialEq)]
pub enum CalcValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    List(Vec<CalcValue>),
}

impl CalcValue {
    pub fn as_f64(&self) -> Result<f64, CalcError> {
        match self {
            CalcValue::Int(i) => Ok(*i as f64),
            CalcValue::Float(f) => Ok(*f),
            other => Err(CalcError::Type(format!("expected a number, got {other:?}"))),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CalcValue::Int(i) => json!(i),
            CalcValue::Float(f) => json!(f),
            CalcValue::Bool(b) => json!(b),
            CalcValue::List(items) => Value::Array(items.iter().map(|v| v.to_json()).collect()),
        }
    }

    /// Display form used in tool results: integers plain, floats rounded to
    /// two decimals with trailing zeros trimmed.
    pub fn formatted(&self) -> String {
        match self {
            CalcValue::Int(i) => i.to_string(),
            CalcValue::Float(f) => {
                let s = format!("{f:.2}");
                let s = s.trim_end_matches('0').trim_end_matches('.');
                if s.is_empty() || s == "-" {
                    "0".to_string()
                } else {
                    s.to_string()
                }
            }
            CalcValue::Bool(b) => b.to_string(),
            CalcValue::List(items) => {
                format!("[{}]", items.iter().map(|v| v.formatted()).collect::<Vec<_>>().join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

fn tokenize(expr: &str) -> Result<Vec<Tok>, CalcError> {
    let chars: Vec<char> = expr.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).map(|n| n.is_ascii_digit()).unwrap_or(false))
        {
            let start = i;
            let mut saw_dot = false;
            let mut saw_exp = false;
            while i < chars.len() {
                let ch = chars[i];
                if ch.is_ascii_digit() {
                    i += 1;
                } else if ch == '.' && !saw_dot && !saw_exp {
                    saw_dot = true;
                    i += 1;
                } else if (ch == 'e' || ch == 'E')
                    && !saw_exp
                    && chars
                        .get(i + 1)
                        .map(|n| n.is_ascii_digit() || *n == '+' || *n == '-')
                        .unwrap_or(false)
                {
                    saw_exp = true;
                    i += 2;
                } else {
                    break;
                }
            }
            let lit: String = chars[start..i].iter().collect();
            if saw_dot || saw_exp {
                let f = lit.parse::<f64>().map_err(|_| CalcError::Parse(format!("bad number `{lit}`")))?;
                tokens.push(Tok::Float(f));
            } else {
                let n = lit.parse::<i64>().map_err(|_| CalcError::Parse(format!("bad integer `{lit}`")))?;
                tokens.push(Tok::Int(n));
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match two.as_str() {
            "**" => {
                tokens.push(Tok::Op("**"));
                i += 2;
                continue;
            }
            "//" => {
                tokens.push(Tok::Op("//"));
                i += 2;
                continue;
            }
            "==" | "!=" | "<=" | ">=" => {
                let op = match two.as_str() {
                    "==" => "==",
                    "!=" => "!=",
                    "<=" => "<=",
                    _ => ">=",
                };
                tokens.push(Tok::Op(op));
                i += 2;
                continue;
            }
            _ => {}
        }
        match c {
            '+' => tokens.push(Tok::Op("+")),
            '-' => tokens.push(Tok::Op("-")),
            '*' => tokens.push(Tok::Op("*")),
            '/' => tokens.push(Tok::Op("/")),
            '%' => tokens.push(Tok::Op("%")),
            '<' => tokens.push(Tok::Op("<")),
            '>' => tokens.push(Tok::Op(">")),
            '(' => tokens.push(Tok::LParen),
            ')' => tokens.push(Tok::RParen),
            '[' => tokens.push(Tok::LBracket),
            ']' => tokens.push(Tok::RBracket),
            ',' => tokens.push(Tok::Comma),
            '=' => return Err(CalcError::Security("assignment is not allowed".to_string())),
            '.' => return Err(CalcError::Security("attribute access is not allowed".to_string())),
            '\'' | '"' => return Err(CalcError::Security("string literals are not allowed".to_string())),
            other => return Err(CalcError::Security(format!("character `{other}` is not allowed"))),
        }
        i += 1;
    }
    Ok(tokens)
}

const FUNCTIONS: [&str; 25] = [
    "abs", "min", "max", "sum", "round", "floor", "ceil", "sin", "cos", "tan", "asin", "acos",
    "atan", "atan2", "exp", "log", "log10", "log2", "pow", "sqrt", "mean", "median", "variance",
    "stdev",
    // Everything else, including dunder names, is unresolvable.
    "len",
];

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<CalcValue, CalcError> {
        let mut left = self.parse_and()?;
        while matches!(self.peek(), Some(Tok::Ident(w)) if w == "or") {
            self.pos += 1;
            let right = self.parse_and()?;
            left = CalcValue::Bool(truthy(&left)? || truthy(&right)?);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<CalcValue, CalcError> {
        let mut left = self.parse_not()?;
        while matches!(self.peek(), Some(Tok::Ident(w)) if w == "and") {
            self.pos += 1;
            let right = self.parse_not()?;
            left = CalcValue::Bool(truthy(&left)? && truthy(&right)?);
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<CalcValue, CalcError> {
        if matches!(self.peek(), Some(Tok::Ident(w)) if w == "not") {
            self.pos += 1;
            let inner = self.parse_not()?;
            return Ok(CalcValue::Bool(!truthy(&inner)?));
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<CalcValue, CalcError> {
        let left = self.parse_additive()?;
        let op = match self.peek() {
            Some(Tok::Op(op)) if ["==", "!=", "<", "<=", ">", ">="].contains(op) => *op,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.parse_additive()?;
        if matches!(self.peek(), Some(Tok::Op(op)) if ["==", "!=", "<", "<=", ">", ">="].contains(op))
        {
            return Err(CalcError::Parse("comparison chains are not supported".to_string()));
        }
        let a = left.as_f64()?;
        let b = right.as_f64()?;
        Ok(CalcValue::Bool(match op {
            "==" => a == b,
            "!=" => a != b,
            "<" => a < b,
            "<=" => a <= b,
            ">" => a > b,
            ">=" => a >= b,
            _ => unreachable!(),
        }))
    }

    fn parse_additive(&mut self) -> Result<CalcValue, CalcError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            if self.eat_op("+") {
                left = arith(&left, &self.parse_multiplicative()?, "+")?;
            } else if self.eat_op("-") {
                left = arith(&left, &self.parse_multiplicative()?, "-")?;
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_multiplicative(&mut self) -> Result<CalcValue, CalcError> {
        let mut left = self.parse_unary()?;
        loop {
            if self.eat_op("*") {
                left = arith(&left, &self.parse_unary()?, "*")?;
            } else if self.eat_op("/") {
                left = arith(&left, &self.parse_unary()?, "/")?;
            } else if self.eat_op("//") {
                left = arith(&left, &self.parse_unary()?, "//")?;
            } else if self.eat_op("%") {
                left = arith(&left, &self.parse_unary()?, "%")?;
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<CalcValue, CalcError> {
        if self.eat_op("-") {
            let inner = self.parse_unary()?;
            return match inner {
                CalcValue::Int(i) => Ok(CalcValue::Int(-i)),
                CalcValue::Float(f) => Ok(CalcValue::Float(-f)),
                other => Err(CalcError::Type(format!("cannot negate {other:?}"))),
            };
        }
        if self.eat_op("+") {
            return self.parse_unary();
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<CalcValue, CalcError> {
        let base = self.parse_atom()?;
        if self.eat_op("**") {
            let exponent = self.parse_unary()?;
            return power(&base, &exponent);
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<CalcValue, CalcError> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(CalcValue::Int(n)),
            Some(Tok::Float(f)) => Ok(CalcValue::Float(f)),
            Some(Tok::LParen) => {
                let inner = self.parse_or()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(CalcError::Parse("expected `)`".to_string())),
                }
            }
            Some(Tok::LBracket) => {
                let mut items = Vec::new();
                if matches!(self.peek(), Some(Tok::RBracket)) {
                    self.pos += 1;
                    return Ok(CalcValue::List(items));
                }
                loop {
                    items.push(self.parse_or()?);
                    match self.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBracket) => break,
                        _ => return Err(CalcError::Parse("expected `,` or `]`".to_string())),
                    }
                }
                Ok(CalcValue::List(items))
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "pi" => Ok(CalcValue::Float(std::f64::consts::PI)),
                "e" => Ok(CalcValue::Float(std::f64::consts::E)),
                "tau" => Ok(CalcValue::Float(std::f64::consts::TAU)),
                "true" | "True" => Ok(CalcValue::Bool(true)),
                "false" | "False" => Ok(CalcValue::Bool(false)),
                _ if matches!(self.peek(), Some(Tok::LParen)) => {
                    if !FUNCTIONS.contains(&name.as_str()) {
                        return Err(CalcError::Security(format!("name `{name}` is not callable")));
                    }
                    self.pos += 1;
                    let mut args = Vec::new();
                    if matches!(self.peek(), Some(Tok::RParen)) {
                        self.pos += 1;
                    } else {
                        loop {
                            args.push(self.parse_or()?);
                            match self.next() {
                                Some(Tok::Comma) => continue,
                                Some(Tok::RParen) => break,
                                _ => return Err(CalcError::Parse("expected `,` or `)`".to_string())),
                            }
                        }
                    }
                    call(&name, args)
                }
                _ => Err(CalcError::Security(format!("name `{name}` is not defined"))),
            },
            Some(other) => Err(CalcError::Parse(format!("unexpected token {other:?}"))),
            None => Err(CalcError::Parse("unexpected end of expression".to_string())),
        }
    }
}

fn truthy(v: &CalcValue) -> Result<bool, CalcError> {
    match v {
        CalcValue::Bool(b) => Ok(*b),
        CalcValue::Int(i) => Ok(*i != 0),
        CalcValue::Float(f) => Ok(*f != 0.0),
        CalcValue::List(items) => Ok(!items.is_empty()),
    }
}

fn arith(left: &CalcValue, right: &CalcValue, op: &str) -> Result<CalcValue, CalcError> {
    use CalcValue::*;
    if let (Int(a), Int(b)) = (left, right) {
        let (a, b) = (*a, *b);
        return match op {
            "+" => a.checked_add(b).map(Int).ok_or_else(overflow),
            "-" => a.checked_sub(b).map(Int).ok_or_else(overflow),
            "*" => a.checked_mul(b).map(Int).ok_or_else(overflow),
            "/" => {
                if b == 0 {
                    Err(CalcError::Math("division by zero".to_string()))
                } else {
                    Ok(Float(a as f64 / b as f64))
                }
            }
            "//" => {
                if b == 0 {
                    Err(CalcError::Math("division by zero".to_string()))
                } else {
                    Ok(Int(a.div_euclid(b)))
                }
            }
            "%" => {
                if b == 0 {
                    Err(CalcError::Math("modulo by zero".to_string()))
                } else {
                    Ok(Int(a.rem_euclid(b)))
                }
            }
            _ => unreachable!(),
        };
    }
    let a = left.as_f64()?;
    let b = right.as_f64()?;
    let out = match op {
        "+" => a + b,
        "-" => a - b,
        "*" => a * b,
        "/" | "//" | "%" if b == 0.0 => {
            return Err(CalcError::Math("division by zero".to_string()))
        }
        "/" => a / b,
        "//" => (a / b).floor(),
        "%" => a - b * (a / b).floor(),
        _ => unreachable!(),
    };
    Ok(CalcValue::Float(out))
}

fn overflow() -> CalcError {
    CalcError::Math("integer overflow".to_string())
}

fn power(base: &CalcValue, exponent: &CalcValue) -> Result<CalcValue, CalcError> {
    use CalcValue::*;
    if let (Int(b), Int(e)) = (base, exponent) {
        if *e >= 0 {
            if let Ok(exp) = u32::try_from(*e) {
                if let Some(v) = b.checked_pow(exp) {
                    return Ok(Int(v));
                }
            }
            return Err(overflow());
        }
    }
    let b = base.as_f64()?;
    let e = exponent.as_f64()?;
    let out = b.powf(e);
    if out.is_nan() {
        return Err(CalcError::Math(format!("{b} ** {e} is undefined")));
    }
    Ok(Float(out))
}

fn numeric_list(args: &[CalcValue]) -> Result<Vec<f64>, CalcError> {
    let items: &[CalcValue] = match args {
        [CalcValue::List(items)] => items,
        _ => args,
    };
    if items.is_empty() {
        return Err(CalcError::Math("empty sequence".to_string()));
    }
    items.iter().map(|v| v.as_f64()).collect()
}

fn unary_math(name: &str, args: &[CalcValue], f: impl Fn(f64) -> f64) -> Result<CalcValue, CalcError> {
    if args.len() != 1 {
        return Err(CalcError::Parse(format!("{name}() takes one argument")));
    }
    let x = args[0].as_f64()?;
    let out = f(x);
    if out.is_nan() || out.is_infinite() {
        return Err(CalcError::Math(format!("{name}({x}) is undefined")));
    }
    Ok(CalcValue::Float(out))
}

fn call(name: &str, args: Vec<CalcValue>) -> Result<CalcValue, CalcError> {
    match name {
        "abs" => match args.as_slice() {
            [CalcValue::Int(i)] => Ok(CalcValue::Int(i.abs())),
            [v] => Ok(CalcValue::Float(v.as_f64()?.abs())),
            _ => Err(CalcError::Parse("abs() takes one argument".to_string())),
        },
        "round" => match args.as_slice() {
            [v] => Ok(CalcValue::Int(v.as_f64()?.round_ties_even() as i64)),
            _ => Err(CalcError::Parse("round() takes one argument".to_string())),
        },
        "floor" => match args.as_slice() {
            [v] => Ok(CalcValue::Int(v.as_f64()?.floor() as i64)),
            _ => Err(CalcError::Parse("floor() takes one argument".to_string())),
        },
        "ceil" => match args.as_slice() {
            [v] => Ok(CalcValue::Int(v.as_f64()?.ceil() as i64)),
            _ => Err(CalcError::Parse("ceil() takes one argument".to_string())),
        },
        "min" | "max" => {
            let values = numeric_list(&args)?;
            let picked = values
                .iter()
                .copied()
                .reduce(|a, b| if (name == "min") == (a < b) { a } else { b })
                .unwrap();
            Ok(CalcValue::Float(picked))
        }
        "sum" => Ok(CalcValue::Float(numeric_list(&args)?.iter().sum())),
        "sin" => unary_math(name, &args, f64::sin),
        "cos" => unary_math(name, &args, f64::cos),
        "tan" => unary_math(name, &args, f64::tan),
        "asin" => unary_math(name, &args, f64::asin),
        "acos" => unary_math(name, &args, f64::acos),
        "atan" => unary_math(name, &args, f64::atan),
        "atan2" => match args.as_slice() {
            [y, x] => Ok(CalcValue::Float(y.as_f64()?.atan2(x.as_f64()?))),
            _ => Err(CalcError::Parse("atan2() takes two arguments".to_string())),
        },
        "exp" => unary_math(name, &args, f64::exp),
        "log" => unary_math(name, &args, f64::ln),
        "log10" => unary_math(name, &args, f64::log10),
        "log2" => unary_math(name, &args, f64::log2),
        "sqrt" => unary_math(name, &args, f64::sqrt),
        "pow" => match args.as_slice() {
            [b, e] => power(b, e),
            _ => Err(CalcError::Parse("pow() takes two arguments".to_string())),
        },
        "mean" => {
            let values = numeric_list(&args)?;
            Ok(CalcValue::Float(values.iter().sum::<f64>() / values.len() as f64))
        }
        "median" => {
            let mut values = numeric_list(&args)?;
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let m = if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            };
            Ok(CalcValue::Float(m))
        }
        "variance" | "stdev" => {
            let values = numeric_list(&args)?;
            if values.len() < 2 {
                return Err(CalcError::Math(format!("{name}() needs at least two values")));
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (values.len() - 1) as f64;
            Ok(CalcValue::Float(if name == "variance" { var } else { var.sqrt() }))
        }
        "len" => match args.as_slice() {
            [CalcValue::List(items)] => Ok(CalcValue::Int(items.len() as i64)),
            _ => Err(CalcError::Type("len() takes one list".to_string())),
        },
        _ => Err(CalcError::Security(format!("name `{name}` is not callable"))),
    }
}

/// Evaluate an expression in the calculator grammar.
pub fn calc_eval(expression: &str) -> Result<CalcValue, CalcError> {
    let tokens = tokenize(expression)?;
    if tokens.is_empty() {
        return Err(CalcError::Parse("empty expression".to_string()));
    }
    let mut parser = Parser { tokens, pos: 0 };
    let value = parser.parse_or()?;
    if parser.pos != parser.tokens.len() {
        return Err(CalcError::Parse("trailing tokens".to_string()));
    }
    Ok(value)
}

/// The calculator as a registrable tool. Results carry both the raw value
/// and a two-decimal formatted string.
pub struct CalculatorTool {
    metadata: ToolMetadata,
}

impl Default for CalculatorTool {
    fn default() -> Self {
        Self {
            metadata: ToolMetadata {
                name: "calculator".to_string(),
                description: "Evaluate mathematical expressions with arithmetic, comparison, and statistical functions".to_string(),
                category: ToolCategory::Computation,
                params: vec![ParamSpec::required("expression", ParamType::String)],
                version: "1.0.0".to_string(),
                cost_estimate: 0.0,
                default_timeout: 5.0,
                extra: BTreeMap::new(),
            },
        }
    }
}

impl Tool for CalculatorTool {
    fn metadata(&self) -> &ToolMetadata {
        &self.metadata
    }

    fn execute(&self, args: &serde_json::Map<String, Value>) -> ToolResult {
        let expression = match args.get("expression").and_then(Value::as_str) {
            Some(e) => e,
            None => return ToolResult::failure("INVALID_INPUT", "missing expression", false),
        };
        match calc_eval(expression) {
            Ok(value) => ToolResult::success(json!({
                "result": value.to_json(),
                "formatted": value.formatted(),
            })),
            Err(e) => {
                let code = match e {
                    CalcError::Security(_) => "SECURITY",
                    CalcError::Math(_) => "MATH_ERROR",
                    _ => "PARSE_ERROR",
                };
                ToolResult::failure(code, e.to_string(), false)
            }
        }
    }
}
