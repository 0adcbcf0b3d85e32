//! Schema-checked CSV emission with fixed-significance number formatting.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Significant digits for every decimal value in the output tables.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Float,
    UInt,
    Int,
    Str,
    Bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub kind: ColumnKind,
}

impl Column {
    pub const fn float(name: &'static str) -> Self {
        Column {
            name,
            kind: ColumnKind::Float,
        }
    }
    pub const fn uint(name: &'static str) -> Self {
        Column {
            name,
            kind: ColumnKind::UInt,
        }
    }
    pub const fn int(name: &'static str) -> Self {
        Column {
            name,
            kind: ColumnKind::Int,
        }
    }
    pub const fn str(name: &'static str) -> Self {
        Column {
            name,
            kind: ColumnKind::Str,
        }
    }
    pub const fn bool(name: &'static str) -> Self {
        Column {
            name,
            kind: ColumnKind::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    UInt(u64),
    Int(i64),
    Str(String),
    Bool(bool),
}

impl Value {
    fn matches(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Value::Float(_), ColumnKind::Float)
                | (Value::UInt(_), ColumnKind::UInt)
                | (Value::Int(_), ColumnKind::Int)
                | (Value::Str(_), ColumnKind::Str)
                | (Value::Bool(_), ColumnKind::Bool)
        )
    }

    fn render(&self) -> String {
        match self {
            Value::Float(x) => format_significant(*x, SIGNIFICANT_DIGITS),
            Value::UInt(n) => n.to_string(),
            Value::Int(n) => n.to_string(),
            Value::Str(s) => escape_field(s),
            Value::Bool(b) => b.to_string(),
        }
    }
}

/// RFC-4180-style quoting: only when the field contains a comma, quote, or
/// newline.
fn escape_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Render `x` with the given number of significant digits in positional
/// notation, falling back to scientific notation when the magnitude makes
/// positional formatting unreasonable.
pub fn format_significant(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - exponent;
    if (0..=17).contains(&decimals) {
        format!("{:.*}", decimals as usize, x)
    } else {
        format!("{:.*e}", sig - 1, x)
    }
}

/// Write a header row plus data rows, newline-terminated. Rows are checked
/// against the schema; a mismatch names the offending column.
pub fn write_csv(path: &Path, columns: &[Column], rows: &[Vec<Value>]) -> Result<()> {
    let mut out = String::new();
    let header: Vec<&str> = columns.iter().map(|c| c.name).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != columns.len() {
            let name = columns
                .get(row.len().min(columns.len() - 1))
                .map(|c| c.name)
                .unwrap_or("<row length>");
            return Err(Error::Schema(name.to_string()));
        }
        let mut fields = Vec::with_capacity(row.len());
        for (value, column) in row.iter().zip(columns) {
            if !value.matches(column.kind) {
                return Err(Error::Schema(column.name.to_string()));
            }
            fields.push(value.render());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
