//! Canonical artifact formatting: sorted keys and floats rounded to 12
//! significant digits, so identical runs produce identical bytes.

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal text of `x` rounded to 12 significant digits.
pub fn format_float(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        r.to_string()
    }
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(f64::NAN));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and rounded floats, newline-terminated.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&canonicalize(v)).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn rounding() {
        assert_eq!(format_float(0.1 + 0.2), "0.3");
        assert_eq!(format_float(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(-1234567.891234567), "-1234567.89123");
    }

    #[test]
    fn sorted_keys_and_nan_as_null() {
        let mut m = HashMap::new();
        m.insert("zeta", vec![1.0 / 3.0]);
        m.insert("alpha", vec![f64::NAN]);
        let text = to_canonical_json(&m).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.contains("null") && text.contains("0.333333333333"));
    }
}
