//! Deterministic JSON emission with fixed-precision floats.
//!
//! `serde_json` prints the shortest round-tripping representation of a float.
//! Model files instead pin every float to 17 significant digits so that the
//! byte layout does not depend on the formatter. Keys come out sorted because
//! `serde_json::Map` is a `BTreeMap` without the `preserve_order` feature.

use serde::Serialize;
use serde_json::Value;

/// Formats a finite float with 17 significant digits in scientific notation.
///
/// The output is a valid JSON number and parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    debug_assert!(v.is_finite());
    format!("{:.16e}", v)
}

/// Serializes `value` to compact JSON with every float printed by [`format_f64`].
pub fn to_string_fixed<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&value, &mut out);
    Ok(out)
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_f64(n.as_f64().unwrap_or(0.0)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(k, out);
                out.push(':');
                write_value(v, out);
            }
            out.push('}');
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    // serializing a &str cannot fail
    out.push_str(&serde_json::to_string(s).unwrap_or_default());
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floats_get_seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(format_f64(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn integers_and_keys() {
        let v = serde_json::json!({"b": 1, "a": [1.5, "x\"y"], "c": null});
        assert_eq!(
            to_string_fixed(&v).unwrap(),
            r#"{"a":[1.5000000000000000e0,"x\"y"],"b":1,"c":null}"#
        );
    }

    proptest! {
        #[test]
        fn fixed_floats_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = to_string_fixed(&vec![v]).unwrap();
            let back: Vec<f64> = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back[0].to_bits(), v.to_bits());
        }
    }
}
