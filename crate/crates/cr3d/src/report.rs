//! Deterministic JSON serialization for reports and certificates.
//!
//! Every report embeds the [`SCHEMA`] tag and is printed with
//! [`to_json_string`], which formats floating-point numbers with 17
//! significant digits (`{:.16e}`).  That many digits round-trip any `f64`
//! exactly, so identical inputs produce byte-identical report files
//! regardless of platform or shortest-representation quirks.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::{Error, Result};

/// Schema tag embedded in every report this crate emits.
pub const SCHEMA: &str = "cr3d-report/1";

/// Pretty-printing JSON formatter whose floats carry 17 significant digits.
///
/// Everything except `f64` handling is delegated to serde_json's
/// [`PrettyFormatter`] so that nesting and indentation stay standard.
struct ReportFormatter<'a>(PrettyFormatter<'a>);

impl ReportFormatter<'_> {
    fn new() -> Self {
        ReportFormatter(PrettyFormatter::new())
    }
}

impl Formatter for ReportFormatter<'_> {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("non-finite value {value} in report"),
            ));
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.0.end_object_value(writer)
    }
}

/// Serializes a report to its canonical JSON string.
///
/// Fails with [`Error::InvalidParameter`] if the value contains a NaN or
/// infinity; reports must never smuggle non-finite numbers past their own
/// pass/fail flags.  The check is structural: report types never emit JSON
/// `null` (absent optional fields are skipped), while serde_json renders
/// non-finite floats as `null`, so any `null` in the tree is a non-finite
/// value.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)
        .map_err(|e| Error::InvalidParameter(format!("report serialization failed: {e}")))?;
    if contains_null(&tree) {
        return Err(Error::InvalidParameter(
            "report contains a non-finite (or null) value".into(),
        ));
    }
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ReportFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameter(format!("report serialization failed: {e}")))?;
    out.push(b'\n');
    String::from_utf8(out)
        .map_err(|e| Error::InvalidParameter(format!("report is not valid UTF-8: {e}")))
}

fn contains_null(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Null => true,
        serde_json::Value::Array(items) => items.iter().any(contains_null),
        serde_json::Value::Object(map) => map.values().any(contains_null),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use serde::Serialize;

    use super::*;

    #[derive(Serialize)]
    struct Sample {
        schema: &'static str,
        count: usize,
        values: Vec<f64>,
    }

    #[test]
    fn floats_carry_seventeen_significant_digits() {
        let s = to_json_string(&vec![1.0 / 3.0]).unwrap();
        assert!(s.contains("3.3333333333333331e-1"), "{s}");
        let s = to_json_string(&vec![1.0]).unwrap();
        assert!(s.contains("1.0000000000000000e0"), "{s}");
    }

    #[test]
    fn formatted_floats_round_trip_exactly() {
        let mut samples = vec![
            0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -2.5e-308,
            f64::MIN_POSITIVE,
            f64::MAX,
        ];
        // deterministic pseudo-random mantissas across many magnitudes
        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        for e in -300..300 {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
            let mantissa = 1.0 + (state >> 11) as f64 / (1u64 << 53) as f64;
            samples.push(mantissa * 10f64.powi(e));
        }
        for v in samples {
            let formatted = format!("{v:.16e}");
            let back: f64 = formatted.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {formatted}");
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let sample = Sample {
            schema: SCHEMA,
            count: 3,
            values: vec![0.1, 0.2, 0.30000000000000004],
        };
        let a = to_json_string(&sample).unwrap();
        let b = to_json_string(&sample).unwrap();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        assert!(a.contains("\"schema\": \"cr3d-report/1\""), "{a}");
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(to_json_string(&vec![f64::NAN]).is_err());
        assert!(to_json_string(&vec![f64::INFINITY]).is_err());
    }
}
