//! Serialization helpers: JSON with fixed 17-significant-digit floats and
//! versioned CSV tables.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON where every float carries 17 significant digits and
/// non-finite values become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Numeric CSV table preceded by a `# evocert <kind> v<N>` comment line.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
    width: usize,
}

impl<W: Write> CsvOut<W> {
    pub fn new(mut w: W, kind: &str, header: &[String]) -> Result<Self, ReportError> {
        writeln!(w, "# evocert {kind} v{CSV_SCHEMA_VERSION}")?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(header)?;
        Ok(CsvOut {
            inner,
            width: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<(), ReportError> {
        debug_assert_eq!(values.len(), self.width);
        self.inner.write_record(values.iter().map(|v| fmt_f64(*v)))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), ReportError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes `(t, value)` pairs, e.g. a per-t integral curve.
pub fn write_curve<W: Write>(w: W, kind: &str, column: &str, t: &[f64], v: &[f64]) -> Result<(), ReportError> {
    let mut out = CsvOut::new(w, kind, &["t".to_string(), column.to_string()])?;
    for (a, b) in t.iter().zip(v) {
        out.row(&[*a, *b])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct S {
        a: f64,
        b: Vec<f64>,
        c: f64,
    }

    #[test]
    fn json_floats_have_seventeen_digits() {
        let s = to_json(&S {
            a: 0.1,
            b: vec![1.0, std::f64::consts::E],
            c: f64::NAN,
        })
        .unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("2.7182818284590451e0"), "{s}");
        assert!(s.contains("\"c\": null"), "{s}");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_has_version_comment() {
        let mut buf = Vec::new();
        write_curve(&mut buf, "curve", "value", &[0.0, 0.5], &[1.0, 2.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# evocert curve v1"));
        assert_eq!(lines.next(), Some("t,value"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,1.0000000000000000e0"));
    }
}
