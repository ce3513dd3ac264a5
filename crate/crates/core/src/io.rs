//! Small serialization helpers shared by the CSV, PGM and JSON writers.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// 12 significant digits in scientific notation.
pub fn fmt_sig12(value: f64) -> String {
    format!("{value:.11e}")
}

/// Render a two-column CSV with LF endings.
pub fn two_column_csv(header: (&str, &str), x: &[f64], y: &[f64]) -> String {
    let mut out = String::with_capacity(32 * x.len() + 16);
    let _ = writeln!(out, "{},{}", header.0, header.1);
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(out, "{},{}", fmt_sig12(*a), fmt_sig12(*b));
    }
    out
}

/// Parsed two-column numeric CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoColumn {
    pub header: (String, String),
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Parse a two-column numeric CSV with a header row. Errors carry the 1-based line number.
pub fn parse_two_column(text: &str) -> Result<TwoColumn> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 2 {
        return Err(Error::InvalidArgument(format!("line 1: expected 2 header columns, got {}", cols.len())));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::InvalidArgument(format!("line {}: expected 2 fields, got {}", i + 1, fields.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: not a finite number: {s:?}", i + 1)))
        };
        x.push(parse(fields[0])?);
        y.push(parse(fields[1])?);
    }
    Ok(TwoColumn { header: (cols[0].to_string(), cols[1].to_string()), x, y })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Serde adapter for times and lengths where infinity means "absent":
/// infinity is written as `null` and `null` reads back as infinity.
pub mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig12(502.654824574e-6), "5.02654824574e-4");
        assert_eq!(fmt_sig12(1.0), "1.00000000000e0");
    }

    #[test]
    fn parse_reports_line() {
        let err = parse_two_column("time_s,p0\n0,1\n1e-3,abc\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let ok = parse_two_column("x,p0\n0,1\n1,0.5\n").unwrap();
        assert_eq!(ok.x, vec![0.0, 1.0]);
        assert_eq!(ok.header.0, "x");
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
