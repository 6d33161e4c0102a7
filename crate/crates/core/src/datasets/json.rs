//! JSON output with every float written at 17 significant digits, which is
//! enough to recover the exact `f64`. Non-finite values become `null`.
//! Field layouts are described by `schemas/report.schema.json`.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use super::{DataError, SweepRecord};
use crate::vc::VcReport;

/// `printf("%.17g")`: fixed notation for decimal exponents in [-4, 17),
/// scientific otherwise, trailing zeros trimmed.
pub fn format_sig17(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_sig17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, DataError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Serialises `value` to `path` followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// The persisted fields of a [`VcReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcReportJson {
    pub vc: f64,
    pub log_vc: Option<f64>,
    pub included_count: usize,
    pub epsilon0: f64,
    pub normalization: String,
}

impl From<&VcReport> for VcReportJson {
    fn from(r: &VcReport) -> Self {
        Self {
            vc: r.vc,
            log_vc: r.log_vc,
            included_count: r.included_count,
            epsilon0: r.config.epsilon0(),
            normalization: r.config.normalization().as_str().to_string(),
        }
    }
}

pub fn write_report_json(report: &VcReport, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_json(&VcReportJson::from(report), path)
}

pub fn write_sweep_json(records: &[SweepRecord], path: impl AsRef<Path>) -> Result<(), DataError> {
    write_json(records, path)
}

pub fn read_sweep_json(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>, DataError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
