//! Verification rows and their JSON/CSV serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One verification check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: String,
    /// Statement the row exercises, or `plumbing`.
    pub reference: String,
    pub measured: f64,
    pub bound: f64,
    /// Smallest constant making the envelope hold, where one is fitted.
    pub fitted: Option<f64>,
    /// `bound - measured` for upper bounds, `measured - bound` for lower bounds.
    pub margin: f64,
    pub pass: bool,
    /// Advisory rows are reported but never fail a run.
    pub advisory: bool,
    pub runtime_s: f64,
}

impl CheckRow {
    /// Row for `measured ≤ bound`.
    pub fn upper(id: &str, reference: &str, measured: f64, bound: f64) -> Self {
        CheckRow {
            id: id.into(),
            reference: reference.into(),
            measured,
            bound,
            fitted: None,
            margin: bound - measured,
            pass: measured.is_finite() && measured <= bound,
            advisory: false,
            runtime_s: 0.0,
        }
    }

    /// Row for `measured ≥ bound`.
    pub fn lower(id: &str, reference: &str, measured: f64, bound: f64) -> Self {
        CheckRow {
            id: id.into(),
            reference: reference.into(),
            measured,
            bound,
            fitted: None,
            margin: measured - bound,
            pass: measured.is_finite() && measured >= bound,
            advisory: false,
            runtime_s: 0.0,
        }
    }

    /// Row for a fitted envelope constant `fitted ≤ cap`.
    pub fn fitted(id: &str, reference: &str, measured: f64, fitted: f64, cap: f64) -> Self {
        CheckRow {
            id: id.into(),
            reference: reference.into(),
            measured,
            bound: cap,
            fitted: Some(fitted),
            margin: cap - fitted,
            pass: fitted.is_finite() && fitted <= cap,
            advisory: false,
            runtime_s: 0.0,
        }
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    pub fn with_runtime(mut self, seconds: f64) -> Self {
        self.runtime_s = seconds;
        self
    }
}

/// A list of rows plus the effective configuration that produced them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub header: serde_json::Value,
    pub rows: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn new(header: serde_json::Value) -> Self {
        VerificationReport {
            header,
            rows: Vec::new(),
        }
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = CheckRow>) {
        self.rows.extend(rows);
    }

    /// True when every non-advisory row passes.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass || r.advisory)
    }

    pub fn failing(&self) -> Vec<&CheckRow> {
        self.rows
            .iter()
            .filter(|r| !r.pass && !r.advisory)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

pub const CSV_HEADER: [&str; 9] = [
    "id",
    "reference",
    "measured",
    "bound",
    "fitted",
    "margin",
    "pass",
    "advisory",
    "runtime_s",
];

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn json_num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::Value::Number(serde_json::Number::from_f64(v).unwrap())
    } else {
        serde_json::Value::String(format!("{v}"))
    }
}

fn row_json(r: &CheckRow) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    m.insert("id".into(), r.id.clone().into());
    m.insert("reference".into(), r.reference.clone().into());
    m.insert("measured".into(), json_num(r.measured));
    m.insert("bound".into(), json_num(r.bound));
    m.insert(
        "fitted".into(),
        r.fitted.map(json_num).unwrap_or(serde_json::Value::Null),
    );
    m.insert("margin".into(), json_num(r.margin));
    m.insert("pass".into(), r.pass.into());
    m.insert("advisory".into(), r.advisory.into());
    m.insert("runtime_s".into(), json_num(r.runtime_s));
    serde_json::Value::Object(m)
}

fn parse_num(v: &serde_json::Value) -> Result<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| Error::Io("bad number".into())),
        serde_json::Value::String(s) => s
            .parse()
            .map_err(|_| Error::Io(format!("bad number `{s}`"))),
        _ => Err(Error::Io("expected number".into())),
    }
}

/// Renders a report in the requested format.
pub fn render(report: &VerificationReport, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut m = serde_json::Map::new();
            m.insert("header".into(), report.header.clone());
            m.insert("rows".into(), report.rows.iter().map(row_json).collect());
            serde_json::to_string_pretty(&serde_json::Value::Object(m))
                .map_err(|e| Error::Io(e.to_string()))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)
                .map_err(|e| Error::Io(e.to_string()))?;
            for r in &report.rows {
                w.write_record([
                    r.id.clone(),
                    r.reference.clone(),
                    fmt_f64(r.measured),
                    fmt_f64(r.bound),
                    r.fitted.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.margin),
                    r.pass.to_string(),
                    r.advisory.to_string(),
                    fmt_f64(r.runtime_s),
                ])
                .map_err(|e| Error::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

pub fn write_report(report: &VerificationReport, path: &Path, format: Format) -> Result<()> {
    let text = render(report, format)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Parses CSV produced by [`render`]; the header is not part of CSV output.
pub fn parse_csv(text: &str) -> Result<Vec<CheckRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let hdr = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    if hdr.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Io("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Io(format!("bad number `{}`", &rec[i])))
        };
        out.push(CheckRow {
            id: rec[0].to_string(),
            reference: rec[1].to_string(),
            measured: num(2)?,
            bound: num(3)?,
            fitted: if rec[4].is_empty() {
                None
            } else {
                Some(num(4)?)
            },
            margin: num(5)?,
            pass: rec[6] == *"true",
            advisory: rec[7] == *"true",
            runtime_s: num(8)?,
        });
    }
    Ok(out)
}

/// Parses JSON produced by [`render`].
pub fn parse_json(text: &str) -> Result<VerificationReport> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))?;
    let header = v.get("header").cloned().unwrap_or(serde_json::Value::Null);
    let rows = v
        .get("rows")
        .and_then(|r| r.as_array())
        .ok_or_else(|| Error::Io("missing rows".into()))?
        .iter()
        .map(|r| -> Result<CheckRow> {
            let s = |k: &str| {
                r.get(k)
                    .and_then(|x| x.as_str())
                    .unwrap_or_default()
                    .to_string()
            };
            let b = |k: &str| r.get(k).and_then(|x| x.as_bool()).unwrap_or(false);
            let n = |k: &str| parse_num(r.get(k).unwrap_or(&serde_json::Value::Null));
            Ok(CheckRow {
                id: s("id"),
                reference: s("reference"),
                measured: n("measured")?,
                bound: n("bound")?,
                fitted: match r.get("fitted") {
                    None | Some(serde_json::Value::Null) => None,
                    Some(x) => Some(parse_num(x)?),
                },
                margin: n("margin")?,
                pass: b("pass"),
                advisory: b("advisory"),
                runtime_s: n("runtime_s")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only_csv() {
        let text = render(&VerificationReport::default(), Format::Csv).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn one_row_round_trips_through_both_formats() {
        let mut rep = VerificationReport::new(serde_json::json!({"model": "minkowski"}));
        rep.rows.push(CheckRow::fitted(
            "q_AB",
            "q estimate",
            0.1 + 0.2,
            1.0 / 3.0,
            100.0,
        ));
        let csv_text = render(&rep, Format::Csv).unwrap();
        assert_eq!(csv_text.lines().count(), 2);
        assert_eq!(parse_csv(&csv_text).unwrap(), rep.rows);
        let json_text = render(&rep, Format::Json).unwrap();
        assert_eq!(parse_json(&json_text).unwrap(), rep);
    }

    #[test]
    fn non_finite_values_survive() {
        let mut rep = VerificationReport::default();
        rep.rows
            .push(CheckRow::upper("x", "plumbing", f64::INFINITY, 1.0));
        let back = parse_json(&render(&rep, Format::Json).unwrap()).unwrap();
        assert!(back.rows[0].measured.is_infinite());
        assert!(!back.rows[0].pass);
    }
}
