//! Report rows in CSV or JSON lines. Field order and number formatting are
//! fixed; floating-point values carry 9 significant digits.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::config::Format;
use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 10] =
    ["preset", "rounds", "seed", "QZ", "phiZ", "RKR_bps", "SKR_bps", "lambdaEC", "key_bits", "config_hash"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub preset: String,
    pub rounds: u64,
    pub seed: u64,
    pub q_z: f64,
    pub phi_z: f64,
    pub rkr_bps: f64,
    pub skr_bps: f64,
    pub lambda_ec: f64,
    pub key_bits: u64,
    pub config_hash: String,
}

fn sig9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

impl ReportRow {
    pub fn fields(&self) -> [String; 10] {
        [
            self.preset.clone(),
            self.rounds.to_string(),
            self.seed.to_string(),
            sig9(self.q_z),
            sig9(self.phi_z),
            sig9(self.rkr_bps),
            sig9(self.skr_bps),
            sig9(self.lambda_ec),
            self.key_bits.to_string(),
            self.config_hash.clone(),
        ]
    }

    fn json(&self) -> String {
        let f = self.fields();
        let mut out = String::from("{");
        for (i, (k, v)) in COLUMNS.iter().zip(&f).enumerate() {
            if i > 0 {
                out.push(',');
            }
            let numeric = !matches!(i, 0 | 9) && v.parse::<f64>().is_ok_and(f64::is_finite);
            let value = if numeric { v.clone() } else { serde_json::Value::String(v.clone()).to_string() };
            out.push_str(&format!("{}:{value}", serde_json::Value::String(k.to_string())));
        }
        out.push('}');
        out
    }
}

/// Renders rows, with the CSV header when `header` is set.
pub fn render(rows: &[ReportRow], format: Format, header: bool) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            let err = |e: csv::Error| CliError::Report(e.to_string());
            if header {
                w.write_record(COLUMNS).map_err(err)?;
            }
            for r in rows {
                w.write_record(r.fields()).map_err(err)?;
            }
            w.into_inner().map_err(|e| CliError::Report(e.to_string()))
        }
        Format::Jsonl => Ok(rows.iter().flat_map(|r| format!("{}\n", r.json()).into_bytes()).collect()),
    }
}

/// Appends rows to `path`. A new or empty CSV file gets the header; an
/// existing CSV file must already carry the same header.
pub fn append_rows(path: &Path, rows: &[ReportRow], format: Format) -> Result<()> {
    let io = |e| CliError::Io { path: path.to_path_buf(), source: e };
    let mut header = true;
    if let Ok(f) = std::fs::File::open(path) {
        let mut first = String::new();
        BufReader::new(f).read_line(&mut first).map_err(io)?;
        if !first.is_empty() {
            header = false;
            if format == Format::Csv && first.trim_end() != COLUMNS.join(",") {
                return Err(CliError::Report(format!("{} has a different column layout", path.display())));
            }
        }
    }
    let bytes = render(rows, format, header)?;
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)
}
