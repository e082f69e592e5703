//! Tabular output in the three supported encodings.
//!
//! Column order is part of the CLI contract and stays stable; numeric
//! formatting is fixed so identical inputs produce byte-identical files.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Tsv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "tsv" => Ok(OutputFormat::Tsv),
            other => Err(format!("unknown output format {other:?}")),
        }
    }
}

pub struct Table {
    pub headers: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Render as delimited text; JSON callers serialize typed rows instead.
    pub fn render_delimited(&self, format: OutputFormat) -> String {
        let sep = match format {
            OutputFormat::Csv => ",",
            OutputFormat::Tsv => "\t",
            OutputFormat::Json => unreachable!("JSON goes through serde"),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.headers.join(sep));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(sep));
        }
        out
    }
}

pub fn fmt_tops(ops_per_sec: f64) -> String {
    format!("{:.4}", ops_per_sec / 1e12)
}

pub fn fmt_rate(images_per_sec: f64) -> String {
    format!("{images_per_sec:.1}")
}

pub fn fmt_accuracy(top1: Option<f64>) -> String {
    match top1 {
        Some(v) => format!("{v:.4}"),
        None => "NR".to_string(),
    }
}
