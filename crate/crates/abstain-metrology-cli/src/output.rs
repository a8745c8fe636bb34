//! Table assembly and deterministic CSV/JSON rendering.
//!
//! Every emitted file starts with a comment line carrying the tool version
//! and the full invocation, so identical flags reproduce byte-identical
//! output.

use anyhow::{Context, Result};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render_csv(&self, invocation: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {} — {}\n", banner(), invocation));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn render_json(&self, invocation: &str) -> String {
        let value = serde_json::json!({
            "tool": banner(),
            "invocation": invocation,
            "columns": self.columns,
            "rows": self.rows,
        });
        let mut text = serde_json::to_string_pretty(&value).expect("static schema");
        text.push('\n');
        text
    }

    pub fn write(&self, format: Format, invocation: &str, out: Option<&Path>) -> Result<()> {
        let text = match format {
            Format::Csv => self.render_csv(invocation),
            Format::Json => self.render_json(invocation),
        };
        match out {
            Some(path) => std::fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

pub fn banner() -> String {
    format!("abstain-metrology v{}", env!("CARGO_PKG_VERSION"))
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
